#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <parsa/perm_labels.hpp>
#include <parsa/simulate.hpp>

namespace {

parsa::LabelPermutationResult run_fig1_diagnostic(int n_perm, std::uint64_t seed) {
  const parsa::Fig1Design design;
  const parsa::EventTable events = parsa::make_fig1_events(design);
  const parsa::NoiseModel noise = parsa::ols_noise(design.n_scans);
  const std::vector<std::vector<int>> patterns{
      parsa::fig1_labels(parsa::LabelPatternKind::A, design),
      parsa::fig1_labels(parsa::LabelPatternKind::B, design)};
  return parsa::label_permutation_diagnostic(events, parsa::HrfParams{}, noise, patterns,
                                             n_perm, seed);
}

}  // namespace

TEST_CASE("patterns A and B sit outside the label permutation distribution") {
  const auto result = run_fig1_diagnostic(400, 5);
  REQUIRE(result.observed.size() == 2);
  REQUIRE(result.observed[0].has_value());
  REQUIRE(result.observed[1].has_value());
  const double a = *result.observed[0];
  const double b = *result.observed[1];
  CHECK(a > 0.0);
  CHECK(b < 0.0);
  double lo = 1.0, hi = -1.0;
  for (const auto& r : result.permuted) {
    REQUIRE(r.has_value());  // balanced labels cannot degenerate
    lo = std::min(lo, *r);
    hi = std::max(hi, *r);
  }
  CHECK(a > hi);
  CHECK(b < lo);
  CHECK(result.n_resampled == 0);
}

TEST_CASE("orthogonal designs carry no label association") {
  // far-separated identical events: the off-diagonal coefficient covariances
  // are equal by symmetry, so the confounder vector is constant and every
  // correlation is undefined
  parsa::EventTable events;
  events.n_scans = 200;
  events.tr = 2.0;
  for (int j = 0; j < 6; ++j) events.events.push_back({j * 50.0, 3.0, 0});
  const parsa::NoiseModel noise = parsa::ols_noise(events.n_scans);
  const std::vector<std::vector<int>> patterns{{1, 2, 1, 2, 1, 2}};
  const auto result = parsa::label_permutation_diagnostic(events, parsa::HrfParams{}, noise,
                                                          patterns, 50, 3);
  CHECK(result.n_defined() == 0);
  CHECK_FALSE(result.observed[0].has_value());
  for (const auto& r : result.permuted)
    if (r) CHECK(std::abs(*r) < 1e-10);
}

TEST_CASE("distribution mean is reproducible across seeds") {
  const auto r1 = run_fig1_diagnostic(500, 11);
  const auto r2 = run_fig1_diagnostic(500, 12);
  auto mean_sd = [](const parsa::LabelPermutationResult& r) {
    double sum = 0, sum2 = 0;
    int n = 0;
    for (const auto& v : r.permuted)
      if (v) {
        sum += *v;
        sum2 += *v * *v;
        ++n;
      }
    const double mean = sum / n;
    return std::pair{mean, std::sqrt((sum2 / n - mean * mean) / n)};
  };
  const auto [m1, se1] = mean_sd(r1);
  const auto [m2, se2] = mean_sd(r2);
  CHECK(std::abs(m1 - m2) <= 4.0 * std::sqrt(se1 * se1 + se2 * se2));
}

TEST_CASE("permutations are deterministic in the seed") {
  const auto r1 = run_fig1_diagnostic(100, 7);
  const auto r2 = run_fig1_diagnostic(100, 7);
  REQUIRE(r1.permuted.size() == r2.permuted.size());
  for (std::size_t i = 0; i < r1.permuted.size(); ++i)
    CHECK(r1.permuted[i] == r2.permuted[i]);
}
