#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "parsa/correlate.hpp"
#include "parsa/design.hpp"
#include "parsa/errors.hpp"
#include "parsa/glm.hpp"
#include "parsa/noise.hpp"
#include "parsa/rng.hpp"
#include "parsa/similarity.hpp"

namespace parsa {

// Permutation distribution of the accidental association between the
// stimulus model and the design: category labels are randomly reassigned
// (label multiset of the first supplied pattern), the stimulus similarity is
// rebuilt, and its off-diagonal terms are correlated with those of BCOV.
// Draws whose shuffled labels give a degenerate similarity are redrawn and
// counted. nullopt marks a correlation that is undefined because one side is
// constant (e.g. a diagonal BCOV).
struct LabelPermutationResult {
  std::vector<std::optional<double>> permuted;  // length n_perm
  std::vector<std::optional<double>> observed;  // one per supplied pattern
  std::int64_t n_resampled = 0;
  Eigen::VectorXd bcov_vec;  // vectorized confounder, for reporting

  int n_defined() const {
    int n = 0;
    for (const auto& r : permuted)
      if (r) ++n;
    return n;
  }
};

inline LabelPermutationResult label_permutation_diagnostic(
    const EventTable& events, const HrfParams& hrf, const NoiseModel& noise,
    const std::vector<std::vector<int>>& patterns, int n_perm, std::uint64_t seed) {
  if (patterns.empty()) throw ConfigError("perm-labels: need at least one label pattern");
  if (n_perm < 1) throw ConfigError("perm-labels: n_perm must be >= 1");

  const DesignMatrix design = build_design(events, hrf);
  const int q = design.n_stimulus;
  for (const auto& labels : patterns)
    if (static_cast<int>(labels.size()) != q)
      throw ConfigError("perm-labels: pattern has " + std::to_string(labels.size()) +
                        " labels, design has q = " + std::to_string(q));

  const Eigen::MatrixXd xf = noise.residual_former * noise.whitener * design.values;
  const Eigen::MatrixXd gram = xf.transpose() * xf;
  const Eigen::MatrixXd bcov = detail::checked_spd_inverse(gram, "perm-labels: X'G^-1X");

  const VectorizationRule rule{1};
  LabelPermutationResult result;
  result.bcov_vec = vectorize(bcov.topLeftCorner(q, q), rule);

  for (const auto& labels : patterns) {
    const SimilarityMatrix s = stimulus_similarity(labels);
    result.observed.push_back(pearson(vectorize(s.values, rule), result.bcov_vec));
  }

  std::vector<int> labels = patterns.front();
  RngStream rng(seed, 0x6c616270ULL /* "labp" */);
  const std::int64_t max_attempts =
      100LL * static_cast<std::int64_t>(n_perm) + 1000;
  std::int64_t attempts = 0;
  result.permuted.reserve(static_cast<std::size_t>(n_perm));
  while (static_cast<int>(result.permuted.size()) < n_perm) {
    if (++attempts > max_attempts)
      throw NumericError("perm-labels: label permutations keep producing degenerate similarity");
    rng.shuffle(labels);
    SimilarityMatrix s{Eigen::MatrixXd(), SimilarityKind::stimulus_model};
    try {
      s = stimulus_similarity(labels);
    } catch (const NumericError&) {
      ++result.n_resampled;
      continue;
    }
    result.permuted.push_back(pearson(vectorize(s.values, rule), result.bcov_vec));
  }
  return result;
}

}  // namespace parsa
