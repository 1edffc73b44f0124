#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include <parsa/correlate.hpp>
#include <parsa/rng.hpp>

using parsa::VectorizationRule;

namespace {

Eigen::VectorXd random_vector(int n, parsa::RngStream& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// Independent residualize-then-correlate oracle via explicit normal equations.
std::optional<double> partial_oracle(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                     const std::vector<Eigen::VectorXd>& confounders) {
  const Eigen::Index m = a.size();
  const int k = static_cast<int>(confounders.size());
  Eigen::MatrixXd z(m, k + 1);
  z.col(0).setOnes();
  for (int c = 0; c < k; ++c) z.col(c + 1) = confounders[static_cast<std::size_t>(c)];
  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::VectorXd ra = a - z * gram.fullPivLu().solve(z.transpose() * a);
  const Eigen::VectorXd rb = b - z * gram.fullPivLu().solve(z.transpose() * b);
  const double denom = ra.norm() * rb.norm();
  if (denom == 0.0) return std::nullopt;
  return ra.dot(rb) / denom;
}

}  // namespace

TEST_CASE("vectorize walks the upper triangle row-major") {
  Eigen::MatrixXd m(3, 3);
  m << 1, 2, 3,
       2, 4, 5,
       3, 5, 6;
  const Eigen::VectorXd v = parsa::vectorize(m, VectorizationRule{1});
  REQUIRE(v.size() == 3);
  CHECK(v(0) == 2);
  CHECK(v(1) == 3);
  CHECK(v(2) == 5);
}

TEST_CASE("vectorize rejects offsets that leave too few pairs") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(parsa::vectorize(m, VectorizationRule{2}), parsa::NumericError);
  CHECK_THROWS_AS(parsa::vectorize(m, VectorizationRule{3}), parsa::ConfigError);
}

TEST_CASE("vectorized length matches the pair count") {
  CHECK(parsa::vectorized_length(24, VectorizationRule{1}) == 276);
  // sum_{d>=2}(q-d) for q = 24
  int expected = 0;
  for (int d = 2; d <= 23; ++d) expected += 24 - d;
  CHECK(parsa::vectorized_length(24, VectorizationRule{2}) == expected);
  CHECK(expected == 253);
}

TEST_CASE("pearson basics") {
  Eigen::VectorXd a(4), b(4);
  a << 1, 2, 3, 4;
  b << 1, 3, 2, 4;
  CHECK(*parsa::pearson(a, a) == 1.0);
  CHECK(*parsa::pearson(a, (-a).eval()) == -1.0);
  CHECK(*parsa::pearson(a, b) == Catch::Approx(0.8).margin(1e-12));
  CHECK_FALSE(parsa::pearson(Eigen::VectorXd::Constant(4, 2.0), b).has_value());
  CHECK_THROWS_AS(parsa::pearson(a, Eigen::VectorXd::Ones(3)), parsa::ConfigError);
}

TEST_CASE("midranks average ties") {
  Eigen::VectorXd v(5);
  v << 3.0, 1.0, 3.0, 2.0, 3.0;
  const Eigen::VectorXd r = parsa::midranks(v);
  CHECK(r(1) == 1.0);
  CHECK(r(3) == 2.0);
  CHECK(r(0) == 4.0);
  CHECK(r(2) == 4.0);
  CHECK(r(4) == 4.0);
}

TEST_CASE("spearman is invariant under monotone transforms") {
  parsa::RngStream rng(55);
  const Eigen::VectorXd a = random_vector(20, rng);
  Eigen::VectorXd cubed = a.array().pow(3);  // strictly monotone
  CHECK(*parsa::spearman(a, cubed) == Catch::Approx(1.0));
  Eigen::VectorXd reversed = a;
  std::reverse(reversed.data(), reversed.data() + reversed.size());
  Eigen::VectorXd idx(20), ridx(20);
  for (int i = 0; i < 20; ++i) {
    idx(i) = i;
    ridx(i) = 19 - i;
  }
  CHECK(*parsa::spearman(idx, ridx) == Catch::Approx(-1.0));
  Eigen::VectorXd x(4), y(4);
  x << 1, 2, 3, 4;
  y << 1, 3, 2, 4;
  CHECK(*parsa::spearman(x, y) == Catch::Approx(0.8).margin(1e-12));
}

TEST_CASE("partial correlation with no confounders is exactly pearson") {
  parsa::RngStream rng(56);
  const Eigen::VectorXd a = random_vector(15, rng);
  const Eigen::VectorXd b = random_vector(15, rng);
  CHECK(*parsa::partial_correlation(a, b, {}) == *parsa::pearson(a, b));
}

TEST_CASE("partialling a vector out of itself is degenerate") {
  parsa::RngStream rng(57);
  const Eigen::VectorXd a = random_vector(15, rng);
  const Eigen::VectorXd b = random_vector(15, rng);
  CHECK_FALSE(parsa::partial_correlation(a, b, {b}).has_value());
}

TEST_CASE("orthogonal construction gives zero partial correlation") {
  // a = x + c, b = y + c with x, y, c mutually orthogonal and centered
  parsa::RngStream rng(58);
  const int m = 40;
  Eigen::MatrixXd raw(m, 4);
  for (int j = 0; j < 4; ++j) raw.col(j) = random_vector(m, rng);
  raw.col(0).setOnes();  // orthogonalize against the intercept too
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  const Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(m, 4);
  const Eigen::VectorXd x = basis.col(1), y = basis.col(2), c = basis.col(3);
  const auto r = parsa::partial_correlation(x + c, y + c, {c});
  REQUIRE(r.has_value());
  CHECK(std::abs(*r) < 1e-10);
}

TEST_CASE("collinear confounders raise an error") {
  parsa::RngStream rng(59);
  const Eigen::VectorXd a = random_vector(15, rng);
  const Eigen::VectorXd b = random_vector(15, rng);
  const Eigen::VectorXd c = random_vector(15, rng);
  CHECK_THROWS_AS(parsa::partial_correlation(a, b, {c, (2.0 * c).eval()}), parsa::NumericError);
}

TEST_CASE("partial correlation matches the normal-equations oracle") {
  parsa::RngStream rng(60);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 10 + static_cast<int>(rng.uniform_int(40));
    const int k = static_cast<int>(rng.uniform_int(4));
    const Eigen::VectorXd a = random_vector(m, rng);
    const Eigen::VectorXd b = random_vector(m, rng);
    std::vector<Eigen::VectorXd> confounders;
    for (int c = 0; c < k; ++c) confounders.push_back(random_vector(m, rng));
    const auto got = parsa::partial_correlation(a, b, confounders);
    const auto expected = partial_oracle(a, b, confounders);
    REQUIRE(got.has_value());
    REQUIRE(expected.has_value());
    CHECK(*got == Catch::Approx(*expected).margin(1e-10));
  }
}

TEST_CASE("partial correlation is invariant under affine recombination of confounders") {
  parsa::RngStream rng(61);
  const int m = 30;
  const Eigen::VectorXd a = random_vector(m, rng);
  const Eigen::VectorXd b = random_vector(m, rng);
  const Eigen::VectorXd c1 = random_vector(m, rng);
  const Eigen::VectorXd c2 = random_vector(m, rng);
  const auto base = parsa::partial_correlation(a, b, {c1, c2});
  // invertible affine recombination, including intercept shifts
  const Eigen::VectorXd d1 = 2.0 * c1 - 3.0 * c2 + Eigen::VectorXd::Constant(m, 5.0);
  const Eigen::VectorXd d2 = 0.5 * c1 + c2 - Eigen::VectorXd::Constant(m, 1.0);
  const auto recombined = parsa::partial_correlation(a, b, {d1, d2});
  REQUIRE(base.has_value());
  REQUIRE(recombined.has_value());
  CHECK(*base == Catch::Approx(*recombined).margin(1e-10));
}
