#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parsa/correlate.hpp"
#include "parsa/errors.hpp"
#include "parsa/geometry.hpp"
#include "parsa/parallel.hpp"
#include "parsa/searchlight.hpp"
#include "parsa/similarity.hpp"

namespace parsa {

// Stimulus coefficients only (q rows), voxels in mask order.
struct BetaVolume {
  Mask mask;
  Eigen::MatrixXd betas;
};

// Searchlight correlation map; NaN marks omitted or degenerate centers.
struct RsaMap {
  VolumeGeometry geom;
  std::vector<double> values;

  static constexpr double missing() { return std::numeric_limits<double>::quiet_NaN(); }
};

inline RsaMap make_rsa_map(const VolumeGeometry& geom) {
  RsaMap map;
  map.geom = geom;
  map.values.assign(static_cast<std::size_t>(geom.size()), RsaMap::missing());
  return map;
}

enum class BrainSimilarity { sscp, neg_correlation };
enum class CorrMethod { pearson, spearman };

inline const char* to_string(BrainSimilarity b) {
  return b == BrainSimilarity::sscp ? "sscp" : "neg-correlation";
}
inline const char* to_string(CorrMethod m) {
  return m == CorrMethod::pearson ? "pearson" : "spearman";
}

struct RsaAnalysis {
  SimilarityMatrix model;
  std::vector<SimilarityMatrix> confounders;
  CorrMethod method = CorrMethod::pearson;
};

struct SearchlightStats {
  std::int64_t n_centers = 0;     // in-mask voxels
  std::int64_t n_admitted = 0;    // centers meeting min_voxels
  std::int64_t n_degenerate = 0;  // admitted centers that produced no value
};

struct RsaResult {
  RsaMap map;
  SearchlightStats stats;
};

namespace detail {

// Precomputed per-analysis state: the (rank-transformed) model vector, its
// residual against [intercept | confounders], and the thin Q factor of that
// design for projecting searchlight vectors.
struct PreparedAnalysis {
  Eigen::MatrixXd q_basis;      // m x rank, empty when no confounders
  Eigen::VectorXd model_resid;  // residualized (or plain) model vector
  double model_sq_norm = 0.0;
  bool model_degenerate = false;
  bool spearman = false;
};

inline PreparedAnalysis prepare_analysis(const RsaAnalysis& analysis, int q,
                                         const VectorizationRule& rule) {
  if (analysis.model.q() != q)
    throw ConfigError("rsa: model similarity is " + std::to_string(analysis.model.q()) +
                      " x " + std::to_string(analysis.model.q()) + ", betas have q = " +
                      std::to_string(q));
  PreparedAnalysis prep;
  prep.spearman = analysis.method == CorrMethod::spearman;
  Eigen::VectorXd model_vec = vectorize(analysis.model.values, rule);
  if (prep.spearman) model_vec = midranks(model_vec);
  const Eigen::Index m = model_vec.size();

  const int k = static_cast<int>(analysis.confounders.size());
  if (k > 0) {
    if (m < k + 3)
      throw ConfigError("rsa: " + std::to_string(k) + " confounders need at least " +
                        std::to_string(k + 3) + " vectorized entries");
    Eigen::MatrixXd z(m, k + 1);
    z.col(0).setOnes();
    for (int c = 0; c < k; ++c) {
      const SimilarityMatrix& conf = analysis.confounders[static_cast<std::size_t>(c)];
      if (conf.q() != q) throw ConfigError("rsa: confounder dimension mismatch");
      z.col(c + 1) = vectorize(conf.values, rule);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
    if (qr.rank() < k + 1)
      throw NumericError("rsa: confounder set (plus intercept) is collinear");
    prep.q_basis = qr.householderQ() * Eigen::MatrixXd::Identity(m, qr.rank());
    prep.model_resid = model_vec - prep.q_basis * (prep.q_basis.transpose() * model_vec);
    prep.model_degenerate = prep.model_resid.norm() < 1e-12 * model_vec.norm();
  } else {
    // plain correlation: center here so each searchlight needs only dot products
    prep.model_resid = model_vec.array() - model_vec.mean();
    prep.model_degenerate = is_constant(prep.model_resid, model_vec);
  }
  prep.model_sq_norm = prep.model_resid.squaredNorm();
  return prep;
}

// Correlation of one searchlight vector with the prepared model.
inline std::optional<double> prepared_correlation(const PreparedAnalysis& prep,
                                                  const Eigen::VectorXd& brain_vec) {
  if (prep.model_degenerate) return std::nullopt;
  const Eigen::VectorXd u = prep.spearman ? midranks(brain_vec) : brain_vec;
  Eigen::VectorXd ru;
  if (prep.q_basis.size() > 0) {
    ru = u - prep.q_basis * (prep.q_basis.transpose() * u);
    if (ru.norm() < 1e-12 * u.norm()) return std::nullopt;
  } else {
    ru = u.array() - u.mean();
  }
  if (is_constant(ru, u)) return std::nullopt;
  const double r =
      ru.dot(prep.model_resid) / std::sqrt(ru.squaredNorm() * prep.model_sq_norm);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace detail

// Sweeps the searchlight once and evaluates every analysis against the same
// per-center brain similarity vector. Parallel over centers; each center
// writes only its own map cells, so results do not depend on the schedule.
inline std::vector<RsaResult> searchlight_rsa_multi(const BetaVolume& betas,
                                                    const SearchlightSpec& spec,
                                                    std::span<const RsaAnalysis> analyses,
                                                    const VectorizationRule& rule,
                                                    BrainSimilarity brain = BrainSimilarity::sscp,
                                                    int threads = 0) {
  if (analyses.empty()) throw ConfigError("rsa: no analyses requested");
  const int q = static_cast<int>(betas.betas.rows());
  if (betas.betas.cols() != betas.mask.count())
    throw ConfigError("rsa: beta column count does not match the mask");
  validate(spec);

  std::vector<detail::PreparedAnalysis> prepared;
  prepared.reserve(analyses.size());
  for (const RsaAnalysis& a : analyses) prepared.push_back(detail::prepare_analysis(a, q, rule));

  const auto offsets = searchlight_offsets(spec, betas.mask.geom);
  const Eigen::Index m_len = vectorized_length(q, rule);

  std::vector<RsaResult> results(analyses.size());
  for (auto& r : results) {
    r.map = make_rsa_map(betas.mask.geom);
    r.stats.n_centers = betas.mask.count();
  }
  std::vector<std::atomic<std::int64_t>> degenerate(analyses.size());
  for (auto& d : degenerate) d.store(0);
  std::atomic<std::int64_t> admitted{0};

  parallel_for(static_cast<std::size_t>(betas.mask.count()), threads,
               [&](std::size_t begin, std::size_t end) {
    std::vector<std::int32_t> members;
    members.reserve(offsets.size());
    Eigen::MatrixXd gathered(q, static_cast<Eigen::Index>(offsets.size()));
    Eigen::MatrixXd sscp(q, q);
    Eigen::VectorXd brain_vec(m_len);
    std::int64_t local_admitted = 0;
    std::vector<std::int64_t> local_degenerate(analyses.size(), 0);

    for (std::size_t c = begin; c < end; ++c) {
      const std::int32_t center_voxel = betas.mask.voxels[c];
      searchlight_members(betas.mask, offsets, center_voxel, members);
      if (static_cast<int>(members.size()) < spec.min_voxels) continue;
      ++local_admitted;

      const auto n_members = static_cast<Eigen::Index>(members.size());
      for (Eigen::Index i = 0; i < n_members; ++i)
        gathered.col(i) = betas.betas.col(members[static_cast<std::size_t>(i)]);
      const auto block = gathered.leftCols(n_members);

      bool have_brain = false;
      if (brain == BrainSimilarity::sscp) {
        sscp.noalias() = block * block.transpose();
        have_brain = true;
      } else {
        const auto neg = brain_neg_correlation(block);
        if (neg) {
          sscp = neg->values;
          have_brain = true;
        }
      }
      if (have_brain) {
        int at = 0;
        for (int i = 0; i < q; ++i)
          for (int j = i + rule.offset; j < q; ++j) brain_vec(at++) = sscp(i, j);
      }

      for (std::size_t a = 0; a < analyses.size(); ++a) {
        std::optional<double> r;
        if (have_brain) r = detail::prepared_correlation(prepared[a], brain_vec);
        if (r) {
          results[a].map.values[static_cast<std::size_t>(center_voxel)] = *r;
        } else {
          ++local_degenerate[a];
        }
      }
    }
    admitted += local_admitted;
    for (std::size_t a = 0; a < analyses.size(); ++a) degenerate[a] += local_degenerate[a];
  });

  for (std::size_t a = 0; a < analyses.size(); ++a) {
    results[a].stats.n_admitted = admitted.load();
    results[a].stats.n_degenerate = degenerate[a].load();
  }
  return results;
}

inline RsaResult searchlight_rsa(const BetaVolume& betas, const SearchlightSpec& spec,
                                 const SimilarityMatrix& model,
                                 const std::vector<SimilarityMatrix>& confounders,
                                 const VectorizationRule& rule,
                                 CorrMethod method = CorrMethod::pearson,
                                 BrainSimilarity brain = BrainSimilarity::sscp,
                                 int threads = 0) {
  const RsaAnalysis analysis{model, confounders, method};
  auto results = searchlight_rsa_multi(betas, spec, std::span(&analysis, 1), rule, brain, threads);
  return std::move(results.front());
}

}  // namespace parsa
