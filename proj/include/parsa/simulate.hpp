#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parsa/design.hpp"
#include "parsa/errors.hpp"
#include "parsa/geometry.hpp"
#include "parsa/glm.hpp"
#include "parsa/hrf.hpp"
#include "parsa/inference.hpp"
#include "parsa/noise.hpp"
#include "parsa/perm_labels.hpp"
#include "parsa/rng.hpp"
#include "parsa/searchlight_rsa.hpp"
#include "parsa/similarity.hpp"

namespace parsa {

// The synthetic block paradigm: blocks of back-to-back trials separated by
// unmodelled baseline gaps of the same length.
struct Fig1Design {
  int n_blocks = 6;
  int trials_per_block = 4;
  double stimulus_duration = 3.0;  // s
  double block_duration = 12.0;    // s
  double baseline_duration = 12.0; // s
  double tr = 2.26;                // s
  int n_scans = 65;

  int q() const { return n_blocks * trials_per_block; }
};

inline void validate(const Fig1Design& d) {
  if (d.n_blocks < 1 || d.trials_per_block < 1)
    throw ConfigError("design: blocks and trials per block must be >= 1");
  if (!(d.stimulus_duration > 0.0) || !(d.block_duration > 0.0) || !(d.baseline_duration >= 0.0))
    throw ConfigError("design: durations must be positive");
  if (d.trials_per_block * d.stimulus_duration > d.block_duration + 1e-9)
    throw ConfigError("design: trials do not fit into the block duration");
  if (!(d.tr > 0.0) || d.n_scans < 2) throw ConfigError("design: need tr > 0 and n_scans >= 2");
}

// Block b starts at b * (block + baseline) seconds; trial k within a block
// starts at k * stimulus_duration. Baselines are unmodelled gaps.
inline EventTable make_fig1_events(const Fig1Design& d) {
  validate(d);
  EventTable table;
  table.n_scans = d.n_scans;
  table.tr = d.tr;
  const double stride = d.block_duration + d.baseline_duration;
  for (int b = 0; b < d.n_blocks; ++b)
    for (int k = 0; k < d.trials_per_block; ++k)
      table.events.push_back(
          {b * stride + k * d.stimulus_duration, d.stimulus_duration, 0});
  validate(table);  // also enforces that the paradigm fits the scan time
  return table;
}

enum class LabelPatternKind { A, B };

// Pattern A alternates the two categories between trials within each block;
// pattern B gives each block a single category, alternating across blocks.
inline std::vector<int> fig1_labels(LabelPatternKind kind, const Fig1Design& d) {
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(d.q()));
  for (int b = 0; b < d.n_blocks; ++b)
    for (int k = 0; k < d.trials_per_block; ++k)
      labels.push_back(kind == LabelPatternKind::A ? (k % 2) + 1 : (b % 2) + 1);
  return labels;
}

struct LabelPattern {
  std::string name;  // "A", "B", or "custom"
  std::vector<int> labels;
};

inline LabelPattern make_fig1_pattern(const std::string& name, const Fig1Design& d) {
  if (name == "A") return {"A", fig1_labels(LabelPatternKind::A, d)};
  if (name == "B") return {"B", fig1_labels(LabelPatternKind::B, d)};
  throw ConfigError("pattern must be 'A' or 'B', got '" + name + "'");
}

// White noise scans, i.i.d. standard normal, keyed by (seed, subject) so a
// subject's data is reproducible independently of how many subjects run.
// n_scans x n_voxels; voxels filled column by column.
inline Eigen::MatrixXd noise_scans(const VolumeGeometry& geom, int n_scans, std::uint64_t seed,
                                   int subject) {
  validate(geom);
  if (n_scans < 1) throw ConfigError("noise: n_scans must be >= 1");
  if (subject < 0) throw ConfigError("noise: subject index must be >= 0");
  RngStream rng(seed, 0x73756263ULL /* "subj" */, static_cast<std::uint64_t>(subject));
  Eigen::MatrixXd data(n_scans, geom.size());
  for (Eigen::Index j = 0; j < data.cols(); ++j)
    for (Eigen::Index t = 0; t < data.rows(); ++t) data(t, j) = rng.normal();
  return data;
}

struct Fig1Config {
  Fig1Design design;
  HrfParams hrf;
  VolumeGeometry geometry{{16, 16, 16}, {2.0, 2.0, 2.0}};
  int n_subjects = 30;
  std::uint64_t seed = 1;
  std::vector<std::string> patterns{"A", "B"};
  std::vector<std::vector<SimilarityKind>> confounder_sets{{}, {SimilarityKind::confounder_bcov}};
  SearchlightSpec searchlight;
  VectorizationRule rule;
  CorrMethod method = CorrMethod::pearson;
  BrainSimilarity brain = BrainSimilarity::sscp;
  int threads = 0;
  int label_permutations = 0;  // > 0 adds the label-permutation diagnostic
};

inline std::string confounder_set_name(const std::vector<SimilarityKind>& set) {
  if (set.empty()) return "none";
  std::string name;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) name += '+';
    name += to_string(set[i]);
  }
  return name;
}

struct Fig1Row {
  int subject = 0;
  std::string pattern;
  std::string confounders;
  double average_correlation = 0.0;
  std::int64_t n_admitted = 0;
  std::int64_t n_degenerate = 0;
};

struct Fig1CellSummary {
  std::string pattern;
  std::string confounders;
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

struct Fig1Report {
  std::vector<Fig1Row> rows;           // subject-major, cells in config order
  std::vector<Fig1CellSummary> summary;
  std::optional<LabelPermutationResult> label_diagnostic;
  std::vector<std::string> pattern_names;
};

// Fits plain OLS (no filter, no AR(1)) to white-noise volumes and runs the
// searchlight RSA for every pattern x confounder-set cell, sharing the
// per-subject searchlight sweep across cells.
inline Fig1Report run_fig1_experiment(const Fig1Config& config) {
  validate(config.design);
  if (config.n_subjects < 1) throw ConfigError("simulate: n_subjects must be >= 1");
  if (config.patterns.empty()) throw ConfigError("simulate: no patterns requested");
  if (config.confounder_sets.empty()) throw ConfigError("simulate: no confounder sets requested");

  const EventTable events = make_fig1_events(config.design);
  const DesignMatrix design = build_design(events, config.hrf);
  const NoiseModel noise = ols_noise(config.design.n_scans);

  std::vector<LabelPattern> patterns;
  for (const auto& name : config.patterns) patterns.push_back(make_fig1_pattern(name, config.design));

  bool need_svar = false, need_bb = false;
  for (const auto& set : config.confounder_sets)
    for (SimilarityKind k : set) {
      need_svar = need_svar || k == SimilarityKind::confounder_svar;
      need_bb = need_bb || k == SimilarityKind::confounder_bb;
    }

  const Mask mask = full_mask(config.geometry);
  Fig1Report report;
  for (const auto& p : patterns) report.pattern_names.push_back(p.name);

  struct Cell {
    std::size_t pattern_index;
    std::vector<SimilarityKind> confounders;
  };
  std::vector<Cell> cells;
  for (std::size_t pi = 0; pi < patterns.size(); ++pi)
    for (const auto& set : config.confounder_sets) cells.push_back({pi, set});

  std::vector<SimilarityMatrix> models;
  for (const auto& p : patterns) models.push_back(stimulus_similarity(p.labels));

  for (int subject = 0; subject < config.n_subjects; ++subject) {
    const Eigen::MatrixXd data =
        noise_scans(config.geometry, config.design.n_scans, config.seed, subject);
    const BetaDataset fit = gls_fit(data, design, noise, config.threads);

    BetaVolume betas{mask, fit.stimulus_betas()};
    SimilarityMatrix bcov{fit.stimulus_bcov(), SimilarityKind::confounder_bcov};
    SimilarityMatrix svar, bb;
    if (need_svar) svar = volume_svar(betas.betas);
    if (need_bb) bb = volume_bb(betas.betas);

    std::vector<RsaAnalysis> analyses;
    for (const Cell& cell : cells) {
      RsaAnalysis a;
      a.model = models[cell.pattern_index];
      a.method = config.method;
      for (SimilarityKind k : cell.confounders) {
        switch (k) {
          case SimilarityKind::confounder_bcov: a.confounders.push_back(bcov); break;
          case SimilarityKind::confounder_svar: a.confounders.push_back(svar); break;
          case SimilarityKind::confounder_bb: a.confounders.push_back(bb); break;
          default: throw ConfigError("simulate: confounder sets may only contain bcov, svar, bb");
        }
      }
      analyses.push_back(std::move(a));
    }

    const auto results = searchlight_rsa_multi(betas, config.searchlight, analyses, config.rule,
                                               config.brain, config.threads);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      Fig1Row row;
      row.subject = subject + 1;
      row.pattern = patterns[cells[c].pattern_index].name;
      row.confounders = confounder_set_name(cells[c].confounders);
      row.average_correlation = average_volume_correlation(results[c].map);
      row.n_admitted = results[c].stats.n_admitted;
      row.n_degenerate = results[c].stats.n_degenerate;
      report.rows.push_back(std::move(row));
    }
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    Fig1CellSummary s;
    s.pattern = patterns[cells[c].pattern_index].name;
    s.confounders = confounder_set_name(cells[c].confounders);
    double sum = 0.0;
    for (int subject = 0; subject < config.n_subjects; ++subject)
      sum += report.rows[static_cast<std::size_t>(subject) * cells.size() + c].average_correlation;
    s.n = config.n_subjects;
    s.mean = sum / s.n;
    double ss = 0.0;
    for (int subject = 0; subject < config.n_subjects; ++subject) {
      const double d =
          report.rows[static_cast<std::size_t>(subject) * cells.size() + c].average_correlation -
          s.mean;
      ss += d * d;
    }
    s.sd = s.n > 1 ? std::sqrt(ss / (s.n - 1)) : 0.0;
    report.summary.push_back(std::move(s));
  }

  if (config.label_permutations > 0) {
    std::vector<std::vector<int>> pattern_labels;
    for (const auto& p : patterns) pattern_labels.push_back(p.labels);
    report.label_diagnostic = label_permutation_diagnostic(
        events, config.hrf, noise, pattern_labels, config.label_permutations, config.seed);
  }
  return report;
}

}  // namespace parsa
