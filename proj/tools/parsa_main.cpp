// parsa: searchlight RSA with partial-correlation bias adjustment.
//
// Subcommands: simulate, glm-fit, rsa, group, perm-labels. Every command is
// driven by a single JSON config (defaults below); --set key.path=value
// overrides individual leaves, and the resolved config is written next to
// the outputs for provenance. Exit codes: 0 ok, 2 config, 3 format,
// 4 numeric degeneracy, 5 i/o.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <parsa/parsa.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config plumbing

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parsa::IoError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw parsa::FormatError(path + ": " + e.what());
  }
}

bool same_json_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  if (a.is_null() || b.is_null()) return true;  // nullable leaves
  return a.type() == b.type();
}

// Overlay `overrides` onto `target`, rejecting keys that the command's
// default config does not define.
void merge_config(json& target, const json& overrides, const std::string& prefix) {
  if (!overrides.is_object())
    throw parsa::ConfigError("config: expected an object at '" +
                             (prefix.empty() ? std::string("<root>") : prefix) + "'");
  for (const auto& [key, value] : overrides.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!target.contains(key)) throw parsa::ConfigError("config: unknown field '" + path + "'");
    json& slot = target[key];
    if (slot.is_object() && value.is_object()) {
      merge_config(slot, value, path);
    } else if (slot.is_object() != value.is_object() && !value.is_null() && !slot.is_null()) {
      throw parsa::ConfigError("config: field '" + path + "' has the wrong shape");
    } else {
      if (!same_json_kind(slot, value))
        throw parsa::ConfigError("config: field '" + path + "' has the wrong type");
      slot = value;
    }
  }
}

// --set a.b.c=value (value parsed as JSON, bare words fall back to strings)
void apply_set_overrides(json& config, const std::vector<std::string>& sets) {
  for (const std::string& item : sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw parsa::ConfigError("--set expects key.path=value, got '" + item + "'");
    const std::string path = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;  // unquoted string
    }
    json* slot = &config;
    std::string walked;
    std::size_t begin = 0;
    while (true) {
      const auto dot = path.find('.', begin);
      const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
      walked = walked.empty() ? key : walked + "." + key;
      if (!slot->contains(key))
        throw parsa::ConfigError("config: unknown field '" + walked + "'");
      slot = &(*slot)[key];
      if (dot == std::string::npos) break;
      begin = dot + 1;
    }
    if (slot->is_object()) throw parsa::ConfigError("config: '" + path + "' is not a leaf");
    if (!same_json_kind(*slot, value))
      throw parsa::ConfigError("config: field '" + path + "' has the wrong type");
    *slot = value;
  }
}

json resolve_config(json defaults, const std::string& config_path,
                    const std::vector<std::string>& sets) {
  if (!config_path.empty()) merge_config(defaults, load_json_file(config_path), "");
  apply_set_overrides(defaults, sets);
  return defaults;
}

fs::path prepare_out_dir(const json& config, const char* command) {
  const fs::path dir = config.at("out_dir").get<std::string>();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw parsa::IoError("cannot create output directory " + dir.string());
  std::ofstream out(dir / "config.json", std::ios::binary);
  json copy = config;
  copy["command"] = command;
  out << copy.dump(2) << "\n";
  if (!out) throw parsa::IoError("cannot write resolved config in " + dir.string());
  return dir;
}

double require_number(const json& config, const char* key) {
  const json& v = config.at(key);
  if (!v.is_number()) throw parsa::ConfigError(std::string("config: '") + key + "' must be set");
  return v.get<double>();
}

std::optional<double> optional_number(const json& config, const char* key) {
  const json& v = config.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::optional<std::string> optional_string(const json& config, const char* key) {
  const json& v = config.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw parsa::ConfigError(std::string("config: '") + key + "' must be a path");
  return v.get<std::string>();
}

// ---------------------------------------------------------------------------
// shared pieces

parsa::VolumeGeometry geometry_from_config(const json& g) {
  parsa::VolumeGeometry geom;
  const auto& dim = g.at("dim");
  const auto& vox = g.at("voxel_mm");
  if (!dim.is_array() || dim.size() != 3 || !vox.is_array() || vox.size() != 3)
    throw parsa::ConfigError("config: geometry.dim and geometry.voxel_mm must have 3 entries");
  for (int a = 0; a < 3; ++a) {
    geom.dim[static_cast<std::size_t>(a)] = dim[static_cast<std::size_t>(a)].get<int>();
    geom.voxel_mm[static_cast<std::size_t>(a)] = vox[static_cast<std::size_t>(a)].get<double>();
  }
  return geom;
}

parsa::HrfParams hrf_from_config(const json& h) {
  parsa::HrfParams p;
  p.peak_delay = h.at("peak_delay").get<double>();
  p.undershoot_delay = h.at("undershoot_delay").get<double>();
  p.peak_dispersion = h.at("peak_dispersion").get<double>();
  p.undershoot_dispersion = h.at("undershoot_dispersion").get<double>();
  p.undershoot_ratio = h.at("undershoot_ratio").get<double>();
  p.kernel_length = h.at("kernel_length").get<double>();
  p.microtime_dt = h.at("microtime_dt").get<double>();
  return p;
}

json default_hrf_config() {
  return json{{"peak_delay", 6.0},          {"undershoot_delay", 16.0},
              {"peak_dispersion", 1.0},     {"undershoot_dispersion", 1.0},
              {"undershoot_ratio", 1.0 / 6.0}, {"kernel_length", 32.0},
              {"microtime_dt", 0.1}};
}

parsa::SearchlightSpec searchlight_from_config(const json& s) {
  parsa::SearchlightSpec spec;
  spec.radius_mm = s.at("radius_mm").get<double>();
  spec.min_voxels = s.at("min_voxels").get<int>();
  return spec;
}

parsa::CorrMethod method_from_string(const std::string& s) {
  if (s == "pearson") return parsa::CorrMethod::pearson;
  if (s == "spearman") return parsa::CorrMethod::spearman;
  throw parsa::ConfigError("config: method must be 'pearson' or 'spearman', got '" + s + "'");
}

parsa::BrainSimilarity brain_from_string(const std::string& s) {
  if (s == "sscp") return parsa::BrainSimilarity::sscp;
  if (s == "neg-correlation") return parsa::BrainSimilarity::neg_correlation;
  throw parsa::ConfigError(
      "config: brain_similarity must be 'sscp' or 'neg-correlation', got '" + s + "'");
}

std::vector<parsa::SimilarityKind> parse_confounder_set(const std::string& name) {
  std::vector<parsa::SimilarityKind> set;
  if (name == "none" || name.empty()) return set;
  std::size_t begin = 0;
  while (begin <= name.size()) {
    const auto plus = name.find('+', begin);
    const std::string part =
        name.substr(begin, plus == std::string::npos ? plus : plus - begin);
    set.push_back(parsa::confounder_kind_from_string(part));
    if (plus == std::string::npos) break;
    begin = plus + 1;
  }
  return set;
}

std::vector<std::vector<parsa::SimilarityKind>> confounder_sets_from_config(const json& config) {
  std::vector<std::vector<parsa::SimilarityKind>> sets;
  for (const auto& entry : config.at("confounder_sets"))
    sets.push_back(parse_confounder_set(entry.get<std::string>()));
  if (sets.empty()) throw parsa::ConfigError("config: confounder_sets must not be empty");
  return sets;
}

parsa::EventTable read_events_csv(const std::string& path, int n_scans, double tr) {
  const parsa::CsvTable table = parsa::read_csv_table(path);
  const int onset_col = table.column("onset", path);
  const int duration_col = table.column("duration", path);
  const int label_col = table.column("label", path);
  parsa::EventTable events;
  events.n_scans = n_scans;
  events.tr = tr;
  for (const auto& row : table.rows) {
    parsa::Event e;
    e.onset = parsa::parse_double(row[static_cast<std::size_t>(onset_col)], path);
    e.duration = parsa::parse_double(row[static_cast<std::size_t>(duration_col)], path);
    const double label = parsa::parse_double(row[static_cast<std::size_t>(label_col)], path);
    e.label = static_cast<int>(label);
    events.events.push_back(e);
  }
  parsa::validate(events);
  return events;
}

std::vector<int> read_labels_csv(const std::string& path) {
  const parsa::CsvTable table = parsa::read_csv_table(path);
  const int label_col = table.column("label", path);
  std::vector<int> labels;
  for (const auto& row : table.rows)
    labels.push_back(
        static_cast<int>(parsa::parse_double(row[static_cast<std::size_t>(label_col)], path)));
  if (labels.empty()) throw parsa::FormatError(path + ": no label rows");
  return labels;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw parsa::IoError("cannot write " + path.string());
}

// Scatter mask-ordered values into a full volume (NaN outside the mask).
parsa::VolumeData scatter_to_volume(const parsa::Mask& mask, const Eigen::MatrixXd& rows_by_voxel) {
  parsa::VolumeData vol = parsa::make_volume(mask.geom, static_cast<int>(rows_by_voxel.rows()),
                                             std::numeric_limits<double>::quiet_NaN());
  for (int m = 0; m < mask.count(); ++m)
    for (Eigen::Index t = 0; t < rows_by_voxel.rows(); ++t)
      vol.values[static_cast<std::size_t>(mask.voxels[static_cast<std::size_t>(m)] +
                                          mask.geom.size() * t)] = rows_by_voxel(t, m);
  return vol;
}

parsa::VolumeData map_to_volume(const parsa::RsaMap& map) {
  parsa::VolumeData vol;
  vol.geom = map.geom;
  vol.nt = 1;
  vol.values = map.values;
  return vol;
}

parsa::RsaMap volume_to_map(const parsa::VolumeData& vol, const std::string& path) {
  if (vol.nt != 1) throw parsa::FormatError(path + ": expected a 3D map, found 4D");
  parsa::RsaMap map;
  map.geom = vol.geom;
  map.values = vol.values;
  return map;
}

json map_stats_json(const parsa::RsaMap& map, const parsa::SearchlightStats& stats) {
  double sum = 0.0, sum2 = 0.0;
  std::int64_t n = 0;
  for (double v : map.values) {
    if (std::isnan(v)) continue;
    sum += v;
    sum2 += v * v;
    ++n;
  }
  json j;
  j["n_searchlights"] = stats.n_admitted;
  j["n_degenerate"] = stats.n_degenerate;
  if (n > 0) {
    const double mean = sum / static_cast<double>(n);
    j["mean"] = mean;
    j["sd"] = n > 1 ? std::sqrt(std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0))) : 0.0;
  } else {
    j["mean"] = nullptr;
    j["sd"] = nullptr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// simulate

json simulate_defaults() {
  json j;
  j["out_dir"] = "parsa-sim";
  j["seed"] = 1;
  j["n_subjects"] = 30;
  j["threads"] = 0;
  j["geometry"] = {{"dim", {16, 16, 16}}, {"voxel_mm", {2.0, 2.0, 2.0}}};
  j["design"] = {{"n_blocks", 6},          {"trials_per_block", 4},
                 {"stimulus_duration", 3.0}, {"block_duration", 12.0},
                 {"baseline_duration", 12.0}, {"tr", 2.26},
                 {"n_scans", 65}};
  j["hrf"] = default_hrf_config();
  j["patterns"] = {"A", "B"};
  j["confounder_sets"] = {"none", "bcov"};
  j["searchlight"] = {{"radius_mm", 8.0}, {"min_voxels", 27}};
  j["offset"] = 1;
  j["method"] = "pearson";
  j["brain_similarity"] = "sscp";
  j["label_permutations"] = 0;
  j["write_betas"] = false;
  return j;
}

parsa::Fig1Design design_from_config(const json& d) {
  parsa::Fig1Design design;
  design.n_blocks = d.at("n_blocks").get<int>();
  design.trials_per_block = d.at("trials_per_block").get<int>();
  design.stimulus_duration = d.at("stimulus_duration").get<double>();
  design.block_duration = d.at("block_duration").get<double>();
  design.baseline_duration = d.at("baseline_duration").get<double>();
  design.tr = d.at("tr").get<double>();
  design.n_scans = d.at("n_scans").get<int>();
  return design;
}

int cmd_simulate(const json& config) {
  const fs::path dir = prepare_out_dir(config, "simulate");

  parsa::Fig1Config fig;
  fig.design = design_from_config(config.at("design"));
  fig.hrf = hrf_from_config(config.at("hrf"));
  fig.geometry = geometry_from_config(config.at("geometry"));
  fig.n_subjects = config.at("n_subjects").get<int>();
  fig.seed = config.at("seed").get<std::uint64_t>();
  fig.patterns = config.at("patterns").get<std::vector<std::string>>();
  fig.confounder_sets = confounder_sets_from_config(config);
  fig.searchlight = searchlight_from_config(config.at("searchlight"));
  fig.rule.offset = config.at("offset").get<int>();
  fig.method = method_from_string(config.at("method").get<std::string>());
  fig.brain = brain_from_string(config.at("brain_similarity").get<std::string>());
  fig.threads = config.at("threads").get<int>();
  fig.label_permutations = config.at("label_permutations").get<int>();

  const parsa::Fig1Report report = parsa::run_fig1_experiment(fig);

  parsa::CsvWriter diag(
      (dir / "diagnostics.csv").string(),
      {"subject", "pattern", "confounders", "average_volume_correlation", "n_searchlights",
       "n_degenerate"});
  for (const auto& row : report.rows)
    diag.row({std::to_string(row.subject), row.pattern, row.confounders,
              parsa::format_full(row.average_correlation), std::to_string(row.n_admitted),
              std::to_string(row.n_degenerate)});
  diag.close();

  json summary;
  summary["cells"] = json::array();
  for (const auto& cell : report.summary)
    summary["cells"].push_back({{"pattern", cell.pattern},
                                {"confounders", cell.confounders},
                                {"mean", cell.mean},
                                {"sd", cell.sd},
                                {"n", cell.n}});
  write_json_file(dir / "summary.json", summary);

  if (report.label_diagnostic) {
    const auto& lp = *report.label_diagnostic;
    parsa::CsvWriter dist((dir / "fig1g_distribution.csv").string(), {"r"});
    for (const auto& r : lp.permuted)
      if (r) dist.row({parsa::format_full(*r)});
    dist.close();
    json lpj;
    lpj["n_permutations"] = lp.permuted.size();
    lpj["n_defined"] = lp.n_defined();
    lpj["n_resampled"] = lp.n_resampled;
    lpj["observed"] = json::object();
    for (std::size_t p = 0; p < lp.observed.size(); ++p)
      lpj["observed"][report.pattern_names[p]] =
          lp.observed[p] ? json(*lp.observed[p]) : json(nullptr);
    write_json_file(dir / "fig1g.json", lpj);
  }

  if (config.at("write_betas").get<bool>()) {
    const parsa::EventTable events = parsa::make_fig1_events(fig.design);
    const parsa::DesignMatrix design = parsa::build_design(events, fig.hrf);
    const parsa::NoiseModel noise = parsa::ols_noise(fig.design.n_scans);
    const parsa::Mask mask = parsa::full_mask(fig.geometry);
    for (int subject = 0; subject < fig.n_subjects; ++subject) {
      const Eigen::MatrixXd data =
          parsa::noise_scans(fig.geometry, fig.design.n_scans, fig.seed, subject);
      const parsa::BetaDataset betafit = parsa::gls_fit(data, design, noise, fig.threads);
      char name[32];
      std::snprintf(name, sizeof(name), "betas_sub%02d.nii", subject + 1);
      parsa::VolumeData vol = scatter_to_volume(mask, betafit.stimulus_betas());
      parsa::write_volume((dir / name).string(), vol);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// glm-fit

json glm_defaults() {
  json j;
  j["data"] = "";
  j["events"] = "";
  j["mask"] = nullptr;
  j["nuisance"] = nullptr;
  j["tr"] = nullptr;
  j["highpass_cutoff"] = nullptr;
  j["ar1"] = "estimate";  // "estimate", "none", or "fixed" (then ar1_rho applies)
  j["ar1_rho"] = 0.0;
  j["hrf"] = default_hrf_config();
  j["out_dir"] = "parsa-glm";
  j["threads"] = 0;
  return j;
}

int cmd_glm_fit(const json& config) {
  const std::string data_path = config.at("data").get<std::string>();
  if (data_path.empty()) throw parsa::ConfigError("config: 'data' must name a 4D NIfTI file");
  const std::string events_path = config.at("events").get<std::string>();
  if (events_path.empty()) throw parsa::ConfigError("config: 'events' must name a CSV file");

  const parsa::VolumeData data = parsa::read_volume(data_path);
  if (data.nt < 2) throw parsa::ConfigError(data_path + ": expected a 4D time series");

  double tr = optional_number(config, "tr").value_or(data.tr);
  if (!(tr > 0.0))
    throw parsa::ConfigError("config: 'tr' not given and the data header carries none");

  parsa::Mask mask;
  if (const auto mask_path = optional_string(config, "mask")) {
    const parsa::VolumeData mask_vol = parsa::read_volume(*mask_path);
    if (!(mask_vol.geom == data.geom))
      throw parsa::ConfigError("mask geometry does not match the data geometry");
    mask = parsa::mask_from_volume(mask_vol);
  } else {
    mask = parsa::full_mask(data.geom);
  }
  if (mask.count() == 0) throw parsa::NumericError("mask is empty");

  const parsa::EventTable events = read_events_csv(events_path, data.nt, tr);
  std::optional<Eigen::MatrixXd> nuisance;
  if (const auto nuisance_path = optional_string(config, "nuisance")) {
    nuisance = parsa::read_matrix_csv(*nuisance_path);
    if (nuisance->rows() != data.nt)
      throw parsa::ConfigError("nuisance matrix rows must equal the number of scans");
  }
  const parsa::DesignMatrix design =
      parsa::build_design(events, hrf_from_config(config.at("hrf")), nuisance);

  // in-mask voxel columns
  Eigen::MatrixXd y(data.nt, mask.count());
  for (int m = 0; m < mask.count(); ++m)
    for (int t = 0; t < data.nt; ++t)
      y(t, m) = data.values[static_cast<std::size_t>(
          mask.voxels[static_cast<std::size_t>(m)] + data.geom.size() * t)];

  const int threads = config.at("threads").get<int>();
  const auto cutoff = optional_number(config, "highpass_cutoff");
  const std::string ar1 = config.at("ar1").get<std::string>();

  parsa::BetaDataset fit;
  double rho_used = 0.0;
  bool rho_estimated = false;
  if (ar1 == "estimate") {
    auto [fitted, rho] = parsa::fit_with_estimated_ar1(y, design, cutoff, threads);
    fit = std::move(fitted);
    rho_used = rho;
    rho_estimated = true;
  } else {
    if (ar1 == "fixed")
      rho_used = config.at("ar1_rho").get<double>();
    else if (ar1 != "none")
      throw parsa::ConfigError("config: 'ar1' must be \"estimate\", \"none\", or \"fixed\"");
    fit = parsa::gls_fit(y, design, parsa::make_noise_model(data.nt, tr, rho_used, cutoff),
                         threads);
  }

  const fs::path dir = prepare_out_dir(config, "glm-fit");
  parsa::VolumeData beta_vol = scatter_to_volume(mask, fit.stimulus_betas());
  beta_vol.tr = tr;
  parsa::write_volume((dir / "betas.nii").string(), beta_vol);
  parsa::VolumeData sigma_vol = scatter_to_volume(mask, fit.sigma2.transpose());
  parsa::write_volume((dir / "sigma2.nii").string(), sigma_vol);
  parsa::write_matrix_csv((dir / "bcov.csv").string(), fit.stimulus_bcov());
  parsa::write_matrix_csv((dir / "design.csv").string(), design.values);

  json report;
  report["n_scans"] = data.nt;
  report["n_voxels"] = mask.count();
  report["q"] = design.n_stimulus;
  report["n_columns"] = design.n_columns();
  report["tr"] = tr;
  report["ar1_rho"] = rho_used;
  report["ar1_estimated"] = rho_estimated;
  report["highpass_cutoff"] = cutoff ? json(*cutoff) : json(nullptr);
  report["edof"] = fit.edof;
  write_json_file(dir / "glm.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// rsa

json rsa_defaults() {
  json j;
  j["betas"] = "";
  j["labels"] = "";
  j["mask"] = nullptr;
  j["bcov"] = nullptr;
  j["confounder_sets"] = {"bcov"};
  j["searchlight"] = {{"radius_mm", 8.0}, {"min_voxels", 27}};
  j["offset"] = 1;
  j["method"] = "pearson";
  j["brain_similarity"] = "sscp";
  j["out_dir"] = "parsa-rsa";
  j["threads"] = 0;
  return j;
}

int cmd_rsa(const json& config) {
  const std::string betas_path = config.at("betas").get<std::string>();
  if (betas_path.empty()) throw parsa::ConfigError("config: 'betas' must name a 4D NIfTI file");
  const std::string labels_path = config.at("labels").get<std::string>();
  if (labels_path.empty()) throw parsa::ConfigError("config: 'labels' must name a CSV file");

  const parsa::VolumeData beta_vol = parsa::read_volume(betas_path);
  const int q = beta_vol.nt;
  if (q < 2) throw parsa::ConfigError(betas_path + ": expected one frame per stimulus");
  const std::vector<int> labels = read_labels_csv(labels_path);
  if (static_cast<int>(labels.size()) != q)
    throw parsa::ConfigError("labels file has " + std::to_string(labels.size()) +
                             " rows, betas have " + std::to_string(q) + " frames");

  parsa::Mask mask;
  if (const auto mask_path = optional_string(config, "mask")) {
    const parsa::VolumeData mask_vol = parsa::read_volume(*mask_path);
    if (!(mask_vol.geom == beta_vol.geom))
      throw parsa::ConfigError("mask geometry does not match the beta geometry");
    mask = parsa::mask_from_volume(mask_vol);
  } else {
    // default mask: voxels whose coefficients are finite in every frame
    std::vector<std::uint8_t> included(static_cast<std::size_t>(beta_vol.geom.size()), 1);
    for (std::int64_t v = 0; v < beta_vol.geom.size(); ++v)
      for (int t = 0; t < q; ++t)
        if (!std::isfinite(
                beta_vol.values[static_cast<std::size_t>(v + beta_vol.geom.size() * t)])) {
          included[static_cast<std::size_t>(v)] = 0;
          break;
        }
    mask = parsa::finalize_mask(beta_vol.geom, std::move(included));
  }
  if (mask.count() == 0) throw parsa::NumericError("mask is empty");

  parsa::BetaVolume betas;
  betas.mask = mask;
  betas.betas.resize(q, mask.count());
  for (int m = 0; m < mask.count(); ++m)
    for (int t = 0; t < q; ++t)
      betas.betas(t, m) = beta_vol.values[static_cast<std::size_t>(
          mask.voxels[static_cast<std::size_t>(m)] + beta_vol.geom.size() * t)];

  const auto sets = confounder_sets_from_config(config);
  bool need_bcov = false, need_svar = false, need_bb = false;
  for (const auto& set : sets)
    for (parsa::SimilarityKind k : set) {
      need_bcov = need_bcov || k == parsa::SimilarityKind::confounder_bcov;
      need_svar = need_svar || k == parsa::SimilarityKind::confounder_svar;
      need_bb = need_bb || k == parsa::SimilarityKind::confounder_bb;
    }

  parsa::SimilarityMatrix bcov, svar, bb;
  if (need_bcov) {
    const auto bcov_path = optional_string(config, "bcov");
    if (!bcov_path)
      throw parsa::ConfigError("config: confounder 'bcov' requested but no 'bcov' CSV given");
    bcov = {parsa::read_matrix_csv(*bcov_path), parsa::SimilarityKind::confounder_bcov};
    if (bcov.q() != q || bcov.values.cols() != q)
      throw parsa::ConfigError("bcov matrix must be q x q with q = " + std::to_string(q));
  }
  if (need_svar) svar = parsa::volume_svar(betas.betas);
  if (need_bb) bb = parsa::volume_bb(betas.betas);

  const parsa::SimilarityMatrix model = parsa::stimulus_similarity(labels);
  const parsa::VectorizationRule rule{config.at("offset").get<int>()};
  const parsa::CorrMethod method = method_from_string(config.at("method").get<std::string>());
  const parsa::BrainSimilarity brain =
      brain_from_string(config.at("brain_similarity").get<std::string>());
  const parsa::SearchlightSpec spec = searchlight_from_config(config.at("searchlight"));
  const int threads = config.at("threads").get<int>();

  std::vector<parsa::RsaAnalysis> analyses;
  for (const auto& set : sets) {
    parsa::RsaAnalysis a;
    a.model = model;
    a.method = method;
    for (parsa::SimilarityKind k : set) {
      if (k == parsa::SimilarityKind::confounder_bcov) a.confounders.push_back(bcov);
      if (k == parsa::SimilarityKind::confounder_svar) a.confounders.push_back(svar);
      if (k == parsa::SimilarityKind::confounder_bb) a.confounders.push_back(bb);
    }
    analyses.push_back(std::move(a));
  }

  const auto results =
      parsa::searchlight_rsa_multi(betas, spec, analyses, rule, brain, threads);

  const fs::path dir = prepare_out_dir(config, "rsa");
  parsa::write_matrix_csv((dir / "model.csv").string(), model.values);
  if (need_bcov) parsa::write_matrix_csv((dir / "confounder_bcov.csv").string(), bcov.values);
  if (need_svar) parsa::write_matrix_csv((dir / "confounder_svar.csv").string(), svar.values);
  if (need_bb) parsa::write_matrix_csv((dir / "confounder_bb.csv").string(), bb.values);
  json diagnostics;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const std::string name = parsa::confounder_set_name(sets[s]);
    parsa::write_volume((dir / ("rsa_" + name + ".nii")).string(), map_to_volume(results[s].map));
    json sidecar = map_stats_json(results[s].map, results[s].stats);
    sidecar["confounders"] = json::array();
    for (parsa::SimilarityKind k : sets[s]) sidecar["confounders"].push_back(parsa::to_string(k));
    sidecar["offset"] = rule.offset;
    sidecar["n_pairs"] = parsa::vectorized_length(q, rule);
    sidecar["method"] = parsa::to_string(method);
    sidecar["brain_similarity"] = parsa::to_string(brain);
    write_json_file(dir / ("rsa_" + name + ".json"), sidecar);
    diagnostics[name] = sidecar;
  }
  write_json_file(dir / "diagnostics.json", diagnostics);
  return 0;
}

// ---------------------------------------------------------------------------
// group

json group_defaults() {
  json j;
  j["maps"] = json::array();
  j["fwhm_mm"] = 4.0;
  j["n_perm"] = 2000;
  j["alpha"] = 0.05;
  j["seed"] = 1;
  j["z_transform"] = false;
  j["out_dir"] = "parsa-group";
  j["threads"] = 0;
  return j;
}

int cmd_group(const json& config) {
  const auto paths = config.at("maps").get<std::vector<std::string>>();
  if (paths.size() < 3) throw parsa::ConfigError("config: 'maps' needs at least 3 subject maps");

  std::vector<parsa::RsaMap> maps;
  maps.reserve(paths.size());
  for (const auto& path : paths) {
    parsa::RsaMap map = volume_to_map(parsa::read_volume(path), path);
    if (!maps.empty() && !(map.geom == maps.front().geom))
      throw parsa::ConfigError(path + ": geometry differs from the first subject map");
    maps.push_back(std::move(map));
  }

  if (config.at("z_transform").get<bool>()) {
    for (auto& map : maps)
      for (double& v : map.values)
        if (!std::isnan(v)) v = std::atanh(std::clamp(v, -0.999999, 0.999999));
  }

  const double fwhm = require_number(config, "fwhm_mm");
  for (auto& map : maps) map = parsa::smooth_gaussian(map, fwhm);

  const parsa::GroupResult result = parsa::permutation_maxt(
      maps, config.at("n_perm").get<int>(), config.at("alpha").get<double>(),
      config.at("seed").get<std::uint64_t>(), config.at("threads").get<int>());

  const fs::path dir = prepare_out_dir(config, "group");
  parsa::VolumeData tvol;
  tvol.geom = result.geom;
  tvol.nt = 1;
  tvol.values = result.t;
  parsa::write_volume((dir / "tmap.nii").string(), tvol);

  parsa::VolumeData rejvol = parsa::make_volume(result.geom);
  std::int64_t n_rejected = 0;
  for (std::size_t v = 0; v < result.rejected.size(); ++v) {
    rejvol.values[v] = result.rejected[v];
    n_rejected += result.rejected[v];
  }
  parsa::write_volume((dir / "rejected.nii").string(), rejvol);

  parsa::CsvWriter maxt((dir / "maxt.csv").string(), {"maxt"});
  for (double m : result.maxt) maxt.row({parsa::format_full(m)});
  maxt.close();

  std::int64_t n_tested = 0;
  for (double t : result.t)
    if (!std::isnan(t)) ++n_tested;
  json report;
  report["df"] = result.df;
  report["corrected_threshold"] = result.corrected_threshold;
  report["alpha"] = config.at("alpha").get<double>();
  report["n_perm"] = config.at("n_perm").get<int>();
  report["n_voxels_tested"] = n_tested;
  report["n_rejected"] = n_rejected;
  write_json_file(dir / "group.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// perm-labels

json perm_labels_defaults() {
  json j;
  j["events"] = nullptr;  // path; null uses the built-in block design
  j["tr"] = nullptr;      // required with 'events'
  j["n_scans"] = nullptr;
  j["design"] = simulate_defaults()["design"];
  j["hrf"] = default_hrf_config();
  j["patterns"] = {"A", "B"};    // built-in design mode
  j["label_files"] = json::array();  // custom label CSVs
  j["ar1_rho"] = 0.0;
  j["highpass_cutoff"] = nullptr;
  j["n_perm"] = 2000;
  j["seed"] = 1;
  j["out_dir"] = "parsa-permlabels";
  return j;
}

int cmd_perm_labels(const json& config) {
  const parsa::HrfParams hrf = hrf_from_config(config.at("hrf"));
  parsa::EventTable events;
  std::vector<std::vector<int>> patterns;
  std::vector<std::string> pattern_names;

  if (const auto events_path = optional_string(config, "events")) {
    const double tr = require_number(config, "tr");
    const double n_scans = require_number(config, "n_scans");
    events = read_events_csv(*events_path, static_cast<int>(n_scans), tr);
    for (const auto& entry : config.at("label_files")) {
      const std::string path = entry.get<std::string>();
      patterns.push_back(read_labels_csv(path));
      pattern_names.push_back(fs::path(path).stem().string());
    }
    if (patterns.empty())
      throw parsa::ConfigError("config: 'label_files' must list at least one CSV");
  } else {
    const parsa::Fig1Design design = design_from_config(config.at("design"));
    events = parsa::make_fig1_events(design);
    for (const auto& entry : config.at("patterns")) {
      const parsa::LabelPattern p = parsa::make_fig1_pattern(entry.get<std::string>(), design);
      patterns.push_back(p.labels);
      pattern_names.push_back(p.name);
    }
  }

  const parsa::NoiseModel noise =
      parsa::make_noise_model(events.n_scans, events.tr, config.at("ar1_rho").get<double>(),
                              optional_number(config, "highpass_cutoff"));
  const parsa::LabelPermutationResult result = parsa::label_permutation_diagnostic(
      events, hrf, noise, patterns, config.at("n_perm").get<int>(),
      config.at("seed").get<std::uint64_t>());

  const fs::path dir = prepare_out_dir(config, "perm-labels");
  parsa::CsvWriter dist((dir / "distribution.csv").string(), {"r"});
  for (const auto& r : result.permuted)
    if (r) dist.row({parsa::format_full(*r)});
  dist.close();

  json report;
  report["n_permutations"] = result.permuted.size();
  report["n_defined"] = result.n_defined();
  report["n_resampled"] = result.n_resampled;
  report["observed"] = json::object();
  for (std::size_t p = 0; p < patterns.size(); ++p)
    report["observed"][pattern_names[p]] =
        result.observed[p] ? json(*result.observed[p]) : json(nullptr);
  write_json_file(dir / "observed.json", report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"searchlight RSA with partial-correlation bias adjustment"};
  app.require_subcommand(1);

  struct SubArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
  };

  auto add_common = [](CLI::App* sub, SubArgs& args) {
    sub->add_option("-c,--config", args.config_path, "JSON config file");
    sub->add_option("--set", args.sets, "override a config leaf, e.g. --set seed=7")
        ->take_all();
    sub->add_option("-o,--out-dir", args.out_dir, "output directory (overrides config)");
  };

  SubArgs sim_args, glm_args, rsa_args, group_args, perm_args;
  CLI::App* sim = app.add_subcommand("simulate", "white-noise bias simulation");
  add_common(sim, sim_args);
  CLI::App* glm = app.add_subcommand("glm-fit", "first-level model fit");
  add_common(glm, glm_args);
  CLI::App* rsa = app.add_subcommand("rsa", "searchlight RSA maps");
  add_common(rsa, rsa_args);
  CLI::App* group = app.add_subcommand("group", "second-level permutation test");
  add_common(group, group_args);
  CLI::App* perm = app.add_subcommand("perm-labels", "label permutation diagnostic");
  add_common(perm, perm_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return static_cast<int>(parsa::ErrorClass::config);
  }

  try {
    auto run = [](const json& defaults, const SubArgs& args, int (*fn)(const json&)) {
      json config = resolve_config(defaults, args.config_path, args.sets);
      if (!args.out_dir.empty()) config["out_dir"] = args.out_dir;
      return fn(config);
    };
    if (sim->parsed()) return run(simulate_defaults(), sim_args, cmd_simulate);
    if (glm->parsed()) return run(glm_defaults(), glm_args, cmd_glm_fit);
    if (rsa->parsed()) return run(rsa_defaults(), rsa_args, cmd_rsa);
    if (group->parsed()) return run(group_defaults(), group_args, cmd_group);
    if (perm->parsed()) return run(perm_labels_defaults(), perm_args, cmd_perm_labels);
  } catch (const parsa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
