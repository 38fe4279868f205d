#include "pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/png.hpp"
#include "core/tensor.hpp"
#include "descriptor/descriptor.hpp"
#include "dnr/train.hpp"
#include "embank/embank.hpp"
#include "spkm/spkm.hpp"
#include "stain/stain.hpp"
#include "survival/survival.hpp"
#include "synth/synth.hpp"

namespace dnr {

using nlohmann::json;

namespace fs = std::filesystem;

namespace {

json synth_defaults() {
  return json{{"n_patients", 40},
              {"slides_per_patient", 1},
              {"grid_rows", 16},
              {"grid_cols", 16},
              {"k_true", 4},
              {"flip_prob", 0.15},
              {"smoothing_sweeps", 3},
              {"feature_dim", 16},
              {"sigma", 0.05},
              {"beta_true", json::array()},
              {"censor_target", 0.2},
              {"baseline_median_days", 1000.0}};
}

json base_defaults() {
  // Flat keys; stages read what they need and echo everything, so a
  // manifest from any stage can reconfigure any other stage.
  return json{{"out_dir", "out"},
              {"seed", 0},
              {"k", 8},
              {"tau", 0.5},
              {"lambda", 1e-3},
              {"epochs_per_phase", 20},
              {"rounds", 3},
              {"k_neighbors", 5},
              {"neighborhood", 4},
              {"alpha", 0.05},
              {"brier_time", "median"},
              {"latent_dim", 8},
              {"learning_rate", 0.1},
              {"batch_size", 64},
              {"momentum", 0.5},
              {"max_iter", 100},
              {"groups", "none"},
              {"plot", false},
              {"stain_dir", ""},
              {"background_intensity", 255.0},
              {"od_threshold", 0.15},
              {"angle_percentile", 1.0},
              {"foreground_min_od", 0.07},
              {"patches", ""},
              {"features", ""},
              {"survival", ""},
              {"embeddings", ""},
              {"assignments", ""},
              {"descriptors", ""},
              {"model", ""},
              {"eta", ""},
              {"synth", synth_defaults()}};
}

json merge_strict(const json& defaults, const json& given,
                  const std::string& scope) {
  if (!given.is_object())
    throw InvalidInput("config: " + scope + " must be a JSON object");
  json out = defaults;
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key))
      throw InvalidInput("config: unknown key '" + scope + key + "'");
    if (key == "synth")
      out[key] = merge_strict(defaults.at("synth"), value, "synth.");
    else
      out[key] = value;
  }
  return out;
}

double get_number(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_number())
    throw InvalidInput("config: '" + key + "' must be a number");
  return v.get<double>();
}

int get_int(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_number_integer())
    throw InvalidInput("config: '" + key + "' must be an integer");
  return v.get<int>();
}

bool get_bool(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_boolean())
    throw InvalidInput("config: '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string get_string(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_string())
    throw InvalidInput("config: '" + key + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t get_seed(const json& cfg) {
  const json& v = cfg.at("seed");
  if (!v.is_number_unsigned() && !v.is_number_integer())
    throw InvalidInput("config: 'seed' must be a non-negative integer");
  if (v.is_number_integer() && v.get<std::int64_t>() < 0)
    throw InvalidInput("config: 'seed' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string out_path(const json& cfg, const std::string& name) {
  return get_string(cfg, "out_dir") + "/" + name;
}

// Input paths fall back to the standard file name under out_dir.
std::string in_path(const json& cfg, const std::string& key,
                    const std::string& default_name) {
  const std::string given = get_string(cfg, key);
  return given.empty() ? out_path(cfg, default_name) : given;
}

void note_input(json& inputs, const std::string& path) {
  inputs[path] = sha256_file(path);
}

void note_output(json& outputs, const json& cfg, const std::string& relname) {
  outputs[relname] = sha256_file(out_path(cfg, relname));
}

int parse_int_field(const std::string& text, const std::string& origin,
                    const std::string& field) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput(origin + ": field '" + field + "' has non-integer '" +
                       text + "'");
  }
}

struct PatchTable {
  std::vector<std::string> patch_id;
  std::vector<std::string> patient_id;
  std::vector<std::string> slide_id;
  std::vector<int> row;
  std::vector<int> col;

  std::size_t size() const { return patch_id.size(); }
};

PatchTable read_patches(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_patch = t.require_column("patch_id");
  const int c_patient = t.require_column("patient_id");
  const int c_slide = t.require_column("slide_id");
  const int c_row = t.require_column("row");
  const int c_col = t.require_column("col");

  PatchTable out;
  std::unordered_set<std::string> seen_patch;
  std::unordered_map<std::string, std::string> slide_owner;
  std::unordered_set<std::string> seen_cell;
  for (const auto& r : t.rows) {
    out.patch_id.push_back(r[c_patch]);
    out.patient_id.push_back(r[c_patient]);
    out.slide_id.push_back(r[c_slide]);
    out.row.push_back(parse_int_field(r[c_row], path, "row"));
    out.col.push_back(parse_int_field(r[c_col], path, "col"));

    if (!seen_patch.insert(r[c_patch]).second)
      throw InvalidInput(path + ": duplicate patch_id '" + r[c_patch] + "'");
    auto [it, fresh] = slide_owner.emplace(r[c_slide], r[c_patient]);
    if (!fresh && it->second != r[c_patient])
      throw InvalidInput(path + ": slide '" + r[c_slide] +
                         "' appears under two patients");
    const std::string cell =
        r[c_slide] + "\t" + r[c_row] + "\t" + r[c_col];
    if (!seen_cell.insert(cell).second)
      throw InvalidInput(path + ": duplicate grid cell for patch '" +
                         r[c_patch] + "'");
  }
  if (out.size() == 0) throw InvalidInput(path + ": no patches");
  return out;
}

std::vector<SurvivalRecord> read_survival(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_patient = t.require_column("patient_id");
  const int c_time = t.require_column("time");
  const int c_event = t.require_column("event");

  std::vector<SurvivalRecord> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    SurvivalRecord rec;
    rec.patient_id = t.rows[i][c_patient];
    rec.time = csv_double(t, i, c_time, path);
    rec.event = parse_int_field(t.rows[i][c_event], path, "event");
    if (!(rec.time > 0.0))
      throw InvalidInput(path + ": patient '" + rec.patient_id +
                         "' has non-positive time");
    if (rec.event != 0 && rec.event != 1)
      throw InvalidInput(path + ": patient '" + rec.patient_id +
                         "' has event outside {0,1}");
    if (!seen.insert(rec.patient_id).second)
      throw InvalidInput(path + ": duplicate patient_id '" + rec.patient_id +
                         "'");
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw InvalidInput(path + ": no records");
  return out;
}

struct DescriptorTable {
  std::vector<std::string> patient_id;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd x;
};

DescriptorTable read_descriptors(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_patient = t.require_column("patient_id");
  if (c_patient != 0)
    throw InvalidInput(path + ": 'patient_id' must be the first column");

  DescriptorTable out;
  out.feature_names.assign(t.header.begin() + 1, t.header.end());
  if (out.feature_names.empty())
    throw InvalidInput(path + ": no feature columns");
  out.x.resize(static_cast<Eigen::Index>(t.rows.size()),
               static_cast<Eigen::Index>(out.feature_names.size()));
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out.patient_id.push_back(t.rows[i][0]);
    if (!seen.insert(t.rows[i][0]).second)
      throw InvalidInput(path + ": duplicate patient_id '" + t.rows[i][0] +
                         "'");
    for (std::size_t j = 0; j < out.feature_names.size(); ++j)
      out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          csv_double(t, i, static_cast<int>(j) + 1, path);
  }
  if (out.patient_id.empty()) throw InvalidInput(path + ": no rows");
  return out;
}

// Records reordered to match the descriptor row order; the two files must
// cover exactly the same patients.
std::vector<SurvivalRecord> align_records(const DescriptorTable& desc,
                                          const std::string& desc_path,
                                          std::vector<SurvivalRecord> records,
                                          const std::string& surv_path) {
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < records.size(); ++i)
    where.emplace(records[i].patient_id, i);
  std::vector<SurvivalRecord> out;
  out.reserve(desc.patient_id.size());
  for (const auto& pid : desc.patient_id) {
    const auto it = where.find(pid);
    if (it == where.end())
      throw InvalidInput(surv_path + ": patient '" + pid + "' from " +
                         desc_path + " is missing");
    out.push_back(records[it->second]);
  }
  if (records.size() != desc.patient_id.size())
    throw InvalidInput(desc_path + ": patient set differs from " + surv_path);
  return out;
}

CsvTable make_table(std::vector<std::string> header) {
  CsvTable t;
  t.header = std::move(header);
  return t;
}

// Dense slide index per patch, by first appearance. Grid adjacency only
// joins patches on equal slide indices, so indices must be campaign-unique.
std::vector<GridPos> grid_positions(const PatchTable& patches) {
  std::unordered_map<std::string, int> slide_index;
  std::vector<GridPos> out(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto [it, fresh] = slide_index.emplace(
        patches.slide_id[i], static_cast<int>(slide_index.size()));
    out[i] = GridPos{it->second, patches.row[i], patches.col[i]};
  }
  return out;
}

Eigen::MatrixXd read_matrix(const std::string& path,
                            const std::string& what) {
  const Tensor t = read_tensor(path);
  if (t.dims.size() != 2)
    throw InvalidInput(path + ": expected a rank-2 tensor for " + what);
  return tensor_to_matrix(t);
}

// ---------------------------------------------------------------------------
// Stages. Each fills inputs/outputs (path -> sha256) and a report object.

void stage_synth(const json& cfg, json&, json& outputs, json& report) {
  const json& s = cfg.at("synth");
  SynthConfig sc;
  sc.n_patients = get_int(s, "n_patients");
  sc.slides_per_patient = get_int(s, "slides_per_patient");
  sc.grid_rows = get_int(s, "grid_rows");
  sc.grid_cols = get_int(s, "grid_cols");
  sc.k_true = get_int(s, "k_true");
  sc.flip_prob = get_number(s, "flip_prob");
  sc.smoothing_sweeps = get_int(s, "smoothing_sweeps");
  sc.feature_dim = get_int(s, "feature_dim");
  sc.sigma = get_number(s, "sigma");
  sc.censor_target = get_number(s, "censor_target");
  sc.baseline_median_days = get_number(s, "baseline_median_days");
  sc.seed = get_seed(cfg);
  const json& beta = s.at("beta_true");
  if (!beta.is_array())
    throw InvalidInput("config: 'synth.beta_true' must be an array");
  sc.beta_true.resize(static_cast<Eigen::Index>(beta.size()));
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (!beta[i].is_number())
      throw InvalidInput("config: 'synth.beta_true' must hold numbers");
    sc.beta_true[static_cast<Eigen::Index>(i)] = beta[i].get<double>();
  }

  const SynthCohort cohort = generate(sc);

  CsvTable patches =
      make_table({"patch_id", "patient_id", "slide_id", "row", "col"});
  CsvTable labels = make_table({"patch_id", "cluster"});
  Eigen::MatrixXd features(cohort.patches.size(), sc.feature_dim);
  for (std::size_t i = 0; i < cohort.patches.size(); ++i) {
    const SynthPatch& p = cohort.patches[i];
    patches.rows.push_back({p.patch_id, p.patient_id, p.slide_id,
                            std::to_string(p.row), std::to_string(p.col)});
    labels.rows.push_back({p.patch_id, std::to_string(p.cluster)});
    features.row(static_cast<Eigen::Index>(i)) = p.feature;
  }

  std::vector<std::string> desc_header{"patient_id"};
  for (const auto& name : descriptor_feature_names(sc.k_true))
    desc_header.push_back(name);
  CsvTable descriptors = make_table(std::move(desc_header));
  for (const auto& d : cohort.descriptors) {
    std::vector<std::string> row{d.patient_id};
    const Eigen::VectorXd h = flatten(d);
    for (Eigen::Index j = 0; j < h.size(); ++j)
      row.push_back(format_double(h[j]));
    descriptors.rows.push_back(std::move(row));
  }

  CsvTable survival = make_table({"patient_id", "time", "event"});
  for (const auto& r : cohort.records)
    survival.rows.push_back(
        {r.patient_id, format_double(r.time), std::to_string(r.event)});

  CsvTable beta_out = make_table({"feature", "beta"});
  const auto names = descriptor_feature_names(sc.k_true);
  for (Eigen::Index j = 0; j < cohort.beta_true.size(); ++j)
    beta_out.rows.push_back(
        {names[static_cast<std::size_t>(j)], format_double(cohort.beta_true[j])});

  write_csv(out_path(cfg, "patches.csv"), patches);
  write_tensor(out_path(cfg, "features.dnrb"), tensor_from_matrix(features));
  write_csv(out_path(cfg, "labels_true.csv"), labels);
  write_csv(out_path(cfg, "descriptors_true.csv"), descriptors);
  write_csv(out_path(cfg, "survival.csv"), survival);
  write_csv(out_path(cfg, "beta_true.csv"), beta_out);
  for (const char* name : {"patches.csv", "features.dnrb", "labels_true.csv",
                           "descriptors_true.csv", "survival.csv",
                           "beta_true.csv"})
    note_output(outputs, cfg, name);

  report["n_patients"] = sc.n_patients;
  report["n_patches"] = cohort.patches.size();
  report["censor_rate_achieved"] = cohort.censor_rate_achieved;
  report["censor_rate_param"] = cohort.censor_rate_param;
  report["baseline_rate"] = cohort.baseline_rate;
}

void stage_stain(const json& cfg, json& inputs, json& outputs, json& report) {
  const std::string dir = get_string(cfg, "stain_dir");
  if (dir.empty())
    throw InvalidInput("stain: 'stain_dir' must point at a directory of PNGs");
  if (!fs::is_directory(dir))
    throw InvalidInput("stain: '" + dir + "' is not a directory");
  const double background = get_number(cfg, "background_intensity");
  const double od_threshold = get_number(cfg, "od_threshold");
  const double angle_percentile = get_number(cfg, "angle_percentile");
  const double min_od = get_number(cfg, "foreground_min_od");

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw InvalidInput("stain: no .png files in '" + dir + "'");

  fs::create_directories(out_path(cfg, "he"));
  CsvTable stains = make_table({"patch_id", "foreground", "h_r", "h_g", "h_b",
                                "e_r", "e_g", "e_b"});
  int n_foreground = 0;
  std::vector<std::string> tensor_names;
  for (const auto& file : files) {
    note_input(inputs, file);
    const RgbPatch patch = read_png_rgb8(file);
    const std::string stem = fs::path(file).stem().string();
    const Eigen::MatrixX3d od = rgb_to_od(patch, background);

    bool foreground = od.mean() > min_od;
    StainMatrix stains_est;
    HePatch he;
    if (foreground) {
      try {
        stains_est = estimate_stain_matrix(od, od_threshold, angle_percentile);
        he = deconvolve(od, stains_est, patch.width, patch.height);
      } catch (const DegenerateTissue&) {
        foreground = false;  // unusable OD cloud, same as background
      }
    }

    if (foreground) {
      ++n_foreground;
      // Planar (h then e) rank-3 tensor.
      Tensor t;
      t.dims = {2, static_cast<std::uint32_t>(patch.height),
                static_cast<std::uint32_t>(patch.width)};
      const std::size_t n_px =
          static_cast<std::size_t>(patch.width) * patch.height;
      t.data.resize(2 * n_px);
      for (std::size_t i = 0; i < n_px; ++i) {
        t.data[i] = static_cast<float>(he.channels[2 * i]);
        t.data[n_px + i] = static_cast<float>(he.channels[2 * i + 1]);
      }
      const std::string rel = "he/" + stem + ".dnrb";
      write_tensor(out_path(cfg, rel), t);
      tensor_names.push_back(rel);
      stains.rows.push_back({stem, "1", format_double(stains_est.h[0]),
                             format_double(stains_est.h[1]),
                             format_double(stains_est.h[2]),
                             format_double(stains_est.e[0]),
                             format_double(stains_est.e[1]),
                             format_double(stains_est.e[2])});
    } else {
      stains.rows.push_back({stem, "0", "0", "0", "0", "0", "0", "0"});
    }
  }

  write_csv(out_path(cfg, "stains.csv"), stains);
  note_output(outputs, cfg, "stains.csv");
  for (const auto& rel : tensor_names) note_output(outputs, cfg, rel);

  report["n_patches"] = files.size();
  report["n_foreground"] = n_foreground;
}

void stage_train(const json& cfg, json& inputs, json& outputs, json& report) {
  const std::string features_path = in_path(cfg, "features", "features.dnrb");
  const std::string patches_path = in_path(cfg, "patches", "patches.csv");
  note_input(inputs, features_path);
  note_input(inputs, patches_path);

  const Eigen::MatrixXd features = read_matrix(features_path, "features");
  const PatchTable patches = read_patches(patches_path);
  if (static_cast<std::size_t>(features.rows()) != patches.size())
    throw InvalidInput(features_path + ": row count " +
                       std::to_string(features.rows()) + " does not match " +
                       patches_path);

  const int connectivity = get_int(cfg, "neighborhood");
  const auto spatial =
      build_spatial_neighbors(grid_positions(patches), connectivity);

  TrainConfig tc;
  tc.latent_dim = get_int(cfg, "latent_dim");
  tc.epochs_per_phase = get_int(cfg, "epochs_per_phase");
  tc.rounds = get_int(cfg, "rounds");
  tc.lambda = get_number(cfg, "lambda");
  tc.tau = get_number(cfg, "tau");
  tc.momentum = get_number(cfg, "momentum");
  tc.learning_rate = get_number(cfg, "learning_rate");
  tc.batch_size = get_int(cfg, "batch_size");
  tc.k_neighbors = get_int(cfg, "k_neighbors");
  tc.seed = get_seed(cfg);

  const TrainResult result = train(features, features, spatial, tc);

  write_tensor(out_path(cfg, "embeddings.dnrb"),
               tensor_from_matrix(result.bank.vectors));
  write_tensor(out_path(cfg, "codec_phi.dnrb"),
               tensor_from_matrix(result.codec.phi));
  write_tensor(out_path(cfg, "codec_psi.dnrb"),
               tensor_from_matrix(result.codec.psi));

  CsvTable trace =
      make_table({"epoch", "phase", "mse", "divide", "rule", "total"});
  for (const auto& e : result.trace)
    trace.rows.push_back({std::to_string(e.epoch), e.phase,
                          format_double(e.mse), format_double(e.divide),
                          format_double(e.rule), format_double(e.total)});
  write_csv(out_path(cfg, "loss_trace.csv"), trace);

  for (const char* name : {"embeddings.dnrb", "codec_phi.dnrb",
                           "codec_psi.dnrb", "loss_trace.csv"})
    note_output(outputs, cfg, name);

  report["epochs"] = result.trace.size();
  report["stalled_updates"] = result.stalled_updates;
  if (!result.trace.empty()) {
    report["final_mse"] = result.trace.back().mse;
    report["final_total"] = result.trace.back().total;
    report["final_within_s_cosine"] = result.trace.back().within_s_cosine;
  }
}

void stage_cluster(const json& cfg, json& inputs, json& outputs,
                   json& report) {
  const std::string emb_path = in_path(cfg, "embeddings", "embeddings.dnrb");
  const std::string patches_path = in_path(cfg, "patches", "patches.csv");
  note_input(inputs, emb_path);
  note_input(inputs, patches_path);

  const Eigen::MatrixXd embeddings = read_matrix(emb_path, "embeddings");
  const PatchTable patches = read_patches(patches_path);
  if (static_cast<std::size_t>(embeddings.rows()) != patches.size())
    throw InvalidInput(emb_path + ": row count does not match " +
                       patches_path);

  const int k = get_int(cfg, "k");
  const ClusterModel model =
      fit_spkm(embeddings, k, get_seed(cfg), get_int(cfg, "max_iter"));

  write_tensor(out_path(cfg, "centroids.dnrb"),
               tensor_from_matrix(model.centroids));
  CsvTable assignments = make_table({"patch_id", "cluster"});
  for (std::size_t i = 0; i < patches.size(); ++i)
    assignments.rows.push_back(
        {patches.patch_id[i], std::to_string(model.assignments[i])});
  write_csv(out_path(cfg, "assignments.csv"), assignments);
  note_output(outputs, cfg, "centroids.dnrb");
  note_output(outputs, cfg, "assignments.csv");

  report["k"] = k;
  report["inertia"] = model.inertia;
  report["iterations"] = model.iterations_run;
}

void stage_describe(const json& cfg, json& inputs, json& outputs,
                    json& report) {
  const std::string assign_path =
      in_path(cfg, "assignments", "assignments.csv");
  const std::string patches_path = in_path(cfg, "patches", "patches.csv");
  note_input(inputs, assign_path);
  note_input(inputs, patches_path);

  const PatchTable patches = read_patches(patches_path);
  const CsvTable assign_csv = read_csv(assign_path);
  const int c_patch = assign_csv.require_column("patch_id");
  const int c_cluster = assign_csv.require_column("cluster");
  std::unordered_map<std::string, int> cluster_of;
  for (const auto& r : assign_csv.rows)
    if (!cluster_of
             .emplace(r[c_patch],
                      parse_int_field(r[c_cluster], assign_path, "cluster"))
             .second)
      throw InvalidInput(assign_path + ": duplicate patch_id '" + r[c_patch] +
                         "'");
  if (cluster_of.size() != patches.size())
    throw InvalidInput(assign_path + ": patch set differs from " +
                       patches_path);

  const int k = get_int(cfg, "k");
  const int connectivity = get_int(cfg, "neighborhood");

  // Patients in order of first appearance; slide indices dense per patient.
  std::vector<std::string> patient_order;
  std::map<std::string, std::vector<GridPatch>> cells;
  std::map<std::string, std::unordered_map<std::string, int>> slide_index;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const std::string& pid = patches.patient_id[i];
    if (cells.find(pid) == cells.end()) patient_order.push_back(pid);
    auto& slides = slide_index[pid];
    const auto [it, fresh] =
        slides.emplace(patches.slide_id[i], static_cast<int>(slides.size()));
    const auto found = cluster_of.find(patches.patch_id[i]);
    if (found == cluster_of.end())
      throw InvalidInput(assign_path + ": patch '" + patches.patch_id[i] +
                         "' has no cluster");
    cells[pid].push_back(
        GridPatch{it->second, patches.row[i], patches.col[i], found->second});
  }

  std::vector<std::string> header{"patient_id"};
  for (const auto& name : descriptor_feature_names(k)) header.push_back(name);
  CsvTable descriptors = make_table(std::move(header));
  for (const auto& pid : patient_order) {
    const PatientDescriptor d =
        build_descriptor(pid, cells.at(pid), k, connectivity);
    std::vector<std::string> row{pid};
    const Eigen::VectorXd h = flatten(d);
    for (Eigen::Index j = 0; j < h.size(); ++j)
      row.push_back(format_double(h[j]));
    descriptors.rows.push_back(std::move(row));
  }
  write_csv(out_path(cfg, "descriptors.csv"), descriptors);
  note_output(outputs, cfg, "descriptors.csv");

  report["n_patients"] = patient_order.size();
  report["k"] = k;
  report["n_features"] = k + k * k;
}

void stage_select(const json& cfg, json& inputs, json& outputs, json& report) {
  const std::string desc_path = in_path(cfg, "descriptors", "descriptors.csv");
  const std::string surv_path = in_path(cfg, "survival", "survival.csv");
  note_input(inputs, desc_path);
  note_input(inputs, surv_path);

  const DescriptorTable desc = read_descriptors(desc_path);
  const std::vector<SurvivalRecord> records = align_records(
      desc, desc_path, read_survival(surv_path), surv_path);

  const double alpha = get_number(cfg, "alpha");
  const ForwardSelection sel =
      forward_select(desc.x, records, desc.feature_names, alpha);

  CsvTable trace = make_table({"step", "candidate", "column", "lr_statistic",
                               "p_value", "accepted", "skipped"});
  for (std::size_t i = 0; i < sel.trace.steps.size(); ++i) {
    const SelectionStep& s = sel.trace.steps[i];
    std::string skipped;
    for (const auto& name : s.skipped) {
      if (!skipped.empty()) skipped += ";";
      skipped += name;
    }
    trace.rows.push_back({std::to_string(i), s.candidate,
                          std::to_string(s.column),
                          format_double(s.lr_statistic),
                          format_double(s.p_value),
                          s.accepted ? "1" : "0", skipped});
  }
  write_csv(out_path(cfg, "selection_trace.csv"), trace);

  CsvTable model = make_table({"feature", "beta", "se", "hazard_ratio",
                               "ci_low", "ci_high", "p_value"});
  if (!sel.trace.selected.empty()) {
    const Eigen::MatrixXd info_inv = sel.fit.observed_information.inverse();
    for (Eigen::Index j = 0; j < sel.fit.beta.size(); ++j) {
      const double se = std::sqrt(info_inv(j, j));
      const HazardRow hr = wald_row(sel.fit.beta[j], se);
      model.rows.push_back({sel.fit.covariate_names[static_cast<std::size_t>(j)],
                            format_double(sel.fit.beta[j]), format_double(se),
                            format_double(hr.hazard_ratio),
                            format_double(hr.ci_low), format_double(hr.ci_high),
                            format_double(hr.p_value)});
    }
  }
  write_csv(out_path(cfg, "model.csv"), model);
  note_output(outputs, cfg, "selection_trace.csv");
  note_output(outputs, cfg, "model.csv");

  report["n_selected"] = sel.trace.selected.size();
  report["selected"] = sel.trace.selected_names;
  report["steps"] = sel.trace.steps.size();
  if (!sel.trace.selected.empty())
    report["log_likelihood"] = sel.fit.log_likelihood;
}

void stage_evaluate(const json& cfg, json& inputs, json& outputs,
                    json& report) {
  const std::string desc_path = in_path(cfg, "descriptors", "descriptors.csv");
  const std::string surv_path = in_path(cfg, "survival", "survival.csv");
  const std::string model_path = in_path(cfg, "model", "model.csv");
  note_input(inputs, desc_path);
  note_input(inputs, surv_path);
  note_input(inputs, model_path);

  const DescriptorTable desc = read_descriptors(desc_path);
  const std::vector<SurvivalRecord> records = align_records(
      desc, desc_path, read_survival(surv_path), surv_path);

  const CsvTable model = read_csv(model_path);
  const int c_feature = model.require_column("feature");
  std::vector<std::string> selected;
  for (const auto& r : model.rows) selected.push_back(r[c_feature]);

  const std::size_t n = records.size();
  LoocvResult lo;
  if (selected.empty()) {
    lo.eta.assign(n, 0.0);
    lo.valid.assign(n, 1);
    lo.failed = 0;
  } else {
    Eigen::MatrixXd x(desc.x.rows(), static_cast<Eigen::Index>(selected.size()));
    for (std::size_t j = 0; j < selected.size(); ++j) {
      const auto it = std::find(desc.feature_names.begin(),
                                desc.feature_names.end(), selected[j]);
      if (it == desc.feature_names.end())
        throw InvalidInput(model_path + ": feature '" + selected[j] +
                           "' not present in " + desc_path);
      x.col(static_cast<Eigen::Index>(j)) =
          desc.x.col(it - desc.feature_names.begin());
    }
    lo = loocv_linear_predictors(x, records);
  }

  CsvTable eta = make_table({"patient_id", "eta", "valid"});
  for (std::size_t i = 0; i < n; ++i)
    eta.rows.push_back({records[i].patient_id, format_double(lo.eta[i]),
                        lo.valid[i] ? "1" : "0"});
  write_csv(out_path(cfg, "eta.csv"), eta);

  const CIndexResult ci = c_index(lo.eta, records, lo.valid);

  // Brier on the valid rows only; invalid eta would poison the weights.
  std::vector<double> eta_valid;
  std::vector<SurvivalRecord> rec_valid;
  for (std::size_t i = 0; i < n; ++i) {
    if (!lo.valid[i]) continue;
    eta_valid.push_back(lo.eta[i]);
    rec_valid.push_back(records[i]);
  }
  const json& bt = cfg.at("brier_time");
  double t_eval = 0.0;
  if (bt.is_string()) {
    if (bt.get<std::string>() != "median")
      throw InvalidInput("config: 'brier_time' must be a number or 'median'");
  } else if (bt.is_number()) {
    t_eval = bt.get<double>();
    if (!(t_eval > 0.0))
      throw InvalidInput("config: numeric 'brier_time' must be > 0");
  } else {
    throw InvalidInput("config: 'brier_time' must be a number or 'median'");
  }
  const BrierResult brier = brier_score(eta_valid, rec_valid, t_eval);

  int events = 0;
  for (const auto& r : records) events += r.event;

  std::string selected_joined;
  for (const auto& s : selected) {
    if (!selected_joined.empty()) selected_joined += ";";
    selected_joined += s;
  }

  CsvTable metrics = make_table({"metric", "value"});
  auto put = [&metrics](const std::string& key, const std::string& value) {
    metrics.rows.push_back({key, value});
  };
  put("n_patients", std::to_string(n));
  put("n_events", std::to_string(events));
  put("n_selected", std::to_string(selected.size()));
  put("selected", selected_joined);
  put("loocv_failed", std::to_string(lo.failed));
  put("c_index", format_double(ci.value));
  put("c_comparable", std::to_string(ci.comparable));
  put("c_concordant", format_double(ci.concordant));
  put("c_tied", format_double(ci.tied));
  put("brier", format_double(brier.score));
  put("brier_t_eval", format_double(brier.t_eval));
  write_csv(out_path(cfg, "metrics.csv"), metrics);

  std::string text;
  text += "patients: " + std::to_string(n) + " (" + std::to_string(events) +
          " events)\n";
  text += "selected features: " +
          (selected_joined.empty() ? std::string("(none)") : selected_joined) +
          "\n";
  text += "loocv failed fits: " + std::to_string(lo.failed) + "\n";
  text += "loocv c-index: " + format_double(ci.value) + " over " +
          std::to_string(ci.comparable) + " comparable pairs\n";
  text += "ipcw brier at t=" + format_double(brier.t_eval) + ": " +
          format_double(brier.score) + "\n";
  atomic_write_file(out_path(cfg, "metrics.txt"), text);

  for (const char* name : {"eta.csv", "metrics.csv", "metrics.txt"})
    note_output(outputs, cfg, name);

  report["n_patients"] = n;
  report["n_events"] = events;
  report["selected"] = selected;
  report["loocv_failed"] = lo.failed;
  report["c_index"] = ci.value;
  report["c_comparable"] = ci.comparable;
  report["brier"] = brier.score;
  report["brier_t_eval"] = brier.t_eval;
}

std::string svg_km_plot(const std::vector<std::string>& groups,
                        const std::vector<KmCurve>& curves) {
  const double width = 640, height = 420;
  const double left = 60, right = 20, top = 20, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  double t_max = 1.0;
  for (const auto& c : curves)
    for (const auto& p : c.points) t_max = std::max(t_max, p.time);

  auto fx = [&](double t) { return left + plot_w * t / t_max; };
  auto fy = [&](double s) { return top + plot_h * (1.0 - s); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return std::string(buf);
  };

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
         "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) +
         " " + num(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double s = 0.25 * i;
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(fy(s)) + "\" x2=\"" +
           num(left + plot_w) + "\" y2=\"" + num(fy(s)) +
           "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + num(left - 8) + "\" y=\"" + num(fy(s) + 4) +
           "\" text-anchor=\"end\" font-size=\"12\">" + num(s) + "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double t = t_max * i / 5.0;
    svg += "<text x=\"" + num(fx(t)) + "\" y=\"" + num(top + plot_h + 18) +
           "\" text-anchor=\"middle\" font-size=\"12\">" + num(t) +
           "</text>\n";
  }
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" +
         num(left) + "\" y2=\"" + num(top + plot_h) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + plot_h) +
         "\" x2=\"" + num(left + plot_w) + "\" y2=\"" + num(top + plot_h) +
         "\" stroke=\"black\"/>\n";

  for (std::size_t g = 0; g < curves.size(); ++g) {
    std::string path = "M " + num(fx(0)) + " " + num(fy(1.0));
    double s_prev = 1.0;
    for (const auto& p : curves[g].points) {
      path += " H " + num(fx(p.time));
      path += " V " + num(fy(p.survival));
      s_prev = p.survival;
    }
    path += " H " + num(left + plot_w);
    svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" +
           colors[g % 4] + "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + num(left + plot_w - 8) + "\" y=\"" +
           num(top + 16 + 16 * static_cast<double>(g)) +
           "\" text-anchor=\"end\" font-size=\"12\" fill=\"" + colors[g % 4] +
           "\">" + groups[g] + "</text>\n";
    (void)s_prev;
  }
  svg += "<text x=\"" + num(left + plot_w / 2) + "\" y=\"" +
         num(height - 12) +
         "\" text-anchor=\"middle\" font-size=\"13\">time (days)</text>\n";
  svg += "</svg>\n";
  return svg;
}

void stage_km(const json& cfg, json& inputs, json& outputs, json& report) {
  const std::string surv_path = in_path(cfg, "survival", "survival.csv");
  note_input(inputs, surv_path);
  std::vector<SurvivalRecord> records = read_survival(surv_path);

  const std::string groups_mode = get_string(cfg, "groups");
  std::vector<std::string> group_names;
  std::vector<int> group_of(records.size(), 0);
  int excluded_invalid = 0;

  if (groups_mode == "none") {
    group_names = {"all"};
  } else if (groups_mode == "median-split") {
    const std::string eta_path = in_path(cfg, "eta", "eta.csv");
    note_input(inputs, eta_path);
    const CsvTable eta_csv = read_csv(eta_path);
    const int c_patient = eta_csv.require_column("patient_id");
    const int c_eta = eta_csv.require_column("eta");
    const int c_valid = eta_csv.require_column("valid");
    std::unordered_map<std::string, double> eta_of;
    for (std::size_t i = 0; i < eta_csv.rows.size(); ++i) {
      const bool valid = parse_int_field(eta_csv.rows[i][c_valid], eta_path,
                                         "valid") != 0;
      if (valid)
        eta_of[eta_csv.rows[i][c_patient]] =
            csv_double(eta_csv, i, c_eta, eta_path);
    }

    std::vector<SurvivalRecord> kept;
    std::vector<double> etas;
    for (const auto& r : records) {
      const auto it = eta_of.find(r.patient_id);
      if (it == eta_of.end()) {
        ++excluded_invalid;
        continue;
      }
      kept.push_back(r);
      etas.push_back(it->second);
    }
    if (kept.size() < 2)
      throw InvalidInput(eta_path + ": fewer than 2 patients with valid eta");
    records = std::move(kept);

    std::vector<double> sorted = etas;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median = m % 2 == 1
                              ? sorted[m / 2]
                              : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    group_names = {"low", "high"};
    group_of.assign(records.size(), 0);
    for (std::size_t i = 0; i < records.size(); ++i)
      group_of[i] = etas[i] > median ? 1 : 0;
    const auto n_high = std::count(group_of.begin(), group_of.end(), 1);
    if (n_high == 0 || n_high == static_cast<long>(records.size()))
      throw InvalidInput("km: median split produced an empty group");
  } else {
    throw InvalidInput("config: 'groups' must be 'none' or 'median-split'");
  }

  std::vector<KmCurve> curves;
  CsvTable km = make_table({"time", "survival", "at_risk", "group"});
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    std::vector<SurvivalRecord> members;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (group_of[i] == static_cast<int>(g)) members.push_back(records[i]);
    curves.push_back(kaplan_meier(members));
    for (const auto& p : curves.back().points)
      km.rows.push_back({format_double(p.time), format_double(p.survival),
                         std::to_string(p.at_risk), group_names[g]});
  }
  write_csv(out_path(cfg, "km.csv"), km);
  note_output(outputs, cfg, "km.csv");

  report["groups"] = group_names;
  report["excluded_invalid_eta"] = excluded_invalid;

  if (group_names.size() > 1) {
    const LogRankResult lr = log_rank(records, group_of);
    CsvTable lr_csv = make_table({"metric", "value"});
    lr_csv.rows.push_back({"statistic", format_double(lr.statistic)});
    lr_csv.rows.push_back({"df", std::to_string(lr.df)});
    lr_csv.rows.push_back({"p_value", format_double(lr.p_value)});
    write_csv(out_path(cfg, "km_logrank.csv"), lr_csv);
    note_output(outputs, cfg, "km_logrank.csv");
    report["logrank_statistic"] = lr.statistic;
    report["logrank_p"] = lr.p_value;
  }

  if (get_bool(cfg, "plot")) {
    atomic_write_file(out_path(cfg, "km.svg"),
                      svg_km_plot(group_names, curves));
    note_output(outputs, cfg, "km.svg");
  }
}

using StageFn = void (*)(const json&, json&, json&, json&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> table{
      {"synth", stage_synth},       {"stain", stage_stain},
      {"train", stage_train},       {"cluster", stage_cluster},
      {"describe", stage_describe}, {"select", stage_select},
      {"evaluate", stage_evaluate}, {"km", stage_km}};
  return table;
}

}  // namespace

json default_config() { return base_defaults(); }

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, fn] : stage_table()) v.push_back(name);
    return v;
  }();
  return names;
}

json run_stage(const std::string& stage, const json& config) {
  const auto it = stage_table().find(stage);
  if (it == stage_table().end()) {
    std::string known;
    for (const auto& name : stage_names()) {
      if (!known.empty()) known += ", ";
      known += name;
    }
    throw InvalidInput("unknown stage '" + stage + "' (known: " + known + ")");
  }

  // A manifest passed back in reruns with its recorded effective config.
  const json& given =
      config.is_object() && config.contains("config") ? config.at("config")
                                                      : config;
  const json cfg = merge_strict(base_defaults(), given, "");

  fs::create_directories(get_string(cfg, "out_dir"));

  json manifest;
  manifest["format_version"] = 1;
  manifest["stage"] = stage;
  manifest["seed"] = get_seed(cfg);
  manifest["config"] = cfg;
  manifest["inputs"] = json::object();
  manifest["outputs"] = json::object();
  manifest["report"] = json::object();
  it->second(cfg, manifest["inputs"], manifest["outputs"],
             manifest["report"]);

  atomic_write_file(out_path(cfg, "manifest_" + stage + ".json"),
                    manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace dnr
