// CLI shell over the C API: parses flags, merges them onto an optional JSON
// config file, and dispatches one pipeline stage per invocation.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dnr/dnr.h"

using nlohmann::json;

namespace {

int exit_code(dnr_status status) {
  switch (status) {
    case DNR_OK:
      return 0;
    case DNR_ERR_INVALID_INPUT:
    case DNR_ERR_IO:
      return 1;  // validation: bad config, bad file, bad column
    default:
      return 2;  // numeric or internal failure
  }
}

int fail_validation(const std::string& message) {
  std::fprintf(stderr, "error: %s\n", message.c_str());
  return 1;
}

std::string scalar_text(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dnr: self-supervised tissue clustering and survival analysis"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path, out_dir, brier_time, groups, stain_dir;
  std::uint64_t seed = 0;
  int k = 0, rounds = 0, neighborhood = 4;
  double tau = 0.0, lambda = 0.0, alpha = 0.0;
  bool plot = false, print_defaults = false;

  auto* o_config = app.add_option("--config", config_path,
                                  "JSON config file (a stage manifest also "
                                  "works and reruns with its config)");
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  auto* o_seed = app.add_option("--seed", seed, "master RNG seed");
  auto* o_k = app.add_option("--k", k, "number of clusters K");
  auto* o_tau = app.add_option("--tau", tau, "softmax temperature");
  auto* o_lambda = app.add_option("--lambda", lambda, "similarity loss weight");
  auto* o_alpha = app.add_option("--alpha", alpha, "selection threshold");
  auto* o_rounds = app.add_option("--rounds", rounds, "Rule curriculum rounds");
  auto* o_neigh = app.add_option("--neighborhood", neighborhood,
                                 "grid connectivity")
                      ->check(CLI::IsMember({4, 8}));
  auto* o_brier = app.add_option("--brier-time", brier_time,
                                 "Brier horizon in days, or 'median'");
  auto* o_plot = app.add_flag("--plot", plot, "emit km.svg from the KM curve");
  auto* o_groups = app.add_option("--groups", groups, "km grouping")
                       ->check(CLI::IsMember({"none", "median-split"}));
  auto* o_stain = app.add_option("--stain-dir", stain_dir,
                                 "directory of RGB .png patches");
  app.add_flag("--print-default-config", print_defaults,
               "print the full default config as JSON and exit");

  static const char* kStages[] = {"synth",    "stain",  "train",
                                  "cluster",  "describe", "select",
                                  "evaluate", "km"};
  static const char* kStageHelp[] = {
      "generate a seeded synthetic cohort",
      "optical-density stain estimation and deconvolution over PNG patches",
      "train the divide-and-rule embedding",
      "spherical k-means over the embeddings",
      "per-patient cluster frequency + transition descriptors",
      "forward covariate selection by likelihood-ratio test",
      "LOOCV linear predictors, C-index, and IPCW Brier score",
      "Kaplan-Meier curves and log-rank test"};
  for (std::size_t i = 0; i < 8; ++i)
    app.add_subcommand(kStages[i], kStageHelp[i]);

  CLI11_PARSE(app, argc, argv);

  if (print_defaults) {
    char* text = nullptr;
    if (dnr_default_config(&text) != DNR_OK)
      return fail_validation(dnr_last_error());
    std::fputs(text, stdout);
    dnr_string_free(text);
    return 0;
  }
  if (app.get_subcommands().empty())
    return fail_validation("a stage subcommand is required (see --help)");
  const std::string stage = app.get_subcommands().front()->get_name();

  json cfg = json::object();
  if (o_config->count()) {
    std::ifstream in(config_path);
    if (!in) return fail_validation("cannot open config '" + config_path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
      cfg = json::parse(buffer.str());
    } catch (const json::exception& e) {
      return fail_validation(config_path + ": " + e.what());
    }
    // A manifest carries its effective config; flags override inside it.
    if (cfg.is_object() && cfg.contains("config")) cfg = cfg.at("config");
  }

  if (o_out->count()) cfg["out_dir"] = out_dir;
  if (o_seed->count()) cfg["seed"] = seed;
  if (o_k->count()) cfg["k"] = k;
  if (o_tau->count()) cfg["tau"] = tau;
  if (o_lambda->count()) cfg["lambda"] = lambda;
  if (o_alpha->count()) cfg["alpha"] = alpha;
  if (o_rounds->count()) cfg["rounds"] = rounds;
  if (o_neigh->count()) cfg["neighborhood"] = neighborhood;
  if (o_plot->count()) cfg["plot"] = true;
  if (o_groups->count()) cfg["groups"] = groups;
  if (o_stain->count()) cfg["stain_dir"] = stain_dir;
  if (o_brier->count()) {
    if (brier_time == "median") {
      cfg["brier_time"] = "median";
    } else {
      try {
        std::size_t used = 0;
        const double days = std::stod(brier_time, &used);
        if (used != brier_time.size() || !(days > 0.0))
          throw std::invalid_argument(brier_time);
        cfg["brier_time"] = days;
      } catch (const std::exception&) {
        return fail_validation("--brier-time expects positive days or "
                               "'median', got '" + brier_time + "'");
      }
    }
  }

  char* manifest_text = nullptr;
  const dnr_status status =
      dnr_run_stage(stage.c_str(), cfg.dump().c_str(), &manifest_text);
  if (status != DNR_OK) {
    std::fprintf(stderr, "error: %s\n", dnr_last_error());
    return exit_code(status);
  }

  const json manifest = json::parse(manifest_text);
  dnr_string_free(manifest_text);
  std::printf("stage %s ok\n", stage.c_str());
  for (const auto& [key, value] : manifest.at("report").items())
    std::printf("  %s: %s\n", key.c_str(), scalar_text(value).c_str());
  const std::string dir = manifest.at("config").at("out_dir");
  std::printf("manifest: %s/manifest_%s.json\n", dir.c_str(), stage.c_str());
  return 0;
}
