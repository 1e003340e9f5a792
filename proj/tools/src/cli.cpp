#include "hte/cli.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hte/csv.hpp"
#include "hte/error.hpp"
#include "hte/gbtree.hpp"
#include "hte/random.hpp"
#include "hte/report.hpp"
#include "hte/shapley.hpp"
#include "hte/stats.hpp"
#include "hte/synthrct.hpp"
#include "hte/tabular.hpp"
#include "hte/tuning.hpp"
#include "hte/twomodel.hpp"

namespace hte::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using tabular::Condition;

struct Common {
  std::uint64_t seed = 0;
  bool seed_given = false;  // --seed overrides a seed stored in a config file
  int threads = 1;
  std::string out;
};

struct DataArgs {
  std::string data;
  std::string schema;
  std::string config;
  std::string rows = "control";
};

json read_json(const std::string& path) {
  const auto text = csv::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kBadConfig, path + ": " + e.what());
  }
  return {};
}

// The manifest lists every file the command wrote, with checksums taken
// after all writes completed.
class Run {
 public:
  Run(std::string command, const Common& common, std::uint64_t seed)
      : command_(std::move(command)), common_(common), seed_(seed) {
    fs::create_directories(common.out);
  }

  fs::path path(const std::string& name) const { return fs::path(common_.out) / name; }

  void write(const std::string& name, std::string_view contents) {
    csv::write_file(path(name), contents);
    files_.push_back(path(name));
  }
  void add(const std::vector<fs::path>& written) {
    files_.insert(files_.end(), written.begin(), written.end());
  }
  void config(const std::string& path) {
    if (!path.empty()) configs_.push_back(path);
  }

  void finish() const {
    json files = json::array();
    for (const auto& file : files_) {
      files.push_back({{"path", fs::relative(file, common_.out).generic_string()},
                       {"sha256", sha256_file(file.string())}});
    }
    const json manifest = {{"command", command_},
                           {"configs", configs_},
                           {"seed", seed_},
                           {"output_dir", common_.out},
                           {"files", files}};
    csv::write_file(path("manifest.json"), manifest.dump(2) + "\n");
  }

 private:
  std::string command_;
  Common common_;
  std::uint64_t seed_;
  std::vector<std::string> configs_;
  std::vector<fs::path> files_;
};

twomodel::PipelineConfig load_pipeline_config(const std::string& path, const Common& common,
                                              const std::string& schema) {
  twomodel::PipelineConfig cfg;
  if (!path.empty()) cfg = twomodel::pipeline_config_from_json(read_json(path));
  if (path.empty() || common.seed_given) cfg.seed = common.seed;
  cfg.threads = common.threads;
  cfg.schema = schema;
  cfg.validate();
  return cfg;
}

tabular::Dataset load_data(const DataArgs& args) {
  return tabular::load_csv(args.data, tabular::load_schema(args.schema));
}

tabular::Dataset select(const tabular::Dataset& data, const std::string& rows) {
  if (rows == "all") return data;
  return data.select_rows(
      data.rows_with(rows == "treated" ? Condition::kTreatment : Condition::kControl));
}

FeatureMatrix encode_global(const tabular::Dataset& rows, const twomodel::PipelineConfig& cfg) {
  const auto imputed = tabular::apply_impute(rows, tabular::fit_impute(rows));
  return tabular::encode_matrix(imputed, {.include_pre_outcome = cfg.include_pre_outcome});
}

json optional_json(const std::optional<double>& value) {
  return value ? json(*value) : json(nullptr);
}

void add_data_options(CLI::App& sub, DataArgs& args, bool with_rows) {
  sub.add_option("--data", args.data, "Study data CSV")->required();
  sub.add_option("--schema", args.schema, "Schema JSON")->required();
  sub.add_option("--config", args.config, "Pipeline config JSON");
  if (with_rows) {
    sub.add_option("--rows", args.rows, "Rows to model; target is the outcome change")
        ->check(CLI::IsMember({"control", "treated", "all"}));
  }
}

void run_synth(const std::string& config, std::size_t students, std::size_t schools, double size,
               double noise, const Common& common) {
  synthrct::SynthConfig cfg;
  if (config.empty()) {
    cfg = synthrct::planted_moderator(students, schools, size, noise, common.seed);
  } else {
    cfg = synthrct::synth_config_from_json(read_json(config));
    if (common.seed_given) cfg.seed = common.seed;
  }
  Run run("synth", common, cfg.seed);
  run.config(config);
  run.add(synthrct::write_synth(synthrct::generate(cfg), common.out));
  run.write("synth_config.json", synthrct::to_json(cfg).dump(2) + "\n");
  run.finish();
}

void run_pipeline(const DataArgs& args, const Common& common, std::ostream& out) {
  const auto cfg = load_pipeline_config(args.config, common, args.schema);
  const auto data = load_data(args);
  report::Timestamps times{report::utc_now(), {}};
  const auto result = twomodel::run_pipeline(data, cfg);
  times.finished = report::utc_now();
  Run run("pipeline", common, cfg.seed);
  run.config(args.config);
  run.config(args.schema);
  run.add(report::write_pipeline(result, cfg, times, common.out));
  run.finish();
  out << "model1 mean_r " << stats::format_double(result.model1.eval.mean_r) << ", model2 mean_r "
      << stats::format_double(result.model2.eval.mean_r) << "\n";
}

void run_tune(const DataArgs& args, const Common& common) {
  const auto cfg = load_pipeline_config(args.config, common, args.schema);
  const auto rows = select(load_data(args), args.rows);
  gbtree::Hyperparams base;
  base.lambda = cfg.lambda;
  base.n_trees = cfg.search_trees;
  base.seed = derive_seed(cfg.seed, "trees");
  const auto trace = tuning::coordinate_descent(
      encode_global(rows, cfg), tabular::outcome_change(rows), rows.groups(), cfg.grid, base,
      {.inner_folds = cfg.inner_folds, .passes = cfg.passes, .seed = derive_seed(cfg.seed, "inner"),
       .threads = cfg.threads});
  Run run("tune", common, cfg.seed);
  run.config(args.config);
  run.write("tune_trace.csv", tuning::trace_csv(trace));
  run.write("tuned_hp.json", gbtree::to_json(trace.final).dump(2) + "\n");
  run.finish();
}

void run_shap(const DataArgs& args, const std::string& model_path, const Common& common) {
  const auto cfg = load_pipeline_config(args.config, common, args.schema);
  const auto model = gbtree::ensemble_from_json(read_json(model_path));
  const auto rows = select(load_data(args), args.rows);
  const auto matrix = encode_global(rows, cfg);
  const auto phis = shapley::tree_shap(model, matrix, cfg.threads);
  Run run("shap", common, cfg.seed);
  run.config(args.config);
  run.write("shap_values.csv", shapley::shap_matrix_csv(phis, matrix.origin()));
  run.write("importance.csv",
            shapley::importance_csv(shapley::importance_table(phis, matrix.origin())));
  run.finish();
}

void run_curve(const DataArgs& args, std::vector<std::size_t> ks, std::size_t repeats,
               const Common& common) {
  const auto cfg = load_pipeline_config(args.config, common, args.schema);
  const auto rows = select(load_data(args), args.rows);
  if (ks.empty()) {
    const auto groups = rows.groups();
    const std::size_t distinct = std::set<std::string>(groups.begin(), groups.end()).size();
    for (std::size_t k = 1; k < distinct; k = k < 2 ? k + 1 : k * 2) ks.push_back(k);
  }
  const auto curve = twomodel::learning_curve(rows, tabular::outcome_change(rows), cfg, ks, repeats);
  std::string detail = "k,repeat,r\n", summary = "k,mean_r\n";
  for (const auto& point : curve) {
    for (std::size_t r = 0; r < point.per_repeat_r.size(); ++r) {
      const double v = point.per_repeat_r[r];
      detail += std::to_string(point.k) + "," + std::to_string(r) + "," +
                (std::isnan(v) ? std::string("NA") : stats::format_double(v)) + "\n";
    }
    summary += std::to_string(point.k) + "," + stats::format_double(point.mean_r) + "\n";
  }
  Run run("curve", common, cfg.seed);
  run.config(args.config);
  run.write("learning_curve.csv", detail);
  run.write("learning_curve_summary.csv", summary);
  run.finish();
}

void run_stability(const DataArgs& args, const Common& common) {
  const auto cfg = load_pipeline_config(args.config, common, args.schema);
  const auto data = load_data(args);
  const auto control = data.select_rows(data.rows_with(Condition::kControl));
  const auto treated = data.select_rows(data.rows_with(Condition::kTreatment));
  const auto model1 = twomodel::fit_final(control, tabular::outcome_change(control), cfg, "model1");
  const auto labels = twomodel::counterfactual_residuals(model1.ensemble, treated, model1.plan, cfg);
  const auto result = twomodel::split_sample_stability(treated, labels, cfg);
  Run run("stability", common, cfg.seed);
  run.config(args.config);
  run.write("stability.json",
            json{{"groups_a", result.groups_a},
                 {"groups_b", result.groups_b},
                 {"importance_correlation", optional_json(result.importance_correlation)}}
                    .dump(2) +
                "\n");
  run.write("importance_a.csv", shapley::importance_csv(result.importance_a));
  run.write("importance_b.csv", shapley::importance_csv(result.importance_b));
  run.finish();
}

void run_probe(const DataArgs& args, const Common& common) {
  const auto cfg = load_pipeline_config(args.config, common, args.schema);
  const auto rows = select(load_data(args), args.rows);
  const auto hp = twomodel::overfit_hyperparams();
  const auto result = twomodel::overfit_probe(rows, tabular::outcome_change(rows), cfg, hp);
  Run run("probe", common, cfg.seed);
  run.config(args.config);
  run.write("probe.json", json{{"hyperparams", gbtree::to_json(hp)},
                               {"train_r", optional_json(result.train_r)},
                               {"heldout_r", optional_json(result.heldout_r)},
                               {"heldout", tuning::to_json(result.heldout)}}
                                  .dump(2) +
                              "\n");
  run.finish();
}

}  // namespace

std::string sha256_file(const std::string& path) {
  const auto bytes = csv::read_file(path);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                                    &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &length) != 1) {
    fail(ErrorCode::kInternal, "sha256 failed for " + path);
  }
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heterogeneous treatment effect discovery with boosted trees", "hte"};
  app.require_subcommand(1, 1);

  Common common;
  DataArgs data;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Root seed for every random draw");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", common.out, "Output directory")->required();
  };

  std::string synth_config;
  std::size_t students = 1000, schools = 10;
  double effect_size = 0.3, noise = 0.5;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic randomized trial");
  synth->add_option("--config", synth_config, "Generator config JSON");
  synth->add_option("--students", students, "Planted-moderator row count");
  synth->add_option("--schools", schools, "Planted-moderator school count");
  synth->add_option("--effect-size", effect_size, "Planted effect below the moderator median");
  synth->add_option("--noise-sd", noise, "Outcome noise SD");
  add_common(synth);

  auto* pipeline = app.add_subcommand("pipeline", "Run the two-model procedure");
  add_data_options(*pipeline, data, false);
  add_common(pipeline);

  auto* tune = app.add_subcommand("tune", "Coordinate descent only; writes the trace");
  add_data_options(*tune, data, true);
  add_common(tune);

  std::string model_path;
  auto* shap = app.add_subcommand("shap", "Attribute a saved ensemble over a dataset");
  add_data_options(*shap, data, true);
  shap->add_option("--model", model_path, "Ensemble JSON")->required();
  add_common(shap);

  std::vector<std::size_t> ks;
  std::size_t repeats = 10;
  auto* curve = app.add_subcommand("curve", "Held-out r against training school count");
  add_data_options(*curve, data, true);
  curve->add_option("--k", ks, "Training school counts");
  curve->add_option("--repeats", repeats, "Random draws per k")->check(CLI::PositiveNumber);
  add_common(curve);

  auto* stability = app.add_subcommand("stability", "Split-half importance agreement");
  add_data_options(*stability, data, false);
  add_common(stability);

  auto* probe = app.add_subcommand("probe", "Unregularized overfitting probe");
  add_data_options(*probe, data, true);
  add_common(probe);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  for (const auto* sub : app.get_subcommands()) common.seed_given = sub->count("--seed") > 0;

  try {
    if (synth->parsed()) {
      run_synth(synth_config, students, schools, effect_size, noise, common);
    } else if (pipeline->parsed()) {
      run_pipeline(data, common, out);
    } else if (tune->parsed()) {
      run_tune(data, common);
    } else if (shap->parsed()) {
      run_shap(data, model_path, common);
    } else if (curve->parsed()) {
      run_curve(data, ks, repeats, common);
    } else if (stability->parsed()) {
      run_stability(data, common);
    } else {
      run_probe(data, common);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (classify(e.code())) {
      case ErrorClass::kUsage:
        return kExitUsage;
      case ErrorClass::kData:
        return kExitData;
      case ErrorClass::kInternal:
        return kExitInternal;
    }
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace hte::cli
