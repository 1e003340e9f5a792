#include "hte/report.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>

#include "hte/csv.hpp"
#include "hte/error.hpp"
#include "hte/stats.hpp"

namespace hte::report {

namespace {

void write_text(const std::filesystem::path& path, std::string_view text,
                std::vector<std::filesystem::path>& written) {
  csv::write_file(path, text);
  written.push_back(path);
}

std::string hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json to_json(const shapley::ImportanceTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"feature", r.feature},
                    {"mean_abs_phi", r.mean_abs_phi},
                    {"sd_abs_phi", r.sd_abs_phi}});
  }
  return rows;
}

nlohmann::json model_json(const twomodel::ModelResult& model, std::size_t n) {
  auto doc = tuning::to_json(model.eval);
  doc["n"] = n;
  doc["importance"] = to_json(model.final.importance);
  doc["tuned_hp"] = gbtree::to_json(model.final.ensemble.hyperparams);
  doc["tree_count"] = model.final.tree_count;
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < model.fold_groups.size(); ++f) {
    folds.push_back({{"group", model.fold_groups[f]},
                     {"fingerprint", hex(model.fold_fingerprints[f])}});
  }
  doc["folds"] = folds;
  return doc;
}

nlohmann::json pipeline_report(const twomodel::PipelineResult& result,
                               const twomodel::PipelineConfig& cfg, const Timestamps& times) {
  nlohmann::json doc;
  doc["model1"] = model_json(result.model1, result.n_control);
  doc["model2"] = model_json(result.model2, result.n_treated);
  doc["effect"] = tuning::to_json(result.effect);
  doc["residual_summary"] = {{"mean", result.residual_summary.mean},
                             {"sd", result.residual_summary.sd},
                             {"n", result.residual_summary.n}};
  doc["leakage"] = {{"accuracy", result.leakage.accuracy},
                    {"base_rate", result.leakage.base_rate},
                    {"p_value", result.leakage.p_value},
                    {"n", result.leakage.n}};
  doc["tuned_hp_model1"] = gbtree::to_json(result.model1.final.ensemble.hyperparams);
  doc["tuned_hp_model2"] = gbtree::to_json(result.model2.final.ensemble.hyperparams);
  doc["counts"] = {{"control", result.n_control}, {"treated", result.n_treated}};
  auto config = twomodel::to_json(cfg);
  config.erase("threads");
  doc["provenance"] = {{"seed", cfg.seed},
                       {"config_hash", twomodel::config_hash(cfg)},
                       {"config", config},
                       {"timestamps", {{"started", times.started}, {"finished", times.finished}}}};
  return doc;
}

nlohmann::json strip_timestamps(nlohmann::json report) {
  if (report.contains("provenance") && report["provenance"].is_object()) {
    report["provenance"].erase("timestamps");
  }
  return report;
}

std::string file_token(std::string_view name) {
  std::string out;
  bool gap = false;
  for (const char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-') {
      if (gap && !out.empty()) out += '_';
      gap = false;
      out += static_cast<char>(std::tolower(u));
    } else {
      gap = true;
    }
  }
  return out.empty() ? "feature" : out;
}

std::vector<std::filesystem::path> write_pipeline(const twomodel::PipelineResult& result,
                                                  const twomodel::PipelineConfig& cfg,
                                                  const Timestamps& times,
                                                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  write_text(dir / "report.json", pipeline_report(result, cfg, times).dump(2) + "\n", written);

  const std::pair<const char*, const twomodel::ModelResult*> models[] = {
      {"model1", &result.model1}, {"model2", &result.model2}};
  for (const auto& [name, model] : models) {
    const std::string prefix = name;
    write_text(dir / (prefix + "_importance.csv"), shapley::importance_csv(model->final.importance),
               written);
    const auto& rows = model->final.importance.rows;
    for (std::size_t i = 0; i < rows.size() && i < cfg.dependence_top; ++i) {
      const auto table =
          shapley::dependence_table(model->final.phis, rows[i].feature, model->final.matrix);
      write_text(dir / (prefix + "_dependence_" + file_token(rows[i].feature) + ".csv"),
                 shapley::dependence_csv(table), written);
    }
    write_text(dir / ("tune_trace_" + prefix + ".csv"), tuning::trace_csv(model->final.trace),
               written);
    write_text(dir / (prefix + ".json"), gbtree::to_json(model->final.ensemble).dump() + "\n",
               written);
  }
  return written;
}

}  // namespace hte::report
