#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hte/twomodel.hpp"

namespace hte::report {

struct Timestamps {
  std::string started;
  std::string finished;
};

/// Current UTC time as an ISO 8601 string with second resolution.
std::string utc_now();

nlohmann::json to_json(const shapley::ImportanceTable& table);
nlohmann::json model_json(const twomodel::ModelResult& model, std::size_t n);

/// The run's report document. Timestamps live under provenance.timestamps
/// and are the only content that differs between identical runs.
nlohmann::json pipeline_report(const twomodel::PipelineResult& result,
                               const twomodel::PipelineConfig& cfg, const Timestamps& times);

/// Removes provenance.timestamps so reports can be compared byte for byte.
nlohmann::json strip_timestamps(nlohmann::json report);

/// Lowercase name safe for file names: runs of other characters become '_'.
std::string file_token(std::string_view name);

/// Writes report.json, per-model importance, dependence, trace, prediction
/// and model files into `dir`; returns the written paths in write order.
std::vector<std::filesystem::path> write_pipeline(const twomodel::PipelineResult& result,
                                                  const twomodel::PipelineConfig& cfg,
                                                  const Timestamps& times,
                                                  const std::filesystem::path& dir);

}  // namespace hte::report
