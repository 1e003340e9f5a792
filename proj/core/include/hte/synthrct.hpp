#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hte/tabular.hpp"

namespace hte::synthrct {

enum class GeneratorType { kNormal, kUniformInt, kCategorical };

struct FeatureConfig {
  std::string name;
  tabular::ColumnKind kind = tabular::ColumnKind::kContinuous;
  GeneratorType generator = GeneratorType::kNormal;
  double mean = 0.0;  // normal
  double sd = 1.0;    // normal
  int lo = 0;         // uniform_int, inclusive
  int hi = 1;         // uniform_int, inclusive
  std::vector<std::string> labels{};  // categorical
  std::vector<double> probs{};        // categorical
  std::optional<double> missing_rate{};  // overrides the config-wide rate
};

/// Column names shared by every generated dataset.
inline constexpr const char* kIdColumn = "student_id";
inline constexpr const char* kGroupColumn = "school";
inline constexpr const char* kConditionColumn = "condition";
inline constexpr const char* kPreColumn = "gpa_pre";
inline constexpr const char* kPostColumn = "gpa_post";

/// Expressions may reference any feature (categoricals as their label
/// index) and the pre outcome by kPreColumn.
struct SynthConfig {
  std::size_t n_students = 1000;
  std::size_t n_schools = 10;
  std::vector<FeatureConfig> features;
  double pre_mean = 2.9;
  double pre_sd = 0.6;
  std::string drift = "0";
  std::string effect = "0";
  double noise_sd = 0.5;
  double missing_rate = 0.0;
  double treatment_fraction = 0.5;
  double school_sd = 0.1;  // SD of the per-school drift shift
  std::uint64_t seed = 0;

  void validate() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SynthConfig& cfg);

/// Planted threshold moderator: effect = size where moderator < median,
/// else 0, over NSLM-style distractor features and a learnable control
/// drift with a ceiling term. size = 0 gives a null-effect dataset.
SynthConfig planted_moderator(std::size_t n_students, std::size_t n_schools, double size,
                              double noise_sd, std::uint64_t seed);

/// Name of the moderator in planted_moderator configs.
inline constexpr const char* kModerator = "fixed_mindset";

struct GroundTruth {
  std::vector<std::string> row_id;
  std::vector<tabular::Condition> condition;
  std::vector<double> true_drift;  // includes the school shift
  std::vector<double> true_cate;

  std::vector<double> treated_cate() const;
};

struct SynthData {
  tabular::Dataset data;
  GroundTruth truth;
};

SynthData generate(const SynthConfig& cfg);

struct OracleResult {
  std::optional<double> pearson_r;  // nullopt when either side is constant
  double rmse = 0.0;
};

/// Compares predicted effects for the treated rows (in row order) with the
/// planted CATE.
OracleResult oracle_eval(std::span<const double> predicted_effects, const GroundTruth& truth);

std::string truth_csv(const GroundTruth& truth);
std::string data_csv(const tabular::Dataset& data);

/// Writes data.csv, truth.csv and schema.json into `dir`.
std::vector<std::filesystem::path> write_synth(const SynthData& synth,
                                               const std::filesystem::path& dir);

}  // namespace hte::synthrct
