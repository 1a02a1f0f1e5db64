#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "binsight/autolabel.hpp"
#include "binsight/segment.hpp"

namespace binsight {

/// Shared processing parameters of the command-line tools. Loaded from an
/// optional JSON file, then overridden field by field from flags.
struct RunConfig {
  double d_max_mm = 5.0;
  double cell_size_mm = 5.0;
  double resolution_mm = 1.0;
  int k_inpaint = 5;
  int target_size = 800;

  /// Throws InvalidArgument unless all fields are positive and k is odd and >= 3.
  void validate() const;

  LabelParams label_params() const;
  PipelineOptions pipeline_options() const;
};

/// Unknown keys are rejected so typos do not silently fall back to defaults.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Flag values that were given on the command line.
struct RunConfigOverrides {
  std::optional<double> d_max_mm;
  std::optional<double> cell_size_mm;
  std::optional<double> resolution_mm;
  std::optional<int> k_inpaint;
  std::optional<int> target_size;
};

RunConfig apply_overrides(RunConfig config, const RunConfigOverrides& flags);

}  // namespace binsight
