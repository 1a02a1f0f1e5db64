#include "binsight/run_config.hpp"

#include <set>

#include "binsight/dataset.hpp"
#include "binsight/errors.hpp"

namespace binsight {

void RunConfig::validate() const {
  if (!(d_max_mm > 0)) throw InvalidArgument("d_max_mm must be positive");
  if (!(cell_size_mm > 0)) throw InvalidArgument("cell_size_mm must be positive");
  if (!(resolution_mm > 0)) throw InvalidArgument("resolution_mm must be positive");
  if (k_inpaint < 3 || k_inpaint % 2 == 0) throw InvalidArgument("k_inpaint must be an odd integer >= 3");
  if (target_size <= 0) throw InvalidArgument("target_size must be positive");
}

LabelParams RunConfig::label_params() const {
  LabelParams p;
  p.d_max_mm = d_max_mm;
  p.cell_size_mm = cell_size_mm;
  return p;
}

PipelineOptions RunConfig::pipeline_options() const {
  PipelineOptions o;
  o.target_size = target_size;
  o.k_inpaint = k_inpaint;
  o.resolution_mm = resolution_mm;
  return o;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  static const std::set<std::string> known = {"d_max_mm", "cell_size_mm", "resolution_mm",
                                              "k_inpaint", "target_size"};
  if (!j.is_object()) throw InvalidArgument("run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw InvalidArgument("unknown run config key '" + key + "'");
  }
  try {
    c.d_max_mm = j.value("d_max_mm", c.d_max_mm);
    c.cell_size_mm = j.value("cell_size_mm", c.cell_size_mm);
    c.resolution_mm = j.value("resolution_mm", c.resolution_mm);
    c.k_inpaint = j.value("k_inpaint", c.k_inpaint);
    c.target_size = j.value("target_size", c.target_size);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return run_config_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"d_max_mm", c.d_max_mm},
          {"cell_size_mm", c.cell_size_mm},
          {"resolution_mm", c.resolution_mm},
          {"k_inpaint", c.k_inpaint},
          {"target_size", c.target_size}};
}

RunConfig apply_overrides(RunConfig c, const RunConfigOverrides& f) {
  if (f.d_max_mm) c.d_max_mm = *f.d_max_mm;
  if (f.cell_size_mm) c.cell_size_mm = *f.cell_size_mm;
  if (f.resolution_mm) c.resolution_mm = *f.resolution_mm;
  if (f.k_inpaint) c.k_inpaint = *f.k_inpaint;
  if (f.target_size) c.target_size = *f.target_size;
  return c;
}

}  // namespace binsight
