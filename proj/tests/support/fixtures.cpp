#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bciwalk/rng.hpp"

namespace bciwalk::testing {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

const EegRecording& default_recording() {
  static const EegRecording rec = generate_recording(SynthSpec{});
  return rec;
}

const DecodingModel& trained_model() {
  static const DecodingModel model = [] {
    TrainingConfig cfg;
    cfg.methods = {DiscriminantMethod::Lda};
    return train_model(default_recording(), cfg).model;
  }();
  return model;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "bciwalk_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const nlohmann::json& telemetry_schema() {
  static const nlohmann::json schema =
      nlohmann::json::parse(read_file(std::filesystem::path(BCIWALK_SOURCE_DIR) / "docs" / "telemetry_schema.json"));
  return schema;
}

namespace {

bool has_type(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()));
  if (t == "number") return v.is_number();
  return false;
}

std::string check(const nlohmann::json& root, const nlohmann::json& s, const nlohmann::json& v, const std::string& at) {
  if (s.contains("$ref")) {
    const auto ref = s["$ref"].get<std::string>();
    return check(root, root.at(nlohmann::json::json_pointer(ref.substr(1))), v, at);
  }
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || has_type(v, t.get<std::string>());
    } else {
      ok = has_type(v, s["type"].get<std::string>());
    }
    if (!ok) return at + ": expected type " + s["type"].dump() + ", got " + v.dump();
  }
  if (s.contains("const") && v != s["const"]) return at + ": expected " + s["const"].dump();
  if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
    return at + ": " + v.dump() + " not in " + s["enum"].dump();
  if (v.is_number()) {
    if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) return at + ": below minimum";
    if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>()) return at + ": above maximum";
  }
  if (v.is_object()) {
    for (const auto& r : s.value("required", nlohmann::json::array()))
      if (!v.contains(r.get<std::string>())) return at + ": missing '" + r.get<std::string>() + "'";
    if (s.contains("properties"))
      for (const auto& [k, sub] : s["properties"].items())
        if (v.contains(k))
          if (auto e = check(root, sub, v[k], at + "/" + k); !e.empty()) return e;
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) return at + ": too few items";
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) return at + ": too many items";
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i)
        if (auto e = check(root, s["items"], v[i], at + "/" + std::to_string(i)); !e.empty()) return e;
  }
  for (const auto& sub : s.value("allOf", nlohmann::json::array())) {
    if (sub.contains("if")) {
      if (check(root, sub["if"], v, at).empty())
        if (auto e = check(root, sub["then"], v, at); !e.empty()) return e;
      continue;
    }
    if (auto e = check(root, sub, v, at); !e.empty()) return e;
  }
  return {};
}

}  // namespace

std::string schema_violation(const nlohmann::json& schema, const nlohmann::json& value) {
  return check(schema, schema, value, "");
}

}  // namespace bciwalk::testing
