#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "bciwalk/decoder.hpp"
#include "bciwalk/recording.hpp"
#include "bciwalk/synth.hpp"

namespace bciwalk::testing {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

/// Default synthetic subject, 10-min protocol.
const EegRecording& default_recording();

/// LDA-only model trained on default_recording(); built once per process.
const DecodingModel& trained_model();

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_file(const std::filesystem::path& p);

/// docs/telemetry_schema.json from the source tree.
const nlohmann::json& telemetry_schema();

/// Checks `value` against the subset of JSON Schema used by the telemetry
/// schema (type, enum, const, required, properties, items, min/max,
/// minItems/maxItems, $ref, allOf, if/then). Empty when valid, otherwise
/// the first violation with its JSON pointer.
std::string schema_violation(const nlohmann::json& schema, const nlohmann::json& value);

}  // namespace bciwalk::testing
