#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "bciwalk/decoder.hpp"

namespace bciwalk {

// Model file:
//
//   BCIWALK-MODEL 1
//   <key> <value>...               one field per line
//   matrix <name> <rows> <cols>    followed by rows of 16-digit hex words
//   ...
//   crc32 <8 hex digits>           CRC-32 of every byte before this line
//
// Every floating-point value is stored as the hex image of its IEEE-754
// bits, so a load reproduces the model exactly and a save of the same
// model is byte-identical.
std::string serialize_model(const DecodingModel& model);
DecodingModel deserialize_model(std::string_view text);

void save_model(const DecodingModel& model, const std::filesystem::path& path);
DecodingModel load_model(const std::filesystem::path& path);

/// Weight map of both class subspaces as CSV:
/// subspace,channel,bin_lo_hz,weight
void write_weight_map_csv(const DecodingModel& model, std::ostream& out);

}  // namespace bciwalk
