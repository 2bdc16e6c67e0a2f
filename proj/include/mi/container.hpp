#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi/features.hpp"
#include "mi/recording.hpp"

namespace mi {

// "EEGT" binary container:
//   bytes 0..3   magic "EEGT"
//   bytes 4..5   version, u16 little-endian (currently 1)
//   bytes 6..9   header byte length, u32 little-endian
//   header       UTF-8 JSON; key "payloads" lists {name, dtype, shape}
//   payloads     contiguous little-endian float64 arrays, row-major, in
//                header order
inline constexpr std::uint16_t kContainerVersion = 1;

struct Payload {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;
};

struct Container {
  nlohmann::json meta;  // header minus the "payloads" key
  std::vector<Payload> payloads;
};

void write_container(const std::string& path, const Container& c);

// Throws bad_magic, version_unsupported, malformed_header, truncated_payload.
Container read_container(const std::string& path);

// Recording wrapper: meta carries kind/fs/channel labels/events, payload
// "samples" is [C x N]. Round trips are bit-exact.
void write_recording(const std::string& path, const RawRecording& rec);
RawRecording read_recording(const std::string& path);

// Feature tensor wrapper: payload "nscm" has shape [C, C, T].
void write_feature_tensor(const std::string& path, const FeatureTensor& t);
FeatureTensor read_feature_tensor(const std::string& path);

}  // namespace mi
