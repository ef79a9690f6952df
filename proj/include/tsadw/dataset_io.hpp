#pragma once

#include <string>

#include "tsadw/phasor.hpp"

namespace tsadw {

// Text format: JSON lines. First line is a header carrying the format
// version, frame rate and optional normalization stats; every following
// line is one case:
//   {"id":..., "label":0|1, "B":..., "T":..., "frames":[[mag...],[ang...]], "meta":{...}}
// Channel arrays are flattened bus-major. The text codec only accepts
// fully-known matrices; the binary codec also stores the mask.
void save_dataset_text(const Dataset& ds, const std::string& path);
Dataset load_dataset_text(const std::string& path);

// Binary format: magic "TSADW1", little-endian, 8-byte float payload,
// known mask as packed bits. Bit-exact round trip.
void save_dataset_binary(const Dataset& ds, const std::string& path);
Dataset load_dataset_binary(const std::string& path);

}  // namespace tsadw
