#pragma once

#include <string>

#include <json.hpp>

#include "relx/params.hpp"

namespace relx {

// Checkpoint container: 8-byte magic, manifest length, manifest JSON text,
// then every parameter tensor verbatim as little-endian f64, in store order.
// Raw byte tensors make save/load a bit-exact round trip.

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const nlohmann::ordered_json& manifest);

// Reads only the manifest; used to reconstruct the model before loading.
nlohmann::ordered_json read_checkpoint_manifest(const std::string& path);

// Fills an existing store whose entry names and shapes must match the file
// exactly (same model construction). Returns the manifest.
nlohmann::ordered_json load_checkpoint(const std::string& path, ParameterStore& store);

}  // namespace relx
