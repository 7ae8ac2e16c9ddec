#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dfkd/model.hpp"
#include "dfkd/pruner.hpp"

namespace dfkd {

// Checkpoint container: magic "DFKD", u32 version, u64 JSON header length,
// JSON header (architecture + ordered blob manifest), then raw little-endian
// blobs in manifest order (f32 tensors, u8 masks). Serialization is
// canonical: save -> load -> save is byte-identical.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::optional<MaskSet> mask;
};

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const MaskSet* mask);

void save_checkpoint(const Model& model, const MaskSet* mask, const std::string& path);

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

Checkpoint load_checkpoint(const std::string& path);

// FNV-1a of the canonical serialized bytes; equals the hash of a saved file.
std::string model_hash(const Model& model);

}  // namespace dfkd
