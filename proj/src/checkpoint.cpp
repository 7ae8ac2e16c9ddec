#include "dfkd/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "dfkd/error.hpp"
#include "dfkd/util.hpp"

namespace dfkd {

using json = nlohmann::json;

namespace {

json spec_to_json(const LayerSpec& spec) {
    json j;
    j["kind"] = layer_kind_name(spec.kind);
    switch (spec.kind) {
        case LayerKind::conv2d:
            j["in_channels"] = spec.in_channels;
            j["out_channels"] = spec.out_channels;
            j["kernel"] = spec.kernel;
            j["stride"] = spec.stride;
            j["padding"] = spec.padding;
            break;
        case LayerKind::batchnorm2d:
            j["channels"] = spec.channels;
            j["eps"] = static_cast<double>(spec.eps);
            j["momentum"] = static_cast<double>(spec.momentum);
            break;
        case LayerKind::linear:
            j["in_features"] = spec.in_features;
            j["out_features"] = spec.out_features;
            break;
        case LayerKind::maxpool2d:
            j["kernel"] = spec.kernel;
            j["stride"] = spec.stride;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec spec_from_json(const json& j) {
    LayerSpec spec;
    spec.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    switch (spec.kind) {
        case LayerKind::conv2d:
            spec.in_channels = j.at("in_channels").get<int>();
            spec.out_channels = j.at("out_channels").get<int>();
            spec.kernel = j.at("kernel").get<int>();
            spec.stride = j.at("stride").get<int>();
            spec.padding = j.at("padding").get<int>();
            break;
        case LayerKind::batchnorm2d:
            spec.channels = j.at("channels").get<int>();
            spec.eps = static_cast<float>(j.at("eps").get<double>());
            spec.momentum = static_cast<float>(j.at("momentum").get<double>());
            break;
        case LayerKind::linear:
            spec.in_features = j.at("in_features").get<int>();
            spec.out_features = j.at("out_features").get<int>();
            break;
        case LayerKind::maxpool2d:
            spec.kernel = j.at("kernel").get<int>();
            spec.stride = j.at("stride").get<int>();
            break;
        default:
            break;
    }
    return spec;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const MaskSet* mask) {
    json header;
    header["arch"]["input"] = {model.input_chw()[0], model.input_chw()[1], model.input_chw()[2]};
    header["arch"]["layers"] = json::array();
    for (const auto& layer : model.layers)
        header["arch"]["layers"].push_back(spec_to_json(layer.spec));

    json manifest = json::array();
    const auto tensors = model.named_tensors();
    for (const auto& [name, t] : tensors) {
        json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["dtype"] = "f32";
        manifest.push_back(std::move(entry));
    }
    if (mask) {
        for (const auto& e : mask->entries) {
            json entry;
            entry["name"] = "mask:" + e.name;
            entry["shape"] = json::array({static_cast<std::int64_t>(e.keep.size())});
            entry["dtype"] = "u8";
            manifest.push_back(std::move(entry));
        }
        header["mask_threshold_bits"] = std::bit_cast<std::uint32_t>(mask->threshold);
    }
    header["blobs"] = std::move(manifest);

    const std::string header_str = header.dump();
    std::vector<std::uint8_t> out;
    out.push_back('D');
    out.push_back('F');
    out.push_back('K');
    out.push_back('D');
    append_u32(out, kCheckpointVersion);
    append_u64(out, header_str.size());
    out.insert(out.end(), header_str.begin(), header_str.end());

    for (const auto& [name, t] : tensors) {
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(t.data());
        out.insert(out.end(), bytes, bytes + t.numel() * sizeof(float));
    }
    if (mask)
        for (const auto& e : mask->entries)
            out.insert(out.end(), e.keep.begin(), e.keep.end());
    return out;
}

void save_checkpoint(const Model& model, const MaskSet* mask, const std::string& path) {
    write_file_bytes(path, serialize_checkpoint(model, mask));
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16)
        throw FormatError("corrupt checkpoint: truncated before header (offset " +
                          std::to_string(bytes.size()) + ")");
    if (std::memcmp(bytes.data(), "DFKD", 4) != 0)
        throw FormatError("corrupt checkpoint: bad magic at offset 0");
    const std::uint32_t version = read_u32(bytes, 4);
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t header_len = read_u64(bytes, 8);
    if (16 + header_len > bytes.size())
        throw FormatError("corrupt checkpoint: header extends past end of file (offset 16, "
                          "header length " + std::to_string(header_len) + ")");

    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint: invalid JSON header: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        const auto& arch = header.at("arch");
        std::array<std::int64_t, 3> input_chw = {arch.at("input").at(0).get<std::int64_t>(),
                                                 arch.at("input").at(1).get<std::int64_t>(),
                                                 arch.at("input").at(2).get<std::int64_t>()};
        std::vector<LayerSpec> specs;
        for (const auto& lj : arch.at("layers")) specs.push_back(spec_from_json(lj));
        ckpt.model = Model::build(std::move(specs), input_chw, nullptr);
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint: bad architecture descriptor: ") +
                          e.what());
    }

    auto tensors = ckpt.model.named_tensors();
    std::size_t offset = 16 + header_len;
    std::size_t tensor_idx = 0;
    MaskSet mask;
    bool has_mask = false;

    for (const auto& blob : header.at("blobs")) {
        const std::string name = blob.at("name").get<std::string>();
        const std::string dtype = blob.at("dtype").get<std::string>();
        std::int64_t count = 1;
        for (const auto& d : blob.at("shape")) count *= d.get<std::int64_t>();
        const std::size_t byte_len =
            static_cast<std::size_t>(count) * (dtype == "f32" ? sizeof(float) : 1);
        if (offset + byte_len > bytes.size())
            throw FormatError("corrupt checkpoint: truncated, missing blob '" + name +
                              "' at offset " + std::to_string(offset));

        if (dtype == "f32") {
            if (tensor_idx >= tensors.size() || tensors[tensor_idx].first != name)
                throw FormatError("corrupt checkpoint: unexpected blob '" + name + "'");
            Tensor t = tensors[tensor_idx].second;
            if (t.numel() != count)
                throw FormatError("corrupt checkpoint: blob '" + name + "' has " +
                                  std::to_string(count) + " elements, model expects " +
                                  std::to_string(t.numel()));
            std::memcpy(t.data(), bytes.data() + offset, byte_len);
            ++tensor_idx;
        } else if (dtype == "u8") {
            if (name.rfind("mask:", 0) != 0)
                throw FormatError("corrupt checkpoint: unexpected u8 blob '" + name + "'");
            MaskSet::Entry entry;
            entry.name = name.substr(5);
            entry.keep.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                              bytes.begin() + static_cast<std::ptrdiff_t>(offset + byte_len));
            mask.entries.push_back(std::move(entry));
            has_mask = true;
        } else {
            throw FormatError("corrupt checkpoint: unknown dtype '" + dtype + "'");
        }
        offset += byte_len;
    }
    if (tensor_idx != tensors.size())
        throw FormatError("corrupt checkpoint: missing blob '" + tensors[tensor_idx].first +
                          "' (manifest ended at offset " + std::to_string(offset) + ")");

    // validate loaded values
    for (const auto& [name, t] : tensors) {
        const float* v = t.data();
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            if (!std::isfinite(v[i]))
                throw FormatError("corrupt checkpoint: non-finite value in '" + name + "'");
        }
        if (name.size() > 12 && name.substr(name.size() - 12) == ".running_var") {
            for (std::int64_t i = 0; i < t.numel(); ++i)
                if (v[i] < 0.0f)
                    throw FormatError("corrupt checkpoint: negative running variance in '" +
                                      name + "'");
        }
    }

    if (has_mask) {
        if (header.contains("mask_threshold_bits"))
            mask.threshold =
                std::bit_cast<float>(header.at("mask_threshold_bits").get<std::uint32_t>());
        ckpt.mask = std::move(mask);
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file_bytes(path));
}

std::string model_hash(const Model& model) {
    const auto bytes = serialize_checkpoint(model, nullptr);
    return to_hex(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace dfkd
