#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gmlp/model.hpp"

namespace gmlp::io {

// Checkpoint container: magic "GMLP", format version u32, entry count u32,
// then per entry: name length u32 + UTF-8 name, dtype tag u8 (1 = f32,
// 2 = f64), rank u8, extents u64 each, raw little-endian scalar payload.
// Loads of truncated or malformed files are rejected with the byte offset at
// which decoding failed. Writes go to a temp file renamed into place.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct RawEntry {
    std::string name;
    std::uint8_t dtype = 0;
    std::vector<std::uint64_t> extents;
    std::vector<unsigned char> payload;

    std::uint64_t numel() const {
        std::uint64_t n = 1;
        for (const auto e : extents) n *= e;
        return n;
    }
};

void save_raw(const std::string& path, const std::vector<RawEntry>& entries);
std::vector<RawEntry> load_raw(const std::string& path);

template <typename T>
constexpr std::uint8_t dtype_tag();
template <>
constexpr std::uint8_t dtype_tag<float>() {
    return 1;
}
template <>
constexpr std::uint8_t dtype_tag<double>() {
    return 2;
}

template <typename T>
void save_params(const model::ParamStore<T>& params, const std::string& path) {
    require(params.materialized(), "save_params: store is shape-only");
    std::vector<RawEntry> entries;
    entries.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        const auto& e = params.entry(i);
        RawEntry raw;
        raw.name = e.name;
        raw.dtype = dtype_tag<T>();
        raw.extents.assign(e.shape.begin(), e.shape.end());
        raw.payload.resize(e.tensor.size() * sizeof(T));
        std::memcpy(raw.payload.data(), e.tensor.data(), raw.payload.size());
        entries.push_back(std::move(raw));
    }
    save_raw(path, entries);
}

// Restores tensors into an existing store; names, shapes, dtype and order
// must match the store exactly.
template <typename T>
void load_params(model::ParamStore<T>& params, const std::string& path) {
    const std::vector<RawEntry> entries = load_raw(path);
    require(entries.size() == params.count(),
            "load_params: checkpoint has " + std::to_string(entries.size()) +
                " entries, model expects " + std::to_string(params.count()));
    for (std::size_t i = 0; i < params.count(); ++i) {
        auto& e = params.entry(i);
        const RawEntry& raw = entries[i];
        require(raw.name == e.name, "load_params: entry '" + raw.name +
                                        "' does not match parameter '" + e.name + "'");
        require(raw.dtype == dtype_tag<T>(), "load_params: dtype mismatch for " + raw.name);
        Shape shape(raw.extents.begin(), raw.extents.end());
        require(shape == e.shape, "load_params: shape mismatch for " + raw.name);
        require(raw.payload.size() == e.tensor.size() * sizeof(T),
                "load_params: payload size mismatch for " + raw.name);
        std::memcpy(e.tensor.data(), raw.payload.data(), raw.payload.size());
    }
}

// Payload of one raw entry as a double tensor (f32 widened); for export tools.
Tensor<double> raw_to_double(const RawEntry& e);

}  // namespace gmlp::io
