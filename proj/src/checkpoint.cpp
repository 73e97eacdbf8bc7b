#include "gmlp/checkpoint.hpp"

#include <cstdio>
#include <fstream>

namespace gmlp::io {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'L', 'P'};

[[noreturn]] void corrupt(std::uint64_t offset, const std::string& what) {
    throw std::runtime_error("checkpoint: " + what + " at offset " + std::to_string(offset));
}

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("checkpoint: cannot open " + path);
    }

    void read(void* dst, std::size_t len, const char* what) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(len));
        if (static_cast<std::size_t>(in_.gcount()) != len)
            corrupt(offset_ + static_cast<std::uint64_t>(in_.gcount()),
                    std::string("truncated while reading ") + what);
        offset_ += len;
    }

    template <typename U>
    U scalar(const char* what) {
        U v;
        read(&v, sizeof(U), what);
        return v;
    }

    std::uint64_t offset() const { return offset_; }

private:
    std::ifstream in_;
    std::uint64_t offset_ = 0;
};

}  // namespace

void save_raw(const std::string& path, const std::vector<RawEntry>& entries) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
        out.write(kMagic, 4);
        const std::uint32_t version = kCheckpointVersion;
        out.write(reinterpret_cast<const char*>(&version), 4);
        const auto count = static_cast<std::uint32_t>(entries.size());
        out.write(reinterpret_cast<const char*>(&count), 4);
        for (const RawEntry& e : entries) {
            const auto name_len = static_cast<std::uint32_t>(e.name.size());
            out.write(reinterpret_cast<const char*>(&name_len), 4);
            out.write(e.name.data(), name_len);
            out.put(static_cast<char>(e.dtype));
            out.put(static_cast<char>(e.extents.size()));
            for (const std::uint64_t ext : e.extents)
                out.write(reinterpret_cast<const char*>(&ext), 8);
            out.write(reinterpret_cast<const char*>(e.payload.data()),
                      static_cast<std::streamsize>(e.payload.size()));
        }
        if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("checkpoint: rename to " + path + " failed");
}

std::vector<RawEntry> load_raw(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) corrupt(0, "bad magic bytes");
    const auto version = r.scalar<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        corrupt(4, "unsupported format version " + std::to_string(version));
    const auto count = r.scalar<std::uint32_t>("entry count");
    std::vector<RawEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        RawEntry e;
        const auto name_len = r.scalar<std::uint32_t>("name length");
        if (name_len > (1u << 20)) corrupt(r.offset() - 4, "implausible name length");
        e.name.resize(name_len);
        r.read(e.name.data(), name_len, "name");
        e.dtype = r.scalar<std::uint8_t>("dtype tag");
        if (e.dtype != 1 && e.dtype != 2) corrupt(r.offset() - 1, "unknown dtype tag");
        const auto rank = r.scalar<std::uint8_t>("rank");
        e.extents.resize(rank);
        for (auto& ext : e.extents) ext = r.scalar<std::uint64_t>("extent");
        const std::uint64_t bytes = e.numel() * (e.dtype == 1 ? 4 : 8);
        if (bytes > (1ull << 34)) corrupt(r.offset(), "implausible payload size");
        e.payload.resize(bytes);
        r.read(e.payload.data(), bytes, "payload");
        entries.push_back(std::move(e));
    }
    return entries;
}

Tensor<double> raw_to_double(const RawEntry& e) {
    Shape shape(e.extents.begin(), e.extents.end());
    Tensor<double> out(shape);
    if (e.dtype == 1) {
        const auto* src = reinterpret_cast<const float*>(e.payload.data());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(src[i]);
    } else {
        std::memcpy(out.data(), e.payload.data(), out.size() * sizeof(double));
    }
    return out;
}

}  // namespace gmlp::io
