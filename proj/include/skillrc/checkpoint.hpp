#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "skillrc/params.hpp"
#include "skillrc/tensor.hpp"

namespace skillrc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

/// Named-tensor bundle for one trained encoder (plus its label projection
/// where the task has one). The unit of transfer between skill training
/// and the RC model; round-trips bit-exactly.
struct EncoderCheckpoint {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr char kMagic[4] = {'S', 'K', 'L', 'C'};

    std::uint32_t version = kVersion;
    std::string task_id;  // ner | qtc | te | ppdb | rc
    std::uint32_t d_in = 0;
    std::uint32_t h_out = 0;     // encoder output width (both directions)
    std::uint32_t n_labels = 0;  // 0 when the task has no label projection
    std::uint64_t vocab_hash = 0;
    std::string metadata;  // "key=value" lines, e.g. the qtc supervision mode
    std::vector<std::pair<std::string, nn::Tensor>> tensors;

    const nn::Tensor& tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return t;
        }
        throw CheckpointError("checkpoint has no tensor named '" + name + "'");
    }

    bool has_tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return true;
        }
        return false;
    }
};

namespace detail {

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw CheckpointError("checkpoint truncated");
    }
    return v;
}

inline std::string read_string(std::istream& in, std::size_t max_len = 1 << 20) {
    auto len = read_pod<std::uint32_t>(in);
    if (len > max_len) throw CheckpointError("checkpoint string length implausible");
    std::string s(len, '\0');
    if (len && !in.read(s.data(), len)) throw CheckpointError("checkpoint truncated");
    return s;
}

}  // namespace detail

inline void save_checkpoint(const EncoderCheckpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(EncoderCheckpoint::kMagic, 4);
    detail::write_pod<std::uint32_t>(out, ckpt.version);
    detail::write_string(out, ckpt.task_id);
    detail::write_pod<std::uint32_t>(out, ckpt.d_in);
    detail::write_pod<std::uint32_t>(out, ckpt.h_out);
    detail::write_pod<std::uint32_t>(out, ckpt.n_labels);
    detail::write_pod<std::uint64_t>(out, ckpt.vocab_hash);
    detail::write_string(out, ckpt.metadata);
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        detail::write_string(out, name);
        detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape) detail::write_pod<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data->data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

inline EncoderCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, EncoderCheckpoint::kMagic, 4) != 0) {
        throw CheckpointError("bad checkpoint magic in " + path);
    }
    EncoderCheckpoint ckpt;
    ckpt.version = detail::read_pod<std::uint32_t>(in);
    if (ckpt.version != EncoderCheckpoint::kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version));
    }
    ckpt.task_id = detail::read_string(in);
    ckpt.d_in = detail::read_pod<std::uint32_t>(in);
    ckpt.h_out = detail::read_pod<std::uint32_t>(in);
    ckpt.n_labels = detail::read_pod<std::uint32_t>(in);
    ckpt.vocab_hash = detail::read_pod<std::uint64_t>(in);
    ckpt.metadata = detail::read_string(in);
    auto count = detail::read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = detail::read_string(in);
        auto rank = detail::read_pod<std::uint32_t>(in);
        if (rank > 2) throw CheckpointError("checkpoint tensor rank > 2");
        std::vector<std::size_t> shape;
        std::size_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            auto d = detail::read_pod<std::uint64_t>(in);
            if (d > (1ull << 32)) throw CheckpointError("checkpoint dimension implausible");
            shape.push_back(static_cast<std::size_t>(d));
            numel *= static_cast<std::size_t>(d);
        }
        std::vector<double> data(numel);
        if (numel &&
            !in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(numel * sizeof(double)))) {
            throw CheckpointError("checkpoint truncated while reading tensor '" + name + "'");
        }
        ckpt.tensors.emplace_back(std::move(name), nn::Tensor(std::move(shape), std::move(data)));
    }
    return ckpt;
}

/// Guard for loading a checkpoint into a task slot.
inline void expect_checkpoint_task(const EncoderCheckpoint& ckpt, const std::string& task_id) {
    if (ckpt.task_id != task_id) {
        throw CheckpointError("checkpoint task id '" + ckpt.task_id + "' cannot be loaded into a '" +
                              task_id + "' slot");
    }
}

/// Snapshot a ParamStore subtree into checkpoint tensors (deep copies).
inline void append_store_tensors(EncoderCheckpoint& ckpt, const nn::ParamStore& params,
                                 const std::string& prefix = "") {
    for (const auto& [name, p] : params.entries()) {
        if (name.rfind(prefix, 0) != 0) continue;
        ckpt.tensors.emplace_back(name, nn::Tensor(p.value.shape, *p.value.data));
    }
}

}  // namespace skillrc
