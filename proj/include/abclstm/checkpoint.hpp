#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "abclstm/adam.hpp"
#include "abclstm/corpus.hpp"
#include "abclstm/error.hpp"
#include "abclstm/model.hpp"

namespace abclstm {

// Checkpoint layout, all integers and floats little-endian:
//
//   "ABCL"                                 magic
//   u32 version                            kCheckpointVersion
//   u32 vocab_size, u32 hidden_size, u32 num_layers
//   f64 dropout
//   vocab_size bytes                       vocabulary characters, id order
//   u64 seed, u32 epochs_completed, f64 best_loss
//   u64 adam_step
//   tensors of params, then Adam m, then Adam v, each in for_each_tensor
//   order as: u32 rank, u32 dims[rank], f64 values[prod(dims)]

inline constexpr char kCheckpointMagic[4] = {'A', 'B', 'C', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingProgress {
    std::uint64_t seed = 0;
    std::uint32_t epochs_completed = 0;
    double best_loss = std::numeric_limits<double>::infinity();
};

struct Checkpoint {
    ModelParams params;
    Vocabulary vocab;
    AdamState adam;
    TrainingProgress progress;
};

/// Exact file size for a model of this shape.
inline std::size_t checkpoint_size(const ModelConfig& cfg) {
    std::size_t tensors = 0;
    const ModelParams shape = zeros_like(cfg);
    for_each_tensor(shape, [&](const std::string&, const Matrix& m, int rank) {
        tensors += 4 + 4 * static_cast<std::size_t>(rank) + 8 * m.size();
    });
    const std::size_t header = 4 + 4 + 3 * 4 + 8 + cfg.vocab_size + 8 + 4 + 8 + 8;
    return header + 3 * tensors;
}

namespace detail {

class ByteWriter {
public:
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::vector<char> take() { return std::move(out_); }

private:
    std::vector<char> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const char> data) : data_(data) {}

    std::span<const char> bytes(std::size_t n, const char* what) {
        need(n, what);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) {
        if (data_.size() - pos_ < n)
            throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                              std::to_string(pos_));
    }

    std::span<const char> data_;
    std::size_t pos_ = 0;
};

inline void write_tensors(ByteWriter& w, const ModelParams& p) {
    for_each_tensor(p, [&](const std::string&, const Matrix& m, int rank) {
        w.u32(static_cast<std::uint32_t>(rank));
        if (rank == 2) w.u32(static_cast<std::uint32_t>(m.rows()));
        w.u32(static_cast<std::uint32_t>(m.cols()));
        for (double v : m.values()) w.f64(v);
    });
}

inline void read_tensors(ByteReader& r, ModelParams& p) {
    for_each_tensor(p, [&](const std::string& name, Matrix& m, int rank) {
        const std::uint32_t got_rank = r.u32("tensor rank");
        if (got_rank != static_cast<std::uint32_t>(rank))
            throw FormatError("checkpoint tensor " + name + ": rank " + std::to_string(got_rank) + ", expected " +
                              std::to_string(rank));
        const std::size_t rows = rank == 2 ? r.u32("tensor dims") : 1;
        const std::size_t cols = r.u32("tensor dims");
        if (rows != m.rows() || cols != m.cols())
            throw FormatError("checkpoint tensor " + name + ": shape " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", expected " + m.shape_str());
        for (double& v : m.values()) v = r.f64("tensor values");
    });
}

} // namespace detail

inline std::vector<char> serialize_checkpoint(const Checkpoint& ck) {
    const ModelConfig& cfg = ck.params.config;
    cfg.validate();
    if (ck.vocab.size() != cfg.vocab_size)
        throw ValueError("checkpoint vocabulary has " + std::to_string(ck.vocab.size()) + " chars, model expects " +
                         std::to_string(cfg.vocab_size));
    detail::ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, 4));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(cfg.vocab_size));
    w.u32(static_cast<std::uint32_t>(cfg.hidden_size));
    w.u32(static_cast<std::uint32_t>(cfg.num_layers));
    w.f64(cfg.dropout);
    w.bytes(ck.vocab.chars());
    w.u64(ck.progress.seed);
    w.u32(ck.progress.epochs_completed);
    w.f64(ck.progress.best_loss);
    w.u64(ck.adam.t);
    detail::write_tensors(w, ck.params);
    detail::write_tensors(w, ck.adam.m);
    detail::write_tensors(w, ck.adam.v);
    return w.take();
}

inline Checkpoint deserialize_checkpoint(std::span<const char> data) {
    detail::ByteReader r(data);
    const auto magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    ModelConfig cfg;
    cfg.vocab_size = r.u32("config");
    cfg.hidden_size = r.u32("config");
    cfg.num_layers = r.u32("config");
    cfg.dropout = r.f64("config");
    try {
        cfg.validate();
    } catch (const ValueError& e) {
        throw FormatError(std::string("checkpoint holds an invalid model config: ") + e.what());
    }
    const auto chars = r.bytes(cfg.vocab_size, "vocabulary");
    Checkpoint ck;
    ck.vocab = Vocabulary::from_chars(std::string_view(chars.data(), chars.size()));
    ck.progress.seed = r.u64("seed");
    ck.progress.epochs_completed = r.u32("epoch counter");
    ck.progress.best_loss = r.f64("best loss");
    ck.params = zeros_like(cfg);
    ck.adam = AdamState::zeros(ck.params);
    ck.adam.t = r.u64("adam step");
    detail::read_tensors(r, ck.params);
    detail::read_tensors(r, ck.adam.m);
    detail::read_tensors(r, ck.adam.v);
    if (r.remaining() != 0)
        throw FormatError("checkpoint has " + std::to_string(r.remaining()) + " unexpected trailing bytes");
    return ck;
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ck);
    write_file_atomic(path, bytes);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    try {
        return deserialize_checkpoint(std::span<const char>(data.data(), data.size()));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace abclstm
