#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "abclstm/error.hpp"
#include "abclstm/numerics.hpp"

namespace abclstm {

/// Tunes loaded from one or more ABC collection files.
struct CorpusText {
    std::vector<std::string> tunes;
    std::vector<std::string> source_paths;
    std::size_t dropped_fragments = 0; // blocks without an "X:" line

    /// Training stream: tunes joined by a blank line.
    std::string joined() const {
        std::string out;
        for (std::size_t i = 0; i < tunes.size(); ++i) {
            if (i) out += "\n\n";
            out += tunes[i];
        }
        return out;
    }
};

/// Replaces CRLF and lone CR with LF.
inline std::string normalize_newlines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out += '\n';
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out += text[i];
        }
    }
    return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t") == std::string_view::npos;
}

inline bool has_index_header(std::string_view block) {
    std::size_t pos = 0;
    while (pos <= block.size()) {
        std::size_t end = block.find('\n', pos);
        if (end == std::string_view::npos) end = block.size();
        if (block.substr(pos, 2) == "X:") return true;
        pos = end + 1;
    }
    return false;
}

} // namespace detail

/// Splits normalized text into blank-line separated blocks and keeps those
/// with an "X:" line. Returns the number of dropped blocks.
inline std::size_t split_tunes(std::string_view text, std::vector<std::string>& tunes) {
    std::size_t dropped = 0;
    std::string block;
    auto flush = [&] {
        if (block.empty()) return;
        if (detail::has_index_header(block))
            tunes.push_back(std::move(block));
        else
            ++dropped;
        block.clear();
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        if (detail::is_blank(line)) {
            flush();
        } else {
            if (!block.empty()) block += '\n';
            block += line;
        }
        pos = end + 1;
    }
    flush();
    return dropped;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading file: " + path.string());
    return ss.str();
}

inline CorpusText load_corpus(const std::vector<std::filesystem::path>& paths) {
    CorpusText corpus;
    for (const auto& p : paths) {
        const std::string text = normalize_newlines(read_text_file(p));
        corpus.dropped_fragments += split_tunes(text, corpus.tunes);
        corpus.source_paths.push_back(p.string());
    }
    if (corpus.tunes.empty())
        throw EmptyCorpusError("corpus contains no tunes with an X: header (" +
                               std::to_string(corpus.dropped_fragments) + " fragments dropped)");
    return corpus;
}

/// Bijection between the corpus characters and ids 0..V-1, in ascending
/// byte order.
class Vocabulary {
public:
    Vocabulary() { index_.fill(-1); }

    static Vocabulary from_text(std::string_view text) {
        std::array<bool, 256> seen{};
        for (unsigned char c : text) seen[c] = true;
        Vocabulary v;
        for (int c = 0; c < 256; ++c)
            if (seen[static_cast<std::size_t>(c)]) v.push(static_cast<char>(c));
        return v;
    }

    /// Rebuilds from an explicit character list (checkpoint load). Order is
    /// kept as given; duplicates are rejected.
    static Vocabulary from_chars(std::string_view chars) {
        Vocabulary v;
        for (char c : chars) {
            if (v.contains(c)) throw FormatError("vocabulary lists a character twice");
            v.push(c);
        }
        return v;
    }

    std::size_t size() const noexcept { return chars_.size(); }
    const std::string& chars() const noexcept { return chars_; }
    char char_at(std::size_t id) const { return chars_.at(id); }
    bool contains(char c) const noexcept { return index_[static_cast<unsigned char>(c)] >= 0; }
    int id_of(char c) const noexcept { return index_[static_cast<unsigned char>(c)]; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.chars_ == b.chars_; }

private:
    void push(char c) {
        index_[static_cast<unsigned char>(c)] = static_cast<int>(chars_.size());
        chars_ += c;
    }

    std::string chars_;
    std::array<int, 256> index_{};
};

inline Vocabulary build_vocabulary(const CorpusText& corpus) {
    if (corpus.tunes.empty()) throw EmptyCorpusError("cannot build a vocabulary from an empty corpus");
    return Vocabulary::from_text(corpus.joined());
}

namespace detail {

inline std::string describe_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x20 && u < 0x7F) return std::string("'") + c + "'";
    std::ostringstream ss;
    ss << "byte 0x" << std::hex << static_cast<int>(u);
    return ss.str();
}

} // namespace detail

inline std::vector<int> encode(std::string_view text, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        const int id = vocab.id_of(text[i]);
        if (id < 0)
            throw ValueError("unknown character " + detail::describe_char(text[i]) + " at offset " +
                             std::to_string(i));
        ids.push_back(id);
    }
    return ids;
}

inline std::string decode(std::span<const int> ids, const Vocabulary& vocab) {
    std::string out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab.size())
            throw ValueError("id " + std::to_string(ids[i]) + " out of range [0, " +
                             std::to_string(vocab.size()) + ") at offset " + std::to_string(i));
        out += vocab.char_at(static_cast<std::size_t>(ids[i]));
    }
    return out;
}

/// Row-major matrix of character ids; rows are batch streams, columns time.
class IdMatrix {
public:
    IdMatrix() = default;
    IdMatrix(std::size_t rows, std::size_t cols, int fill = 0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    IdMatrix(std::initializer_list<std::initializer_list<int>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        for (const auto& r : init) {
            if (r.size() != cols_) throw ShapeError("ragged id matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    int& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    int operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    std::span<const int> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const int> values() const noexcept { return data_; }

    /// Ids of every row at one timestep.
    std::vector<int> column(std::size_t c) const {
        std::vector<int> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    friend bool operator==(const IdMatrix&, const IdMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<int> data_;
};

/// One B×V matrix per timestep.
using OneHotSequence = std::vector<Matrix>;

inline Matrix one_hot_column(std::span<const int> ids, std::size_t vocab_size) {
    Matrix m(ids.size(), vocab_size);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab_size)
            throw ValueError("one_hot: id " + std::to_string(ids[r]) + " out of range [0, " +
                             std::to_string(vocab_size) + ")");
        m(r, static_cast<std::size_t>(ids[r])) = 1.0;
    }
    return m;
}

/// Time-major one-hot expansion: result[t](b, v) == (ids(b, t) == v).
inline OneHotSequence one_hot(const IdMatrix& ids, std::size_t vocab_size) {
    OneHotSequence out;
    out.reserve(ids.cols());
    for (std::size_t t = 0; t < ids.cols(); ++t) out.push_back(one_hot_column(ids.column(t), vocab_size));
    return out;
}

struct BatchConfig {
    std::size_t batch_size = 16;
    std::size_t seq_len = 64;

    void validate() const {
        if (batch_size < 1) throw ValueError("batch_size must be >= 1");
        if (seq_len < 1) throw ValueError("seq_len must be >= 1");
    }
};

struct Segment {
    IdMatrix inputs;  // B×L
    IdMatrix targets; // B×L, inputs shifted one step ahead
};

/// The id stream cut into B parallel contiguous streams. Row b of every
/// segment continues row b of the previous one.
struct BatchSet {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::size_t stream_len = 0;
    std::vector<Segment> segments;

    std::size_t num_segments() const noexcept { return segments.size(); }
    std::size_t supervised_positions() const noexcept { return segments.size() * batch_size * seq_len; }
};

inline std::size_t segments_per_stream(std::size_t num_ids, const BatchConfig& cfg) {
    cfg.validate();
    const std::size_t stream_len = num_ids / cfg.batch_size;
    return stream_len == 0 ? 0 : (stream_len - 1) / cfg.seq_len;
}

inline BatchSet make_batches(std::span<const int> ids, const BatchConfig& cfg) {
    cfg.validate();
    const std::size_t B = cfg.batch_size;
    const std::size_t L = cfg.seq_len;
    const std::size_t min_len = B * (L + 1);
    if (ids.size() < min_len)
        throw ValueError("corpus too small for batching: " + std::to_string(ids.size()) +
                         " ids, need at least batch_size*(seq_len+1) = " + std::to_string(min_len));
    BatchSet set;
    set.batch_size = B;
    set.seq_len = L;
    set.stream_len = ids.size() / B;
    const std::size_t S = (set.stream_len - 1) / L;
    set.segments.reserve(S);
    for (std::size_t k = 0; k < S; ++k) {
        Segment seg{IdMatrix(B, L), IdMatrix(B, L)};
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = b * set.stream_len + k * L;
            for (std::size_t t = 0; t < L; ++t) {
                seg.inputs(b, t) = ids[base + t];
                seg.targets(b, t) = ids[base + t + 1];
            }
        }
        set.segments.push_back(std::move(seg));
    }
    return set;
}

} // namespace abclstm
