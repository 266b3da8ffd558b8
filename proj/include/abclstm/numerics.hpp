#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "abclstm/error.hpp"

namespace abclstm {

/// Dense row-major matrix of doubles. Vectors are 1×n matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : init) {
            if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

// Counter-based generator: draw n is a pure function of (key, n), so a
// substream is just a derived key and needs no saved state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), key_(detail::mix64(seed + 0x9E3779B97F4A7C15ULL)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    Rng substream(std::string_view name) const { return derived(detail::fnv1a(name)); }
    Rng substream(std::uint64_t index) const { return derived(detail::mix64(index + 0xD1B54A32D192ED03ULL)); }

    std::uint64_t next_u64() noexcept {
        return detail::mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) noexcept { return uniform() < p; }

private:
    Rng derived(std::uint64_t salt) const {
        Rng r(seed_);
        r.key_ = detail::mix64(key_ ^ detail::mix64(salt));
        return r;
    }

    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// ---- elementwise ---------------------------------------------------------

inline Matrix add(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "add");
    Matrix out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return out;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "subtract");
    Matrix out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "hadamard");
    Matrix out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
    return out;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

// dst += s * src
inline void axpy(Matrix& dst, const Matrix& src, double s = 1.0) {
    detail::require_same_shape(dst, src, "axpy");
    auto d = dst.values();
    auto v = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * v[i];
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

inline bool all_finite(const Matrix& m) {
    return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

inline double squared_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return s;
}

// ---- products ------------------------------------------------------------

/// out += a * b. Zero entries of `a` are skipped, which makes one-hot
/// inputs cost one row update each.
inline void add_matmul(Matrix& out, const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimension mismatch " + a.shape_str() + " * " + b.shape_str());
    if (out.rows() != a.rows() || out.cols() != b.cols())
        throw ShapeError("matmul: output shape " + out.shape_str() + " for " + a.shape_str() + " * " + b.shape_str());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* br = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
        }
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimension mismatch " + a.shape_str() + " * " + b.shape_str());
    Matrix out(a.rows(), b.cols());
    add_matmul(out, a, b);
    return out;
}

/// out += transpose(a) * b
inline void add_matmul_tn(Matrix& out, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: row mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (out.rows() != a.cols() || out.cols() != b.cols())
        throw ShapeError("matmul_tn: output shape " + out.shape_str());
    const std::size_t n = b.cols();
    for (std::size_t p = 0; p < a.rows(); ++p) {
        const double* br = b.row(p).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double api = a(p, i);
            if (api == 0.0) continue;
            double* o = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += api * br[j];
        }
    }
}

inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix out(a.cols(), b.cols());
    add_matmul_tn(out, a, b);
    return out;
}

// ---- activations ---------------------------------------------------------

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Matrix sigmoid(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.values()) v = sigmoid(v);
    return out;
}

inline Matrix tanh_el(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.values()) v = std::tanh(v);
    return out;
}

inline void softmax_inplace(std::span<double> row) {
    if (row.empty()) return;
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : row) v /= sum;
}

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
    return out;
}

inline constexpr double kProbFloor = 1e-12;

/// Mean over rows of -log(probs[row][target]).
inline double cross_entropy(const Matrix& probs, std::span<const int> targets) {
    if (targets.size() != probs.rows())
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         probs.shape_str() + " probabilities");
    if (probs.rows() == 0) throw ShapeError("cross_entropy: empty input");
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= probs.cols())
            throw ValueError("cross_entropy: target " + std::to_string(t) + " out of range at row " +
                             std::to_string(r));
        total -= std::log(std::max(probs(r, static_cast<std::size_t>(t)), kProbFloor));
    }
    return total / static_cast<double>(probs.rows());
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

/// Inverse-CDF draw from a normalized probability row.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
    if (probs.empty()) throw ValueError("sample_categorical: empty distribution");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ValueError("sample_categorical: negative or NaN probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        std::ostringstream msg;
        msg << "sample_categorical: probabilities sum to " << sum << ", expected 1";
        throw ValueError(msg.str());
    }
    const double u = rng.uniform() * sum;
    double cdf = 0.0;
    std::size_t last_nonzero = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) last_nonzero = i;
        cdf += probs[i];
        if (u < cdf) return i;
    }
    return last_nonzero;
}

} // namespace abclstm
