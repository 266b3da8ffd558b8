#pragma once

#include <cmath>
#include <concepts>
#include <type_traits>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "abclstm/corpus.hpp"
#include "abclstm/error.hpp"
#include "abclstm/numerics.hpp"

namespace abclstm {

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden_size = 256;
    std::size_t num_layers = 3;
    double dropout = 0.2;

    void validate() const {
        if (vocab_size < 2) throw ValueError("vocab_size must be >= 2");
        if (hidden_size < 1) throw ValueError("hidden_size must be >= 1");
        if (num_layers < 1) throw ValueError("num_layers must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ValueError("dropout must be in [0, 1)");
    }

    std::size_t input_size(std::size_t layer) const noexcept { return layer == 0 ? vocab_size : hidden_size; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Gate blocks are stacked along the 4H axis in this order.
enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };

struct LayerParams {
    Matrix W; // 4H × D
    Matrix U; // 4H × H
    Matrix b; // 1 × 4H
};

/// Dense projection shared by every timestep.
struct OutputParams {
    Matrix Wy; // V × H
    Matrix by; // 1 × V
};

struct ModelParams {
    ModelConfig config;
    std::vector<LayerParams> layers;
    OutputParams out;
};

/// Same layout as ModelParams, holding d loss / d parameter.
using Gradients = ModelParams;

/// Visits every tensor in declaration order: per layer W, U, b; then Wy, by.
/// `rank` is 1 for bias vectors and 2 otherwise.
template <typename Params, typename Fn>
    requires std::same_as<std::remove_const_t<Params>, ModelParams>
void for_each_tensor(Params& params, Fn&& fn) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        fn(prefix + "W", layer.W, 2);
        fn(prefix + "U", layer.U, 2);
        fn(prefix + "b", layer.b, 1);
    }
    fn(std::string("out.Wy"), params.out.Wy, 2);
    fn(std::string("out.by"), params.out.by, 1);
}

/// Pairwise walk over two parameter sets with identical layout.
template <typename A, typename B, typename Fn>
void for_each_tensor_pair(A& a, B& b, Fn&& fn) {
    std::vector<decltype(&b.out.Wy)> rhs;
    for_each_tensor(b, [&](const std::string&, auto& m, int) { rhs.push_back(&m); });
    std::size_t i = 0;
    for_each_tensor(a, [&](const std::string& name, auto& m, int rank) {
        if (i >= rhs.size() || !m.same_shape(*rhs[i]))
            throw ShapeError("parameter layout mismatch at " + name);
        fn(name, m, *rhs[i], rank);
        ++i;
    });
    if (i != rhs.size()) throw ShapeError("parameter layout mismatch: tensor count differs");
}

inline ModelParams zeros_like(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t H = cfg.hidden_size;
    ModelParams p;
    p.config = cfg;
    for (std::size_t l = 0; l < cfg.num_layers; ++l)
        p.layers.push_back({Matrix(4 * H, cfg.input_size(l)), Matrix(4 * H, H), Matrix(1, 4 * H)});
    p.out = {Matrix(cfg.vocab_size, H), Matrix(1, cfg.vocab_size)};
    return p;
}

inline ModelParams zeros_like(const ModelParams& params) {
    return zeros_like(params.config);
}

inline std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    for_each_tensor(params, [&](const std::string&, const Matrix& m, int) { n += m.size(); });
    return n;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases except the
/// forget gate slice which starts at 1.
inline ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
    ModelParams p = zeros_like(cfg);
    const std::size_t H = cfg.hidden_size;
    auto fill_uniform = [&](Matrix& m, std::size_t fan_in) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : m.values()) v = rng.uniform(-s, s);
    };
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        auto& layer = p.layers[l];
        fill_uniform(layer.W, cfg.input_size(l));
        fill_uniform(layer.U, H);
        for (std::size_t j = 0; j < H; ++j) layer.b(0, kForgetGate * H + j) = 1.0;
    }
    fill_uniform(p.out.Wy, H);
    return p;
}

/// Per-layer hidden and memory vectors, B×H each.
struct LstmState {
    std::vector<Matrix> h;
    std::vector<Matrix> c;

    static LstmState zeros(const ModelConfig& cfg, std::size_t batch) {
        LstmState s;
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            s.h.emplace_back(batch, cfg.hidden_size);
            s.c.emplace_back(batch, cfg.hidden_size);
        }
        return s;
    }

    std::size_t batch() const noexcept { return h.empty() ? 0 : h.front().rows(); }
};

/// Everything one cell step needs for its backward pass.
struct CellCache {
    Matrix x;      // B × D
    Matrix h_prev; // B × H
    Matrix c_prev; // B × H
    Matrix gates;  // B × 4H, activated: [i | f | o | g]
    Matrix c;      // B × H
    Matrix tanh_c; // B × H
};

struct CellOutput {
    Matrix h;
    Matrix c;
    CellCache cache;
};

namespace detail {

inline void check_cell_shapes(const Matrix& x, const Matrix& h_prev, const Matrix& c_prev, std::size_t in_dim,
                              std::size_t hidden) {
    if (x.cols() != in_dim)
        throw ShapeError("lstm cell: input has " + std::to_string(x.cols()) + " columns, weights expect " +
                         std::to_string(in_dim));
    if (h_prev.rows() != x.rows() || h_prev.cols() != hidden || !c_prev.same_shape(h_prev))
        throw ShapeError("lstm cell: state shape " + h_prev.shape_str() + "/" + c_prev.shape_str() +
                         " does not match batch " + std::to_string(x.rows()) + " and hidden " +
                         std::to_string(hidden));
}

// Forward step with weights already transposed (D×4H, H×4H) so every
// product is a row-axpy.
inline CellOutput cell_forward_t(const Matrix& x, const Matrix& h_prev, const Matrix& c_prev, const Matrix& WT,
                                 const Matrix& UT, const Matrix& bias) {
    const std::size_t H = UT.rows();
    const std::size_t B = x.rows();
    check_cell_shapes(x, h_prev, c_prev, WT.rows(), H);

    Matrix gates(B, 4 * H);
    for (std::size_t r = 0; r < B; ++r) {
        auto g = gates.row(r);
        auto bv = bias.row(0);
        std::copy(bv.begin(), bv.end(), g.begin());
    }
    add_matmul(gates, x, WT);
    add_matmul(gates, h_prev, UT);

    CellOutput out{Matrix(B, H), Matrix(B, H), {}};
    Matrix tanh_c(B, H);
    for (std::size_t r = 0; r < B; ++r) {
        double* g = gates.row(r).data();
        for (std::size_t j = 0; j < H; ++j) {
            const double i = sigmoid(g[j]);
            const double f = sigmoid(g[H + j]);
            const double o = sigmoid(g[2 * H + j]);
            const double cand = std::tanh(g[3 * H + j]);
            g[j] = i;
            g[H + j] = f;
            g[2 * H + j] = o;
            g[3 * H + j] = cand;
            const double c = f * c_prev(r, j) + i * cand;
            const double tc = std::tanh(c);
            out.c(r, j) = c;
            tanh_c(r, j) = tc;
            out.h(r, j) = o * tc;
        }
    }
    out.cache = {x, h_prev, c_prev, std::move(gates), out.c, std::move(tanh_c)};
    return out;
}

} // namespace detail

/// One LSTM step for a batch of inputs:
///   i = σ(Wi x + Ui h + bi), f = σ(Wf x + Uf h + bf), o = σ(Wo x + Uo h + bo),
///   g = tanh(Wg x + Ug h + bg), c = f⊙c_prev + i⊙g, h = o⊙tanh(c).
inline CellOutput lstm_cell_forward(const Matrix& x, const Matrix& h_prev, const Matrix& c_prev,
                                    const LayerParams& params) {
    if (params.W.rows() != 4 * params.U.cols() || params.U.rows() != 4 * params.U.cols())
        throw ShapeError("lstm cell: malformed layer parameters");
    return detail::cell_forward_t(x, h_prev, c_prev, transpose(params.W), transpose(params.U), params.b);
}

struct CellGradients {
    Matrix dx;     // empty when not requested
    Matrix dh_prev;
    Matrix dc_prev;
};

/// Backward through one step. Adds parameter gradients into `grads`.
inline CellGradients lstm_cell_backward(const Matrix& dh, const Matrix& dc_next, const CellCache& cache,
                                        const LayerParams& params, LayerParams& grads, bool want_dx = true) {
    const std::size_t B = cache.c.rows();
    const std::size_t H = cache.c.cols();
    if (!dh.same_shape(cache.c) || !dc_next.same_shape(cache.c))
        throw ShapeError("lstm cell backward: gradient shape " + dh.shape_str() + " vs state " +
                         cache.c.shape_str());

    Matrix da(B, 4 * H);
    CellGradients out{{}, {}, Matrix(B, H)};
    for (std::size_t r = 0; r < B; ++r) {
        const double* g = cache.gates.row(r).data();
        double* a = da.row(r).data();
        for (std::size_t j = 0; j < H; ++j) {
            const double i = g[j];
            const double f = g[H + j];
            const double o = g[2 * H + j];
            const double cand = g[3 * H + j];
            const double tc = cache.tanh_c(r, j);
            const double dhv = dh(r, j);
            const double dc = dhv * o * (1.0 - tc * tc) + dc_next(r, j);
            const double d_o = dhv * tc;
            const double d_i = dc * cand;
            const double d_g = dc * i;
            const double d_f = dc * cache.c_prev(r, j);
            out.dc_prev(r, j) = dc * f;
            a[j] = d_i * i * (1.0 - i);
            a[H + j] = d_f * f * (1.0 - f);
            a[2 * H + j] = d_o * o * (1.0 - o);
            a[3 * H + j] = d_g * (1.0 - cand * cand);
        }
    }
    add_matmul_tn(grads.W, da, cache.x);
    add_matmul_tn(grads.U, da, cache.h_prev);
    for (std::size_t r = 0; r < B; ++r) {
        auto a = da.row(r);
        auto gb = grads.b.row(0);
        for (std::size_t j = 0; j < 4 * H; ++j) gb[j] += a[j];
    }
    if (want_dx) out.dx = matmul(da, params.W);
    out.dh_prev = matmul(da, params.U);
    return out;
}

enum class Mode { train, eval };

struct ForwardCache {
    ModelConfig config;
    std::size_t batch = 0;
    std::vector<std::vector<CellCache>> cells; // [t][layer]
    std::vector<Matrix> masks;                 // [layer], scaled keep-masks; empty when dropout is off
    std::vector<Matrix> top;                   // [t], dropped output of the last layer
};

struct ForwardResult {
    std::vector<Matrix> logits; // [t] B×V
    std::vector<Matrix> probs;  // [t] B×V
    LstmState state;            // final h, c of every layer
    ForwardCache cache;
};

namespace detail {

inline void apply_mask(Matrix& m, const Matrix& mask) {
    auto v = m.values();
    auto k = mask.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= k[i];
}

} // namespace detail

/// Runs a B×L block of ids through the stack. Train mode applies inverted
/// dropout after every LSTM layer with one mask per layer for the whole
/// block, drawn from `rng`. Eval mode never touches `rng`.
inline ForwardResult forward(const ModelParams& params, const IdMatrix& inputs, const LstmState& state, Mode mode,
                             Rng& rng) {
    const ModelConfig& cfg = params.config;
    const std::size_t B = inputs.rows();
    const std::size_t L = inputs.cols();
    const std::size_t H = cfg.hidden_size;
    if (params.layers.size() != cfg.num_layers) throw ShapeError("forward: layer count does not match config");
    if (state.h.size() != cfg.num_layers || state.c.size() != cfg.num_layers)
        throw ShapeError("forward: state has " + std::to_string(state.h.size()) + " layers, model has " +
                         std::to_string(cfg.num_layers));
    for (std::size_t l = 0; l < cfg.num_layers; ++l)
        if (state.h[l].rows() != B || state.h[l].cols() != H || !state.c[l].same_shape(state.h[l]))
            throw ShapeError("forward: state shape " + state.h[l].shape_str() + " does not match batch " +
                             std::to_string(B) + " x hidden " + std::to_string(H));

    std::vector<Matrix> WT, UT;
    for (const auto& layer : params.layers) {
        WT.push_back(transpose(layer.W));
        UT.push_back(transpose(layer.U));
    }
    const Matrix WyT = transpose(params.out.Wy);

    ForwardResult res;
    res.state = state;
    res.cache.config = cfg;
    res.cache.batch = B;
    if (mode == Mode::train && cfg.dropout > 0.0) {
        const double keep = 1.0 - cfg.dropout;
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            Matrix mask(B, H);
            for (double& v : mask.values()) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
            res.cache.masks.push_back(std::move(mask));
        }
    }
    const bool masked = !res.cache.masks.empty();

    res.logits.reserve(L);
    res.probs.reserve(L);
    res.cache.cells.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
        Matrix x = one_hot_column(inputs.column(t), cfg.vocab_size);
        std::vector<CellCache> step;
        step.reserve(cfg.num_layers);
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            CellOutput cell =
                detail::cell_forward_t(x, res.state.h[l], res.state.c[l], WT[l], UT[l], params.layers[l].b);
            x = cell.h;
            if (masked) detail::apply_mask(x, res.cache.masks[l]);
            res.state.h[l] = std::move(cell.h);
            res.state.c[l] = std::move(cell.c);
            step.push_back(std::move(cell.cache));
        }
        Matrix logits(B, cfg.vocab_size);
        for (std::size_t r = 0; r < B; ++r) {
            auto bv = params.out.by.row(0);
            std::copy(bv.begin(), bv.end(), logits.row(r).begin());
        }
        add_matmul(logits, x, WyT);
        res.probs.push_back(softmax_rows(logits));
        res.logits.push_back(std::move(logits));
        res.cache.top.push_back(std::move(x));
        res.cache.cells.push_back(std::move(step));
    }
    return res;
}

inline ForwardResult forward(const ModelParams& params, const IdMatrix& inputs, const LstmState& state,
                             Mode mode, Rng&& rng) {
    return forward(params, inputs, state, mode, rng);
}

/// Exact BPTT for a forward block given d loss / d logits at every step.
/// Gradient does not flow into the incoming state.
inline Gradients backward(const ModelParams& params, const ForwardCache& cache, const std::vector<Matrix>& dlogits) {
    const ModelConfig& cfg = params.config;
    if (!(cache.config == cfg)) throw ShapeError("backward: cache was produced by a different model config");
    if (dlogits.size() != cache.cells.size())
        throw ShapeError("backward: " + std::to_string(dlogits.size()) + " logit gradients for " +
                         std::to_string(cache.cells.size()) + " cached steps");
    const std::size_t B = cache.batch;
    const std::size_t H = cfg.hidden_size;
    const std::size_t top_layer = cfg.num_layers - 1;
    const bool masked = !cache.masks.empty();

    Gradients grads = zeros_like(params);
    std::vector<Matrix> dh_next(cfg.num_layers, Matrix(B, H));
    std::vector<Matrix> dc_next(cfg.num_layers, Matrix(B, H));

    for (std::size_t t = cache.cells.size(); t-- > 0;) {
        const Matrix& dl = dlogits[t];
        if (dl.rows() != B || dl.cols() != cfg.vocab_size)
            throw ShapeError("backward: logit gradient shape " + dl.shape_str() + " at step " + std::to_string(t));
        add_matmul_tn(grads.out.Wy, dl, cache.top[t]);
        for (std::size_t r = 0; r < B; ++r) {
            auto d = dl.row(r);
            auto gb = grads.out.by.row(0);
            for (std::size_t v = 0; v < d.size(); ++v) gb[v] += d[v];
        }
        Matrix d_above = matmul(dl, params.out.Wy);
        if (masked) detail::apply_mask(d_above, cache.masks[top_layer]);

        for (std::size_t l = cfg.num_layers; l-- > 0;) {
            axpy(d_above, dh_next[l]);
            CellGradients cg =
                lstm_cell_backward(d_above, dc_next[l], cache.cells[t][l], params.layers[l], grads.layers[l], l > 0);
            dh_next[l] = std::move(cg.dh_prev);
            dc_next[l] = std::move(cg.dc_prev);
            if (l > 0) {
                d_above = std::move(cg.dx);
                if (masked) detail::apply_mask(d_above, cache.masks[l - 1]);
            }
        }
    }
    return grads;
}

/// d(mean cross-entropy over all B·L positions) / d logits.
inline std::vector<Matrix> softmax_xent_grad(const std::vector<Matrix>& probs, const IdMatrix& targets) {
    if (probs.size() != targets.cols())
        throw ShapeError("loss gradient: " + std::to_string(probs.size()) + " steps vs targets " +
                         std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()));
    const double n = static_cast<double>(targets.rows() * targets.cols());
    std::vector<Matrix> d;
    d.reserve(probs.size());
    for (std::size_t t = 0; t < probs.size(); ++t) {
        Matrix g = scale(probs[t], 1.0 / n);
        if (g.rows() != targets.rows()) throw ShapeError("loss gradient: batch mismatch");
        for (std::size_t r = 0; r < g.rows(); ++r) {
            const int id = targets(r, t);
            if (id < 0 || static_cast<std::size_t>(id) >= g.cols())
                throw ValueError("target id " + std::to_string(id) + " out of range");
            g(r, static_cast<std::size_t>(id)) -= 1.0 / n;
        }
        d.push_back(std::move(g));
    }
    return d;
}

inline Gradients backward(const ModelParams& params, const ForwardResult& fwd, const IdMatrix& targets) {
    return backward(params, fwd.cache, softmax_xent_grad(fwd.probs, targets));
}

struct LossAccuracy {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Mean cross-entropy and argmax accuracy over all B·L positions.
inline LossAccuracy loss_and_accuracy(const std::vector<Matrix>& probs, const IdMatrix& targets) {
    if (probs.size() != targets.cols() || probs.empty())
        throw ShapeError("loss_and_accuracy: " + std::to_string(probs.size()) + " steps vs " +
                         std::to_string(targets.cols()) + " target columns");
    double loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t t = 0; t < probs.size(); ++t) {
        if (probs[t].rows() != targets.rows())
            throw ShapeError("loss_and_accuracy: batch mismatch at step " + std::to_string(t));
        const auto col = targets.column(t);
        loss += cross_entropy(probs[t], col) * static_cast<double>(probs[t].rows());
        for (std::size_t r = 0; r < col.size(); ++r)
            if (argmax(probs[t].row(r)) == static_cast<std::size_t>(col[r])) ++hits;
    }
    const double n = static_cast<double>(targets.rows() * targets.cols());
    return {loss / n, static_cast<double>(hits) / n};
}

} // namespace abclstm
