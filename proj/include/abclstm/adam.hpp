#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "abclstm/error.hpp"
#include "abclstm/model.hpp"

namespace abclstm {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double grad_clip = 5.0; // max global L2 norm, 0 disables

    void validate() const {
        if (!(learning_rate > 0.0)) throw ValueError("learning rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValueError("beta1 must be in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValueError("beta2 must be in [0, 1)");
        if (!(epsilon > 0.0)) throw ValueError("epsilon must be > 0");
        if (!(grad_clip >= 0.0)) throw ValueError("grad_clip must be >= 0");
    }
};

/// First and second moments mirroring the parameter layout, plus the step
/// counter.
struct AdamState {
    ModelParams m;
    ModelParams v;
    std::uint64_t t = 0;

    static AdamState zeros(const ModelParams& params) { return {zeros_like(params), zeros_like(params), 0}; }
};

inline double global_norm(const Gradients& grads) {
    double s = 0.0;
    for_each_tensor(grads, [&](const std::string&, const Matrix& m, int) { s += squared_norm(m); });
    return std::sqrt(s);
}

/// Scale factor that brings the global norm down to `max_norm` (1 when no
/// clipping is needed or clipping is off).
inline double clip_factor(double norm, double max_norm) {
    if (max_norm <= 0.0 || !(norm > max_norm)) return 1.0;
    return max_norm / norm;
}

inline void clip_global_norm(Gradients& grads, double max_norm) {
    const double f = clip_factor(global_norm(grads), max_norm);
    if (f == 1.0) return;
    for_each_tensor(grads, [&](const std::string&, Matrix& m, int) {
        for (double& v : m.values()) v *= f;
    });
}

/// Bias-correction terms for step t (t >= 1).
struct AdamCorrection {
    double beta1, beta2, bc1, bc2, g_w1, g_w2;

    AdamCorrection(const AdamConfig& cfg, std::uint64_t t)
        : beta1(cfg.beta1), beta2(cfg.beta2),
          bc1(1.0 - std::pow(cfg.beta1, static_cast<double>(t))),
          bc2(1.0 - std::pow(cfg.beta2, static_cast<double>(t))),
          g_w1((1.0 - cfg.beta1) / bc1), g_w2((1.0 - cfg.beta2) / bc2) {}

    // Evaluated as β·prev/(1-β^t) + g·((1-β)/(1-β^t)): equal to
    // m_t/(1-β^t), and exactly g (g² for v̂) at t=1.
    double m_hat(double m_prev, double g) const noexcept { return beta1 * m_prev / bc1 + g * g_w1; }
    double v_hat(double v_prev, double g) const noexcept { return beta2 * v_prev / bc2 + (g * g) * g_w2; }
};

struct AdamStepInfo {
    double grad_norm = 0.0; // before clipping
    bool clipped = false;
};

/// One Adam update with optional global-norm clipping of `grads`.
inline AdamStepInfo adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg) {
    cfg.validate();
    AdamStepInfo info;
    info.grad_norm = global_norm(grads);
    const double clip = clip_factor(info.grad_norm, cfg.grad_clip);
    info.clipped = clip != 1.0;

    state.t += 1;
    const AdamCorrection corr(cfg, state.t);

    // Walk params, grads, m and v in lockstep.
    std::vector<Matrix*> ps, ms, vs;
    std::vector<const Matrix*> gs;
    for_each_tensor(params, [&](const std::string&, Matrix& m, int) { ps.push_back(&m); });
    for_each_tensor(grads, [&](const std::string&, const Matrix& m, int) { gs.push_back(&m); });
    for_each_tensor(state.m, [&](const std::string&, Matrix& m, int) { ms.push_back(&m); });
    for_each_tensor(state.v, [&](const std::string&, Matrix& m, int) { vs.push_back(&m); });
    if (gs.size() != ps.size() || ms.size() != ps.size() || vs.size() != ps.size())
        throw ShapeError("adam_step: gradient/state tensor count does not match parameters");

    for (std::size_t k = 0; k < ps.size(); ++k) {
        if (!gs[k]->same_shape(*ps[k]) || !ms[k]->same_shape(*ps[k]) || !vs[k]->same_shape(*ps[k]))
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(k) + " (param " +
                             ps[k]->shape_str() + ", grad " + gs[k]->shape_str() + ")");
        auto p = ps[k]->values();
        auto g = gs[k]->values();
        auto m = ms[k]->values();
        auto v = vs[k]->values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = clip == 1.0 ? g[i] : g[i] * clip;
            const double m_hat = corr.m_hat(m[i], gi);
            const double v_hat = corr.v_hat(v[i], gi);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (gi * gi);
            p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
    return info;
}

} // namespace abclstm
