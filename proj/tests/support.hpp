#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "abclstm/model.hpp"

namespace abclstm::test_support {

inline double segment_loss(const ModelParams& p, const IdMatrix& in, const IdMatrix& tg, const LstmState& s0) {
    const ForwardResult f = forward(p, in, s0, Mode::eval, Rng(0));
    double loss = 0.0;
    for (std::size_t t = 0; t < f.probs.size(); ++t) loss += cross_entropy(f.probs[t], tg.column(t));
    return loss / static_cast<double>(f.probs.size());
}

struct GradCheck {
    std::map<std::string, double> rel_error; // per tensor
    double worst = 0.0;
};

/// Central differences on every scalar parameter, compared per tensor by
/// ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline GradCheck gradient_check(const ModelParams& params, const IdMatrix& in, const IdMatrix& tg,
                                const LstmState& s0, double eps = 1e-5) {
    ModelParams p = params;
    const ForwardResult f = forward(p, in, s0, Mode::train, Rng(0));
    const Gradients analytic = backward(p, f, tg);

    std::vector<Matrix*> ps;
    std::vector<const Matrix*> gs;
    std::vector<std::string> names;
    for_each_tensor(p, [&](const std::string& name, Matrix& m, int) {
        ps.push_back(&m);
        names.push_back(name);
    });
    for_each_tensor(analytic, [&](const std::string&, const Matrix& m, int) { gs.push_back(&m); });

    GradCheck out;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        auto vals = ps[k]->values();
        auto ga = gs[k]->values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double lp = segment_loss(p, in, tg, s0);
            vals[i] = orig - eps;
            const double lm = segment_loss(p, in, tg, s0);
            vals[i] = orig;
            const double num = (lp - lm) / (2.0 * eps);
            diff2 += (num - ga[i]) * (num - ga[i]);
            a2 += ga[i] * ga[i];
            n2 += num * num;
        }
        const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
        const double rel = denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
        out.rel_error[names[k]] = rel;
        out.worst = std::max(out.worst, rel);
    }
    return out;
}

/// Fixture for the gradient criterion: V=11, H=8, 3 layers, B=2, L=5, p=0,
/// non-zero incoming state.
struct GradCase {
    ModelParams params;
    IdMatrix inputs;
    IdMatrix targets;
    LstmState state;
};

inline GradCase make_grad_case(std::uint64_t seed = 17) {
    GradCase c;
    ModelConfig cfg{11, 8, 3, 0.0};
    Rng rng(seed);
    c.params = init_params(cfg, rng);
    // perturb biases so every gate sees non-trivial values
    for (auto& layer : c.params.layers)
        for (double& v : layer.b.values()) v += rng.uniform(-0.5, 0.5);
    for (double& v : c.params.out.by.values()) v = rng.uniform(-0.5, 0.5);
    c.inputs = IdMatrix(2, 5);
    c.targets = IdMatrix(2, 5);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < 5; ++t) {
            c.inputs(b, t) = static_cast<int>(rng.next_u64() % 11);
            c.targets(b, t) = static_cast<int>(rng.next_u64() % 11);
        }
    c.state = LstmState::zeros(cfg, 2);
    for (std::size_t l = 0; l < 3; ++l) {
        for (double& v : c.state.h[l].values()) v = rng.uniform(-0.5, 0.5);
        for (double& v : c.state.c[l].values()) v = rng.uniform(-1.0, 1.0);
    }
    return c;
}

} // namespace abclstm::test_support
