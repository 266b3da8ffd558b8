#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abclstm/abc.hpp"
#include "abclstm/corpus.hpp"
#include "abclstm/error.hpp"
#include "abclstm/model.hpp"
#include "abclstm/numerics.hpp"

#include <json.hpp>

namespace abclstm {

enum class SampleMode { stochastic, greedy };

struct SampleConfig {
    std::string seed_text = "X:1\n";
    std::size_t length = 400;
    double temperature = 1.0;
    std::uint64_t rng_seed = 0;
    SampleMode mode = SampleMode::stochastic;

    void validate() const {
        if (length < 1) throw ValueError("length must be >= 1");
        if (!(temperature > 0.0)) throw ValueError("temperature must be > 0");
        if (seed_text.empty()) throw ValueError("seed text must not be empty");
    }
};

/// softmax(logits / T).
inline std::vector<double> temperature_scale(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw ValueError("temperature must be > 0, got " + std::to_string(temperature));
    std::vector<double> out(logits.begin(), logits.end());
    for (double& v : out) v /= temperature;
    softmax_inplace(out);
    return out;
}

/// Called once per generated character with the raw logits and the id
/// that was chosen.
using SampleObserver = std::function<void(std::span<const double> logits, std::size_t chosen)>;

/// Warms the state on the seed text (eval mode, batch 1), then emits
/// `cfg.length` characters. Returns seed + generated text.
inline std::string generate(const ModelParams& params, const Vocabulary& vocab, const SampleConfig& cfg,
                            const SampleObserver& observer = {}) {
    cfg.validate();
    if (vocab.size() != params.config.vocab_size)
        throw ValueError("vocabulary has " + std::to_string(vocab.size()) + " characters but the model expects " +
                         std::to_string(params.config.vocab_size));
    const std::vector<int> seed_ids = encode(cfg.seed_text, vocab);

    Rng unused(0);
    Rng sampling = Rng(cfg.rng_seed).substream("sampling");
    LstmState state = LstmState::zeros(params.config, 1);

    IdMatrix warm(1, seed_ids.size());
    for (std::size_t t = 0; t < seed_ids.size(); ++t) warm(0, t) = seed_ids[t];
    ForwardResult fwd = forward(params, warm, state, Mode::eval, unused);
    state = std::move(fwd.state);
    Matrix logits = std::move(fwd.logits.back());

    std::string out = cfg.seed_text;
    out.reserve(cfg.seed_text.size() + cfg.length);
    for (std::size_t i = 0; i < cfg.length; ++i) {
        const auto row = logits.row(0);
        std::size_t next;
        if (cfg.mode == SampleMode::greedy) {
            next = argmax(row);
        } else {
            const std::vector<double> probs = temperature_scale(row, cfg.temperature);
            next = sample_categorical(probs, sampling);
        }
        if (next >= vocab.size()) throw Error("sampled id outside the vocabulary");
        if (observer) observer(row, next);
        out += vocab.char_at(next);
        if (i + 1 == cfg.length) break;
        IdMatrix step(1, 1, static_cast<int>(next));
        ForwardResult f = forward(params, step, state, Mode::eval, unused);
        state = std::move(f.state);
        logits = std::move(f.logits.front());
    }
    return out;
}

struct ScoreReport {
    double score = 0.0;
    std::size_t total_lines = 0;
    std::size_t valid_lines = 0;
    std::vector<Diagnostic> diagnostics;
    std::string note;

    nlohmann::json to_json() const {
        nlohmann::json diags = nlohmann::json::array();
        for (const auto& d : diagnostics) diags.push_back({{"line_no", d.line_no}, {"reason", d.reason}});
        nlohmann::json j = {{"score", score},
                            {"total_lines", total_lines},
                            {"valid_lines", valid_lines},
                            {"diagnostics", diags}};
        if (!note.empty()) j["note"] = note;
        return j;
    }
};

/// Line-level validity: field lines (`<letter>:<rest>`) and comment lines
/// are valid; any other non-blank line must tokenize with no diagnostics.
inline ScoreReport grammar_score(std::string_view text) {
    ScoreReport rep;
    const std::string norm = normalize_newlines(text);
    BodyContext ctx;
    std::vector<TuneEvent> events;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < norm.size()) {
        std::size_t end = norm.find('\n', pos);
        if (end == std::string::npos) end = norm.size();
        const std::string_view line = std::string_view(norm).substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (detail::is_blank(line)) continue;
        ++rep.total_lines;
        if (line.front() == '%') {
            ++rep.valid_lines;
            continue;
        }
        if (is_field_line(line)) {
            if (line[0] == 'X') ctx = BodyContext{};
            bool ok = true;
            try {
                const std::string_view value = line.substr(2);
                if (line[0] == 'K') ctx.key = parse_key(value);
                else if (line[0] == 'L') ctx.unit = parse_unit_length(value);
                else if (line[0] == 'M') ctx.meter = parse_meter(value);
            } catch (const ParseError& e) {
                rep.diagnostics.push_back({line_no, e.what()});
                ok = false;
            }
            rep.valid_lines += ok;
            continue;
        }
        std::vector<Diagnostic> diags;
        events.clear();
        ctx.last_timed.reset();
        ctx.broken_next.reset();
        parse_body_line(line, line_no, ctx, events, diags);
        if (diags.empty()) {
            ++rep.valid_lines;
        } else {
            rep.diagnostics.insert(rep.diagnostics.end(), diags.begin(), diags.end());
        }
    }
    if (rep.total_lines == 0) {
        rep.note = "empty text";
        return rep;
    }
    rep.score = static_cast<double>(rep.valid_lines) / static_cast<double>(rep.total_lines);
    return rep;
}

} // namespace abclstm
