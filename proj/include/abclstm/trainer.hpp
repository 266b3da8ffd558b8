#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "abclstm/adam.hpp"
#include "abclstm/checkpoint.hpp"
#include "abclstm/config.hpp"
#include "abclstm/corpus.hpp"
#include "abclstm/error.hpp"
#include "abclstm/model.hpp"

namespace abclstm {

struct EpochMetrics {
    std::uint32_t epoch = 0; // 1-based
    double mean_loss = 0.0;
    double accuracy = 0.0;
    double wall_time = 0.0; // seconds
};

inline constexpr const char* kMetricsHeader = "epoch,loss,accuracy,wall_time_s";

inline std::string format_metrics_row(const EpochMetrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.3f", static_cast<int>(m.epoch), m.mean_loss, m.accuracy,
                  m.wall_time);
    return buf;
}

/// Everything `train` needs. Keys of the flat config file are listed in
/// `apply`.
struct TrainConfig {
    std::uint64_t seed = 1;
    std::uint32_t epochs = 90;
    ModelConfig model{}; // vocab_size comes from the corpus
    AdamConfig adam{};
    BatchConfig batch{};
    std::vector<std::string> corpus;
    std::string out_dir = "run";
    bool record_wall_time = true;

    void apply(const KeyValues& kv) {
        for (const auto& [key, value] : kv) {
            if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
            else if (key == "epochs") epochs = parse_number<std::uint32_t>(key, value);
            else if (key == "hidden_size") model.hidden_size = parse_number<std::size_t>(key, value);
            else if (key == "num_layers") model.num_layers = parse_number<std::size_t>(key, value);
            else if (key == "dropout") model.dropout = parse_number<double>(key, value);
            else if (key == "lr") adam.learning_rate = parse_number<double>(key, value);
            else if (key == "beta1") adam.beta1 = parse_number<double>(key, value);
            else if (key == "beta2") adam.beta2 = parse_number<double>(key, value);
            else if (key == "epsilon") adam.epsilon = parse_number<double>(key, value);
            else if (key == "grad_clip") adam.grad_clip = parse_number<double>(key, value);
            else if (key == "batch_size") batch.batch_size = parse_number<std::size_t>(key, value);
            else if (key == "seq_len") batch.seq_len = parse_number<std::size_t>(key, value);
            else if (key == "corpus") corpus = parse_list(value);
            else if (key == "out_dir") out_dir = value;
            else if (key == "record_wall_time") record_wall_time = parse_bool(key, value);
            else throw ValueError("unknown config key '" + key + "'");
        }
    }

    void validate() const {
        if (epochs < 1) throw ValueError("epochs must be >= 1");
        if (corpus.empty()) throw ValueError("no corpus paths given");
        if (out_dir.empty()) throw ValueError("out_dir must not be empty");
        if (model.hidden_size < 1) throw ValueError("hidden_size must be >= 1");
        if (model.num_layers < 1) throw ValueError("num_layers must be >= 1");
        if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ValueError("dropout must be in [0, 1)");
        adam.validate();
        batch.validate();
    }
};

/// Corpus, vocabulary and batches for one training run.
struct PreparedData {
    CorpusText corpus;
    Vocabulary vocab;
    std::vector<int> ids;
    BatchSet batches;
};

inline PreparedData prepare_data(const std::vector<std::string>& paths, const BatchConfig& batch) {
    std::vector<std::filesystem::path> ps(paths.begin(), paths.end());
    PreparedData d;
    d.corpus = load_corpus(ps);
    d.vocab = build_vocabulary(d.corpus);
    d.ids = encode(d.corpus.joined(), d.vocab);
    d.batches = make_batches(d.ids, batch);
    return d;
}

/// Dropout randomness for one epoch; segment k uses `.substream(k)`.
inline Rng dropout_stream(std::uint64_t seed, std::uint32_t epoch) {
    return Rng(seed).substream("dropout").substream(static_cast<std::uint64_t>(epoch));
}

inline Rng weight_stream(std::uint64_t seed) { return Rng(seed).substream("weights"); }

/// One pass over all segments in stream order. State starts at zero and is
/// carried from segment to segment; gradients stop at segment boundaries.
inline EpochMetrics train_epoch(ModelParams& params, const BatchSet& batches, AdamState& opt, const AdamConfig& cfg,
                                const Rng& dropout_rng, std::uint32_t epoch = 1) {
    if (batches.segments.empty()) throw ValueError("train_epoch: no segments");
    const auto start = std::chrono::steady_clock::now();
    LstmState state = LstmState::zeros(params.config, batches.batch_size);
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < batches.segments.size(); ++k) {
        const Segment& seg = batches.segments[k];
        Rng rng = dropout_rng.substream(static_cast<std::uint64_t>(k));
        ForwardResult fwd = forward(params, seg.inputs, state, Mode::train, rng);
        const LossAccuracy la = loss_and_accuracy(fwd.probs, seg.targets);
        if (!std::isfinite(la.loss))
            throw DivergedError("training diverged: non-finite loss in epoch " + std::to_string(epoch) +
                                " segment " + std::to_string(k));
        const Gradients grads = backward(params, fwd, seg.targets);
        adam_step(params, grads, opt, cfg);
        const double w = static_cast<double>(seg.targets.rows() * seg.targets.cols());
        loss_sum += la.loss * w;
        acc_sum += la.accuracy * w;
        weight_sum += w;
        state = std::move(fwd.state);
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return {epoch, loss_sum / weight_sum, acc_sum / weight_sum, elapsed.count()};
}

inline std::string checkpoint_name(std::uint32_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04u.ckpt", static_cast<unsigned>(epoch));
    return buf;
}

struct TrainResult {
    std::vector<EpochMetrics> history; // epochs run by this call
    Vocabulary vocab;
    ModelParams params;
};

using EpochCallback = std::function<void(const EpochMetrics&, std::uint32_t total_epochs)>;

namespace detail {

// Keeps rows of an existing metrics.csv for epochs before `first_epoch`.
inline std::string metrics_prefix(const std::filesystem::path& csv, std::uint32_t first_epoch) {
    std::string out = std::string(kMetricsHeader) + "\n";
    if (!std::filesystem::exists(csv)) return out;
    std::istringstream in(read_text_file(csv));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        if (parse_number<std::uint32_t>("epoch", std::string_view(line).substr(0, comma)) < first_epoch)
            out += line + "\n";
    }
    return out;
}

} // namespace detail

/// Runs epochs up to `cfg.epochs`, writing epoch_####.ckpt, best.ckpt and
/// metrics.csv under `cfg.out_dir`. With `resume_from`, continues after the
/// epoch recorded in that checkpoint.
inline TrainResult train(const TrainConfig& cfg, const std::optional<std::filesystem::path>& resume_from = {},
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    PreparedData data = prepare_data(cfg.corpus, cfg.batch);
    ModelConfig mcfg = cfg.model;
    mcfg.vocab_size = data.vocab.size();

    Checkpoint ck;
    if (resume_from) {
        ck = load_checkpoint(*resume_from);
        if (!(ck.vocab == data.vocab))
            throw ValueError("resume: checkpoint vocabulary does not match the corpus");
        if (!(ck.params.config == mcfg)) throw ValueError("resume: checkpoint model config does not match run config");
        if (ck.progress.seed != cfg.seed)
            throw ValueError("resume: checkpoint was trained with seed " + std::to_string(ck.progress.seed));
    } else {
        Rng wrng = weight_stream(cfg.seed);
        ck.params = init_params(mcfg, wrng);
        ck.vocab = data.vocab;
        ck.adam = AdamState::zeros(ck.params);
        ck.progress.seed = cfg.seed;
    }

    const std::filesystem::path out(cfg.out_dir);
    std::filesystem::create_directories(out);
    const std::filesystem::path csv = out / "metrics.csv";
    std::string csv_text = detail::metrics_prefix(resume_from ? csv : std::filesystem::path{},
                                                  ck.progress.epochs_completed + 1);
    write_file_atomic(csv, csv_text);

    TrainResult result;
    for (std::uint32_t e = ck.progress.epochs_completed + 1; e <= cfg.epochs; ++e) {
        EpochMetrics m = train_epoch(ck.params, data.batches, ck.adam, cfg.adam, dropout_stream(cfg.seed, e), e);
        if (!cfg.record_wall_time) m.wall_time = 0.0;
        ck.progress.epochs_completed = e;
        const bool best = m.mean_loss < ck.progress.best_loss;
        if (best) ck.progress.best_loss = m.mean_loss;
        const auto bytes = serialize_checkpoint(ck);
        write_file_atomic(out / checkpoint_name(e), bytes);
        if (best) write_file_atomic(out / "best.ckpt", bytes);
        csv_text += format_metrics_row(m) + "\n";
        write_file_atomic(csv, csv_text);
        result.history.push_back(m);
        if (on_epoch) on_epoch(m, cfg.epochs);
    }
    result.vocab = std::move(ck.vocab);
    result.params = std::move(ck.params);
    return result;
}

} // namespace abclstm
