#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "abclstm/abc.hpp"
#include "abclstm/checkpoint.hpp"
#include "abclstm/config.hpp"
#include "abclstm/corpus.hpp"
#include "abclstm/midi.hpp"
#include "abclstm/plot.hpp"
#include "abclstm/sampler.hpp"
#include "abclstm/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace abclstm {

namespace detail {

// "\n", "\t" and "\\" escapes, so seed text can be typed on a shell line.
inline std::string unescape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char n = s[i + 1];
            if (n == 'n') { out += '\n'; ++i; continue; }
            if (n == 't') { out += '\t'; ++i; continue; }
            if (n == '\\') { out += '\\'; ++i; continue; }
        }
        out += s[i];
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

inline void write_bytes(const std::filesystem::path& path, const Bytes& bytes) {
    write_file_atomic(path, std::span<const char>(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

} // namespace detail

struct StatsOptions {
    std::vector<std::string> corpus;
    std::optional<std::string> config;
};

inline nlohmann::json cmd_stats(const StatsOptions& opt) {
    TrainConfig cfg;
    if (opt.config) cfg.apply(load_key_values(*opt.config));
    if (!opt.corpus.empty()) cfg.corpus = opt.corpus;
    if (cfg.corpus.empty()) throw ValueError("stats: no corpus paths given");
    std::vector<std::filesystem::path> ps(cfg.corpus.begin(), cfg.corpus.end());
    const CorpusText corpus = load_corpus(ps);
    const std::string text = corpus.joined();
    const Vocabulary vocab = build_vocabulary(corpus);
    return {{"tunes", corpus.tunes.size()},
            {"chars", text.size()},
            {"vocab_size", vocab.size()},
            {"segments_at_default_batching", segments_per_stream(text.size(), cfg.batch)},
            {"dropped_fragments", corpus.dropped_fragments}};
}

struct TrainOptions {
    std::optional<std::string> config;
    std::vector<std::string> overrides; // key=value, applied after the file
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> corpus;
    std::optional<std::string> resume;
};

inline TrainConfig resolve_train_config(const TrainOptions& opt) {
    TrainConfig cfg;
    if (opt.config) cfg.apply(load_key_values(*opt.config));
    KeyValues kv;
    for (const auto& o : opt.overrides) {
        const auto parsed = parse_key_values(o, "--set");
        if (parsed.empty()) throw ValueError("--set expects key=value, got '" + o + "'");
        kv.insert(parsed.begin(), parsed.end());
    }
    cfg.apply(kv);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.out) cfg.out_dir = *opt.out;
    if (!opt.corpus.empty()) cfg.corpus = opt.corpus;
    cfg.validate();
    return cfg;
}

inline nlohmann::json cmd_train(const TrainOptions& opt, std::ostream& progress) {
    const TrainConfig cfg = resolve_train_config(opt);
    std::optional<std::filesystem::path> resume;
    if (opt.resume) resume = *opt.resume;
    const TrainResult r = train(cfg, resume, [&](const EpochMetrics& m, std::uint32_t total) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "epoch %u/%u loss=%.4f acc=%.4f", m.epoch, total, m.mean_loss, m.accuracy);
        progress << buf << std::endl;
    });
    nlohmann::json j = {{"out_dir", cfg.out_dir},
                        {"epochs", cfg.epochs},
                        {"vocab_size", r.vocab.size()},
                        {"parameters", parameter_count(r.params)}};
    if (!r.history.empty()) {
        j["final_loss"] = r.history.back().mean_loss;
        j["final_accuracy"] = r.history.back().accuracy;
    }
    return j;
}

struct GenerateOptions {
    std::optional<std::string> checkpoint;
    bool random_init = false;
    std::vector<std::string> corpus; // vocabulary source for --random-init
    std::optional<std::string> config;
    std::string seed_text = "X:1\n";
    std::size_t length = 400;
    double temperature = 1.0;
    bool greedy = false;
    std::uint64_t seed = 0;
    std::string out = ".";
};

inline nlohmann::json cmd_generate(const GenerateOptions& opt) {
    ModelParams params;
    Vocabulary vocab;
    if (opt.checkpoint && opt.random_init) throw ValueError("generate: --checkpoint and --random-init are exclusive");
    if (opt.checkpoint) {
        Checkpoint ck = load_checkpoint(*opt.checkpoint);
        params = std::move(ck.params);
        vocab = std::move(ck.vocab);
    } else if (opt.random_init) {
        TrainConfig cfg;
        if (opt.config) cfg.apply(load_key_values(*opt.config));
        if (!opt.corpus.empty()) cfg.corpus = opt.corpus;
        if (cfg.corpus.empty()) throw ValueError("generate: --random-init needs --corpus for the vocabulary");
        std::vector<std::filesystem::path> ps(cfg.corpus.begin(), cfg.corpus.end());
        vocab = build_vocabulary(load_corpus(ps));
        ModelConfig mcfg = cfg.model;
        mcfg.vocab_size = vocab.size();
        Rng w = weight_stream(opt.seed);
        params = init_params(mcfg, w);
    } else {
        throw ValueError("generate: give --checkpoint or --random-init");
    }
    SampleConfig sc;
    sc.seed_text = opt.seed_text;
    sc.length = opt.length;
    sc.temperature = opt.temperature;
    sc.rng_seed = opt.seed;
    sc.mode = opt.greedy ? SampleMode::greedy : SampleMode::stochastic;
    const std::string text = generate(params, vocab, sc);
    std::filesystem::create_directories(opt.out);
    const std::filesystem::path path = std::filesystem::path(opt.out) / "generated.abc";
    detail::write_text(path, text);
    nlohmann::json j = grammar_score(text).to_json();
    j["output"] = path.string();
    j["chars"] = text.size();
    return j;
}

struct RenderCommandOptions {
    std::string abc_path;
    std::string out = ".";
    double bpm = 120.0;
};

struct RenderOutcome {
    nlohmann::json report;
    std::size_t rendered = 0;
    std::size_t failed = 0;
};

inline RenderOutcome cmd_render(const RenderCommandOptions& opt, std::ostream& err) {
    if (!(opt.bpm > 0.0) || !std::isfinite(opt.bpm)) throw ValueError("render: tempo must be > 0 bpm");
    RenderOptions ro;
    ro.tempo = static_cast<std::uint32_t>(std::lround(60'000'000.0 / opt.bpm));
    std::vector<std::string> tunes;
    split_tunes(normalize_newlines(read_text_file(opt.abc_path)), tunes);
    if (tunes.empty()) throw EmptyCorpusError("render: no tunes with an X: header in " + opt.abc_path);
    std::filesystem::create_directories(opt.out);
    const std::string stem = std::filesystem::path(opt.abc_path).stem().string();
    RenderOutcome res;
    nlohmann::json files = nlohmann::json::array();
    nlohmann::json failures = nlohmann::json::array();
    for (std::size_t i = 0; i < tunes.size(); ++i) {
        const std::string name = stem + "_" + std::to_string(i + 1) + ".mid";
        try {
            const TuneAst ast = parse_tune(tunes[i]);
            detail::write_bytes(std::filesystem::path(opt.out) / name, render_smf(ast, ro));
            files.push_back(name);
            ++res.rendered;
        } catch (const Error& e) {
            ++res.failed;
            err << "tune " << (i + 1) << ": " << e.what() << "\n";
            failures.push_back({{"tune", i + 1}, {"error", e.what()}});
        }
    }
    res.report = {{"rendered", res.rendered}, {"failed", res.failed}, {"files", files}, {"failures", failures}};
    return res;
}

struct PlotOptions {
    std::string csv;
    std::string out = ".";
};

inline nlohmann::json cmd_plot(const PlotOptions& opt) {
    const auto rows = parse_metrics_csv(read_text_file(opt.csv));
    const MetricCharts c = metric_charts(rows);
    std::filesystem::create_directories(opt.out);
    const std::filesystem::path dir(opt.out);
    detail::write_text(dir / "loss.svg", c.loss_svg);
    detail::write_text(dir / "accuracy.svg", c.accuracy_svg);
    return {{"rows", rows.size()},
            {"loss_svg", (dir / "loss.svg").string()},
            {"accuracy_svg", (dir / "accuracy.svg").string()},
            {"loss_axis", {c.loss_spec.y_min, c.loss_spec.y_max}}};
}

/// Full command line entry point. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Character-level LSTM for ABC folk tunes"};
    app.require_subcommand(1);

    StatsOptions stats;
    auto* s = app.add_subcommand("stats", "Corpus statistics as JSON");
    s->add_option("corpus,--corpus", stats.corpus, "ABC files");
    s->add_option("--config", stats.config, "key=value config file");

    TrainOptions train_opt;
    std::uint32_t epochs_flag = 0;
    auto* t = app.add_subcommand("train", "Train and write checkpoints + metrics.csv");
    t->add_option("--config", train_opt.config, "key=value config file");
    t->add_option("--set", train_opt.overrides, "key=value override (repeatable)");
    t->add_option("--seed", train_opt.seed, "RNG seed");
    t->add_option("--out", train_opt.out, "output directory");
    t->add_option("--corpus", train_opt.corpus, "ABC files");
    t->add_option("--epochs", epochs_flag, "number of epochs");
    t->add_option("--resume", train_opt.resume, "checkpoint to continue from");

    GenerateOptions gen;
    std::string seed_text_raw = "X:1\\n";
    auto* g = app.add_subcommand("generate", "Sample text from a model");
    g->add_option("--checkpoint", gen.checkpoint, "checkpoint file");
    g->add_flag("--random-init", gen.random_init, "use untrained weights (needs --corpus)");
    g->add_option("--corpus", gen.corpus, "ABC files (vocabulary for --random-init)");
    g->add_option("--config", gen.config, "key=value config file (model size for --random-init)");
    g->add_option("--seed-text", seed_text_raw, "prefix; \\n escapes allowed");
    g->add_option("--length", gen.length, "characters to generate");
    g->add_option("--temperature", gen.temperature, "softmax temperature");
    g->add_flag("--greedy", gen.greedy, "argmax instead of sampling");
    g->add_option("--seed", gen.seed, "sampling seed");
    g->add_option("--out", gen.out, "output directory");

    RenderCommandOptions rend;
    auto* r = app.add_subcommand("render", "ABC file to one .mid per tune");
    r->add_option("abc", rend.abc_path, "ABC file")->required();
    r->add_option("--out", rend.out, "output directory");
    r->add_option("--tempo", rend.bpm, "quarter notes per minute");

    PlotOptions plot;
    auto* p = app.add_subcommand("plot", "metrics.csv to loss.svg + accuracy.svg");
    p->add_option("csv", plot.csv, "metrics.csv")->required();
    p->add_option("--out", plot.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (s->parsed()) {
            out << cmd_stats(stats).dump() << "\n";
        } else if (t->parsed()) {
            if (epochs_flag > 0) train_opt.overrides.push_back("epochs=" + std::to_string(epochs_flag));
            out << cmd_train(train_opt, err).dump() << "\n";
        } else if (g->parsed()) {
            gen.seed_text = detail::unescape(seed_text_raw);
            out << cmd_generate(gen).dump() << "\n";
        } else if (r->parsed()) {
            const RenderOutcome res = cmd_render(rend, err);
            out << res.report.dump() << "\n";
            if (res.failed > 0) return res.rendered == 0 ? 1 : 2;
        } else if (p->parsed()) {
            out << cmd_plot(plot).dump() << "\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace abclstm
