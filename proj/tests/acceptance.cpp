// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>

#include "abclstm/abclstm.hpp"
#include "abclstm/commands.hpp"
#include "support.hpp"

using namespace abclstm;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ABCLSTM_FIXTURES;
const fs::path kData = ABCLSTM_DATA;
const fs::path kOneill = kData / "corpus/oneills1850";

struct Outcome {
    bool pass;
    std::string detail;
};

fs::path work_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("abclstm_accept_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Outcome gradients() {
    const auto c = test_support::make_grad_case();
    const auto gc = test_support::gradient_check(c.params, c.inputs, c.targets, c.state);
    return {gc.rel_error.size() == 11 && gc.worst < 1e-4, fmt("worst relative error %.2e over 11 tensors", gc.worst)};
}

// The criterion-2 model, kept for the generation criterion.
std::optional<TrainResult> g_desk;

TrainConfig desk_config(const fs::path& out) {
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.epochs = 15;
    cfg.model.hidden_size = 128;
    cfg.model.num_layers = 3;
    cfg.model.dropout = 0.1;
    cfg.adam.learning_rate = 3e-3;
    cfg.batch = {16, 64};
    cfg.corpus = {(kOneill / "0001-0050.abc").string(), (kOneill / "0051-0100.abc").string(),
                  (kOneill / "0101-0200.abc").string()};
    cfg.out_dir = out.string();
    cfg.record_wall_time = false;
    return cfg;
}

Outcome desk_training() {
    const TrainConfig cfg = desk_config(work_dir("desk"));
    const TrainResult r = train(cfg, {}, [](const EpochMetrics& m, std::uint32_t total) {
        std::fprintf(stderr, "  desk epoch %u/%u loss=%.4f acc=%.4f\n", m.epoch, total, m.mean_loss, m.accuracy);
    });
    g_desk = r;
    const double l1 = r.history.front().mean_loss;
    const double l15 = r.history.back().mean_loss;
    const double a15 = r.history.back().accuracy;
    const double lnv = std::log(static_cast<double>(r.vocab.size()));
    const bool ok = r.history.size() == 15 && l15 < l1 - 0.5 && l1 < lnv && a15 > 0.45;
    return {ok, fmt("loss1=%.4f (ln V=%.4f) loss15=%.4f acc15=%.4f", l1, lnv, l15, a15)};
}

Outcome overfit() {
    std::vector<std::string> tunes;
    split_tunes(normalize_newlines(read_text_file(kOneill / "0001-0050.abc")), tunes);
    std::string tune = tunes.front().substr(0, 200);
    const auto dir = work_dir("overfit");
    std::string text;
    for (int i = 0; i < 40; ++i) text += tune + "\n\n";
    // every copy keeps its X: line, so each block is a tune
    detail::write_text(dir / "one.abc", text);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.model.hidden_size = 64;
    cfg.model.num_layers = 3;
    cfg.model.dropout = 0.0;
    cfg.adam.learning_rate = 1e-2;
    cfg.batch = {4, 64};
    cfg.corpus = {(dir / "one.abc").string()};
    cfg.out_dir = (dir / "run").string();
    cfg.record_wall_time = false;
    const TrainResult r = train(cfg);
    const double acc = r.history.back().accuracy;

    // the stream repeats tune + "\n\n"; seed with the first 10 chars of a period
    const std::string period = tune + "\n\n";
    const std::string looped = period + period;
    SampleConfig sc;
    sc.seed_text = looped.substr(0, 10);
    sc.length = 50;
    sc.mode = SampleMode::greedy;
    const std::string out = generate(r.params, r.vocab, sc).substr(10);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 50; ++i) hits += out[i] == looped[10 + i];
    const double frac = hits / 50.0;
    return {acc > 0.9 && frac >= 0.8, fmt("train acc=%.4f, greedy match %.0f/50", acc, static_cast<double>(hits))};
}

Outcome batching() {
    std::vector<int> ids(1300);
    for (int i = 0; i < 1300; ++i) ids[i] = i;
    const BatchSet bs = make_batches(ids, {16, 64});
    bool ok = bs.num_segments() == 1 && bs.stream_len == 81;
    // oracle: row b is the slice [b*81, b*81+64) and its shift by one
    for (std::size_t b = 0; ok && b < 16; ++b)
        for (std::size_t t = 0; t < 64; ++t) {
            ok = ok && bs.segments[0].inputs(b, t) == static_cast<int>(b * 81 + t);
            ok = ok && bs.segments[0].targets(b, t) == static_cast<int>(b * 81 + t + 1);
        }
    return {ok, "S=" + std::to_string(bs.num_segments()) + ", stream_len=" + std::to_string(bs.stream_len)};
}

Outcome encoding() {
    std::vector<fs::path> all;
    for (const auto& e : fs::directory_iterator(kOneill)) all.push_back(e.path());
    all.push_back(kData / "corpus/nottingham/reelsa-c.abc");
    std::sort(all.begin(), all.end());
    const CorpusText corpus = load_corpus(all);
    const std::string text = corpus.joined();
    const Vocabulary vocab = build_vocabulary(corpus);
    Rng rng(2024);
    std::size_t ok_round = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t len = 1 + rng.next_u64() % 300;
        const std::size_t start = rng.next_u64() % (text.size() - len);
        const std::string s = text.substr(start, len);
        ok_round += decode(encode(s, vocab), vocab) == s;
    }
    StatsOptions so;
    for (const auto& p : all) so.corpus.push_back(p.string());
    const auto stats = cmd_stats(so);
    const std::size_t v = stats["vocab_size"];
    return {ok_round == 1000 && v >= 80 && v <= 100,
            std::to_string(ok_round) + "/1000 round trips, vocab_size=" + std::to_string(v)};
}

Outcome adam() {
    Rng rng(1);
    ModelParams p = init_params(ModelConfig{6, 4, 2, 0.0}, rng);
    const ModelParams before = p;
    AdamState st = AdamState::zeros(p);
    for (int i = 0; i < 3; ++i) adam_step(p, zeros_like(p), st, AdamConfig{});
    bool fix = true;
    for_each_tensor_pair(p, before, [&](const std::string&, const Matrix& a, const Matrix& b, int) {
        fix = fix && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
    });

    const AdamConfig cfg;
    const AdamCorrection corr(cfg, 1);
    bool exact = true;
    for (int i = 0; i < 10000; ++i) {
        const double g = rng.uniform(-5, 5) * std::pow(10.0, rng.uniform(-6, 2));
        exact = exact && corr.m_hat(0.0, g) == g && corr.v_hat(0.0, g) == g * g;
    }

    AdamConfig nc;
    nc.grad_clip = 0.0;
    ModelParams q = before;
    Gradients g = zeros_like(q);
    for_each_tensor(g, [&](const std::string&, Matrix& m, int) {
        for (double& v : m.values()) v = rng.uniform(-0.1, 0.1);
    });
    AdamState st2 = AdamState::zeros(q);
    adam_step(q, g, st2, nc);
    double worst = 0.0;
    std::vector<const Matrix*> b0, g0, p1;
    for_each_tensor(before, [&](const std::string&, const Matrix& m, int) { b0.push_back(&m); });
    for_each_tensor(g, [&](const std::string&, const Matrix& m, int) { g0.push_back(&m); });
    for_each_tensor(q, [&](const std::string&, const Matrix& m, int) { p1.push_back(&m); });
    for (std::size_t k = 0; k < b0.size(); ++k)
        for (std::size_t i = 0; i < b0[k]->size(); ++i) {
            const double gi = g0[k]->values()[i];
            const double want = -nc.learning_rate * gi / (std::abs(gi) + nc.epsilon);
            worst = std::max(worst, std::abs(p1[k]->values()[i] - b0[k]->values()[i] - want));
        }
    return {fix && exact && worst < 1e-12,
            std::string("fixpoint ") + (fix ? "bitwise" : "BROKEN") + ", t=1 " + (exact ? "exact" : "INEXACT") +
                fmt(", first-step max error %.1e", worst)};
}

Outcome midi() {
    const std::string want = read_text_file(kFixtures / "golden_cde.mid");
    const Bytes got = render_smf(parse_tune(read_text_file(kFixtures / "golden_cde.abc")));
    const bool golden = std::string(got.begin(), got.end()) == want;

    bool vlq = encode_vlq(0) == Bytes{0x00} && encode_vlq(127) == Bytes{0x7F} && encode_vlq(480) == Bytes{0x83, 0x60};
    Rng rng(5);
    for (int i = 0; vlq && i < 1'000'000; ++i) {
        const auto v = static_cast<std::uint32_t>(rng.next_u64() & kMaxVlq);
        const Bytes b = encode_vlq(v);
        std::size_t pos = 0;
        vlq = decode_vlq(b, pos) == v && pos == b.size();
    }

    std::vector<std::string> tunes;
    split_tunes(normalize_newlines(read_text_file(kOneill / "0051-0100.abc")), tunes);
    std::size_t good = 0;
    for (std::size_t i = 0; i < 10 && i < tunes.size(); ++i) {
        const TuneAst ast = parse_tune(tunes[i]);
        const Bytes b = render_smf(ast);
        const std::uint32_t len = (std::uint32_t{b[18]} << 24) | (b[19] << 16) | (b[20] << 8) | b[21];
        const MidiDoc doc = read_smf(b);
        bool ok = len == b.size() - 22 && doc.track.size() >= 2 && doc.track.front().data[1] == 0x51 &&
                  doc.track.back().data == Bytes{0xFF, 0x2F, 0x00};
        int open = -1;
        std::size_t pairs = 0;
        for (std::size_t e = 1; ok && e + 1 < doc.track.size(); ++e) {
            const Bytes& d = doc.track[e].data;
            if ((d[0] & 0xF0) == 0x90) {
                ok = open == -1;
                open = d[1];
            } else {
                ok = (d[0] & 0xF0) == 0x80 && open == d[1];
                open = -1;
                ++pairs;
            }
        }
        good += ok && open == -1 && pairs == ast.note_count();
    }
    return {golden && vlq && good == 10, std::string("golden ") + (golden ? "identical" : "DIFFERS") + ", vlq " +
                                             (vlq ? "ok" : "BROKEN") + ", " + std::to_string(good) + "/10 tunes paired"};
}

Outcome generation() {
    if (!g_desk) return {false, "criterion 2 model unavailable"};
    const TrainConfig cfg = desk_config(work_dir("gen"));
    ModelConfig mc = cfg.model;
    mc.vocab_size = g_desk->vocab.size();
    Rng w = weight_stream(cfg.seed);
    const ModelParams random_params = init_params(mc, w);
    double trained = 0.0, random = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        SampleConfig sc;
        sc.length = 500;
        sc.temperature = 0.8;
        sc.rng_seed = s;
        trained += grammar_score(generate(g_desk->params, g_desk->vocab, sc)).score;
        random += grammar_score(generate(random_params, g_desk->vocab, sc)).score;
    }
    trained /= 10;
    random /= 10;
    return {trained - random >= 0.2, fmt("trained %.3f, random-init %.3f, gap %.3f", trained, random, trained - random)};
}

Outcome determinism() {
    const auto a = work_dir("det_a");
    const auto b = work_dir("det_b");
    const auto part = work_dir("det_part");
    auto args = [](const fs::path& out, int epochs) {
        return std::vector<std::string>{"abclstm", "train", "--corpus", (kData / "corpus/nottingham/reelsa-c.abc").string(),
                                        "--out", out.string(), "--epochs", std::to_string(epochs), "--seed", "7",
                                        "--set", "hidden_size=32", "--set", "batch_size=4", "--set", "seq_len=32",
                                        "--set", "dropout=0.2", "--set", "record_wall_time=false"};
    };
    auto run = [](std::vector<std::string> v) {
        std::vector<const char*> argv;
        for (const auto& s : v) argv.push_back(s.c_str());
        std::ostringstream out, err;
        return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    };
    if (run(args(a, 4)) != 0 || run(args(b, 4)) != 0 || run(args(part, 2)) != 0) return {false, "train failed"};
    auto resume = args(part, 4);
    resume.push_back("--resume");
    resume.push_back((part / "epoch_0002.ckpt").string());
    if (run(resume) != 0) return {false, "resume failed"};

    std::size_t same = 0, total = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++total;
        same += read_text_file(e.path()) == read_text_file(b / e.path().filename());
    }
    const bool resumed = read_text_file(a / "metrics.csv") == read_text_file(part / "metrics.csv") &&
                         read_text_file(a / "epoch_0004.ckpt") == read_text_file(part / "epoch_0004.ckpt");
    return {same == total && total >= 6 && resumed,
            std::to_string(same) + "/" + std::to_string(total) + " files identical, resume " +
                (resumed ? "reproduces epochs 3-4" : "DIVERGES")};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient check", gradients},   {"desk-scale training", desk_training},
        {"overfit sanity", overfit},     {"batching exactness", batching},
        {"encoding/vocabulary", encoding}, {"adam behavior", adam},
        {"midi correctness", midi},      {"generation separation", generation},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %zu %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
