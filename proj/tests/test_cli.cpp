#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <regex>
#include <sstream>

#include "abclstm/commands.hpp"

using namespace abclstm;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ABCLSTM_FIXTURES;
const fs::path kData = ABCLSTM_DATA;

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "abclstm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("abclstm_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::vector<std::string> tiny_train(const fs::path& out, const std::string& epochs) {
    return {"train", "--corpus", (kFixtures / "two_tunes.abc").string(), "--out", out.string(), "--epochs", epochs,
            "--set", "hidden_size=10", "--set", "num_layers=2", "--set", "batch_size=2", "--set", "seq_len=16",
            "--set", "record_wall_time=false", "--set", "lr=0.01"};
}

std::string metrics_csv(const std::vector<double>& loss) {
    std::string s = std::string(kMetricsHeader) + "\n";
    for (std::size_t i = 0; i < loss.size(); ++i)
        s += format_metrics_row({static_cast<std::uint32_t>(i + 1), loss[i], 0.5, 1.0}) + "\n";
    return s;
}

} // namespace

TEST(CliStats, FixtureCounts) {
    const CliRun r = cli({"stats", (kFixtures / "two_tunes.abc").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["tunes"], 2);
    EXPECT_EQ(j["dropped_fragments"], 1);
    EXPECT_GT(j["vocab_size"].get<int>(), 20);
    EXPECT_EQ(j["segments_at_default_batching"], 0);
}

TEST(CliStats, MissingFileNamesPath) {
    const CliRun r = cli({"stats", "/nonexistent/tunes.abc"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("/nonexistent/tunes.abc"), std::string::npos);
}

TEST(CliStats, NoSubcommandIsUsageError) { EXPECT_NE(cli({}).code, 0); }

TEST(CliTrain, TwoEpochsRerunIdentical) {
    const auto a = temp_dir("train_a");
    const auto b = temp_dir("train_b");
    const CliRun ra = cli(tiny_train(a, "2"));
    ASSERT_EQ(ra.code, 0) << ra.err;
    const CliRun rb = cli(tiny_train(b, "2"));
    ASSERT_EQ(rb.code, 0) << rb.err;
    const std::string csv = read_text_file(a / "metrics.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_EQ(csv, read_text_file(b / "metrics.csv"));
    const std::regex line(R"(epoch 2/2 loss=\d+\.\d{4} acc=\d\.\d{4})");
    EXPECT_TRUE(std::regex_search(ra.err, line)) << ra.err;
    EXPECT_EQ(nlohmann::json::parse(ra.out)["epochs"], 2);
}

TEST(CliTrain, BadOverrideFails) {
    const auto d = temp_dir("train_bad");
    auto args = tiny_train(d, "1");
    args.push_back("--set");
    args.push_back("no_such_key=1");
    const CliRun r = cli(args);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
}

TEST(CliGenerate, GreedyIsRepeatableAndHasRequestedLength) {
    const auto d = temp_dir("gen");
    ASSERT_EQ(cli(tiny_train(d, "1")).code, 0);
    const std::string ck = (d / "epoch_0001.ckpt").string();
    const auto o1 = d / "g1";
    const auto o2 = d / "g2";
    const CliRun r1 = cli({"generate", "--checkpoint", ck, "--greedy", "--length", "60", "--out", o1.string()});
    ASSERT_EQ(r1.code, 0) << r1.err;
    const CliRun r2 = cli({"generate", "--checkpoint", ck, "--greedy", "--length", "60", "--seed", "9", "--out",
                        o2.string()});
    ASSERT_EQ(r2.code, 0) << r2.err;
    const std::string t1 = read_text_file(o1 / "generated.abc");
    EXPECT_EQ(t1, read_text_file(o2 / "generated.abc"));
    EXPECT_EQ(t1.size(), 4u + 60u);
    EXPECT_EQ(t1.substr(0, 4), "X:1\n");
    const auto j = nlohmann::json::parse(r1.out);
    EXPECT_TRUE(j.contains("score"));
    EXPECT_EQ(j["chars"], 64);
}

TEST(CliGenerate, SeedTextEscapesAndRandomInit) {
    const auto d = temp_dir("gen_rand");
    const CliRun r = cli({"generate", "--random-init", "--corpus", (kFixtures / "two_tunes.abc").string(), "--seed-text",
                       "X:1\\nK:G\\n", "--length", "25", "--seed", "3", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string t = read_text_file(d / "generated.abc");
    EXPECT_EQ(t.substr(0, 8), "X:1\nK:G\n");
    EXPECT_EQ(t.size(), 33u);
}

TEST(CliGenerate, NeedsAModelSource) {
    const CliRun r = cli({"generate"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--checkpoint"), std::string::npos);
}

TEST(CliRender, FixtureWritesOneFilePerTune) {
    const auto d = temp_dir("render");
    const CliRun r = cli({"render", (kFixtures / "two_tunes.abc").string(), "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"two_tunes_1.mid", "two_tunes_2.mid"}) {
        const std::string b = read_text_file(d / f);
        EXPECT_EQ(b.substr(0, 4), "MThd") << f;
    }
}

TEST(CliRender, GoldenByteIdentical) {
    const auto d = temp_dir("render_golden");
    ASSERT_EQ(cli({"render", (kFixtures / "golden_cde.abc").string(), "--out", d.string()}).code, 0);
    EXPECT_EQ(read_text_file(d / "golden_cde_1.mid"), read_text_file(kFixtures / "golden_cde.mid"));
}

TEST(CliRender, TenCorpusTunes) {
    const auto d = temp_dir("render_ten");
    std::vector<std::string> tunes;
    split_tunes(normalize_newlines(read_text_file(kData / "corpus/oneills1850/0001-0050.abc")), tunes);
    std::string ten;
    for (std::size_t i = 0; i < 10; ++i) ten += tunes[i] + "\n\n";
    detail::write_text(d / "ten.abc", ten);
    const CliRun r = cli({"render", (d / "ten.abc").string(), "--out", (d / "mid").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(d / "mid")) {
        EXPECT_EQ(e.path().extension(), ".mid");
        const std::string b = read_text_file(e.path());
        EXPECT_NO_THROW(read_smf(Bytes(b.begin(), b.end())));
        ++n;
    }
    EXPECT_EQ(n, 10u);
}

TEST(CliRender, PartialFailureExitCode) {
    const auto d = temp_dir("render_partial");
    detail::write_text(d / "mixed.abc", "X:1\nK:C\nCDE|\n\nX:2\nK:Qx\nCDE|\n");
    const CliRun r = cli({"render", (d / "mixed.abc").string(), "--out", d.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("tune 2"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "mixed_1.mid"));
    EXPECT_FALSE(fs::exists(d / "mixed_2.mid"));
    detail::write_text(d / "bad.abc", "X:1\nK:Qx\nC|\n");
    EXPECT_EQ(cli({"render", (d / "bad.abc").string(), "--out", d.string()}).code, 1);
}

TEST(CliPlot, ThreeRowsThreePoints) {
    const auto d = temp_dir("plot3");
    detail::write_text(d / "metrics.csv", metrics_csv({2.0, 1.5, 1.2}));
    const CliRun r = cli({"plot", (d / "metrics.csv").string(), "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto pts = polyline_points(read_text_file(d / "loss.svg"));
    ASSERT_EQ(pts.size(), 3u);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        EXPECT_GT(pts[i].x, pts[i - 1].x);
        EXPECT_LT(pts[i].y, pts[i - 1].y);
    }
    EXPECT_EQ(polyline_points(read_text_file(d / "accuracy.svg")).size(), 3u);
    const std::string svg = read_text_file(d / "loss.svg");
    EXPECT_NE(svg.find("Epoch"), std::string::npos);
    EXPECT_NE(svg.find("Loss"), std::string::npos);
}

TEST(CliPlot, NinetyEpochAxisRange) {
    const auto d = temp_dir("plot90");
    std::vector<double> loss;
    for (int i = 0; i < 90; ++i) loss.push_back(1.4359 * std::pow(0.1737 / 1.4359, i / 89.0));
    detail::write_text(d / "metrics.csv", metrics_csv(loss));
    const CliRun r = cli({"plot", (d / "metrics.csv").string(), "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["loss_axis"][0], 0.0);
    EXPECT_EQ(j["loss_axis"][1], 1.5);
    const auto pts = polyline_points(read_text_file(d / "loss.svg"));
    ASSERT_EQ(pts.size(), 90u);
    for (const auto& p : pts) {
        EXPECT_GE(p.x, 0.0);
        EXPECT_LE(p.x, kPlotWidth);
        EXPECT_GE(p.y, 0.0);
        EXPECT_LE(p.y, kPlotHeight);
    }
    // 1.4359 on a [0, 1.5] axis
    EXPECT_NEAR(pts.front().y, kPlotHeight * 1.4359 / 1.5, 0.01);
    EXPECT_NEAR(pts.back().y, kPlotHeight * 0.1737 / 1.5, 0.01);
}

TEST(CliPlot, MalformedCsvNamesLine) {
    const auto d = temp_dir("plot_bad");
    detail::write_text(d / "metrics.csv", std::string(kMetricsHeader) + "\n1,2.0,0.5,1.0\n2,abc,0.5,1.0\n");
    const CliRun r = cli({"plot", (d / "metrics.csv").string(), "--out", d.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}
