#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("mandi_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        write_file(dir_ / "run.json", small_config().dump(2));
    }
    void TearDown() override { fs::remove_all(dir_); }

    static nlohmann::json small_config() {
        return {
            {"synth", {{"markets", 3}, {"years", 3}}},
            {"window", {{"b", 3}, {"f", 2}, {"epsilon", 0.0}}},
            {"split", {{"train_end", "2013-06-30"}, {"val_end", "2013-12-31"}, {"test_end", "2014-12-31"}}},
            {"b_grid", {3}},
            {"alphas", {0.0, 1.0}},
            {"alpha", 1.0},
            {"models",
             {{{"family", "GradBoost"}, {"hyperparams", {{"rounds", 3}}}},
              {{"family", "RandomForest"}, {"hyperparams", {{"trees", 5}, {"max_depth", 4}}}}}},
        };
    }

    RunResult run(const std::string& args, const std::string& env = "") const {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + MANDICAST_EXE + "' " + args + " >'" +
                                out.string() + "' 2>'" + err.string() + "'";
        const int status = std::system(cmd.c_str());
        RunResult r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = read_file(out);
        r.err = read_file(err);
        return r;
    }

    RunResult ok(const std::string& args) const {
        auto r = run(args);
        EXPECT_EQ(r.code, 0) << args << "\n" << r.err;
        return r;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpListsCommandsAndFlags) {
    const auto r = run("--help");
    EXPECT_EQ(r.code, 0);
    for (const char* s : {"--config", "--out-dir", "--workers", "--seed", "--alpha", "--cyclic-doy",
                          "--refit-with-validation", "ingest", "synth", "train", "evaluate", "sweep", "explain",
                          "MANDI_OUT_DIR", "Exit codes"})
        EXPECT_NE(r.out.find(s), std::string::npos) << s;
    const auto sub = run("explain --help");
    EXPECT_NE(sub.out.find("--top-k"), std::string::npos);
    EXPECT_EQ(run("").code, 2);
}

TEST_F(Cli, UsageErrors) {
    auto r = run("--no-such-flag synth");
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("error: code=usage exit=2 msg=\"", 0), 0u) << r.err;
    EXPECT_EQ(run("--workers 0 synth").code, 2);
    EXPECT_EQ(run("--alpha 1.5 --dump-config").code, 2);
    EXPECT_EQ(run("evaluate --split holdout").code, 2);
}

TEST_F(Cli, ConfigErrorsMapToExitCodes) {
    auto cfg = small_config();
    cfg["wndow"] = 1;
    write_file(dir_ / "typo.json", cfg.dump());
    auto r = run("--config typo.json --dump-config");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("wndow"), std::string::npos);
    EXPECT_NE(r.err.find("code=invalid_config"), std::string::npos) << r.err;
    write_file(dir_ / "broken.json", "{ not json");
    EXPECT_EQ(run("--config broken.json --dump-config").code, 2);
    EXPECT_EQ(run("--config missing.json --dump-config").code, 3);
}

TEST_F(Cli, DumpConfigRoundTrips) {
    const auto first = ok("--config run.json --seed 5 --cyclic-doy --dump-config");
    write_file(dir_ / "dumped.json", first.out);
    const auto second = ok("--config dumped.json --dump-config");
    EXPECT_EQ(first.out, second.out);
    const auto j = nlohmann::json::parse(first.out);
    EXPECT_EQ(j["seed"], 5);
    EXPECT_EQ(j["cyclic_doy"], true);
    EXPECT_EQ(j["synth"]["markets"], 3);
}

TEST_F(Cli, OutDirPrecedence) {
    const auto from_file = nlohmann::json::parse(ok("--config run.json --dump-config").out);
    EXPECT_EQ(from_file["output_dir"], "mandi_out");
    auto r = run("--config run.json --dump-config", "MANDI_OUT_DIR=envdir");
    EXPECT_EQ(nlohmann::json::parse(r.out)["output_dir"], "envdir");
    r = run("--config run.json --out-dir flagdir --dump-config", "MANDI_OUT_DIR=envdir");
    EXPECT_EQ(nlohmann::json::parse(r.out)["output_dir"], "flagdir");
    EXPECT_EQ(run("--config run.json synth", "MANDI_OUT_DIR=envdir").code, 0);
    EXPECT_TRUE(fs::exists(dir_ / "envdir" / "dataset.tsv"));
}

TEST_F(Cli, SynthTrainEvaluateSweep) {
    ok("--config run.json --seed 3 synth");
    EXPECT_TRUE(fs::exists(dir_ / "mandi_out" / "dataset.tsv"));
    const auto synth_report = read_file(dir_ / "mandi_out" / "synth_report.txt");
    EXPECT_NE(synth_report.find("reference_balanced: "), std::string::npos);

    ok("--config run.json --seed 3 train");
    EXPECT_TRUE(fs::exists(dir_ / "mandi_out" / "model.mdl"));
    EXPECT_NE(read_file(dir_ / "mandi_out" / "train_report.txt").find("selected_spec: "), std::string::npos);

    const auto ev = ok("--config run.json evaluate --split test");
    for (const char* k : {"raw_accuracy: ", "balanced_accuracy: ", "family: ", "spec_digest: ", "alpha: 1.000000",
                          "b: 3", "f: 2", "train_end: 2013-06-30", "confusion"})
        EXPECT_NE(ev.out.find(k), std::string::npos) << k;
    EXPECT_EQ(ev.out, read_file(dir_ / "mandi_out" / "eval_report.txt"));

    const auto sw = ok("--config run.json --seed 3 sweep");
    const auto csv = read_file(dir_ / "mandi_out" / "curve.csv");
    EXPECT_EQ(csv.rfind("alpha,family,b,val_raw,val_balanced,test_raw,test_balanced,spec_digest\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // 2 families x 2 alphas
    const auto svg = read_file(dir_ / "mandi_out" / "curve.svg");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_TRUE(fs::exists(dir_ / "mandi_out" / "sweep_report.txt"));
    EXPECT_EQ(sw.out.rfind(csv, 0), 0u);
}

TEST_F(Cli, RerunsAreIdempotent) {
    ok("--config run.json synth");
    ok("--config run.json sweep");
    const auto csv = read_file(dir_ / "mandi_out" / "curve.csv");
    const auto svg = read_file(dir_ / "mandi_out" / "curve.svg");
    const auto ds = read_file(dir_ / "mandi_out" / "dataset.tsv");
    ok("--config run.json synth");
    ok("--config run.json sweep");
    EXPECT_EQ(read_file(dir_ / "mandi_out" / "curve.csv"), csv);
    EXPECT_EQ(read_file(dir_ / "mandi_out" / "curve.svg"), svg);
    EXPECT_EQ(read_file(dir_ / "mandi_out" / "dataset.tsv"), ds);
}

TEST_F(Cli, ExplainListsTopK) {
    ok("--config run.json synth");
    ok("--config run.json train");
    const auto r = ok("--config run.json explain --market mkt01 --horizon 2 --top-k 3");
    std::istringstream in(r.out);
    std::string line;
    bool table = false;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.rfind("rank\tmarket\t", 0) == 0) {
            table = true;
            continue;
        }
        if (!table) continue;
        ++rows;
        const double sim = std::stod(line.substr(line.rfind('\t') + 1));
        EXPECT_GE(sim, 0.0);
        EXPECT_LE(sim, 1.0);
        EXPECT_NE(line.find("\tmkt01\t"), std::string::npos);
    }
    EXPECT_EQ(rows, 3);
    EXPECT_NE(r.out.find("horizon: 2"), std::string::npos);
    EXPECT_EQ(run("--config run.json explain --market nowhere").code, 2);
    EXPECT_EQ(run("--config run.json explain --horizon 9").code, 2);
}

TEST_F(Cli, ExplainRejectsLinearModels) {
    auto cfg = small_config();
    cfg["models"] = {{{"family", "LogReg"}, {"hyperparams", {{"epochs", 5}}}}};
    write_file(dir_ / "linear.json", cfg.dump());
    ok("--config linear.json synth");
    ok("--config linear.json train");
    EXPECT_EQ(run("--config linear.json explain").code, 2);
}

TEST_F(Cli, ArtifactErrors) {
    EXPECT_EQ(run("--config run.json train").code, 3);  // no dataset yet
    ok("--config run.json synth");
    EXPECT_EQ(run("--config run.json evaluate").code, 3);  // no model yet
    ok("--config run.json train");

    const auto model_path = dir_ / "mandi_out" / "model.mdl";
    const auto model = read_file(model_path);

    auto bumped = model;
    bumped.replace(bumped.find("mandimodel v1"), 13, "mandimodel v7");
    write_file(dir_ / "v7.mdl", bumped);
    auto r = run("--config run.json --model v7.mdl evaluate");
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.err.find("code=version_mismatch"), std::string::npos) << r.err;

    auto relaid = model;
    const auto pos = relaid.find("doy=raw");
    ASSERT_NE(pos, std::string::npos);
    relaid.replace(pos, 7, "doy=cyc");
    write_file(dir_ / "relaid.mdl", relaid);
    EXPECT_EQ(run("--config run.json --model relaid.mdl evaluate").code, 5);

    auto fewer = small_config();
    fewer["synth"]["markets"] = 2;
    write_file(dir_ / "fewer.json", fewer.dump());
    ok("--config fewer.json --dataset two.tsv synth");
    EXPECT_EQ(run("--config run.json --dataset two.tsv evaluate").code, 5);

    auto ds = read_file(dir_ / "mandi_out" / "dataset.tsv");
    ds.replace(0, 11, "mandiset v9");
    write_file(dir_ / "v9.tsv", ds);
    EXPECT_EQ(run("--config run.json --dataset v9.tsv evaluate").code, 4);

    auto late = small_config();
    late["split"] = {{"train_end", "2016-01-01"}, {"val_end", "2016-06-01"}, {"test_end", "2016-12-31"}};
    write_file(dir_ / "late.json", late.dump());
    EXPECT_EQ(run("--config late.json train").code, 6);
    EXPECT_EQ(run("--config run.json --commodity Potato train").code, 6);

    write_file(dir_ / "blocker", "x");
    EXPECT_EQ(run("--config run.json --dataset mandi_out/dataset.tsv --out-dir blocker/sub sweep").code, 7);
}

TEST_F(Cli, IngestFixture) {
    const fs::path fixture = fs::path(MANDI_TEST_DATA_DIR) / "agmarknet_100.csv";
    write_file(dir_ / "schema.json", R"({"state": "State", "district": "District"})");
    const auto r = ok("ingest '" + fixture.string() + "' --schema schema.json --timestamp 2024-01-01T00:00:00Z");
    EXPECT_NE(r.out.find("4 markets, 84 observations"), std::string::npos) << r.out;
    const auto report = read_file(dir_ / "mandi_out" / "ingest_report.txt");
    EXPECT_NE(report.find("issues: 7"), std::string::npos);
    EXPECT_NE(report.find("issue: line 13: unparseable date '31/02/2014'"), std::string::npos);
    const auto ds = read_file(dir_ / "mandi_out" / "dataset.tsv");
    EXPECT_NE(ds.find("# ingested 2024-01-01T00:00:00Z\n"), std::string::npos);

    // Without --timestamp the stamp comes from the input's mtime, so reruns match.
    ok("ingest '" + fixture.string() + "' --schema schema.json --out a.tsv");
    ok("ingest '" + fixture.string() + "' --schema schema.json --out b.tsv");
    EXPECT_EQ(read_file(dir_ / "a.tsv"), read_file(dir_ / "b.tsv"));

    EXPECT_EQ(run("ingest missing.csv").code, 3);
    EXPECT_EQ(run("ingest").code, 2);
    write_file(dir_ / "other.csv", "Date,Price\n01/01/2015,10\n");
    EXPECT_EQ(run("ingest other.csv").code, 6);
}
