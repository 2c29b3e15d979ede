#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "tfno/cli/cli.hpp"

namespace fs = std::filesystem;
using namespace tfno;
using tfno::train::Json;

namespace {

int run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "tfno");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::vector<std::vector<std::string>> rows;
    std::ifstream is(p);
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

Json tiny_run_config(std::uint64_t seed = 5)
{
    Json j = Json::parse(R"({
      "seed": 0,
      "data": {"scenarios": 12, "injection_fraction": 0.3,
               "grid": {"nx": 8, "ny": 8, "dx": 400.0, "dy": 400.0, "h": 10.0},
               "steps": 4, "wells_min": 1, "wells_max": 2, "well_eps": 0.6, "corr_len": 1.5},
      "train": {"epochs": 2, "batch_size": 2, "lr": 0.003,
                "split": {"train": 0.5, "validation": 0.25, "test": 0.25},
                "model": {"layers": 2, "modes": [3, 3, 2], "width": 4, "power": 2, "factorization": "tt",
                          "tt_ranks": [2, 3, 3, 2], "lift_width": 8, "projection_width": 8}}
    })");
    j["seed"] = seed;
    return j;
}

class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir_ = fs::temp_directory_path() / "tfno_cli_test";
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        write_json(dir_ / "run.json", tiny_run_config());
        ASSERT_EQ(run_cli({"gen-data", "--config", s("run.json"), "--out", s("data.tfno")}), 0);
        ASSERT_EQ(run_cli({"train", "--data", s("data.tfno"), "--config", s("run.json"), "--out", s("model")}), 0);
        ASSERT_EQ(run_cli({"eval", "--model", s("model/model.tfnc"), "--data", s("data.tfno"), "--out", s("eval")}), 0);
    }

    static void write_json(const fs::path& p, const Json& j) { std::ofstream(p) << j.dump(2); }
    static std::string s(const std::string& rel) { return (dir_ / rel).string(); }

    static std::map<std::string, std::string> summary()
    {
        std::map<std::string, std::string> m;
        for (const auto& r : read_csv(dir_ / "eval/metrics.csv"))
            if (r.size() == 5 && (r[0] == "test" || r[0] == "self_check")) m[r[0] + "." + r[3]] = r[4];
        return m;
    }

    static fs::path dir_;
};

fs::path CliPipeline::dir_;

} // namespace

TEST_F(CliPipeline, GenDataIsByteReproducibleWithFamilyCounts)
{
    ASSERT_EQ(run_cli({"gen-data", "--config", s("run.json"), "--out", s("again.tfno")}), 0);
    EXPECT_EQ(slurp(dir_ / "data.tfno"), slurp(dir_ / "again.tfno"));
    const Json m = Json::parse(slurp(dir_ / "data.tfno.json"));
    const auto& fc = m["generator"]["family_counts"];
    EXPECT_EQ(fc["withdrawal"].get<int>() + fc["injection"].get<int>(), 12);
    EXPECT_EQ(fc["injection"].get<int>(), 4);
    EXPECT_EQ(m["seed"].get<int>(), 5);
    EXPECT_TRUE(m["normalization"].contains("p_lo"));
}

TEST_F(CliPipeline, TrainWritesHistoryAndIsReproducible)
{
    const auto rows = read_csv(dir_ / "model/history.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"epoch", "train_loss", "val_loss"}));
    EXPECT_EQ(rows[1][0], "1");
    ASSERT_EQ(run_cli({"train", "--data", s("data.tfno"), "--config", s("run.json"), "--out", s("model2")}), 0);
    EXPECT_EQ(slurp(dir_ / "model/history.csv"), slurp(dir_ / "model2/history.csv"));
    EXPECT_EQ(slurp(dir_ / "model/model.tfnc"), slurp(dir_ / "model2/model.tfnc"));
}

TEST_F(CliPipeline, DenseAndFactorizedConfigsShareADataset)
{
    Json j = tiny_run_config();
    j["train"]["model"]["factorization"] = "dense";
    j["train"]["model"]["power"] = 1;
    write_json(dir_ / "dense.json", j);
    EXPECT_EQ(run_cli({"train", "--data", s("data.tfno"), "--config", s("dense.json"), "--out", s("dense")}), 0);
    EXPECT_TRUE(fs::exists(dir_ / "dense/model.tfnc"));
}

TEST_F(CliPipeline, EvalReportsSelfCheckHeatmapsAndScatter)
{
    const auto m = summary();
    EXPECT_EQ(m.at("self_check.r2"), "1");
    EXPECT_EQ(m.at("self_check.rel_l2"), "0");
    EXPECT_EQ(m.at("test.n_scenarios"), "3");
    EXPECT_TRUE(std::isfinite(std::stod(m.at("test.r2"))));

    std::set<std::string> scenarios;
    std::size_t pgm = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "eval/heatmaps")) {
        ++pgm;
        const std::string name = e.path().filename().string();
        scenarios.insert(name.substr(0, name.find('_')));
        const std::string bytes = slurp(e.path());
        const std::string header = "P5\n8 8\n65535\n";
        ASSERT_EQ(bytes.substr(0, header.size()), header) << name;
        EXPECT_EQ(bytes.size(), header.size() + 8 * 8 * 2) << name;
    }
    EXPECT_EQ(pgm, 3 * 4 * scenarios.size());

    const auto sc = read_csv(dir_ / "eval/scatter.csv");
    EXPECT_EQ(sc[0], (std::vector<std::string>{"scenario", "pred", "true"}));
    EXPECT_EQ(sc.size(), 1 + 3 * 8 * 8 * 4u);
    const auto tm = read_csv(dir_ / "eval/timing.csv");
    EXPECT_EQ(tm.size(), 1 + 3 + 1u);
    EXPECT_EQ(tm.back()[0], "mean");
}

TEST_F(CliPipeline, EvalMetricsAreDeterministic)
{
    ASSERT_EQ(run_cli({"eval", "--model", s("model/model.tfnc"), "--data", s("data.tfno"), "--out", s("eval2")}), 0);
    EXPECT_EQ(slurp(dir_ / "eval/metrics.csv"), slurp(dir_ / "eval2/metrics.csv"));
    EXPECT_EQ(slurp(dir_ / "eval/scatter.csv"), slurp(dir_ / "eval2/scatter.csv"));
}

TEST_F(CliPipeline, LandscapeCentreEqualsTestLoss)
{
    ASSERT_EQ(run_cli({"landscape", "--model", s("model/model.tfnc"), "--data", s("data.tfno"), "--grid", "5",
                       "--range", "0.5", "--seed", "3", "--out", s("land")}),
              0);
    const auto rows = read_csv(dir_ / "land/landscape.csv");
    ASSERT_EQ(rows.size(), 1 + 25u);
    const auto& centre = rows[1 + 2 * 5 + 2];
    EXPECT_EQ(centre[0], "0");
    EXPECT_EQ(centre[1], "0");
    EXPECT_EQ(centre[2], summary().at("test.test_loss"));
    const std::string pgm = slurp(dir_ / "land/landscape.pgm");
    EXPECT_EQ(pgm.substr(0, 13), "P5\n5 5\n65535\n");

    ASSERT_EQ(run_cli({"landscape", "--model", s("model/model.tfnc"), "--data", s("data.tfno"), "--grid", "5",
                       "--range", "0.5", "--seed", "3", "--out", s("land2")}),
              0);
    EXPECT_EQ(slurp(dir_ / "land/landscape.csv"), slurp(dir_ / "land2/landscape.csv"));
}

TEST_F(CliPipeline, PredictUsesCheckpointConstants)
{
    const sim::Dataset ds = sim::load_dataset(s("data.tfno"));
    const auto ck = train::load_checkpoint(s("model/model.tfnc"));
    const auto run = cli::checkpoint_run(ck, ds);
    const std::size_t id = run.test_ids[0];
    // A single-record file normalized with its own constants.
    sim::Dataset one = sim::subset(ds, {id});
    one = sim::renormalize(one, sim::local_normalization(one));
    ASSERT_NE(one.norm.p_lo, ck.norm.p_lo);
    sim::save_dataset(s("one.tfno"), one);
    ASSERT_EQ(run_cli({"predict", "--model", s("model/model.tfnc"), "--scenario", s("one.tfno"), "--out", s("pred.tfno")}),
              0);
    const sim::Dataset pred = sim::load_dataset(s("pred.tfno"));
    ASSERT_EQ(pred.size(), 1u);
    EXPECT_EQ(pred.nx, ds.nx);
    EXPECT_EQ(pred.ny, ds.ny);
    EXPECT_EQ(pred.nt, ds.nt);

    // Re-normalize the Pa output with the checkpoint constants and score it.
    Tensor p({1, 1, ds.nx, ds.ny, ds.nt});
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = ck.norm.normalize_pressure(pred.targets[i]);
    const double rel = train::relative_l2(p, ds.targets_of({id}));
    const auto ev = train::evaluate(ck.model, ds, {id}, run.train.sobolev);
    EXPECT_NEAR(rel, ev.rel_l2[0], 1e-5 * ev.rel_l2[0] + 1e-7);
}

TEST_F(CliPipeline, IncompatibleArtifactsExitFive)
{
    // Same model, data normalized differently.
    sim::Dataset ds = sim::load_dataset(s("data.tfno"));
    sim::save_dataset(s("renorm.tfno"), sim::renormalize(ds, sim::local_normalization(sim::subset(ds, {0}))));
    EXPECT_EQ(run_cli({"eval", "--model", s("model/model.tfnc"), "--data", s("renorm.tfno"), "--out", s("bad")}), 5);

    std::string bytes = slurp(dir_ / "model/model.tfnc");
    std::ofstream(dir_ / "broken.tfnc", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    EXPECT_EQ(run_cli({"eval", "--model", s("broken.tfnc"), "--data", s("data.tfno"), "--out", s("bad")}), 5);
    EXPECT_EQ(run_cli({"landscape", "--model", s("broken.tfnc"), "--data", s("data.tfno"), "--out", s("bad")}), 5);
    EXPECT_EQ(run_cli({"predict", "--model", s("model/model.tfnc"), "--scenario", s("broken.tfnc"), "--out", s("bad.tfno")}),
              5);
}

TEST_F(CliPipeline, ConfigErrorsExitTwo)
{
    Json j = tiny_run_config();
    j["train"]["epoch"] = 3;
    write_json(dir_ / "typo.json", j);
    EXPECT_EQ(run_cli({"train", "--data", s("data.tfno"), "--config", s("typo.json"), "--out", s("x")}), 2);

    j = tiny_run_config();
    j["train"]["seed"] = 1;
    write_json(dir_ / "seed.json", j);
    EXPECT_EQ(run_cli({"train", "--data", s("data.tfno"), "--config", s("seed.json"), "--out", s("x")}), 2);

    j = tiny_run_config();
    j["extra"] = 1;
    write_json(dir_ / "extra.json", j);
    EXPECT_EQ(run_cli({"gen-data", "--config", s("extra.json"), "--out", s("x.tfno")}), 2);

    std::ofstream(dir_ / "syntax.json") << "{\"seed\": 1,";
    EXPECT_EQ(run_cli({"gen-data", "--config", s("syntax.json"), "--out", s("x.tfno")}), 2);
    EXPECT_EQ(run_cli({"gen-data", "--config", s("missing.json"), "--out", s("x.tfno")}), 2);
    EXPECT_EQ(run_cli({"gen-data", "--out", s("x.tfno")}), 2);
    EXPECT_EQ(run_cli({"frobnicate"}), 2);
}

TEST_F(CliPipeline, SolverFailureExitsThreeAndNamesScenario)
{
    Json j = tiny_run_config();
    j["data"]["injection_fraction"] = 0.01;
    j["data"]["rate_min"] = 1e9;
    j["data"]["rate_max"] = 2e9;
    j["data"]["max_season_fraction"] = 0.99;
    write_json(dir_ / "deplete.json", j);
    ::testing::internal::CaptureStderr();
    const int code = run_cli({"gen-data", "--config", s("deplete.json"), "--out", s("deplete.tfno")});
    const std::string err = ::testing::internal::GetCapturedStderr();
    EXPECT_EQ(code, 3) << err;
    EXPECT_NE(err.find("scenario 0"), std::string::npos) << err;
}

TEST(CliFamilies, EvenSpreadWithRoundedCount)
{
    for (std::size_t n : {10u, 200u, 37u}) {
        std::size_t inj = 0;
        for (std::size_t i = 0; i < n; ++i) inj += cli::family_of(i, 0.3) == sim::Family::injection;
        EXPECT_EQ(inj, static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(n))));
    }
}

TEST(CliPgm, SixteenBitBigEndian)
{
    const auto path = fs::temp_directory_path() / "tfno_pgm_test.pgm";
    cli::write_pgm16(path.string(), 3, 1, {0.0, 0.5, 1.0}, 0.0, 1.0);
    const std::string b = slurp(path);
    const std::string header = "P5\n3 1\n65535\n";
    ASSERT_EQ(b.size(), header.size() + 6);
    const auto px = [&](std::size_t k) {
        return (static_cast<unsigned char>(b[header.size() + 2 * k]) << 8) |
               static_cast<unsigned char>(b[header.size() + 2 * k + 1]);
    };
    EXPECT_EQ(px(0), 0);
    EXPECT_EQ(px(1), 32768);
    EXPECT_EQ(px(2), 65535);
}
