#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "fliplab/io.hpp"
#include "support/fixtures.hpp"

using namespace fliplab;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(FLIPLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliFixture : public ::testing::Test {
  protected:
    fixtures::TempDir dir{"cli"};
    std::string config;

    void SetUp() override {
        config = (dir.path / "tiny.json").string();
        write_json(config, fixtures::tiny_campaign_json());
    }
    std::string at(const std::string& name) const { return (dir.path / name).string(); }
};

}  // namespace

TEST_F(CliFixture, ParseAndConfigErrorsExitTwo) {
    EXPECT_EQ(run("--bogus-flag"), 2);
    EXPECT_EQ(run("attack --format yaml --config " + config), 2);
    EXPECT_EQ(run("defend --mode ecc"), 2);
    write_text(at("bad.json"), "{\"rl\": {\"tau\": 3}}");
    EXPECT_EQ(run("campaign --config " + at("bad.json") + " --out " + at("o")), 2);
    write_text(at("broken.json"), "{");
    EXPECT_EQ(run("campaign --config " + at("broken.json") + " --out " + at("o")), 2);
    EXPECT_EQ(run("report --in " + at("missing.json")), 2);
}

TEST_F(CliFixture, PipelineStagesSucceed) {
    ASSERT_EQ(run("gen-data --seed 3 --classes 3 --dim 4 --samples 90 --out " + at("d.csv")), 0);
    EXPECT_EQ(read_csv(at("d.csv")).size(), 90u);
    ASSERT_EQ(run("train --config " + config + " --out " + at("m.json")), 0);
    ASSERT_EQ(run("attack --config " + config + " --model " + at("m.json") + " --seed 1 --out " + at("a.json")), 0);
    const Json attack = read_json(at("a.json"));
    for (const char* key : {"profile", "trace", "critical", "baseline_accuracy", "acc_final"}) {
        EXPECT_TRUE(attack.contains(key)) << key;
    }
    write_json(at("flips.json"), attack["critical"]);
    EXPECT_EQ(run("defend --config " + config + " --model " + at("m.json") + " --mode ecc --protect all --flips " +
                  at("flips.json") + " --out " + at("ecc.json")),
              0);
    EXPECT_EQ(run("defend --config " + config + " --model " + at("m.json") + " --mode epsilon --flips " +
                  at("flips.json") + " --signatures-out " + at("sigs.json") + " --out " + at("eps.json")),
              0);
    EXPECT_TRUE(std::filesystem::exists(at("sigs.json")));
    EXPECT_EQ(run("baseline --config " + config + " --model " + at("m.json") + " --method greedy_selection --budget 4 --out " +
                  at("b.json")),
              0);
    write_json(at("badflips.json"), Json::parse(R"([{"layer": 1, "param": 0}])"));
    EXPECT_EQ(run("defend --config " + config + " --model " + at("m.json") + " --mode ecc --flips " + at("badflips.json")),
              1);
}

TEST_F(CliFixture, CampaignReportAndSweeps) {
    ASSERT_EQ(run("campaign --config " + config + " --seed 1 --out " + at("c")), 0);
    EXPECT_TRUE(std::filesystem::exists(at("c/report.json")));
    ASSERT_EQ(run("report --in " + at("c/report.json") + " --format csv --out " + at("csv")), 0);
    EXPECT_TRUE(std::filesystem::exists(at("csv/attacks.csv")));
    ASSERT_EQ(run("report --in " + at("c/report.json") + " --out " + at("again")), 0);
    EXPECT_EQ(read_text(at("c/report.json")), read_text(at("again/report.json")));
    EXPECT_EQ(run("ablate-alpha --config " + config + " --grid 0,1 --out " + at("abl")), 0);
    EXPECT_EQ(run("ablate-alpha --config " + config + " --grid 2 --out " + at("abl2")), 2);
    EXPECT_EQ(run("scale-sweep --config " + config + " --k 2,3,4 --out " + at("sc")), 0);
    EXPECT_EQ(run("scale-sweep --config " + config + " --k 2,0.5,4 --out " + at("sc2")), 2);
}

TEST_F(CliFixture, FailedSeedExitsOne) {
    Json j = fixtures::tiny_campaign_json();
    j["train"]["arch"] = Json::parse(R"([{"kind": "dense", "units": 24}, {"kind": "relu"}, {"kind": "softmax_exit"}])");
    j["profile"]["rate_percent"] = 100;
    j["rl"]["episodes"] = 5;
    j["baselines"]["methods"] = {"brute_force"};
    write_json(at("fail.json"), j);
    EXPECT_EQ(run("campaign --config " + at("fail.json") + " --seed 4 --out " + at("f")), 1);
    EXPECT_TRUE(std::filesystem::exists(at("f/report.json")));
}
