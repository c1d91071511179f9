// End-to-end checks of the CLI binary: subcommands, exit codes, output
// hygiene on failure.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#ifndef TABATTACK_CLI
#error "TABATTACK_CLI must point at the tabattack binary"
#endif

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TABATTACK_CLI) + " " + args + " >/dev/null 2>&1";
    const int ret = std::system(cmd.c_str());
    return WEXITSTATUS(ret);
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

const char* kSmallConfig = R"({
  "dataset": {"synthetic": {"n_samples": 150, "n_features": 4, "positive_ratio": 0.4,
                             "informative": 2, "noise": 0.1, "seed": 2}},
  "models": [{"kind": "DT", "hyperparams": {"max_depth": 6}}],
  "cv_folds": 3,
  "explainers": ["KERNEL_SHAP"],
  "attack": {"n_coalitions": 32, "background_size": 8},
  "seed": 4
})";

TEST(Cli, MissingConfigFileExitsTwo) {
    EXPECT_EQ(run_cli("run --config /nonexistent/cfg.json"), 2);
}

TEST(Cli, MissingDatasetFileExitsTwoWithNoOutputs) {
    const fs::path dir = temp_dir("tabattack_cli_missing");
    write(dir / "cfg.json", R"({
      "dataset": {"path": "/nonexistent/data.csv", "label": "y"},
      "models": [{"kind": "DT"}],
      "explainers": ["LIME"],
      "seed": 1,
      "out_dir": ")" + (dir / "out").string() + R"("
    })");
    EXPECT_EQ(run_cli("run --config " + (dir / "cfg.json").string()), 2);
    EXPECT_FALSE(fs::exists(dir / "out"));
    fs::remove_all(dir);
}

TEST(Cli, UnknownExplainerExitsTwo) {
    const fs::path dir = temp_dir("tabattack_cli_badexp");
    std::string cfg = kSmallConfig;
    cfg.replace(cfg.find("KERNEL_SHAP"), 11, "foo");
    write(dir / "cfg.json", cfg);
    EXPECT_EQ(run_cli("run --config " + (dir / "cfg.json").string()), 2);
    fs::remove_all(dir);
}

TEST(Cli, SynthThenRunFromCsv) {
    const fs::path dir = temp_dir("tabattack_cli_synth");
    EXPECT_EQ(run_cli("synth --out " + (dir / "d.csv").string() +
                      " --samples 200 --features 5 --seed 3"),
              0);
    ASSERT_TRUE(fs::exists(dir / "d.csv"));
    write(dir / "cfg.json", R"({
      "dataset": {"path": ")" + (dir / "d.csv").string() + R"(", "label": "label"},
      "models": [{"kind": "DT", "hyperparams": {"max_depth": 6}}],
      "cv_folds": 3,
      "explainers": ["LIME"],
      "attack": {"n_samples": 60},
      "seed": 9,
      "out_dir": ")" + (dir / "out").string() + R"("
    })");
    EXPECT_EQ(run_cli("run --config " + (dir / "cfg.json").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "out/run_manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "out/DT_LIME/report.json"));
    fs::remove_all(dir);
}

TEST(Cli, StrictGateExitsOne) {
    const fs::path dir = temp_dir("tabattack_cli_gate");
    std::string cfg = kSmallConfig;
    cfg.replace(cfg.find("\"noise\": 0.1"), 12, "\"noise\": 60.0");  // hopeless data
    write(dir / "cfg.json", cfg);
    EXPECT_EQ(run_cli("run --config " + (dir / "cfg.json").string() + " --strict-gate --out " +
                      (dir / "out").string()),
              1);
    // no partial outputs
    bool any_file = false;
    if (fs::exists(dir / "out"))
        for (const auto& e : fs::recursive_directory_iterator(dir / "out"))
            any_file |= e.is_regular_file();
    EXPECT_FALSE(any_file);
    fs::remove_all(dir);
}

TEST(Cli, RunExitsZeroOnHealthyConfig) {
    const fs::path dir = temp_dir("tabattack_cli_ok");
    write(dir / "cfg.json", kSmallConfig);
    EXPECT_EQ(run_cli("run --config " + (dir / "cfg.json").string() + " --out " +
                      (dir / "out").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "out/run_manifest.json"));
    fs::remove_all(dir);
}

}  // namespace
