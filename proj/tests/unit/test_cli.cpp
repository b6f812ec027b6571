#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(SCALEFORMER_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("scaleformer_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

const std::string kTiny =
    " --lookback 16 --horizon 8 --d-model 8 --d-ff 8 --enc-layers 1 --synth-length 400"
    " --train-stride 8 --eval-stride 8 --lr-model 1e-3";

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("train --help"), 0);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("train --lookback abc"), 2);
    EXPECT_EQ(run("train --variant bogus"), 2);
    EXPECT_EQ(run("train --loss nll" + kTiny), 2);
    EXPECT_EQ(run("experiment synth-msa-vs-single"), 2);  // --seed is mandatory
    EXPECT_EQ(run("experiment no-such-preset --seed 1"), 2);
}

TEST(Cli, DataErrors) {
    const fs::path d = fresh_dir("data");
    EXPECT_EQ(run("train --data " + (d / "missing.csv").string()), 3);
    std::ofstream(d / "bad.csv") << "x\n1\nabc\n";
    EXPECT_EQ(run("train --data " + (d / "bad.csv").string()), 3);
}

TEST(Cli, SynthWritesRequestedLength) {
    const fs::path d = fresh_dir("synth");
    ASSERT_EQ(run("synth --out " + (d / "s.csv").string() + " --length 250"), 0);
    EXPECT_EQ(line_count(d / "s.csv"), 251u);
}

TEST(Cli, TrainEvalPlotPipeline) {
    const fs::path d = fresh_dir("pipeline");
    ASSERT_EQ(run("train --epochs 1 --out " + d.string() + kTiny), 0);
    EXPECT_TRUE(fs::exists(d / "checkpoint.bin"));
    EXPECT_EQ(line_count(d / "log.csv"), 2u);
    EXPECT_TRUE(fs::exists(d / "metrics.csv"));
    EXPECT_TRUE(fs::exists(d / "plots" / "loss.svg"));
    ASSERT_EQ(run("eval --checkpoint " + (d / "checkpoint.bin").string() + " --out " + (d / "eval").string()), 0);
    EXPECT_TRUE(fs::exists(d / "eval" / "metrics.csv"));
    ASSERT_EQ(run("plot --checkpoint " + (d / "checkpoint.bin").string() + " --out " + (d / "p").string() +
                  " --window 1"),
              0);
    EXPECT_TRUE(fs::exists(d / "p" / "plots" / "window_1.svg"));
    EXPECT_TRUE(fs::exists(d / "p" / "plots" / "window_1.csv"));
    EXPECT_EQ(run("eval --checkpoint " + (d / "nope.bin").string()), 3);
}

TEST(Cli, ConfigFileWithCommandLineOverride) {
    const fs::path d = fresh_dir("config");
    std::ofstream(d / "run.cfg") << "# tiny run\nepochs = 2\npatience=5\nvariant=single\n";
    const std::string cfg = " --config " + (d / "run.cfg").string();
    ASSERT_EQ(run("train" + cfg + " --out " + (d / "a").string() + kTiny), 0);
    EXPECT_EQ(line_count(d / "a" / "log.csv"), 3u);
    ASSERT_EQ(run("train" + cfg + " --epochs 1 --out " + (d / "b").string() + kTiny), 0);
    EXPECT_EQ(line_count(d / "b" / "log.csv"), 2u);
    std::ofstream(d / "broken.cfg") << "epochs\n";
    EXPECT_EQ(run("train --config " + (d / "broken.cfg").string() + kTiny), 2);
}
