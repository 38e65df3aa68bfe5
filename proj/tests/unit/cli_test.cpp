#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "blocksr/codec.hpp"
#include "blocksr/pipeline.hpp"
#include "blocksr/png_io.hpp"
#include "cli.hpp"
#include "oracles.hpp"

namespace blocksr {
namespace {

namespace fs = std::filesystem;

const fs::path kSource = BLOCKSR_SOURCE_DIR;
const fs::path kSnapshots = BLOCKSR_SNAPSHOT_DIR;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("blocksr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const std::vector<std::string> kSubcommands{
    "compress",     "expand",      "interp",        "psf",           "deconv",     "sweep",
    "pipeline-run", "pipeline-import", "search",    "wavelet-topk",  "wavelet-decay", "inpaint",
    "coherence",    "rip",         "serve",         "fig-sweep",     "fig-decay",  "fig-topk"};

// Help text is compared with a frozen copy; set BLOCKSR_UPDATE_SNAPSHOTS=1 to rewrite.
void check_snapshot(const std::string& name, const std::string& text) {
  const fs::path file = kSnapshots / ("help_" + name + ".txt");
  const char* update = std::getenv("BLOCKSR_UPDATE_SNAPSHOTS");
  if (update != nullptr && std::string(update) == "1") {
    fs::create_directories(kSnapshots);
    std::ofstream(file, std::ios::binary) << text;
    return;
  }
  ASSERT_TRUE(fs::exists(file)) << file;
  EXPECT_EQ(text, slurp(file)) << name;
}

TEST(CliHelp, TopLevelSnapshot) {
  const Outcome o = cli({"--help"});
  EXPECT_EQ(o.code, 0);
  EXPECT_TRUE(o.err.empty());
  check_snapshot("blocksr", o.out);
  for (const std::string& sub : kSubcommands) EXPECT_NE(o.out.find("  " + sub + " "), std::string::npos) << sub;
}

TEST(CliHelp, SubcommandSnapshots) {
  for (const std::string& sub : kSubcommands) {
    const Outcome o = cli({sub, "--help"});
    EXPECT_EQ(o.code, 0) << sub;
    EXPECT_NE(o.out.find("Usage: blocksr " + sub), std::string::npos) << sub;
    check_snapshot(sub, o.out);
  }
}

TEST(CliExit, UsageErrorsReturnTwo) {
  for (const std::vector<std::string>& args :
       std::vector<std::vector<std::string>>{{}, {"nosuch"}, {"psf", "--bogus"}, {"compress"},
                                             {"compress", "--step", "5", "a.png"}, {"psf", "--L", "x"}}) {
    const Outcome o = cli(args);
    EXPECT_EQ(o.code, 2) << (args.empty() ? "" : args[0]);
    EXPECT_EQ(o.err.rfind("error: ", 0), 0u) << o.err;
    EXPECT_NE(o.err.find("Usage:"), std::string::npos);
  }
}

TEST_F(CliTest, OperationErrorsReturnOne) {
  Outcome o = cli({"expand", path("missing.lab"), path("x.png")});
  EXPECT_EQ(o.code, 1);
  EXPECT_EQ(o.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(std::count(o.err.begin(), o.err.end(), '\n'), 1);

  std::ofstream(path("bad.txt")) << "interp1 p2=300 p3=0 p4=0\n";
  write_png(oracle::random_image(8, 8, 1, 1), path("in.png"));
  o = cli({"pipeline-run", "--spec", path("bad.txt"), "--grid", path("in.png"), path("out.png")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("p2"), std::string::npos) << o.err;
}

TEST_F(CliTest, CompressExpandRoundTrip) {
  const RasterImage img = oracle::random_image(30, 21, 3, 5);
  write_png(img, path("in.png"));
  ASSERT_EQ(cli({"compress", "--step", "3", path("in.png"), path("out.lab")}).code, 0);
  ASSERT_EQ(cli({"expand", path("out.lab"), "-o", path("back.png")}).code, 0);
  std::ifstream lab_file(path("out.lab"), std::ios::binary);
  const BlockAverageImage lab = read_lab(lab_file);
  EXPECT_EQ(lab, compress(img, 3));
  const RasterImage back = read_png(path("back.png"));
  EXPECT_EQ(back, expand(lab));
  EXPECT_EQ(reconstruction_residual(back, lab.grid(), {3}), 0.0);
}

TEST(CliPsf, PrintMatchesPrintedMatrix) {
  const Outcome o = cli({"psf", "--L", "13", "--theta", "105", "--print"});
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream in(o.out);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    double v = 0.0;
    int cols = 0;
    while (cells >> v) {
      ASSERT_LT(cols, 5);
      EXPECT_NEAR(v, oracle::kPrintedMotion13x105[rows][cols], 0.002) << rows << "," << cols;
      ++cols;
    }
    EXPECT_EQ(cols, 5);
    ++rows;
  }
  EXPECT_EQ(rows, 13);
}

TEST_F(CliTest, SearchTraceIsNonIncreasing) {
  const RasterImage reference = oracle::rectangles(32, 3);
  write_png(reference, path("gt.png"));
  ASSERT_EQ(cli({"compress", "--step", "4", path("gt.png"), path("lr.lab")}).code, 0);
  const Outcome o = cli({"search", "--input", path("lr.lab"), "--reference", path("gt.png"), "--lambda", "0.1",
                         "--p", "0,128,255", "--gamma", "1,2", "--L", "0,5", "--theta", "0,90",
                         "--source", "DVC", "--amount", "100", "--noise", "NO", "--max-occurrences", "2",
                         "--out", path("spec.txt"), "--trace", path("trace.csv")});
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream trace(slurp(path("trace.csv")));
  std::string line;
  std::getline(trace, line);
  EXPECT_EQ(line, "iteration,fidelity,R,total");
  double previous = INFINITY;
  int rows = 0;
  while (std::getline(trace, line)) {
    const double total = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_LE(total, previous);
    previous = total;
    ++rows;
  }
  EXPECT_GE(rows, 2);
  const PipelineSpec spec = load_pipeline(path("spec.txt"));
  EXPECT_FALSE(spec.stages.empty());
}

TEST_F(CliTest, SeededCommandsAreDeterministic) {
  write_png(oracle::rectangles(16, 4), path("in.png"));
  for (const char* out : {"a.png", "b.png"}) {
    ASSERT_EQ(cli({"inpaint", "--seed", "7", "--iterations", "30", path("in.png"), path(out)}).code, 0);
  }
  EXPECT_EQ(slurp(path("a.png")), slurp(path("b.png")));
  const Outcome c1 = cli({"coherence", "--random", "8x16", "--seed", "3"});
  const Outcome c2 = cli({"coherence", "--random", "8x16", "--seed", "3"});
  const Outcome c3 = cli({"coherence", "--random", "8x16", "--seed", "4"});
  ASSERT_EQ(c1.code, 0) << c1.err;
  EXPECT_EQ(c1.out, c2.out);
  EXPECT_NE(c1.out, c3.out);
  const Outcome r = cli({"rip", "--random", "6x10", "--seed", "3", "--k", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GE(std::stod(r.out), 0.0);
}

TEST_F(CliTest, PipelineImportMatchesPreset) {
  const Outcome o = cli({"pipeline-import", (kSource / "data/matrices/marie-bonneau-1.csv").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const PipelineSpec spec = parse_pipeline(o.out);
  EXPECT_EQ(spec.name, "marie-bonneau-1");
  EXPECT_EQ(spec.stages, load_pipeline(kSource / "presets/marie-bonneau-1.txt").stages);
}

TEST_F(CliTest, PipelineRunMatchesLibrary) {
  const RasterImage grid = oracle::random_image(8, 8, 3, 12);
  write_png(grid, path("grid.png"));
  const Outcome o = cli({"pipeline-run", "--preset", "marie-bonneau-1", "--grid", path("grid.png"),
                         path("out.png"), "--metrics", path("metrics.png")});
  ASSERT_EQ(o.code, 0) << o.err;
  const RunResult r = run(load_pipeline(kSource / "presets/marie-bonneau-1.txt"),
                          BlockAverageImage::from_grid(grid, 4));
  EXPECT_EQ(read_png(path("out.png")), r.output);
  EXPECT_EQ(read_png(path("metrics.png")), r.metrics);
}

TEST_F(CliTest, InterpLevelsOnLabInput) {
  const RasterImage grid = oracle::random_image(6, 6, 1, 2);
  {
    std::ofstream lab_file(path("in.lab"), std::ios::binary);
    write_lab(BlockAverageImage::from_grid(grid, 3), lab_file);
  }
  ASSERT_EQ(cli({"interp", "--step3", "--p2", "0", "--p3", "0", "--p4", "0", path("in.lab"), path("id.png")}).code, 0);
  EXPECT_EQ(read_png(path("id.png")), expand_blocks(grid, 3));
}

TEST_F(CliTest, SweepCsvToStdout) {
  write_png(oracle::rectangles(32, 6), path("in.png"));
  const Outcome o = cli({"sweep", path("in.png"), "--L", "3,5", "--theta", "0,90", "--amount", "25",
                         "--reference", path("in.png"), "--format", "csv"});
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream in(o.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row,col,L,theta,objective");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

}  // namespace
}  // namespace blocksr
