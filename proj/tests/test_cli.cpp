#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "msps/image_io.hpp"
#include "msps/synth.hpp"

using namespace msps;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MSPS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("msps_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string p(const char* name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST(ImageIo, MsbRoundTripIsExact) {
  SplitMix64 rng(71);
  const Tensor x = random_normal({3, 5, 4}, rng);
  const auto path = fs::temp_directory_path() / "msps_roundtrip.msb";
  write_msb(path.string(), x);
  EXPECT_TRUE(read_image(path.string()) == x);
  fs::remove(path);
}

TEST(ImageIo, PgmRoundTripQuantizes) {
  SplitMix64 rng(72);
  const Tensor x = random_uniform({6, 7, 1}, rng, 0.0, 1.0);
  const auto path = fs::temp_directory_path() / "msps_roundtrip.pgm";
  write_pgm16(path.string(), x);
  const Tensor y = read_image(path.string());
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_LE(max_abs_diff(x, y), 0.5 / 65535.0 + 1e-15);
  fs::remove(path);
}

TEST(ImageIo, RejectsUnknownFormat) {
  const auto path = fs::temp_directory_path() / "msps_garbage.bin";
  std::ofstream(path) << "nope";
  EXPECT_THROW(read_image(path.string()), IoError);
  fs::remove(path);
}

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(run("synth --seed 5 --out " + p("a")), 0);
  ASSERT_EQ(run("synth --seed 5 --out " + p("b")), 0);
  for (const char* f : {"gt.msb", "ms.msb", "pan.pgm"}) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  const SyntheticPair pair = synthesize(5, 32, 4, 4);
  EXPECT_TRUE(read_image(p("a/gt.msb")) == pair.gt);
  EXPECT_TRUE(read_image(p("a/ms.msb")) == pair.ms);
}

TEST_F(Cli, FuseWithZeroDecoderReturnsUpsampledMs) {
  ASSERT_EQ(run("synth --out " + p("d")), 0);
  ASSERT_EQ(run("fuse --pan " + p("d/pan.pgm") + " --ms " + p("d/ms.msb") + " --out " + p("f1.msb") +
                " --ref " + p("d/gt.msb")),
            0);
  ASSERT_EQ(run("fuse --pan " + p("d/pan.pgm") + " --ms " + p("d/ms.msb") + " --out " + p("f2.msb")), 0);
  const Tensor fused = read_image(p("f1.msb"));
  EXPECT_EQ(fused.shape(), (Shape{32, 32, 4}));
  EXPECT_TRUE(fused == bilinear_upsample(read_image(p("d/ms.msb")), 4));
  EXPECT_EQ(slurp(p("f1.msb")), slurp(p("f2.msb")));
}

TEST_F(Cli, EvalAndConfig) {
  ASSERT_EQ(run("synth --out " + p("d")), 0);
  EXPECT_EQ(run("eval --ref " + p("d/gt.msb") + " --est " + p("d/gt.msb") + " --out " + p("m.txt")), 0);
  EXPECT_NE(slurp(p("m.txt")).find("psnr=inf"), std::string::npos);
  std::ofstream(p("run.cfg")) << "# synthetic pair\nsize = 16\nbands = 3\n";
  ASSERT_EQ(run("synth --config " + p("run.cfg") + " --out " + p("c")), 0);
  EXPECT_EQ(read_image(p("c/gt.msb")).shape(), (Shape{16, 16, 3}));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("synth --bogus"), 2);
  EXPECT_EQ(run("eval --ref " + p("missing.msb") + " --est " + p("missing.msb")), 3);
  EXPECT_EQ(run("synth --config " + p("missing.cfg")), 3);
  std::ofstream(p("bad.cfg")) << "nonsense = 1\n";
  EXPECT_EQ(run("synth --config " + p("bad.cfg") + " --out " + p("x")), 2);
  EXPECT_EQ(run("synth --scale 3 --out " + p("x")), 2);  // 32 is not a multiple of 3
  ASSERT_EQ(run("synth --out " + p("d")), 0);
  EXPECT_EQ(run("fuse --pan " + p("d/pan.pgm") + " --ms " + p("d/ms.msb") + " --scale 2 --out " + p("f.msb")), 2);
}
