#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "alrgan/config.hpp"
#include "alrgan/errors.hpp"

using namespace alrgan;

TEST(Config, DefaultsRoundTrip) {
  RunConfig c;
  RunConfig back = parse_config(serialize(c));
  EXPECT_EQ(serialize(back), serialize(c));
}

TEST(Config, EditedValuesRoundTrip) {
  RunConfig c;
  c.gan.gamma = 0.123456789012345;
  c.gan.stages = 2;
  c.gan.pr = false;
  c.gan.seed = 18446744073709551615ull;
  c.output_dir = "out dir";
  c.eval_size = 7;
  RunConfig back = parse_config(serialize(c));
  EXPECT_EQ(back.gan.gamma, c.gan.gamma);
  EXPECT_EQ(back.gan.stages, 2u);
  EXPECT_FALSE(back.gan.pr);
  EXPECT_EQ(back.gan.seed, c.gan.seed);
  EXPECT_EQ(back.output_dir, "out dir");
  EXPECT_EQ(back.eval_size, 7u);
  EXPECT_EQ(serialize(back), serialize(c));
}

TEST(Config, EveryKeyIsSerialisedOnce) {
  const std::string text = serialize(RunConfig{});
  for (const auto& key : config_keys()) {
    const auto first = text.find("\n" + key + " =");
    const bool at_start = text.rfind(key + " =", 0) == 0;
    EXPECT_TRUE(at_start || first != std::string::npos) << key;
  }
}

TEST(Config, CommentsAndBlankLinesAreIgnored) {
  RunConfig c = parse_config("# header\n\n  gamma = 0.5   # trailing\nstages=2\n");
  EXPECT_EQ(c.gan.gamma, 0.5);
  EXPECT_EQ(c.gan.stages, 2u);
  EXPECT_EQ(c.gan.d, RunConfig{}.gan.d);
}

TEST(Config, UnknownKeyNamesTheLine) {
  try {
    parse_config("gamma = 0.1\nwarp = 9\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("warp"), std::string::npos);
  }
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_config("gamma = 0.1\ngamma = 0.2\n"), ConfigError);
  EXPECT_THROW(parse_config("gamma 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("stages = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("stages = 2.5\n"), ConfigError);
  EXPECT_THROW(parse_config("alr = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("gamma = nan\n"), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  EXPECT_THROW(parse_config("stages = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("lr_g = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("gamma = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("batch = 1\n"), ConfigError);
  EXPECT_NO_THROW(parse_config("lr_g = 0\nlr_d = 0\n"));
}

TEST(Config, SetAndGetAgree) {
  RunConfig c;
  for (const auto& key : config_keys()) {
    const std::string v = get_config_value(c, key);
    set_config_value(c, key, v);
    EXPECT_EQ(get_config_value(c, key), v) << key;
  }
  EXPECT_THROW(set_config_value(c, "nope", "1"), ConfigError);
  EXPECT_THROW(get_config_value(c, "nope"), ConfigError);
}

TEST(Config, LoadConfigReadsAFile) {
  const std::string path = ::testing::TempDir() + "alrgan_config_test.cfg";
  {
    std::ofstream out(path);
    out << "gamma = 0.4\n";
  }
  EXPECT_EQ(load_config(path).gan.gamma, 0.4);
  std::remove(path.c_str());
  EXPECT_THROW(load_config(path), ConfigError);
}

TEST(ArchitectureHash, IgnoresRunSettings) {
  GanConfig a, b;
  b.seed = 99;
  b.steps = 1;
  b.lr_g = 0.5;
  b.lr_d = 0.0;
  EXPECT_EQ(architecture_hash(a), architecture_hash(b));
}

TEST(ArchitectureHash, TracksModelShape) {
  GanConfig a, b, c;
  b.d = 32;
  c.stages = 2;
  EXPECT_NE(architecture_hash(a), architecture_hash(b));
  EXPECT_NE(architecture_hash(a), architecture_hash(c));
  EXPECT_NE(architecture_hash(b), architecture_hash(c));
}

TEST(Config, WordSlotsMustFitTheFeatureWidth) {
  EXPECT_THROW(parse_config("d = 8\nt = 10\n"), ConfigError);
  EXPECT_NO_THROW(parse_config("d = 10\nt = 10\n"));
}
