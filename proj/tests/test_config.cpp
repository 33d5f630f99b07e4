#include <gtest/gtest.h>

#include "pfnmt/config.hpp"
#include "test_util.hpp"

using namespace pfnmt;

TEST(Config, DefaultsWhenEmpty) {
  const auto c = parse_run_config_string("# nothing\n\n");
  EXPECT_EQ(c.model, ModelConfig{});
  EXPECT_EQ(c.decode.beam, DecodeOptions{}.beam);
  EXPECT_TRUE(c.preset.empty());
}

TEST(Config, ParsesKeysValuesAndComments) {
  const auto c = parse_run_config_string(
      "emb = 16   # trailing comment\n"
      "  dec=24\n"
      "use_past = true\n"
      "future_kind = gru-o\n"
      "feed_future_timing = current\n"
      "lr0 = 0.25\n"
      "beam = 7\n"
      "rerank_weights = 1, 0.5 ,2\n"
      "train_src = data/train.src\n");
  EXPECT_EQ(c.model.emb, 16u);
  EXPECT_EQ(c.model.dec, 24u);
  EXPECT_TRUE(c.model.use_past);
  EXPECT_EQ(c.model.future_kind, FutureCellKind::GruO);
  EXPECT_EQ(c.model.feed_future_timing, FeedTiming::Current);
  EXPECT_EQ(c.train.lr0, 0.25);
  EXPECT_EQ(c.decode.beam, 7u);
  EXPECT_EQ(c.decode.rerank.nll, 1.0);
  EXPECT_EQ(c.decode.rerank.future, 0.5);
  EXPECT_EQ(c.decode.rerank.past, 2.0);
  EXPECT_EQ(c.paths.train_src, "data/train.src");
}

TEST(Config, PresetAppliesBeforeExplicitSwitches) {
  const auto full = parse_run_config_string("preset = +frnn+prnn+loss\n");
  EXPECT_TRUE(full.model.use_future);
  EXPECT_TRUE(full.model.use_past);
  EXPECT_TRUE(full.model.use_losses);
  const auto over = parse_run_config_string("use_past = false\npreset = +frnn+prnn+loss\n");
  EXPECT_TRUE(over.model.use_future);
  EXPECT_FALSE(over.model.use_past);
}

TEST(Config, ErrorsAreConfigErrors) {
  for (const std::string bad : {"colour = red\n", "emb = 4\nemb = 5\n", "emb\n", "= 4\n", "emb = four\n",
                                "emb = -3\n", "use_past = maybe\n", "preset = +nothing\n", "future_kind = lstm\n",
                                "beam = 0\n", "lr0 = 0\n", "rerank_weights = 1,2\n", "rerank_weights = 1,x,2\n"})
    EXPECT_THROW(parse_run_config_string(bad), ConfigError) << bad;
  EXPECT_THROW(load_run_config("/nonexistent/run.conf"), ConfigError);
}

TEST(Config, ErrorMessageNamesTheLine) {
  try {
    parse_run_config_string("emb = 4\n\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, WrittenConfigReadsBackIdentically) {
  auto c = parse_run_config_string(
      "preset = +frnn-gru-o\nemb = 5\nlr0 = 0.1234567890123\nbeam = 3\ngreedy = true\n"
      "rerank_weights = 1,0.25,0.75\ncheckpoint = m.ckpt\ninit_from = base.ckpt\ngen_task = lex-sub-shift\n"
      "coverage_task = permuted-copy\ndecoder_init = zero\n");
  const auto text = write_run_config(c);
  const auto back = parse_run_config_string(text);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train.lr0, c.train.lr0);
  EXPECT_EQ(back.train.init_from, c.train.init_from);
  EXPECT_EQ(back.decode.greedy, c.decode.greedy);
  EXPECT_EQ(back.decode.rerank.future, 0.25);
  EXPECT_EQ(back.paths.checkpoint, "m.ckpt");
  EXPECT_EQ(back.gen.task, "lex-sub-shift");
  EXPECT_EQ(write_run_config(back), text);
}

TEST(Config, SampleConfigsParse) {
  const std::string dir = PFNMT_SOURCE_DIR "/configs/";
  for (const std::string name : {"copy-small.conf", "lex-sub-shift.conf", "full-size.conf"})
    EXPECT_NO_THROW(load_run_config(dir + name)) << name;
}
