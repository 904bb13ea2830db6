#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "candfuse/checkpoint.hpp"
#include "candfuse/config.hpp"
#include "candfuse/rng.hpp"

using namespace candfuse;

TEST_CASE("config parses keys, comments, and blanks") {
  auto cfg = KeyValueConfig::from_string(
      "# header comment\n"
      "d_model = 64\n"
      "lr=0.001  # inline\n"
      "\n"
      "  name =  my run \n"
      "flag = true\n");
  CHECK(cfg.get_int("d_model", 0) == 64);
  CHECK(cfg.get_double("lr", 0.0) == doctest::Approx(0.001));
  CHECK(cfg.get_string("name", "") == "my run");
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_int("absent", 7) == 7);
  CHECK_FALSE(cfg.has("absent"));
}

TEST_CASE("config rejects malformed lines and bad types") {
  CHECK_THROWS(KeyValueConfig::from_string("novalue\n"));
  CHECK_THROWS(KeyValueConfig::from_string("= 3\n"));
  auto cfg = KeyValueConfig::from_string("k = 12x\n");
  CHECK_THROWS(cfg.get_int("k", 0));
  CHECK_THROWS(cfg.get_double("k", 0.0));
  CHECK_THROWS(cfg.get_bool("k", false));
}

TEST_CASE("merge precedence: later layer wins") {
  auto defaults = KeyValueConfig::from_string("a = 1\nb = 2\n");
  auto file = KeyValueConfig::from_string("b = 20\nc = 30\n");
  auto flags = KeyValueConfig::from_string("c = 300\n");
  KeyValueConfig merged = defaults;
  merged.merge_from(file);
  merged.merge_from(flags);
  CHECK(merged.get_int("a", 0) == 1);
  CHECK(merged.get_int("b", 0) == 20);
  CHECK(merged.get_int("c", 0) == 300);
}

TEST_CASE("config serialize/parse round trip") {
  auto cfg = KeyValueConfig::from_string("z = 9\na = hello\n");
  auto back = KeyValueConfig::from_string(cfg.serialize());
  CHECK(back.entries() == cfg.entries());
}

TEST_CASE("checkpoint round trips parameters, config, and hash") {
  auto rng = RandomSource::for_purpose(3, "ckpt");
  ad::ParamStore store;
  store.add("enc.w", 4, 6, -1.0, &rng);
  store.add("enc.b", 1, 6, 0.0, &rng);
  store.add("dec.w", 6, 3, 0.5, &rng);

  CheckpointHeader h;
  h.kind = "summarizer";
  h.vocab_hash = 0xdeadbeefcafe1234ULL;
  h.config = {{"d_model", "6"}, {"seed", "3"}};

  std::string path = "/tmp/candfuse_test_ckpt.bin";
  save_checkpoint(path, h, store);

  LoadedCheckpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.header.kind == "summarizer");
  CHECK(ckpt.header.vocab_hash == h.vocab_hash);
  CHECK(ckpt.header.config.at("d_model") == "6");
  REQUIRE(ckpt.arrays.size() == 3);

  ad::ParamStore fresh;
  fresh.add("enc.w", 4, 6, 0.0, &rng);
  fresh.add("enc.b", 1, 6, 0.0, &rng);
  fresh.add("dec.w", 6, 3, 0.0, &rng);
  restore_params(ckpt, fresh);
  for (size_t i = 0; i < 3; ++i) {
    const Mat& a = store.entries()[i].value;
    const Mat& b = fresh.entries()[i].value;
    CHECK((a - b).norm() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint restore validates names and shapes") {
  auto rng = RandomSource::for_purpose(4, "ckpt2");
  ad::ParamStore store;
  store.add("w", 2, 2, 1.0, &rng);
  CheckpointHeader h;
  h.kind = "test";
  std::string path = "/tmp/candfuse_test_ckpt2.bin";
  save_checkpoint(path, h, store);
  LoadedCheckpoint ckpt = load_checkpoint(path);

  ad::ParamStore renamed;
  renamed.add("other", 2, 2, 0.0, &rng);
  CHECK_THROWS(restore_params(ckpt, renamed));

  ad::ParamStore reshaped;
  reshaped.add("w", 2, 3, 0.0, &rng);
  CHECK_THROWS(restore_params(ckpt, reshaped));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects non-checkpoint files") {
  std::string path = "/tmp/candfuse_test_notckpt.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "just some text that is not a checkpoint";
  }
  CHECK_THROWS(load_checkpoint(path));
  CHECK_THROWS(load_checkpoint("/tmp/candfuse_does_not_exist.bin"));
  std::remove(path.c_str());
}
