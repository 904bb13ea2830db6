#include <doctest.h>

#include <cmath>
#include <vector>

#include "candfuse/backbone.hpp"

using namespace candfuse;

namespace {

ModelConfig micro_config(int vocab = 20) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_ff = 16;
  cfg.d_latent = 4;
  cfg.vocab_size = vocab;
  cfg.max_positions = 64;
  cfg.k = 2;
  return cfg;
}

Instance toy_instance(int n_docs) {
  Instance inst;
  inst.id = "toy";
  for (int d = 0; d < n_docs; ++d) {
    Document doc;
    doc.raw_text = "d";
    doc.words = {"a", "b"};
    doc.ids = {7, 8};
    inst.documents.push_back(doc);
  }
  Document gold;
  gold.raw_text = "g";
  gold.words = {"c"};
  gold.ids = {9};
  inst.gold = gold;
  for (int c = 0; c < 3; ++c) {
    Candidate cand;
    cand.raw_text = "c";
    cand.origin = "m";
    cand.words = {"x", "y"};
    cand.ids = {10 + c, 11};
    inst.pool.push_back(cand);
  }
  return inst;
}

}  // namespace

TEST_CASE("config validation rejects bad shapes") {
  ModelConfig cfg = micro_config();
  CHECK_NOTHROW(cfg.validate());
  ModelConfig bad = cfg;
  bad.d_model = 9;  // not divisible by 2 heads
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.vocab_size = 2;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.dropout = 1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("position encoding has the sinusoidal anchor values") {
  Mat pe = position_encoding(4, 6);
  CHECK(pe(0, 0) == doctest::Approx(0.0));
  CHECK(pe(0, 1) == doctest::Approx(1.0));
  CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(pe(1, 1) == doctest::Approx(std::cos(1.0)));
  // deeper channels rotate slower
  CHECK(std::abs(pe(1, 4)) < std::abs(pe(1, 0)));
}

TEST_CASE("encoder output shape follows the input length") {
  auto rng = RandomSource::for_purpose(1, "bb");
  ad::ParamStore store;
  Transformer model(micro_config(), store, rng);
  ad::Graph g(&store);
  for (int len : {1, 3, 9}) {
    std::vector<int> ids(static_cast<size_t>(len), 7);
    const Mat& states = g.value(model.encode(g, ids));
    CHECK(states.rows() == len);
    CHECK(states.cols() == 8);
  }
  CHECK_THROWS(model.encode(g, {}));
  std::vector<int> too_long(65, 7);
  CHECK_THROWS(model.encode(g, too_long));
}

TEST_CASE("encoding is deterministic at fixed weights") {
  auto rng = RandomSource::for_purpose(2, "bb");
  ad::ParamStore store;
  Transformer model(micro_config(), store, rng);
  std::vector<int> ids = {2, 7, 8, 3};
  ad::Graph g1(&store), g2(&store);
  CHECK((g1.value(model.encode(g1, ids)) - g2.value(model.encode(g2, ids)))
            .norm() == 0.0);
}

TEST_CASE("document pooling is the exact mean of marker states") {
  auto rng = RandomSource::for_purpose(3, "bb");
  ad::ParamStore store;
  Transformer model(micro_config(), store, rng);

  SUBCASE("single document pools to its own marker") {
    Instance inst = toy_instance(1);
    ad::Graph g(&store);
    EncoderOutput enc = encode_instance(g, model, inst, {0, 1}, true);
    CHECK((g.value(enc.pooled) - g.value(enc.marker_states[0])).norm() == 0.0);
    CHECK(g.value(enc.source_start).rows() == 1);
    CHECK(g.value(enc.gold_vec).cols() == 8);
    CHECK(enc.candidate_vecs.size() == 2);
  }

  SUBCASE("identical documents pool to the shared marker value") {
    Instance inst = toy_instance(2);
    ad::Graph g(&store);
    EncoderOutput enc = encode_instance(g, model, inst, {}, false);
    REQUIRE(enc.marker_states.size() == 2);
    Mat mean = 0.5 * (g.value(enc.marker_states[0]) +
                      g.value(enc.marker_states[1]));
    CHECK((g.value(enc.pooled) - mean).norm() < 1e-15);
    CHECK_FALSE(enc.gold_vec.valid());
  }

  SUBCASE("three distinct documents still pool exactly") {
    Instance inst = toy_instance(3);
    inst.documents[1].ids = {12, 13};
    inst.documents[2].ids = {14};
    ad::Graph g(&store);
    EncoderOutput enc = encode_instance(g, model, inst, {}, false);
    Mat mean = Mat::Zero(1, 8);
    for (const auto& m : enc.marker_states) mean += g.value(m);
    mean /= 3.0;
    CHECK((g.value(enc.pooled) - mean).norm() < 1e-14);
  }
}

TEST_CASE("decoder distributions are causal and normalized") {
  auto rng = RandomSource::for_purpose(4, "bb");
  ad::ParamStore store;
  Transformer model(micro_config(), store, rng);
  Mat memory_values;
  {
    ad::Graph g(&store);
    memory_values = g.value(model.encode(g, {2, 7, 8, 3}));
  }

  ad::Graph g(&store);
  ad::Var mem = g.input(memory_values);
  std::vector<int> ids = {4, 7, 8, 9};
  ad::Var logits = model.output_logits(g, model.decode(g, ids, mem));
  const Mat& probs = g.value(g.softmax_rows(logits));
  for (int r = 0; r < probs.rows(); ++r)
    CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));

  // Changing a suffix token must not affect earlier rows.
  ad::Graph g2(&store);
  std::vector<int> ids2 = {4, 7, 8, 15};
  ad::Var logits2 = model.output_logits(g2, model.decode(g2, ids2, g2.input(memory_values)));
  const Mat& a = g.value(logits);
  const Mat& b = g2.value(logits2);
  CHECK((a.topRows(3) - b.topRows(3)).norm() == 0.0);
  CHECK((a.row(3) - b.row(3)).norm() > 0.0);

  ad::Graph g3(&store);
  CHECK_THROWS(model.decode(g3, ids, ad::Var{}));
}

TEST_CASE("zero cross bias reproduces the unbiased decoder bitwise") {
  auto rng = RandomSource::for_purpose(5, "bb");
  ad::ParamStore store;
  Transformer model(micro_config(), store, rng);
  Mat memory_values;
  {
    ad::Graph g(&store);
    memory_values = g.value(model.encode(g, {2, 7, 3}));
  }
  std::vector<int> ids = {4, 9, 10};
  ad::Graph g(&store);
  ad::Var plain = model.decode(g, ids, g.input(memory_values));
  ad::Var biased =
      model.decode(g, ids, g.input(memory_values), g.input(Mat::Zero(1, 8)));
  CHECK((g.value(plain) - g.value(biased)).norm() == 0.0);
}

TEST_CASE("encoder-only model refuses decoding") {
  auto rng = RandomSource::for_purpose(6, "bb");
  ModelConfig cfg = micro_config();
  cfg.n_dec_layers = 0;
  ad::ParamStore store;
  Transformer model(cfg, store, rng);
  ad::Graph g(&store);
  ad::Var mem = g.input(Mat::Ones(2, 8));
  CHECK_THROWS(model.decode(g, {4, 7}, mem));
}

TEST_CASE("micro-model reconstruction gradients match finite differences") {
  auto rng = RandomSource::for_purpose(7, "bb-grad");
  ad::ParamStore store;
  Transformer model(micro_config(), store, rng);
  std::vector<int> src = {2, 7, 8, 9, 3};
  std::vector<int> dec_in = {4, 10, 11};
  std::vector<int> targets = {10, 11, 5};
  std::vector<uint8_t> keep = {1, 1, 1};

  auto loss_value = [&]() {
    ad::Graph g(&store);
    ad::Var mem = model.encode(g, src);
    ad::Var logits = model.output_logits(g, model.decode(g, dec_in, mem));
    return g.value(g.cross_entropy_rows(logits, targets, keep))(0, 0);
  };

  store.zero_grads();
  {
    ad::Graph g(&store);
    ad::Var mem = model.encode(g, src);
    ad::Var logits = model.output_logits(g, model.decode(g, dec_in, mem));
    g.backward(g.cross_entropy_rows(logits, targets, keep));
  }

  // 20 random parameter coordinates, central differences.
  auto pick = RandomSource::for_purpose(99, "bb-grad-pick");
  const double h = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    auto& entries = store.entries();
    auto& e = entries[static_cast<size_t>(
        pick.uniform_int(0, static_cast<int>(entries.size()) - 1))];
    int i = pick.uniform_int(0, static_cast<int>(e.value.rows()) - 1);
    int j = pick.uniform_int(0, static_cast<int>(e.value.cols()) - 1);
    double orig = e.value(i, j);
    e.value(i, j) = orig + h;
    double lp = loss_value();
    e.value(i, j) = orig - h;
    double lm = loss_value();
    e.value(i, j) = orig;
    double numeric = (lp - lm) / (2.0 * h);
    double analytic = e.grad(i, j);
    double denom = std::max({1e-8, std::abs(numeric), std::abs(analytic)});
    INFO(e.name, " (", i, ",", j, ") numeric=", numeric, " analytic=", analytic);
    CHECK(std::abs(numeric - analytic) / denom < 1e-3);
  }
}
