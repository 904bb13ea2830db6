#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "candfuse/latentinfo.hpp"
#include "candfuse/textinfo.hpp"

using namespace candfuse;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_ff = 16;
  cfg.d_latent = 4;
  cfg.vocab_size = 12;
  cfg.max_positions = 32;
  cfg.k = 2;
  return cfg;
}

void zero_all(ad::ParamStore& store) {
  for (auto& e : store.entries()) e.value.setZero();
}

Mat bow_row(const std::vector<int>& ids, int vocab_size) {
  BowTarget t = bow_target(ids, vocab_size);
  return Eigen::Map<const Mat>(t.weights.data(), 1, vocab_size);
}

}  // namespace

TEST_CASE("prior and posterior produce latent-width rows") {
  auto rng = RandomSource::for_purpose(11, "lat");
  ad::ParamStore store;
  LatentModel lat(micro_config(), store, rng);
  ad::Graph g(&store);
  ad::Var hd = g.input(Mat::Random(1, 8));
  ad::Var hc = g.input(Mat::Random(1, 8));
  ad::Var hg = g.input(Mat::Random(1, 8));

  for (Factor f : {Factor::kPositive, Factor::kNegative}) {
    auto pr = lat.prior(g, hd, hc, f);
    auto po = lat.posterior(g, hd, hc, hg, f);
    for (const auto& d : {pr, po}) {
      CHECK(g.value(d.mu).rows() == 1);
      CHECK(g.value(d.mu).cols() == 4);
      CHECK(g.value(d.log_var).cols() == 4);
      CHECK(g.value(d.log_var).maxCoeff() <= 10.0);
      CHECK(g.value(d.log_var).minCoeff() >= -10.0);
    }
  }
  CHECK_THROWS(lat.posterior(g, hd, hc, ad::Var{}, Factor::kPositive));
}

TEST_CASE("zero weights reduce every head to its bias") {
  auto rng = RandomSource::for_purpose(12, "lat");
  ad::ParamStore store;
  LatentModel lat(micro_config(), store, rng);
  zero_all(store);
  store.entry(store.find("lat.p.prior.mu.b")).value.setConstant(0.25);

  ad::Graph g(&store);
  auto pr = lat.prior(g, g.input(Mat::Random(1, 8)), g.input(Mat::Random(1, 8)),
                      Factor::kPositive);
  CHECK((g.value(pr.mu).array() == 0.25).all());
  CHECK((g.value(pr.log_var).array() == 0.0).all());

  auto pr_n = lat.prior(g, g.input(Mat::Random(1, 8)),
                        g.input(Mat::Random(1, 8)), Factor::kNegative);
  CHECK((g.value(pr_n.mu).array() == 0.0).all());
}

TEST_CASE("positive and negative factors own disjoint parameters") {
  auto rng = RandomSource::for_purpose(13, "lat");
  ad::ParamStore store;
  LatentModel lat(micro_config(), store, rng);
  int pos = 0, neg = 0;
  for (const auto& e : store.entries()) {
    bool is_pos = e.name.rfind("lat.p.", 0) == 0;
    bool is_neg = e.name.rfind("lat.n.", 0) == 0;
    CHECK(is_pos != is_neg);  // exactly one stream owns each array
    pos += is_pos;
    neg += is_neg;
  }
  CHECK(pos == 20);
  CHECK(neg == 20);
}

TEST_CASE("sampling is reproducible and centered on mu") {
  auto rng = RandomSource::for_purpose(14, "lat");
  ad::ParamStore store;
  LatentModel lat(micro_config(), store, rng);
  ad::Graph g(&store);
  LatentModel::Gaussian dist;
  Mat mu(1, 4);
  mu << 1.0, -2.0, 0.5, 3.0;
  dist.mu = g.input(mu);
  dist.log_var = g.input(Mat::Constant(1, 4, std::log(0.25)));

  SUBCASE("same sampling stream gives the same draw") {
    auto r1 = RandomSource::for_purpose(21, "draw");
    auto r2 = RandomSource::for_purpose(21, "draw");
    ad::Var z1 = lat.sample(g, dist, r1);
    ad::Var z2 = lat.sample(g, dist, r2);
    CHECK((g.value(z1) - g.value(z2)).norm() == 0.0);
  }

  SUBCASE("Monte-Carlo mean and spread match the distribution") {
    auto r = RandomSource::for_purpose(22, "draw");
    Mat acc = Mat::Zero(1, 4);
    Mat acc2 = Mat::Zero(1, 4);
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
      Mat z = g.value(lat.sample(g, dist, r));
      acc += z;
      acc2 += z.cwiseProduct(z).eval();
    }
    Mat mean = acc / n;
    Mat var = acc2 / n - mean.cwiseProduct(mean);
    CHECK((mean - mu).cwiseAbs().maxCoeff() < 0.05);
    CHECK((var.array() - 0.25).abs().maxCoeff() < 0.05);
  }
}

TEST_CASE("kl between identical gaussians is zero and grows with separation") {
  ad::ParamStore store;
  ad::Graph g(&store);
  ad::Var mu = g.input(Mat::Random(1, 4));
  ad::Var lv = g.input(Mat::Random(1, 4));
  CHECK(g.value(ad::gaussian_kl(g, mu, lv, mu, lv))(0, 0) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // KL(N(1,1) || N(0,1)) in one dimension is 0.5.
  ad::Var one = g.input(Mat::Constant(1, 1, 1.0));
  ad::Var zero = g.input(Mat::Zero(1, 1));
  CHECK(g.value(ad::gaussian_kl(g, one, zero, zero, zero))(0, 0) ==
        doctest::Approx(0.5));

  auto r = RandomSource::for_purpose(31, "kl");
  for (int i = 0; i < 200; ++i) {
    ad::Var mq = g.input(r.gaussian_matrix(1, 4));
    ad::Var lq = g.input(0.5 * r.gaussian_matrix(1, 4));
    ad::Var mp = g.input(r.gaussian_matrix(1, 4));
    ad::Var lp = g.input(0.5 * r.gaussian_matrix(1, 4));
    CHECK(g.value(ad::gaussian_kl(g, mq, lq, mp, lp))(0, 0) >= -1e-12);
  }
}

TEST_CASE("squeeze wants exactly k latents and matches the model width") {
  auto rng = RandomSource::for_purpose(15, "lat");
  ad::ParamStore store;
  LatentModel lat(micro_config(), store, rng);
  ad::Graph g(&store);
  ad::Var z = g.input(Mat::Random(1, 4));
  CHECK_THROWS(lat.squeeze(g, {z}, Factor::kPositive));
  CHECK_THROWS(lat.squeeze(g, {z, z, z}, Factor::kPositive));
  ad::Var s = lat.squeeze(g, {z, z}, Factor::kPositive);
  CHECK(g.value(s).rows() == 1);
  CHECK(g.value(s).cols() == 8);
}

TEST_CASE("informativeness loss is log-vocab at zero weights") {
  auto rng = RandomSource::for_purpose(16, "lat");
  ad::ParamStore store;
  ModelConfig cfg = micro_config();
  LatentModel lat(cfg, store, rng);
  zero_all(store);
  ad::Graph g(&store);
  ad::Var z = g.input(Mat::Random(1, 4));
  Mat bow = bow_row({7, 9, 10}, cfg.vocab_size);
  ad::Var loss = lat.informativeness_loss(g, z, bow, Factor::kNegative);
  CHECK(g.value(loss)(0, 0) == doctest::Approx(std::log(12.0)));
}

TEST_CASE("adversarial classifier loss cannot reach the encoder side") {
  auto rng = RandomSource::for_purpose(17, "lat");
  ad::ParamStore store;
  ModelConfig cfg = micro_config();
  LatentModel lat(cfg, store, rng);
  Mat bow = bow_row({3, 5}, cfg.vocab_size);

  store.zero_grads();
  {
    ad::Graph g(&store);
    ad::Var hd = g.input(Mat::Random(1, 8));
    ad::Var hc = g.input(Mat::Random(1, 8));
    auto pr = lat.prior(g, hd, hc, Factor::kPositive);
    auto draw = RandomSource::for_purpose(40, "draw");
    ad::Var z = lat.sample(g, pr, draw);
    auto terms = lat.adversarial_terms(g, z, bow, Factor::kPositive);
    g.backward(terms.classifier_loss);
  }
  for (const auto& e : store.entries()) {
    bool is_adv = e.name.find(".adv.") != std::string::npos &&
                  e.name.rfind("lat.p", 0) == 0;
    if (is_adv)
      CHECK(e.grad.norm() > 0.0);
    else
      CHECK(e.grad.norm() == 0.0);  // exactly zero, not merely small
  }

  // The entropy term, by contrast, flows through z into the prior network.
  store.zero_grads();
  {
    ad::Graph g(&store);
    ad::Var hd = g.input(Mat::Random(1, 8));
    ad::Var hc = g.input(Mat::Random(1, 8));
    auto pr = lat.prior(g, hd, hc, Factor::kPositive);
    auto draw = RandomSource::for_purpose(40, "draw");
    ad::Var z = lat.sample(g, pr, draw);
    auto terms = lat.adversarial_terms(g, z, bow, Factor::kPositive);
    g.backward(terms.entropy);
  }
  CHECK(store.entry(store.find("lat.p.prior.mu.w")).grad.norm() > 0.0);
}

TEST_CASE("latent pipeline gradients match finite differences") {
  auto rng = RandomSource::for_purpose(18, "lat-grad");
  ad::ParamStore store;
  ModelConfig cfg = micro_config();
  LatentModel lat(cfg, store, rng);
  Mat hd = Mat::Random(1, 8), hc1 = Mat::Random(1, 8), hc2 = Mat::Random(1, 8),
      hg = Mat::Random(1, 8);
  Mat bow = bow_row({2, 6, 8}, cfg.vocab_size);

  auto loss_value = [&](ad::Graph& g) {
    auto po1 = lat.posterior(g, g.input(hd), g.input(hc1), g.input(hg),
                             Factor::kPositive);
    auto po2 = lat.posterior(g, g.input(hd), g.input(hc2), g.input(hg),
                             Factor::kPositive);
    auto d1 = RandomSource::for_purpose(50, "z1");
    auto d2 = RandomSource::for_purpose(51, "z2");
    ad::Var z1 = lat.sample(g, po1, d1);
    ad::Var z2 = lat.sample(g, po2, d2);
    ad::Var s = lat.squeeze(g, {z1, z2}, Factor::kPositive);
    ad::Var inf = lat.informativeness_loss(g, z1, bow, Factor::kPositive);
    return g.add(g.sum(g.square(s)), inf);
  };

  store.zero_grads();
  {
    ad::Graph g(&store);
    g.backward(loss_value(g));
  }

  auto pick = RandomSource::for_purpose(52, "pick");
  const double h = 1e-5;
  for (int trial = 0; trial < 30; ++trial) {
    auto& entries = store.entries();
    auto& e = entries[static_cast<size_t>(
        pick.uniform_int(0, static_cast<int>(entries.size()) - 1))];
    int i = pick.uniform_int(0, static_cast<int>(e.value.rows()) - 1);
    int j = pick.uniform_int(0, static_cast<int>(e.value.cols()) - 1);
    double orig = e.value(i, j);
    e.value(i, j) = orig + h;
    double lp;
    {
      ad::Graph g(&store);
      lp = g.value(loss_value(g))(0, 0);
    }
    e.value(i, j) = orig - h;
    double lm;
    {
      ad::Graph g(&store);
      lm = g.value(loss_value(g))(0, 0);
    }
    e.value(i, j) = orig;
    double numeric = (lp - lm) / (2.0 * h);
    double analytic = e.grad(i, j);
    double denom = std::max({1e-6, std::abs(numeric), std::abs(analytic)});
    INFO(e.name, " (", i, ",", j, ")");
    CHECK(std::abs(numeric - analytic) / denom < 1e-4);
  }
}
