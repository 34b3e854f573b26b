#include "support.hpp"

#include "acwg/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace acwg;
using namespace acwg::testing;

namespace {

HeadConfig small_head(int l, std::uint64_t seed = 3) {
  HeadConfig h;
  h.input_dim = 5;
  h.hidden_dim = 4;
  h.output_dim = 3;
  h.num_groups = l;
  h.seed = seed;
  return h;
}

Eigen::VectorXd rand_vec(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Planted set: label = majority of causal words w3 (pos) / w4 (neg); the
// shortcut w5 follows the label most of the time.
struct Planted {
  std::vector<TokenizedSample> train;
  std::vector<AugmentedSet> augs;
};

Planted planted(int n, std::uint64_t seed) {
  Rng rng(seed);
  Planted p;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    auto ids = random_ids(rng, 20, 3, 6);
    for (auto& id : ids) {
      if (id <= 5) id = 6 + static_cast<int>(rng.below(10));
    }
    const int causal = label ? 3 : 4;
    ids[0] = causal;
    if (rng.bernoulli(0.9)) ids.push_back(5);
    rng.shuffle(ids);
    auto s = sample_from_ids("p" + std::to_string(i), ids, label);
    AugmentedSet a;
    a.anchor = s;
    a.positive = s;
    for (auto& id : a.positive.token_ids) {
      if (id == 5 && rng.bernoulli(0.5)) id = kMaskId;
    }
    TokenizedSample neg = s;
    for (auto& id : neg.token_ids) {
      if (id == causal) id = causal == 3 ? 4 : 3;
    }
    a.negatives.push_back(neg);
    a.groups.push_back({{"w" + std::to_string(causal)}, 1.0});
    p.train.push_back(std::move(s));
    p.augs.push_back(std::move(a));
  }
  return p;
}

}  // namespace

TEST_CASE("projection") {
  Rng rng(1);
  const auto head = init_head(small_head(3));
  const auto h = rand_vec(rng, 5);
  CHECK(project(head.projection, h) == project(head.projection, h));
  CHECK(project(head.projection, h).size() == 3);

  ProjectionParams zero = head.projection;
  zero.w1.setZero(), zero.b1.setZero(), zero.w2.setZero(), zero.b2.setZero();
  CHECK(project(zero, h).isZero(0.0));

  for (int i = 0; i < 20; ++i) {
    const auto hd = init_head(small_head(3, 100 + i));
    CHECK(projection_gradient_error(hd.projection, rand_vec(rng, 5), rand_vec(rng, 3)) < 1e-4);
  }
}

TEST_CASE("voting weights") {
  Rng rng(2);
  auto one = init_head(small_head(1));
  const std::vector<Eigen::VectorXd> z1{rand_vec(rng, 3)};
  const auto a1 = voting_weights(z1, one.voting);
  REQUIRE(a1.size() == 1);
  CHECK(a1[0] == 1.0);

  auto three = init_head(small_head(3));
  three.voting.weight.setZero();
  three.voting.bias.setZero();
  const std::vector<Eigen::VectorXd> z3{rand_vec(rng, 3), rand_vec(rng, 3), rand_vec(rng, 3)};
  const auto u = voting_weights(z3, three.voting);
  for (int i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  for (int t = 0; t < 100; ++t) {
    auto hd = init_head(small_head(3, 200 + t));
    hd.voting.weight *= 10.0;
    const int k = 1 + static_cast<int>(rng.below(3));
    std::vector<Eigen::VectorXd> z;
    for (int i = 0; i < k; ++i) z.push_back(rand_vec(rng, 3));
    const auto a = voting_weights(z, hd.voting);
    REQUIRE(a.size() == 3);
    CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int i = 0; i < 3; ++i) {
      if (i < k) CHECK(a[i] > 0.0);
      else CHECK(a[i] == 0.0);  // padded slots
    }
  }
  CHECK_THROWS_AS(voting_weights(std::vector<Eigen::VectorXd>{}, three.voting), ContractError);
  const std::vector<Eigen::VectorXd> four(4, rand_vec(rng, 3));
  CHECK_THROWS_AS(voting_weights(four, three.voting), ContractError);
  const std::vector<Eigen::VectorXd> wrong{rand_vec(rng, 2)};
  CHECK_THROWS_AS(voting_weights(wrong, three.voting), ContractError);
}

TEST_CASE("contrastive loss examples") {
  Eigen::VectorXd z(2), same(2), ortho(2);
  z << 1, 0;
  same << 2, 0;
  ortho << 0, 3;
  const Eigen::VectorXd alpha = Eigen::VectorXd::Ones(1);
  const std::vector<Eigen::VectorXd> neg_ortho{ortho}, neg_same{same};
  CHECK(contrastive_loss(z, same, neg_ortho, alpha) == 0.0);
  CHECK(contrastive_loss(z, ortho, neg_ortho, alpha) == 1.0);
  CHECK(contrastive_loss(z, same, neg_same, alpha, 1.0, LossForm::literal) == 1.0);
  CHECK(contrastive_loss(z, same, neg_same, alpha, 1.0, LossForm::canonical) == 1.0);
  CHECK_THROWS_AS(contrastive_loss(z, Eigen::VectorXd::Zero(2), neg_same, alpha), ContractError);
}

TEST_CASE("contrastive loss is non-negative and scale invariant") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const int k = 1 + static_cast<int>(rng.below(3));
    const auto z = rand_vec(rng, 4), zp = rand_vec(rng, 4);
    std::vector<Eigen::VectorXd> negs;
    for (int i = 0; i < k; ++i) negs.push_back(rand_vec(rng, 4));
    Eigen::VectorXd alpha(k);
    for (auto& a : alpha) a = rng.uniform() + 0.01;
    alpha /= alpha.sum();
    for (auto form : {LossForm::canonical, LossForm::literal}) {
      const double l = contrastive_loss(z, zp, negs, alpha, 1.0, form);
      CHECK(l >= 0.0);
      auto scaled = negs;
      for (auto& n : scaled) n *= 3.5;
      CHECK(contrastive_loss(z * 0.25, zp * 7.0, scaled, alpha, 1.0, form) == doctest::Approx(l).epsilon(1e-12));
    }
  }
}

TEST_CASE("total loss") {
  CHECK(total_loss(0.37, 5.0, 0.0) == 0.37);
  CHECK(total_loss(0.5, 2.0, 0.1) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK_THROWS_AS(total_loss(0.5, 2.0, -1.0), ContractError);
  CHECK(AcwgConfig{}.lambda == 0.01);
}

TEST_CASE("joint objective gradient matches central differences") {
  Rng rng(4);
  for (int t = 0; t < 12; ++t) {
    const auto params = tiny_model(300 + t, 12, 4, 5);
    const auto head = init_head(small_head(3, 400 + t));
    const auto b = random_batch(rng, 12, 6, 3);
    AcwgConfig cfg;
    cfg.lambda = 0.5;
    cfg.loss_form = t % 2 ? LossForm::literal : LossForm::canonical;
    cfg.ablation = t % 3 == 2 ? Ablation::wo_voting : Ablation::none;
    CHECK(objective_gradient_error(params, head, b.samples, b.augs, cfg) < 1e-3);
  }
}

TEST_CASE("objective: alpha simplex, hinge and serial/parallel equality") {
  Rng rng(5);
  const auto params = tiny_model(6, 12, 4, 5);
  const auto head = init_head(small_head(3, 7));
  for (int t = 0; t < 10; ++t) {
    const auto b = random_batch(rng, 12, 16, 3);
    AcwgConfig cfg;
    cfg.lambda = 0.3;
    ObjectiveGrads gs{BackboneGrads::zeros(params), HeadGrads::zeros(head)};
    ObjectiveGrads gp{BackboneGrads::zeros(params), HeadGrads::zeros(head)};
    const auto s = acwg_objective(params, head, b.samples, b.augs, cfg, &gs, Exec::serial);
    const auto p = acwg_objective(params, head, b.samples, b.augs, cfg, &gp, Exec::parallel);
    CHECK(s.total == p.total);
    CHECK(gs.backbone.embedding == gp.backbone.embedding);
    CHECK(gs.head.voting_weight == gp.head.voting_weight);
    CHECK(s.cl >= 0.0);
    CHECK(s.total == doctest::Approx(s.ce + 0.3 * s.cl).epsilon(1e-15));
    CHECK(s.alphas.size() == s.contrastive_samples);
    for (const auto& a : s.alphas) {
      CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK((a.array() >= 0.0).all());
    }
  }
}

TEST_CASE("lambda = 0 reproduces ERM bit for bit") {
  const auto data = planted(200, 8);
  const auto params = tiny_model(9, 20, 8, 8);
  auto hc = small_head(3, 10);
  hc.input_dim = 8;
  AcwgConfig cfg;
  cfg.lambda = 0.0;
  cfg.train.epochs = 3;
  cfg.train.batch_size = 16;
  const auto erm = train_erm(params, data.train, cfg.train);
  const auto acwg = train_acwg(params, init_head(hc), data.train, data.augs, cfg);
  CHECK(acwg.params == erm.params);
  REQUIRE(acwg.trace.epochs.size() == erm.trace.epochs.size());
  for (std::size_t e = 0; e < erm.trace.epochs.size(); ++e) CHECK(acwg.trace.epochs[e].ce == erm.trace.epochs[e].ce);
}

TEST_CASE("contrastive loss falls during training on planted groups") {
  const auto data = planted(300, 11);
  ModelConfig mc;
  mc.vocab_size = 20;
  mc.embed_dim = 8;
  mc.hidden_dim = 8;
  mc.seed = 12;
  auto hc = small_head(1, 13);
  hc.input_dim = 8;
  hc.hidden_dim = 8;
  hc.output_dim = 8;
  for (auto ablation : {Ablation::none, Ablation::wo_voting}) {
    AcwgConfig cfg;
    cfg.lambda = 0.5;
    cfg.ablation = ablation;
    cfg.train.epochs = 6;
    cfg.train.batch_size = 16;
    cfg.train.learning_rate = 5e-3;
    const auto r = train_acwg(init_params(mc), init_head(hc), data.train, data.augs, cfg);
    REQUIRE(r.trace.epochs.size() == 6);
    CHECK(r.trace.epochs.back().cl < r.trace.epochs.front().cl);
    CHECK(r.params.all_finite());
    CHECK(train_acwg(init_params(mc), init_head(hc), data.train, data.augs, cfg, Exec::serial).params == r.params);
  }
}

TEST_CASE("train_acwg rejects tuples whose anchor is not in the train set") {
  auto data = planted(20, 14);
  data.augs[3].anchor.sample_id = "nope";
  auto hc = small_head(1);
  hc.input_dim = 8;
  CHECK_THROWS_AS(train_acwg(tiny_model(1, 20, 8, 8), init_head(hc), data.train, data.augs, AcwgConfig{}),
                  ContractError);
}

TEST_CASE("head save and load") {
  const auto head = init_head(small_head(3));
  const auto dir = temp_dir("trainer");
  save_head(head, dir / "h.ckpt");
  CHECK(load_head(dir / "h.ckpt") == head);
}
