#include "support.hpp"

#include "acwg/common.hpp"

#include <atomic>
#include <functional>

#include <unistd.h>

namespace acwg::testing {

namespace {

struct Slot {
  double* data;
  Eigen::Index size;
};

Eigen::VectorXd flatten(std::initializer_list<const Eigen::MatrixXd*> mats) {
  Eigen::Index n = 0;
  for (auto* m : mats) n += m->size();
  Eigen::VectorXd v(n);
  Eigen::Index off = 0;
  for (auto* m : mats) {
    v.segment(off, m->size()) = Eigen::Map<const Eigen::VectorXd>(m->data(), m->size());
    off += m->size();
  }
  return v;
}

// Central differences of f over every entry of `slots`, in order.
Eigen::VectorXd numeric_gradient(const std::vector<Slot>& slots, const std::function<double()>& f, double step) {
  Eigen::Index n = 0;
  for (const auto& s : slots) n += s.size;
  Eigen::VectorXd g(n);
  Eigen::Index k = 0;
  for (const auto& s : slots) {
    for (Eigen::Index i = 0; i < s.size; ++i, ++k) {
      const double keep = s.data[i];
      s.data[i] = keep + step;
      const double up = f();
      s.data[i] = keep - step;
      const double down = f();
      s.data[i] = keep;
      g[k] = (up - down) / (2.0 * step);
    }
  }
  return g;
}

std::vector<Slot> backbone_slots(ClassifierParams& p) {
  return {{p.embedding.data(), p.embedding.size()}, {p.w1.data(), p.w1.size()}, {p.b1.data(), p.b1.size()},
          {p.w2.data(), p.w2.size()}, {p.b2.data(), p.b2.size()}};
}

}  // namespace

ClassifierParams tiny_model(std::uint64_t seed, int vocab_size, int embed, int hidden, Activation act,
                            double embed_scale) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = embed;
  c.hidden_dim = hidden;
  c.activation = act;
  c.embed_init_scale = embed_scale;
  c.seed = seed;
  return init_params(c);
}

std::vector<int> random_ids(Rng& rng, int vocab_size, int min_len, int max_len) {
  const auto len = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
  std::vector<int> ids(static_cast<std::size_t>(len));
  for (auto& id : ids) id = kNumReserved + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size - kNumReserved)));
  return ids;
}

TokenizedSample sample_from_ids(const std::string& id, std::vector<int> ids, int label) {
  TokenizedSample s;
  s.sample_id = id;
  for (int t : ids) s.tokens.push_back("w" + std::to_string(t));
  s.token_ids = std::move(ids);
  s.label = label;
  return s;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

double classifier_gradient_error(const ClassifierParams& params, const TokenizedSample& sample, double step) {
  const Activations acts = forward_trace(params, sample.token_ids);
  Eigen::VectorXd d_logits = acts.output.probs;
  d_logits[sample.label] -= 1.0;
  SampleGrads sg = SampleGrads::zeros(params);
  backward(params, acts, d_logits, nullptr, 1.0, sg);
  BackboneGrads g = BackboneGrads::zeros(params);
  g.accumulate(sg);
  const Eigen::MatrixXd b1 = g.b1, b2 = g.b2;
  const Eigen::VectorXd analytic = flatten({&g.embedding, &g.w1, &b1, &g.w2, &b2});

  ClassifierParams p = params;
  const auto numeric = numeric_gradient(
      backbone_slots(p), [&] { return cross_entropy(forward(p, sample.token_ids), sample.label); }, step);
  return relative_error(analytic, numeric);
}

double projection_gradient_error(const ProjectionParams& params, const Eigen::VectorXd& h, const Eigen::VectorXd& c,
                                 double step) {
  ProjectionGrads g{Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols()), Eigen::VectorXd::Zero(params.b1.size()),
                    Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols()), Eigen::VectorXd::Zero(params.b2.size())};
  const Eigen::MatrixXd dh = project_backward(params, project_trace(params, h), c, g);
  const Eigen::MatrixXd b1 = g.b1, b2 = g.b2;
  const Eigen::VectorXd analytic = flatten({&g.w1, &b1, &g.w2, &b2, &dh});

  ProjectionParams p = params;
  Eigen::VectorXd x = h;
  const std::vector<Slot> slots{{p.w1.data(), p.w1.size()}, {p.b1.data(), p.b1.size()}, {p.w2.data(), p.w2.size()},
                                {p.b2.data(), p.b2.size()}, {x.data(), x.size()}};
  const auto numeric = numeric_gradient(slots, [&] { return c.dot(project(p, x)); }, step);
  return relative_error(analytic, numeric);
}

double objective_gradient_error(const ClassifierParams& params, const ContrastiveHead& head,
                                std::span<const TokenizedSample> batch, std::span<const AugmentedSet* const> augs,
                                const AcwgConfig& config, double step) {
  ObjectiveGrads g{BackboneGrads::zeros(params), HeadGrads::zeros(head)};
  acwg_objective(params, head, batch, augs, config, &g, Exec::serial);
  const auto& bb = g.backbone;
  const auto& hp = g.head.projection;
  const Eigen::MatrixXd b1 = bb.b1, b2 = bb.b2, pb1 = hp.b1, pb2 = hp.b2, vb = g.head.voting_bias;
  const Eigen::VectorXd analytic =
      flatten({&bb.embedding, &bb.w1, &b1, &bb.w2, &b2, &hp.w1, &pb1, &hp.w2, &pb2, &g.head.voting_weight, &vb});

  ClassifierParams p = params;
  ContrastiveHead h = head;
  std::vector<Slot> slots = backbone_slots(p);
  for (Slot s : std::initializer_list<Slot>{{h.projection.w1.data(), h.projection.w1.size()},
                                            {h.projection.b1.data(), h.projection.b1.size()},
                                            {h.projection.w2.data(), h.projection.w2.size()},
                                            {h.projection.b2.data(), h.projection.b2.size()},
                                            {h.voting.weight.data(), h.voting.weight.size()},
                                            {h.voting.bias.data(), h.voting.bias.size()}}) {
    slots.push_back(s);
  }
  const auto numeric = numeric_gradient(
      slots, [&] { return acwg_objective(p, h, batch, augs, config, nullptr, Exec::serial).total; }, step);
  return relative_error(analytic, numeric);
}

RandomBatch random_batch(Rng& rng, int vocab_size, int size, int l) {
  RandomBatch b;
  for (int i = 0; i < size; ++i) {
    const auto ids = random_ids(rng, vocab_size, 3, 7);
    b.samples.push_back(sample_from_ids("s" + std::to_string(i), ids, static_cast<int>(rng.below(2))));
  }
  b.sets.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    const auto& s = b.samples[static_cast<std::size_t>(i)];
    // Roughly one in four samples gets no tuple.
    if (rng.below(4) == 0) continue;
    AugmentedSet a;
    a.anchor = s;
    a.positive = s;
    a.positive.token_ids[rng.below(s.size())] = kMaskId;
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(l)));
    for (int n = 0; n < k; ++n) {
      TokenizedSample neg = s;
      for (auto& id : neg.token_ids) {
        if (rng.bernoulli(0.5)) id = kNumReserved + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size - kNumReserved)));
      }
      a.negatives.push_back(std::move(neg));
      a.groups.push_back(WordGroup{{"w" + std::to_string(n)}, 1.0 / (n + 1)});
    }
    b.sets.push_back(std::move(a));
  }
  std::size_t next = 0;
  for (const auto& s : b.samples) {
    if (next < b.sets.size() && b.sets[next].anchor.sample_id == s.sample_id) {
      b.augs.push_back(&b.sets[next++]);
    } else {
      b.augs.push_back(nullptr);
    }
  }
  return b;
}

std::filesystem::path temp_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("acwg-test-" + name + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace acwg::testing
