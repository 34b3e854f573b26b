#include "acwg/trainer.hpp"

#include "acwg/archive.hpp"
#include "acwg/json_io.hpp"
#include "acwg/rng.hpp"
#include "parallel.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <unordered_map>

namespace acwg {

namespace {

void uniform_fill(Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  m.resize(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = bound * (2.0 * rng.uniform() - 1.0);
  }
}

// d cos(a, b) / d a
Eigen::VectorXd cosine_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double cos_ab) {
  const double na = a.norm(), nb = b.norm();
  return b / (na * nb) - (cos_ab / (na * na)) * a;
}

struct Vote {
  Eigen::VectorXd stacked;  // [z_1; ...; z_l] after padding
  Eigen::VectorXd alpha;    // length l, padded entries are 0
};

Vote vote(std::span<const Eigen::VectorXd> zs, const VotingParams& params) {
  const Eigen::Index l = params.bias.size();
  if (zs.empty()) throw ContractError("voting needs at least one negative");
  if (static_cast<Eigen::Index>(zs.size()) > l) {
    throw ContractError("voting got " + std::to_string(zs.size()) + " negatives for " + std::to_string(l) +
                        " slots");
  }
  const Eigen::Index dz = zs.front().size();
  if (params.weight.rows() != dz * l || params.weight.cols() != l) {
    throw ContractError("voting weight shape does not match (d_z * l) x l");
  }
  Vote v;
  v.stacked.resize(dz * l);
  for (Eigen::Index j = 0; j < l; ++j) {
    const auto& z = zs[std::min<std::size_t>(static_cast<std::size_t>(j), zs.size() - 1)];
    if (z.size() != dz) throw ContractError("negatives have inconsistent projection sizes");
    v.stacked.segment(j * dz, dz) = z;
  }
  Eigen::VectorXd logits = params.weight.transpose() * v.stacked + params.bias;
  const auto k = static_cast<Eigen::Index>(zs.size());
  const double mx = logits.head(k).maxCoeff();
  v.alpha = Eigen::VectorXd::Zero(l);
  for (Eigen::Index j = 0; j < k; ++j) v.alpha[j] = std::exp(logits[j] - mx);
  v.alpha /= v.alpha.sum();
  return v;
}

void check_norm(const Eigen::VectorXd& v, const char* what) {
  if (!(v.norm() > 0.0)) throw ContractError(std::string("cosine similarity with a zero-norm ") + what);
}

struct TupleLoss {
  double value = 0.0;
  Eigen::VectorXd alpha;
};

// One contrastive tuple: forward, and when `g` is set, backward with the
// given scale into the sample's backbone and head gradients.
TupleLoss tuple_loss(const ClassifierParams& params, const ContrastiveHead& head, const Activations& anchor_acts,
                     const AugmentedSet& aug, const AcwgConfig& config, double scale, SampleGrads* g,
                     HeadGrads* hg) {
  const int l = head.config.num_groups;
  const std::size_t k = aug.negatives.size();
  if (k == 0) throw ContractError("augmented set of " + aug.anchor.sample_id + " has no negatives");
  if (k > static_cast<std::size_t>(l)) {
    throw ContractError("augmented set of " + aug.anchor.sample_id + " has more negatives than the head's l");
  }
  const Activations pos_acts = forward_trace(params, aug.positive.token_ids);
  std::vector<Activations> neg_acts;
  neg_acts.reserve(k);
  for (const auto& n : aug.negatives) neg_acts.push_back(forward_trace(params, n.token_ids));

  const ProjectionTrace pa = project_trace(head.projection, anchor_acts.hidden);
  const ProjectionTrace pp = project_trace(head.projection, pos_acts.hidden);
  std::vector<ProjectionTrace> pn;
  std::vector<Eigen::VectorXd> zn;
  for (const auto& a : neg_acts) {
    pn.push_back(project_trace(head.projection, a.hidden));
    zn.push_back(pn.back().z);
  }

  std::optional<Vote> v;
  Eigen::VectorXd alpha;
  if (config.ablation == Ablation::wo_voting) {
    alpha = Eigen::VectorXd::Zero(l);
    alpha[0] = 1.0;
  } else {
    v = vote(zn, head.voting);
    alpha = v->alpha;
  }

  check_norm(pa.z, "anchor projection");
  check_norm(pp.z, "positive projection");
  for (const auto& z : zn) check_norm(z, "negative projection");
  const double s_pos = config.loss_form == LossForm::canonical ? -1.0 : 1.0;
  const double s_neg = -s_pos;
  const double cos_pos = cosine(pa.z, pp.z);
  Eigen::VectorXd cos_neg(static_cast<Eigen::Index>(k));
  double weighted = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    cos_neg[static_cast<Eigen::Index>(i)] = cosine(pa.z, zn[i]);
    weighted += alpha[static_cast<Eigen::Index>(i)] * cos_neg[static_cast<Eigen::Index>(i)];
  }
  const double pre = config.margin + s_pos * cos_pos + s_neg * weighted;
  TupleLoss out{std::max(0.0, pre), alpha};
  if (!g || !(pre > 0.0)) return out;

  Eigen::VectorXd dz = scale * s_pos * cosine_grad(pa.z, pp.z, cos_pos);
  const Eigen::VectorXd dz_pos = scale * s_pos * cosine_grad(pp.z, pa.z, cos_pos);
  std::vector<Eigen::VectorXd> dz_neg(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double w = scale * s_neg * alpha[ii];
    dz += w * cosine_grad(pa.z, zn[i], cos_neg[ii]);
    dz_neg[i] = w * cosine_grad(zn[i], pa.z, cos_neg[ii]);
  }
  if (v) {
    const Eigen::Index dzs = pa.z.size();
    Eigen::VectorXd d_alpha = Eigen::VectorXd::Zero(l);
    for (std::size_t i = 0; i < k; ++i) d_alpha[static_cast<Eigen::Index>(i)] = scale * s_neg * cos_neg[static_cast<Eigen::Index>(i)];
    const Eigen::VectorXd d_logits = (alpha.array() * (d_alpha.array() - alpha.dot(d_alpha))).matrix();
    hg->voting_weight.noalias() += v->stacked * d_logits.transpose();
    hg->voting_bias += d_logits;
    const Eigen::VectorXd d_stacked = head.voting.weight * d_logits;
    for (int j = 0; j < l; ++j) {
      dz_neg[std::min<std::size_t>(static_cast<std::size_t>(j), k - 1)] += d_stacked.segment(j * dzs, dzs);
    }
  }

  const Eigen::VectorXd zero_logits = Eigen::VectorXd::Zero(params.b2.size());
  const Eigen::VectorXd dh = project_backward(head.projection, pa, dz, hg->projection);
  backward(params, anchor_acts, zero_logits, &dh, 1.0, *g);
  const Eigen::VectorXd dh_pos = project_backward(head.projection, pp, dz_pos, hg->projection);
  backward(params, pos_acts, zero_logits, &dh_pos, 1.0, *g);
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::VectorXd dh_neg = project_backward(head.projection, pn[i], dz_neg[i], hg->projection);
    backward(params, neg_acts[i], zero_logits, &dh_neg, 1.0, *g);
  }
  return out;
}

void add(HeadGrads& into, const HeadGrads& g) {
  into.projection.w1 += g.projection.w1;
  into.projection.b1 += g.projection.b1;
  into.projection.w2 += g.projection.w2;
  into.projection.b2 += g.projection.b2;
  into.voting_weight += g.voting_weight;
  into.voting_bias += g.voting_bias;
}

class HeadOptimizer {
 public:
  HeadOptimizer(const ContrastiveHead& head, const TrainOptions& options) : adam_(options) {
    adam_.add_slot(head.projection.w1.size());
    adam_.add_slot(head.projection.b1.size());
    adam_.add_slot(head.projection.w2.size());
    adam_.add_slot(head.projection.b2.size());
    adam_.add_slot(head.voting.weight.size());
    adam_.add_slot(head.voting.bias.size());
  }

  void step(ContrastiveHead& head, const HeadGrads& g) {
    adam_.begin_step();
    adam_.update(0, head.projection.w1.data(), g.projection.w1.data());
    adam_.update(1, head.projection.b1.data(), g.projection.b1.data());
    adam_.update(2, head.projection.w2.data(), g.projection.w2.data());
    adam_.update(3, head.projection.b2.data(), g.projection.b2.data());
    adam_.update(4, head.voting.weight.data(), g.voting_weight.data());
    adam_.update(5, head.voting.bias.data(), g.voting_bias.data());
  }

 private:
  Adam adam_;
};

bool head_finite(const ContrastiveHead& h) {
  return h.projection.w1.allFinite() && h.projection.b1.allFinite() && h.projection.w2.allFinite() &&
         h.projection.b2.allFinite() && h.voting.weight.allFinite() && h.voting.bias.allFinite();
}

}  // namespace

void HeadConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1 || num_groups < 1) {
    throw ContractError("head dimensions and group count must be >= 1");
  }
}

bool ContrastiveHead::operator==(const ContrastiveHead& o) const {
  return config == o.config && projection.w1 == o.projection.w1 && projection.b1 == o.projection.b1 &&
         projection.w2 == o.projection.w2 && projection.b2 == o.projection.b2 && voting.weight == o.voting.weight &&
         voting.bias == o.voting.bias;
}

ContrastiveHead init_head(const HeadConfig& config) {
  config.validate();
  Rng rng(config.seed);
  ContrastiveHead h;
  h.config = config;
  uniform_fill(h.projection.w1, config.hidden_dim, config.input_dim, 1.0 / std::sqrt(double(config.input_dim)), rng);
  h.projection.b1 = Eigen::VectorXd::Zero(config.hidden_dim);
  uniform_fill(h.projection.w2, config.output_dim, config.hidden_dim, 1.0 / std::sqrt(double(config.hidden_dim)),
               rng);
  h.projection.b2 = Eigen::VectorXd::Zero(config.output_dim);
  const int stacked = config.output_dim * config.num_groups;
  uniform_fill(h.voting.weight, stacked, config.num_groups, 1.0 / std::sqrt(double(stacked)), rng);
  h.voting.bias = Eigen::VectorXd::Zero(config.num_groups);
  return h;
}

void save_head(const ContrastiveHead& head, const std::filesystem::path& path) {
  TensorArchive a;
  a.meta = {{"kind", "contrastive_head"}, {"config", to_json(head.config)}};
  a.tensors = {{"proj_w1", head.projection.w1}, {"proj_b1", head.projection.b1}, {"proj_w2", head.projection.w2},
               {"proj_b2", head.projection.b2}, {"vote_w", head.voting.weight},   {"vote_b", head.voting.bias}};
  write_archive(path, a);
}

ContrastiveHead load_head(const std::filesystem::path& path) {
  const TensorArchive a = read_archive(path);
  if (a.meta.value("kind", "") != "contrastive_head") {
    throw DataError(path.string() + ": not a contrastive head checkpoint");
  }
  ContrastiveHead h;
  try {
    h.config = head_config_from_json(a.meta.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad head config: " + e.what());
  }
  h.projection.w1 = a.at("proj_w1");
  h.projection.b1 = a.at("proj_b1");
  h.projection.w2 = a.at("proj_w2");
  h.projection.b2 = a.at("proj_b2");
  h.voting.weight = a.at("vote_w");
  h.voting.bias = a.at("vote_b");
  const auto& c = h.config;
  if (h.projection.w1.rows() != c.hidden_dim || h.projection.w1.cols() != c.input_dim ||
      h.projection.b1.size() != c.hidden_dim || h.projection.w2.rows() != c.output_dim ||
      h.projection.w2.cols() != c.hidden_dim || h.projection.b2.size() != c.output_dim ||
      h.voting.weight.rows() != c.output_dim * c.num_groups || h.voting.weight.cols() != c.num_groups ||
      h.voting.bias.size() != c.num_groups) {
    throw DataError(path.string() + ": tensor shapes do not match the stored head config");
  }
  return h;
}

ProjectionTrace project_trace(const ProjectionParams& p, const Eigen::VectorXd& h) {
  if (h.size() != p.w1.cols()) throw ContractError("projection input has the wrong size");
  ProjectionTrace t;
  t.input = h;
  t.hidden = (p.w1 * h + p.b1).array().tanh().matrix();
  t.z = p.w2 * t.hidden + p.b2;
  return t;
}

Eigen::VectorXd project(const ProjectionParams& p, const Eigen::VectorXd& h) { return project_trace(p, h).z; }

Eigen::VectorXd project_backward(const ProjectionParams& p, const ProjectionTrace& t, const Eigen::VectorXd& dz,
                                 ProjectionGrads& out) {
  out.w2.noalias() += dz * t.hidden.transpose();
  out.b2 += dz;
  Eigen::VectorXd da = p.w2.transpose() * dz;
  da.array() *= 1.0 - t.hidden.array().square();
  out.w1.noalias() += da * t.input.transpose();
  out.b1 += da;
  return p.w1.transpose() * da;
}

Eigen::VectorXd voting_weights(std::span<const Eigen::VectorXd> z_negatives, const VotingParams& params) {
  return vote(z_negatives, params).alpha;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ContractError("cosine of vectors with different sizes");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw ContractError("cosine similarity with a zero-norm vector");
  return a.dot(b) / (na * nb);
}

double contrastive_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& z_pos,
                        std::span<const Eigen::VectorXd> z_negs, const Eigen::VectorXd& alpha, double margin,
                        LossForm form) {
  if (z_negs.empty()) throw ContractError("contrastive loss needs at least one negative");
  if (alpha.size() < static_cast<Eigen::Index>(z_negs.size())) {
    throw ContractError("contrastive loss needs one weight per negative");
  }
  double weighted = 0.0;
  for (std::size_t i = 0; i < z_negs.size(); ++i) weighted += alpha[static_cast<Eigen::Index>(i)] * cosine(z, z_negs[i]);
  const double pos = cosine(z, z_pos);
  const double pre = form == LossForm::canonical ? margin - pos + weighted : margin + pos - weighted;
  return std::max(0.0, pre);
}

double total_loss(double ce, double cl, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("lambda must be >= 0");
  return ce + lambda * cl;
}

void AcwgConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("lambda must be a finite value >= 0");
  if (!std::isfinite(margin)) throw ContractError("margin must be finite");
  if (train.batch_size < 1 || train.epochs < 0 || !(train.learning_rate > 0.0)) {
    throw ContractError("invalid training options");
  }
}

HeadGrads HeadGrads::zeros(const ContrastiveHead& h) {
  HeadGrads g;
  g.projection.w1 = Eigen::MatrixXd::Zero(h.projection.w1.rows(), h.projection.w1.cols());
  g.projection.b1 = Eigen::VectorXd::Zero(h.projection.b1.size());
  g.projection.w2 = Eigen::MatrixXd::Zero(h.projection.w2.rows(), h.projection.w2.cols());
  g.projection.b2 = Eigen::VectorXd::Zero(h.projection.b2.size());
  g.voting_weight = Eigen::MatrixXd::Zero(h.voting.weight.rows(), h.voting.weight.cols());
  g.voting_bias = Eigen::VectorXd::Zero(h.voting.bias.size());
  return g;
}

LossBreakdown acwg_objective(const ClassifierParams& params, const ContrastiveHead& head,
                             std::span<const TokenizedSample> batch, std::span<const AugmentedSet* const> augs,
                             const AcwgConfig& config, ObjectiveGrads* grads, Exec exec) {
  config.validate();
  if (batch.empty()) throw ContractError("objective on an empty batch");
  if (augs.size() != batch.size()) throw ContractError("one augmented-set slot per batch sample is required");
  if (head.config.input_dim != params.config.hidden_dim) {
    throw ContractError("head input_dim does not match the classifier hidden_dim");
  }
  const std::size_t bs = batch.size();
  std::size_t n_cl = 0;
  for (const auto* a : augs) n_cl += a != nullptr;
  const bool contrastive = config.lambda > 0.0;
  const double ce_scale = 1.0 / static_cast<double>(bs);
  const double cl_scale = n_cl ? config.lambda / static_cast<double>(n_cl) : 0.0;

  std::vector<double> ce(bs), cl(bs, 0.0);
  std::vector<char> hits(bs);
  std::vector<Eigen::VectorXd> alphas(bs);
  std::vector<SampleGrads> sg(grads ? bs : 0);
  std::vector<std::optional<HeadGrads>> hg(grads ? bs : 0);
  detail::parallel_for(bs, exec, [&](std::size_t k) {
    const TokenizedSample& s = batch[k];
    const Activations acts = forward_trace(params, s.token_ids);
    ce[k] = cross_entropy(acts.output, s.label);
    hits[k] = acts.output.predicted() == s.label;
    if (grads) {
      Eigen::VectorXd d_logits = acts.output.probs;
      d_logits[s.label] -= 1.0;
      sg[k] = SampleGrads::zeros(params);
      backward(params, acts, d_logits, nullptr, ce_scale, sg[k]);
    }
    if (!augs[k]) return;
    if (augs[k]->anchor.sample_id != s.sample_id) {
      throw ContractError("augmented set " + augs[k]->anchor.sample_id + " paired with sample " + s.sample_id);
    }
    const bool backprop = grads && contrastive;
    if (backprop) hg[k] = HeadGrads::zeros(head);
    TupleLoss t = tuple_loss(params, head, acts, *augs[k], config, cl_scale, backprop ? &sg[k] : nullptr,
                             backprop ? &*hg[k] : nullptr);
    cl[k] = t.value;
    alphas[k] = std::move(t.alpha);
  });

  LossBreakdown out;
  out.contrastive_samples = n_cl;
  for (std::size_t k = 0; k < bs; ++k) {
    out.ce += ce[k];
    out.correct += static_cast<std::size_t>(hits[k]);
    if (augs[k]) {
      out.cl += cl[k];
      out.alphas.push_back(std::move(alphas[k]));
    }
  }
  out.ce /= static_cast<double>(bs);
  if (n_cl) out.cl /= static_cast<double>(n_cl);
  out.total = total_loss(out.ce, out.cl, config.lambda);

  if (grads) {
    grads->backbone = BackboneGrads::zeros(params);
    grads->head = HeadGrads::zeros(head);
    for (std::size_t k = 0; k < bs; ++k) {
      grads->backbone.accumulate(sg[k]);
      if (hg[k]) add(grads->head, *hg[k]);
    }
  }
  return out;
}

AcwgResult train_acwg(ClassifierParams params, ContrastiveHead head, std::span<const TokenizedSample> train,
                      std::span<const AugmentedSet> augs, const AcwgConfig& config, Exec exec,
                      const AugmentRefresher& refresh) {
  config.validate();
  const TrainOptions& options = config.train;
  if (train.empty()) throw ContractError("train_acwg needs a non-empty training set");

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < train.size(); ++i) index.emplace(train[i].sample_id, i);
  std::vector<AugmentedSet> owned;
  std::vector<const AugmentedSet*> slot(train.size(), nullptr);
  auto bind = [&](std::span<const AugmentedSet> sets) {
    std::fill(slot.begin(), slot.end(), nullptr);
    for (const auto& a : sets) {
      const auto it = index.find(a.anchor.sample_id);
      if (it == index.end()) {
        throw ContractError("augmented set " + a.anchor.sample_id + " has no matching training sample");
      }
      slot[it->second] = &a;
    }
  };
  bind(augs);

  AcwgResult result;
  BackboneOptimizer optimizer(params, options);
  HeadOptimizer head_optimizer(head, options);
  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(options.batch_size);
  const auto l = static_cast<Eigen::Index>(head.config.num_groups);
  long step = 0;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (refresh && epoch > 0) {
      owned = refresh(params, epoch);
      bind(owned);
    }
    const auto order = epoch_order(n, options.seed, epoch);
    double ce_sum = 0.0, cl_sum = 0.0;
    std::size_t cl_count = 0, correct = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t bs = std::min(batch, n - start);
      std::vector<TokenizedSample> samples;
      std::vector<const AugmentedSet*> batch_augs;
      samples.reserve(bs);
      for (std::size_t k = 0; k < bs; ++k) {
        samples.push_back(train[order[start + k]]);
        batch_augs.push_back(slot[order[start + k]]);
      }
      ObjectiveGrads grads;
      const LossBreakdown loss = acwg_objective(params, head, samples, batch_augs, config, &grads, exec);
      if (!std::isfinite(loss.total)) {
        throw NumericError("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      correct += loss.correct;
      ce_sum += loss.ce * static_cast<double>(bs);
      cl_sum += loss.cl * static_cast<double>(loss.contrastive_samples);
      cl_count += loss.contrastive_samples;

      optimizer.step(params, grads.backbone);
      head_optimizer.step(head, grads.head);
      ++step;
      BatchLog log{step, loss.ce, loss.cl, loss.total, {}};
      if (!loss.alphas.empty()) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(l);
        for (const auto& a : loss.alphas) mean += a;
        mean /= static_cast<double>(loss.alphas.size());
        log.mean_alpha.assign(mean.data(), mean.data() + mean.size());
      }
      result.trace.batches.push_back(std::move(log));
    }
    const double mean_ce = ce_sum / static_cast<double>(n);
    const double mean_cl = cl_count ? cl_sum / static_cast<double>(cl_count) : 0.0;
    result.trace.epochs.push_back(EpochStats{epoch, mean_ce, mean_cl, mean_ce + config.lambda * mean_cl,
                                             static_cast<double>(correct) / static_cast<double>(n)});
  }
  if (!params.all_finite() || !head_finite(head)) throw NumericError("parameters diverged during ACWG training");
  result.params = std::move(params);
  result.head = std::move(head);
  return result;
}

}  // namespace acwg
