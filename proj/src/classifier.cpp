#include "acwg/classifier.hpp"

#include "acwg/archive.hpp"
#include "acwg/json_io.hpp"
#include "acwg/rng.hpp"
#include "parallel.hpp"

#include <cmath>
#include <numeric>

namespace acwg {

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

void check_ids(const ClassifierParams& params, std::span<const int> token_ids) {
  if (token_ids.empty()) throw ContractError("forward on an empty token sequence");
  const auto vocab = params.embedding.rows();
  for (int id : token_ids) {
    if (id < 0 || id >= vocab) throw ContractError("token id " + std::to_string(id) + " out of range");
  }
}

Activations trace_impl(const ClassifierParams& params, std::span<const int> token_ids,
                       const Eigen::MatrixXd* inputs) {
  check_ids(params, token_ids);
  const auto d = params.embedding.cols();
  if (inputs && (inputs->rows() != static_cast<Eigen::Index>(token_ids.size()) || inputs->cols() != d)) {
    throw ContractError("embedding override has the wrong shape");
  }
  Activations a;
  a.token_ids.assign(token_ids.begin(), token_ids.end());
  a.pooled = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] == kPadId) continue;
    ++a.valid;
    if (inputs) {
      a.pooled += inputs->row(static_cast<Eigen::Index>(i)).transpose();
    } else {
      a.pooled += params.embedding.row(token_ids[i]).transpose();
    }
  }
  if (a.valid == 0) throw ContractError("forward on a sequence made only of pad tokens");
  a.pooled /= static_cast<double>(a.valid);

  Eigen::VectorXd pre = params.w1 * a.pooled + params.b1;
  a.hidden = params.config.activation == Activation::tanh ? Eigen::VectorXd(pre.array().tanh().matrix()) : pre;
  a.output.logits = params.w2 * a.hidden + params.b2;
  a.output.probs = softmax(a.output.logits);
  a.output.representation = a.hidden;
  return a;
}

// d selector / d pooled.
Eigen::VectorXd pooled_gradient(const ClassifierParams& params, const Activations& acts,
                                const Eigen::VectorXd& d_logits) {
  Eigen::VectorXd dh = params.w2.transpose() * d_logits;
  if (params.config.activation == Activation::tanh) {
    dh.array() *= 1.0 - acts.hidden.array().square();
  }
  return params.w1.transpose() * dh;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= kNumReserved) throw ContractError("vocab_size must exceed the reserved token count");
  if (embed_dim < 1 || hidden_dim < 1) throw ContractError("model dimensions must be >= 1");
  if (num_classes != 2) throw ContractError("only binary classification (num_classes == 2) is supported");
  if (!(embed_init_scale > 0.0) || !std::isfinite(embed_init_scale)) {
    throw ContractError("embed_init_scale must be positive");
  }
  if (train.batch_size < 1 || train.epochs < 0 || !(train.learning_rate > 0.0)) {
    throw ContractError("invalid training options");
  }
}

bool ClassifierParams::operator==(const ClassifierParams& o) const {
  return config == o.config && embedding == o.embedding && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 &&
         b2 == o.b2;
}

bool ClassifierParams::all_finite() const {
  return embedding.allFinite() && w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

int PredictionOutput::predicted() const {
  Eigen::Index idx = 0;
  probs.maxCoeff(&idx);  // first maximum on ties
  return static_cast<int>(idx);
}

double OutputSelector::value(const PredictionOutput& out) const {
  switch (kind) {
    case Kind::predicted_probability:
      return out.probs[out.predicted()];
    case Kind::class_probability:
      return out.probs[cls];
    case Kind::class_logit:
      return out.logits[cls];
    case Kind::logit_margin:
      return out.logits[cls] - out.logits[1 - cls];
    case Kind::constant:
      return 0.0;
  }
  return 0.0;
}

Eigen::VectorXd OutputSelector::grad_logits(const PredictionOutput& out) const {
  const auto n = out.logits.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  auto prob_grad = [&](int c) {
    // d p_c / d o = p_c (e_c - p)
    g = -out.probs[c] * out.probs;
    g[c] += out.probs[c];
  };
  switch (kind) {
    case Kind::predicted_probability:
      prob_grad(out.predicted());
      break;
    case Kind::class_probability:
      prob_grad(cls);
      break;
    case Kind::class_logit:
      g[cls] = 1.0;
      break;
    case Kind::logit_margin:
      g[cls] = 1.0;
      g[1 - cls] = -1.0;
      break;
    case Kind::constant:
      break;
  }
  return g;
}

ClassifierParams init_params(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  ClassifierParams p;
  p.config = config;
  const int v = config.vocab_size, d = config.embed_dim, hd = config.hidden_dim, c = config.num_classes;
  p.embedding.resize(v, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < v; ++i) p.embedding(i, j) = config.embed_init_scale * rng.normal();
  }
  p.embedding.row(kPadId).setZero();
  auto uniform_fill = [&](Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, double bound) {
    m.resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    }
  };
  Eigen::MatrixXd w1, w2;
  uniform_fill(w1, hd, d, 1.0 / std::sqrt(static_cast<double>(d)));
  uniform_fill(w2, c, hd, 1.0 / std::sqrt(static_cast<double>(hd)));
  p.w1 = std::move(w1);
  p.w2 = std::move(w2);
  p.b1 = Eigen::VectorXd::Zero(hd);
  p.b2 = Eigen::VectorXd::Zero(c);
  return p;
}

Activations forward_trace(const ClassifierParams& params, std::span<const int> token_ids) {
  return trace_impl(params, token_ids, nullptr);
}

Activations forward_trace(const ClassifierParams& params, std::span<const int> token_ids,
                          const Eigen::MatrixXd& inputs) {
  return trace_impl(params, token_ids, &inputs);
}

PredictionOutput forward(const ClassifierParams& params, std::span<const int> token_ids) {
  return trace_impl(params, token_ids, nullptr).output;
}

PredictionOutput forward(const ClassifierParams& params, std::span<const int> token_ids,
                         const Eigen::MatrixXd& inputs) {
  return trace_impl(params, token_ids, &inputs).output;
}

Eigen::MatrixXd lookup_embeddings(const ClassifierParams& params, std::span<const int> token_ids) {
  check_ids(params, token_ids);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(token_ids.size()), params.embedding.cols());
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = params.embedding.row(token_ids[i]);
  }
  return x;
}

Eigen::MatrixXd grad_wrt_embeddings(const ClassifierParams& params, std::span<const int> token_ids,
                                    const Eigen::MatrixXd& inputs, const OutputSelector& selector) {
  const Activations acts = trace_impl(params, token_ids, &inputs);
  const Eigen::VectorXd du = pooled_gradient(params, acts, selector.grad_logits(acts.output));
  const Eigen::RowVectorXd row = (du / static_cast<double>(acts.valid)).transpose();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(inputs.rows(), inputs.cols());
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] != kPadId) g.row(static_cast<Eigen::Index>(i)) = row;
  }
  if (!g.allFinite()) throw NumericError("non-finite gradient with respect to embeddings");
  return g;
}

std::vector<PredictionOutput> predict_batch(const ClassifierParams& params,
                                            std::span<const TokenizedSample> samples, Exec exec) {
  std::vector<PredictionOutput> out(samples.size());
  detail::parallel_for(samples.size(), exec, [&](std::size_t i) { out[i] = forward(params, samples[i].token_ids); });
  return out;
}

void save_params(const ClassifierParams& params, const std::filesystem::path& path) {
  TensorArchive a;
  a.meta = {{"kind", "classifier"}, {"config", to_json(params.config)}};
  a.tensors = {{"embedding", params.embedding}, {"w1", params.w1}, {"b1", params.b1},
               {"w2", params.w2}, {"b2", params.b2}};
  write_archive(path, a);
}

ClassifierParams load_params(const std::filesystem::path& path) {
  const TensorArchive a = read_archive(path);
  if (a.meta.value("kind", "") != "classifier") throw DataError(path.string() + ": not a classifier checkpoint");
  ClassifierParams p;
  try {
    p.config = model_config_from_json(a.meta.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad classifier config: " + e.what());
  }
  p.embedding = a.at("embedding");
  p.w1 = a.at("w1");
  p.b1 = a.at("b1");
  p.w2 = a.at("w2");
  p.b2 = a.at("b2");
  const auto& c = p.config;
  if (p.embedding.rows() != c.vocab_size || p.embedding.cols() != c.embed_dim || p.w1.rows() != c.hidden_dim ||
      p.w1.cols() != c.embed_dim || p.b1.size() != c.hidden_dim || p.w2.rows() != c.num_classes ||
      p.w2.cols() != c.hidden_dim || p.b2.size() != c.num_classes) {
    throw DataError(path.string() + ": tensor shapes do not match the stored config");
  }
  return p;
}

// ---------------------------------------------------------------------------

SampleGrads SampleGrads::zeros(const ClassifierParams& p) {
  return SampleGrads{Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols()), Eigen::VectorXd::Zero(p.b1.size()),
                     Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols()), Eigen::VectorXd::Zero(p.b2.size()), {}};
}

BackboneGrads BackboneGrads::zeros(const ClassifierParams& p) {
  return BackboneGrads{Eigen::MatrixXd::Zero(p.embedding.rows(), p.embedding.cols()),
                       Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols()), Eigen::VectorXd::Zero(p.b1.size()),
                       Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols()), Eigen::VectorXd::Zero(p.b2.size())};
}

void BackboneGrads::accumulate(const SampleGrads& g) {
  w1 += g.w1;
  b1 += g.b1;
  w2 += g.w2;
  b2 += g.b2;
  for (const auto& rows : g.embedding) {
    for (int id : rows.ids) embedding.row(id) += rows.row.transpose();
  }
}

Eigen::VectorXd backward(const ClassifierParams& params, const Activations& acts, const Eigen::VectorXd& d_logits,
                         const Eigen::VectorXd* d_hidden, double scale, SampleGrads& out) {
  const Eigen::VectorXd dl = scale * d_logits;
  out.w2.noalias() += dl * acts.hidden.transpose();
  out.b2 += dl;
  Eigen::VectorXd dh = params.w2.transpose() * dl;
  if (d_hidden) dh += scale * *d_hidden;
  if (params.config.activation == Activation::tanh) dh.array() *= 1.0 - acts.hidden.array().square();
  out.w1.noalias() += dh * acts.pooled.transpose();
  out.b1 += dh;
  Eigen::VectorXd du = params.w1.transpose() * dh;
  SampleGrads::EmbeddingRows rows;
  for (int id : acts.token_ids) {
    if (id != kPadId) rows.ids.push_back(id);
  }
  rows.row = du / static_cast<double>(acts.valid);
  out.embedding.push_back(std::move(rows));
  return du;
}

double cross_entropy(const PredictionOutput& out, int label) {
  // log-sum-exp form avoids log(0) for saturated probabilities
  const double mx = out.logits.maxCoeff();
  const double lse = mx + std::log((out.logits.array() - mx).exp().sum());
  return lse - out.logits[label];
}

void Adam::add_slot(Eigen::Index size) {
  m_.push_back(Eigen::ArrayXd::Zero(size));
  v_.push_back(Eigen::ArrayXd::Zero(size));
}

void Adam::update(std::size_t slot, double* param, const double* grad) {
  auto& m = m_.at(slot);
  auto& v = v_.at(slot);
  Eigen::Map<Eigen::ArrayXd> p(param, m.size());
  Eigen::Map<const Eigen::ArrayXd> g(grad, m.size());
  const auto& o = options_;
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g.square();
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t_));
  p -= o.learning_rate * (m / c1) / ((v / c2).sqrt() + o.epsilon);
}

BackboneOptimizer::BackboneOptimizer(const ClassifierParams& params, const TrainOptions& options) : adam_(options) {
  adam_.add_slot(params.embedding.size());
  adam_.add_slot(params.w1.size());
  adam_.add_slot(params.b1.size());
  adam_.add_slot(params.w2.size());
  adam_.add_slot(params.b2.size());
}

void BackboneOptimizer::step(ClassifierParams& params, const BackboneGrads& g) {
  adam_.begin_step();
  adam_.update(0, params.embedding.data(), g.embedding.data());
  adam_.update(1, params.w1.data(), g.w1.data());
  adam_.update(2, params.b1.data(), g.b1.data());
  adam_.update(3, params.w2.data(), g.w2.data());
  adam_.update(4, params.b2.data(), g.b2.data());
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "epoch-" + std::to_string(epoch)));
  rng.shuffle(order);
  return order;
}

ErmResult train_erm(ClassifierParams params, std::span<const TokenizedSample> train, const TrainOptions& options,
                    Exec exec) {
  if (train.empty()) throw ContractError("train_erm needs a non-empty training set");
  if (options.batch_size < 1 || options.epochs < 0) throw ContractError("invalid training options");
  ErmResult result;
  BackboneOptimizer optimizer(params, options);
  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(options.batch_size);
  long step = 0;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = epoch_order(n, options.seed, epoch);
    double ce_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t bs = std::min(batch, n - start);
      std::vector<SampleGrads> grads(bs);
      std::vector<double> losses(bs);
      std::vector<char> hits(bs);
      const double scale = 1.0 / static_cast<double>(bs);
      detail::parallel_for(bs, exec, [&](std::size_t k) {
        const TokenizedSample& s = train[order[start + k]];
        const Activations acts = forward_trace(params, s.token_ids);
        losses[k] = cross_entropy(acts.output, s.label);
        hits[k] = acts.output.predicted() == s.label;
        Eigen::VectorXd d_logits = acts.output.probs;
        d_logits[s.label] -= 1.0;
        grads[k] = SampleGrads::zeros(params);
        backward(params, acts, d_logits, nullptr, scale, grads[k]);
      });
      BackboneGrads total = BackboneGrads::zeros(params);
      double batch_ce = 0.0;
      for (std::size_t k = 0; k < bs; ++k) {
        total.accumulate(grads[k]);
        batch_ce += losses[k];
        correct += static_cast<std::size_t>(hits[k]);
      }
      ce_sum += batch_ce;
      batch_ce /= static_cast<double>(bs);
      if (!std::isfinite(batch_ce)) {
        throw NumericError("cross-entropy became non-finite at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      optimizer.step(params, total);
      ++step;
      result.trace.batches.push_back(BatchLog{step, batch_ce, 0.0, batch_ce, {}});
    }
    const double mean_ce = ce_sum / static_cast<double>(n);
    result.trace.epochs.push_back(
        EpochStats{epoch, mean_ce, 0.0, mean_ce, static_cast<double>(correct) / static_cast<double>(n)});
  }
  if (!params.all_finite()) throw NumericError("parameters diverged during ERM training");
  result.params = std::move(params);
  return result;
}

}  // namespace acwg
