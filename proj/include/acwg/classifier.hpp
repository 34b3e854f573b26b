#pragma once

// Reference text classifier: embedding lookup, mean pooling over non-pad
// positions, one hidden affine layer with a nonlinearity, and a 2-way affine
// head. All arithmetic is in double precision.
//
//   u = mean_i x_i          x_i = E[t_i] (or an override row)
//   h = act(W1 u + b1)      representation
//   o = W2 h + b2           logits
//   p = softmax(o)

#include "acwg/common.hpp"
#include "acwg/corpus.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace acwg {

enum class Activation { tanh, identity };

struct TrainOptions {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Seeds the per-epoch shuffle.
  std::uint64_t seed = 13;

  bool operator==(const TrainOptions&) const = default;
};

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int hidden_dim = 128;
  int num_classes = 2;
  Activation activation = Activation::tanh;
  /// Standard deviation of the initial embedding entries.
  double embed_init_scale = 0.1;
  std::uint64_t seed = 13;
  TrainOptions train;

  /// Throws ContractError on non-positive dims or num_classes != 2.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ClassifierParams {
  ModelConfig config;
  Eigen::MatrixXd embedding;  // vocab_size x embed_dim
  Eigen::MatrixXd w1;         // hidden_dim x embed_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;         // num_classes x hidden_dim
  Eigen::VectorXd b2;

  bool operator==(const ClassifierParams& other) const;
  bool all_finite() const;
};

struct PredictionOutput {
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
  Eigen::VectorXd representation;

  int predicted() const;
};

/// Scalar functional of the model output that attribution and gradient
/// routines differentiate.
struct OutputSelector {
  enum class Kind { predicted_probability, class_probability, class_logit, logit_margin, constant };
  Kind kind = Kind::predicted_probability;
  int cls = 0;

  static OutputSelector predicted_probability() { return {Kind::predicted_probability, 0}; }
  static OutputSelector class_probability(int c) { return {Kind::class_probability, c}; }
  static OutputSelector class_logit(int c) { return {Kind::class_logit, c}; }
  /// logit[c] - logit[1-c]; linear in the logits.
  static OutputSelector logit_margin(int c) { return {Kind::logit_margin, c}; }
  static OutputSelector constant() { return {Kind::constant, 0}; }

  double value(const PredictionOutput& out) const;
  Eigen::VectorXd grad_logits(const PredictionOutput& out) const;
};

ClassifierParams init_params(const ModelConfig& config);

/// Throws ContractError for an empty sequence or one made only of pad ids.
PredictionOutput forward(const ClassifierParams& params, std::span<const int> token_ids);

/// Same as above but `inputs` (len x embed_dim) replaces the embedding lookup.
PredictionOutput forward(const ClassifierParams& params, std::span<const int> token_ids,
                         const Eigen::MatrixXd& inputs);

/// Embedding rows for `token_ids`, len x embed_dim.
Eigen::MatrixXd lookup_embeddings(const ClassifierParams& params, std::span<const int> token_ids);

/// d selector / d inputs, len x embed_dim. Pad positions get zero rows.
/// Throws NumericError if the gradient is not finite.
Eigen::MatrixXd grad_wrt_embeddings(const ClassifierParams& params, std::span<const int> token_ids,
                                    const Eigen::MatrixXd& inputs,
                                    const OutputSelector& selector = OutputSelector::predicted_probability());

std::vector<PredictionOutput> predict_batch(const ClassifierParams& params,
                                            std::span<const TokenizedSample> samples,
                                            Exec exec = Exec::parallel);

void save_params(const ClassifierParams& params, const std::filesystem::path& path);
ClassifierParams load_params(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training building blocks, shared by ERM and contrastive training.

/// Intermediate values of one forward pass, kept for backprop.
struct Activations {
  std::vector<int> token_ids;
  int valid = 0;  // number of non-pad positions
  Eigen::VectorXd pooled;
  Eigen::VectorXd hidden;
  PredictionOutput output;
};

Activations forward_trace(const ClassifierParams& params, std::span<const int> token_ids);
Activations forward_trace(const ClassifierParams& params, std::span<const int> token_ids,
                          const Eigen::MatrixXd& inputs);

/// Gradient of one sample's loss. The embedding gradient is the same row for
/// every non-pad position, so it is stored once with the ids it applies to.
struct SampleGrads {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  struct EmbeddingRows {
    std::vector<int> ids;
    Eigen::VectorXd row;
  };
  std::vector<EmbeddingRows> embedding;

  static SampleGrads zeros(const ClassifierParams& params);
};

/// Dense gradient over all backbone parameters.
struct BackboneGrads {
  Eigen::MatrixXd embedding;
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  static BackboneGrads zeros(const ClassifierParams& params);
  /// Adds a per-sample gradient. Callers add samples in a fixed order so the
  /// reduction is reproducible regardless of thread count.
  void accumulate(const SampleGrads& g);
};

/// Backpropagates `d_logits` (and optionally an extra `d_hidden` coming from a
/// head attached to the representation), scaled by `scale`, into `out`.
/// Returns d/d pooled (before the 1/valid factor is applied to positions).
Eigen::VectorXd backward(const ClassifierParams& params, const Activations& acts,
                         const Eigen::VectorXd& d_logits, const Eigen::VectorXd* d_hidden, double scale,
                         SampleGrads& out);

double cross_entropy(const PredictionOutput& out, int label);

/// Adam moment buffers for a set of tensors.
class Adam {
 public:
  explicit Adam(const TrainOptions& options) : options_(options) {}

  /// Registers a tensor; slots are matched to tensors by registration order.
  void add_slot(Eigen::Index size);
  /// Starts a new step (bias correction uses the step count).
  void begin_step() { ++t_; }
  void update(std::size_t slot, double* param, const double* grad);

  long step() const { return t_; }

 private:
  TrainOptions options_;
  std::vector<Eigen::ArrayXd> m_, v_;
  long t_ = 0;
};

class BackboneOptimizer {
 public:
  BackboneOptimizer(const ClassifierParams& params, const TrainOptions& options);
  void step(ClassifierParams& params, const BackboneGrads& grads);

 private:
  Adam adam_;
};

/// Shuffled sample order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

struct EpochStats {
  int epoch = 0;
  double ce = 0.0;
  double cl = 0.0;
  double total = 0.0;
  double train_accuracy = 0.0;
};

struct BatchLog {
  long step = 0;
  double ce = 0.0;
  double cl = 0.0;
  double total = 0.0;
  std::vector<double> mean_alpha;
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
  std::vector<BatchLog> batches;
};

struct ErmResult {
  ClassifierParams params;
  TrainTrace trace;
};

/// Cross-entropy training with Adam (the mining model). Deterministic for a
/// fixed (params, data order, options); independent of `exec`.
/// Throws NumericError if the loss becomes non-finite.
ErmResult train_erm(ClassifierParams params, std::span<const TokenizedSample> train,
                    const TrainOptions& options, Exec exec = Exec::parallel);

}  // namespace acwg
