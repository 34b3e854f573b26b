#pragma once

// Contrastive training on mined word-groups: a projection head shared by the
// anchor, positive and negatives, an adaptive vote over the negatives, a
// margin ranking loss and the joint objective  L = L_CE + lambda * L_CL.

#include "acwg/augmentation.hpp"
#include "acwg/classifier.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace acwg {

enum class LossForm {
  /// max(0, margin - cos(z, z+) + sum_i alpha_i cos(z, z-_i))
  canonical,
  /// max(0, margin + cos(z, z+) - sum_i alpha_i cos(z, z-_i)), sign as printed
  literal,
};

enum class Ablation {
  none,
  /// alpha is one-hot on the top-ranked group; the voting layer is unused.
  wo_voting,
  /// Upstream mining keeps only the best single word; training itself is unchanged.
  wo_wordgroups,
};

struct HeadConfig {
  int input_dim = 128;   // classifier hidden_dim
  int hidden_dim = 64;
  int output_dim = 64;   // d_z
  int num_groups = 3;    // l
  std::uint64_t seed = 17;

  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

/// z = W2 tanh(W1 h + b1) + b2
struct ProjectionParams {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

/// logits = W^T [z-_1; ...; z-_l] + b, W is (d_z * l) x l.
struct VotingParams {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct ContrastiveHead {
  HeadConfig config;
  ProjectionParams projection;
  VotingParams voting;

  bool operator==(const ContrastiveHead& other) const;
};

ContrastiveHead init_head(const HeadConfig& config);

void save_head(const ContrastiveHead& head, const std::filesystem::path& path);
ContrastiveHead load_head(const std::filesystem::path& path);

struct ProjectionTrace {
  Eigen::VectorXd input;
  Eigen::VectorXd hidden;
  Eigen::VectorXd z;
};

Eigen::VectorXd project(const ProjectionParams& params, const Eigen::VectorXd& h);
ProjectionTrace project_trace(const ProjectionParams& params, const Eigen::VectorXd& h);

struct ProjectionGrads {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

/// Accumulates d/dparams into `out` and returns d/dh.
Eigen::VectorXd project_backward(const ProjectionParams& params, const ProjectionTrace& trace,
                                 const Eigen::VectorXd& dz, ProjectionGrads& out);

/// Softmax voting weights over `z_negatives`. When fewer than l negatives are
/// given, the list is padded with copies of the last one and the padded
/// logits are masked out, so the padded weights are exactly 0.
/// Throws ContractError on an empty list, too many negatives or a shape mismatch.
Eigen::VectorXd voting_weights(std::span<const Eigen::VectorXd> z_negatives, const VotingParams& params);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Hinge margin loss over one tuple. `alpha` has one weight per negative.
/// Throws ContractError if any vector has zero norm.
double contrastive_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& z_pos,
                        std::span<const Eigen::VectorXd> z_negs, const Eigen::VectorXd& alpha, double margin = 1.0,
                        LossForm form = LossForm::canonical);

/// L_CE + lambda * L_CL. Throws ContractError for lambda < 0.
double total_loss(double ce, double cl, double lambda);

struct AcwgConfig {
  double lambda = 0.01;
  double margin = 1.0;
  LossForm loss_form = LossForm::canonical;
  Ablation ablation = Ablation::none;
  TrainOptions train;

  void validate() const;
  bool operator==(const AcwgConfig&) const = default;
};

/// Loss of one mini-batch.
struct LossBreakdown {
  double ce = 0.0;     // mean over the batch
  double cl = 0.0;     // mean over the samples that have negatives
  double total = 0.0;  // ce + lambda * cl
  std::size_t contrastive_samples = 0;
  std::size_t correct = 0;  // anchors predicted correctly
  std::vector<Eigen::VectorXd> alphas;  // per contrastive sample
};

struct HeadGrads {
  ProjectionGrads projection;
  Eigen::MatrixXd voting_weight;
  Eigen::VectorXd voting_bias;

  static HeadGrads zeros(const ContrastiveHead& head);
};

struct ObjectiveGrads {
  BackboneGrads backbone;
  HeadGrads head;
};

/// Joint objective on one mini-batch. `augs[i]` is the tuple of `batch[i]`
/// or nullptr when the sample has no word-groups. Cross-entropy uses the
/// original samples and labels only. When `grads` is non-null it receives
/// the gradient of `total`. The contrastive gradient is skipped entirely
/// when lambda == 0, which makes training with lambda == 0 identical to ERM.
LossBreakdown acwg_objective(const ClassifierParams& params, const ContrastiveHead& head,
                             std::span<const TokenizedSample> batch, std::span<const AugmentedSet* const> augs,
                             const AcwgConfig& config, ObjectiveGrads* grads, Exec exec = Exec::parallel);

/// Optional callback that rebuilds the augmented sets from the current
/// backbone before each epoch after the first.
using AugmentRefresher = std::function<std::vector<AugmentedSet>(const ClassifierParams&, int epoch)>;

struct AcwgResult {
  ClassifierParams params;
  ContrastiveHead head;
  TrainTrace trace;
};

/// Joint training of backbone, projection and voting parameters with Adam.
/// Throws ContractError if an augmented set's anchor is not in `train`, and
/// NumericError when the loss becomes non-finite.
AcwgResult train_acwg(ClassifierParams params, ContrastiveHead head, std::span<const TokenizedSample> train,
                      std::span<const AugmentedSet> augs, const AcwgConfig& config, Exec exec = Exec::parallel,
                      const AugmentRefresher& refresh = {});

}  // namespace acwg
