#pragma once

// Fixtures and finite-difference oracles shared by the unit tests and the
// acceptance binary.

#include "acwg/augmentation.hpp"
#include "acwg/classifier.hpp"
#include "acwg/rng.hpp"
#include "acwg/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace acwg::testing {

/// Small random model over `vocab_size` ids.
ClassifierParams tiny_model(std::uint64_t seed, int vocab_size = 12, int embed = 4, int hidden = 5,
                            Activation act = Activation::tanh, double embed_scale = 0.5);

/// Random non-reserved ids, length in [min_len, max_len].
std::vector<int> random_ids(Rng& rng, int vocab_size, int min_len, int max_len);

TokenizedSample sample_from_ids(const std::string& id, std::vector<int> ids, int label);

/// Relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Analytic vs central differences of one sample's cross-entropy over all
/// backbone parameters.
double classifier_gradient_error(const ClassifierParams& params, const TokenizedSample& sample, double step = 1e-5);

/// Analytic vs central differences of c . z for a random c, over the
/// projection parameters and the input h.
double projection_gradient_error(const ProjectionParams& params, const Eigen::VectorXd& h, const Eigen::VectorXd& c,
                                 double step = 1e-5);

/// Analytic vs central differences of the full joint objective over the
/// backbone and every head parameter.
double objective_gradient_error(const ClassifierParams& params, const ContrastiveHead& head,
                                std::span<const TokenizedSample> batch, std::span<const AugmentedSet* const> augs,
                                const AcwgConfig& config, double step = 1e-5);

/// A random mini-batch with hand-built tuples (1..l negatives each, some
/// samples without a tuple).
struct RandomBatch {
  std::vector<TokenizedSample> samples;
  std::vector<AugmentedSet> sets;
  std::vector<const AugmentedSet*> augs;  // parallel to samples
};
RandomBatch random_batch(Rng& rng, int vocab_size, int size, int l);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace acwg::testing
