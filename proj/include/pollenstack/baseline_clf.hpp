#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pollenstack/canonicalize.hpp"
#include "pollenstack/dataset_kit.hpp"
#include "pollenstack/eval_kit.hpp"

namespace pollenstack {

// Multinomial logistic regression on block-pooled voxel features. It is a
// reference classifier that exercises the whole pipeline without a deep
// learning framework.

inline constexpr double kStandardizeEpsilon = 1e-8;
inline constexpr const char* kBaselineModelName = "baseline_logreg";

struct FeatureSpec {
  int pool_grid = 16;  // each layer is average-pooled to pool_grid x pool_grid
};

// Non-overlapping block means per layer, flattened as (layer, row, col).
// Throws ConfigError when the layer side is not divisible by pool_grid.
Eigen::VectorXd pool_features(const CanonicalSample& sample, int pool_grid);

// Applies the flips to pooled features. Because the pooling blocks tile the
// layer symmetrically this equals pooling the flipped sample.
void flip_pooled(Eigen::Ref<Eigen::VectorXd> features, int n_layers, int pool_grid,
                 const FlipDecision& flips);

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // standard deviation + epsilon

  // Statistics over the rows of `features` (one sample per row).
  static Standardizer fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

Eigen::VectorXd featurize(const CanonicalSample& sample, const FeatureSpec& spec,
                          const Standardizer& standardizer);

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 30;
  int batch_size = 16;
  int eval_batch_size = 16;
  std::uint64_t seed = 0;
  double p_flip = 0.5;  // flip augmentation on the training split only

  void validate() const;
};

struct LinearModel {
  FeatureSpec spec;
  Standardizer standardizer;
  Eigen::MatrixXd weights;  // kNumClasses x features
  Eigen::VectorXd bias;     // kNumClasses
  TrainConfig config;
};

// Row-wise softmax, shifted by the row maximum.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);

struct LossGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad_weights;
  Eigen::VectorXd grad_bias;
};

// Mean softmax cross-entropy over the rows of `features` and its gradient.
LossGradient softmax_cross_entropy(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                   const Eigen::MatrixXd& features, std::span<const int> labels);

struct FeatureSet {
  std::vector<std::string> ids;
  std::vector<int> labels;
  Eigen::MatrixXd raw;  // pooled, not standardized; one row per id
  int n_layers = 0;
};

FeatureSet extract_features(const PackedDataset& dataset, std::span<const std::string> ids,
                            const FeatureSpec& spec, unsigned workers = 1);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  LinearModel model;
  double initial_loss = 0.0;  // training loss before the first update
  std::vector<EpochLog> log;

  double mean_epoch_seconds() const noexcept;
};

// Mini-batch gradient descent from a zero initialisation. Batches follow the
// stream keyed (seed, shuffle tag, epoch); augmentation uses draw_flips with
// the same seed. Throws InputError for an empty training set and Error when
// the loss stops being finite.
TrainResult train(const FeatureSet& train_set, const FeatureSet& val_set, const TrainConfig& config,
                  const FeatureSpec& spec = {});
TrainResult train(const PackedDataset& dataset, const FoldRoles& roles, const TrainConfig& config,
                  const FeatureSpec& spec = {}, unsigned workers = 1);

PredictionSet predict(const LinearModel& model, const FeatureSet& features, RunMetadata meta);
PredictionSet predict(const LinearModel& model, const PackedDataset& dataset,
                      std::span<const std::string> ids, RunMetadata meta, unsigned workers = 1);

// "epoch train_loss val_loss val_acc seconds"
void write_epoch_log(std::ostream& out, std::span<const EpochLog> log);

}  // namespace pollenstack
