#include "pollenstack/baseline_clf.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "pollenstack/error.hpp"
#include "pollenstack/parallel.hpp"
#include "pollenstack/random.hpp"
#include "text_util.hpp"

namespace pollenstack {

namespace {

// Mean loss and accuracy of a model on standardized rows.
std::pair<double, double> evaluate(const LinearModel& model, const Eigen::MatrixXd& x,
                                   std::span<const int> labels, int chunk) {
  if (x.rows() == 0) return {std::nan(""), std::nan("")};
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
    const Eigen::Index n = std::min<Eigen::Index>(chunk, x.rows() - start);
    const Eigen::MatrixXd logits =
        (x.middleRows(start, n) * model.weights.transpose()).rowwise() + model.bias.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::RowVectorXd z = logits.row(i);
      const double zmax = z.maxCoeff();
      const double lse = zmax + std::log((z.array() - zmax).exp().sum());
      loss += lse - z(labels[start + i]);
      Eigen::Index best = 0;
      z.maxCoeff(&best);
      if (best == labels[start + i]) ++correct;
    }
  }
  const auto rows = static_cast<double>(x.rows());
  return {loss / rows, static_cast<double>(correct) / rows};
}

}  // namespace

Eigen::VectorXd pool_features(const CanonicalSample& sample, int pool_grid) {
  if (pool_grid < 1 || sample.height % pool_grid != 0 || sample.width % pool_grid != 0) {
    throw ConfigError("pool_grid " + std::to_string(pool_grid) + " does not divide the " +
                      std::to_string(sample.height) + "x" + std::to_string(sample.width) + " layer");
  }
  const int bh = sample.height / pool_grid;
  const int bw = sample.width / pool_grid;
  const double area = static_cast<double>(bh) * bw;
  Eigen::VectorXd features(static_cast<Eigen::Index>(sample.n_layers) * pool_grid * pool_grid);
  Eigen::Index k = 0;
  for (int z = 0; z < sample.n_layers; ++z) {
    for (int br = 0; br < pool_grid; ++br) {
      for (int bc = 0; bc < pool_grid; ++bc) {
        std::uint64_t sum = 0;
        for (int r = br * bh; r < (br + 1) * bh; ++r) {
          for (int c = bc * bw; c < (bc + 1) * bw; ++c) sum += sample.at(z, r, c);
        }
        features(k++) = static_cast<double>(sum) / area;
      }
    }
  }
  return features;
}

void flip_pooled(Eigen::Ref<Eigen::VectorXd> features, int n_layers, int pool_grid,
                 const FlipDecision& flips) {
  const Eigen::Index plane = static_cast<Eigen::Index>(pool_grid) * pool_grid;
  for (int z = 0; z < n_layers; ++z) {
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> grid(
        features.data() + z * plane, pool_grid, pool_grid);
    if (flips.horizontal) grid = grid.rowwise().reverse().eval();
    if (flips.vertical) grid = grid.colwise().reverse().eval();
  }
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features) {
  Standardizer s;
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.scale = (centered.array().square().colwise().sum() / static_cast<double>(features.rows()))
                .sqrt()
                .transpose();
  s.scale.array() += kStandardizeEpsilon;
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  return ((features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
      .matrix();
}

Eigen::VectorXd featurize(const CanonicalSample& sample, const FeatureSpec& spec,
                          const Standardizer& standardizer) {
  const Eigen::VectorXd raw = pool_features(sample, spec.pool_grid);
  if (raw.size() != standardizer.mean.size()) {
    throw InputError("featurize: sample " + sample.id + " has " + std::to_string(raw.size()) +
                     " features, model expects " + std::to_string(standardizer.mean.size()));
  }
  return ((raw - standardizer.mean).array() / standardizer.scale.array()).matrix();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1 || eval_batch_size < 1) throw ConfigError("batch sizes must be >= 1");
  if (!(p_flip >= 0.0 && p_flip <= 1.0)) throw ConfigError("augmentation threshold must be in [0, 1]");
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  return p.array().colwise() / p.rowwise().sum().array();
}

LossGradient softmax_cross_entropy(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                   const Eigen::MatrixXd& features, std::span<const int> labels) {
  const Eigen::Index n = features.rows();
  const Eigen::MatrixXd logits = (features * weights.transpose()).rowwise() + bias.transpose();
  Eigen::MatrixXd p = softmax(logits);
  LossGradient out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd z = logits.row(i);
    const double zmax = z.maxCoeff();
    out.loss += zmax + std::log((z.array() - zmax).exp().sum()) - z(labels[i]);
    p(i, labels[i]) -= 1.0;
  }
  out.loss /= static_cast<double>(n);
  p /= static_cast<double>(n);
  out.grad_weights = p.transpose() * features;
  out.grad_bias = p.colwise().sum().transpose();
  return out;
}

FeatureSet extract_features(const PackedDataset& dataset, std::span<const std::string> ids,
                            const FeatureSpec& spec, unsigned workers) {
  FeatureSet set;
  set.ids.assign(ids.begin(), ids.end());
  set.labels.resize(ids.size());
  set.n_layers = dataset.header().n_layers;
  const Eigen::Index dim =
      static_cast<Eigen::Index>(set.n_layers) * spec.pool_grid * spec.pool_grid;
  set.raw.resize(static_cast<Eigen::Index>(ids.size()), dim);
  parallel_for(ids.size(), workers, [&](std::size_t i) {
    const CanonicalSample sample = dataset.load(ids[i]);
    set.raw.row(static_cast<Eigen::Index>(i)) = pool_features(sample, spec.pool_grid).transpose();
    set.labels[i] = class_id(sample.label);
  });
  return set;
}

double TrainResult::mean_epoch_seconds() const noexcept {
  if (log.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : log) total += e.seconds;
  return total / static_cast<double>(log.size());
}

TrainResult train(const FeatureSet& train_set, const FeatureSet& val_set, const TrainConfig& config,
                  const FeatureSpec& spec) {
  config.validate();
  if (train_set.raw.rows() == 0) throw InputError("train: empty training split");

  TrainResult result;
  LinearModel& model = result.model;
  model.spec = spec;
  model.config = config;
  model.standardizer = Standardizer::fit(train_set.raw);
  model.weights = Eigen::MatrixXd::Zero(kNumClasses, train_set.raw.cols());
  model.bias = Eigen::VectorXd::Zero(kNumClasses);

  const Eigen::MatrixXd train_x = model.standardizer.apply(train_set.raw);
  const Eigen::MatrixXd val_x =
      val_set.raw.rows() ? model.standardizer.apply(val_set.raw) : Eigen::MatrixXd();
  result.initial_loss =
      softmax_cross_entropy(model.weights, model.bias, train_x, train_set.labels).loss;

  const AugmentConfig augment{config.p_flip, config.seed};
  const auto n = static_cast<std::size_t>(train_x.rows());
  std::vector<std::size_t> order(n);
  Eigen::MatrixXd batch;
  std::vector<int> batch_labels;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::CounterStream stream{config.seed, rng::kTagShuffle, static_cast<std::uint64_t>(epoch)};
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[stream.next_below(i)]);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t size = std::min<std::size_t>(config.batch_size, n - begin);
      batch.resize(static_cast<Eigen::Index>(size), train_x.cols());
      batch_labels.resize(size);
      for (std::size_t j = 0; j < size; ++j) {
        const std::size_t s = order[begin + j];
        const auto row = static_cast<Eigen::Index>(j);
        if (config.p_flip > 0.0) {
          Eigen::VectorXd raw = train_set.raw.row(static_cast<Eigen::Index>(s)).transpose();
          flip_pooled(raw, train_set.n_layers, spec.pool_grid,
                      draw_flips(augment, train_set.ids[s], epoch));
          batch.row(row) = ((raw - model.standardizer.mean).array() /
                            model.standardizer.scale.array())
                               .matrix()
                               .transpose();
        } else {
          batch.row(row) = train_x.row(static_cast<Eigen::Index>(s));
        }
        batch_labels[j] = train_set.labels[s];
      }
      const LossGradient g = softmax_cross_entropy(model.weights, model.bias, batch, batch_labels);
      if (!std::isfinite(g.loss)) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      loss_sum += g.loss * static_cast<double>(size);
      model.weights -= config.learning_rate * g.grad_weights;
      model.bias -= config.learning_rate * g.grad_bias;
    }
    if (!model.weights.allFinite() || !model.bias.allFinite()) {
      throw Error("train: non-finite parameters after epoch " + std::to_string(epoch + 1));
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.train_loss = loss_sum / static_cast<double>(n);
    std::tie(entry.val_loss, entry.val_accuracy) =
        evaluate(model, val_x, val_set.labels, config.eval_batch_size);
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
  }
  return result;
}

TrainResult train(const PackedDataset& dataset, const FoldRoles& roles, const TrainConfig& config,
                  const FeatureSpec& spec, unsigned workers) {
  const FeatureSet train_set = extract_features(dataset, roles.train, spec, workers);
  const FeatureSet val_set = extract_features(dataset, roles.val, spec, workers);
  return train(train_set, val_set, config, spec);
}

PredictionSet predict(const LinearModel& model, const FeatureSet& features, RunMetadata meta) {
  PredictionSet out;
  out.meta = std::move(meta);
  if (features.raw.rows() == 0) return out;
  if (features.raw.cols() != model.weights.cols()) {
    throw InputError("predict: feature length " + std::to_string(features.raw.cols()) +
                     " does not match the model's " + std::to_string(model.weights.cols()));
  }
  const Eigen::MatrixXd x = model.standardizer.apply(features.raw);
  const Eigen::MatrixXd p =
      softmax((x * model.weights.transpose()).rowwise() + model.bias.transpose());
  out.rows.reserve(features.ids.size());
  for (std::size_t i = 0; i < features.ids.size(); ++i) {
    PredictionRow row;
    row.id = features.ids[i];
    for (int c = 0; c < kNumClasses; ++c) row.probs[c] = p(static_cast<Eigen::Index>(i), c);
    out.rows.push_back(std::move(row));
  }
  return out;
}

PredictionSet predict(const LinearModel& model, const PackedDataset& dataset,
                      std::span<const std::string> ids, RunMetadata meta, unsigned workers) {
  for (const auto& id : ids) {
    if (!dataset.find(id)) throw InputError("predict: unknown id " + id);
  }
  return predict(model, extract_features(dataset, ids, model.spec, workers), std::move(meta));
}

void write_epoch_log(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch\ttrain_loss\tval_loss\tval_acc\tseconds\n";
  for (const auto& e : log) {
    out << e.epoch << '\t' << text::format_double(e.train_loss) << '\t'
        << text::format_double(e.val_loss) << '\t' << text::format_double(e.val_accuracy) << '\t'
        << text::format_double(e.seconds) << '\n';
  }
}

}  // namespace pollenstack
