#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pollenstack/baseline_clf.hpp"
#include "pollenstack/error.hpp"
#include "synthetic.hpp"

using namespace pollenstack;

namespace {

CanonicalSample constant_sample(int n_layers, std::uint8_t value, int side = kCanonicalSide) {
  CanonicalSample s;
  s.id = "const";
  s.n_layers = n_layers;
  s.height = side;
  s.width = side;
  s.tensor.assign(static_cast<std::size_t>(n_layers) * side * side, value);
  return s;
}

// Grain-like samples with a left-to-right ramp, so flips change the features.
FeatureSet grain_set(int per_class, std::uint64_t seed, const FeatureSpec& spec, int side = 64,
                     int n_layers = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 6.0);
  FeatureSet set;
  set.n_layers = n_layers;
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < per_class; ++i) {
    for (ClassLabel label : kAllClasses) {
      CanonicalSample s;
      s.id = std::string(class_name(label)) + "/" + std::to_string(i);
      s.label = label;
      s.n_layers = n_layers;
      s.height = side;
      s.width = side;
      for (int z = 0; z < n_layers; ++z) {
        const GrayImage g = testing::grain_image(label, side, side, rng);
        for (int r = 0; r < side; ++r) {
          for (int c = 0; c < side; ++c) {
            const double v = 0.8 * g(r, c) + 40.0 * c / side + noise(rng);
            s.tensor.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
          }
        }
      }
      set.ids.push_back(s.id);
      set.labels.push_back(class_id(label));
      rows.push_back(pool_features(s, spec.pool_grid));
    }
  }
  set.raw.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) set.raw.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return set;
}

RunMetadata baseline_meta() {
  RunMetadata m;
  m.model = kBaselineModelName;
  return m;
}

double accuracy_of(const PredictionSet& p, const FeatureSet& set) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.rows.size(); ++i) hits += predicted_class(p.rows[i].probs) == set.labels[i];
  return static_cast<double>(hits) / static_cast<double>(p.rows.size());
}

}  // namespace

TEST_CASE("constant sample pools to its value") {
  const Eigen::VectorXd f = pool_features(constant_sample(6, 128), 16);
  CHECK(f.size() == 6 * 256);
  CHECK((f.array() == 128.0).all());
}

TEST_CASE("pool grid equal to the side is the identity") {
  const CanonicalSample s = testing::random_sample("r", ClassLabel::Urtica, 2, 3);
  const Eigen::VectorXd f = pool_features(s, 224);
  REQUIRE(f.size() == static_cast<Eigen::Index>(s.tensor.size()));
  for (std::size_t i = 0; i < s.tensor.size(); ++i) REQUIRE(f(static_cast<Eigen::Index>(i)) == s.tensor[i]);
}

TEST_CASE("half black half white layer pools to 0, 255 and one mixed band") {
  CanonicalSample s = constant_sample(1, 255);
  for (int r = 0; r < 224; ++r) {
    for (int c = 0; c < 100; ++c) s.tensor[static_cast<std::size_t>(r) * 224 + c] = 0;
  }
  const Eigen::VectorXd f = pool_features(s, 16);
  // Blocks are 14 wide; columns 98..111 hold 2 black and 12 white pixels.
  for (int br = 0; br < 16; ++br) {
    for (int bc = 0; bc < 16; ++bc) {
      const double v = f(br * 16 + bc);
      if (bc < 7) {
        CHECK(v == 0.0);
      } else if (bc == 7) {
        CHECK(v == doctest::Approx(255.0 * 12.0 / 14.0));
      } else {
        CHECK(v == 255.0);
      }
    }
  }
}

TEST_CASE("indivisible pool grid is a config error") {
  CHECK_THROWS_AS(pool_features(constant_sample(1, 0), 15), ConfigError);
}

TEST_CASE("flipping pooled features equals pooling the flipped sample") {
  for (int side : {64, 224}) {
    const CanonicalSample s = testing::random_sample("f", ClassLabel::Urtica, 3, 77, side);
    for (bool h : {false, true}) {
      for (bool v : {false, true}) {
        CanonicalSample flipped = s;
        if (h) flipped = flip(flipped, FlipAxis::Horizontal);
        if (v) flipped = flip(flipped, FlipAxis::Vertical);
        Eigen::VectorXd pooled = pool_features(s, 16);
        flip_pooled(pooled, 3, 16, {h, v});
        CHECK(pooled.isApprox(pool_features(flipped, 16), 1e-12));
      }
    }
  }
}

TEST_CASE("standardizer uses population statistics") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 5, 3, 5, 5, 5, 7, 5;
  const Standardizer s = Standardizer::fit(x);
  CHECK(s.mean(0) == doctest::Approx(4.0));
  CHECK(s.scale(0) == doctest::Approx(std::sqrt(5.0) + 1e-8));
  CHECK(s.scale(1) == doctest::Approx(1e-8));
  CHECK(s.apply(x).col(1).isZero());
}

TEST_CASE("softmax is shift invariant and rows sum to one") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 5.0);
  Eigen::MatrixXd logits(20, 3);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = n(rng);
  const Eigen::MatrixXd p = softmax(logits);
  for (double shift : {-1000.0, -3.5, 0.25, 700.0}) {
    CHECK(softmax(logits.array() + shift).isApprox(p, 1e-12));
  }
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
}

TEST_CASE("zero weights give ln 3") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(9, 7);
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  const LossGradient g =
      softmax_cross_entropy(Eigen::MatrixXd::Zero(3, 7), Eigen::VectorXd::Zero(3), x, labels);
  CHECK(std::abs(g.loss - std::log(3.0)) <= 1e-9);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  const int dim = 10;
  Eigen::MatrixXd x(5, dim);
  Eigen::MatrixXd w(3, dim);
  Eigen::VectorXd b(3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.5 * n(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = n(rng);
  const std::vector<int> labels = {0, 2, 1, 1, 0};
  const LossGradient g = softmax_cross_entropy(w, b, x, labels);

  const double h = 1e-4;
  double worst = 0.0;
  auto rel = [](double a, double num) { return std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6}); };
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Eigen::MatrixXd wp = w, wm = w;
    wp.data()[i] += h;
    wm.data()[i] -= h;
    const double num = (softmax_cross_entropy(wp, b, x, labels).loss -
                        softmax_cross_entropy(wm, b, x, labels).loss) / (2 * h);
    worst = std::max(worst, rel(g.grad_weights.data()[i], num));
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    Eigen::VectorXd bp = b, bm = b;
    bp(i) += h;
    bm(i) -= h;
    const double num = (softmax_cross_entropy(w, bp, x, labels).loss -
                        softmax_cross_entropy(w, bm, x, labels).loss) / (2 * h);
    worst = std::max(worst, rel(g.grad_bias(i), num));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("training starts at ln 3 and separates the synthetic classes") {
  const FeatureSpec spec;
  const FeatureSet train_set = grain_set(20, 1, spec);
  const FeatureSet val_set = grain_set(5, 2, spec);
  TrainConfig cfg;
  cfg.seed = 42;
  const TrainResult r = train(train_set, val_set, cfg, spec);
  CHECK(std::abs(r.initial_loss - std::log(3.0)) <= 1e-9);
  REQUIRE(r.log.size() == 30);
  CHECK(r.log.back().train_loss < r.log.front().train_loss);

  const PredictionSet on_train = predict(r.model, train_set, baseline_meta());
  CHECK(accuracy_of(on_train, train_set) >= 0.99);
  for (const auto& row : on_train.rows) {
    CHECK(std::abs(row.probs[0] + row.probs[1] + row.probs[2] - 1.0) <= 1e-9);
  }
  CHECK(accuracy_of(predict(r.model, val_set, baseline_meta()), val_set) >= 0.9);
}

TEST_CASE("full-batch loss is non-increasing at a small learning rate") {
  const FeatureSpec spec;
  const FeatureSet train_set = grain_set(10, 5, spec);
  TrainConfig cfg;
  cfg.learning_rate = 1e-5;
  cfg.batch_size = static_cast<int>(train_set.ids.size());
  cfg.p_flip = 0.0;
  cfg.epochs = 30;
  const TrainResult r = train(train_set, FeatureSet{}, cfg, spec);
  for (std::size_t e = 1; e < r.log.size(); ++e) CHECK(r.log[e].train_loss <= r.log[e - 1].train_loss);
  CHECK(r.log.front().train_loss == doctest::Approx(std::log(3.0)));
}

TEST_CASE("identical seeds give identical prediction files") {
  const FeatureSpec spec;
  const FeatureSet train_set = grain_set(8, 9, spec);
  const FeatureSet val_set = grain_set(3, 10, spec);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 5;
  auto run = [&] {
    const TrainResult r = train(train_set, val_set, cfg, spec);
    std::ostringstream out;
    write_predictions(out, predict(r.model, val_set, baseline_meta()));
    return out.str();
  };
  CHECK(run() == run());
  cfg.seed = 4;
  const TrainResult other = train(train_set, val_set, cfg, spec);
  cfg.seed = 3;
  CHECK_FALSE(other.model.weights.isApprox(train(train_set, val_set, cfg, spec).model.weights));
}

TEST_CASE("validation rows are scored without augmentation") {
  const FeatureSpec spec;
  const FeatureSet train_set = grain_set(8, 21, spec);
  const FeatureSet val_set = grain_set(4, 22, spec);
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.epochs = 4;
  cfg.p_flip = 1.0;
  const TrainResult r = train(train_set, val_set, cfg, spec);

  TruthMap truth;
  for (std::size_t i = 0; i < val_set.ids.size(); ++i) truth[val_set.ids[i]] = class_from_id(val_set.labels[i]);
  const EvalReport plain = score(predict(r.model, val_set, baseline_meta()), truth);
  CHECK(r.log.back().val_loss == doctest::Approx(plain.loss).epsilon(1e-10));
  CHECK(r.log.back().val_accuracy == doctest::Approx(plain.accuracy));

  FeatureSet flipped = val_set;
  for (Eigen::Index i = 0; i < flipped.raw.rows(); ++i) {
    Eigen::VectorXd row = flipped.raw.row(i).transpose();
    flip_pooled(row, flipped.n_layers, spec.pool_grid, {true, true});
    flipped.raw.row(i) = row.transpose();
  }
  const EvalReport augmented = score(predict(r.model, flipped, baseline_meta()), truth);
  CHECK(std::abs(augmented.loss - r.log.back().val_loss) > 1e-6);
}

TEST_CASE("training guards") {
  const FeatureSpec spec;
  TrainConfig cfg;
  CHECK_THROWS_AS(train(FeatureSet{}, FeatureSet{}, cfg, spec), InputError);
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.p_flip = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  FeatureSet tiny = grain_set(2, 1, spec);
  tiny.raw(0, 0) = std::nan("");
  cfg = {};
  cfg.epochs = 3;
  CHECK_THROWS_AS(train(tiny, FeatureSet{}, cfg, spec), Error);
}

TEST_CASE("epoch log format") {
  const std::vector<EpochLog> log = {{1, 1.0, 0.5, 0.75, 0.125}};
  std::ostringstream out;
  write_epoch_log(out, log);
  CHECK(out.str() == "epoch\ttrain_loss\tval_loss\tval_acc\tseconds\n1\t1\t0.5\t0.75\t0.125\n");
}
