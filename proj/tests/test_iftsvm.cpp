#include "vsm/iftsvm.hpp"

#include "vsm/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vsm;

namespace {

Eigen::VectorXd vec2(double x, double y) {
  Eigen::VectorXd v(2);
  v << x, y;
  return v;
}

// Linearly separable boxes around (+-2, 0) with a fixed fraction of flipped
// labels; flipped indices are the leading ones of each class for determinism.
struct NoisyLabelSet {
  std::vector<Eigen::VectorXd> features;
  std::vector<int> labels;       // possibly flipped
  std::vector<int> true_labels;  // generating labels
  std::vector<bool> flipped;
};

NoisyLabelSet make_noisy_set(int per_class, double flip_fraction, std::uint64_t seed) {
  NoisyLabelSet out;
  Rng rng(seed);
  const int flips = static_cast<int>(per_class * flip_fraction);
  for (int side = 0; side < 2; ++side) {
    const int label = side == 0 ? +1 : -1;
    const double center = side == 0 ? 2.0 : -2.0;
    for (int i = 0; i < per_class; ++i) {
      out.features.push_back(vec2(center + rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)));
      out.true_labels.push_back(label);
      const bool flip = i < flips;
      out.labels.push_back(flip ? -label : label);
      out.flipped.push_back(flip);
    }
  }
  return out;
}

// Best single separating line over a coarse parameter grid; a floor for what
// any sane linear method should reach on this data.
double grid_line_accuracy(const NoisyLabelSet& train, const NoisyLabelSet& test) {
  double best = 0.0;
  for (int ai = 0; ai < 64; ++ai) {
    const double angle = ai * 3.14159265358979323846 / 64.0;
    const double nx = std::cos(angle), ny = std::sin(angle);
    for (int oi = -32; oi <= 32; ++oi) {
      const double offset = oi * 4.0 / 32.0;
      for (int sign = -1; sign <= 1; sign += 2) {
        int train_hits = 0;
        for (std::size_t i = 0; i < train.features.size(); ++i) {
          const double side = nx * train.features[i](0) + ny * train.features[i](1) - offset;
          if ((side >= 0 ? sign : -sign) == train.labels[i]) ++train_hits;
        }
        if (train_hits * 2 < static_cast<int>(train.features.size())) continue;
        int hits = 0;
        for (std::size_t i = 0; i < test.features.size(); ++i) {
          const double side = nx * test.features[i](0) + ny * test.features[i](1) - offset;
          if ((side >= 0 ? sign : -sign) == test.true_labels[i]) ++hits;
        }
        best = std::max(best, static_cast<double>(hits) / test.features.size());
      }
    }
  }
  return best;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("assign_fuzzy_degrees") {
  SUBCASE("centroid and extremal samples") {
    // class +1: centroid sits exactly on the first sample
    std::vector<Eigen::VectorXd> feats{vec2(0, 0), vec2(1, 0),  vec2(-1, 0),
                                       vec2(8, 8), vec2(9, 8),  vec2(8, 9)};
    std::vector<int> labels{+1, +1, +1, -1, -1, -1};
    const auto samples = assign_fuzzy_degrees(feats, labels, 2);
    CHECK(samples[0].membership == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(samples[0].nonmembership == doctest::Approx(0.0));
    // the farthest sample of its class has membership ~ 0
    CHECK(samples[1].membership == doctest::Approx(0.0).epsilon(1e-4));
  }
  SUBCASE("a mislabeled point surrounded by the opposite class gets mu+nu = 1") {
    std::vector<Eigen::VectorXd> feats{vec2(0, 0),     vec2(1, 0),   vec2(0, 1),
                                       vec2(5, 5),     vec2(6, 5),   vec2(5, 6),
                                       vec2(5.4, 5.4)};
    std::vector<int> labels{+1, +1, +1, -1, -1, -1, +1};
    const auto samples = assign_fuzzy_degrees(feats, labels, 3);
    const auto& outlier = samples[6];
    CHECK(outlier.nonmembership == doctest::Approx(1.0 - outlier.membership).epsilon(1e-12));
    CHECK(outlier.membership + outlier.nonmembership == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(outlier.score() < samples[0].score());
  }
  SUBCASE("mu + nu <= 1 holds for every sample") {
    Rng rng(5);
    std::vector<Eigen::VectorXd> feats;
    std::vector<int> labels;
    for (int i = 0; i < 120; ++i) {
      feats.push_back(vec2(rng.normal(), rng.normal()));
      labels.push_back(i % 2 ? +1 : -1);
    }
    for (const auto& s : assign_fuzzy_degrees(feats, labels, 9)) {
      CHECK(s.membership + s.nonmembership <= 1.0 + 1e-12);
      CHECK(s.membership >= 0.0);
      CHECK(s.nonmembership >= 0.0);
      CHECK(s.score() >= 0.0);
      CHECK(s.score() <= 1.0);
    }
  }
  SUBCASE("rejects starved classes and bad k") {
    std::vector<Eigen::VectorXd> feats{vec2(0, 0), vec2(1, 1), vec2(2, 2)};
    std::vector<int> one_sided{+1, +1, +1};
    CHECK_THROWS_AS(assign_fuzzy_degrees(feats, one_sided, 1), std::invalid_argument);
    std::vector<int> ok{+1, +1, -1};
    CHECK_THROWS_AS(assign_fuzzy_degrees(feats, ok, 1), std::invalid_argument);  // class -1 starved
    std::vector<Eigen::VectorXd> four{vec2(0, 0), vec2(1, 1), vec2(4, 4), vec2(5, 5)};
    std::vector<int> labels4{+1, +1, -1, -1};
    CHECK_THROWS_AS(assign_fuzzy_degrees(four, labels4, 0), std::invalid_argument);
  }
}

TEST_CASE("train_iftsvm on two 1-D singletons puts each plane through its class") {
  std::vector<FuzzySample> samples(2);
  samples[0].features = Eigen::VectorXd::Constant(1, -1.0);
  samples[0].label = +1;
  samples[0].membership = 1.0;
  samples[1].features = Eigen::VectorXd::Constant(1, +1.0);
  samples[1].label = -1;
  samples[1].membership = 1.0;

  const TwinModel model = train_iftsvm(samples, 10.0, 10.0);
  // standardization maps -1,+1 to themselves (zero mean, unit std)
  const double at_neg1 = std::abs(model.w_pos(0) * -1.0 + model.b_pos) / model.w_pos.norm();
  const double at_pos1 = std::abs(model.w_neg(0) * +1.0 + model.b_neg) / model.w_neg.norm();
  CHECK(at_neg1 < 1e-5);
  CHECK(at_pos1 < 1e-5);

  // the midpoint is equidistant and resolves to +1 by the tie rule
  const Classification mid = classify(model, Eigen::VectorXd::Zero(1));
  CHECK(mid.label == +1);
  CHECK(mid.margin_ratio == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mirrored clusters learn mirrored planes") {
  Rng rng(17);
  std::vector<FuzzySample> samples;
  for (int i = 0; i < 40; ++i) {
    const double x = 1.0 + rng.uniform(), y = rng.uniform(-1.0, 1.0);
    FuzzySample pos;
    pos.features = vec2(x, y);
    pos.label = +1;
    pos.membership = 1.0;
    samples.push_back(pos);
    FuzzySample neg;
    neg.features = vec2(-x, y);  // exact mirror through the y-axis
    neg.label = -1;
    neg.membership = 1.0;
    samples.push_back(neg);
  }
  const TwinModel model = train_iftsvm(samples, 5.0, 5.0);
  // mirrored points must sit at mirrored normalized distances
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd p = vec2(rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0));
    const Eigen::VectorXd m = vec2(-p(0), p(1));
    const Eigen::VectorXd zp = (p - model.feature_mean).array() / model.feature_scale.array();
    const Eigen::VectorXd zm = (m - model.feature_mean).array() / model.feature_scale.array();
    const double d_pos = std::abs(model.w_pos.dot(zp) + model.b_pos) / model.w_pos.norm();
    const double d_neg = std::abs(model.w_neg.dot(zm) + model.b_neg) / model.w_neg.norm();
    CHECK(d_pos == doctest::Approx(d_neg).epsilon(1e-6));
  }
}

TEST_CASE("noisy-label training set: accuracy, score ordering, dual feasibility") {
  const NoisyLabelSet train = make_noisy_set(100, 0.10, 12345);
  const NoisyLabelSet test = make_noisy_set(200, 0.0, 999);

  const auto fuzzy = assign_fuzzy_degrees(train.features, train.labels, 7);

  // flipped points must carry lower fuzzy scores on average
  double flipped_score = 0.0, clean_score = 0.0;
  int flipped_count = 0, clean_count = 0;
  for (std::size_t i = 0; i < fuzzy.size(); ++i) {
    if (train.flipped[i]) {
      flipped_score += fuzzy[i].score();
      ++flipped_count;
    } else {
      clean_score += fuzzy[i].score();
      ++clean_count;
    }
  }
  flipped_score /= flipped_count;
  clean_score /= clean_count;
  CHECK(flipped_score < clean_score);

  TrainDiagnostics diag;
  const TwinModel model = train_iftsvm(fuzzy, 10.0, 10.0, 1e-6, &diag);

  // duals respect their fuzzy-scaled boxes
  for (Eigen::Index j = 0; j < diag.alpha_pos.size(); ++j) {
    CHECK(diag.alpha_pos(j) >= -1e-12);
    CHECK(diag.alpha_pos(j) <= diag.box_pos(j) + 1e-12);
  }
  for (Eigen::Index j = 0; j < diag.alpha_neg.size(); ++j) {
    CHECK(diag.alpha_neg(j) >= -1e-12);
    CHECK(diag.alpha_neg(j) <= diag.box_neg(j) + 1e-12);
  }

  int hits = 0;
  for (std::size_t i = 0; i < test.features.size(); ++i)
    if (classify(model, test.features[i]).label == test.true_labels[i]) ++hits;
  const double accuracy = static_cast<double>(hits) / test.features.size();
  CHECK(accuracy >= 0.95);

  // and it should not trail a brute-force line search by more than a hair
  const double grid_floor = grid_line_accuracy(train, test);
  CHECK(accuracy >= grid_floor - 0.03);
}

TEST_CASE("training is deterministic") {
  const NoisyLabelSet train = make_noisy_set(50, 0.10, 777);
  const auto fuzzy = assign_fuzzy_degrees(train.features, train.labels, 5);
  const TwinModel a = train_iftsvm(fuzzy, 10.0, 10.0);
  const TwinModel b = train_iftsvm(fuzzy, 10.0, 10.0);
  CHECK(a.w_pos == b.w_pos);
  CHECK(a.w_neg == b.w_neg);
  CHECK(a.b_pos == b.b_pos);
  CHECK(a.b_neg == b.b_neg);
}

TEST_CASE("degenerate training data is rejected") {
  std::vector<FuzzySample> same(4);
  for (int i = 0; i < 4; ++i) {
    same[i].features = vec2(1.0, 1.0);
    same[i].label = i < 2 ? +1 : -1;
    same[i].membership = 1.0;
  }
  CHECK_THROWS_AS(train_iftsvm(same, 1.0, 1.0), std::invalid_argument);

  std::vector<FuzzySample> one_class(2);
  for (int i = 0; i < 2; ++i) {
    one_class[i].features = vec2(i, i);
    one_class[i].label = +1;
    one_class[i].membership = 1.0;
  }
  CHECK_THROWS_AS(train_iftsvm(one_class, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("classify decision rule") {
  // hand model: plane + at z=-1, plane - at z=+1, identity standardization
  TwinModel model;
  model.w_pos = Eigen::VectorXd::Constant(1, 1.0);
  model.b_pos = 1.0;
  model.w_neg = Eigen::VectorXd::Constant(1, 1.0);
  model.b_neg = -1.0;
  model.feature_mean = Eigen::VectorXd::Zero(1);
  model.feature_scale = Eigen::VectorXd::Constant(1, 1.0);

  SUBCASE("x=0.5 sits nearer the negative plane") {
    const Classification c = classify(model, Eigen::VectorXd::Constant(1, 0.5));
    CHECK(c.label == -1);
    CHECK(c.margin_ratio == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("a point on one plane caps the margin ratio") {
    const Classification c = classify(model, Eigen::VectorXd::Constant(1, -1.0));
    CHECK(c.label == +1);
    CHECK(c.margin_ratio == 1e12);
  }
  SUBCASE("equidistant points break toward +1") {
    const Classification c = classify(model, Eigen::VectorXd::Zero(1));
    CHECK(c.label == +1);
  }
  SUBCASE("uniform scaling of both planes changes nothing") {
    TwinModel scaled = model;
    scaled.w_pos *= 3.0;
    scaled.b_pos *= 3.0;
    scaled.w_neg *= 0.25;
    scaled.b_neg *= 0.25;
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.31);
    CHECK(classify(scaled, x).label == classify(model, x).label);
    CHECK(classify(scaled, x).margin_ratio ==
          doctest::Approx(classify(model, x).margin_ratio).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(classify(model, vec2(0, 0)), std::invalid_argument);
  }
}

TEST_CASE("patch_features") {
  SUBCASE("constant patch zeroes every spread statistic") {
    const Plane flat = Plane::Constant(9, 9, 0.25);
    const PatchFeatures f = patch_features(flat, 4, 4, 2);
    CHECK(f.mean == doctest::Approx(0.25));
    CHECK(f.variance == 0.0);
    CHECK(f.gradient_mean == 0.0);
    CHECK(f.laplacian_mean == 0.0);
    CHECK(f.range == 0.0);
  }
  SUBCASE("3x3 step patch, hand-evaluated") {
    Plane step(3, 3);
    step << 0, 1, 1, 0, 1, 1, 0, 1, 1;
    const PatchFeatures f = patch_features(step, 1, 1, 1);
    CHECK(f.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(f.variance == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
    CHECK(f.range == doctest::Approx(1.0));
    // central differences with reflect-101: only the middle column sees a
    // nonzero gradient (0.5); laplacian magnitudes are 2, 1, 0 per column
    CHECK(f.gradient_mean == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(f.laplacian_mean == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("ramp patch gradient equals the slope") {
    Plane ramp(5, 5);
    for (Eigen::Index c = 0; c < 5; ++c) ramp.col(c).setConstant(0.1 * c);
    const PatchFeatures f = patch_features(ramp, 2, 2, 1);
    CHECK(f.gradient_mean == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(f.laplacian_mean == doctest::Approx(0.0));
  }
}

TEST_CASE("twin model persistence round-trips at full precision") {
  const NoisyLabelSet train = make_noisy_set(30, 0.10, 4242);
  const auto fuzzy = assign_fuzzy_degrees(train.features, train.labels, 5);
  const TwinModel model = train_iftsvm(fuzzy, 10.0, 10.0);

  const auto dir = std::filesystem::temp_directory_path() / "vsm_iftsvm_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.txt";
  save_twin_model(model, path.string());
  const TwinModel back = load_twin_model(path.string());
  CHECK(back.w_pos == model.w_pos);
  CHECK(back.w_neg == model.w_neg);
  CHECK(back.b_pos == model.b_pos);
  CHECK(back.b_neg == model.b_neg);
  CHECK(back.feature_mean == model.feature_mean);

  // saving twice produces identical bytes
  const auto path2 = dir / "model2.txt";
  save_twin_model(model, path2.string());
  CHECK(slurp(path) == slurp(path2));

  CHECK_THROWS_AS(load_twin_model((dir / "missing.txt").string()), std::runtime_error);
  std::ofstream(dir / "bad.txt") << "not a model\n";
  CHECK_THROWS_AS(load_twin_model((dir / "bad.txt").string()), std::runtime_error);
}
