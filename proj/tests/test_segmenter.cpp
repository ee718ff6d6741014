#include "vsm/segmenter.hpp"

#include "vsm/metrics.hpp"
#include "vsm/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace vsm;

TEST_CASE("positional_encode") {
  SUBCASE("origin gives zero sines and unit cosines") {
    const Eigen::VectorXd v = positional_encode(0.0, 0.0, 3);
    CHECK(v.size() == 2 + 4 * 3);
    CHECK(v(0) == 0.0);
    CHECK(v(1) == 0.0);
    for (int l = 0; l < 3; ++l) {
      CHECK(v(2 + 2 * l) == doctest::Approx(0.0));      // sin bands of x
      CHECK(v(2 + 2 * l + 1) == doctest::Approx(1.0));  // cos bands of x
      CHECK(v(8 + 2 * l) == doctest::Approx(0.0));
      CHECK(v(8 + 2 * l + 1) == doctest::Approx(1.0));
    }
  }
  SUBCASE("center point at one band") {
    const Eigen::VectorXd v = positional_encode(0.5, 0.5, 1);
    CHECK(v.size() == 6);
    CHECK(v(0) == 0.5);
    CHECK(v(1) == 0.5);
    CHECK(v(2) == doctest::Approx(1.0).epsilon(1e-15));  // sin(pi/2)
    CHECK(v(3) == doctest::Approx(0.0));                 // cos(pi/2)
    CHECK(v(4) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(v(5) == doctest::Approx(0.0));
  }
  SUBCASE("zero bands keeps only the raw coordinates") {
    const Eigen::VectorXd v = positional_encode(0.3, 0.7, 0);
    CHECK(v.size() == 2);
    CHECK(v(0) == 0.3);
    CHECK(v(1) == 0.7);
  }
  SUBCASE("encoded length bookkeeping") {
    EncodingConfig enc;
    enc.bands = 6;
    enc.include_rgb = true;
    CHECK(enc.encoded_length() == 2 + 24 + 3);
    enc.include_rgb = false;
    CHECK(enc.encoded_length() == 26);
  }
}

TEST_CASE("cross_entropy_loss") {
  Mask mask(1, 2);
  mask << 0, 1;
  SUBCASE("saturated correct logits approach zero loss") {
    LogitPair logits{Plane(1, 2), Plane(1, 2)};
    logits[0] << 1e6, -1e6;
    logits[1] << -1e6, 1e6;
    CHECK(cross_entropy_loss(logits, mask) == doctest::Approx(0.0));
  }
  SUBCASE("uniform logits cost ln 2") {
    LogitPair logits{Plane::Zero(1, 2), Plane::Zero(1, 2)};
    CHECK(cross_entropy_loss(logits, mask) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("single pixel, logits (1,0), true class 0") {
    Mask one(1, 1);
    one << 0;
    LogitPair logits{Plane(1, 1), Plane(1, 1)};
    logits[0] << 1.0;
    logits[1] << 0.0;
    CHECK(cross_entropy_loss(logits, one) ==
          doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(cross_entropy_loss(logits, one) == doctest::Approx(0.31326168751822286).epsilon(1e-12));
  }
  SUBCASE("shape mismatch is rejected") {
    LogitPair logits{Plane::Zero(2, 2), Plane::Zero(2, 2)};
    CHECK_THROWS_AS(cross_entropy_loss(logits, mask), std::invalid_argument);
  }
}

TEST_CASE("analytic gradients match central finite differences on a 4x4 fixture") {
  Rng rng(99);
  const int d_in = 7, hidden = 5, batch = 16;  // 4x4 pixels
  SegModel model;
  model.encoding.bands = 1;
  model.w1 = Eigen::MatrixXd::NullaryExpr(hidden, d_in, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform(-0.7, 0.7);
  });
  model.b1 = Eigen::VectorXd::NullaryExpr(hidden, [&](Eigen::Index) { return rng.uniform(-0.3, 0.3); });
  model.w2 = Eigen::MatrixXd::NullaryExpr(2, hidden, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform(-0.7, 0.7);
  });
  model.b2 = Eigen::VectorXd::NullaryExpr(2, [&](Eigen::Index) { return rng.uniform(-0.3, 0.3); });

  Eigen::MatrixXd features(d_in, batch);
  std::vector<int> labels(batch);
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < d_in; ++j) features(j, i) = rng.uniform(-1.0, 1.0);
    labels[i] = rng.uniform() < 0.5 ? 0 : 1;
  }

  MlpGradients grad;
  mlp_loss_and_grad(model, features, labels, &grad);

  const double step = 1e-5;
  auto check_entry = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + step;
    const double hi = mlp_loss_and_grad(model, features, labels, nullptr);
    param = keep - step;
    const double lo = mlp_loss_and_grad(model, features, labels, nullptr);
    param = keep;
    const double numeric = (hi - lo) / (2 * step);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    CHECK(std::abs(numeric - analytic) / denom < 1e-4);
  };
  for (Eigen::Index r = 0; r < model.w1.rows(); ++r)
    for (Eigen::Index c = 0; c < model.w1.cols(); ++c) check_entry(model.w1(r, c), grad.w1(r, c));
  for (Eigen::Index r = 0; r < model.w2.rows(); ++r)
    for (Eigen::Index c = 0; c < model.w2.cols(); ++c) check_entry(model.w2(r, c), grad.w2(r, c));
  for (Eigen::Index i = 0; i < model.b1.size(); ++i) check_entry(model.b1(i), grad.b1(i));
  for (Eigen::Index i = 0; i < model.b2.size(); ++i) check_entry(model.b2(i), grad.b2(i));
}

namespace {

TrainingPair left_half_pair(int size) {
  TrainingPair pair;
  pair.image = Image(size, size, 3, 0.5);  // colors carry no information
  pair.mask = Mask(size, size);
  for (Eigen::Index r = 0; r < size; ++r)
    for (Eigen::Index c = 0; c < size; ++c)
      pair.mask(r, c) = (static_cast<double>(c) + 0.5) / size < 0.5 ? 1 : 0;
  return pair;
}

}  // namespace

TEST_CASE("coordinates alone separate an x < 0.5 dataset within 200 epochs") {
  const TrainingPair pair = left_half_pair(20);
  EncodingConfig enc;
  enc.bands = 4;
  enc.include_rgb = true;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 200;
  cfg.minibatch = 256;
  cfg.batches_per_epoch = 4;
  cfg.hidden = 12;
  cfg.seed = 3;
  const SegModel model = train_segmenter({pair}, enc, cfg);
  const Mask predicted = infer_mask(model, pair.image);
  CHECK(iou(confusion(predicted, pair.mask)) >= 0.99);
}

TEST_CASE("a single all-background image trains to constant background") {
  TrainingPair pair;
  pair.image = Image(12, 12, 3, 0.6);
  pair.mask = Mask::Zero(12, 12);
  EncodingConfig enc;
  enc.bands = 2;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.minibatch = 128;
  cfg.batches_per_epoch = 2;
  cfg.hidden = 8;
  cfg.seed = 5;
  const SegModel model = train_segmenter({pair}, enc, cfg);
  CHECK((infer_mask(model, pair.image) == 0).all());
  CHECK(model.final_loss < 0.01);
}

TEST_CASE("training is deterministic given the seed") {
  const TrainingPair pair = left_half_pair(12);
  EncodingConfig enc;
  enc.bands = 2;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.minibatch = 64;
  cfg.batches_per_epoch = 2;
  cfg.hidden = 6;
  cfg.seed = 17;
  const SegModel a = train_segmenter({pair}, enc, cfg);
  const SegModel b = train_segmenter({pair}, enc, cfg);
  CHECK(a.w1 == b.w1);
  CHECK(a.b1 == b.b1);
  CHECK(a.w2 == b.w2);
  CHECK(a.b2 == b.b2);
  CHECK(a.final_loss == b.final_loss);
}

TEST_CASE("infer_mask argmax and tie rules via hand-built models") {
  SegModel model;
  model.encoding.bands = 0;
  model.encoding.include_rgb = false;  // d_in = 2
  model.w1 = Eigen::MatrixXd::Zero(1, 2);
  model.b1 = Eigen::VectorXd::Zero(1);
  model.w2 = Eigen::MatrixXd::Zero(2, 1);
  model.b2 = Eigen::VectorXd::Zero(2);
  const Image img(3, 3, 1, 0.5);

  SUBCASE("higher background logit wins") {
    model.b2 << 2.0, 1.0;
    CHECK((infer_mask(model, img) == 0).all());
  }
  SUBCASE("higher robot logit wins") {
    model.b2 << 0.5, 1.0;
    CHECK((infer_mask(model, img) == 1).all());
  }
  SUBCASE("exact ties resolve to background") {
    model.b2 << 1.0, 1.0;
    CHECK((infer_mask(model, img) == 0).all());
  }
}

TEST_CASE("apply_mask") {
  Image img(2, 2, 3, 0.8);
  Mask ones = Mask::Constant(2, 2, 1);
  Mask zeros = Mask::Zero(2, 2);
  Mask checker(2, 2);
  checker << 1, 0, 0, 1;

  SUBCASE("all-ones mask is the identity") {
    const Image out = apply_mask(img, ones);
    for (int ch = 0; ch < 3; ++ch) CHECK((out.planes[ch] == img.planes[ch]).all());
  }
  SUBCASE("all-zeros mask blacks out the image") {
    const Image out = apply_mask(img, zeros);
    for (int ch = 0; ch < 3; ++ch) CHECK((out.planes[ch] == 0.0).all());
  }
  SUBCASE("checkerboard masks pixel by pixel, idempotently") {
    const Image once = apply_mask(img, checker);
    CHECK(once.planes[0](0, 0) == 0.8);
    CHECK(once.planes[0](0, 1) == 0.0);
    CHECK(once.planes[1](1, 0) == 0.0);
    CHECK(once.planes[2](1, 1) == 0.8);
    const Image twice = apply_mask(once, checker);
    for (int ch = 0; ch < 3; ++ch) CHECK((twice.planes[ch] == once.planes[ch]).all());
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(apply_mask(img, Mask::Zero(3, 3)), std::invalid_argument);
  }
}

TEST_CASE("color_threshold_baseline") {
  SUBCASE("all-white image is all background") {
    CHECK((color_threshold_baseline(Image(4, 4, 3, 1.0), 0.8) == 0).all());
  }
  SUBCASE("a dark object on white is marked robot") {
    Image img(4, 4, 3, 1.0);
    for (int ch = 0; ch < 3; ++ch) img.planes[ch](1, 2) = 0.1;
    const Mask m = color_threshold_baseline(img, 0.8);
    CHECK(m(1, 2) == 1);
    CHECK(m.cast<int>().sum() == 1);
  }
  SUBCASE("a colorful pixel fails the near-white test even when bright") {
    Image img(1, 1, 3);
    img.planes[0](0, 0) = 0.95;
    img.planes[1](0, 0) = 0.95;
    img.planes[2](0, 0) = 0.3;  // saturated color, min channel low
    CHECK(color_threshold_baseline(img, 0.8)(0, 0) == 1);
  }
  SUBCASE("threshold bounds are enforced") {
    CHECK_THROWS_AS(color_threshold_baseline(Image(2, 2, 3, 1.0), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(color_threshold_baseline(Image(2, 2, 3, 1.0), 0.0), std::invalid_argument);
  }
}

TEST_CASE("segmenter model persistence round-trips inference") {
  const TrainingPair pair = left_half_pair(10);
  EncodingConfig enc;
  enc.bands = 2;
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.minibatch = 64;
  cfg.batches_per_epoch = 2;
  cfg.hidden = 6;
  cfg.seed = 7;
  const SegModel model = train_segmenter({pair}, enc, cfg);

  const auto dir = std::filesystem::temp_directory_path() / "vsm_segmenter_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.txt").string();
  save_seg_model(model, path);
  const SegModel back = load_seg_model(path);
  CHECK(back.w1 == model.w1);
  CHECK(back.b2 == model.b2);
  CHECK(back.encoding.bands == model.encoding.bands);
  CHECK((infer_mask(back, pair.image) == infer_mask(model, pair.image)).all());

  CHECK_THROWS_AS(load_seg_model((dir / "missing.txt").string()), std::runtime_error);
}

TEST_CASE("train_segmenter rejects bad inputs") {
  EncodingConfig enc;
  TrainConfig cfg;
  CHECK_THROWS_AS(train_segmenter({}, enc, cfg), std::invalid_argument);

  TrainingPair a = left_half_pair(8), b = left_half_pair(10);
  CHECK_THROWS_AS(train_segmenter({a, b}, enc, cfg), std::invalid_argument);

  TrainingPair bad = left_half_pair(8);
  bad.mask = Mask::Zero(4, 4);
  CHECK_THROWS_AS(train_segmenter({bad}, enc, cfg), std::invalid_argument);

  TrainConfig zero_lr;
  zero_lr.learning_rate = 0.0;
  CHECK_THROWS_AS(train_segmenter({a}, enc, zero_lr), std::invalid_argument);
}
