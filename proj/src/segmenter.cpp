#include "vsm/segmenter.hpp"

#include "vsm/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace vsm {

namespace {

constexpr double kPi = 3.14159265358979323846;

// sin/cos at frequencies 2^l pi t, interleaved; 2*bands values.
void coord_bands(double t, int bands, double* out) {
  for (int l = 0; l < bands; ++l) {
    const double angle = std::ldexp(kPi * t, l);
    out[2 * l] = std::sin(angle);
    out[2 * l + 1] = std::cos(angle);
  }
}

// Per-axis band tables so whole-image encoding costs O(H+W) trig calls.
struct BandTables {
  Eigen::MatrixXd col_bands;  // (2*bands) x W, bands of x = (c+0.5)/W
  Eigen::MatrixXd row_bands;  // (2*bands) x H, bands of y = (r+0.5)/H
  Eigen::VectorXd xs, ys;

  BandTables(Eigen::Index h, Eigen::Index w, int bands) {
    col_bands.resize(2 * bands, w);
    row_bands.resize(2 * bands, h);
    xs.resize(w);
    ys.resize(h);
    for (Eigen::Index c = 0; c < w; ++c) {
      xs(c) = (static_cast<double>(c) + 0.5) / static_cast<double>(w);
      if (bands > 0) coord_bands(xs(c), bands, col_bands.col(c).data());
    }
    for (Eigen::Index r = 0; r < h; ++r) {
      ys(r) = (static_cast<double>(r) + 0.5) / static_cast<double>(h);
      if (bands > 0) coord_bands(ys(r), bands, row_bands.col(r).data());
    }
  }
};

void fill_feature_column(const Image& img, const BandTables& tables, const EncodingConfig& enc,
                         Eigen::Index r, Eigen::Index c, double* dst) {
  const int bands = enc.bands;
  dst[0] = tables.xs(c);
  dst[1] = tables.ys(r);
  for (int i = 0; i < 2 * bands; ++i) dst[2 + i] = tables.col_bands(i, c);
  for (int i = 0; i < 2 * bands; ++i) dst[2 + 2 * bands + i] = tables.row_bands(i, r);
  if (enc.include_rgb) {
    double* rgb = dst + 2 + 4 * bands;
    if (img.channels() == 3) {
      rgb[0] = img.planes[0](r, c);
      rgb[1] = img.planes[1](r, c);
      rgb[2] = img.planes[2](r, c);
    } else {
      rgb[0] = rgb[1] = rgb[2] = img.planes[0](r, c);
    }
  }
}

struct ForwardPass {
  Eigen::MatrixXd hidden;  // tanh activations
  Eigen::MatrixXd logits;  // 2 x batch
};

ForwardPass forward(const SegModel& model, const Eigen::MatrixXd& features) {
  ForwardPass fw;
  fw.hidden = ((model.w1 * features).colwise() + model.b1).array().tanh();
  fw.logits = (model.w2 * fw.hidden).colwise() + model.b2;
  return fw;
}

}  // namespace

Eigen::VectorXd positional_encode(double x, double y, int bands) {
  if (bands < 0) throw std::invalid_argument("positional_encode: bands must be >= 0");
  Eigen::VectorXd v(2 + 4 * bands);
  v(0) = x;
  v(1) = y;
  if (bands > 0) {
    coord_bands(x, bands, v.data() + 2);
    coord_bands(y, bands, v.data() + 2 + 2 * bands);
  }
  return v;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("segmenter: learning rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("segmenter: epochs must be >= 1");
  if (minibatch < 1) throw std::invalid_argument("segmenter: minibatch must be >= 1");
  if (batches_per_epoch < 1) throw std::invalid_argument("segmenter: batches_per_epoch must be >= 1");
  if (hidden < 1) throw std::invalid_argument("segmenter: hidden width must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("segmenter: momentum in [0,1)");
}

double cross_entropy_loss(const LogitPair& logits, const Mask& mask) {
  const Eigen::Index h = mask.rows(), w = mask.cols();
  if (logits[0].rows() != h || logits[0].cols() != w || logits[1].rows() != h ||
      logits[1].cols() != w)
    throw std::invalid_argument("cross_entropy_loss: logit/mask shapes disagree");
  double loss = 0.0;
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      const double l0 = logits[0](r, c), l1 = logits[1](r, c);
      const double m = std::max(l0, l1);
      const double log_z = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
      const double l_true = mask(r, c) ? l1 : l0;
      loss += log_z - l_true;
    }
  return loss / (static_cast<double>(h) * static_cast<double>(w));
}

double mlp_loss_and_grad(const SegModel& model, const Eigen::MatrixXd& features,
                         const std::vector<int>& labels, MlpGradients* grad) {
  const Eigen::Index batch = features.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw std::invalid_argument("mlp_loss_and_grad: label count mismatch");
  ForwardPass fw = forward(model, features);

  double loss = 0.0;
  Eigen::MatrixXd dlogits(2, batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double l0 = fw.logits(0, i), l1 = fw.logits(1, i);
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    const double z = e0 + e1;
    const double p0 = e0 / z, p1 = e1 / z;
    loss += (m + std::log(z)) - (labels[i] ? l1 : l0);
    dlogits(0, i) = p0 - (labels[i] ? 0.0 : 1.0);
    dlogits(1, i) = p1 - (labels[i] ? 1.0 : 0.0);
  }
  loss /= static_cast<double>(batch);

  if (grad) {
    dlogits /= static_cast<double>(batch);
    grad->w2.noalias() = dlogits * fw.hidden.transpose();
    grad->b2 = dlogits.rowwise().sum();
    Eigen::MatrixXd dhidden =
        (model.w2.transpose() * dlogits).array() * (1.0 - fw.hidden.array().square());
    grad->w1.noalias() = dhidden * features.transpose();
    grad->b1 = dhidden.rowwise().sum();
  }
  return loss;
}

SegModel train_segmenter(const std::vector<TrainingPair>& pairs, const EncodingConfig& enc,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (enc.bands < 0) throw std::invalid_argument("train_segmenter: bands must be >= 0");
  if (pairs.empty()) throw std::invalid_argument("train_segmenter: need at least one pair");
  const Eigen::Index h = pairs[0].image.height(), w = pairs[0].image.width();
  for (const auto& p : pairs) {
    if (p.image.height() != h || p.image.width() != w)
      throw std::invalid_argument("train_segmenter: inconsistent image sizes");
    if (p.mask.rows() != h || p.mask.cols() != w)
      throw std::invalid_argument("train_segmenter: mask/image size mismatch");
  }

  const int d_in = enc.encoded_length();
  SegModel model;
  model.encoding = enc;
  model.seed = cfg.seed;

  Rng init_rng(derive_seed(cfg.seed, "seg-init", 0));
  auto xavier = [&](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = init_rng.uniform(-limit, limit);
    return m;
  };
  model.w1 = xavier(cfg.hidden, d_in);
  model.b1 = Eigen::VectorXd::Zero(cfg.hidden);
  model.w2 = xavier(2, cfg.hidden);
  model.b2 = Eigen::VectorXd::Zero(2);

  const BandTables tables(h, w, enc.bands);
  Rng batch_rng(derive_seed(cfg.seed, "seg-batch", 0));

  Eigen::MatrixXd features(d_in, cfg.minibatch);
  std::vector<int> labels(cfg.minibatch);
  MlpGradients grad;
  Eigen::MatrixXd vel_w1 = Eigen::MatrixXd::Zero(cfg.hidden, d_in);
  Eigen::VectorXd vel_b1 = Eigen::VectorXd::Zero(cfg.hidden);
  Eigen::MatrixXd vel_w2 = Eigen::MatrixXd::Zero(2, cfg.hidden);
  Eigen::VectorXd vel_b2 = Eigen::VectorXd::Zero(2);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int step = 0; step < cfg.batches_per_epoch; ++step) {
      for (int i = 0; i < cfg.minibatch; ++i) {
        const auto& pair = pairs[batch_rng.uniform_index(pairs.size())];
        const Eigen::Index r = static_cast<Eigen::Index>(batch_rng.uniform_index(h));
        const Eigen::Index c = static_cast<Eigen::Index>(batch_rng.uniform_index(w));
        fill_feature_column(pair.image, tables, enc, r, c, features.col(i).data());
        labels[i] = pair.mask(r, c);
      }
      const double loss = mlp_loss_and_grad(model, features, labels, &grad);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_segmenter: training diverged (non-finite loss)");
      vel_w1 = cfg.momentum * vel_w1 - cfg.learning_rate * grad.w1;
      vel_b1 = cfg.momentum * vel_b1 - cfg.learning_rate * grad.b1;
      vel_w2 = cfg.momentum * vel_w2 - cfg.learning_rate * grad.w2;
      vel_b2 = cfg.momentum * vel_b2 - cfg.learning_rate * grad.b2;
      model.w1 += vel_w1;
      model.b1 += vel_b1;
      model.w2 += vel_w2;
      model.b2 += vel_b2;
    }
  }

  // Final loss on a fresh deterministic subsample.
  Rng eval_rng(derive_seed(cfg.seed, "seg-eval", 0));
  const int eval_count = 4096;
  Eigen::MatrixXd eval_features(d_in, eval_count);
  std::vector<int> eval_labels(eval_count);
  for (int i = 0; i < eval_count; ++i) {
    const auto& pair = pairs[eval_rng.uniform_index(pairs.size())];
    const Eigen::Index r = static_cast<Eigen::Index>(eval_rng.uniform_index(h));
    const Eigen::Index c = static_cast<Eigen::Index>(eval_rng.uniform_index(w));
    fill_feature_column(pair.image, tables, enc, r, c, eval_features.col(i).data());
    eval_labels[i] = pair.mask(r, c);
  }
  model.final_loss = mlp_loss_and_grad(model, eval_features, eval_labels, nullptr);
  return model;
}

Eigen::MatrixXd encode_image_features(const Image& img, const EncodingConfig& enc) {
  const Eigen::Index h = img.height(), w = img.width();
  const BandTables tables(h, w, enc.bands);
  Eigen::MatrixXd features(enc.encoded_length(), h * w);
  Eigen::Index col = 0;
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      fill_feature_column(img, tables, enc, r, c, features.col(col++).data());
  return features;
}

LogitPair segment_logits(const SegModel& model, const Image& img) {
  if (!model.trained()) throw std::invalid_argument("segment_logits: model is untrained");
  const Eigen::MatrixXd features = encode_image_features(img, model.encoding);
  const ForwardPass fw = forward(model, features);
  const Eigen::Index h = img.height(), w = img.width();
  LogitPair out{Plane(h, w), Plane(h, w)};
  Eigen::Index col = 0;
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c, ++col) {
      out[0](r, c) = fw.logits(0, col);
      out[1](r, c) = fw.logits(1, col);
    }
  return out;
}

Mask infer_mask(const SegModel& model, const Image& img) {
  const LogitPair logits = segment_logits(model, img);
  return (logits[1] > logits[0]).cast<std::uint8_t>();
}

Image apply_mask(const Image& img, const Mask& mask) {
  if (img.height() != mask.rows() || img.width() != mask.cols())
    throw std::invalid_argument("apply_mask: image/mask dimensions disagree");
  Image out = img;
  const Plane gate = mask.cast<double>();
  for (auto& plane : out.planes) plane *= gate;
  return out;
}

Mask color_threshold_baseline(const Image& img, double white_threshold) {
  if (!(white_threshold > 0.0 && white_threshold < 1.0))
    throw std::invalid_argument("color_threshold_baseline: threshold must be in (0,1)");
  Plane min_channel = img.planes[0];
  for (int ch = 1; ch < img.channels(); ++ch)
    min_channel = min_channel.min(img.planes[ch]);
  return (min_channel < white_threshold).cast<std::uint8_t>();
}

void save_seg_model(const SegModel& model, const std::string& path) {
  if (!model.trained()) throw std::invalid_argument("save_seg_model: model is untrained");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "segmodel v1\n";
  out << "bands " << model.encoding.bands << "\n";
  out << "include_rgb " << (model.encoding.include_rgb ? 1 : 0) << "\n";
  out << "layers " << model.w1.cols() << " " << model.w1.rows() << " 2\n";
  out << "seed " << model.seed << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", model.final_loss);
  out << "final_loss " << buf << "\n";
  auto dump = [&](const char* name, const Eigen::MatrixXd& m) {
    out << name << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << buf << (c + 1 == m.cols() ? "" : " ");
      }
      out << "\n";
    }
  };
  dump("w1", model.w1);
  dump("b1", model.b1);
  dump("w2", model.w2);
  dump("b2", model.b2);
  if (!out) throw std::runtime_error(path + ": write failed");
}

SegModel load_seg_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::string line, tag;
  std::getline(in, line);
  if (line != "segmodel v1") throw std::runtime_error(path + ": not a segmenter model file");
  SegModel model;
  int include_rgb = 0, d_in = 0, hidden = 0, out_dim = 0;
  in >> tag >> model.encoding.bands;
  if (tag != "bands") throw std::runtime_error(path + ": bad bands line");
  in >> tag >> include_rgb;
  if (tag != "include_rgb") throw std::runtime_error(path + ": bad include_rgb line");
  model.encoding.include_rgb = include_rgb != 0;
  in >> tag >> d_in >> hidden >> out_dim;
  if (tag != "layers" || out_dim != 2) throw std::runtime_error(path + ": bad layers line");
  if (d_in != model.encoding.encoded_length())
    throw std::runtime_error(path + ": layer width disagrees with encoding");
  in >> tag >> model.seed;
  if (tag != "seed") throw std::runtime_error(path + ": bad seed line");
  in >> tag >> model.final_loss;
  if (tag != "final_loss") throw std::runtime_error(path + ": bad final_loss line");
  auto slurp = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
    in >> tag;
    if (tag != name) throw std::runtime_error(path + ": expected '" + name + "' block");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        if (!(in >> m(r, c))) throw std::runtime_error(path + ": truncated model file");
    return m;
  };
  model.w1 = slurp("w1", hidden, d_in);
  model.b1 = slurp("b1", hidden, 1);
  model.w2 = slurp("w2", 2, hidden);
  model.b2 = slurp("b2", 2, 1);
  return model;
}

}  // namespace vsm
