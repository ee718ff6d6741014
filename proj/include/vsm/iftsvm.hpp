#pragma once

#include "vsm/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace vsm {

// Labeled feature vector with intuitionistic fuzzy degrees. The combined
// score mu*(1-nu) down-weights outliers in training.
struct FuzzySample {
  Eigen::VectorXd features;
  int label = +1;  // +1 or -1
  double membership = 0.0;
  double nonmembership = 0.0;
  double score() const { return membership * (1.0 - nonmembership); }
};

// Two nonparallel hyperplanes, one per class, on standardized features.
struct TwinModel {
  Eigen::VectorXd w_pos, w_neg;
  double b_pos = 0.0, b_neg = 0.0;
  Eigen::VectorXd feature_mean, feature_scale;
  bool trained() const;
};

struct TrainDiagnostics {
  Eigen::VectorXd alpha_pos, alpha_neg;  // duals at convergence
  Eigen::VectorXd box_pos, box_neg;      // per-dual upper bounds c * s_j
  int sweeps_pos = 0, sweeps_neg = 0;
};

// mu from distance to the class centroid, nu from label disagreement among
// the k nearest neighbours, guaranteeing mu + nu <= 1.
std::vector<FuzzySample> assign_fuzzy_degrees(const std::vector<Eigen::VectorXd>& features,
                                              const std::vector<int>& labels, int k_nn);

// Two small box-constrained duals solved by projected coordinate ascent
// (tolerance 1e-8 on the largest dual change, at most 10000 sweeps).
TwinModel train_iftsvm(const std::vector<FuzzySample>& samples, double c_pos, double c_neg,
                       double ridge = 1e-6, TrainDiagnostics* diag = nullptr);

struct Classification {
  int label = +1;
  double margin_ratio = 1.0;  // far/near normalized distance, capped at 1e12
};

// Nearer hyperplane by |w.x+b|/|w| wins; exact tie goes to +1.
Classification classify(const TwinModel& model, const Eigen::VectorXd& x);

// Five luma-patch statistics used to tell structured patches from smooth ones.
struct PatchFeatures {
  double mean = 0.0;
  double variance = 0.0;
  double gradient_mean = 0.0;   // mean central-difference gradient magnitude
  double laplacian_mean = 0.0;  // mean |5-point Laplacian|
  double range = 0.0;
  Eigen::VectorXd vector() const;
  static constexpr int kDim = 5;
};

// Patch centered at (row, col) with reflect-101 sampling at borders.
PatchFeatures patch_features(const Plane& lum, Eigen::Index row, Eigen::Index col, int halfwidth);

void save_twin_model(const TwinModel& model, const std::string& path);
TwinModel load_twin_model(const std::string& path);

}  // namespace vsm
