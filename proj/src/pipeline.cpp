#include "vsm/pipeline.hpp"

#include "vsm/arm_world.hpp"
#include "vsm/fft.hpp"
#include "vsm/iftsvm.hpp"
#include "vsm/image_io.hpp"
#include "vsm/metrics.hpp"
#include "vsm/rng.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace vsm {

namespace {

namespace fs = std::filesystem;

std::string img_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "image_%05d.ppm", index);
  return buf;
}

std::string mask_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mask_%05d.pgm", index);
  return buf;
}

// Exclusive lock file guarding an output root against concurrent runs.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::string& dir) : path_(dir + "/.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw DataError(dir + ": output directory is locked by another run (remove " + path_ +
                      " if stale)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.c_str(), pid.size());
    ::close(fd);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::string path_;
};

// Per-item work with deterministic outputs regardless of worker count; the
// first exception wins and is rethrown on the caller thread.
void parallel_for(int jobs, int count, const std::function<void(int)>& fn) {
  jobs = std::min(std::max(1, jobs), count > 0 ? count : 1);
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> guard(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

std::vector<int> test_indices(const PipelineConfig& cfg) {
  std::vector<int> out;
  const int first = train_count(cfg.corpus_n, cfg.train_fraction);
  for (int i = first; i < cfg.corpus_n; ++i) out.push_back(i);
  return out;
}

CorpusManifest require_manifest(const OutputLayout& layout) {
  const std::string path = layout.corpus() + "/manifest.csv";
  if (!fs::exists(path)) throw DataError(path + ": corpus not found; run 'generate' first");
  return load_manifest(path);
}

struct Condition {
  std::string name;       // e.g. "gauss:denoised"
  std::string dir_name;   // e.g. "gauss_denoised"
  std::string image_dir;  // where this condition's images live
  std::string filter;     // "none" or the producing filter string
};

// Report order: clean first, then raw/denoised per configured noise kind.
std::vector<Condition> enumerate_conditions(const PipelineConfig& cfg, const OutputLayout& layout,
                                            bool include_denoised) {
  std::vector<Condition> out;
  out.push_back({"clean", "clean", layout.corpus(), "none"});
  for (const auto& spec : cfg.noise) {
    const std::string kind = to_string(spec.kind);
    out.push_back({kind + ":raw", kind + "_raw", layout.corrupted(kind), "none"});
    if (include_denoised && cfg.filters.count(kind))
      out.push_back(
          {kind + ":denoised", kind + "_denoised", layout.denoised(kind), cfg.filters.at(kind)});
  }
  return out;
}

const NoiseSpec* find_noise(const PipelineConfig& cfg, NoiseKind kind) {
  for (const auto& s : cfg.noise)
    if (s.kind == kind) return &s;
  return nullptr;
}

TwinModel train_patch_model(const PipelineConfig& cfg, const OutputLayout& layout,
                            int patch_halfwidth) {
  const CorpusManifest manifest = require_manifest(layout);
  const int trains = train_count(cfg.corpus_n, cfg.train_fraction);
  const int source_images = std::min(trains, 50);
  if (source_images < 1) throw DataError("iftsvm: no training images available");

  Rng rng(derive_seed(cfg.seed, "iftsvm", 0));
  std::map<int, Plane> luma_cache;
  auto luma_of = [&](int idx) -> const Plane& {
    auto it = luma_cache.find(idx);
    if (it == luma_cache.end()) {
      const Image img = load_image(layout.corpus() + "/" + manifest[idx].image_path);
      it = luma_cache.emplace(idx, luma(img)).first;
    }
    return it->second;
  };

  const int samples = 1200;
  std::vector<Eigen::VectorXd> features;
  features.reserve(samples);
  std::vector<double> gradient;
  gradient.reserve(samples);
  for (int t = 0; t < samples; ++t) {
    const int idx = static_cast<int>(rng.uniform_index(source_images));
    const Plane& lum = luma_of(idx);
    const Eigen::Index r = static_cast<Eigen::Index>(rng.uniform_index(lum.rows()));
    const Eigen::Index c = static_cast<Eigen::Index>(rng.uniform_index(lum.cols()));
    const PatchFeatures f = patch_features(lum, r, c, patch_halfwidth);
    features.push_back(f.vector());
    gradient.push_back(f.gradient_mean);
  }

  // Structure labels from the 90th percentile of gradient magnitude on the
  // clean renders.
  std::vector<double> sorted = gradient;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[static_cast<std::size_t>(0.9 * (sorted.size() - 1))];
  std::vector<int> labels(samples);
  for (int t = 0; t < samples; ++t) labels[t] = gradient[t] >= threshold ? +1 : -1;

  const auto fuzzy = assign_fuzzy_degrees(features, labels, 7);
  return train_iftsvm(fuzzy, 10.0, 10.0);
}

Image apply_filter(const Image& img, const FilterChoice& filter, const NoiseSpec* blur_spec,
                   const TwinModel* twin) {
  switch (filter.kind) {
    case FilterChoice::Kind::Wiener: {
      if (!blur_spec) throw DataError("wiener: the blur noise spec (known kernel) is required");
      WienerConfig cfg;
      cfg.kernel = gaussian_kernel(blur_spec->sigma_blur, blur_spec->kernel_halfwidth);
      cfg.nsr = filter.nsr;
      return wiener_deblur(img, cfg);
    }
    case FilterChoice::Kind::Median:
      return median_filter(img, filter.median_halfwidth);
    case FilterChoice::Kind::Nlm:
      return nlm_denoise(img, filter.nlm);
    case FilterChoice::Kind::NlmIftsvm:
      if (!twin) throw DataError("nlm+iftsvm: patch model not available");
      return nlm_iftsvm_denoise(img, filter.nlm, *twin, filter.adaptive);
  }
  throw DataError("unknown filter kind");
}

ArmModel default_arm() { return ArmModel{}; }

// --- stages (lock-free; public wrappers hold the directory lock) -----------

void stage_generate(const PipelineConfig& cfg, const OutputLayout& layout) {
  const Background bg =
      Background::parse(cfg.background, derive_seed(cfg.seed, "background", 0));
  generate_corpus(default_arm(), cfg.corpus_n, cfg.train_fraction, bg,
                  derive_seed(cfg.seed, "generate", 0), cfg.width, cfg.height, layout.corpus());
}

void stage_corrupt(const PipelineConfig& cfg, const OutputLayout& layout) {
  const CorpusManifest manifest = require_manifest(layout);
  const std::vector<int> tests = test_indices(cfg);
  for (const auto& spec : cfg.noise) {
    const std::string kind = to_string(spec.kind);
    const std::string dir = layout.corrupted(kind);
    fs::create_directories(dir);
    const std::uint64_t base = spec.seed != 0 ? spec.seed : cfg.seed;
    parallel_for(cfg.jobs, static_cast<int>(tests.size()), [&](int t) {
      const int idx = tests[t];
      const Image clean = load_image(layout.corpus() + "/" + manifest[idx].image_path);
      NoiseSpec per_image = spec;
      per_image.seed = derive_seed(base, "corrupt:" + kind, static_cast<std::uint64_t>(idx));
      save_image(corrupt(clean, per_image), dir + "/" + img_name(idx));
    });
    std::ofstream note(dir + "/noise.txt", std::ios::trunc);
    note << spec.to_string() << "\n";
    fs::copy_file(layout.corpus() + "/manifest.csv", dir + "/manifest.csv",
                  fs::copy_options::overwrite_existing);
  }
}

void stage_denoise(const PipelineConfig& cfg, const OutputLayout& layout) {
  if (cfg.skip_denoise) return;
  const CorpusManifest manifest = require_manifest(layout);
  const std::vector<int> tests = test_indices(cfg);

  for (const auto& spec : cfg.noise) {
    const std::string kind = to_string(spec.kind);
    if (!cfg.filters.count(kind)) {
      std::string bindings;
      for (const auto& [k, v] : cfg.filters) bindings += " " + k + "=" + v;
      throw DataError("denoise: no filter bound for noise kind '" + kind + "'; bindings:" +
                      (bindings.empty() ? " (none)" : bindings));
    }
    const FilterChoice filter = FilterChoice::parse(cfg.filters.at(kind));
    const std::string src = layout.corrupted(kind);
    if (!fs::exists(src)) throw DataError(src + ": corrupted corpus missing; run 'corrupt' first");
    const std::string dir = layout.denoised(kind);
    fs::create_directories(dir);

    TwinModel twin;
    bool has_twin = false;
    if (filter.kind == FilterChoice::Kind::NlmIftsvm) {
      std::string model_path = filter.model_path;
      if (model_path.empty()) {
        model_path = layout.twin_model();
        if (!fs::exists(model_path)) {
          fs::create_directories(layout.models());
          save_twin_model(train_patch_model(cfg, layout, filter.nlm.patch_halfwidth), model_path);
        }
      }
      twin = load_twin_model(model_path);
      has_twin = true;
    }
    const NoiseSpec* blur_spec = find_noise(cfg, NoiseKind::Blur);

    std::vector<std::pair<double, double>> psnr_log(tests.size());
    parallel_for(cfg.jobs, static_cast<int>(tests.size()), [&](int t) {
      const int idx = tests[t];
      const Image clean = load_image(layout.corpus() + "/" + manifest[idx].image_path);
      const Image noisy = load_image(src + "/" + img_name(idx));
      const Image restored = apply_filter(noisy, filter, blur_spec, has_twin ? &twin : nullptr);
      save_image(restored, dir + "/" + img_name(idx));
      psnr_log[t] = {psnr(noisy, clean), psnr(restored, clean)};
    });

    std::ofstream log(dir + "/denoise_log.csv", std::ios::trunc);
    log << "kind,index,psnr_corrupted,psnr_denoised\n";
    char buf[128];
    for (std::size_t t = 0; t < tests.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g\n", kind.c_str(), tests[t],
                    psnr_log[t].first, psnr_log[t].second);
      log << buf;
    }
    std::ofstream note(dir + "/filter.txt", std::ios::trunc);
    note << filter.to_string() << "\n";
  }
}

SegModel obtain_seg_model(const PipelineConfig& cfg, const OutputLayout& layout,
                          const CorpusManifest& manifest) {
  const std::string path = layout.segmenter_model();
  if (fs::exists(path)) return load_seg_model(path);
  if (!cfg.allow_training)
    throw DataError(path + ": segmenter model missing and training is disabled");

  const int trains = train_count(cfg.corpus_n, cfg.train_fraction);
  std::vector<TrainingPair> pairs;
  pairs.reserve(trains);
  for (int i = 0; i < trains; ++i) {
    TrainingPair pair;
    pair.image = load_image(layout.corpus() + "/" + manifest[i].image_path);
    pair.mask = load_mask(layout.corpus() + "/" + manifest[i].mask_path);
    pairs.push_back(std::move(pair));
  }
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = derive_seed(cfg.seed, "segmenter", 0);
  const SegModel model = train_segmenter(pairs, cfg.encoding, train_cfg);
  fs::create_directories(layout.models());
  save_seg_model(model, path);
  return model;
}

void stage_segment(const PipelineConfig& cfg, const OutputLayout& layout) {
  const CorpusManifest manifest = require_manifest(layout);
  const std::vector<int> tests = test_indices(cfg);
  const SegModel model = obtain_seg_model(cfg, layout, manifest);

  struct SegRow {
    std::string condition;
    int index;
    double iou_v, f1_v, precision_v, recall_v;
  };
  std::vector<SegRow> log_rows;

  auto segment_dir = [&](const Condition& cond) {
    if (!fs::exists(cond.image_dir)) return false;
    fs::create_directories(layout.masks(cond.dir_name));
    std::vector<SegRow> rows(tests.size());
    parallel_for(cfg.jobs, static_cast<int>(tests.size()), [&](int t) {
      const int idx = tests[t];
      const Image img = load_image(cond.image_dir + "/" +
                                   (cond.name == "clean" ? manifest[idx].image_path : img_name(idx)));
      const Mask predicted = infer_mask(model, img);
      save_mask(predicted, layout.masks(cond.dir_name) + "/" + mask_name(idx));
      const Mask gt = load_mask(layout.corpus() + "/" + manifest[idx].mask_path);
      const ConfusionCounts counts = confusion(predicted, gt);
      const PrecisionRecallF1 prf = precision_recall_f1(counts);
      rows[t] = {cond.name, idx, iou(counts), prf.f1, prf.precision, prf.recall};
    });
    log_rows.insert(log_rows.end(), rows.begin(), rows.end());
    return true;
  };

  for (const auto& cond : enumerate_conditions(cfg, layout, !cfg.skip_denoise))
    segment_dir(cond);

  // Color-threshold baseline on the clean test images.
  fs::create_directories(layout.masks("baseline_color"));
  std::vector<SegRow> baseline_rows(tests.size());
  parallel_for(cfg.jobs, static_cast<int>(tests.size()), [&](int t) {
    const int idx = tests[t];
    const Image img = load_image(layout.corpus() + "/" + manifest[idx].image_path);
    const Mask predicted = color_threshold_baseline(img, cfg.white_threshold);
    save_mask(predicted, layout.masks("baseline_color") + "/" + mask_name(idx));
    const Mask gt = load_mask(layout.corpus() + "/" + manifest[idx].mask_path);
    const ConfusionCounts counts = confusion(predicted, gt);
    const PrecisionRecallF1 prf = precision_recall_f1(counts);
    baseline_rows[t] = {"baseline:color", idx, iou(counts), prf.f1, prf.precision, prf.recall};
  });
  log_rows.insert(log_rows.end(), baseline_rows.begin(), baseline_rows.end());

  std::ofstream log(layout.root + "/masks/seg_log.csv", std::ios::trunc);
  log << "condition,index,iou,f1,precision,recall\n";
  char buf[160];
  for (const auto& row : log_rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g,%.10g,%.10g\n", row.condition.c_str(),
                  row.index, row.iou_v, row.f1_v, row.precision_v, row.recall_v);
    log << buf;
  }
}

RunReport stage_evaluate(const PipelineConfig& cfg, const OutputLayout& layout) {
  const CorpusManifest manifest = require_manifest(layout);
  const std::vector<int> tests = test_indices(cfg);
  const ArmModel arm = default_arm();

  const auto conditions = enumerate_conditions(cfg, layout, !cfg.skip_denoise);
  std::string missing;
  for (const auto& cond : conditions)
    if (!fs::exists(layout.masks(cond.dir_name))) missing += " " + cond.name;
  if (!missing.empty())
    throw DataError("evaluate: predicted masks missing for conditions:" + missing +
                    "; run 'segment' first");

  RunReport report;
  for (const auto& cond : conditions) {
    std::vector<ReportRow> rows(tests.size());
    parallel_for(cfg.jobs, static_cast<int>(tests.size()), [&](int t) {
      const int idx = tests[t];
      const Mask predicted = load_mask(layout.masks(cond.dir_name) + "/" + mask_name(idx));
      const Mask gt = load_mask(layout.corpus() + "/" + manifest[idx].mask_path);

      PoseFit fit;
      if ((predicted != 0).count() == 0) {
        fit.pose = Pose{};  // nothing to fit against; score the rest pose
        fit.iou = 0.0;
      } else {
        fit = fit_arm_pose(predicted, arm);
      }
      const double mse =
          mse_points(forward_kinematics(arm, fit.pose), forward_kinematics(arm, manifest[idx].pose));

      const ConfusionCounts counts = confusion(predicted, gt);
      const PrecisionRecallF1 prf = precision_recall_f1(counts);

      double psnr_v = 99.0;
      if (cond.name != "clean") {
        const Image clean = load_image(layout.corpus() + "/" + manifest[idx].image_path);
        const Image conditioned = load_image(cond.image_dir + "/" + img_name(idx));
        psnr_v = psnr(conditioned, clean);
      }
      rows[t] = {cond.name, cond.filter, cfg.seed, idx, mse,
                 iou(counts), prf.precision, prf.recall, prf.f1, psnr_v};
    });
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }

  if (cfg.eval_baselines) {
    const int trains = train_count(cfg.corpus_n, cfg.train_fraction);
    std::vector<Mask> train_masks(trains);
    for (int i = 0; i < trains; ++i)
      train_masks[i] = load_mask(layout.corpus() + "/" + manifest[i].mask_path);

    // Nearest neighbour: best training mask by IoU against the clean-condition
    // predicted mask; report that training pose's joint error.
    std::vector<ReportRow> nn_rows(tests.size());
    parallel_for(cfg.jobs, static_cast<int>(tests.size()), [&](int t) {
      const int idx = tests[t];
      const Mask query = load_mask(layout.masks("clean") + "/" + mask_name(idx));
      const Mask gt = load_mask(layout.corpus() + "/" + manifest[idx].mask_path);
      int best = 0;
      double best_iou = -1.0;
      for (int i = 0; i < trains; ++i) {
        const double v = iou(confusion(train_masks[i], query));
        if (v > best_iou) {
          best_iou = v;
          best = i;
        }
      }
      const double mse = mse_points(forward_kinematics(arm, manifest[best].pose),
                                    forward_kinematics(arm, manifest[idx].pose));
      const ConfusionCounts counts = confusion(train_masks[best], gt);
      const PrecisionRecallF1 prf = precision_recall_f1(counts);
      nn_rows[t] = {"baseline:nn", "none", cfg.seed, idx, mse,
                    iou(counts), prf.precision, prf.recall, prf.f1, 99.0};
    });
    report.rows.insert(report.rows.end(), nn_rows.begin(), nn_rows.end());

    std::vector<ReportRow> random_rows(tests.size());
    parallel_for(cfg.jobs, static_cast<int>(tests.size()), [&](int t) {
      const int idx = tests[t];
      Rng rng(derive_seed(cfg.seed, "eval-random", static_cast<std::uint64_t>(idx)));
      Pose pose;
      do {
        for (int j = 0; j < 4; ++j) pose.angles(j) = rng.uniform(-kJointLimit, kJointLimit);
      } while (!pose_in_frame(arm, pose));
      const double mse = mse_points(forward_kinematics(arm, pose),
                                    forward_kinematics(arm, manifest[idx].pose));
      const Mask gt = load_mask(layout.corpus() + "/" + manifest[idx].mask_path);
      const ConfusionCounts counts =
          confusion(render_mask(arm, pose, cfg.width, cfg.height), gt);
      const PrecisionRecallF1 prf = precision_recall_f1(counts);
      random_rows[t] = {"baseline:random", "none", cfg.seed, idx, mse,
                        iou(counts), prf.precision, prf.recall, prf.f1, 99.0};
    });
    report.rows.insert(report.rows.end(), random_rows.begin(), random_rows.end());
  }

  const std::size_t expected =
      (conditions.size() + (cfg.eval_baselines ? 2 : 0)) * tests.size();
  if (report.rows.size() != expected)
    throw DataError("evaluate: report is incomplete (" + std::to_string(report.rows.size()) +
                    " rows, expected " + std::to_string(expected) + ")");

  report.write_csv(layout.report_csv());
  report.write_json(layout.report_json());
  return report;
}

RunReport run_single(const PipelineConfig& cfg, StageTimes* times) {
  const OutputLayout layout{cfg.out_dir};
  std::ofstream copy(layout.config_copy(), std::ios::trunc);
  copy << cfg.to_ini().serialize();
  copy.close();

  RunReport report;
  auto timed = [&](const char* name, const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    if (times) times->seconds.emplace_back(name, elapsed.count());
  };
  timed("generate", [&] { stage_generate(cfg, layout); });
  timed("corrupt", [&] { stage_corrupt(cfg, layout); });
  timed("denoise", [&] { stage_denoise(cfg, layout); });
  timed("segment", [&] { stage_segment(cfg, layout); });
  timed("evaluate", [&] { report = stage_evaluate(cfg, layout); });
  return report;
}

}  // namespace

void RunReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "condition,filter,seed,index,mse_joints,iou,precision,recall,f1,psnr\n";
  char buf[320];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  r.condition.c_str(), r.filter.c_str(), static_cast<unsigned long long>(r.seed),
                  r.index, r.mse_joints, r.iou, r.precision, r.recall, r.f1, r.psnr);
    out << buf;
  }
  if (!out) throw DataError(path + ": write failed");
}

void RunReport::write_json(const std::string& path) const {
  using json = nlohmann::ordered_json;
  json root;
  root["row_count"] = rows.size();

  std::vector<std::string> order;
  std::map<std::string, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    if (!groups.count(r.condition)) order.push_back(r.condition);
    groups[r.condition].push_back(&r);
  }

  json conditions = json::object();
  for (const auto& name : order) {
    const auto& g = groups[name];
    auto stat = [&](auto getter) {
      double mean = 0.0;
      for (const auto* r : g) mean += getter(*r);
      mean /= static_cast<double>(g.size());
      double var = 0.0;
      for (const auto* r : g) var += (getter(*r) - mean) * (getter(*r) - mean);
      var /= static_cast<double>(g.size());
      return std::make_pair(mean, std::sqrt(var));
    };
    const auto [mse_m, mse_s] = stat([](const ReportRow& r) { return r.mse_joints; });
    const auto [iou_m, iou_s] = stat([](const ReportRow& r) { return r.iou; });
    const auto [pre_m, pre_s] = stat([](const ReportRow& r) { return r.precision; });
    const auto [rec_m, rec_s] = stat([](const ReportRow& r) { return r.recall; });
    const auto [f1_m, f1_s] = stat([](const ReportRow& r) { return r.f1; });
    const auto [psnr_m, psnr_s] = stat([](const ReportRow& r) { return r.psnr; });
    json c;
    c["filter"] = g.front()->filter;
    c["count"] = g.size();
    c["mean"] = {{"mse_joints", mse_m}, {"iou", iou_m},   {"precision", pre_m},
                 {"recall", rec_m},     {"f1", f1_m},     {"psnr", psnr_m}};
    c["std"] = {{"mse_joints", mse_s},  {"iou", iou_s},   {"precision", pre_s},
                {"recall", rec_s},      {"f1", f1_s},     {"psnr", psnr_s}};
    conditions[name] = std::move(c);
  }
  root["conditions"] = std::move(conditions);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << root.dump(2) << "\n";
}

double RunReport::mean(const std::string& condition, const std::string& metric) const {
  double acc = 0.0;
  int count = 0;
  for (const auto& r : rows) {
    if (r.condition != condition) continue;
    ++count;
    if (metric == "mse_joints")
      acc += r.mse_joints;
    else if (metric == "iou")
      acc += r.iou;
    else if (metric == "precision")
      acc += r.precision;
    else if (metric == "recall")
      acc += r.recall;
    else if (metric == "f1")
      acc += r.f1;
    else if (metric == "psnr")
      acc += r.psnr;
    else
      throw DataError("report: unknown metric '" + metric + "'");
  }
  if (count == 0) throw DataError("report: no rows for condition '" + condition + "'");
  return acc / count;
}

void StageTimes::write_json(const std::string& path) const {
  nlohmann::ordered_json root;
  for (const auto& [name, secs] : seconds) root[name] = secs;
  std::ofstream out(path, std::ios::trunc);
  out << root.dump(2) << "\n";
}

void cmd_generate(const PipelineConfig& cfg) {
  cfg.validate();
  const OutputLayout layout{cfg.out_dir};
  DirectoryLock lock(layout.root);
  stage_generate(cfg, layout);
}

void cmd_corrupt(const PipelineConfig& cfg) {
  cfg.validate();
  const OutputLayout layout{cfg.out_dir};
  DirectoryLock lock(layout.root);
  stage_corrupt(cfg, layout);
}

void cmd_denoise(const PipelineConfig& cfg) {
  cfg.validate();
  const OutputLayout layout{cfg.out_dir};
  DirectoryLock lock(layout.root);
  stage_denoise(cfg, layout);
}

void cmd_segment(const PipelineConfig& cfg) {
  cfg.validate();
  const OutputLayout layout{cfg.out_dir};
  DirectoryLock lock(layout.root);
  stage_segment(cfg, layout);
}

RunReport cmd_evaluate(const PipelineConfig& cfg) {
  cfg.validate();
  const OutputLayout layout{cfg.out_dir};
  DirectoryLock lock(layout.root);
  return stage_evaluate(cfg, layout);
}

RunReport cmd_pipeline(const PipelineConfig& cfg, StageTimes* times) {
  cfg.validate();
  const OutputLayout layout{cfg.out_dir};
  DirectoryLock lock(layout.root);

  const auto seeds = cfg.effective_seeds();
  RunReport merged;
  if (seeds.size() == 1) {
    PipelineConfig single = cfg;
    single.seed = seeds[0];
    single.seeds.clear();
    merged = run_single(single, times);
  } else {
    for (const auto s : seeds) {
      PipelineConfig sub = cfg;
      sub.seed = s;
      sub.seeds.clear();
      sub.out_dir = cfg.out_dir + "/seed_" + std::to_string(s);
      fs::create_directories(sub.out_dir);
      const RunReport part = run_single(sub, times);
      merged.rows.insert(merged.rows.end(), part.rows.begin(), part.rows.end());
    }
    std::ofstream copy(layout.config_copy(), std::ios::trunc);
    copy << cfg.to_ini().serialize();
    merged.write_csv(layout.report_csv());
    merged.write_json(layout.report_json());
  }
  if (times) times->write_json(layout.timings());
  return merged;
}

int selftest(std::ostream& log) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    log << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  {
    Rng a(123), b(123);
    bool same = true;
    for (int i = 0; i < 100; ++i) same = same && a.next_u64() == b.next_u64();
    check("rng: identical seeds give identical streams", same);
    check("rng: stream splitting separates stages",
          derive_seed(1, "alpha", 0) != derive_seed(1, "beta", 0) &&
              derive_seed(1, "alpha", 0) != derive_seed(1, "alpha", 1));
  }
  {
    const Kernel k = gaussian_kernel(1.0, 1);
    check("kernel: weights sum to 1", std::abs(k.weights.sum() - 1.0) < 1e-9);
    check("kernel: corner/center ratio is e^-1",
          std::abs(k.weights(0, 0) / k.weights(1, 1) - std::exp(-1.0)) < 1e-12);
  }
  {
    Rng rng(7);
    Plane p(13, 7);
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = rng.uniform();
    const Plane back = ifft2(fft2(p));
    check("fft: round-trip within 1e-8", (back - p).abs().maxCoeff() < 1e-8);
    const Spectrum s = fft2(Plane(Plane::Constant(5, 4, 0.25)));
    check("fft: constant image concentrates at DC",
          std::abs(s(0, 0) - std::complex<double>(5.0, 0.0)) < 1e-9);
  }
  {
    const double pairs[4][2] = {
        {0.7070, 0.8283}, {0.6690, 0.8017}, {0.7027, 0.8254}, {0.2531, 0.4040}};
    bool ok = true;
    for (const auto& p : pairs) ok = ok && std::abs(2 * p[0] / (1 + p[0]) - p[1]) < 1e-3;
    check("metrics: F1 = 2*IoU/(1+IoU) on reference pairs", ok);
  }
  {
    Rng rng(11);
    Image img(16, 16, 1);
    for (Eigen::Index r = 0; r < 16; ++r)
      for (Eigen::Index c = 0; c < 16; ++c) img.planes[0](r, c) = rng.uniform();
    NlmConfig cfg;
    cfg.h = 0.1;
    cfg.patch_halfwidth = 1;
    cfg.window_halfwidth = 3;
    NlmStats stats;
    nlm_denoise(img, cfg, &stats);
    check("nlm: per-pixel weights sum to 1 within 1e-6", stats.max_weight_sum_error < 1e-6);
  }
  {
    const Image base(128, 128, 1, 0.5);
    const Image noisy = add_salt_pepper(base, NoiseSpec::salt_pepper(0.1, 99));
    std::int64_t changed = 0;
    for (Eigen::Index r = 0; r < 128; ++r)
      for (Eigen::Index c = 0; c < 128; ++c)
        if (noisy.planes[0](r, c) != 0.5) ++changed;
    const double fraction = static_cast<double>(changed) / (128.0 * 128.0);
    check("noise: salt-pepper corruption fraction near p", std::abs(fraction - 0.1) < 0.015);
  }
  {
    Rng rng(21);
    std::vector<Eigen::VectorXd> feats;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
      Eigen::VectorXd v(2);
      const int label = i % 2 ? +1 : -1;
      v << rng.normal() + 2.0 * label, rng.normal();
      feats.push_back(v);
      labels.push_back(label);
    }
    bool ok = true;
    for (const auto& s : assign_fuzzy_degrees(feats, labels, 5))
      ok = ok && s.membership + s.nonmembership <= 1.0 + 1e-12;
    check("iftsvm: mu + nu <= 1 for every sample", ok);
  }
  {
    const ArmModel arm;
    Pose up;
    const JointPositions j = forward_kinematics(arm, up);
    const double total =
        arm.link_lengths[0] + arm.link_lengths[1] + arm.link_lengths[2] + arm.link_lengths[3];
    check("arm: zero pose points straight up",
          std::abs(j(4, 0) - arm.base.x()) < 1e-12 &&
              std::abs(j(4, 1) - (arm.base.y() + total)) < 1e-12);
    Pose bent;
    bent.angles << kJointLimit, 0, 0, 0;
    const JointPositions jb = forward_kinematics(arm, bent);
    check("arm: quarter-turn base joint points right",
          std::abs(jb(4, 0) - (arm.base.x() + total)) < 1e-12 &&
              std::abs(jb(4, 1) - arm.base.y()) < 1e-12);
  }
  {
    const ArmModel arm;
    const Background bg{BackgroundKind::White, 5};
    const Image backdrop = render_background(bg, 100, 100);
    Pose pose;
    pose.angles << 0.4, -0.3, 0.5, 0.2;
    const RenderResult a = render(arm, pose, backdrop);
    const RenderResult b = render(arm, pose, backdrop);
    bool identical = (a.mask == b.mask).all();
    for (int ch = 0; ch < 3; ++ch)
      identical = identical && (a.image.planes[ch] == b.image.planes[ch]).all();
    check("arm: rendering is deterministic", identical);
    const Mask thresholded = color_threshold_baseline(a.image, 0.8);
    check("segmenter: white-background threshold recovers the silhouette",
          iou(confusion(thresholded, a.mask)) >= 0.98);
    const PoseFit fit = fit_arm_pose(a.mask, arm);
    bool close = fit.iou >= 0.99;
    for (int jnt = 0; jnt < 4; ++jnt)
      close = close && std::abs(fit.pose.angles(jnt) - pose.angles(jnt)) <= kJointLimit / 90.0;
    check("arm: pose fit recovers an exactly rendered mask", close);
  }
  return failures;
}

}  // namespace vsm
