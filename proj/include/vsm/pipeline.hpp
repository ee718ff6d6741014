#pragma once

#include "vsm/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace vsm {

struct ReportRow {
  std::string condition;  // clean | <kind>:raw | <kind>:denoised | baseline:nn | baseline:random
  std::string filter;     // "none" or the filter string that produced the images
  std::uint64_t seed = 0;
  int index = 0;  // corpus index of the test image
  double mse_joints = 0.0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double psnr = 0.0;
};

struct RunReport {
  std::vector<ReportRow> rows;

  void write_csv(const std::string& path) const;  // long format, byte-deterministic
  void write_json(const std::string& path) const; // per-condition mean/std aggregates

  // mean of one metric over a condition's rows; throws DataError when absent
  double mean(const std::string& condition, const std::string& metric) const;
};

// Wall-clock per stage. Kept out of the CSV/JSON reports so those stay
// byte-identical across runs with the same seed.
struct StageTimes {
  std::vector<std::pair<std::string, double>> seconds;
  void write_json(const std::string& path) const;
};

// Directory layout inside an output root.
struct OutputLayout {
  std::string root;
  std::string config_copy() const { return root + "/config.ini"; }
  std::string corpus() const { return root + "/corpus"; }
  std::string corrupted(const std::string& kind) const { return root + "/corrupted/" + kind; }
  std::string denoised(const std::string& kind) const { return root + "/denoised/" + kind; }
  std::string masks(const std::string& cond_dir) const { return root + "/masks/" + cond_dir; }
  std::string models() const { return root + "/models"; }
  std::string segmenter_model() const { return models() + "/segmenter.txt"; }
  std::string twin_model() const { return models() + "/iftsvm.txt"; }
  std::string report_csv() const { return root + "/report.csv"; }
  std::string report_json() const { return root + "/report.json"; }
  std::string timings() const { return root + "/timings.json"; }
};

void cmd_generate(const PipelineConfig& cfg);
void cmd_corrupt(const PipelineConfig& cfg);
void cmd_denoise(const PipelineConfig& cfg);
void cmd_segment(const PipelineConfig& cfg);
RunReport cmd_evaluate(const PipelineConfig& cfg);

// generate -> corrupt -> denoise -> segment -> evaluate, with the config
// copied next to the results. Multi-seed configs run one sub-directory per
// seed and merge rows into the root report.
RunReport cmd_pipeline(const PipelineConfig& cfg, StageTimes* times = nullptr);

// Fast invariant battery; returns the number of failed checks.
int selftest(std::ostream& log);

}  // namespace vsm
