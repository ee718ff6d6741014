#pragma once

#include "vsm/noise.hpp"
#include "vsm/restoration.hpp"
#include "vsm/segmenter.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vsm {

// Exit-code contract: ConfigError -> 2, DataError -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal INI: [section], key = value, '#' comments. Order-preserving so a
// config copied into the output directory round-trips byte-for-byte.
struct IniFile {
  using Section = std::vector<std::pair<std::string, std::string>>;
  std::vector<std::pair<std::string, Section>> sections;

  const std::string* find(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);
  std::string serialize() const;
  static IniFile parse_string(const std::string& text);
  static IniFile parse_file(const std::string& path);
};

// Restoration filter selection, harness-level.
// Strings: wiener:nsr=1e-3 | median:k=1 | nlm:h=0.04,patch=3,window=10
//        | nlm+iftsvm:h=...,patch=...,window=...,ae=0.6,as=1.4,model=PATH
struct FilterChoice {
  enum class Kind { Wiener, Median, Nlm, NlmIftsvm };
  Kind kind = Kind::Median;
  double nsr = 1e-3;
  int median_halfwidth = 1;
  NlmConfig nlm;
  NlmAdaptiveParams adaptive;
  std::string model_path;  // empty -> model trained and stored by the run

  static FilterChoice parse(const std::string& text);
  std::string to_string() const;
};

struct PipelineConfig {
  // corpus
  int corpus_n = 600;
  double train_fraction = 5.0 / 6.0;
  int width = 100;
  int height = 100;
  std::string background = "leaves";

  // noise conditions, in report order
  std::vector<NoiseSpec> noise;

  // noise kind name -> filter string (each kind bound to at most one filter)
  std::map<std::string, std::string> filters;

  // segmenter
  EncodingConfig encoding;
  TrainConfig train;
  bool allow_training = true;
  double white_threshold = 0.8;

  // evaluation
  bool eval_baselines = true;

  // run
  std::string out_dir = "runs/default";
  std::uint64_t seed = 42;
  std::vector<std::uint64_t> seeds;  // multi-seed sweeps; defaults to {seed}
  int jobs = 1;
  bool skip_denoise = false;

  static PipelineConfig defaults();
  static PipelineConfig from_ini(const IniFile& ini);
  IniFile to_ini() const;
  void validate() const;
  std::vector<std::uint64_t> effective_seeds() const;
};

}  // namespace vsm
