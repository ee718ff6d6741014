// Batch harness for the noise-robust self-modeling benchmark: generates the
// synthetic arm corpus, injects seeded corruptions, restores, segments, fits
// poses and reports metrics. Exit codes: 0 success, 2 config error, 3 data
// error, 4 selftest invariant violation.

#include "vsm/config.hpp"
#include "vsm/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
  bool skip_denoise = false;
};

vsm::PipelineConfig resolve_config(const CLI::App& app, const GlobalFlags& flags) {
  vsm::PipelineConfig cfg = flags.config_path.empty()
                                ? vsm::PipelineConfig::defaults()
                                : vsm::PipelineConfig::from_ini(
                                      vsm::IniFile::parse_file(flags.config_path));
  if (app.count("--out")) cfg.out_dir = flags.out_dir;
  if (app.count("--seed")) {
    cfg.seed = flags.seed;
    cfg.seeds.clear();
  }
  if (app.count("--jobs")) cfg.jobs = flags.jobs;
  if (app.count("--skip-denoise")) cfg.skip_denoise = flags.skip_denoise;
  return cfg;
}

void print_summary(const vsm::RunReport& report, const vsm::StageTimes& times) {
  std::cout << "stage timings:\n";
  for (const auto& [name, secs] : times.seconds)
    std::cout << "  " << name << ": " << secs << " s\n";
  std::cout << "condition means (mse_joints / iou / f1 / psnr):\n";
  std::string last;
  for (const auto& row : report.rows) {
    if (row.condition == last) continue;
    last = row.condition;
    std::cout << "  " << row.condition << ": " << report.mean(row.condition, "mse_joints") << " / "
              << report.mean(row.condition, "iou") << " / " << report.mean(row.condition, "f1")
              << " / " << report.mean(row.condition, "psnr") << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noise-robust visual self-modeling benchmark harness"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "INI config file (defaults used when absent)")
      ->envname("VSMBENCH_CONFIG");
  app.add_option("--out", flags.out_dir, "output directory")->envname("VSMBENCH_OUT");
  app.add_option("--seed", flags.seed, "master seed")->envname("VSMBENCH_SEED");
  app.add_option("--jobs", flags.jobs, "worker threads for per-image stages")
      ->envname("VSMBENCH_JOBS");
  app.add_flag("--skip-denoise", flags.skip_denoise, "drop the denoised condition groups")
      ->envname("VSMBENCH_SKIP_DENOISE");

  auto* generate = app.add_subcommand("generate", "render the arm corpus and manifest");
  auto* corrupt = app.add_subcommand("corrupt", "inject each configured noise condition");
  auto* denoise = app.add_subcommand("denoise", "apply the task-matched restoration filters");
  auto* segment = app.add_subcommand("segment", "train/load the segmenter and emit masks");
  auto* evaluate = app.add_subcommand("evaluate", "fit poses and write metric reports");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage end to end");
  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (selftest->parsed()) {
      const int failures = vsm::selftest(std::cout);
      if (failures > 0) {
        std::cout << failures << " invariant check(s) failed\n";
        return 4;
      }
      std::cout << "all invariant checks passed\n";
      return 0;
    }

    const vsm::PipelineConfig cfg = resolve_config(app, flags);
    if (generate->parsed()) {
      vsm::cmd_generate(cfg);
    } else if (corrupt->parsed()) {
      vsm::cmd_corrupt(cfg);
    } else if (denoise->parsed()) {
      vsm::cmd_denoise(cfg);
    } else if (segment->parsed()) {
      vsm::cmd_segment(cfg);
    } else if (evaluate->parsed()) {
      vsm::cmd_evaluate(cfg);
    } else if (pipeline->parsed()) {
      vsm::StageTimes times;
      const vsm::RunReport report = vsm::cmd_pipeline(cfg, &times);
      print_summary(report, times);
    }
  } catch (const vsm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vsm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
