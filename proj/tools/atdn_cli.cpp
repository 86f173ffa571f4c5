// Command-line front end for the vSLAM pipeline: synthetic data generation,
// precomputed optical flow, curriculum VO training, embedding-map training,
// relocalization and KITTI-style evaluation. Exit codes: 0 ok, 1 usage,
// 2 config/missing input, 3 numeric fault, 4 malformed data, 5 internal.

#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "atdn/errors.hpp"
#include "atdn/pipeline.hpp"

namespace {

void apply_thread_cap() {
  if (const char* env = std::getenv("ATDN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"ATDN vSLAM pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  bool quiet = false;
  app.add_option("--config", config_path, "key = value configuration file")
      ->required();
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--out", out_override, "override the output directory");
  app.add_flag("--quiet", quiet, "suppress progress output");

  const char* names[] = {"synth",     "flow-precompute", "train-vo",
                         "infer-vo",  "train-map",       "build-map",
                         "relocalize", "eval",           "plot",
                         "report"};
  for (const char* name : names) app.add_subcommand(name);

  CLI11_PARSE(app, argc, argv);

  try {
    const atdn::ConfigReport report =
        atdn::validate_config_file(config_path, seed_override, out_override);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    if (!report.errors.empty()) {
      for (const auto& e : report.errors) std::cerr << "config error: " << e << "\n";
      return 2;
    }
    atdn::run_subcommand(app.get_subcommands().front()->get_name(),
                         report.config, quiet, std::cout);
    return 0;
  } catch (const atdn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const atdn::NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return 3;
  } catch (const atdn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
}
