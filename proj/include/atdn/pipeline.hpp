#pragma once

#include <iosfwd>
#include <string>

#include "atdn/config.hpp"

namespace atdn {

// One function per CLI subcommand. All outputs land under cfg.out_dir; inputs
// come from the cfg.paths entries. Throws ConfigError / DataError /
// NumericFault; the CLI maps those to exit codes 2 / 4 / 3.
void cmd_synth(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_flow_precompute(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_train_vo(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_infer_vo(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_train_map(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_build_map(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_relocalize(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_eval(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_plot(const RunConfig& cfg, bool quiet, std::ostream& log);
void cmd_report(const RunConfig& cfg, bool quiet, std::ostream& log);

// Dispatch by name; throws ConfigError for an unknown command.
void run_subcommand(const std::string& name, const RunConfig& cfg, bool quiet,
                    std::ostream& log);

}  // namespace atdn
