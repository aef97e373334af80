// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mdal::cli {

enum ExitCode : int {
  kOk = 0,
  kRuntimeFailure = 1,
  kInvalidInput = 2,
  kRefusedOverwrite = 3,
};

struct RunOptions {
  std::filesystem::path config;
  std::filesystem::path out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::vector<std::string>> strategies;
  std::size_t jobs = 1;
  bool force = false;
};

/// Runs the (strategy × seed) grid; writes `<stem>.csv` + `<stem>.json` per run.
int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);
/// Writes one CSV per domain plus manifest.json.
int cmd_synth(const std::filesystem::path& spec, const std::filesystem::path& out_dir,
              std::ostream& out, std::ostream& err);
/// Prints the AULC table ("text" or "csv").
int cmd_report(const std::filesystem::path& dir, const std::string& format, std::ostream& out,
               std::ostream& err);
/// Writes mean learning curves (CSV) and one SVG per dataset into `<dir>/curves`.
int cmd_curves(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

/// Argument parsing and dispatch for the `mdalbench` executable.
int main(int argc, char** argv);

}  // namespace mdal::cli
