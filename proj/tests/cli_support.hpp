#pragma once

// Runs the riskgate binary and prepares synthetic input files for it.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "riskgate/dataset.hpp"
#include "synthetic.hpp"

#ifndef RISKGATE_CLI_PATH
#error "RISKGATE_CLI_PATH must point at the riskgate binary"
#endif

namespace riskgate::testing {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

// Exit status of `riskgate args...`; stdout/stderr go to log.
inline int run_cli(const std::vector<std::string>& args, const std::filesystem::path& log) {
  std::string cmd = shell_quote(RISKGATE_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " >" + shell_quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

// Synthetic model outputs for every instance in an instances file.
inline std::filesystem::path outputs_for(const std::filesystem::path& instances_file,
                                         std::uint64_t seed) {
  const auto instances = load_instances(instances_file);
  auto path = instances_file;
  path.replace_extension(".outputs.jsonl");
  write_outputs(path, synthetic_outputs(instances, seed));
  return path;
}

}  // namespace riskgate::testing
