#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace optree::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNoSolution = 3 };

int run(int argc, char** argv);
// Arguments exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct FlagInfo {
  std::string command;
  std::string name;           // long form, e.g. "--time-limit"
  std::string default_value;  // empty for required options and switches
  bool required = false;
  bool is_switch = false;
};

// Every flag of every subcommand, in registration order.
std::vector<FlagInfo> flag_registry();
std::vector<std::string> subcommands();
std::string help_text(const std::string& command);

}  // namespace optree::cli
