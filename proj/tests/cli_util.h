// Helpers for driving the command-line binary from tests.
#ifndef DUALDET_TESTS_CLI_UTIL_H_
#define DUALDET_TESTS_CLI_UTIL_H_

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace dualdet::testing {

namespace fs = std::filesystem;

inline std::string CliPath() { return DUALDET_CLI_PATH; }

inline fs::path FreshDir(const std::string& name) {
  const fs::path dir = fs::path(DUALDET_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the binary with `args` (already shell-quoted where needed).
inline CliRun RunCli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / ".stdout";
  const fs::path err = scratch / ".stderr";
  const std::string cmd =
      "'" + CliPath() + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = ReadFile(out);
  r.err = ReadFile(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

// File name -> contents for every regular file directly in dir.
inline std::map<std::string, std::string> Snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files[entry.path().filename().string()] = ReadFile(entry.path());
  }
  return files;
}

}  // namespace dualdet::testing

#endif  // DUALDET_TESTS_CLI_UTIL_H_
