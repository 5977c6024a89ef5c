#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "relx/evalkit.hpp"

namespace relx {

// Flat key=value configuration for one run: values come from the config file
// first, then command-line overrides. Every command validates its own key set
// and rejects anything it does not understand.
struct RunConfig {
  std::string command;
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  const std::string& get(const std::string& key) const;  // ConfigError when absent
  std::string get_or(const std::string& key, const std::string& dflt) const;
  size_t get_size(const std::string& key, size_t dflt) const;
  uint64_t get_u64(const std::string& key, uint64_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
};

// Parses `key = value` lines; '#' starts a comment, blank lines are skipped,
// duplicate keys are rejected.
std::map<std::string, std::string> read_config_file(const std::string& path);

// Tuple prediction files: one JSON object per line, {"tuples": [[e1,e2,rel], ...]}.
void write_tuple_predictions(const std::string& path, const std::vector<TupleSet>& preds);
std::vector<TupleSet> read_tuple_predictions(const std::string& path);

// Classifier prediction files: {"predicted", "confidence", "gold"} per line.
void write_scored_predictions(const std::string& path,
                              const std::vector<ScoredPrediction>& preds);
std::vector<ScoredPrediction> read_scored_predictions(const std::string& path);

// Command dispatcher shared by the binary and in-process callers. args is
// argv without the program name. Returns the process exit status: 0 on
// success, 2 for configuration or data validation problems, 1 otherwise.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace relx
