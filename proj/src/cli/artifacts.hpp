#pragma once

#include <chrono>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "cfaudit/causal.hpp"
#include "cfaudit/data.hpp"

namespace cfaudit::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

std::uint64_t fnv1a_file(const fs::path& path);
std::string hex64(std::uint64_t v);

// One manifest.json per output directory.
class Manifest {
 public:
  Manifest(std::string subcommand, fs::path out_dir);
  Json& params() { return params_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const fs::path& path);
  void add_artifact(const std::string& name) { artifacts_.push_back(name); }
  // Records the seconds since the previous lap (or construction).
  void lap(const std::string& phase);
  void write() const;
  const fs::path& dir() const { return dir_; }

 private:
  std::string subcommand_;
  fs::path dir_;
  Json params_ = Json::object();
  std::uint64_t seed_ = 0;
  Json inputs_ = Json::object();
  std::vector<std::string> artifacts_;
  Json timings_ = Json::object();
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

Json forest_params_json(const ForestParams& p);
ForestParams forest_params_from_json(const Json& j);

// Named numeric columns of a CSV file.
class CsvColumns {
 public:
  explicit CsvColumns(const fs::path& path);
  bool has(const std::string& name) const;
  std::vector<double> get(const std::string& name) const;
  std::size_t rows() const { return table_rows_; }

 private:
  fs::path path_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::size_t table_rows_ = 0;
};

// Everything `fit` leaves in a run directory.
struct FitRun {
  fs::path dir;
  Json params;
  Dataset data;
  CenteredData centered;
  CausalForest forest;
  DrScores scores;
  std::vector<double> tau_oob;
  CateEstimate ate;
  PipelineParams pipeline;
};

// Throws DataError naming the first missing artifact.
FitRun load_fit_run(const fs::path& dir, bool load_forest_file = true);
// The run's dataset alone (for commands that refit).
Dataset load_run_dataset(const fs::path& dir);
void require_artifact(const fs::path& path);

// Writes the imputed dataset plus a schema that reloads it exactly.
void write_run_dataset(const fs::path& dir, const Dataset& d);

}  // namespace cfaudit::cli
