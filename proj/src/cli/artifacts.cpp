#include "artifacts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cfaudit/csv.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/parallel.hpp"

namespace cfaudit::cli {

std::uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 15];
  return s;
}

Manifest::Manifest(std::string subcommand, fs::path out_dir)
    : subcommand_(std::move(subcommand)), dir_(std::move(out_dir)) {
  fs::create_directories(dir_);
}

void Manifest::add_input(const fs::path& path) {
  inputs_[path.string()] = "fnv1a64:" + hex64(fnv1a_file(path));
}

void Manifest::lap(const std::string& phase) {
  const auto now = std::chrono::steady_clock::now();
  timings_[phase] = std::chrono::duration<double>(now - last_).count();
  last_ = now;
}

void Manifest::write() const {
  Json j;
  j["format_version"] = kFormatVersion;
  j["subcommand"] = subcommand_;
  j["params"] = params_;
  j["seed"] = seed_;
  j["threads"] = num_threads();
  j["inputs"] = inputs_;
  j["artifacts"] = artifacts_;
  j["timings_seconds"] = timings_;
  write_text(dir_ / "manifest.json", j.dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json forest_params_json(const ForestParams& p) {
  Json j;
  j["num_trees"] = p.num_trees;
  j["subsample_ratio"] = p.subsample_ratio;
  j["honesty"] = p.honesty;
  j["honesty_ratio"] = p.honesty_ratio;
  j["min_leaf_size"] = p.min_leaf_size;
  j["max_depth"] = p.max_depth ? Json(*p.max_depth) : Json(nullptr);
  j["mtry"] = p.mtry;
  j["seed"] = p.seed;
  return j;
}

ForestParams forest_params_from_json(const Json& j) {
  ForestParams p;
  p.num_trees = j.at("num_trees").get<std::size_t>();
  p.subsample_ratio = j.at("subsample_ratio").get<double>();
  p.honesty = j.at("honesty").get<bool>();
  p.honesty_ratio = j.at("honesty_ratio").get<double>();
  p.min_leaf_size = j.at("min_leaf_size").get<std::size_t>();
  if (!j.at("max_depth").is_null()) p.max_depth = j.at("max_depth").get<std::size_t>();
  p.mtry = j.at("mtry").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

CsvColumns::CsvColumns(const fs::path& path) : path_(path) {
  require_artifact(path);
  CsvTable t = read_csv(path);
  header_ = std::move(t.header);
  rows_ = std::move(t.rows);
  table_rows_ = rows_.size();
}

bool CsvColumns::has(const std::string& name) const {
  return std::find(header_.begin(), header_.end(), name) != header_.end();
}

std::vector<double> CsvColumns::get(const std::string& name) const {
  const auto it = std::find(header_.begin(), header_.end(), name);
  if (it == header_.end()) throw DataError(path_.string() + ": missing column '" + name + "'");
  const auto c = static_cast<std::size_t>(it - header_.begin());
  std::vector<double> out(rows_.size());
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const auto v = parse_double(rows_[r][c]);
    if (!v) throw DataError(path_.string() + ": non-numeric value in column '" + name + "'");
    out[r] = *v;
  }
  return out;
}

void require_artifact(const fs::path& path) {
  if (!fs::exists(path)) {
    throw DataError("missing artifact " + path.string() + " (run `cfaudit fit` first)");
  }
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

void write_run_dataset(const fs::path& dir, const Dataset& d) {
  std::vector<std::string> extra;
  for (const auto& name : d.nuisance_names) {
    if (std::find(d.feature_names.begin(), d.feature_names.end(), name) == d.feature_names.end()) {
      extra.push_back(name);
    }
  }
  CsvWriter out(dir / "dataset.csv");
  out.field(d.treatment_name).field(d.outcome_name);
  for (const auto& name : d.feature_names) out.field(name);
  for (const auto& name : extra) out.field(name);
  out.end_row();
  for (std::size_t i = 0; i < d.n(); ++i) {
    out.field(d.w[i]).field(d.y[i]);
    for (std::size_t j = 0; j < d.p(); ++j) out.field(d.x(i, j));
    for (const auto& name : extra) {
      const auto j = static_cast<std::size_t>(
          std::find(d.nuisance_names.begin(), d.nuisance_names.end(), name) -
          d.nuisance_names.begin());
      out.field(d.x_nuisance(i, j));
    }
    out.end_row();
  }
  std::string schema = "treatment = " + d.treatment_name + "\noutcome = " + d.outcome_name +
                       "\nfeatures = " + join(d.feature_names) + "\n";
  if (!d.x_nuisance.empty()) schema += "nuisance_features = " + join(d.nuisance_names) + "\n";
  write_text(dir / "schema.txt", schema);
}

Dataset load_run_dataset(const fs::path& dir) {
  require_artifact(dir / "params.json");
  require_artifact(dir / "dataset.csv");
  require_artifact(dir / "schema.txt");
  return load_csv(dir / "dataset.csv", load_schema(dir / "schema.txt"));
}

FitRun load_fit_run(const fs::path& dir, bool load_forest_file) {
  FitRun run;
  run.dir = dir;
  require_artifact(dir / "params.json");
  try {
    run.params = Json::parse(read_text(dir / "params.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt artifact " + (dir / "params.json").string() + ": " + e.what());
  }
  const int version = run.params.value("format_version", -1);
  if (version != kFormatVersion) {
    throw DataError("artifact version mismatch in " + (dir / "params.json").string() + ": found " +
                    std::to_string(version) + ", expected " + std::to_string(kFormatVersion));
  }
  run.data = load_run_dataset(dir);

  run.pipeline.nuisance = forest_params_from_json(run.params.at("nuisance"));
  run.pipeline.causal = forest_params_from_json(run.params.at("causal"));
  run.pipeline.seed = run.params.at("seed").get<std::uint64_t>();
  run.pipeline.formula = parse_score_formula(run.params.at("score_formula").get<std::string>());
  run.pipeline.clamp = {run.params.at("clamp").at(0).get<double>(),
                        run.params.at("clamp").at(1).get<double>()};

  const CsvColumns centered(dir / "centered.csv");
  if (centered.rows() != run.data.n()) throw DataError("centered.csv row count does not match");
  CenteredData& c = run.centered;
  c.y_tilde = centered.get("y_tilde");
  c.w_tilde = centered.get("w_tilde");
  c.e_hat = centered.get("e_hat");
  c.e_hat_raw = centered.get("e_hat_raw");
  c.m_hat = centered.get("m_hat");
  c.treatment_type = run.data.treatment_type();
  c.clamp = run.pipeline.clamp;
  if (centered.has("m_hat_1")) {
    c.m_hat_1 = centered.get("m_hat_1");
    c.m_hat_0 = centered.get("m_hat_0");
  }
  for (std::size_t i = 0; i < c.n(); ++i) {
    if (c.e_hat[i] != c.e_hat_raw[i]) c.clamped_units.push_back(static_cast<std::uint32_t>(i));
  }

  const CsvColumns scores(dir / "scores.csv");
  if (scores.rows() != run.data.n()) throw DataError("scores.csv row count does not match");
  run.scores.gamma = scores.get("gamma");
  run.scores.formula = c.treatment_type == TreatmentType::kContinuous ? ScoreFormula::kResidual
                                                                      : run.pipeline.formula;
  run.tau_oob = scores.get("tau_oob");
  run.ate = estimate_ate(run.scores);

  if (load_forest_file) {
    require_artifact(dir / "causal.forest");
    run.forest.forest = load_forest(dir / "causal.forest");
    if (run.forest.forest.num_samples() != run.data.n() ||
        run.forest.forest.num_features() != run.data.p()) {
      throw DataError("causal.forest does not match the run's dataset");
    }
  }
  return run;
}

}  // namespace cfaudit::cli
