#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace cfaudit::cli {

// Union of every subcommand's flags; each subcommand binds only its own.
struct Options {
  std::string input;
  std::string schema;
  std::string out;
  std::string query;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;

  // forest / pipeline
  std::optional<std::size_t> trees;
  std::optional<std::size_t> nuisance_trees;
  std::optional<std::size_t> min_leaf;
  std::optional<double> subsample;
  std::string honesty = "on";
  std::string score_formula = "aipw";
  std::string clamp = "0.02,0.98";

  // schema overrides
  std::string treatment;
  std::string outcome;
  std::string features;
  std::optional<std::string> missing_token;
  bool missing_indicators = false;

  // synth
  std::string preset = "confounded";
  std::size_t n = 2000;
  std::size_t p = 5;

  // downstream
  std::string sizes = "1,10,100,1000";
  std::optional<std::size_t> baseline;
  std::size_t permutations = 0;  // 0: exact when feasible
  std::size_t rows = 20;
  std::size_t background = 500;
  std::size_t min_category_count = 100;
  std::string categorical;
  std::string test = "placebo";
  std::size_t seeds = 1;
  std::string kind = "representative";
  double decay = 0.5;
  std::size_t max_depth = 4;
  bool svg = false;
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

void cmd_synth(const Options& o, Streams s);
void cmd_fit(const Options& o, Streams s);
void cmd_estimate(const Options& o, Streams s);
void cmd_importance(const Options& o, Streams s);
void cmd_shap(const Options& o, Streams s);
void cmd_tree(const Options& o, Streams s);
void cmd_rashomon(const Options& o, Streams s);
void cmd_blp(const Options& o, Streams s);
void cmd_refute(const Options& o, Streams s);
void cmd_report(const Options& o, Streams s);

}  // namespace cfaudit::cli
