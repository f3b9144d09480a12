#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "cfaudit/cli.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/parallel.hpp"
#include "commands.hpp"

namespace cfaudit::cli {

namespace {

using Handler = void (*)(const Options&, Streams);

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "Random seed (default 42, or the fit run's seed)");
  sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  sub->add_option("--out", o.out, "Output directory");
}

void add_run_input(CLI::App* sub, Options& o) {
  sub->add_option("--input", o.input, "Run directory written by `fit`")->required();
}

void add_forest_flags(CLI::App* sub, Options& o) {
  sub->add_option("--trees", o.trees, "Causal forest trees");
  sub->add_option("--nuisance-trees", o.nuisance_trees, "Trees per nuisance forest");
  sub->add_option("--min-leaf", o.min_leaf, "Minimum estimation samples per leaf");
  sub->add_option("--subsample", o.subsample, "Per-tree subsample fraction in (0, 1]");
  sub->add_option("--honesty", o.honesty, "Honest splitting")->check(CLI::IsMember({"on", "off"}));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal forest estimation and audit toolkit", "cfaudit"};
  app.require_subcommand(1);
  Options o;
  std::vector<std::pair<CLI::App*, Handler>> subs;

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with known effects");
  add_common(synth, o);
  synth->add_option("--preset", o.preset, "confounded|randomized|step|linear|interaction|continuous");
  synth->add_option("--n", o.n, "Rows");
  synth->add_option("--p", o.p, "Covariates");
  subs.emplace_back(synth, cmd_synth);

  auto* fit = app.add_subcommand("fit", "Fit nuisance models, the causal forest and scores");
  add_common(fit, o);
  add_forest_flags(fit, o);
  fit->add_option("--input", o.input, "Input CSV")->required();
  fit->add_option("--schema", o.schema, "Schema file (key = column)");
  fit->add_option("--treatment", o.treatment, "Treatment column (default w)");
  fit->add_option("--outcome", o.outcome, "Outcome column (default y)");
  fit->add_option("--features", o.features, "Comma-separated feature columns");
  fit->add_option("--missing-token", o.missing_token, "Cell text meaning missing");
  fit->add_flag("--missing-indicators", o.missing_indicators,
                "Add a 0/1 column per covariate that has missing cells");
  fit->add_option("--score-formula", o.score_formula, "Binary-treatment score")
      ->check(CLI::IsMember({"aipw", "paper"}));
  fit->add_option("--clamp", o.clamp, "Propensity clamp bounds lo,hi");
  subs.emplace_back(fit, cmd_fit);

  auto* estimate = app.add_subcommand("estimate", "Per-row CATE with standard errors");
  add_common(estimate, o);
  add_run_input(estimate, o);
  estimate->add_option("--query", o.query, "CSV of covariate rows (default: training rows)");
  subs.emplace_back(estimate, cmd_estimate);

  auto* importance = app.add_subcommand("importance", "Depth-weighted split-count importance");
  add_common(importance, o);
  add_run_input(importance, o);
  importance->add_option("--decay", o.decay, "Weight ratio between consecutive depths");
  importance->add_option("--max-depth", o.max_depth, "Deepest split level counted");
  subs.emplace_back(importance, cmd_importance);

  auto* shap = app.add_subcommand("shap", "Shapley attributions of the CATE estimate");
  add_common(shap, o);
  add_run_input(shap, o);
  shap->add_option("--query", o.query, "CSV of rows to explain");
  shap->add_option("--rows", o.rows, "Explain the first N training rows");
  shap->add_option("--permutations", o.permutations, "Use permutation sampling (0 = exact)");
  shap->add_option("--background", o.background, "Background rows");
  shap->add_flag("--svg", o.svg, "Also write SVG plots");
  subs.emplace_back(shap, cmd_shap);

  auto* tree = app.add_subcommand("tree", "Representative or distilled single tree");
  add_common(tree, o);
  add_run_input(tree, o);
  tree->add_option("--kind", o.kind, "representative|distilled")
      ->check(CLI::IsMember({"representative", "distilled"}));
  tree->add_option("--max-depth", o.max_depth, "Distilled tree depth");
  tree->add_option("--min-leaf", o.min_leaf, "Distilled tree minimum leaf size");
  subs.emplace_back(tree, cmd_tree);

  auto* rashomon = app.add_subcommand("rashomon", "R-loss and error against ensemble size");
  add_common(rashomon, o);
  add_run_input(rashomon, o);
  rashomon->add_option("--sizes", o.sizes, "Comma-separated ensemble sizes");
  rashomon->add_option("--baseline", o.baseline, "Baseline ensemble size");
  rashomon->add_option("--trees", o.trees, "Alias for --baseline");
  rashomon->add_option("--max-depth", o.max_depth, "Distilled tree depth");
  rashomon->add_flag("--svg", o.svg, "Also write an SVG plot");
  subs.emplace_back(rashomon, cmd_rashomon);

  auto* blp = app.add_subcommand("blp", "Best linear projection of the scores");
  add_common(blp, o);
  add_run_input(blp, o);
  blp->add_option("--features", o.features, "Comma-separated features (default: above-mean importance)");
  blp->add_option("--categorical", o.categorical, "Comma-separated features to dummy-code");
  blp->add_option("--min-category-count", o.min_category_count, "Drop rarer category levels");
  subs.emplace_back(blp, cmd_blp);

  auto* refute = app.add_subcommand("refute", "Placebo treatment or dummy outcome test");
  add_common(refute, o);
  add_run_input(refute, o);
  refute->add_option("--test", o.test, "placebo|dummy")->check(CLI::IsMember({"placebo", "dummy"}));
  refute->add_option("--seeds", o.seeds, "Number of shuffles");
  refute->add_option("--trees", o.trees, "Causal forest trees for the refits");
  refute->add_option("--nuisance-trees", o.nuisance_trees, "Nuisance trees for the refits");
  refute->add_flag("--svg", o.svg, "Also write an SVG profile");
  subs.emplace_back(refute, cmd_refute);

  auto* report = app.add_subcommand("report", "Summary document for a run");
  add_common(report, o);
  add_run_input(report, o);
  report->add_option("--trees", o.trees, "Causal forest trees for refutation refits");
  report->add_option("--nuisance-trees", o.nuisance_trees, "Nuisance trees for refutation refits");
  report->add_option("--min-category-count", o.min_category_count, "BLP category threshold");
  subs.emplace_back(report, cmd_report);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "cfaudit: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    set_num_threads(o.threads);
    for (auto& [sub, handler] : subs) {
      if (sub->parsed()) handler(o, {out, err});
    }
    return static_cast<int>(ExitCode::kSuccess);
  } catch (const UsageError& e) {
    err << "cfaudit: usage error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  } catch (const NumericalError& e) {
    err << "cfaudit: numerical failure: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumerical);
  } catch (const DataError& e) {
    err << "cfaudit: data error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const std::invalid_argument& e) {
    err << "cfaudit: usage error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  } catch (const std::exception& e) {
    err << "cfaudit: data error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace cfaudit::cli
