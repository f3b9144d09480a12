#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "artifacts.hpp"
#include "cfaudit/csv.hpp"
#include "cfaudit/diagnostics.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/iai.hpp"
#include "cfaudit/parallel.hpp"
#include "cfaudit/report.hpp"
#include "cfaudit/rng.hpp"
#include "cfaudit/synth.hpp"
#include "cfaudit/xai.hpp"

namespace cfaudit::cli {

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(',', start), s.size());
    const auto item = trim(std::string_view(s).substr(start, end - start));
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

ClampBounds parse_clamp(const std::string& s) {
  const auto parts = split_list(s);
  std::optional<double> lo, hi;
  if (parts.size() == 2) {
    lo = parse_double(parts[0]);
    hi = parse_double(parts[1]);
  }
  if (!lo || !hi || !(*lo > 0.0) || !(*lo < *hi) || !(*hi < 1.0)) {
    throw UsageError("--clamp expects lo,hi with 0 < lo < hi < 1");
  }
  return {*lo, *hi};
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    const auto v = parse_double(item);
    if (!v || *v < 1 || *v != std::floor(*v)) throw UsageError("--sizes expects positive integers");
    out.push_back(static_cast<std::size_t>(*v));
  }
  if (out.empty()) throw UsageError("--sizes is empty");
  return out;
}

fs::path out_dir(const Options& o, const std::string& sub) {
  if (!o.out.empty()) return o.out;
  return fs::path(o.input) / sub;
}

fs::path require_input(const Options& o) {
  if (o.input.empty()) throw UsageError("--input is required");
  return o.input;
}

std::uint64_t seed_for(const Options& o, std::uint64_t run_seed) { return o.seed.value_or(run_seed); }

void apply_forest_flags(const Options& o, ForestParams& p) {
  if (o.min_leaf) p.min_leaf_size = *o.min_leaf;
  if (o.subsample) p.subsample_ratio = *o.subsample;
  p.honesty = o.honesty == "on";
}

std::size_t feature_index(const Dataset& d, const std::string& name) {
  const auto it = std::find(d.feature_names.begin(), d.feature_names.end(), name);
  if (it == d.feature_names.end()) throw UsageError("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - d.feature_names.begin());
}

// Feature columns of a query file, in training order.
Matrix load_query(const fs::path& path, const std::vector<std::string>& names) {
  const CsvColumns cols(path);
  Matrix q(cols.rows(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) q.set_column(j, cols.get(names[j]));
  return q;
}

void write_doubles_row(CsvWriter& w, std::span<const double> v) {
  for (double x : v) w.field(x);
}

}  // namespace

// ---------------------------------------------------------------- synth

void cmd_synth(const Options& o, Streams s) {
  const std::uint64_t seed = o.seed.value_or(kDefaultSeed);
  const synth::DgpSpec spec = synth::preset(o.preset, o.n, o.p, seed);
  const synth::SynthSample sample = synth::generate(spec);
  const fs::path dir = o.out.empty() ? fs::path("synth") : fs::path(o.out);
  Manifest m("synth", dir);
  m.set_seed(seed);
  m.params() = {{"preset", o.preset}, {"n", o.n}, {"p", o.p}, {"true_ate", sample.true_ate}};

  write_csv(dir / "data.csv", sample.data);
  CsvWriter truth(dir / "truth.csv");
  truth.row({"unit", "tau", "propensity"});
  for (std::size_t i = 0; i < sample.tau.size(); ++i) {
    truth.field(i).field(sample.tau[i]).field(sample.propensity[i]);
    truth.end_row();
  }
  write_text(dir / "schema.txt", "treatment = w\noutcome = y\n");
  m.lap("generate");
  for (const char* a : {"data.csv", "truth.csv", "schema.txt"}) m.add_artifact(a);
  m.write();
  s.out << "wrote " << (dir / "data.csv").string() << " (n=" << o.n << ", p=" << o.p
        << ", true ATE " << format_double(sample.true_ate) << ")\n";
}

// ---------------------------------------------------------------- fit

void cmd_fit(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  SchemaConfig schema;
  if (!o.schema.empty()) schema = load_schema(o.schema);
  if (!o.treatment.empty()) schema.treatment_column = o.treatment;
  if (!o.outcome.empty()) schema.outcome_column = o.outcome;
  if (!o.features.empty()) schema.feature_columns = split_list(o.features);
  if (o.missing_token) schema.missing_token = *o.missing_token;
  if (schema.treatment_column.empty()) schema.treatment_column = "w";
  if (schema.outcome_column.empty()) schema.outcome_column = "y";

  const fs::path dir = o.out.empty() ? fs::path("run") : fs::path(o.out);
  Manifest m("fit", dir);
  m.add_input(input);
  if (!o.schema.empty()) m.add_input(o.schema);

  Dataset raw = load_csv(input, schema);
  if (o.missing_indicators) raw = add_missing_indicators(raw);
  const DatasetSummary summary = summarize(raw);
  const Dataset d = impute_median(raw);
  m.lap("load");

  PipelineParams pp;
  pp.seed = o.seed.value_or(kDefaultSeed);
  pp.nuisance.num_trees = o.nuisance_trees.value_or(500);
  pp.causal.num_trees = o.trees.value_or(2000);
  apply_forest_flags(o, pp.nuisance);
  apply_forest_flags(o, pp.causal);
  pp.formula = parse_score_formula(o.score_formula);
  pp.clamp = parse_clamp(o.clamp);
  m.set_seed(pp.seed);

  const PipelineResult r = run_pipeline(d, pp);
  m.lap("pipeline");
  const CenteredData& c = r.centering.centered;

  Json params;
  params["format_version"] = kFormatVersion;
  params["treatment"] = d.treatment_name;
  params["outcome"] = d.outcome_name;
  params["features"] = d.feature_names;
  params["nuisance_features"] = d.x_nuisance.empty() ? d.feature_names : d.nuisance_names;
  params["treatment_type"] = std::string(treatment_type_name(c.treatment_type));
  params["seed"] = pp.seed;
  params["score_formula"] = std::string(score_formula_name(r.scores.formula == ScoreFormula::kResidual
                                                               ? pp.formula
                                                               : r.scores.formula));
  params["clamp"] = {pp.clamp.lo, pp.clamp.hi};
  params["nuisance"] = forest_params_json(pp.nuisance);
  params["causal"] = forest_params_json(pp.causal);
  write_text(dir / "params.json", params.dump(2) + "\n");
  m.params() = params;

  write_run_dataset(dir, d);
  save_forest(r.centering.models.outcome, dir / "outcome.forest");
  save_forest(r.centering.models.treatment, dir / "treatment.forest");
  std::vector<std::string> artifacts{"params.json", "dataset.csv", "schema.txt", "outcome.forest",
                                     "treatment.forest"};
  if (r.centering.models.outcome_treated) {
    save_forest(*r.centering.models.outcome_treated, dir / "outcome_treated.forest");
    save_forest(*r.centering.models.outcome_control, dir / "outcome_control.forest");
    artifacts.insert(artifacts.end(), {"outcome_treated.forest", "outcome_control.forest"});
  }
  save_forest(r.forest.forest, dir / "causal.forest");

  {
    CsvWriter w(dir / "centered.csv");
    std::vector<std::string> header{"unit", "y_tilde", "w_tilde", "e_hat", "e_hat_raw", "m_hat"};
    if (c.has_arm_models()) header.insert(header.end(), {"m_hat_1", "m_hat_0"});
    w.row(header);
    for (std::size_t i = 0; i < c.n(); ++i) {
      w.field(i).field(c.y_tilde[i]).field(c.w_tilde[i]).field(c.e_hat[i]).field(c.e_hat_raw[i]);
      w.field(c.m_hat[i]);
      if (c.has_arm_models()) w.field(c.m_hat_1[i]).field(c.m_hat_0[i]);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / "scores.csv");
    w.row({"unit", "gamma", "tau_oob"});
    for (std::size_t i = 0; i < c.n(); ++i) {
      w.field(i).field(r.scores.gamma[i]).field(r.tau_oob[i]);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / "ate.csv");
    w.row({"estimate", "std_error", "ci_lower", "ci_upper", "formula", "treatment_type", "n"});
    w.field(r.ate.point).field(r.ate.std_error);
    w.field(r.ate.point - 1.96 * r.ate.std_error).field(r.ate.point + 1.96 * r.ate.std_error);
    w.field(score_formula_name(r.scores.formula)).field(treatment_type_name(c.treatment_type));
    w.field(d.n());
    w.end_row();
  }
  {
    CsvWriter w(dir / "summary.csv");
    w.row({"column", "count", "missing_fraction", "min", "median", "max"});
    for (const auto& col : summary.columns) {
      w.field(col.name).field(col.count).field(col.missing_fraction);
      w.field(col.min).field(col.median).field(col.max);
      w.end_row();
    }
  }
  const auto overlap = diagnostics::overlap_check(c);
  {
    CsvWriter w(dir / "overlap.csv");
    w.row({"statistic", "value"});
    w.field("min").field(overlap.min).end_row();
    w.field("max").field(overlap.max).end_row();
    for (std::size_t k = 0; k < overlap.deciles.size(); ++k) {
      w.field("q" + std::to_string(10 * (k + 1))).field(overlap.deciles[k]).end_row();
    }
    w.field("clamped_count").field(overlap.clamped_count).end_row();
    w.field("oob_backfilled").field(c.oob_backfilled).end_row();
  }
  {
    CsvWriter w(dir / "overlap_bins.csv");
    if (overlap.binary) {
      w.row({"lo", "hi", "count"});
      for (const auto& b : overlap.histogram) {
        w.field(b.lo).field(b.hi).field(b.count).end_row();
      }
    } else {
      w.row({"lo", "hi", "count", "w_tilde_variance"});
      for (const auto& b : overlap.variance_profile) {
        w.field(b.lo).field(b.hi).field(b.count).field(b.w_tilde_variance).end_row();
      }
    }
  }
  for (const auto& warn : overlap.warnings) s.err << "warning: " << warn << '\n';
  if (c.oob_backfilled > 0) {
    s.err << "warning: " << c.oob_backfilled
          << " nuisance prediction(s) had no out-of-bag tree and used the full forest\n";
  }
  artifacts.insert(artifacts.end(), {"causal.forest", "centered.csv", "scores.csv", "ate.csv",
                                     "summary.csv", "overlap.csv", "overlap_bins.csv"});
  for (const auto& a : artifacts) m.add_artifact(a);
  m.lap("write");
  m.write();
  s.out << (c.treatment_type == TreatmentType::kBinary ? "ATE" : "APE") << " = "
        << report::fixed(r.ate.point, 4) << " (SE " << report::fixed(r.ate.std_error, 4)
        << "), n = " << d.n() << ", formula " << score_formula_name(r.scores.formula) << '\n';
}

// ---------------------------------------------------------------- estimate

void cmd_estimate(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input);
  const fs::path dir = out_dir(o, "estimate");
  Manifest m("estimate", dir);
  m.set_seed(run.pipeline.seed);
  m.add_input(input / "causal.forest");
  m.add_input(input / "scores.csv");

  const bool training = o.query.empty();
  const Matrix q = training ? run.data.x : load_query(o.query, run.data.feature_names);
  if (!training) m.add_input(o.query);
  m.params() = {{"rows", q.rows()}, {"query", training ? "training rows (out-of-bag)" : o.query}};

  std::vector<CateEstimate> est(q.rows());
  parallel_for(q.rows(), [&](std::size_t i) {
    KernelWeights w;
    if (training) w = kernel_weights_oob(run.forest, q.row(i), i);
    if (w.entries.empty()) w = kernel_weights(run.forest, q.row(i));
    est[i] = estimate_cate(w, run.scores);
  });
  m.lap("estimate");
  CsvWriter w(dir / "cate.csv");
  w.row({"row", "tau_hat", "std_error"});
  for (std::size_t i = 0; i < est.size(); ++i) {
    w.field(i).field(est[i].point).field(est[i].std_error).end_row();
  }
  m.add_artifact("cate.csv");
  m.write();
  s.out << "wrote " << est.size() << " CATE estimates to " << (dir / "cate.csv").string() << '\n';
}

// ---------------------------------------------------------------- importance

void cmd_importance(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input);
  const fs::path dir = out_dir(o, "importance");
  Manifest m("importance", dir);
  m.set_seed(run.pipeline.seed);
  m.add_input(input / "causal.forest");
  m.params() = {{"decay", o.decay}, {"max_depth", o.max_depth}};

  const auto table = xai::variable_importance(run.forest.forest, run.data.feature_names, o.decay,
                                              o.max_depth);
  CsvWriter w(dir / "importance.csv");
  w.row({"rank", "variable", "importance"});
  for (const auto& r : table.rows) w.field(r.rank).field(r.name).field(r.importance).end_row();
  const std::string text = report::importance_text(table);
  write_text(dir / "importance.txt", text);
  m.add_artifact("importance.csv");
  m.add_artifact("importance.txt");
  m.lap("importance");
  m.write();
  if (table.degenerate) s.err << "warning: forest has no splits; importance is degenerate\n";
  s.out << text;
}

// ---------------------------------------------------------------- shap

void cmd_shap(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input);
  const fs::path dir = out_dir(o, "shap");
  const std::uint64_t seed = seed_for(o, run.pipeline.seed);
  Manifest m("shap", dir);
  m.set_seed(seed);
  m.add_input(input / "causal.forest");
  m.add_input(input / "scores.csv");

  const auto& names = run.data.feature_names;
  const std::size_t p = names.size();
  Matrix q;
  if (o.query.empty()) {
    std::vector<std::size_t> ids(std::min(o.rows, run.data.n()));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    q = run.data.x.select_rows(ids);
  } else {
    q = load_query(o.query, names);
    m.add_input(o.query);
  }
  const bool exact = o.permutations == 0 && p <= xai::kMaxExactPlayers;
  const std::size_t perms = o.permutations == 0 ? 2000 : o.permutations;
  const Matrix background = xai::select_background(run.data.x, o.background, seed);
  m.params() = {{"rows", q.rows()},
                {"method", exact ? "exact" : "sampled"},
                {"permutations", exact ? 0 : perms},
                {"background_rows", background.rows()}};

  const CatePredictor predictor(run.forest, run.scores);
  std::vector<xai::ShapExplanation> expl;
  for (std::size_t r = 0; r < q.rows(); ++r) {
    const xai::ForestGame game(predictor, q.row(r), background);
    expl.push_back(exact ? xai::shap_exact(game)
                         : xai::shap_sampled(game, perms, derive_seed(seed, r)));
  }
  m.lap("explain");

  {
    CsvWriter w(dir / "shap.csv");
    std::vector<std::string> header{"row", "base_value", "prediction"};
    for (const auto& n : names) header.push_back("phi_" + n);
    if (!exact) {
      for (const auto& n : names) header.push_back("se_" + n);
    }
    w.row(header);
    for (std::size_t r = 0; r < expl.size(); ++r) {
      w.field(r).field(expl[r].base_value).field(expl[r].prediction);
      write_doubles_row(w, expl[r].contributions);
      if (!exact) write_doubles_row(w, expl[r].std_errors);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / "waterfall.csv");
    w.row({"row", "order", "label", "value", "contribution"});
    for (std::size_t r = 0; r < expl.size(); ++r) {
      const auto bars = xai::waterfall(expl[r], q.row(r), names);
      for (std::size_t k = 0; k < bars.size(); ++k) {
        w.field(r).field(k).field(bars[k].label).field(bars[k].feature_value);
        w.field(bars[k].contribution).end_row();
      }
    }
  }
  const auto swarm = xai::aggregate_shap(expl, q, names);
  {
    CsvWriter w(dir / "beeswarm.csv");
    w.row({"rank", "feature", "mean_abs_contribution", "row", "value", "contribution"});
    for (std::size_t k = 0; k < swarm.features.size(); ++k) {
      const auto& f = swarm.features[k];
      for (std::size_t r = 0; r < f.points.size(); ++r) {
        w.field(k + 1).field(f.name).field(f.mean_abs).field(r);
        w.field(f.points[r].first).field(f.points[r].second).end_row();
      }
    }
  }
  for (const char* a : {"shap.csv", "waterfall.csv", "beeswarm.csv"}) m.add_artifact(a);
  if (o.svg && !expl.empty()) {
    write_text(dir / "waterfall_row0.svg",
               report::svg_waterfall(xai::waterfall(expl[0], q.row(0), names),
                                     expl[0].base_value, expl[0].prediction));
    write_text(dir / "beeswarm.svg", report::svg_beeswarm(swarm));
    m.add_artifact("waterfall_row0.svg");
    m.add_artifact("beeswarm.svg");
  }
  m.lap("write");
  m.write();
  s.out << "explained " << expl.size() << " row(s) with " << (exact ? "exact" : "sampled")
        << " Shapley values; base value " << report::fixed(expl.empty() ? 0.0 : expl[0].base_value, 4)
        << '\n';
}

// ---------------------------------------------------------------- tree

void cmd_tree(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input);
  const fs::path dir = out_dir(o, "tree");
  Manifest m("tree", dir);
  const std::uint64_t seed = seed_for(o, run.pipeline.seed);
  m.set_seed(seed);
  m.add_input(input / "causal.forest");

  Tree tree;
  std::size_t index = 0;
  double loss = 0.0;
  if (o.kind == "representative") {
    const auto rep = iai::representative_tree(run.forest, run.data.x, run.centered);
    tree = run.forest.forest.tree(rep.index);
    index = rep.index;
    loss = rep.r_loss;
  } else if (o.kind == "distilled") {
    ForestParams student = iai::default_student_params();
    student.max_depth = o.max_depth;
    if (o.min_leaf) student.min_leaf_size = *o.min_leaf;
    student.seed = seed;
    tree = iai::distill_tree(run.forest, run.scores, run.data.x, student);
    loss = r_loss(iai::predict_tree(tree, run.data.x), run.centered.y_tilde, run.centered.w_tilde);
  } else {
    throw UsageError("--kind must be representative or distilled");
  }
  m.params() = {{"kind", o.kind}, {"max_depth", o.max_depth}};

  const std::string text = report::tree_text(tree, run.data.feature_names);
  write_text(dir / "tree.txt", text);
  write_text(dir / "tree.json", report::tree_json(tree, run.data.feature_names));
  CsvWriter w(dir / "tree.csv");
  w.row({"kind", "tree_index", "r_loss", "leaves", "nodes"});
  w.field(o.kind);
  if (o.kind == "representative") w.field(index);
  else w.field("");
  w.field(loss).field(tree.num_leaves()).field(tree.nodes.size()).end_row();
  for (const char* a : {"tree.txt", "tree.json", "tree.csv"}) m.add_artifact(a);
  m.lap("tree");
  m.write();
  s.out << o.kind << " tree";
  if (o.kind == "representative") s.out << " #" << index;
  s.out << ", R-loss " << format_double(loss) << "\n" << text;
}

// ---------------------------------------------------------------- rashomon

void cmd_rashomon(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input, false);
  const fs::path dir = out_dir(o, "rashomon");
  Manifest m("rashomon", dir);
  const std::uint64_t seed = seed_for(o, run.pipeline.seed);
  m.set_seed(seed);
  m.add_input(input / "centered.csv");
  m.add_input(input / "scores.csv");

  iai::RashomonParams rp;
  rp.sizes = parse_sizes(o.sizes);
  rp.baseline_size = o.baseline.value_or(o.trees.value_or(run.pipeline.causal.num_trees));
  rp.forest = run.pipeline.causal;
  rp.seed = seed;
  rp.student.seed = seed;
  rp.student.max_depth = o.max_depth;
  m.params() = {{"sizes", rp.sizes}, {"baseline_size", rp.baseline_size},
                {"trim_fraction", iai::kTrimFraction}, {"forest", forest_params_json(rp.forest)}};

  const auto points = iai::rashomon_curve(run.data, run.centered, run.scores, run.data.x, rp);
  m.lap("rashomon");
  CsvWriter w(dir / "rashomon.csv");
  w.row({"model", "ensemble_size", "r_loss", "relative_r_loss", "abs_err_p25", "abs_err_p50",
         "abs_err_p75", "abs_err_untrimmed_p25", "abs_err_untrimmed_p50", "abs_err_untrimmed_p75",
         "pct_err_p25", "pct_err_p50", "pct_err_p75", "pct_err_untrimmed_p25",
         "pct_err_untrimmed_p50", "pct_err_untrimmed_p75"});
  report::TextTable tab({"Model", "Relative R-loss", "Median |error|", "Median % error"});
  for (const auto& pt : points) {
    w.field(pt.label).field(pt.ensemble_size).field(pt.r_loss).field(pt.relative_r_loss);
    for (const auto* q : {&pt.abs_error, &pt.abs_error_untrimmed, &pt.pct_error,
                          &pt.pct_error_untrimmed}) {
      w.field(q->p25).field(q->p50).field(q->p75);
    }
    w.end_row();
    tab.add_row({pt.label, report::fixed(pt.relative_r_loss, 6), report::fixed(pt.abs_error.p50, 4),
                 report::fixed(pt.pct_error.p50, 2)});
  }
  m.add_artifact("rashomon.csv");
  if (o.svg) {
    write_text(dir / "rashomon.svg", report::svg_rashomon(points));
    m.add_artifact("rashomon.svg");
  }
  m.write();
  s.out << tab.render();
}

// ---------------------------------------------------------------- blp

namespace {

struct BlpRun {
  iai::BlpResult result;
  std::vector<std::string> features;
  bool from_importance = false;
};

BlpRun run_blp(const FitRun& run, const Options& o, std::ostream& err) {
  BlpRun b;
  const Dataset& d = run.data;
  iai::BlpSpec spec;
  spec.min_category_count = o.min_category_count;
  if (!o.features.empty()) {
    b.features = split_list(o.features);
  } else {
    const auto table = xai::variable_importance(run.forest.forest, d.feature_names);
    const auto sel = iai::select_features_by_importance(table);
    b.features = sel.names;
    b.from_importance = true;
    if (sel.empty_warning) {
      err << "warning: no feature has above-mean importance; using all features\n";
      b.features = d.feature_names;
    }
  }
  const auto cats = split_list(o.categorical);
  for (const auto& c : cats) {
    if (std::find(b.features.begin(), b.features.end(), c) == b.features.end()) {
      b.features.push_back(c);
    }
  }
  for (const auto& f : b.features) {
    spec.features.push_back(feature_index(d, f));
    spec.categorical.push_back(std::find(cats.begin(), cats.end(), f) != cats.end());
  }
  b.result = iai::blp(run.scores.gamma, d.x, d.feature_names, spec);
  return b;
}

}  // namespace

void cmd_blp(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input);
  const fs::path dir = out_dir(o, "blp");
  Manifest m("blp", dir);
  m.set_seed(run.pipeline.seed);
  m.add_input(input / "scores.csv");
  m.add_input(input / "dataset.csv");

  const BlpRun b = run_blp(run, o, s.err);
  m.params() = {{"features", b.features},
                {"selected_by_importance", b.from_importance},
                {"categorical", split_list(o.categorical)},
                {"min_category_count", o.min_category_count}};
  CsvWriter w(dir / "blp.csv");
  w.row({"term", "coefficient", "std_error", "t_stat", "p_value", "stars"});
  for (const auto& r : b.result.rows) {
    w.field(r.term).field(r.coefficient).field(r.std_error).field(r.t_stat).field(r.p_value);
    w.field(iai::significance_stars(r.p_value)).end_row();
  }
  const std::string text = report::blp_text(b.result);
  write_text(dir / "blp.txt", text);
  m.add_artifact("blp.csv");
  m.add_artifact("blp.txt");
  m.lap("blp");
  m.write();
  s.out << text;
}

// ---------------------------------------------------------------- refute

namespace {

PipelineParams refit_params(const FitRun& run, const Options& o) {
  PipelineParams pp = run.pipeline;
  if (o.trees) pp.causal.num_trees = *o.trees;
  if (o.nuisance_trees) pp.nuisance.num_trees = *o.nuisance_trees;
  return pp;
}

}  // namespace

void cmd_refute(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input, false);
  const fs::path dir = out_dir(o, "refute");
  const auto kind = diagnostics::parse_refutation(o.test);
  const std::uint64_t seed = seed_for(o, run.pipeline.seed);
  if (o.seeds == 0) throw UsageError("--seeds must be positive");
  Manifest m("refute", dir);
  m.set_seed(seed);
  m.add_input(input / "dataset.csv");
  const PipelineParams pp = refit_params(run, o);
  m.params() = {{"test", std::string(diagnostics::refutation_name(kind))},
                {"seeds", o.seeds},
                {"nuisance", forest_params_json(pp.nuisance)},
                {"causal", forest_params_json(pp.causal)}};

  CsvWriter summary(dir / "refute.csv");
  summary.row({"test", "seed", "estimate", "std_error", "z"});
  summary.field("original").field("").field(run.ate.point).field(run.ate.std_error);
  summary.field(run.ate.std_error > 0 ? run.ate.point / run.ate.std_error : 0.0).end_row();
  CsvWriter prof(dir / "profile.csv");
  prof.row({"seed", "bin", "label", "lo", "hi", "mean_dr_score", "count"});
  report::TextTable tab({"Test", "Seed", "Estimate", "Std. error"});
  tab.add_row({"original", "", report::fixed(run.ate.point, 4), report::fixed(run.ate.std_error, 4)});
  for (std::size_t k = 0; k < o.seeds; ++k) {
    const std::uint64_t sk = seed + k;
    const auto res = diagnostics::refute(run.data, pp, kind, sk);
    summary.field(diagnostics::refutation_name(kind)).field(static_cast<long long>(sk));
    summary.field(res.ate.point).field(res.ate.std_error);
    summary.field(res.ate.std_error > 0 ? res.ate.point / res.ate.std_error : 0.0).end_row();
    for (std::size_t b = 0; b < res.profile.size(); ++b) {
      const auto& bin = res.profile[b];
      prof.field(static_cast<long long>(sk)).field(b).field(bin.label).field(bin.lo).field(bin.hi);
      prof.field(bin.mean_dr_score).field(bin.count).end_row();
    }
    tab.add_row({std::string(diagnostics::refutation_name(kind)), std::to_string(sk),
                 report::fixed(res.ate.point, 4), report::fixed(res.ate.std_error, 4)});
    if (o.svg && k == 0) {
      write_text(dir / "profile.svg",
                 report::svg_profile(res.profile, std::string(diagnostics::refutation_name(kind)) +
                                                      ", mean score by decile of the actual " +
                                                      (kind == diagnostics::RefutationKind::kPlaceboTreatment
                                                           ? "treatment"
                                                           : "outcome")));
      m.add_artifact("profile.svg");
    }
  }
  m.add_artifact("refute.csv");
  m.add_artifact("profile.csv");
  m.lap("refute");
  m.write();
  s.out << tab.render();
}

// ---------------------------------------------------------------- report

void cmd_report(const Options& o, Streams s) {
  const fs::path input = require_input(o);
  const FitRun run = load_fit_run(input);
  const fs::path dir = out_dir(o, "report");
  Manifest m("report", dir);
  const std::uint64_t seed = seed_for(o, run.pipeline.seed);
  m.set_seed(seed);
  m.add_input(input / "scores.csv");
  m.add_input(input / "causal.forest");

  const Dataset& d = run.data;
  const bool binary = run.centered.treatment_type == TreatmentType::kBinary;
  std::string doc = "# Causal forest audit\n\n";
  doc += "Run directory: `" + input.string() + "`\n\n";
  doc += "## Data\n\n```\n";
  {
    report::TextTable tab({"Column", "Count", "Missing", "Min", "Median", "Max"});
    require_artifact(input / "summary.csv");
    const CsvTable raw = read_csv(input / "summary.csv");
    for (const auto& r : raw.rows) {
      tab.add_row({r[0], r[1], report::fixed(parse_double(r[2]).value_or(NAN), 3),
                   report::fixed(parse_double(r[3]).value_or(NAN), 3),
                   report::fixed(parse_double(r[4]).value_or(NAN), 3),
                   report::fixed(parse_double(r[5]).value_or(NAN), 3)});
    }
    doc += tab.render();
  }
  doc += "```\n\nn = " + std::to_string(d.n()) + ", treatment `" + d.treatment_name + "` (" +
         std::string(treatment_type_name(run.centered.treatment_type)) + "), outcome `" +
         d.outcome_name + "`\n\n";

  doc += std::string("## ") + (binary ? "Average treatment effect" : "Average partial effect") +
         "\n\n```\n";
  {
    report::TextTable tab({"Estimate", "Std. error", "95% CI", "Score"});
    tab.add_row({report::fixed(run.ate.point, 4), report::fixed(run.ate.std_error, 4),
                 "[" + report::fixed(run.ate.point - 1.96 * run.ate.std_error, 4) + ", " +
                     report::fixed(run.ate.point + 1.96 * run.ate.std_error, 4) + "]",
                 std::string(score_formula_name(run.scores.formula))});
    doc += tab.render();
  }
  doc += "```\n\n";
  if (binary) {
    const auto ov = diagnostics::overlap_check(run.centered);
    doc += "Propensity range [" + report::fixed(ov.min, 3) + ", " + report::fixed(ov.max, 3) +
           "], " + std::to_string(ov.clamped_count) + " unit(s) clamped.\n\n";
  }
  m.lap("summary");

  const auto table = xai::variable_importance(run.forest.forest, d.feature_names);
  doc += "## Variable importance (top 10)\n\n```\n" + report::importance_text(table, 10) + "```\n\n";
  m.lap("importance");

  doc += "## Best linear projection\n\n";
  try {
    const BlpRun b = run_blp(run, o, s.err);
    doc += std::string("Features: ") +
           (b.from_importance ? "above-mean importance" : "user selection") + ".\n\n```\n" +
           report::blp_text(b.result) + "```\n\n";
  } catch (const NumericalError& e) {
    doc += std::string("Not estimable: ") + e.what() + "\n\n";
  }
  m.lap("blp");

  doc += "## Refutation tests\n\n```\n";
  {
    report::TextTable tab({"Test", "Estimate", "Std. error"});
    tab.add_row({"original", report::fixed(run.ate.point, 4), report::fixed(run.ate.std_error, 4)});
    const fs::path stored = input / "refute" / "refute.csv";
    if (fs::exists(stored)) {
      const CsvTable t = read_csv(stored);
      for (const auto& r : t.rows) {
        if (r[0] == "original") continue;
        tab.add_row({r[0] + " (seed " + r[1] + ")",
                     report::fixed(parse_double(r[2]).value_or(NAN), 4),
                     report::fixed(parse_double(r[3]).value_or(NAN), 4)});
      }
      m.add_input(stored);
    } else {
      const PipelineParams pp = refit_params(run, o);
      for (auto kind : {diagnostics::RefutationKind::kPlaceboTreatment,
                        diagnostics::RefutationKind::kDummyOutcome}) {
        const auto res = diagnostics::refute(d, pp, kind, seed);
        tab.add_row({std::string(diagnostics::refutation_name(kind)),
                     report::fixed(res.ate.point, 4), report::fixed(res.ate.std_error, 4)});
      }
    }
    doc += tab.render();
  }
  doc += "```\n";
  m.lap("refute");

  write_text(dir / "report.md", doc);
  m.add_artifact("report.md");
  m.write();
  s.out << doc;
}

}  // namespace cfaudit::cli
