#include "cfaudit/xai.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

#include "cfaudit/error.hpp"
#include "cfaudit/parallel.hpp"
#include "cfaudit/rng.hpp"

namespace cfaudit::xai {

double ImportanceTable::importance_of(std::size_t feature) const {
  for (const auto& r : rows) {
    if (r.feature == feature) return r.importance;
  }
  return 0.0;
}

ImportanceTable variable_importance(const Forest& f, const std::vector<std::string>& names,
                                    double decay, std::size_t max_depth) {
  const std::size_t p = f.num_features();
  if (names.size() != p) throw DataError("variable_importance: one name per feature required");
  if (!(decay > 0.0) || max_depth == 0) throw UsageError("variable_importance: bad decay or depth");

  std::vector<std::vector<std::size_t>> counts(max_depth, std::vector<std::size_t>(p, 0));
  for (const Tree& t : f.trees()) {
    for (const Node& nd : t.nodes) {
      if (nd.is_leaf() || nd.depth > max_depth) continue;
      ++counts[nd.depth - 1][static_cast<std::size_t>(nd.feature)];
    }
  }
  std::vector<double> raw(p, 0.0);
  double weight = 1.0;
  for (std::size_t d = 0; d < max_depth; ++d, weight *= decay) {
    const std::size_t total = std::accumulate(counts[d].begin(), counts[d].end(), std::size_t{0});
    if (total == 0) continue;
    for (std::size_t j = 0; j < p; ++j) {
      raw[j] += weight * static_cast<double>(counts[d][j]) / static_cast<double>(total);
    }
  }
  const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);

  ImportanceTable table;
  table.degenerate = !(sum > 0.0);
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t j = 0; j < p; ++j) raw[j] = table.degenerate ? 0.0 : raw[j] / sum;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return raw[a] > raw[b]; });
  for (std::size_t k = 0; k < p; ++k) {
    table.rows.push_back({k + 1, order[k], names[order[k]], raw[order[k]]});
  }
  return table;
}

// ---- games ----

FunctionGame::FunctionGame(Fn f, std::vector<double> x, Matrix background)
    : f_(std::move(f)), x_(std::move(x)), background_(std::move(background)) {
  if (background_.cols() != x_.size() || background_.rows() == 0) {
    throw DataError("FunctionGame: background must be non-empty with matching columns");
  }
  if (x_.size() > 64) throw UsageError("Shapley values support at most 64 features");
}

double FunctionGame::value(std::uint64_t coalition) const {
  std::vector<double> z(x_.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < background_.rows(); ++r) {
    const auto b = background_.row(r);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = (coalition >> j) & 1U ? x_[j] : b[j];
    acc += f_(z);
  }
  return acc / static_cast<double>(background_.rows());
}

namespace {

struct MaskKey {
  std::uint64_t in, out;
  bool operator==(const MaskKey&) const = default;
};
struct MaskHash {
  std::size_t operator()(const MaskKey& k) const { return mix_seed(k.in ^ mix_seed(k.out)); }
};
using TermMap = std::unordered_map<MaskKey, double, MaskHash>;

void walk(const Tree& t, std::size_t node, std::span<const double> x, std::span<const double> b,
          std::uint64_t in, std::uint64_t out, double leaf_scale, const CatePredictor& pred,
          std::size_t tree_index, TermMap& acc) {
  while (true) {
    const Node& nd = t.nodes[node];
    if (nd.is_leaf()) {
      acc[{in, out}] += pred.leaf_mean(tree_index, node) * leaf_scale;
      return;
    }
    const auto j = static_cast<std::size_t>(nd.feature);
    const std::uint64_t bit = std::uint64_t{1} << j;
    const std::size_t x_next = x[j] <= nd.threshold ? nd.left : nd.right;
    const std::size_t b_next = b[j] <= nd.threshold ? nd.left : nd.right;
    if ((in & bit) || x_next == b_next) {
      node = x_next;
    } else if (out & bit) {
      node = b_next;
    } else {
      walk(t, x_next, x, b, in | bit, out, leaf_scale, pred, tree_index, acc);
      node = b_next;
      out |= bit;
    }
  }
}

}  // namespace

ForestGame::ForestGame(const CatePredictor& predictor, std::span<const double> x,
                       const Matrix& background)
    : p_(x.size()) {
  const Forest& f = predictor.forest().forest;
  if (p_ != f.num_features() || background.cols() != p_ || background.rows() == 0) {
    throw DataError("ForestGame: query, background and forest disagree on features");
  }
  if (p_ > 64) throw UsageError("Shapley values support at most 64 features");
  if (f.empty()) throw DataError("ForestGame: empty forest");

  // Fixed-size tree blocks keep the floating-point summation order independent
  // of the thread count.
  constexpr std::size_t kBlock = 32;
  const std::size_t num_blocks = (f.size() + kBlock - 1) / kBlock;
  const double scale =
      1.0 / (static_cast<double>(f.size()) * static_cast<double>(background.rows()));
  std::vector<TermMap> partial(num_blocks);
  parallel_for(num_blocks, [&](std::size_t blk) {
    const std::size_t end = std::min(f.size(), (blk + 1) * kBlock);
    for (std::size_t b = blk * kBlock; b < end; ++b) {
      TermMap local;
      for (std::size_t r = 0; r < background.rows(); ++r) {
        walk(f.tree(b), 0, x, background.row(r), 0, 0, scale, predictor, b, local);
      }
      for (const auto& [k, v] : local) partial[blk][k] += v;
    }
  });
  std::map<std::pair<std::uint64_t, std::uint64_t>, double> merged;
  for (const auto& m : partial) {
    // Sort each block's terms so the merge order is canonical.
    std::vector<std::pair<MaskKey, double>> items(m.begin(), m.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      return std::pair{a.first.in, a.first.out} < std::pair{b.first.in, b.first.out};
    });
    for (const auto& [k, v] : items) merged[{k.in, k.out}] += v;
  }
  terms_.reserve(merged.size());
  for (const auto& [k, v] : merged) terms_.push_back({k.first, k.second, v});
}

double ForestGame::value(std::uint64_t coalition) const {
  double acc = 0.0;
  for (const Term& t : terms_) {
    if ((t.in & ~coalition) == 0 && (t.out & coalition) == 0) acc += t.weight;
  }
  return acc;
}

// ---- estimators ----

namespace {

std::uint64_t full_mask(std::size_t p) {
  return p == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << p) - 1;
}

}  // namespace

ShapExplanation shap_exact(const CoalitionGame& game) {
  const std::size_t p = game.num_players();
  if (p > kMaxExactPlayers) {
    throw UsageError("exact Shapley enumeration supports at most 15 features; use sampling");
  }
  const std::size_t m = std::size_t{1} << p;
  std::vector<double> v(m);
  for (std::size_t s = 0; s < m; ++s) v[s] = game.value(s);

  // w[k] = k! (p-k-1)! / p!
  std::vector<double> w(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    w[k] = std::exp(std::lgamma(k + 1.0) + std::lgamma(static_cast<double>(p - k)) -
                    std::lgamma(p + 1.0));
  }
  ShapExplanation e;
  e.contributions.assign(p, 0.0);
  e.std_errors.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double phi = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      if (s & bit) continue;
      phi += w[std::popcount(s)] * (v[s | bit] - v[s]);
    }
    e.contributions[j] = phi;
  }
  e.base_value = v[0];
  e.prediction = v[m - 1];
  e.exact = true;
  return e;
}

ShapExplanation shap_sampled(const CoalitionGame& game, std::size_t num_permutations,
                             std::uint64_t seed) {
  if (num_permutations == 0) throw UsageError("shap_sampled: need at least one permutation");
  const std::size_t p = game.num_players();
  std::unordered_map<std::uint64_t, double> memo;
  auto value = [&](std::uint64_t s) {
    auto it = memo.find(s);
    if (it != memo.end()) return it->second;
    const double v = game.value(s);
    memo.emplace(s, v);
    return v;
  };

  Rng rng(derive_seed(seed, streams::kPermutation));
  std::vector<std::size_t> perm(p);
  std::vector<double> sum(p, 0.0), sumsq(p, 0.0);
  for (std::size_t k = 0; k < num_permutations; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = p; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(perm[i - 1], perm[pick(rng)]);
    }
    std::uint64_t s = 0;
    double prev = value(0);
    for (std::size_t j : perm) {
      s |= std::uint64_t{1} << j;
      const double cur = value(s);
      const double delta = cur - prev;
      sum[j] += delta;
      sumsq[j] += delta * delta;
      prev = cur;
    }
  }

  ShapExplanation e;
  e.exact = false;
  e.base_value = value(0);
  e.prediction = value(full_mask(p));
  e.contributions.resize(p);
  e.std_errors.resize(p);
  const double m = static_cast<double>(num_permutations);
  for (std::size_t j = 0; j < p; ++j) {
    const double mu = sum[j] / m;
    e.contributions[j] = mu;
    const double var = num_permutations > 1 ? std::max(0.0, (sumsq[j] - m * mu * mu) / (m - 1)) : 0.0;
    e.std_errors[j] = std::sqrt(var / m);
  }
  double total = 0.0, abs_total = 0.0;
  for (double c : e.contributions) {
    total += c;
    abs_total += std::abs(c);
  }
  const double residual = (e.prediction - e.base_value) - total;
  for (double& c : e.contributions) {
    c += abs_total > 0.0 ? residual * std::abs(c) / abs_total : residual / static_cast<double>(p);
  }
  return e;
}

ShapExplanation shap_exact(const CatePredictor& predictor, std::span<const double> x,
                           const Matrix& background) {
  if (x.size() > kMaxExactPlayers) {
    throw UsageError("exact Shapley enumeration supports at most 15 features; use sampling");
  }
  return shap_exact(ForestGame(predictor, x, background));
}

ShapExplanation shap_sampled(const CatePredictor& predictor, std::span<const double> x,
                             const Matrix& background, std::size_t num_permutations,
                             std::uint64_t seed) {
  return shap_sampled(ForestGame(predictor, x, background), num_permutations, seed);
}

Matrix select_background(const Matrix& x, std::size_t max_rows, std::uint64_t seed) {
  if (max_rows == 0) throw UsageError("background needs at least one row");
  if (x.rows() <= max_rows) return x;
  std::vector<std::size_t> ids(x.rows());
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(seed, streams::kBackground));
  for (std::size_t k = 0; k < max_rows; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, ids.size() - 1);
    std::swap(ids[k], ids[pick(rng)]);
  }
  ids.resize(max_rows);
  std::sort(ids.begin(), ids.end());
  return x.select_rows(ids);
}

std::vector<WaterfallBar> waterfall(const ShapExplanation& e, std::span<const double> x,
                                    const std::vector<std::string>& names, std::size_t top) {
  const std::size_t p = e.contributions.size();
  if (x.size() != p || names.size() != p) throw DataError("waterfall: length mismatch");
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return std::abs(e.contributions[a]) > std::abs(e.contributions[b]);
  });
  std::vector<WaterfallBar> bars;
  double rest = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t j = order[k];
    if (k < top) {
      bars.push_back({names[j], x[j], e.contributions[j]});
    } else {
      rest += e.contributions[j];
    }
  }
  if (p > top) {
    bars.push_back({"other (" + std::to_string(p - top) + " features)",
                    std::numeric_limits<double>::quiet_NaN(), rest});
  }
  return bars;
}

BeeswarmTable aggregate_shap(const std::vector<ShapExplanation>& explanations, const Matrix& x,
                             const std::vector<std::string>& names, std::size_t top_k) {
  if (explanations.size() != x.rows()) throw DataError("aggregate_shap: one explanation per row");
  const std::size_t p = x.cols();
  if (names.size() != p) throw DataError("aggregate_shap: one name per feature required");
  std::vector<BeeswarmFeature> all(p);
  for (std::size_t j = 0; j < p; ++j) {
    all[j].feature = j;
    all[j].name = names[j];
  }
  for (std::size_t r = 0; r < explanations.size(); ++r) {
    const auto& c = explanations[r].contributions;
    if (c.size() != p) throw DataError("aggregate_shap: explanation width mismatch");
    for (std::size_t j = 0; j < p; ++j) {
      all[j].points.emplace_back(x(r, j), c[j]);
      all[j].mean_abs += std::abs(c[j]);
    }
  }
  if (!explanations.empty()) {
    for (auto& f : all) f.mean_abs /= static_cast<double>(explanations.size());
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.mean_abs > b.mean_abs; });
  if (all.size() > top_k) all.resize(top_k);
  return {std::move(all)};
}

}  // namespace cfaudit::xai
