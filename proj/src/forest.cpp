#include "cfaudit/forest.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>

#include "cfaudit/error.hpp"
#include "cfaudit/kernels.hpp"
#include "cfaudit/parallel.hpp"
#include "cfaudit/rng.hpp"

namespace cfaudit {

void ForestParams::validate() const {
  if (num_trees == 0) throw UsageError("num_trees must be positive");
  if (!(subsample_ratio > 0.0 && subsample_ratio <= 1.0)) {
    throw UsageError("subsample_ratio must be in (0, 1]");
  }
  if (!(honesty_ratio > 0.0 && honesty_ratio < 1.0)) {
    throw UsageError("honesty_ratio must be in (0, 1)");
  }
  if (min_leaf_size == 0) throw UsageError("min_leaf_size must be at least 1");
  if (max_depth && *max_depth == 0) throw UsageError("max_depth must be positive");
}

std::size_t ForestParams::resolved_mtry(std::size_t p) const {
  if (mtry != 0) return std::min(mtry, p);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p)))));
}

std::size_t Tree::find_leaf(std::span<const double> row) const {
  std::size_t k = 0;
  while (!nodes[k].is_leaf()) {
    const Node& nd = nodes[k];
    k = row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
  }
  return k;
}

std::size_t Tree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
}

Forest::Forest(ForestParams params, SplitRule rule, std::size_t num_samples,
               std::size_t num_features, std::vector<Tree> trees)
    : params_(params),
      rule_(rule),
      num_samples_(num_samples),
      num_features_(num_features),
      trees_(std::move(trees)) {
  params_.num_trees = trees_.size();
  build_inbag();
}

void Forest::build_inbag() {
  words_ = (num_samples_ + 63) / 64;
  inbag_.assign(words_ * trees_.size(), 0);
  for (std::size_t b = 0; b < trees_.size(); ++b) {
    auto mark = [&](std::uint32_t i) { inbag_[b * words_ + (i >> 6)] |= 1ULL << (i & 63); };
    for (auto i : trees_[b].split_sample_ids) mark(i);
    for (auto i : trees_[b].estimation_sample_ids) mark(i);
  }
}

SplitTargets variance_targets(std::span<const double> target) {
  return {std::vector<double>(target.begin(), target.end()),
          std::vector<double>(target.size(), 1.0)};
}

SplitTargets rloss_targets(std::span<const double> y_tilde, std::span<const double> w_tilde) {
  if (y_tilde.size() != w_tilde.size()) throw DataError("rloss_targets: length mismatch");
  SplitTargets t;
  t.a.resize(y_tilde.size());
  t.b.resize(y_tilde.size());
  for (std::size_t i = 0; i < y_tilde.size(); ++i) {
    t.a[i] = w_tilde[i] * y_tilde[i];
    t.b[i] = w_tilde[i] * w_tilde[i];
  }
  return t;
}

namespace {

struct Candidate {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t split_left = 0;  // split-half samples routed left
  std::size_t est_left = 0;    // estimation samples routed left
};

struct WorkItem {
  std::uint32_t node;
  std::size_t split_begin, split_end;
  std::size_t est_begin, est_end;
};

double node_score(double a, double b) { return b > 0.0 ? a * a / b : 0.0; }

// Per-tree sample orders. For every feature f, the split-half ids are kept
// sorted by x[f] within each node's segment (and likewise the estimation ids),
// so split search is a linear scan and child orders come from stable
// partitioning rather than re-sorting.
class NodeOrders {
 public:
  NodeOrders(const Matrix& x, std::span<const std::uint32_t> split_ids,
             std::span<const std::uint32_t> est_ids)
      : x_(x), p_(x.cols()), ns_(split_ids.size()), ne_(est_ids.size()) {
    split_.resize(p_ * ns_);
    est_.resize(p_ * ne_);
    for (std::size_t f = 0; f < p_; ++f) {
      init(split_ids, split_.data() + f * ns_, f);
      init(est_ids, est_.data() + f * ne_, f);
    }
  }

  std::span<const std::uint32_t> split(std::size_t f, std::size_t b, std::size_t e) const {
    return {split_.data() + f * ns_ + b, e - b};
  }
  std::span<const std::uint32_t> est(std::size_t f, std::size_t b, std::size_t e) const {
    return {est_.data() + f * ne_ + b, e - b};
  }

  // Reorders every feature's segments so that the left child's samples come
  // first, preserving sorted order within each side.
  void partition(const WorkItem& item, std::size_t feature, std::size_t split_left,
                 std::size_t est_left, std::vector<std::uint8_t>& goes_left) {
    const auto s_sorted = split(feature, item.split_begin, item.split_end);
    const auto e_sorted = est(feature, item.est_begin, item.est_end);
    for (std::size_t k = 0; k < s_sorted.size(); ++k) goes_left[s_sorted[k]] = k < split_left;
    for (std::size_t k = 0; k < e_sorted.size(); ++k) goes_left[e_sorted[k]] = k < est_left;
    for (std::size_t f = 0; f < p_; ++f) {
      if (f == feature) continue;
      stable_split(split_.data() + f * ns_ + item.split_begin, item.split_end - item.split_begin, goes_left);
      stable_split(est_.data() + f * ne_ + item.est_begin, item.est_end - item.est_begin, goes_left);
    }
  }

 private:
  void init(std::span<const std::uint32_t> ids, std::uint32_t* out, std::size_t f) {
    std::copy(ids.begin(), ids.end(), out);
    std::sort(out, out + ids.size(), [&](std::uint32_t a, std::uint32_t b) {
      const double va = x_(a, f), vb = x_(b, f);
      return va < vb || (va == vb && a < b);
    });
  }

  void stable_split(std::uint32_t* seg, std::size_t len, const std::vector<std::uint8_t>& left) {
    buffer_.clear();
    std::size_t w = 0;
    for (std::size_t k = 0; k < len; ++k) {
      if (left[seg[k]]) {
        seg[w++] = seg[k];
      } else {
        buffer_.push_back(seg[k]);
      }
    }
    std::copy(buffer_.begin(), buffer_.end(), seg + w);
  }

  const Matrix& x_;
  std::size_t p_, ns_, ne_;
  std::vector<std::uint32_t> split_;
  std::vector<std::uint32_t> est_;
  std::vector<std::uint32_t> buffer_;
};

Candidate best_split(const Matrix& x, const SplitTargets& t, SplitRule rule,
                     const NodeOrders& orders, const WorkItem& item, const ForestParams& params,
                     std::size_t mtry, Rng& rng, std::vector<std::size_t>& features) {
  Candidate best;
  const std::size_t ns = item.split_end - item.split_begin;
  const std::size_t ne = item.est_end - item.est_begin;
  const std::size_t min_leaf = params.min_leaf_size;
  if (ns < 2 * min_leaf || ne < 2 * min_leaf) return best;

  const auto any_split = orders.split(0, item.split_begin, item.split_end);
  const auto any_est = orders.est(0, item.est_begin, item.est_end);
  const double a_total = kernels::gather_sum(t.a, any_split);
  const double b_total = kernels::gather_sum(t.b, any_split);
  const double be_total = kernels::gather_sum(t.b, any_est);
  if (!(b_total > 0.0)) return best;

  const double parent = node_score(a_total, b_total);
  const double tol = 1e-12 * std::max(1.0, std::abs(parent));
  // R-loss children need an identifiable effect (sum of w_tilde^2 > 0) in
  // both the split and the estimation half.
  const double b_floor = rule == SplitRule::kRLoss ? 1e-12 * b_total : 0.0;
  const double be_floor = rule == SplitRule::kRLoss ? 1e-12 * be_total : 0.0;

  // Candidate features: mtry distinct indices, visited in ascending order so
  // that gain ties resolve to the smallest (feature, threshold).
  const std::size_t p = x.cols();
  features.resize(p);
  std::iota(features.begin(), features.end(), std::size_t{0});
  for (std::size_t k = 0; k < mtry; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, p - 1);
    std::swap(features[k], features[pick(rng)]);
  }
  std::sort(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(mtry));

  for (std::size_t fk = 0; fk < mtry; ++fk) {
    const std::size_t f = features[fk];
    const auto s_sorted = orders.split(f, item.split_begin, item.split_end);
    const auto e_sorted = orders.est(f, item.est_begin, item.est_end);
    if (x(s_sorted.front(), f) == x(s_sorted.back(), f)) continue;

    double a_left = 0.0, b_left = 0.0, be_left = 0.0;
    std::size_t e_ptr = 0;
    for (std::size_t k = 0; k + 1 < ns; ++k) {
      const std::uint32_t i = s_sorted[k];
      a_left += t.a[i];
      b_left += t.b[i];
      const double v = x(i, f);
      const double v_next = x(s_sorted[k + 1], f);
      if (v == v_next) continue;
      const std::size_t n_left = k + 1;
      if (n_left < min_leaf) continue;
      if (ns - n_left < min_leaf) break;

      double threshold = v + (v_next - v) / 2.0;
      if (!(threshold < v_next)) threshold = v;

      while (e_ptr < ne && x(e_sorted[e_ptr], f) <= threshold) {
        be_left += t.b[e_sorted[e_ptr]];
        ++e_ptr;
      }
      if (e_ptr < min_leaf || ne - e_ptr < min_leaf) continue;

      const double b_right = b_total - b_left;
      if (!(b_left > b_floor) || !(b_right > b_floor)) continue;
      if (!(be_left > be_floor) || !(be_total - be_left > be_floor)) continue;

      const double gain = node_score(a_left, b_left) + node_score(a_total - a_left, b_right) - parent;
      if (gain > tol && (!best.found || gain > best.gain)) {
        best = {true, f, threshold, gain, n_left, e_ptr};
      }
    }
  }
  return best;
}

double leaf_value(const SplitTargets& t, std::span<const std::uint32_t> est_ids,
                  std::span<const std::uint32_t> split_ids) {
  auto ratio = [&](std::span<const std::uint32_t> ids) {
    const double a = kernels::gather_sum(t.a, ids);
    const double b = kernels::gather_sum(t.b, ids);
    return b > 0.0 ? a / b : 0.0;
  };
  return est_ids.empty() ? ratio(split_ids) : ratio(est_ids);
}

}  // namespace

Tree grow_tree(const Matrix& x, const SplitTargets& targets, SplitRule rule,
               std::vector<std::uint32_t> split_ids, std::vector<std::uint32_t> estimation_ids,
               const ForestParams& params, std::uint64_t tree_seed) {
  Rng rng(tree_seed);
  Tree tree;
  std::sort(split_ids.begin(), split_ids.end());
  std::sort(estimation_ids.begin(), estimation_ids.end());
  tree.split_sample_ids = std::move(split_ids);
  tree.estimation_sample_ids = std::move(estimation_ids);
  if (tree.split_sample_ids.empty()) throw DataError("grow_tree: empty split sample");

  NodeOrders orders(x, tree.split_sample_ids, tree.estimation_sample_ids);
  std::vector<std::uint8_t> goes_left(x.rows(), 0);
  std::vector<std::size_t> features;
  const std::size_t mtry = params.resolved_mtry(x.cols());

  tree.nodes.emplace_back();
  std::deque<WorkItem> queue{
      {0, 0, tree.split_sample_ids.size(), 0, tree.estimation_sample_ids.size()}};
  while (!queue.empty()) {
    const WorkItem item = queue.front();
    queue.pop_front();
    const auto s_span = orders.split(0, item.split_begin, item.split_end);
    const auto e_span = orders.est(0, item.est_begin, item.est_end);
    const std::uint32_t depth = tree.nodes[item.node].depth;
    tree.nodes[item.node].num_split_samples = static_cast<std::uint32_t>(s_span.size());
    // Internal nodes keep their own honest estimate for display.
    tree.nodes[item.node].value = leaf_value(targets, e_span, s_span);

    Candidate c;
    if (!params.max_depth || depth <= *params.max_depth) {
      c = best_split(x, targets, rule, orders, item, params, mtry, rng, features);
    }
    if (!c.found) {
      Node& leaf = tree.nodes[item.node];
      leaf.leaf_begin = static_cast<std::uint32_t>(tree.leaf_samples.size());
      tree.leaf_samples.insert(tree.leaf_samples.end(), e_span.begin(), e_span.end());
      std::sort(tree.leaf_samples.begin() + leaf.leaf_begin, tree.leaf_samples.end());
      leaf.leaf_end = static_cast<std::uint32_t>(tree.leaf_samples.size());
      continue;
    }

    orders.partition(item, c.feature, c.split_left, c.est_left, goes_left);

    const auto left = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[left].depth = depth + 1;
    tree.nodes[left + 1].depth = depth + 1;
    Node& parent = tree.nodes[item.node];
    parent.feature = static_cast<std::int32_t>(c.feature);
    parent.threshold = c.threshold;
    parent.left = left;
    parent.right = left + 1;

    queue.push_back({left, item.split_begin, item.split_begin + c.split_left, item.est_begin,
                     item.est_begin + c.est_left});
    queue.push_back({left + 1, item.split_begin + c.split_left, item.split_end,
                     item.est_begin + c.est_left, item.est_end});
  }
  return tree;
}

Forest fit_forest(const Matrix& x, const SplitTargets& targets, SplitRule rule,
                  const ForestParams& params) {
  params.validate();
  const std::size_t n = x.rows();
  if (targets.a.size() != n || targets.b.size() != n) {
    throw DataError("fit_forest: covariate rows and target length differ");
  }
  if (x.cols() == 0) throw DataError("fit_forest: no covariates");
  if (n < 2 * params.min_leaf_size) {
    throw DataError("fit_forest: need at least 2*min_leaf_size = " +
                    std::to_string(2 * params.min_leaf_size) + " rows, got " + std::to_string(n));
  }
  if (n > std::numeric_limits<std::uint32_t>::max()) throw DataError("fit_forest: too many rows");

  const std::size_t k =
      std::max<std::size_t>(1, static_cast<std::size_t>(params.subsample_ratio * static_cast<double>(n)));
  const std::size_t k_split =
      params.honesty
          ? std::max<std::size_t>(1, static_cast<std::size_t>(params.honesty_ratio * static_cast<double>(k)))
          : k;

  std::vector<Tree> trees(params.num_trees);
  parallel_for(params.num_trees, [&](std::size_t b) {
    const std::uint64_t tree_seed = derive_seed(params.seed, b);
    Rng rng(tree_seed);
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0U);
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<std::uint32_t> split_ids(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_split));
    std::vector<std::uint32_t> est_ids;
    if (params.honesty) {
      est_ids.assign(idx.begin() + static_cast<std::ptrdiff_t>(k_split),
                     idx.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      est_ids = split_ids;
    }
    trees[b] = grow_tree(x, targets, rule, std::move(split_ids), std::move(est_ids), params,
                         mix_seed(tree_seed));
  });
  return Forest(params, rule, n, x.cols(), std::move(trees));
}

Forest fit_regression_forest(const Matrix& x, std::span<const double> target,
                             const ForestParams& params) {
  return fit_forest(x, variance_targets(target), SplitRule::kVariance, params);
}

std::vector<double> predict(const Forest& f, const Matrix& x_query) {
  if (f.empty()) throw DataError("predict: forest has no trees");
  if (x_query.cols() != f.num_features()) {
    throw DataError("predict: query has " + std::to_string(x_query.cols()) +
                    " columns, forest was fit on " + std::to_string(f.num_features()));
  }
  std::vector<double> out(x_query.rows());
  parallel_for(x_query.rows(), [&](std::size_t r) {
    const auto row = x_query.row(r);
    double acc = 0.0;
    for (const Tree& t : f.trees()) acc += t.predict(row);
    out[r] = acc / static_cast<double>(f.size());
  });
  return out;
}

std::size_t OobPrediction::num_undefined() const {
  return static_cast<std::size_t>(std::count(votes.begin(), votes.end(), 0U));
}

OobPrediction predict_oob(const Forest& f, const Matrix& x_train) {
  if (x_train.rows() != f.num_samples() || x_train.cols() != f.num_features()) {
    throw DataError("predict_oob: matrix is not the training matrix shape");
  }
  OobPrediction out;
  out.values.assign(x_train.rows(), std::numeric_limits<double>::quiet_NaN());
  out.votes.assign(x_train.rows(), 0);
  parallel_for(x_train.rows(), [&](std::size_t i) {
    const auto row = x_train.row(i);
    double acc = 0.0;
    std::uint32_t votes = 0;
    for (std::size_t b = 0; b < f.size(); ++b) {
      if (f.in_subsample(b, i)) continue;
      acc += f.tree(b).predict(row);
      ++votes;
    }
    out.votes[i] = votes;
    if (votes > 0) out.values[i] = acc / votes;
  });
  return out;
}

double r_loss(std::span<const double> tau_hat, std::span<const double> y_tilde,
              std::span<const double> w_tilde) {
  if (tau_hat.size() != y_tilde.size() || tau_hat.size() != w_tilde.size()) {
    throw DataError("r_loss: length mismatch");
  }
  if (tau_hat.empty()) throw DataError("r_loss: empty input");
  return kernels::residual_sq_sum(y_tilde, w_tilde, tau_hat) / static_cast<double>(tau_hat.size());
}

// ---- persistence -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'F', 'A', 'F', 'O', 'R', 'S', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("forest file truncated");
  return v;
}

template <typename T>
std::vector<T> get_vec(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 34)) throw DataError("forest file corrupt (vector length)");
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw DataError("forest file truncated");
  return v;
}

}  // namespace

void save_forest(const Forest& f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write forest file: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kFormatVersion);
  put(out, static_cast<std::uint32_t>(f.rule()));
  const ForestParams& p = f.params();
  put<std::uint64_t>(out, p.num_trees);
  put(out, p.subsample_ratio);
  put<std::uint8_t>(out, p.honesty ? 1 : 0);
  put(out, p.honesty_ratio);
  put<std::uint64_t>(out, p.min_leaf_size);
  put<std::uint64_t>(out, p.max_depth.value_or(0));
  put<std::uint64_t>(out, p.mtry);
  put<std::uint64_t>(out, p.seed);
  put<std::uint64_t>(out, f.num_samples());
  put<std::uint64_t>(out, f.num_features());
  put<std::uint64_t>(out, f.size());
  for (const Tree& t : f.trees()) {
    put<std::uint64_t>(out, t.nodes.size());
    for (const Node& nd : t.nodes) {
      put(out, nd.feature);
      put(out, nd.threshold);
      put(out, nd.left);
      put(out, nd.right);
      put(out, nd.depth);
      put(out, nd.value);
      put(out, nd.num_split_samples);
      put(out, nd.leaf_begin);
      put(out, nd.leaf_end);
    }
    put_vec(out, t.leaf_samples);
    put_vec(out, t.split_sample_ids);
    put_vec(out, t.estimation_sample_ids);
  }
  if (!out) throw DataError("failed writing forest file: " + path.string());
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing forest artifact: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw DataError("not a forest file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw DataError("forest file version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kFormatVersion) + "): " + path.string());
  }
  const auto rule = static_cast<SplitRule>(get<std::uint32_t>(in));
  ForestParams p;
  p.num_trees = get<std::uint64_t>(in);
  p.subsample_ratio = get<double>(in);
  p.honesty = get<std::uint8_t>(in) != 0;
  p.honesty_ratio = get<double>(in);
  p.min_leaf_size = get<std::uint64_t>(in);
  if (const auto depth = get<std::uint64_t>(in); depth != 0) p.max_depth = depth;
  p.mtry = get<std::uint64_t>(in);
  p.seed = get<std::uint64_t>(in);
  const auto num_samples = get<std::uint64_t>(in);
  const auto num_features = get<std::uint64_t>(in);
  const auto num_trees = get<std::uint64_t>(in);
  std::vector<Tree> trees(num_trees);
  for (Tree& t : trees) {
    t.nodes.resize(get<std::uint64_t>(in));
    for (Node& nd : t.nodes) {
      nd.feature = get<std::int32_t>(in);
      nd.threshold = get<double>(in);
      nd.left = get<std::uint32_t>(in);
      nd.right = get<std::uint32_t>(in);
      nd.depth = get<std::uint32_t>(in);
      nd.value = get<double>(in);
      nd.num_split_samples = get<std::uint32_t>(in);
      nd.leaf_begin = get<std::uint32_t>(in);
      nd.leaf_end = get<std::uint32_t>(in);
    }
    t.leaf_samples = get_vec<std::uint32_t>(in);
    t.split_sample_ids = get_vec<std::uint32_t>(in);
    t.estimation_sample_ids = get_vec<std::uint32_t>(in);
  }
  return Forest(p, rule, num_samples, num_features, std::move(trees));
}

}  // namespace cfaudit
