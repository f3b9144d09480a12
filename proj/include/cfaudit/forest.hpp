#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cfaudit/matrix.hpp"

namespace cfaudit {

// Structural regularization of a tree ensemble: honesty, leaf size and
// subsampling are the only regularizers; there is no explicit penalty term.
struct ForestParams {
  std::size_t num_trees = 500;
  double subsample_ratio = 0.5;
  bool honesty = true;
  double honesty_ratio = 0.5;  // share of each subsample used to choose splits
  std::size_t min_leaf_size = 5;
  std::optional<std::size_t> max_depth;  // split levels; root is depth 1
  std::size_t mtry = 0;                  // 0 means ceil(sqrt(p))
  std::uint64_t seed = 42;

  // Throws UsageError on out-of-range values.
  void validate() const;
  std::size_t resolved_mtry(std::size_t p) const;
};

// What a split maximizes. Both are expressed through per-sample pairs (a, b):
// a node's score is (sum a)^2 / (sum b) and its leaf value is sum a / sum b.
//   kVariance: a = target, b = 1 (CART variance reduction, leaf mean)
//   kRLoss:    a = w_tilde * y_tilde, b = w_tilde^2 (R-loss reduction, leaf
//              weighted least-squares effect)
enum class SplitRule : std::uint32_t { kVariance = 0, kRLoss = 1 };

struct Node {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left iff x[feature] <= threshold
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t depth = 1;
  double value = 0.0;  // honest estimate from the estimation samples
  std::uint32_t num_split_samples = 0;
  std::uint32_t leaf_begin = 0;  // leaf estimation ids: leaf_samples[begin, end)
  std::uint32_t leaf_end = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const Node&) const = default;
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root, breadth-first order
  std::vector<std::uint32_t> leaf_samples;
  std::vector<std::uint32_t> split_sample_ids;       // sorted
  std::vector<std::uint32_t> estimation_sample_ids;  // sorted; == split ids without honesty

  std::size_t find_leaf(std::span<const double> row) const;
  double predict(std::span<const double> row) const { return nodes[find_leaf(row)].value; }
  std::span<const std::uint32_t> leaf_members(std::size_t node) const {
    const Node& nd = nodes[node];
    return {leaf_samples.data() + nd.leaf_begin, nd.leaf_end - nd.leaf_begin};
  }
  std::size_t num_leaves() const;

  bool operator==(const Tree&) const = default;
};

class Forest {
 public:
  Forest() = default;
  Forest(ForestParams params, SplitRule rule, std::size_t num_samples, std::size_t num_features,
         std::vector<Tree> trees);

  const ForestParams& params() const { return params_; }
  SplitRule rule() const { return rule_; }
  std::size_t num_samples() const { return num_samples_; }
  std::size_t num_features() const { return num_features_; }
  std::size_t size() const { return trees_.size(); }
  bool empty() const { return trees_.empty(); }
  const Tree& tree(std::size_t b) const { return trees_[b]; }
  const std::vector<Tree>& trees() const { return trees_; }

  // True when training unit i was drawn into tree b's subsample.
  bool in_subsample(std::size_t b, std::size_t i) const {
    return (inbag_[b * words_ + (i >> 6)] >> (i & 63)) & 1U;
  }

  bool operator==(const Forest& o) const {
    return params_.num_trees == o.params_.num_trees && rule_ == o.rule_ &&
           num_samples_ == o.num_samples_ && num_features_ == o.num_features_ &&
           trees_ == o.trees_;
  }

 private:
  void build_inbag();

  ForestParams params_;
  SplitRule rule_ = SplitRule::kVariance;
  std::size_t num_samples_ = 0;
  std::size_t num_features_ = 0;
  std::vector<Tree> trees_;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> inbag_;
};

// Per-sample split statistics for a SplitRule (see above).
struct SplitTargets {
  std::vector<double> a;
  std::vector<double> b;
};

SplitTargets variance_targets(std::span<const double> target);
SplitTargets rloss_targets(std::span<const double> y_tilde, std::span<const double> w_tilde);

// Grows one tree on the given split and estimation samples.
Tree grow_tree(const Matrix& x, const SplitTargets& targets, SplitRule rule,
               std::vector<std::uint32_t> split_ids, std::vector<std::uint32_t> estimation_ids,
               const ForestParams& params, std::uint64_t tree_seed);

// Grows params.num_trees trees in parallel. Tree b draws its subsample and
// feature candidates from derive_seed(params.seed, b), so the result does not
// depend on the thread count.
Forest fit_forest(const Matrix& x, const SplitTargets& targets, SplitRule rule,
                  const ForestParams& params);

Forest fit_regression_forest(const Matrix& x, std::span<const double> target,
                             const ForestParams& params);

// Mean of per-tree leaf values.
std::vector<double> predict(const Forest& f, const Matrix& x_query);

struct OobPrediction {
  std::vector<double> values;         // NaN where undefined
  std::vector<std::uint32_t> votes;   // trees whose subsample excludes the unit
  bool defined(std::size_t i) const { return votes[i] > 0; }
  std::size_t num_undefined() const;
};

// Each unit is predicted by the trees that did not sample it.
OobPrediction predict_oob(const Forest& f, const Matrix& x_train);

// (1/n) * sum_i (y_tilde_i - w_tilde_i * tau_hat_i)^2
double r_loss(std::span<const double> tau_hat, std::span<const double> y_tilde,
              std::span<const double> w_tilde);

// Versioned binary persistence. Round trips are lossless.
void save_forest(const Forest& f, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace cfaudit
