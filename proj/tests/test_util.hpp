#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cfaudit/forest.hpp"

namespace cfaudit::testing {

inline std::vector<double> uniform_vector(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                          double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// A leaf holding the given estimation members.
inline Node leaf_node(std::uint32_t depth, double value, std::uint32_t begin, std::uint32_t end) {
  Node n;
  n.depth = depth;
  n.value = value;
  n.leaf_begin = begin;
  n.leaf_end = end;
  return n;
}

inline Node split_node(std::uint32_t depth, std::int32_t feature, double threshold,
                       std::uint32_t left, std::uint32_t right) {
  Node n;
  n.depth = depth;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  return n;
}

// One-leaf tree whose estimation sample is `members`.
inline Tree single_leaf_tree(std::vector<std::uint32_t> members, double value = 0.0) {
  Tree t;
  t.nodes.push_back(leaf_node(1, value, 0, static_cast<std::uint32_t>(members.size())));
  t.leaf_samples = members;
  t.split_sample_ids = members;
  t.estimation_sample_ids = members;
  return t;
}

}  // namespace cfaudit::testing

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

namespace cfaudit::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cfaudit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name, const std::string& contents) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << contents;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace cfaudit::testing
