#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "payshield/error.hpp"

namespace payshield {

/// Binary decision tree shared by the boosted ensemble (Threshold = bin
/// index) and CART (Threshold = real cut point). A row goes left when
/// row[feature] <= threshold. Node 0 is the root.
template <class Threshold>
class Tree {
 public:
  struct Node {
    bool is_leaf = true;
    int feature = -1;
    Threshold threshold{};
    int left = -1;
    int right = -1;
    bool default_left = true;  // reserved; inputs never carry missing values
    double value = 0.0;        // leaf output
    double gain = 0.0;         // split gain, zero for leaves and for loaded trees
  };

  Tree() : nodes_(1) {}
  explicit Tree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const noexcept { return nodes_.size(); }

  std::size_t leaf_count() const {
    std::size_t n = 0;
    for (const auto& nd : nodes_) n += nd.is_leaf ? 1 : 0;
    return n;
  }

  /// Turns leaf `id` into a split and returns the ids of the two new leaves.
  std::pair<int, int> split(int id, int feature, Threshold threshold, double gain) {
    const int left = static_cast<int>(nodes_.size());
    const int right = left + 1;
    nodes_.emplace_back();
    nodes_.emplace_back();
    Node& nd = nodes_[static_cast<std::size_t>(id)];
    nd.is_leaf = false;
    nd.feature = feature;
    nd.threshold = threshold;
    nd.left = left;
    nd.right = right;
    nd.gain = gain;
    nd.value = 0.0;
    return {left, right};
  }

  void set_leaf_value(int id, double value) { nodes_[static_cast<std::size_t>(id)].value = value; }

  template <class Row>
  int leaf_index(const Row& row) const {
    int id = 0;
    while (!nodes_[static_cast<std::size_t>(id)].is_leaf) {
      const Node& nd = nodes_[static_cast<std::size_t>(id)];
      id = row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return id;
  }

  template <class Row>
  double predict(const Row& row) const {
    return nodes_[static_cast<std::size_t>(leaf_index(row))].value;
  }

  /// Checks single-root reachability, child counts and finite leaves.
  void validate(std::size_t n_features) const {
    std::vector<int> seen(nodes_.size(), 0);
    std::vector<int> stack{0};
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw Error(ErrorKind::kFormatError, "child id " + std::to_string(id) + " out of range");
      }
      if (seen[static_cast<std::size_t>(id)]++) {
        throw Error(ErrorKind::kFormatError, "node " + std::to_string(id) + " reached twice");
      }
      const Node& nd = nodes_[static_cast<std::size_t>(id)];
      if (nd.is_leaf) {
        if (!std::isfinite(nd.value)) {
          throw Error(ErrorKind::kFormatError, "leaf " + std::to_string(id) + " is not finite");
        }
      } else {
        if (nd.feature < 0 || static_cast<std::size_t>(nd.feature) >= n_features) {
          throw Error(ErrorKind::kFormatError, "node " + std::to_string(id) + " splits on unknown feature");
        }
        stack.push_back(nd.left);
        stack.push_back(nd.right);
      }
    }
    for (std::size_t id = 0; id < seen.size(); ++id) {
      if (!seen[id]) throw Error(ErrorKind::kFormatError, "node " + std::to_string(id) + " is unreachable");
    }
  }

  friend bool operator==(const Tree& a, const Tree& b) {
    if (a.nodes_.size() != b.nodes_.size()) return false;
    for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
      const Node& x = a.nodes_[i];
      const Node& y = b.nodes_[i];
      if (x.is_leaf != y.is_leaf) return false;
      if (x.is_leaf ? x.value != y.value
                    : (x.feature != y.feature || x.threshold != y.threshold || x.left != y.left ||
                       x.right != y.right)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Node> nodes_;
};

}  // namespace payshield
