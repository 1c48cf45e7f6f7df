#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace optree {

using NodeId = std::uint32_t;

// Perfect binary tree of depth D in heap order: root 1, children 2n and
// 2n + 1. Branch nodes are 1 .. 2^D - 1, leaves 2^D .. 2^(D+1) - 1.
class TreeTopology {
 public:
  static constexpr unsigned kMaxDepth = 12;

  explicit TreeTopology(unsigned depth);

  unsigned depth() const { return depth_; }
  NodeId root() const { return 1; }
  std::size_t num_nodes() const { return (std::size_t{2} << depth_) - 1; }
  std::size_t num_branches() const { return (std::size_t{1} << depth_) - 1; }
  std::size_t num_leaves() const { return std::size_t{1} << depth_; }
  NodeId first_leaf() const { return NodeId{1} << depth_; }
  NodeId last_leaf() const { return (NodeId{2} << depth_) - 1; }

  bool contains(NodeId n) const { return n >= 1 && n <= last_leaf(); }
  bool is_branch(NodeId n) const { return n >= 1 && n < first_leaf(); }
  bool is_leaf(NodeId n) const { return n >= first_leaf() && n <= last_leaf(); }

  // Dense positions: branch n -> n - 1, leaf n -> n - 2^D.
  std::size_t branch_index(NodeId n) const { return n - 1; }
  std::size_t leaf_index(NodeId n) const { return n - first_leaf(); }

  std::vector<NodeId> branch_nodes() const;
  std::vector<NodeId> leaf_nodes() const;

  static NodeId left_child(NodeId n) { return 2 * n; }
  static NodeId right_child(NodeId n) { return 2 * n + 1; }
  NodeId parent(NodeId n) const;

  // Root-to-n path including n.
  std::vector<NodeId> path(NodeId n) const;
  // Ancestors whose left (right) subtree contains n, root first.
  std::vector<NodeId> left_ancestors(NodeId n) const;
  std::vector<NodeId> right_ancestors(NodeId n) const;
  // Leaves below the left (right) child of branch node n.
  std::vector<NodeId> left_subtree_leaves(NodeId n) const;
  std::vector<NodeId> right_subtree_leaves(NodeId n) const;
  std::vector<NodeId> subtree_leaves(NodeId n) const;

 private:
  void check(NodeId n) const;

  unsigned depth_;
};

}  // namespace optree
