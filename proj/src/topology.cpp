#include "optree/topology.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "optree/error.hpp"

namespace optree {

TreeTopology::TreeTopology(unsigned depth) : depth_(depth) {
  if (depth > kMaxDepth) {
    throw ModelError("tree depth " + std::to_string(depth) + " exceeds the supported maximum of " +
                     std::to_string(kMaxDepth));
  }
}

void TreeTopology::check(NodeId n) const {
  if (!contains(n)) throw ModelError("node " + std::to_string(n) + " is not in a tree of depth " + std::to_string(depth_));
}

std::vector<NodeId> TreeTopology::branch_nodes() const {
  std::vector<NodeId> out;
  for (NodeId n = 1; n < first_leaf(); ++n) out.push_back(n);
  return out;
}

std::vector<NodeId> TreeTopology::leaf_nodes() const {
  std::vector<NodeId> out;
  for (NodeId n = first_leaf(); n <= last_leaf(); ++n) out.push_back(n);
  return out;
}

NodeId TreeTopology::parent(NodeId n) const {
  check(n);
  if (n == 1) throw ModelError("the root has no parent");
  return n / 2;
}

std::vector<NodeId> TreeTopology::path(NodeId n) const {
  check(n);
  std::vector<NodeId> out;
  for (NodeId k = n; k >= 1; k /= 2) out.push_back(k);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<NodeId> TreeTopology::left_ancestors(NodeId n) const {
  std::vector<NodeId> out;
  const auto p = path(n);
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    if (p[k + 1] == left_child(p[k])) out.push_back(p[k]);
  }
  return out;
}

std::vector<NodeId> TreeTopology::right_ancestors(NodeId n) const {
  std::vector<NodeId> out;
  const auto p = path(n);
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    if (p[k + 1] == right_child(p[k])) out.push_back(p[k]);
  }
  return out;
}

std::vector<NodeId> TreeTopology::subtree_leaves(NodeId n) const {
  check(n);
  // Node n sits at level floor(log2 n); its leaves form a contiguous block.
  const unsigned level = static_cast<unsigned>(std::bit_width(n)) - 1;
  const unsigned below = depth_ - level;
  std::vector<NodeId> out;
  const NodeId first = n << below;
  for (NodeId k = 0; k < (NodeId{1} << below); ++k) out.push_back(first + k);
  return out;
}

std::vector<NodeId> TreeTopology::left_subtree_leaves(NodeId n) const {
  if (!is_branch(n)) throw ModelError("node " + std::to_string(n) + " is not a branch node");
  return subtree_leaves(left_child(n));
}

std::vector<NodeId> TreeTopology::right_subtree_leaves(NodeId n) const {
  if (!is_branch(n)) throw ModelError("node " + std::to_string(n) + " is not a branch node");
  return subtree_leaves(right_child(n));
}

}  // namespace optree
