#pragma once

// Bottom-up hierarchical generalization and hierarchy-free subset
// generalization of under-confident predictions.
//
// A super-class's confidence is the summed probability of its leaf
// descendants; a prediction walks up from its argmax leaf until a node reaches
// the threshold, ending at the root ("unknown") if nothing deeper qualifies.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "confident/core.hpp"
#include "confident/error.hpp"

namespace confident {

/// One node as read from a file, before validation.
struct NodeSpec {
  std::string name;
  std::optional<std::string> parent;
  std::optional<std::size_t> class_index;
};

struct HierarchyNode {
  std::string name;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
  std::optional<std::size_t> class_index;  ///< set on leaves only

  bool is_leaf() const noexcept { return children.empty(); }
};

/// Rooted tree whose leaves map one-to-one onto classifier class indices.
class Hierarchy {
public:
  /// Validates a node list: unique names, a single root, no cycles, and a
  /// bijection between leaves and [0, num_classes).
  static Hierarchy build(const std::vector<NodeSpec>& specs, std::size_t num_classes) {
    if (specs.empty()) throw ValidationError("hierarchy has no nodes");
    Hierarchy h;
    std::map<std::string, std::size_t> by_name;
    for (const auto& s : specs) {
      if (s.name.empty()) throw ValidationError("hierarchy node with an empty name");
      auto [it, inserted] = by_name.emplace(s.name, h.nodes_.size());
      if (!inserted) {
        const auto& first = specs[it->second];
        if (first.parent != s.parent) {
          throw ValidationError("node '" + s.name + "' listed with two parents");
        }
        throw ValidationError("node '" + s.name + "' listed twice");
      }
      h.nodes_.push_back({s.name, std::nullopt, {}, s.class_index});
    }

    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!specs[i].parent) {
        roots.push_back(i);
        continue;
      }
      auto it = by_name.find(*specs[i].parent);
      if (it == by_name.end()) {
        throw ValidationError("node '" + specs[i].name + "' has unknown parent '" + *specs[i].parent + "'");
      }
      if (it->second == i) throw ValidationError("cycle: node '" + specs[i].name + "' is its own parent");
      h.nodes_[i].parent = it->second;
      h.nodes_[it->second].children.push_back(i);
    }
    if (roots.empty()) throw ValidationError("hierarchy has no root (cycle through every node)");
    if (roots.size() > 1) {
      std::string names;
      for (std::size_t r : roots) names += (names.empty() ? "" : ", ") + h.nodes_[r].name;
      throw ValidationError("hierarchy has multiple roots: " + names);
    }
    h.root_ = roots.front();

    for (std::size_t i = 0; i < h.nodes_.size(); ++i) {
      std::size_t cur = i;
      std::size_t steps = 0;
      while (h.nodes_[cur].parent) {
        cur = *h.nodes_[cur].parent;
        if (++steps > h.nodes_.size()) {
          throw ValidationError("cycle detected through node '" + h.nodes_[i].name + "'");
        }
      }
    }

    if (h.nodes_[h.root_].is_leaf()) throw ValidationError("hierarchy root has no children");
    h.leaf_of_class_.assign(num_classes, kNone);
    for (std::size_t i = 0; i < h.nodes_.size(); ++i) {
      const auto& n = h.nodes_[i];
      if (!n.is_leaf()) {
        if (n.class_index) {
          throw ValidationError("internal node '" + n.name + "' must not carry a class_index");
        }
        continue;
      }
      if (!n.class_index) throw ValidationError("leaf '" + n.name + "' has no class_index");
      const std::size_t c = *n.class_index;
      if (c >= num_classes) {
        throw ValidationError("leaf '" + n.name + "' maps to class " + std::to_string(c) +
                              " outside [0, " + std::to_string(num_classes) + ")");
      }
      if (h.leaf_of_class_[c] != kNone) {
        throw ValidationError("class " + std::to_string(c) + " mapped by two leaves ('" +
                              h.nodes_[h.leaf_of_class_[c]].name + "', '" + n.name + "')");
      }
      h.leaf_of_class_[c] = i;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (h.leaf_of_class_[c] == kNone) throw ValidationError("class " + std::to_string(c) + " unmapped");
    }
    return h;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t root() const noexcept { return root_; }
  std::size_t num_classes() const noexcept { return leaf_of_class_.size(); }
  const HierarchyNode& node(std::size_t id) const {
    if (id >= nodes_.size()) throw DomainError("unknown node id " + std::to_string(id));
    return nodes_[id];
  }
  const std::vector<HierarchyNode>& nodes() const noexcept { return nodes_; }
  std::size_t leaf_of_class(std::size_t c) const { return leaf_of_class_.at(c); }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].name == name) return i;
    }
    return std::nullopt;
  }

  /// True when `ancestor` is `node` or lies on its path to the root.
  bool is_ancestor_or_self(std::size_t ancestor, std::size_t node) const {
    std::optional<std::size_t> cur = node;
    while (cur) {
      if (*cur == ancestor) return true;
      cur = nodes_[*cur].parent;
    }
    return false;
  }

private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<HierarchyNode> nodes_;
  std::size_t root_ = 0;
  std::vector<std::size_t> leaf_of_class_;
};

namespace detail {

inline void flatten_tree(const nlohmann::json& j, const std::optional<std::string>& parent,
                         std::vector<NodeSpec>& out, std::size_t depth) {
  if (depth > 10000) throw ValidationError("hierarchy nesting too deep");
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
    throw ValidationError("every hierarchy node needs a string 'name'");
  }
  NodeSpec spec{j["name"].get<std::string>(), parent, std::nullopt};
  if (j.contains("class_index")) {
    if (!j["class_index"].is_number_integer() || j["class_index"].get<long long>() < 0) {
      throw ValidationError("node '" + spec.name + "' has a non-integer or negative class_index");
    }
    spec.class_index = j["class_index"].get<std::size_t>();
  }
  out.push_back(spec);
  if (j.contains("children")) {
    if (!j["children"].is_array()) throw ValidationError("'children' of '" + spec.name + "' must be an array");
    for (const auto& child : j["children"]) flatten_tree(child, spec.name, out, depth + 1);
  }
}

}  // namespace detail

/// Parses either a nested tree `{"name", "children": [...]}` (leaves carry
/// `class_index`) or a flat list `{"nodes": [{"name", "parent", "class_index"}]}`.
inline Hierarchy parse_hierarchy(const nlohmann::json& j, std::size_t num_classes) {
  std::vector<NodeSpec> specs;
  if (j.is_object() && j.contains("nodes")) {
    if (!j["nodes"].is_array()) throw ValidationError("'nodes' must be an array");
    for (const auto& n : j["nodes"]) {
      if (!n.is_object() || !n.contains("name") || !n["name"].is_string()) {
        throw ValidationError("every hierarchy node needs a string 'name'");
      }
      NodeSpec spec{n["name"].get<std::string>(), std::nullopt, std::nullopt};
      if (n.contains("parent") && !n["parent"].is_null()) spec.parent = n["parent"].get<std::string>();
      if (n.contains("class_index")) {
        if (!n["class_index"].is_number_integer() || n["class_index"].get<long long>() < 0) {
          throw ValidationError("node '" + spec.name + "' has a non-integer or negative class_index");
        }
        spec.class_index = n["class_index"].get<std::size_t>();
      }
      specs.push_back(spec);
    }
  } else {
    detail::flatten_tree(j, std::nullopt, specs, 0);
  }
  return Hierarchy::build(specs, num_classes);
}

inline Hierarchy load_hierarchy(const std::filesystem::path& path, const ClassCatalog& catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open hierarchy '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("hierarchy '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_hierarchy(j, catalog.size());
}

namespace detail {

inline void check_distribution(std::span<const double> probs, std::size_t expected) {
  if (probs.size() != expected) {
    throw DomainError("probability vector has " + std::to_string(probs.size()) + " entries, expected " +
                      std::to_string(expected));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw DomainError("probabilities must be finite and non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) throw DomainError("probabilities must sum to 1");
}

inline void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw DomainError("threshold must lie in (0, 1]");
}

}  // namespace detail

/// Mass of every node: leaves take their class probability, internal nodes
/// the sum of their children in listed order.
inline std::vector<double> node_masses(const Hierarchy& h, std::span<const double> probs) {
  detail::check_distribution(probs, h.num_classes());
  std::vector<double> mass(h.size(), 0.0);
  // Post-order over an explicit stack.
  std::vector<std::pair<std::size_t, bool>> stack{{h.root(), false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    const auto& n = h.node(id);
    if (n.is_leaf()) {
      mass[id] = probs[*n.class_index];
    } else if (!expanded) {
      stack.push_back({id, true});
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back({*it, false});
    } else {
      double sum = 0.0;
      for (std::size_t c : n.children) sum += mass[c];
      mass[id] = sum;
    }
  }
  return mass;
}

inline double node_mass(const Hierarchy& h, std::size_t node, std::span<const double> probs) {
  if (node >= h.size()) throw DomainError("unknown node id " + std::to_string(node));
  return node_masses(h, probs)[node];
}

struct PathStep {
  std::size_t node = 0;
  std::string name;
  double confidence = 0.0;
};

struct GeneralizationResult {
  /// From the argmax leaf upward, ending at the chosen node.
  std::vector<PathStep> path;
  std::size_t chosen = 0;  ///< index into path
  double threshold = 0.0;
  bool unknown = false;  ///< chosen node is the root

  const PathStep& chosen_step() const { return path.at(chosen); }
};

/// Walks up from the argmax leaf to the first node whose mass is >= threshold.
inline GeneralizationResult generalize(const Hierarchy& h, std::span<const double> probs, double threshold) {
  detail::check_threshold(threshold);
  const auto mass = node_masses(h, probs);
  GeneralizationResult result;
  result.threshold = threshold;
  std::optional<std::size_t> cur = h.leaf_of_class(argmax_class(probs));
  while (cur) {
    result.path.push_back({*cur, h.node(*cur).name, mass[*cur]});
    if (mass[*cur] >= threshold) break;
    cur = h.node(*cur).parent;
  }
  // Rounding can leave the root a hair under a threshold of 1; the root is
  // the answer regardless.
  result.chosen = result.path.size() - 1;
  result.unknown = result.path.back().node == h.root();
  return result;
}

struct SubsetMember {
  std::size_t class_index = 0;
  double confidence = 0.0;
};

struct SubsetResult {
  std::vector<SubsetMember> members;  ///< descending confidence, ties by class index
  double total_confidence = 0.0;
  double threshold = 0.0;
};

/// Smallest descending-confidence prefix of classes whose summed probability
/// reaches the threshold. If rounding keeps the full sum below a threshold of
/// 1, every class is returned.
inline SubsetResult subset_generalize(std::span<const double> probs, double threshold) {
  detail::check_threshold(threshold);
  if (probs.empty()) throw DomainError("subset generalization of an empty vector");
  detail::check_distribution(probs, probs.size());
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  SubsetResult result;
  result.threshold = threshold;
  for (std::size_t c : order) {
    result.members.push_back({c, probs[c]});
    result.total_confidence += probs[c];
    if (result.total_confidence >= threshold) break;
  }
  return result;
}

}  // namespace confident
