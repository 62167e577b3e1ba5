#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dtlns/common.hpp"

namespace dtlns::tree {

/// Child-slot indices along a root-to-leaf walk.
struct PathCode {
  std::vector<std::uint32_t> indices;

  std::size_t size() const noexcept { return indices.size(); }
  friend bool operator==(const PathCode&, const PathCode&) = default;
};

struct TreeNode {
  std::uint32_t parent = 0;  // root points to itself
  std::uint32_t slot = 0;    // index among the parent's children
  std::uint32_t depth = 0;   // root is 0
  std::vector<std::uint32_t> children;
  std::vector<double> centroid;
  std::vector<ItemId> items;  // leaves only, ascending

  bool is_leaf() const noexcept { return children.empty(); }
};

struct IndexTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root, depth-first pre-order
  std::size_t branching = 0;
  std::size_t leaf_size = 0;
  std::size_t item_count = 0;

  std::size_t depth() const;
  std::size_t leaf_count() const;
};

/// Recursive k-means partition: a node holding more than `leaf_size` items is
/// split into at most `branching` non-empty children. Children are ordered by
/// descending size, ties by smallest contained item id.
IndexTree build_kary_tree(const Matrix& embeddings, std::size_t branching, std::size_t leaf_size,
                          std::uint64_t seed);

struct KMeansResult {
  std::vector<std::uint32_t> assignment;  // cluster per point
  std::size_t clusters = 0;               // non-empty clusters, relabelled 0..clusters-1
  std::size_t iterations = 0;
};

/// Lloyd's k-means with k-means++ seeding over the rows listed in `rows`.
KMeansResult kmeans(const Matrix& embeddings, const std::vector<ItemId>& rows, std::size_t k,
                    std::size_t max_iter, std::uint64_t seed);

/// One code per item. A tree that is a single leaf yields the code (0).
std::vector<PathCode> path_codes(const IndexTree& tree);

/// Node reached by walking `code` from the root.
std::uint32_t decode(const IndexTree& tree, const PathCode& code);

/// Longest common prefix divided by the shorter code's length.
double lcp_similarity(const PathCode& a, const PathCode& b);

struct DualCodes {
  std::vector<PathCode> collab;
  std::vector<PathCode> semantic;
};

std::string format_code(const PathCode& code);  // "3,1,2"
PathCode parse_code(std::string_view text);

// `item_id<TAB>c:3,1,2<TAB>s:0,2`, one line per item.
void write_codes(const std::filesystem::path& path, const DualCodes& codes);
DualCodes read_codes(const std::filesystem::path& path);

// Line-oriented topology: header, then one line per node.
std::string serialize_tree(const IndexTree& tree);
void write_tree(const std::filesystem::path& path, const IndexTree& tree);

}  // namespace dtlns::tree
