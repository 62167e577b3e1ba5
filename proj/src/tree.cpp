#include "dtlns/tree.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dtlns/simd/kernels.hpp"

namespace dtlns::tree {

std::size_t IndexTree::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes) d = std::max<std::size_t>(d, n.depth);
  return d;
}

std::size_t IndexTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

KMeansResult kmeans(const Matrix& embeddings, const std::vector<ItemId>& rows, std::size_t k,
                    std::size_t max_iter, std::uint64_t seed) {
  const std::size_t n = rows.size();
  const std::size_t dim = embeddings.cols();
  k = std::min(k, n);
  KMeansResult res;
  res.assignment.assign(n, 0);
  if (k <= 1) {
    res.clusters = n > 0 ? 1 : 0;
    return res;
  }

  Rng rng(seed);
  Matrix centers(k, dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  // k-means++ seeding.
  std::size_t chosen = 1;
  {
    const auto first = uniform_index(rng, n);
    std::copy_n(embeddings.row(rows[first]).begin(), dim, centers.row(0).begin());
  }
  for (; chosen < k; ++chosen) {
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      d2[p] = std::min(d2[p], simd::squared_distance(embeddings.row(rows[p]), centers.row(chosen - 1)));
      total += d2[p];
    }
    if (total <= 0.0) break;  // every remaining point coincides with a center
    double target = uniform_unit(rng) * total;
    std::size_t pick = n - 1;
    for (std::size_t p = 0; p < n; ++p) {
      target -= d2[p];
      if (target < 0.0 && d2[p] > 0.0) {
        pick = p;
        break;
      }
    }
    if (d2[pick] <= 0.0) {
      // Rounding pushed the pick onto a zero-weight point; take the farthest.
      pick = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    }
    std::copy_n(embeddings.row(rows[pick]).begin(), dim, centers.row(chosen).begin());
  }
  if (chosen < 2) {
    res.clusters = 1;
    return res;
  }
  k = chosen;

  std::vector<std::size_t> counts(k);
  std::vector<double> best_dist(n);
  bool first_pass = true;
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    bool changed = first_pass;
    first_pass = false;
    for (std::size_t p = 0; p < n; ++p) {
      const auto x = embeddings.row(rows[p]);
      std::uint32_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = simd::squared_distance(x, centers.row(c));
        if (d < bd) {
          bd = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      best_dist[p] = bd;
      if (res.assignment[p] != best) {
        res.assignment[p] = best;
        changed = true;
      }
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (auto a : res.assignment) ++counts[a];
    // Empty clusters take the point farthest from its current center.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t p = 0; p < n; ++p) {
        if (counts[res.assignment[p]] > 1 && (far == n || best_dist[p] > best_dist[far])) far = p;
      }
      if (far == n) break;
      --counts[res.assignment[far]];
      res.assignment[far] = static_cast<std::uint32_t>(c);
      counts[c] = 1;
      best_dist[far] = 0.0;
      changed = true;
    }
    if (!changed) break;
    centers.fill(0.0);
    for (std::size_t p = 0; p < n; ++p) {
      simd::axpy(1.0, embeddings.row(rows[p]), centers.row(res.assignment[p]));
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[c]);
      for (auto& v : centers.row(c)) v *= inv;
    }
  }

  std::vector<std::uint32_t> relabel(k, std::numeric_limits<std::uint32_t>::max());
  std::uint32_t next = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) relabel[c] = next++;
  }
  for (auto& a : res.assignment) a = relabel[a];
  res.clusters = next;
  return res;
}

namespace {

constexpr std::size_t kKMeansIterations = 50;

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& e, std::size_t k, std::size_t m, IndexTree& out)
      : emb_(e), k_(k), m_(m), out_(out) {}

  std::uint32_t build(std::vector<ItemId> items, std::uint32_t parent, std::uint32_t slot,
                      std::uint32_t depth, std::uint64_t seed) {
    const auto id = static_cast<std::uint32_t>(out_.nodes.size());
    out_.nodes.emplace_back();
    {
      auto& node = out_.nodes.back();
      node.parent = id == 0 ? 0 : parent;
      node.slot = slot;
      node.depth = depth;
      node.centroid.assign(emb_.cols(), 0.0);
      for (ItemId i : items) simd::axpy(1.0, emb_.row(i), node.centroid);
      for (auto& v : node.centroid) v /= static_cast<double>(items.size());
    }
    if (items.size() <= m_) {
      out_.nodes[id].items = std::move(items);
      return id;
    }

    auto groups = partition(items, seed);
    std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
      return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
    });
    std::vector<std::uint32_t> children;
    for (std::uint32_t s = 0; s < groups.size(); ++s) {
      children.push_back(build(std::move(groups[s]), id, s, depth + 1, mix_seed(seed, s)));
    }
    out_.nodes[id].children = std::move(children);
    return id;
  }

 private:
  std::vector<std::vector<ItemId>> partition(const std::vector<ItemId>& items, std::uint64_t seed) {
    const auto km = kmeans(emb_, items, k_, kKMeansIterations, seed);
    std::vector<std::vector<ItemId>> groups;
    if (km.clusters >= 2) {
      groups.resize(km.clusters);
      for (std::size_t p = 0; p < items.size(); ++p) groups[km.assignment[p]].push_back(items[p]);
    } else {
      spdlog::debug("build_kary_tree: degenerate node of {} items, splitting round-robin",
                    items.size());
      groups.resize(std::min(k_, items.size()));
      for (std::size_t p = 0; p < items.size(); ++p) groups[p % groups.size()].push_back(items[p]);
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    return groups;
  }

  const Matrix& emb_;
  std::size_t k_;
  std::size_t m_;
  IndexTree& out_;
};

}  // namespace

IndexTree build_kary_tree(const Matrix& embeddings, std::size_t branching, std::size_t leaf_size,
                          std::uint64_t seed) {
  if (branching < 2) throw PreconditionError("build_kary_tree: branching must be >= 2");
  if (leaf_size < 1) throw PreconditionError("build_kary_tree: leaf size must be >= 1");
  if (embeddings.rows() == 0) throw PreconditionError("build_kary_tree: no items");

  IndexTree tree;
  tree.branching = branching;
  tree.leaf_size = leaf_size;
  tree.item_count = embeddings.rows();
  std::vector<ItemId> all(embeddings.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<ItemId>(i);
  TreeBuilder(embeddings, branching, leaf_size, tree).build(std::move(all), 0, 0, 0, seed);
  return tree;
}

std::vector<PathCode> path_codes(const IndexTree& tree) {
  std::vector<PathCode> codes(tree.item_count);
  for (std::uint32_t id = 0; id < tree.nodes.size(); ++id) {
    const auto& node = tree.nodes[id];
    if (!node.is_leaf()) continue;
    PathCode code;
    if (id == 0) {
      code.indices = {0};
    } else {
      for (std::uint32_t cur = id; cur != 0; cur = tree.nodes[cur].parent) {
        code.indices.push_back(tree.nodes[cur].slot);
      }
      std::reverse(code.indices.begin(), code.indices.end());
    }
    for (ItemId i : node.items) codes.at(i) = code;
  }
  return codes;
}

std::uint32_t decode(const IndexTree& tree, const PathCode& code) {
  if (tree.nodes.empty() || code.indices.empty()) throw PreconditionError("decode: empty input");
  if (tree.nodes[0].is_leaf()) {
    if (code.indices != std::vector<std::uint32_t>{0}) throw PreconditionError("decode: bad code");
    return 0;
  }
  std::uint32_t cur = 0;
  for (auto slot : code.indices) {
    const auto& children = tree.nodes[cur].children;
    if (slot >= children.size()) throw PreconditionError("decode: code leaves the tree");
    cur = children[slot];
  }
  if (!tree.nodes[cur].is_leaf()) throw PreconditionError("decode: code stops above a leaf");
  return cur;
}

double lcp_similarity(const PathCode& a, const PathCode& b) {
  if (a.indices.empty() || b.indices.empty()) {
    throw PreconditionError("lcp_similarity: empty path code");
  }
  const std::size_t shorter = std::min(a.size(), b.size());
  std::size_t l = 0;
  while (l < shorter && a.indices[l] == b.indices[l]) ++l;
  return static_cast<double>(l) / static_cast<double>(shorter);
}

std::string format_code(const PathCode& code) {
  std::string out;
  for (std::size_t i = 0; i < code.indices.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(code.indices[i]);
  }
  return out;
}

PathCode parse_code(std::string_view text) {
  PathCode code;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto part = text.substr(start, end - start);
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size()) {
      throw Error("malformed path code: " + std::string(text));
    }
    code.indices.push_back(v);
    start = end + 1;
  }
  return code;
}

void write_codes(const std::filesystem::path& path, const DualCodes& codes) {
  if (codes.collab.size() != codes.semantic.size()) {
    throw PreconditionError("write_codes: code tables differ in size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < codes.collab.size(); ++i) {
    out << i << "\tc:" << format_code(codes.collab[i]) << "\ts:" << format_code(codes.semantic[i])
        << '\n';
  }
}

DualCodes read_codes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  DualCodes codes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos || line.compare(t1 + 1, 2, "c:") != 0 ||
        line.compare(t2 + 1, 2, "s:") != 0) {
      throw ParseError("malformed codes line in " + path.string(), line_no);
    }
    if (line.substr(0, t1) != std::to_string(codes.collab.size())) {
      throw ParseError("codes file must list items densely in order", line_no);
    }
    codes.collab.push_back(parse_code(std::string_view(line).substr(t1 + 3, t2 - t1 - 3)));
    codes.semantic.push_back(parse_code(std::string_view(line).substr(t2 + 3)));
  }
  return codes;
}

std::string serialize_tree(const IndexTree& tree) {
  std::ostringstream out;
  out << "# dtlns-tree k=" << tree.branching << " m=" << tree.leaf_size
      << " items=" << tree.item_count << " nodes=" << tree.nodes.size() << " depth=" << tree.depth()
      << '\n';
  char buf[32];
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const auto& n = tree.nodes[id];
    out << id << '\t' << n.parent << '\t' << n.slot << '\t' << n.depth << "\tchildren:";
    for (std::size_t c = 0; c < n.children.size(); ++c) out << (c ? "," : "") << n.children[c];
    out << "\titems:";
    for (std::size_t c = 0; c < n.items.size(); ++c) out << (c ? "," : "") << n.items[c];
    out << "\tcentroid:";
    for (std::size_t c = 0; c < n.centroid.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", n.centroid[c]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  return out.str();
}

void write_tree(const std::filesystem::path& path, const IndexTree& tree) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_tree(tree);
}

}  // namespace dtlns::tree
