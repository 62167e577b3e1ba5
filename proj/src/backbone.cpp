#include "dtlns/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "dtlns/simd/kernels.hpp"

namespace dtlns::backbone {

std::string to_string(Kind kind) { return kind == Kind::MF ? "mf" : "lightgcn"; }

Kind parse_kind(std::string_view text) {
  if (text == "mf") return Kind::MF;
  if (text == "lightgcn") return Kind::LightGCN;
  throw Error("unknown backbone: " + std::string(text));
}

ModelState init_params(std::size_t user_count, std::size_t item_count, std::size_t dim, Kind kind,
                       std::size_t layers, std::uint64_t seed) {
  if (dim < 1) throw PreconditionError("init_params: embedding dimension must be >= 1");
  ModelState s;
  s.kind = kind;
  s.layers = layers;
  Rng rng(seed);
  auto xavier = [&](std::size_t rows) {
    Matrix m(rows, dim);
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + dim));
    for (auto& v : m.values()) v = (2.0 * uniform_unit(rng) - 1.0) * bound;
    return m;
  };
  s.user_emb = xavier(user_count);
  s.item_emb = xavier(item_count);
  s.adam.m_user = Matrix(user_count, dim);
  s.adam.v_user = Matrix(user_count, dim);
  s.adam.m_item = Matrix(item_count, dim);
  s.adam.v_item = Matrix(item_count, dim);
  return s;
}

Graph build_graph(const dataset::InteractionDataset& ds) {
  Graph g;
  g.user_count = ds.user_count;
  g.item_count = ds.item_count;
  std::vector<std::vector<UserId>> item_users(ds.item_count);
  for (const auto& e : ds.train) item_users[e.item].push_back(e.user);

  auto& a = g.adjacency;
  a.dim = ds.user_count + ds.item_count;
  a.row_ptr.assign(1, 0);
  for (UserId u = 0; u < ds.user_count; ++u) {
    const double du = static_cast<double>(ds.user_pos[u].size());
    for (ItemId i : ds.user_pos[u]) {
      a.col.push_back(static_cast<std::uint32_t>(ds.user_count + i));
      a.val.push_back(1.0 / std::sqrt(du * static_cast<double>(item_users[i].size())));
    }
    a.row_ptr.push_back(a.col.size());
  }
  for (ItemId i = 0; i < ds.item_count; ++i) {
    auto& users = item_users[i];
    std::sort(users.begin(), users.end());
    const double di = static_cast<double>(users.size());
    for (UserId u : users) {
      a.col.push_back(u);
      a.val.push_back(1.0 / std::sqrt(di * static_cast<double>(ds.user_pos[u].size())));
    }
    a.row_ptr.push_back(a.col.size());
  }
  return g;
}

namespace {

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.values().begin(), top.values().end(), out.values().begin());
  std::copy(bottom.values().begin(), bottom.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(top.values().size()));
  return out;
}

void unstack(const Matrix& all, std::size_t top_rows, Matrix& top, Matrix& bottom) {
  const std::size_t d = all.cols();
  top = Matrix(top_rows, d);
  bottom = Matrix(all.rows() - top_rows, d);
  const auto split = all.values().begin() + static_cast<std::ptrdiff_t>(top_rows * d);
  std::copy(all.values().begin(), split, top.values().begin());
  std::copy(split, all.values().end(), bottom.values().begin());
}

// sum_{l=0..L} A^l X / (L + 1); A is symmetric, so this is also the adjoint.
Matrix layer_mean(const CsrMatrix& a, const Matrix& x, std::size_t layers) {
  Matrix acc = x;
  Matrix cur = x, next;
  for (std::size_t l = 0; l < layers; ++l) {
    a.multiply_rows(cur, next);
    simd::axpy(1.0, next.values(), acc.values());
    std::swap(cur, next);
  }
  const double inv = 1.0 / static_cast<double>(layers + 1);
  for (auto& v : acc.values()) v *= inv;
  return acc;
}

}  // namespace

Embeddings propagate(const ModelState& state, const Graph& graph) {
  if (state.kind == Kind::MF || state.layers == 0) return {state.user_emb, state.item_emb};
  const Matrix out = layer_mean(graph.adjacency, stack(state.user_emb, state.item_emb), state.layers);
  Embeddings e;
  unstack(out, state.user_emb.rows(), e.users, e.items);
  return e;
}

double score(const Embeddings& emb, UserId u, ItemId i) {
  return simd::dot(emb.users.row(u), emb.items.row(i));
}

double pair_loss(double diff) {
  // -log sigmoid(x) = log(1 + exp(-x))
  return diff > 0.0 ? std::log1p(std::exp(-diff)) : -diff + std::log1p(std::exp(diff));
}

double bpr_loss(const ModelState& state, const Graph& graph, std::span<const Triple> batch,
                double l2, Gradients* grad, const Embeddings* forward) {
  if (batch.empty()) throw PreconditionError("bpr_loss: empty batch");
  Embeddings local;
  if (!forward) {
    local = propagate(state, graph);
    forward = &local;
  }
  const auto& emb = *forward;
  const std::size_t d = state.dim();
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  Matrix g_users, g_items;
  if (grad) {
    g_users = Matrix(state.user_emb.rows(), d);
    g_items = Matrix(state.item_emb.rows(), d);
  }
  std::vector<double> mixed(d), diff_vec(d);
  double loss = 0.0;
  for (const auto& t : batch) {
    const auto eu = emb.users.row(t.user);
    const auto ep = emb.items.row(t.pos);
    const auto en = emb.items.row(t.neg);
    simd::lerp(t.lambda, ep, en, mixed);
    const double diff = simd::dot(eu, ep) - simd::dot(eu, mixed);
    loss += pair_loss(diff);
    loss += l2 * (simd::dot(state.user_emb.row(t.user), state.user_emb.row(t.user)) +
                  simd::dot(state.item_emb.row(t.pos), state.item_emb.row(t.pos)) +
                  simd::dot(state.item_emb.row(t.neg), state.item_emb.row(t.neg)));
    if (!grad) continue;
    // d/d diff of -log sigmoid(diff) = -sigmoid(-diff)
    const double g = -inv_b / (1.0 + std::exp(diff));
    for (std::size_t k = 0; k < d; ++k) diff_vec[k] = ep[k] - mixed[k];
    simd::axpy(g, diff_vec, g_users.row(t.user));
    simd::axpy(g * (1.0 - t.lambda), eu, g_items.row(t.pos));
    simd::axpy(-g * (1.0 - t.lambda), eu, g_items.row(t.neg));
  }
  loss *= inv_b;
  if (!grad) return loss;

  if (state.kind == Kind::LightGCN && state.layers > 0) {
    const Matrix back = layer_mean(graph.adjacency, stack(g_users, g_items), state.layers);
    unstack(back, state.user_emb.rows(), g_users, g_items);
  }
  const double r = 2.0 * l2 * inv_b;
  for (const auto& t : batch) {
    simd::axpy(r, state.user_emb.row(t.user), g_users.row(t.user));
    simd::axpy(r, state.item_emb.row(t.pos), g_items.row(t.pos));
    simd::axpy(r, state.item_emb.row(t.neg), g_items.row(t.neg));
  }
  grad->user = std::move(g_users);
  grad->item = std::move(g_items);
  return loss;
}

double bpr_step(ModelState& state, const Graph& graph, std::span<const Triple> batch,
                const TrainConfig& cfg, const Embeddings* forward) {
  Gradients grad;
  const double loss = bpr_loss(state, graph, batch, cfg.l2, &grad, forward);
  if (!std::isfinite(loss)) {
    throw NumericError("bpr_step: non-finite loss at Adam step " + std::to_string(state.adam.step));
  }
  auto& adam = state.adam;
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const simd::AdamParams p{cfg.lr, 0.9, 0.999, 1e-8, 1.0 - std::pow(0.9, t),
                           1.0 - std::pow(0.999, t)};
  const auto& kernels = simd::active();
  kernels.adam_update(p, grad.user.values().data(), adam.m_user.values().data(),
                      adam.v_user.values().data(), state.user_emb.values().data(),
                      state.user_emb.values().size());
  kernels.adam_update(p, grad.item.values().data(), adam.m_item.values().data(),
                      adam.v_item.values().data(), state.item_emb.values().data(),
                      state.item_emb.values().size());
  return loss;
}

bool all_finite(const ModelState& state) {
  auto ok = [](const Matrix& m) {
    return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
  };
  return ok(state.user_emb) && ok(state.item_emb);
}

using detail::get;
using detail::put;

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("DTLC", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, state.kind == Kind::MF ? 0 : 1);
  put<std::uint64_t>(out, state.layers);
  put<std::uint64_t>(out, state.user_emb.rows());
  put<std::uint64_t>(out, state.item_emb.rows());
  put<std::uint64_t>(out, state.dim());
  put<std::uint64_t>(out, state.adam.step);
  for (const Matrix* m : {&state.user_emb, &state.item_emb}) {
    out.write(reinterpret_cast<const char*>(m->values().data()),
              static_cast<std::streamsize>(m->values().size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DTLC", 4) != 0) throw Error("bad checkpoint header: " + path.string());
  if (get<std::uint32_t>(in) != 1) throw Error("unsupported checkpoint version");
  const auto kind = get<std::uint32_t>(in);
  const auto layers = get<std::uint64_t>(in);
  const auto users = get<std::uint64_t>(in);
  const auto items = get<std::uint64_t>(in);
  const auto dim = get<std::uint64_t>(in);
  const auto step = get<std::uint64_t>(in);
  ModelState s = init_params(users, items, dim, kind == 0 ? Kind::MF : Kind::LightGCN, layers, 0);
  s.adam.step = step;
  for (Matrix* m : {&s.user_emb, &s.item_emb}) {
    in.read(reinterpret_cast<char*>(m->values().data()),
            static_cast<std::streamsize>(m->values().size() * sizeof(double)));
  }
  if (!in) throw Error("truncated checkpoint: " + path.string());
  return s;
}

}  // namespace dtlns::backbone
