#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ccopt/expr.hpp"
#include "ccopt/program.hpp"
#include "ccopt/view.hpp"

namespace ccopt {

// One distributed value: per-rank local arrays (rank indices are
// group-relative). Replicated values keep an identical copy per rank; sliced
// values keep only the local slice.
struct TensorVal {
  DistView view;
  int group = 0;
  std::vector<std::vector<float>> per_rank;

  static TensorVal make(const Shape& global, const Layout& l, int group, int world) {
    TensorVal v;
    v.view = DistView(global, l, world);
    v.group = group;
    v.per_rank.assign(size_t(world), std::vector<float>(size_t(v.view.local_elems()), 0.0f));
    return v;
  }

  float at(int rank, int64_t gidx) const {
    if (view.layout.is_sliced()) {
      if (view.owner(gidx) != rank)
        throw Error(ErrCode::OperandLayoutMismatch, "non-local read of sliced element");
      return per_rank[size_t(rank)][size_t(view.to_local(gidx))];
    }
    return per_rank[size_t(rank)][size_t(gidx)];
  }

  void set(int rank, int64_t gidx, float v) {
    if (view.layout.is_sliced()) {
      if (view.owner(gidx) != rank)
        throw Error(ErrCode::OperandLayoutMismatch, "non-local write of sliced element");
      per_rank[size_t(rank)][size_t(view.to_local(gidx))] = v;
    } else {
      per_rank[size_t(rank)][size_t(gidx)] = v;
    }
  }
};

using ValueMap = std::map<std::string, TensorVal>;

// Deterministic inputs: uniform in [0.1, 0.9), keyed by (seed, decl name,
// global index); Local tensors additionally key on the rank so ranks differ,
// Replicated/Sliced tensors are rank-independent.
inline ValueMap gen_decl_values(const Program& p, uint64_t seed) {
  ValueMap vals;
  for (auto& d : p.decls) {
    const ProcessGroup* g = p.find_group(d.group);
    TensorVal v = TensorVal::make(d.shape, d.layout, d.group, g->world_size);
    uint64_t key = fnv1a(d.name);
    for (int r = 0; r < g->world_size; ++r) {
      uint64_t rank_key = d.layout.kind == LayoutKind::Local
                              ? key ^ (uint64_t(r + 1) * 0x9e3779b97f4a7c15ull)
                              : key;
      for (int64_t li = 0; li < v.view.local_elems(); ++li) {
        int64_t gi = v.view.to_global(r, li);
        v.per_rank[size_t(r)][size_t(li)] =
            float(0.1 + 0.8 * counter_uniform(seed, rank_key, uint64_t(gi)));
      }
    }
    vals[d.name] = v;
  }
  return vals;
}

inline const TensorVal& value_of(const ValueMap& vals, const ValueRef& ref) {
  auto it = vals.find(ref.id);
  if (it == vals.end()) throw Error(ErrCode::UnknownId, "no value for " + ref.id);
  return it->second;
}

// ---------------------------------------------------------------------------
// Local computation steps shared by the oracle and the runtime. Both evaluate
// per rank over the node's local iteration space; only collectives differ.
// `RankLoop` runs one closure per rank: serially by default, or on worker
// threads in the runtime's threaded mode (per-rank work is disjoint).

using RankLoop = std::function<void(int, const std::function<void(int)>&)>;

inline void serial_ranks(int world, const std::function<void(int)>& f) {
  for (int r = 0; r < world; ++r) f(r);
}

inline void eval_matmul(const Program& p, const OpNode& n, ValueMap& vals,
                        const RankLoop& ranks = serial_ranks) {
  const TensorVal& x = value_of(vals, n.inputs[0]);
  const TensorVal& w = value_of(vals, n.inputs[1]);
  const ProcessGroup* g = p.find_group(n.group);
  int G = g->world_size;
  TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
  const Shape& xs = x.view.global;
  int64_t K = xs.back();
  int64_t M = w.view.global[1];
  int64_t rows = num_elems(xs) / K;
  bool contracted_sliced = x.view.layout.is_sliced() && x.view.layout.dim == int(xs.size()) - 1;
  ranks(G, [&](int r) {
    int64_t k0 = 0, k1 = K;
    if (contracted_sliced) {
      k0 = int64_t(r) * (K / G);
      k1 = k0 + K / G;
    }
    for (int64_t row = 0; row < rows; ++row)
      for (int64_t m = 0; m < M; ++m) {
        double acc = 0;
        for (int64_t k = k0; k < k1; ++k)
          acc += double(x.at(r, row * K + k)) * double(w.at(r, k * M + m));
        out.set(r, row * M + m, float(acc));
      }
  });
  vals[n.id] = std::move(out);
}

// Evaluates a Pointwise node on every rank. `cross_rank_sum` supplies the
// reduction of per-rank partial ReduceTensor values when the iteration space
// is sliced (oracle: rank-order sum; runtime: nested scalar allreduce).
inline void eval_pointwise(const Program& p, const OpNode& n, ValueMap& vals, uint64_t seed,
                           const RankLoop& ranks = serial_ranks) {
  const ProcessGroup* g = p.find_group(n.group);
  int G = g->world_size;
  TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
  std::vector<const TensorVal*> ins;
  std::vector<BroadcastView> bviews;
  for (auto& in : n.inputs) {
    ins.push_back(&value_of(vals, in));
    bviews.emplace_back(n.out_shape, ins.back()->view.global);
  }
  // precompute whole-tensor reductions appearing in the expression; per rank
  // for Local iteration spaces, combined across ranks (rank order) for sliced
  std::vector<std::map<int, double>> reduced{size_t(G)};
  for (size_t ei = 0; ei < n.expr.nodes.size(); ++ei) {
    if (n.expr.nodes[ei].op != ExprNode::Op::ReduceTensor) continue;
    const ExprNode& rn = n.expr.nodes[ei];
    std::vector<double> partial(size_t(G), 0.0);
    ranks(G, [&](int r) {
      bool first = true;
      double acc = 0;
      int64_t gi = 0;
      EvalCtx ctx;
      ctx.seed = seed;
      ctx.read = [&](int slot) { return double(ins[size_t(slot)]->at(r, bviews[size_t(slot)].map(gi))); };
      ctx.reduced = [](int idx) -> double {
        throw Error(ErrCode::InvalidInput,
                    "nested tensor reductions are not supported (expr node " + std::to_string(idx) + ")");
      };
      std::vector<double> memo(n.expr.nodes.size());
      std::vector<char> done(n.expr.nodes.size());
      for (int64_t li = 0; li < out.view.local_elems(); ++li) {
        gi = out.view.to_global(r, li);
        ctx.element = uint64_t(gi);
        std::fill(done.begin(), done.end(), 0);
        double v = eval_expr(n.expr, rn.a, ctx, memo, done);
        acc = first ? v : reduce_apply(rn.red, acc, v);
        first = false;
      }
      partial[size_t(r)] = acc;
    });
    if (out.view.layout.is_sliced()) {
      double total = partial[0];
      for (int r = 1; r < G; ++r) total = reduce_apply(rn.red, total, partial[size_t(r)]);
      for (int r = 0; r < G; ++r) reduced[size_t(r)][int(ei)] = total;
    } else {
      for (int r = 0; r < G; ++r) reduced[size_t(r)][int(ei)] = partial[size_t(r)];
    }
  }
  // per-element pass, including Update stores
  ranks(G, [&](int r) {
    for (int64_t li = 0; li < out.view.local_elems(); ++li) {
      int64_t gi = out.view.to_global(r, li);
      EvalCtx ctx;
      ctx.seed = seed;
      ctx.element = uint64_t(gi);
      ctx.read = [&](int slot) { return double(ins[size_t(slot)]->at(r, bviews[size_t(slot)].map(gi))); };
      ctx.reduced = [&](int idx) { return reduced[size_t(r)].at(idx); };
      ctx.write = [&](const std::string& target, double v) {
        auto it = vals.find(target);
        if (it == vals.end()) throw Error(ErrCode::UnknownId, "update target " + target);
        it->second.set(r, gi, float(v));
      };
      out.set(r, gi, float(eval_expr(n.expr, ctx)));
    }
  });
  vals[n.id] = std::move(out);
}

// ---------------------------------------------------------------------------
// Canonical result form for comparisons: replicated and sliced values are
// assembled into one global array; local values stay per rank.

struct Collected {
  Shape shape;
  bool per_rank = false;
  std::vector<std::vector<float>> data;  // one entry, or one per rank
};

inline Collected collect_value(const TensorVal& v) {
  Collected c;
  c.shape = v.view.global;
  int G = v.view.world;
  if (v.view.layout.kind == LayoutKind::Local && G > 1) {
    c.per_rank = true;
    c.data = v.per_rank;
    return c;
  }
  c.data.assign(1, std::vector<float>(size_t(num_elems(v.view.global)), 0.0f));
  if (v.view.layout.is_sliced()) {
    for (int r = 0; r < G; ++r)
      for (int64_t li = 0; li < v.view.local_elems(); ++li)
        c.data[0][size_t(v.view.to_global(r, li))] = v.per_rank[size_t(r)][size_t(li)];
  } else {
    c.data[0] = v.per_rank[0];
  }
  return c;
}

// Program results keyed for comparison: outputs by position ("out0", ...) so
// transformed programs with fresh ids stay comparable, updated tensors by name.
inline std::map<std::string, Collected> collect_results(const Program& p, const ValueMap& vals) {
  std::map<std::string, Collected> out;
  for (size_t i = 0; i < p.outputs.size(); ++i)
    out["out" + std::to_string(i)] = collect_value(value_of(vals, ValueRef{true, p.outputs[i]}));
  std::set<std::string> updated;
  for (auto& n : p.nodes)
    for (auto& t : n.expr.update_targets()) updated.insert(t);
  for (auto& t : updated) out["tensor:" + t] = collect_value(vals.at(t));
  return out;
}

// Largest elementwise difference, relative to the magnitude of the arrays
// (not the individual elements, so cancellation to a near-zero element does
// not blow up the measure).
inline double max_rel_deviation(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw Error(ErrCode::ShapeMismatch, "result sizes differ");
  double diff = 0, scale = 1e-12;
  for (size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(double(a[i]) - double(b[i])));
    scale = std::max({scale, std::abs(double(a[i])), std::abs(double(b[i]))});
  }
  return diff / scale;
}

inline double compare_results(const std::map<std::string, Collected>& a,
                              const std::map<std::string, Collected>& b) {
  double worst = 0;
  for (auto& [key, ca] : a) {
    auto it = b.find(key);
    if (it == b.end()) throw Error(ErrCode::ShapeMismatch, "missing result " + key);
    const Collected& cb = it->second;
    if (ca.shape != cb.shape) throw Error(ErrCode::ShapeMismatch, "shapes differ for " + key);
    if (ca.data.size() != cb.data.size())
      throw Error(ErrCode::ShapeMismatch, "rank counts differ for " + key);
    for (size_t i = 0; i < ca.data.size(); ++i)
      worst = std::max(worst, max_rel_deviation(ca.data[i], cb.data[i]));
  }
  return worst;
}

inline uint64_t digest_results(const std::map<std::string, Collected>& res) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (auto& [key, c] : res) {
    h = fnv1a(key.data(), key.size(), h);
    for (auto& arr : c.data) h = fnv1a(arr.data(), arr.size() * sizeof(float), h);
  }
  return h;
}

}  // namespace ccopt
