#pragma once

#include "ccopt/state.hpp"

namespace ccopt {

// Sequential reference executor. Every op is computed from its mathematical
// definition in one address space; reductions over ranks accumulate in rank
// order 0..G-1. It consumes the base program only, never a schedule, so any
// transformed execution can be checked against it.

namespace detail {

inline void oracle_reduce(const OpNode& n, const TensorVal& x, TensorVal& out, int G,
                          bool scatter) {
  int64_t total = num_elems(x.view.global);
  for (int64_t gi = 0; gi < total; ++gi) {
    double acc = double(x.per_rank[0][size_t(gi)]);
    for (int r = 1; r < G; ++r)
      acc = reduce_apply(n.reducer, acc, double(x.per_rank[size_t(r)][size_t(gi)]));
    if (scatter) {
      int owner = out.view.owner(gi);
      out.per_rank[size_t(owner)][size_t(out.view.to_local(gi))] = float(acc);
    } else {
      for (int r = 0; r < G; ++r) out.per_rank[size_t(r)][size_t(gi)] = float(acc);
    }
  }
}

// AllGather with a `gather` attribute re-materializes a tensor that sliced
// computations updated piecewise: each rank contributes its owned region of
// the tensor, the gathered whole is stored back and becomes the node's value.
inline void oracle_gather_decl(const Program&, const OpNode& n, ValueMap& vals, int G) {
  const TensorVal& dep = value_of(vals, n.inputs[0]);
  int axis = dep.view.layout.is_sliced() ? dep.view.layout.dim : int(n.out_shape.size()) - 1;
  TensorVal& d = vals.at(n.gather_decl);
  DistView dv(d.view.global, Layout::sliced(axis), G);
  TensorVal out = TensorVal::make(d.view.global, Layout::replicated(), n.group, G);
  for (int r = 0; r < G; ++r)
    for (int64_t li = 0; li < dv.local_elems(); ++li) {
      int64_t gi = dv.to_global(r, li);
      float v = d.view.layout.is_sliced() ? d.at(r, gi) : d.per_rank[size_t(r)][size_t(gi)];
      for (int q = 0; q < G; ++q) out.per_rank[size_t(q)][size_t(gi)] = v;
    }
  if (!d.view.layout.is_sliced())
    for (int r = 0; r < G; ++r) d.per_rank[size_t(r)] = out.per_rank[size_t(r)];
  vals[n.id] = std::move(out);
}

inline void oracle_node(const Program& p, const OpNode& n, ValueMap& vals, uint64_t seed) {
  const ProcessGroup* g = p.find_group(n.group);
  int G = g->world_size;
  switch (n.kind) {
    case OpKind::MatMul:
      eval_matmul(p, n, vals);
      break;
    case OpKind::Pointwise:
      eval_pointwise(p, n, vals, seed);
      break;
    case OpKind::AllReduce: {
      const TensorVal& x = value_of(vals, n.inputs[0]);
      TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
      oracle_reduce(n, x, out, G, false);
      vals[n.id] = std::move(out);
      break;
    }
    case OpKind::ReduceScatter: {
      const TensorVal& x = value_of(vals, n.inputs[0]);
      TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
      oracle_reduce(n, x, out, G, true);
      vals[n.id] = std::move(out);
      break;
    }
    case OpKind::AllGather: {
      if (!n.gather_decl.empty()) {
        oracle_gather_decl(p, n, vals, G);
        break;
      }
      const TensorVal& x = value_of(vals, n.inputs[0]);
      TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
      for (int r = 0; r < G; ++r)
        for (int64_t li = 0; li < x.view.local_elems(); ++li) {
          int64_t gi = x.view.to_global(r, li);
          for (int q = 0; q < G; ++q)
            out.per_rank[size_t(q)][size_t(gi)] = x.per_rank[size_t(r)][size_t(li)];
        }
      vals[n.id] = std::move(out);
      break;
    }
    case OpKind::Reduce: {
      const TensorVal& x = value_of(vals, n.inputs[0]);
      TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
      int64_t total = num_elems(x.view.global);
      for (int64_t gi = 0; gi < total; ++gi) {
        double acc = double(x.per_rank[0][size_t(gi)]);
        for (int r = 1; r < G; ++r)
          acc = reduce_apply(n.reducer, acc, double(x.per_rank[size_t(r)][size_t(gi)]));
        out.per_rank[size_t(n.root)][size_t(gi)] = float(acc);
      }
      vals[n.id] = std::move(out);
      break;
    }
    case OpKind::Broadcast: {
      const TensorVal& x = value_of(vals, n.inputs[0]);
      TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
      for (int r = 0; r < G; ++r) out.per_rank[size_t(r)] = x.per_rank[size_t(n.root)];
      vals[n.id] = std::move(out);
      break;
    }
    case OpKind::Send:
    case OpKind::FusedSend: {
      const TensorVal& x = value_of(vals, n.inputs[0]);
      int src_group = p.value_group(n.inputs[0]);
      const ProcessGroup* dst = p.find_group(src_group + n.group_offset);
      if (!dst) throw Error(ErrCode::NoSuchRank, "no group " + std::to_string(src_group + n.group_offset));
      const ProcessGroup* src = p.find_group(src_group);
      if (dst->world_size != src->world_size)
        throw Error(ErrCode::NoSuchRank, "peer group sizes differ");
      TensorVal payload;
      if (n.kind == OpKind::FusedSend && !n.expr.empty()) {
        // apply the fused computation on the source group, then move
        OpNode tmp = n;
        tmp.kind = OpKind::Pointwise;
        tmp.group = src_group;
        tmp.out_layout = x.view.layout;
        eval_pointwise(p, tmp, vals, seed);
        payload = vals.at(tmp.id);
      } else {
        payload = x;
      }
      payload.group = n.group;
      vals[n.id] = std::move(payload);
      break;
    }
    case OpKind::Recv:
      vals[n.id] = value_of(vals, n.inputs[0]);
      break;
    case OpKind::FusedAllReduce: {
      // reduce-scatter + sliced computation + allgather, by definition
      const TensorVal& x = value_of(vals, n.inputs[0]);
      int axis = n.axis >= 0 ? n.axis : int(n.out_shape.size()) - 1;
      OpNode ar = n;
      ar.id = n.id + "#ar";
      ar.kind = OpKind::AllReduce;
      ar.inputs = {n.inputs[0]};
      ar.out_shape = x.view.global;
      ar.out_layout = Layout::replicated();
      oracle_node(p, ar, vals, seed);
      OpNode comp = n;
      comp.kind = OpKind::Pointwise;
      comp.inputs[0] = ValueRef{true, ar.id};
      comp.out_layout = Layout::sliced(axis);
      eval_pointwise(p, comp, vals, seed);
      TensorVal sliced = vals.at(comp.id);
      TensorVal out = TensorVal::make(n.out_shape, Layout::replicated(), n.group, G);
      for (int r = 0; r < G; ++r)
        for (int64_t li = 0; li < sliced.view.local_elems(); ++li) {
          int64_t gi = sliced.view.to_global(r, li);
          for (int q = 0; q < G; ++q)
            out.per_rank[size_t(q)][size_t(gi)] = sliced.per_rank[size_t(r)][size_t(li)];
        }
      if (!n.gather_decl.empty()) {
        TensorVal& d = vals.at(n.gather_decl);
        if (!d.view.layout.is_sliced())
          for (int r = 0; r < G; ++r) d.per_rank[size_t(r)] = out.per_rank[size_t(r)];
      }
      vals.erase(ar.id);
      vals[n.id] = std::move(out);
      break;
    }
    case OpKind::OverlapGroup: {
      for (auto& m : n.members) oracle_node(p, *p.find_node(m), vals, seed);
      vals[n.id] = vals.at(n.members.back());
      break;
    }
  }
}

}  // namespace detail

inline ValueMap oracle_execute(const Program& p, ValueMap vals, uint64_t seed) {
  for (auto& id : topo_order(p)) detail::oracle_node(p, *p.find_node(id), vals, seed);
  return vals;
}

inline std::map<std::string, Collected> oracle_results(const Program& p, const ValueMap& inputs,
                                                       uint64_t seed) {
  ValueMap vals = oracle_execute(p, inputs, seed);
  return collect_results(p, vals);
}

}  // namespace ccopt
