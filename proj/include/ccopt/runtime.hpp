#pragma once

#include <chrono>
#include <cmath>
#include <thread>

#include "ccopt/oracle.hpp"
#include "ccopt/state.hpp"

namespace ccopt {

enum class Protocol { LowLatency, Simple };
enum class ExecMode { RoundRobin, Threaded };

struct CommConfig {
  int channels = 2;
  int64_t buffer_tile_elems = 1 << 16;
  Protocol protocol = Protocol::Simple;
  double alpha = 0.5;    // per-message latency, simulated microseconds
  double beta = 2000.0;  // bytes per simulated microsecond, per channel
  double gamma = 2000.0; // element operations per simulated microsecond
  double lambda = 0.5;   // kernel launch overhead, simulated microseconds
  ExecMode mode = ExecMode::RoundRobin;
};

struct ExecutionPlan {
  std::vector<std::string> steps;  // node ids, topologically ordered
};

inline ExecutionPlan plan(const Program& p) { return ExecutionPlan{topo_order(p)}; }

struct RunReport {
  std::map<std::string, Collected> results;
  double simulated_time = 0.0;
  double wall_time = 0.0;  // informational only, excluded from reports by default
  std::vector<int64_t> comm_bytes;        // per global rank
  std::vector<int64_t> intergroup_bytes;  // per global rank
  int64_t traffic_saved_bytes = 0;        // per rank, fused collectives
  int kernel_steps = 0;
  std::map<std::string, int64_t> memory_elems;  // per-rank elements, per tensor
  uint64_t digest = 0;
};

// Chunk production order for overlapped producers: rank n emits chunk n first
// and wraps around, matching the order the ring consumes them.
inline std::vector<int> chunk_order(int rank, int chunks) {
  std::vector<int> out(size_t(chunks), 0);
  for (int i = 0; i < chunks; ++i) out[size_t(i)] = (rank + i) % chunks;
  return out;
}

namespace detail {

// Partition of a tensor into one chunk per rank for the ring algorithms.
// Either follows an axis slicing (chunk c = rank c's slice) or splits the
// flat index space into contiguous, possibly uneven ranges.
struct ChunkSpec {
  DistView dv;         // valid iff axis-based
  bool axis_based = false;
  int64_t total = 0;
  int world = 1;

  int64_t elems(int c) const {
    if (axis_based) return dv.local_elems();
    return total * (c + 1) / world - total * c / world;
  }
  int64_t gidx(int c, int64_t li) const {
    if (axis_based) return dv.to_global(c, li);
    return total * c / world + li;
  }
  int64_t max_elems() const {
    int64_t m = 0;
    for (int c = 0; c < world; ++c) m = std::max(m, elems(c));
    return m;
  }
};

inline ChunkSpec axis_chunks(const DistView& dv) {
  ChunkSpec s;
  s.dv = dv;
  s.axis_based = true;
  s.world = dv.world;
  s.total = num_elems(dv.global);
  return s;
}

inline ChunkSpec flat_chunks(int64_t total, int world) {
  ChunkSpec s;
  s.total = total;
  s.world = world;
  return s;
}

}  // namespace detail

class Engine {
 public:
  Engine(const Program& p, const CommConfig& cfg, uint64_t seed)
      : p_(p), cfg_(cfg), seed_(seed) {}

  RunReport run(ValueMap inputs) {
    RunReport rep;
    int W = p_.world_size();
    rep.comm_bytes.assign(size_t(W), 0);
    rep.intergroup_bytes.assign(size_t(W), 0);
    check_replication(inputs);
    for (auto& d : p_.decls) {
      const ProcessGroup* g = p_.find_group(d.group);
      rep.memory_elems[d.name] = num_elems(local_shape(d.shape, d.layout, g->world_size));
    }
    comm_bytes_ = &rep.comm_bytes;
    intergroup_bytes_ = &rep.intergroup_bytes;
    traffic_saved_ = &rep.traffic_saved_bytes;
    auto t0 = std::chrono::steady_clock::now();
    ValueMap vals = std::move(inputs);
    ExecutionPlan pl = plan(p_);
    rep.kernel_steps = 0;
    for (auto& id : pl.steps) {
      const OpNode* n = p_.find_node(id);
      rep.kernel_steps += n->kind == OpKind::OverlapGroup ? int(n->members.size()) : 1;
    }
    double clock = 0.0;
    for (size_t i = 0; i < pl.steps.size(); ++i) {
      const OpNode& n = *p_.find_node(pl.steps[i]);
      try {
        exec_data(n, vals);
        clock += step_time(n);
      } catch (const Error& e) {
        throw Error(e.code(), "step " + std::to_string(i) + " (" + n.id + "): " + e.what());
      }
    }
    rep.simulated_time = clock;
    rep.wall_time =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    rep.results = collect_results(p_, vals);
    rep.digest = digest_results(rep.results);
    return rep;
  }

  // Simulated duration of one plan step (no data effects).
  double step_time(const OpNode& n) const {
    const ProcessGroup* g = p_.find_group(n.group);
    int G = g->world_size;
    switch (n.kind) {
      case OpKind::MatMul: {
        const Shape& xs = p_.value_shape(n.inputs[0]);
        Layout xl = p_.value_layout(n.inputs[0]);
        int64_t k = xs.back();
        if (xl.is_sliced() && xl.dim == int(xs.size()) - 1) k /= G;
        int64_t out_local = num_elems(local_shape(n.out_shape, n.out_layout, G));
        return cfg_.lambda + double(out_local * k) / cfg_.gamma;
      }
      case OpKind::Pointwise: {
        int64_t local = num_elems(local_shape(n.out_shape, n.out_layout, G));
        return cfg_.lambda + double(local * std::max(1, n.expr.op_count())) / cfg_.gamma;
      }
      case OpKind::AllReduce:
        return ring_time(n, 2 * (G - 1), G, 1.0);
      case OpKind::ReduceScatter:
      case OpKind::AllGather:
        return ring_time(n, G - 1, G, 1.0);
      case OpKind::Reduce:
      case OpKind::Broadcast: {
        int64_t bytes = num_elems(n.out_shape) * byte_width(p_.value_elem(n.inputs[0]));
        return cfg_.lambda + cfg_.alpha + double(bytes) / (cfg_.beta * cfg_.channels);
      }
      case OpKind::Send:
      case OpKind::FusedSend: {
        const TensorDeclish src = payload_info(n);
        double t = cfg_.alpha + double(src.bytes) / cfg_.beta;
        if (n.kind == OpKind::FusedSend) {
          t += double(src.elems * std::max(1, n.expr.op_count())) / cfg_.gamma;
          return cfg_.lambda * (2 + detail_stages(n)) + t;
        }
        return cfg_.lambda + t;
      }
      case OpKind::Recv:
        return 0.0;
      case OpKind::FusedAllReduce: {
        // compute is applied to chunks in flight between the reduce-scatter
        // and allgather halves of the ring; only the last chunk's computation
        // lands on the critical path
        double t = ring_time(n, 2 * (G - 1), G, 0.0);
        int64_t slice = num_elems(n.out_shape) / G;
        int chunks = std::max(1, G * cfg_.channels);
        t += double(slice * std::max(1, n.expr.op_count())) / cfg_.gamma / chunks;
        if (n.expr.has_reduce()) t += 2 * cfg_.alpha;
        return cfg_.lambda * (2 + detail_stages(n)) + t;
      }
      case OpKind::OverlapGroup:
        return overlap_time(n);
    }
    return 0.0;
  }

 private:
  struct TensorDeclish {
    int64_t elems = 0;
    int64_t bytes = 0;
  };

  static int detail_stages(const OpNode& n) { return n.stage_count > 0 ? n.stage_count : 1; }

  TensorDeclish payload_info(const OpNode& n) const {
    const ProcessGroup* src = p_.find_group(p_.value_group(n.inputs[0]));
    Shape global = n.out_shape;
    Layout l = n.out_layout;
    TensorDeclish d;
    d.elems = num_elems(local_shape(global, l, src->world_size));
    d.bytes = d.elems * byte_width(p_.value_elem(n.inputs[0]));
    return d;
  }

  // launch_factor 1.0 = plain collective; 0.0 = caller charges the launch.
  double ring_time(const OpNode& n, int rounds, int G, double launch_factor) const {
    int64_t elems = num_elems(n.kind == OpKind::ReduceScatter || n.kind == OpKind::AllReduce ||
                                      n.kind == OpKind::FusedAllReduce
                                  ? p_.value_shape(n.inputs[0])
                                  : n.out_shape);
    int bw = byte_width(p_.value_elem(n.inputs[0]));
    int64_t tiles = (elems + cfg_.buffer_tile_elems - 1) / cfg_.buffer_tile_elems;
    double per_rank_round_bytes = double(elems) / G * bw;
    return cfg_.lambda * launch_factor + double(rounds) * double(tiles) * cfg_.alpha +
           double(rounds) * per_rank_round_bytes / (cfg_.beta * cfg_.channels);
  }

  // Two-resource pipeline over K = G x channels chunks: members hold their
  // resource (compute, their group's network, or the inter-group link) for one
  // chunk at a time; same-resource members serialize.
  double overlap_time(const OpNode& grp) const {
    std::vector<const OpNode*> members;
    for (auto& m : grp.members) members.push_back(p_.find_node(m));
    const ProcessGroup* g = p_.find_group(grp.group);
    int K = std::max(1, g->world_size * cfg_.channels);
    double launches = 0.0;
    std::vector<double> per_chunk;
    std::vector<std::string> resource;
    for (auto* m : members) {
      double full = step_time(*m);
      double launch = cfg_.lambda;
      if (m->kind == OpKind::FusedAllReduce || m->kind == OpKind::FusedSend)
        launch = cfg_.lambda * (2 + detail_stages(*m));
      launches += launch;
      per_chunk.push_back(std::max(0.0, full - launch) / K);
      switch (m->kind) {
        case OpKind::MatMul:
        case OpKind::Pointwise:
          resource.push_back("compute:" + std::to_string(m->group));
          break;
        case OpKind::Send:
        case OpKind::FusedSend:
          resource.push_back("inter");
          break;
        default:
          resource.push_back("net:" + std::to_string(m->group));
      }
    }
    std::map<std::string, double> resource_free;
    double total = 0.0;
    for (int c = 0; c < K; ++c) {
      double ready = 0.0;
      for (size_t j = 0; j < members.size(); ++j) {
        double start = std::max(ready, resource_free[resource[j]]);
        double finish = start + per_chunk[j];
        resource_free[resource[j]] = finish;
        ready = finish;
        total = std::max(total, finish);
      }
    }
    return launches + total;
  }

  // -------------------------------------------------------------------------
  // Data path.

  void check_replication(const ValueMap& vals) const {
    for (auto& d : p_.decls) {
      if (d.layout.kind != LayoutKind::Replicated) continue;
      const TensorVal& v = vals.at(d.name);
      for (size_t r = 1; r < v.per_rank.size(); ++r)
        if (v.per_rank[r] != v.per_rank[0])
          throw Error(ErrCode::ReplicationViolation,
                      "replicated tensor '" + d.name + "' differs across ranks");
    }
  }

  void rank_loop(int G, const std::function<void(int)>& f) const {
    if (cfg_.mode == ExecMode::RoundRobin || G == 1) {
      for (int r = 0; r < G; ++r) f(r);
      return;
    }
    std::vector<std::thread> ts;
    ts.reserve(size_t(G));
    for (int r = 0; r < G; ++r) ts.emplace_back(f, r);
    for (auto& t : ts) t.join();
  }

  void count_bytes(const ProcessGroup* g, int rank, int64_t bytes) const {
    (*comm_bytes_)[size_t(g->first_rank + rank)] += bytes;
  }

  // Ring reduce-scatter over full per-rank buffers. At round k rank r sends
  // chunk (r-1-k) mod G and folds the incoming chunk (r-2-k) mod G into its
  // accumulator, so chunk c accumulates contributions from ranks
  // c+1, ..., c+G-1 and finally c itself.
  void ring_rs_data(std::vector<std::vector<float>>& bufs, const detail::ChunkSpec& cs,
                    Reducer red, const ProcessGroup* g, int bw) const {
    int G = g->world_size;
    std::vector<std::vector<float>> inbox(size_t(G), std::vector<float>(size_t(cs.max_elems())));
    auto loop = [&](const std::function<void(int)>& f) { rank_loop(G, f); };
    for (int k = 0; k <= G - 2; ++k) {
      loop([&](int r) {
        int c = ((r - 1 - k) % G + G) % G;
        std::vector<float>& out = inbox[size_t((r + 1) % G)];
        for (int64_t li = 0; li < cs.elems(c); ++li)
          out[size_t(li)] = bufs[size_t(r)][size_t(cs.gidx(c, li))];
        count_bytes(g, r, cs.elems(c) * bw);
      });
      loop([&](int q) {
        int c = ((q - 2 - k) % G + G) % G;
        for (int64_t li = 0; li < cs.elems(c); ++li) {
          float& slot = bufs[size_t(q)][size_t(cs.gidx(c, li))];
          slot = reduce_apply(red, inbox[size_t(q)][size_t(li)], slot);
        }
      });
    }
  }

  // Ring all-gather: rank r starts owning chunk r; at round k it forwards
  // chunk (r-k) mod G and receives chunk (r-1-k) mod G.
  void ring_ag_data(std::vector<std::vector<float>>& bufs, const detail::ChunkSpec& cs,
                    const ProcessGroup* g, int bw) const {
    int G = g->world_size;
    std::vector<std::vector<float>> inbox(size_t(G), std::vector<float>(size_t(cs.max_elems())));
    auto loop = [&](const std::function<void(int)>& f) { rank_loop(G, f); };
    for (int k = 0; k <= G - 2; ++k) {
      loop([&](int r) {
        int c = ((r - k) % G + G) % G;
        std::vector<float>& out = inbox[size_t((r + 1) % G)];
        for (int64_t li = 0; li < cs.elems(c); ++li)
          out[size_t(li)] = bufs[size_t(r)][size_t(cs.gidx(c, li))];
        count_bytes(g, r, cs.elems(c) * bw);
      });
      loop([&](int q) {
        int c = ((q - 1 - k) % G + G) % G;
        for (int64_t li = 0; li < cs.elems(c); ++li)
          bufs[size_t(q)][size_t(cs.gidx(c, li))] = inbox[size_t(q)][size_t(li)];
      });
    }
  }

  TensorVal run_reduce_scatter(const OpNode& n, const TensorVal& x, const ProcessGroup* g) const {
    int G = g->world_size;
    int bw = input_bw(n);
    DistView dv(n.out_shape, n.out_layout, G);
    std::vector<std::vector<float>> bufs = x.per_rank;
    ring_rs_data(bufs, detail::axis_chunks(dv), n.reducer, g, bw);
    TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
    for (int r = 0; r < G; ++r)
      for (int64_t li = 0; li < dv.local_elems(); ++li)
        out.per_rank[size_t(r)][size_t(li)] = bufs[size_t(r)][size_t(dv.to_global(r, li))];
    return out;
  }

  int input_bw(const OpNode& n) const { return byte_width(p_.value_elem(n.inputs[0])); }

  void exec_data(const OpNode& n, ValueMap& vals) const {
    const ProcessGroup* g = p_.find_group(n.group);
    int G = g->world_size;
    auto ranks = [this](int world, const std::function<void(int)>& f) { rank_loop(world, f); };
    switch (n.kind) {
      case OpKind::MatMul:
        eval_matmul(p_, n, vals, ranks);
        break;
      case OpKind::Pointwise: {
        eval_pointwise(p_, n, vals, seed_, ranks);
        break;
      }
      case OpKind::ReduceScatter: {
        const TensorVal& x = value_of(vals, n.inputs[0]);
        vals[n.id] = run_reduce_scatter(n, x, g);
        break;
      }
      case OpKind::AllReduce: {
        const TensorVal& x = value_of(vals, n.inputs[0]);
        int bw = input_bw(n);
        detail::ChunkSpec cs = detail::flat_chunks(num_elems(x.view.global), G);
        std::vector<std::vector<float>> bufs = x.per_rank;
        ring_rs_data(bufs, cs, n.reducer, g, bw);
        ring_ag_data(bufs, cs, g, bw);
        TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
        out.per_rank = std::move(bufs);
        vals[n.id] = std::move(out);
        break;
      }
      case OpKind::AllGather: {
        if (!n.gather_decl.empty()) {
          exec_gather_decl(n, vals, g);
          break;
        }
        const TensorVal& x = value_of(vals, n.inputs[0]);
        int bw = input_bw(n);
        DistView dv = x.view;
        std::vector<std::vector<float>> bufs(size_t(G),
                                             std::vector<float>(size_t(num_elems(dv.global))));
        for (int r = 0; r < G; ++r)
          for (int64_t li = 0; li < dv.local_elems(); ++li)
            bufs[size_t(r)][size_t(dv.to_global(r, li))] = x.per_rank[size_t(r)][size_t(li)];
        ring_ag_data(bufs, detail::axis_chunks(dv), g, bw);
        TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
        out.per_rank = std::move(bufs);
        vals[n.id] = std::move(out);
        break;
      }
      case OpKind::Reduce: {
        const TensorVal& x = value_of(vals, n.inputs[0]);
        int bw = input_bw(n);
        TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
        int64_t total = num_elems(x.view.global);
        std::vector<float> acc = x.per_rank[0];
        for (int r = 1; r < G; ++r) {
          for (int64_t i = 0; i < total; ++i)
            acc[size_t(i)] = reduce_apply(n.reducer, acc[size_t(i)], x.per_rank[size_t(r)][size_t(i)]);
          if (r != n.root) count_bytes(g, r, total * bw);
        }
        out.per_rank[size_t(n.root)] = std::move(acc);
        vals[n.id] = std::move(out);
        break;
      }
      case OpKind::Broadcast: {
        const TensorVal& x = value_of(vals, n.inputs[0]);
        int bw = input_bw(n);
        TensorVal out = TensorVal::make(n.out_shape, n.out_layout, n.group, G);
        for (int r = 0; r < G; ++r) out.per_rank[size_t(r)] = x.per_rank[size_t(n.root)];
        count_bytes(g, n.root, (G - 1) * num_elems(x.view.global) * bw);
        vals[n.id] = std::move(out);
        break;
      }
      case OpKind::Send:
      case OpKind::FusedSend: {
        int src_gid = p_.value_group(n.inputs[0]);
        const ProcessGroup* src = p_.find_group(src_gid);
        const ProcessGroup* dst = p_.find_group(src_gid + n.group_offset);
        if (!dst)
          throw Error(ErrCode::NoSuchRank,
                      "no group " + std::to_string(src_gid + n.group_offset));
        if (dst->world_size != src->world_size)
          throw Error(ErrCode::NoSuchRank, "peer group sizes differ");
        TensorVal payload;
        if (n.kind == OpKind::FusedSend && !n.expr.empty()) {
          OpNode tmp = n;
          tmp.kind = OpKind::Pointwise;
          tmp.group = src_gid;
          tmp.out_layout = p_.value_layout(n.inputs[0]);
          eval_pointwise(p_, tmp, vals, seed_, ranks);
          payload = vals.at(tmp.id);
        } else {
          payload = value_of(vals, n.inputs[0]);
        }
        int bw = input_bw(n);
        for (int r = 0; r < src->world_size; ++r)
          (*intergroup_bytes_)[size_t(src->first_rank + r)] +=
              int64_t(payload.per_rank[size_t(r)].size()) * bw;
        payload.group = n.group;
        vals[n.id] = std::move(payload);
        break;
      }
      case OpKind::Recv:
        vals[n.id] = value_of(vals, n.inputs[0]);
        break;
      case OpKind::FusedAllReduce: {
        const TensorVal& x = value_of(vals, n.inputs[0]);
        int bw = input_bw(n);
        int axis = n.axis >= 0 ? n.axis : int(n.out_shape.size()) - 1;
        DistView dv(x.view.global, Layout::sliced(axis), G);
        std::vector<std::vector<float>> bufs = x.per_rank;
        ring_rs_data(bufs, detail::axis_chunks(dv), n.reducer, g, bw);
        std::string rs_id = n.id + "#rs";
        TensorVal rs = TensorVal::make(x.view.global, Layout::sliced(axis), n.group, G);
        for (int r = 0; r < G; ++r)
          for (int64_t li = 0; li < dv.local_elems(); ++li)
            rs.per_rank[size_t(r)][size_t(li)] = bufs[size_t(r)][size_t(dv.to_global(r, li))];
        vals[rs_id] = std::move(rs);
        OpNode comp = n;
        comp.kind = OpKind::Pointwise;
        comp.inputs[0] = ValueRef{true, rs_id};
        comp.out_layout = Layout::sliced(axis);
        eval_pointwise(p_, comp, vals, seed_, ranks);
        // nested scalar reductions reuse the open connections; count their
        // gather + broadcast traffic
        for (auto& e : n.expr.nodes)
          if (e.op == ExprNode::Op::ReduceTensor) {
            for (int r = 1; r < G; ++r) count_bytes(g, r, bw);
            count_bytes(g, 0, (G - 1) * bw);
          }
        const TensorVal& sliced = vals.at(comp.id);
        std::vector<std::vector<float>> outb(size_t(G),
                                             std::vector<float>(size_t(num_elems(n.out_shape))));
        DistView ov(n.out_shape, Layout::sliced(axis), G);
        for (int r = 0; r < G; ++r)
          for (int64_t li = 0; li < ov.local_elems(); ++li)
            outb[size_t(r)][size_t(ov.to_global(r, li))] = sliced.per_rank[size_t(r)][size_t(li)];
        ring_ag_data(outb, detail::axis_chunks(ov), g, bw);
        TensorVal out = TensorVal::make(n.out_shape, Layout::replicated(), n.group, G);
        out.per_rank = std::move(outb);
        if (!n.gather_decl.empty()) {
          TensorVal& d = vals.at(n.gather_decl);
          if (!d.view.layout.is_sliced())
            for (int r = 0; r < G; ++r) d.per_rank[size_t(r)] = out.per_rank[size_t(r)];
        }
        vals.erase(rs_id);
        vals[n.id] = std::move(out);
        // each fused stage avoids one store + one reload of the whole tensor
        *traffic_saved_ += 2 * num_elems(n.out_shape) * bw * detail_stages(n);
        break;
      }
      case OpKind::OverlapGroup: {
        // chunk-interleaved in simulated time, functionally sequential
        for (auto& m : n.members) exec_data(*p_.find_node(m), vals);
        vals[n.id] = vals.at(n.members.back());
        break;
      }
    }
  }

  // Re-materializes a tensor updated slice-wise: each rank contributes its
  // owned region, the gathered whole is stored back into the tensor and
  // becomes the node's value.
  void exec_gather_decl(const OpNode& n, ValueMap& vals, const ProcessGroup* g) const {
    int G = g->world_size;
    const TensorVal& dep = value_of(vals, n.inputs[0]);
    const OpNode* producer = n.inputs[0].is_node ? p_.find_node(n.inputs[0].id) : nullptr;
    int axis;
    if (dep.view.layout.is_sliced())
      axis = dep.view.layout.dim;
    else if (producer && producer->kind == OpKind::FusedAllReduce && producer->axis >= 0)
      axis = producer->axis;
    else
      axis = int(n.out_shape.size()) - 1;
    TensorVal& d = vals.at(n.gather_decl);
    int bw = byte_width(p_.find_decl(n.gather_decl)->elem);
    DistView dv(d.view.global, Layout::sliced(axis), G);
    std::vector<std::vector<float>> bufs(size_t(G),
                                         std::vector<float>(size_t(num_elems(d.view.global))));
    for (int r = 0; r < G; ++r)
      for (int64_t li = 0; li < dv.local_elems(); ++li) {
        int64_t gi = dv.to_global(r, li);
        bufs[size_t(r)][size_t(gi)] =
            d.view.layout.is_sliced() ? d.at(r, gi) : d.per_rank[size_t(r)][size_t(gi)];
      }
    ring_ag_data(bufs, detail::axis_chunks(dv), g, bw);
    TensorVal out = TensorVal::make(d.view.global, Layout::replicated(), n.group, G);
    out.per_rank = std::move(bufs);
    if (!d.view.layout.is_sliced())
      for (int r = 0; r < G; ++r) d.per_rank[size_t(r)] = out.per_rank[size_t(r)];
    vals[n.id] = std::move(out);
  }

  const Program& p_;
  CommConfig cfg_;
  uint64_t seed_;
  mutable std::vector<int64_t>* comm_bytes_ = nullptr;
  mutable std::vector<int64_t>* intergroup_bytes_ = nullptr;
  mutable int64_t* traffic_saved_ = nullptr;
};

inline RunReport execute(const Program& p, const CommConfig& cfg, ValueMap inputs, uint64_t seed) {
  return Engine(p, cfg, seed).run(std::move(inputs));
}

// ---------------------------------------------------------------------------
// Scattered tensors: many small tensors share one collective via a bucket
// table (round-robin over buckets of at most 2^10 elements).

constexpr int64_t kBucketCapacity = 1 << 10;

struct BucketTable {
  struct Bucket {
    std::string tensor;
    int64_t offset = 0;
    int64_t extent = 0;
  };
  std::vector<Bucket> buckets;  // round-robin order
  int64_t total_elems = 0;

  int64_t metadata_bytes() const {
    // 8-byte address analog + 4-byte offset per bucket slot
    return 12 * ((total_elems + kBucketCapacity - 1) / kBucketCapacity);
  }
};

inline BucketTable build_bucket_table(const std::vector<std::pair<std::string, int64_t>>& tensors) {
  BucketTable t;
  std::vector<std::vector<BucketTable::Bucket>> per_tensor;
  for (auto& [name, count] : tensors) {
    if (count <= 0) throw Error(ErrCode::InvalidInput, "tensor '" + name + "' has no elements");
    std::vector<BucketTable::Bucket> bs;
    for (int64_t off = 0; off < count; off += kBucketCapacity)
      bs.push_back({name, off, std::min(kBucketCapacity, count - off)});
    per_tensor.push_back(std::move(bs));
    t.total_elems += count;
  }
  // round-robin across tensors, one bucket from each in turn
  size_t remaining = 0;
  for (auto& bs : per_tensor) remaining += bs.size();
  std::vector<size_t> cursor(per_tensor.size(), 0);
  while (remaining > 0)
    for (size_t i = 0; i < per_tensor.size(); ++i)
      if (cursor[i] < per_tensor[i].size()) {
        t.buckets.push_back(per_tensor[i][cursor[i]++]);
        --remaining;
      }
  return t;
}

// Runs one collective over all bucketed tensors at once: concatenate in
// bucket order, run the collective, scatter results back. One kernel step
// regardless of the tensor count.
struct ScatteredResult {
  std::map<std::string, std::vector<std::vector<float>>> per_tensor;  // per rank
  int kernel_steps = 1;
};

inline ScatteredResult scattered_collective(
    const CommConfig& cfg, const BucketTable& table, OpKind kind, Reducer red,
    const std::map<std::string, std::vector<std::vector<float>>>& tensors, int world,
    std::vector<int64_t>* comm_bytes = nullptr, uint64_t seed = 0) {
  if (kind != OpKind::AllReduce)
    throw Error(ErrCode::InvalidInput, "scattered collectives support allreduce");
  if (table.total_elems < world)
    throw Error(ErrCode::DivisibilityError, "fewer bucketed elements than ranks");
  Program p;
  p.name = "scattered";
  p.groups.push_back({0, world, 0});
  TensorDecl d;
  d.name = "flat";
  d.shape = {table.total_elems};
  d.layout = Layout::local();
  p.decls.push_back(d);
  OpNode ar;
  ar.id = "ar";
  ar.kind = OpKind::AllReduce;
  ar.reducer = red;
  ar.inputs = {ValueRef{false, "flat"}};
  p.nodes.push_back(ar);
  p.outputs = {"ar"};
  reinfer(p);
  ValueMap vals;
  TensorVal flat = TensorVal::make(d.shape, d.layout, 0, world);
  for (int r = 0; r < world; ++r) {
    int64_t pos = 0;
    for (auto& b : table.buckets) {
      const auto& src = tensors.at(b.tensor)[size_t(r)];
      for (int64_t i = 0; i < b.extent; ++i)
        flat.per_rank[size_t(r)][size_t(pos + i)] = src[size_t(b.offset + i)];
      pos += b.extent;
    }
  }
  vals["flat"] = std::move(flat);
  RunReport rep = Engine(p, cfg, seed).run(std::move(vals));
  if (comm_bytes) *comm_bytes = rep.comm_bytes;
  ScatteredResult out;
  for (auto& [name, data] : tensors)
    out.per_tensor[name].assign(data.size(),
                                std::vector<float>(data.empty() ? 0 : data[0].size()));
  const std::vector<float>& result = rep.results.at("out0").data[0];
  int64_t pos = 0;
  for (auto& b : table.buckets) {
    for (size_t r = 0; r < tensors.at(b.tensor).size(); ++r)
      for (int64_t i = 0; i < b.extent; ++i)
        out.per_tensor[b.tensor][r][size_t(b.offset + i)] = result[size_t(pos + i)];
    pos += b.extent;
  }
  return out;
}

}  // namespace ccopt
