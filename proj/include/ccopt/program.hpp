#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ccopt/expr.hpp"
#include "ccopt/types.hpp"

namespace ccopt {

enum class OpKind {
  MatMul,
  Pointwise,  // carries an ExprDag; covers Dropout/Sqrt/Pow/Update/ReduceTensor/Norm sugar
  AllReduce,
  ReduceScatter,
  AllGather,
  Reduce,
  Broadcast,
  Send,
  Recv,
  FusedAllReduce,
  FusedSend,
  OverlapGroup,
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return "matmul";
    case OpKind::Pointwise: return "pointwise";
    case OpKind::AllReduce: return "allreduce";
    case OpKind::ReduceScatter: return "reduce_scatter";
    case OpKind::AllGather: return "allgather";
    case OpKind::Reduce: return "reduce";
    case OpKind::Broadcast: return "broadcast";
    case OpKind::Send: return "send";
    case OpKind::Recv: return "recv";
    case OpKind::FusedAllReduce: return "fused_allreduce";
    case OpKind::FusedSend: return "fused_send";
    default: return "overlap_group";
  }
}

inline bool is_comm(OpKind k) {
  switch (k) {
    case OpKind::AllReduce:
    case OpKind::ReduceScatter:
    case OpKind::AllGather:
    case OpKind::Reduce:
    case OpKind::Broadcast:
    case OpKind::Send:
    case OpKind::Recv:
    case OpKind::FusedAllReduce:
    case OpKind::FusedSend:
      return true;
    default:
      return false;
  }
}

struct ValueRef {
  bool is_node = false;
  std::string id;  // decl name or node id
  bool operator==(const ValueRef& o) const { return is_node == o.is_node && id == o.id; }
};

struct OpNode {
  std::string id;
  OpKind kind = OpKind::Pointwise;
  std::vector<ValueRef> inputs;

  Reducer reducer = Reducer::Sum;
  int root = 0;             // Reduce / Broadcast
  int group_offset = 1;     // Send / Recv
  int axis = -1;            // ReduceScatter slice axis override; -1 = last axis
  ExprDag expr;             // Pointwise / FusedAllReduce / FusedSend
  int stage_count = 0;      // fused computation stages carried by this node
  std::string gather_decl;  // AllGather that re-materializes an updated decl
  std::vector<std::string> members;  // OverlapGroup

  // Inferred during validation / construction.
  Shape out_shape;
  Layout out_layout = Layout::local();
  int group = 0;
};

struct Program {
  std::string name;
  std::vector<ProcessGroup> groups;
  std::vector<TensorDecl> decls;
  std::vector<OpNode> nodes;
  std::vector<std::string> outputs;  // node ids

  int world_size() const {
    int w = 0;
    for (auto& g : groups) w += g.world_size;
    return w;
  }
  const ProcessGroup* find_group(int id) const {
    for (auto& g : groups)
      if (g.group_id == id) return &g;
    return nullptr;
  }
  const TensorDecl* find_decl(const std::string& n) const {
    for (auto& d : decls)
      if (d.name == n) return &d;
    return nullptr;
  }
  const OpNode* find_node(const std::string& id) const {
    for (auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
  OpNode* find_node(const std::string& id) {
    for (auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
  int node_index(const std::string& id) const {
    for (size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id == id) return int(i);
    return -1;
  }
  bool has_id(const std::string& id) const { return find_decl(id) || find_node(id); }

  Shape value_shape(const ValueRef& v) const {
    if (v.is_node) {
      auto* n = find_node(v.id);
      if (!n) throw Error(ErrCode::UnknownId, "node " + v.id);
      return n->out_shape;
    }
    auto* d = find_decl(v.id);
    if (!d) throw Error(ErrCode::UnknownId, "tensor " + v.id);
    return d->shape;
  }
  Layout value_layout(const ValueRef& v) const {
    if (v.is_node) return find_node(v.id)->out_layout;
    return find_decl(v.id)->layout;
  }
  int value_group(const ValueRef& v) const {
    if (v.is_node) return find_node(v.id)->group;
    return find_decl(v.id)->group;
  }
  Elem value_elem(const ValueRef& v) const {
    if (!v.is_node) return find_decl(v.id)->elem;
    const OpNode* n = find_node(v.id);
    // element type propagates from the first tensor input
    for (auto& in : n->inputs) return value_elem(in);
    return Elem::F32;
  }

  std::string fresh_id(const std::string& base) const {
    if (!has_id(base)) return base;
    for (int i = 2;; ++i) {
      std::string c = base + "_" + std::to_string(i);
      if (!has_id(c)) return c;
    }
  }

  // node id -> ids of nodes consuming it
  std::map<std::string, std::vector<std::string>> consumers() const {
    std::map<std::string, std::vector<std::string>> out;
    for (auto& n : nodes)
      for (auto& in : n.inputs)
        if (in.is_node) out[in.id].push_back(n.id);
    return out;
  }

  std::vector<std::string> decl_consumers(const std::string& decl) const {
    std::vector<std::string> out;
    for (auto& n : nodes) {
      for (auto& in : n.inputs)
        if (!in.is_node && in.id == decl) {
          out.push_back(n.id);
          break;
        }
      if (n.gather_decl == decl &&
          (out.empty() || out.back() != n.id))
        out.push_back(n.id);
    }
    return out;
  }

  std::set<std::string> grouped_members() const {
    std::set<std::string> m;
    for (auto& n : nodes)
      if (n.kind == OpKind::OverlapGroup)
        for (auto& id : n.members) m.insert(id);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Shape broadcasting: trailing axes align, extent-1 axes stretch.

inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
  Shape out(std::max(a.size(), b.size()));
  for (size_t i = 0; i < out.size(); ++i) {
    int64_t ea = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
    int64_t eb = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw Error(ErrCode::ShapeMismatch,
                  "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Pointwise layout join; sliced axes are compared on the operands' own dims.
inline Layout join_layouts(const Layout& a, const Layout& b) {
  if (a.kind == LayoutKind::Replicated) return b;
  if (b.kind == LayoutKind::Replicated) return a;
  if (a.kind == LayoutKind::Local && b.kind == LayoutKind::Local) return a;
  if (a.is_sliced() && b.is_sliced()) {
    if (a.dim != b.dim)
      throw Error(ErrCode::LayoutMismatch,
                  "sliced axes differ: " + a.str() + " vs " + b.str());
    return a;
  }
  throw Error(ErrCode::LayoutMismatch, a.str() + " with " + b.str());
}

struct Inferred {
  Layout layout;
  Shape shape;
  std::vector<std::string> warnings;
};

// Output layout/shape rules. Pure in its arguments; group_size is the size of
// the collective's process group.
inline Inferred infer_layout(OpKind kind, const std::vector<Layout>& layouts,
                             const std::vector<Shape>& shapes, int group_size,
                             int rs_axis = -1) {
  Inferred r;
  auto arity = [&](size_t n) {
    if (layouts.size() != n || shapes.size() != n)
      throw Error(ErrCode::InvalidInput, std::string(op_kind_name(kind)) +
                                             " expects " + std::to_string(n) + " inputs");
  };
  switch (kind) {
    case OpKind::MatMul: {
      arity(2);
      const Shape& x = shapes[0];
      const Shape& w = shapes[1];
      if (x.size() < 2 || w.size() != 2)
        throw Error(ErrCode::ShapeMismatch, "matmul needs [..,K] x [K,M]");
      if (x.back() != w[0])
        throw Error(ErrCode::ShapeMismatch, "contraction extents differ");
      r.shape = x;
      r.shape.back() = w[1];
      const Layout &lx = layouts[0], &lw = layouts[1];
      if (lx.is_sliced() && lx.dim == int(x.size()) - 1 && lw.is_sliced() && lw.dim == 0) {
        r.layout = Layout::local();  // partial sums per rank
      } else if (lx.kind != LayoutKind::Sliced && lw.kind == LayoutKind::Replicated) {
        r.layout = lx;
      } else {
        throw Error(ErrCode::LayoutMismatch,
                    "matmul layouts " + lx.str() + " x " + lw.str());
      }
      break;
    }
    case OpKind::Pointwise: {
      if (layouts.empty()) throw Error(ErrCode::InvalidInput, "pointwise with no inputs");
      Layout l = layouts[0];
      for (size_t i = 1; i < layouts.size(); ++i) l = join_layouts(l, layouts[i]);
      Shape s = shapes[0];
      for (size_t i = 1; i < shapes.size(); ++i) s = broadcast_shapes(s, shapes[i]);
      if (l.is_sliced()) {
        // re-express the slice axis relative to the broadcast output rank
        for (size_t i = 0; i < layouts.size(); ++i)
          if (layouts[i].is_sliced()) {
            l.dim = layouts[i].dim + int(s.size() - shapes[i].size());
            break;
          }
      }
      r.layout = l;
      r.shape = s;
      break;
    }
    case OpKind::AllReduce:
    case OpKind::FusedAllReduce: {
      if (layouts.empty()) throw Error(ErrCode::InvalidInput, "allreduce needs an input");
      if (layouts[0].is_sliced())
        throw Error(ErrCode::InvalidInput, "allreduce of a sliced tensor");
      if (layouts[0].kind == LayoutKind::Replicated)
        r.warnings.push_back("allreduce of a replicated tensor is redundant");
      r.layout = Layout::replicated();
      r.shape = shapes[0];
      break;
    }
    case OpKind::ReduceScatter: {
      arity(1);
      if (layouts[0].kind != LayoutKind::Local)
        throw Error(ErrCode::InvalidInput, "reduce_scatter expects a local tensor");
      if (shapes[0].empty())
        throw Error(ErrCode::InvalidInput, "reduce_scatter of a scalar");
      int axis = rs_axis >= 0 ? rs_axis : int(shapes[0].size()) - 1;
      if (axis >= int(shapes[0].size()))
        throw Error(ErrCode::InvalidInput, "reduce_scatter axis out of range");
      r.layout = Layout::sliced(axis);
      r.shape = shapes[0];
      break;
    }
    case OpKind::AllGather: {
      arity(1);
      if (!layouts[0].is_sliced())
        throw Error(ErrCode::InvalidInput, "allgather of a non-sliced tensor");
      r.layout = Layout::replicated();
      r.shape = shapes[0];
      break;
    }
    case OpKind::Reduce: {
      arity(1);
      if (layouts[0].is_sliced())
        throw Error(ErrCode::InvalidInput, "reduce of a sliced tensor");
      r.layout = Layout::local();  // value meaningful on the root rank only
      r.shape = shapes[0];
      break;
    }
    case OpKind::Broadcast: {
      arity(1);
      r.layout = Layout::replicated();
      r.shape = shapes[0];
      break;
    }
    case OpKind::Send:
    case OpKind::FusedSend:
    case OpKind::Recv: {
      if (layouts.empty()) throw Error(ErrCode::InvalidInput, "send/recv needs an input");
      r.layout = layouts[0];
      r.shape = shapes[0];
      break;
    }
    case OpKind::OverlapGroup: {
      if (layouts.empty()) throw Error(ErrCode::InvalidInput, "empty overlap group");
      r.layout = layouts.back();
      r.shape = shapes.back();
      break;
    }
  }
  (void)group_size;
  return r;
}

// ---------------------------------------------------------------------------
// Inference over a whole node, including group propagation.

inline Inferred infer_node(const Program& p, const OpNode& n, int* out_group) {
  std::vector<Layout> layouts;
  std::vector<Shape> shapes;
  int group = -1;
  if (n.kind == OpKind::OverlapGroup) {
    const OpNode* last = p.find_node(n.members.back());
    if (!last) throw Error(ErrCode::UnknownId, "overlap member " + n.members.back());
    layouts.push_back(last->out_layout);
    shapes.push_back(last->out_shape);
    group = last->group;
  } else {
    for (auto& in : n.inputs) {
      layouts.push_back(p.value_layout(in));
      shapes.push_back(p.value_shape(in));
      int g = p.value_group(in);
      if (group < 0) group = g;
      // scalar/replicated operands may come from any group
    }
    if (group < 0) group = 0;
  }
  const ProcessGroup* g = p.find_group(group);
  int gsize = g ? g->world_size : 1;
  // A pointwise node never changes layout classes across groups; Send moves
  // the value to the destination group.
  Inferred r = infer_layout(n.kind, layouts, shapes, gsize, n.axis);
  if (n.kind == OpKind::Send || n.kind == OpKind::FusedSend)
    group += n.group_offset;
  if (out_group) *out_group = group;
  return r;
}

// ---------------------------------------------------------------------------
// Topological order: Kahn's algorithm, ties broken by node id (declaration
// order for equal prefixes keeps golden listings stable).

inline std::vector<std::string> topo_order(const Program& p) {
  std::set<std::string> grouped = p.grouped_members();
  std::map<std::string, int> indeg;
  std::map<std::string, std::vector<std::string>> out_edges;
  std::vector<std::string> order;
  auto dep_nodes = [&](const OpNode& n) {
    std::vector<std::string> deps;
    if (n.kind == OpKind::OverlapGroup) {
      for (auto& m : n.members) {
        const OpNode* mem = p.find_node(m);
        if (!mem) continue;
        for (auto& in : mem->inputs)
          if (in.is_node && !grouped.count(in.id)) deps.push_back(in.id);
      }
    } else {
      for (auto& in : n.inputs)
        if (in.is_node) deps.push_back(in.id);
    }
    return deps;
  };
  std::vector<const OpNode*> active;
  for (auto& n : p.nodes)
    if (!grouped.count(n.id)) active.push_back(&n);
  for (auto* n : active) indeg[n->id] = 0;
  for (auto* n : active)
    for (auto& d : dep_nodes(*n))
      if (indeg.count(d)) {
        out_edges[d].push_back(n->id);
        indeg[n->id]++;
      }
  // stable ready set ordered by first appearance in p.nodes, then id
  std::map<std::string, int> pos;
  for (size_t i = 0; i < p.nodes.size(); ++i) pos[p.nodes[i].id] = int(i);
  auto cmp = [&](const std::string& a, const std::string& b) {
    return pos[a] != pos[b] ? pos[a] < pos[b] : a < b;
  };
  std::vector<std::string> ready;
  for (auto* n : active)
    if (indeg[n->id] == 0) ready.push_back(n->id);
  std::sort(ready.begin(), ready.end(), cmp);
  while (!ready.empty()) {
    std::string id = ready.front();
    ready.erase(ready.begin());
    order.push_back(id);
    for (auto& c : out_edges[id]) {
      if (--indeg[c] == 0) {
        ready.insert(std::upper_bound(ready.begin(), ready.end(), c, cmp), c);
      }
    }
  }
  return order;
}

// ---------------------------------------------------------------------------
// Whole-program validation; returns diagnostics, never throws for program
// defects.

inline std::vector<std::string> validate_program(const Program& p) {
  std::vector<std::string> diags;
  // groups partition a contiguous WORLD
  {
    int next = 0;
    for (auto& g : p.groups) {
      if (g.world_size < 1) diags.push_back("group " + std::to_string(g.group_id) + ": world_size < 1");
      if (g.first_rank != next)
        diags.push_back("group " + std::to_string(g.group_id) + ": ranks not contiguous from " +
                        std::to_string(next));
      next = g.first_rank + g.world_size;
    }
    if (p.groups.empty()) diags.push_back("no process groups");
  }
  for (auto& d : p.decls) {
    for (auto e : d.shape)
      if (e <= 0) diags.push_back("tensor " + d.name + ": non-positive extent");
    const ProcessGroup* g = p.find_group(d.group);
    if (!g) {
      diags.push_back("tensor " + d.name + ": unknown group " + std::to_string(d.group));
      continue;
    }
    if (d.layout.is_sliced()) {
      if (d.layout.dim >= int(d.shape.size()))
        diags.push_back("tensor " + d.name + ": sliced axis out of range");
      else if (d.shape[d.layout.dim] % g->world_size != 0)
        diags.push_back("tensor " + d.name + ": extent " +
                        std::to_string(d.shape[d.layout.dim]) + " not divisible by " +
                        std::to_string(g->world_size) + " ranks");
    }
    if (d.shape.empty() && d.layout.kind != LayoutKind::Replicated)
      diags.push_back("tensor " + d.name + ": scalars must be replicated");
  }
  std::set<std::string> grouped = p.grouped_members();
  std::set<std::string> ids;
  for (auto& n : p.nodes) {
    if (!ids.insert(n.id).second) diags.push_back("duplicate node id " + n.id);
    if (p.find_decl(n.id)) diags.push_back("node id shadows tensor " + n.id);
  }
  for (auto& n : p.nodes) {
    for (auto& in : n.inputs)
      if (!p.has_id(in.id)) diags.push_back("node " + n.id + ": unknown input " + in.id);
    if (n.kind == OpKind::OverlapGroup)
      for (auto& m : n.members)
        if (!p.find_node(m)) diags.push_back("overlap " + n.id + ": unknown member " + m);
    if (!n.gather_decl.empty() && !p.find_decl(n.gather_decl))
      diags.push_back("node " + n.id + ": unknown gather tensor " + n.gather_decl);
  }
  for (auto& o : p.outputs)
    if (!p.find_node(o)) diags.push_back("output " + o + " is not a node");
  if (!diags.empty()) return diags;

  // acyclicity: topo order must cover all ungrouped nodes
  auto order = topo_order(p);
  size_t active = 0;
  for (auto& n : p.nodes)
    if (!grouped.count(n.id)) ++active;
  if (order.size() != active) {
    diags.push_back("cycle detected in dataflow graph");
    return diags;
  }

  // re-run inference and compare against stored values
  for (auto& n : p.nodes) {
    try {
      int group = 0;
      Inferred r = infer_node(p, n, &group);
      for (auto& w : r.warnings) diags.push_back("node " + n.id + ": warning: " + w);
      if (r.shape != n.out_shape)
        diags.push_back("node " + n.id + ": stored shape " + shape_str(n.out_shape) +
                        " != inferred " + shape_str(r.shape));
      if (r.layout != n.out_layout)
        diags.push_back("node " + n.id + ": stored layout " + n.out_layout.str() +
                        " != inferred " + r.layout.str());
      if (group != n.group)
        diags.push_back("node " + n.id + ": stored group != inferred");
      if (n.out_layout.is_sliced()) {
        const ProcessGroup* g = p.find_group(n.group);
        if (g && n.out_shape[n.out_layout.dim] % g->world_size != 0)
          diags.push_back("node " + n.id + ": sliced extent not divisible by ranks");
      }
      if (n.kind == OpKind::Send || n.kind == OpKind::FusedSend) {
        int src = p.value_group(n.inputs[0]);
        if (!p.find_group(src + n.group_offset))
          diags.push_back("node " + n.id + ": destination group " +
                          std::to_string(src + n.group_offset) + " does not exist");
      }
      if (n.kind == OpKind::Recv) {
        const OpNode* src = n.inputs[0].is_node ? p.find_node(n.inputs[0].id) : nullptr;
        if (!src || (src->kind != OpKind::Send && src->kind != OpKind::FusedSend))
          diags.push_back("node " + n.id + ": recv is not paired with a send");
      }
    } catch (const Error& e) {
      diags.push_back("node " + n.id + ": " + e.what());
    }
  }

  // every node reachable from the program's roots: its outputs plus gather
  // nodes, which re-materialize updated tensors as a side effect
  {
    std::set<std::string> seen;
    std::vector<std::string> stack(p.outputs.begin(), p.outputs.end());
    for (auto& n : p.nodes)
      if (!n.gather_decl.empty()) stack.push_back(n.id);
    while (!stack.empty()) {
      std::string id = stack.back();
      stack.pop_back();
      if (!seen.insert(id).second) continue;
      const OpNode* n = p.find_node(id);
      if (!n) continue;
      for (auto& in : n->inputs)
        if (in.is_node) stack.push_back(in.id);
      for (auto& m : n->members) stack.push_back(m);
    }
    for (auto& n : p.nodes)
      if (!seen.count(n.id))
        diags.push_back("node " + n.id + ": unreachable from outputs");
  }
  return diags;
}

// Recompute and store inferred metadata on every node, in topo order.
// Throws on inference failure.
inline void reinfer(Program& p) {
  for (auto& id : topo_order(p)) {
    OpNode* n = p.find_node(id);
    int group = 0;
    Inferred r = infer_node(p, *n, &group);
    n->out_shape = r.shape;
    n->out_layout = r.layout;
    n->group = group;
    if (n->kind == OpKind::OverlapGroup) continue;
  }
  // members of overlap groups still need inference for execution
  for (auto& n : p.nodes) {
    if (n.kind != OpKind::OverlapGroup) continue;
    for (auto& m : n.members) {
      OpNode* mem = p.find_node(m);
      int group = 0;
      Inferred r = infer_node(p, *mem, &group);
      mem->out_shape = r.shape;
      mem->out_layout = r.layout;
      mem->group = group;
    }
    int group = 0;
    Inferred r = infer_node(p, n, &group);
    n.out_shape = r.shape;
    n.out_layout = r.layout;
    n.group = group;
  }
}

// ---------------------------------------------------------------------------
// Canonical structural signature, id-free: used for DFG isomorphism
// memoization in the autotuner and for round-trip checks.

inline std::string structural_signature(const Program& p) {
  std::map<std::string, std::string> sig;  // node id -> canonical string
  auto value_sig = [&](const ValueRef& v) -> std::string {
    if (!v.is_node) return "t:" + v.id;  // decl names are stable across transforms
    return sig.at(v.id);
  };
  auto node_sig = [&](const OpNode& n) {
    std::string s = std::string("(") + op_kind_name(n.kind);
    s += "|" + std::string(reducer_name(n.reducer));
    if (n.kind == OpKind::Reduce || n.kind == OpKind::Broadcast)
      s += "|r" + std::to_string(n.root);
    if (n.kind == OpKind::Send || n.kind == OpKind::FusedSend || n.kind == OpKind::Recv)
      s += "|o" + std::to_string(n.group_offset);
    if (!n.expr.empty()) {
      s += "|e";
      for (auto& e : n.expr.nodes) {
        s += std::to_string(int(e.op)) + "," + std::to_string(e.input) + "," +
             std::to_string(e.a) + "," + std::to_string(e.b) + "," + e.target + ";";
      }
      s += "#" + std::to_string(n.expr.root);
    }
    if (!n.gather_decl.empty()) s += "|g" + n.gather_decl;
    s += "|" + n.out_layout.str() + shape_str(n.out_shape);
    if (n.kind == OpKind::OverlapGroup) {
      s += "|m[";
      for (auto& m : n.members) s += sig.at(m) + ";";
      s += "]";
    }
    s += "|[";
    for (auto& in : n.inputs) s += value_sig(in) + ";";
    s += "])";
    return s;
  };
  // members of overlap groups first (they are excluded from topo_order)
  std::vector<std::string> order;
  {
    std::set<std::string> grouped = p.grouped_members();
    // simple repeated sweep; programs are small
    std::set<std::string> done;
    while (done.size() < p.nodes.size()) {
      bool progress = false;
      for (auto& n : p.nodes) {
        if (done.count(n.id)) continue;
        bool ready = true;
        for (auto& in : n.inputs)
          if (in.is_node && !done.count(in.id)) ready = false;
        if (n.kind == OpKind::OverlapGroup)
          for (auto& m : n.members)
            if (!done.count(m)) ready = false;
        if (!ready) continue;
        sig[n.id] = node_sig(n);
        order.push_back(n.id);
        done.insert(n.id);
        progress = true;
      }
      if (!progress) break;  // cyclic; signature of what we have
    }
  }
  std::vector<std::string> parts;
  for (auto& o : p.outputs) parts.push_back(sig.count(o) ? sig[o] : "?");
  // include non-output roots (e.g. gather nodes kept alive) so dead-node
  // elimination changes the signature
  std::map<std::string, std::vector<std::string>> cons = p.consumers();
  for (auto& n : p.nodes) {
    bool is_out = std::find(p.outputs.begin(), p.outputs.end(), n.id) != p.outputs.end();
    if (!is_out && cons[n.id].empty() && !p.grouped_members().count(n.id))
      parts.push_back("root:" + (sig.count(n.id) ? sig[n.id] : std::string("?")));
  }
  std::sort(parts.begin() + p.outputs.size(), parts.end());
  std::string all;
  for (auto& d : p.decls)
    all += "d:" + d.name + ":" + d.layout.str() + shape_str(d.shape) + ";";
  for (auto& s : parts) all += s + "\n";
  return all;
}

}  // namespace ccopt
