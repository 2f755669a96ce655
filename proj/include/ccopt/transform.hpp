#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ccopt/json_io.hpp"
#include "ccopt/program.hpp"

namespace ccopt {

// Transformations are pure Program -> Program rewrites. Each allocates fresh
// node ids derived from the nodes it replaces (documented in the README) and
// records old -> new pairs in the provenance list.

using Provenance = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline void rewire(Program& p, const std::string& old_id, const std::string& new_id,
                   const std::set<std::string>& skip = {}) {
  for (auto& n : p.nodes) {
    if (skip.count(n.id)) continue;
    for (auto& in : n.inputs)
      if (in.is_node && in.id == old_id) in.id = new_id;
  }
  for (auto& o : p.outputs)
    if (o == old_id) o = new_id;
}

inline void erase_node(Program& p, const std::string& id) {
  p.nodes.erase(p.nodes.begin() + p.node_index(id));
}

inline OpNode& need_node(Program& p, const std::string& id, ErrCode code, const char* what) {
  OpNode* n = p.find_node(id);
  if (!n) throw Error(code, std::string(what) + ": no node '" + id + "'");
  return *n;
}

inline bool consumes(const OpNode& n, const std::string& id) {
  for (auto& in : n.inputs)
    if (in.is_node && in.id == id) return true;
  return false;
}

inline int stages_of(const OpNode& n) {
  return n.stage_count > 0 ? n.stage_count : 1;
}

// Composes the expressions of a producer-consumer comp chain into one dag.
// `replace` maps external value ids to Input-slot substitutes (used by
// fuse_allreduce to turn the ReduceScatter value into slot 0).
struct ComposedExpr {
  ExprDag expr;
  std::vector<ValueRef> inputs;
  int stage_count = 0;
};

inline ComposedExpr compose_chain(const Program& p, const std::vector<std::string>& ids,
                                  const std::vector<ValueRef>& pre_inputs,
                                  const std::map<std::string, int>& pre_slots,
                                  ErrCode chain_err, bool require_chain = true) {
  ComposedExpr out;
  out.inputs = pre_inputs;
  std::set<std::string> members(ids.begin(), ids.end());
  std::set<std::string> consumed;  // members some later member reads
  std::map<std::string, int> value_expr;  // member id -> expr-node index of its root
  auto slot_of = [&](const ValueRef& ref) {
    for (size_t i = 0; i < out.inputs.size(); ++i)
      if (out.inputs[i] == ref) return int(i);
    out.inputs.push_back(ref);
    return int(out.inputs.size()) - 1;
  };
  for (size_t i = 0; i < ids.size(); ++i) {
    const OpNode* n = p.find_node(ids[i]);
    if (!n) throw Error(ErrCode::UnknownId, "no node '" + ids[i] + "'");
    if (n->kind != OpKind::Pointwise)
      throw Error(ErrCode::NotComputation, "'" + n->id + "' is not a pointwise computation");
    bool chained = i == 0;
    std::vector<int> subst(n->inputs.size(), -1);
    std::vector<int> input_map(n->inputs.size(), -1);
    for (size_t s = 0; s < n->inputs.size(); ++s) {
      const ValueRef& ref = n->inputs[s];
      auto it = value_expr.find(ref.id);
      if (ref.is_node && it != value_expr.end()) {
        subst[s] = it->second;
        consumed.insert(ref.id);
        chained = true;
      } else if (ref.is_node && pre_slots.count(ref.id)) {
        input_map[s] = pre_slots.at(ref.id);
        chained = true;
      } else {
        if (ref.is_node && members.count(ref.id))
          throw Error(chain_err, "'" + n->id + "' consumes later member '" + ref.id + "'");
        input_map[s] = slot_of(ref);
      }
    }
    if (require_chain && !chained)
      throw Error(chain_err, "'" + n->id + "' does not consume an earlier chain member");
    value_expr[n->id] = out.expr.append(n->expr, subst, input_map);
    out.stage_count += stages_of(*n);
  }
  // interior members must flow into the composed value, or their effects would
  // be dropped
  for (size_t i = 0; i + 1 < ids.size(); ++i)
    if (!consumed.count(ids[i]))
      throw Error(chain_err, "'" + ids[i] + "' is not consumed by a later member");
  out.expr.root = value_expr.at(ids.back());
  return out;
}

// No comp in the chain except the last may feed anything outside the chain.
inline void check_interior_consumers(const Program& p, const std::vector<std::string>& ids,
                                     ErrCode code) {
  std::set<std::string> members(ids.begin(), ids.end());
  auto cons = p.consumers();
  for (size_t i = 0; i + 1 < ids.size(); ++i)
    for (auto& c : cons[ids[i]])
      if (!members.count(c))
        throw Error(code, "'" + ids[i] + "' still feeds '" + c + "' outside the chain");
  for (auto& id : ids)
    if (std::find(p.outputs.begin(), p.outputs.end(), id) != p.outputs.end() && id != ids.back())
      throw Error(code, "'" + id + "' is a program output");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// split: AllReduce -> ReduceScatter + AllGather.

inline Program split_allreduce(Program p, const std::string& ar_id, Provenance* prov = nullptr) {
  OpNode& ar = detail::need_node(p, ar_id, ErrCode::NotAllReduce, "split");
  if (ar.kind != OpKind::AllReduce)
    throw Error(ErrCode::NotAllReduce, "'" + ar_id + "' is a " + op_kind_name(ar.kind));
  OpNode rs;
  rs.id = p.fresh_id(ar_id + "_rs");
  rs.kind = OpKind::ReduceScatter;
  rs.reducer = ar.reducer;
  rs.inputs = ar.inputs;
  OpNode ag;
  ag.id = p.fresh_id(ar_id + "_ag");
  ag.kind = OpKind::AllGather;
  ag.inputs = {ValueRef{true, rs.id}};
  int pos = p.node_index(ar_id);
  detail::rewire(p, ar_id, ag.id);
  p.nodes[size_t(pos)] = rs;
  p.nodes.insert(p.nodes.begin() + pos + 1, ag);
  if (prov) {
    prov->push_back({ar_id, rs.id});
    prov->push_back({ar_id, ag.id});
  }
  reinfer(p);
  return p;
}

// ---------------------------------------------------------------------------
// reorder: move a chain of pointwise computations before an AllGather (or a
// Broadcast), so they run on the sliced (or root-local) data. Emits an extra
// gathering AllGather for every tensor the chain updates other than the one
// carried by the chain's own output.

inline Program reorder_allgather(Program p, const std::string& ag_id,
                                 const std::vector<std::string>& comps,
                                 Provenance* prov = nullptr) {
  OpNode& ag = detail::need_node(p, ag_id, ErrCode::NotAConsumer, "reorder");
  if (ag.kind != OpKind::AllGather || !ag.gather_decl.empty())
    throw Error(ErrCode::NotAConsumer, "'" + ag_id + "' is not a plain allgather");
  if (comps.empty()) return p;
  std::set<std::string> members(comps.begin(), comps.end());
  auto cons = p.consumers();
  for (auto& c : cons[ag_id])
    if (!members.count(c))
      throw Error(ErrCode::NotAConsumer, "allgather also feeds '" + c + "'");
  detail::check_interior_consumers(p, comps, ErrCode::DependencyViolation);
  ValueRef sliced_src = ag.inputs[0];

  std::map<std::string, std::string> renamed;  // comp -> sc comp
  std::vector<OpNode> sc_nodes;
  for (size_t i = 0; i < comps.size(); ++i) {
    const OpNode* c = p.find_node(comps[i]);
    if (!c) throw Error(ErrCode::NotAConsumer, "no node '" + comps[i] + "'");
    if (c->kind != OpKind::Pointwise && c->kind != OpKind::FusedSend)
      throw Error(ErrCode::NotSliceable, "'" + c->id + "' is not a pointwise computation");
    if (c->expr.has_reduce())
      throw Error(ErrCode::NotSliceable,
                  "'" + c->id + "' reduces over the gathered dimension");
    bool chained = false;
    OpNode sc = *c;
    sc.id = p.fresh_id(c->id + "_sc");
    for (auto& in : sc.inputs) {
      if (in.is_node && in.id == ag_id) {
        in = sliced_src;
        chained = true;
      } else if (in.is_node && renamed.count(in.id)) {
        in.id = renamed.at(in.id);
        chained = true;
      }
    }
    if (!chained)
      throw Error(ErrCode::NotAConsumer, "'" + c->id + "' does not consume the allgather chain");
    renamed[c->id] = sc.id;
    sc_nodes.push_back(sc);
  }

  OpNode& last = *p.find_node(comps.back());
  OpNode new_ag;
  new_ag.id = p.fresh_id(comps.back() + "_ag");
  new_ag.kind = OpKind::AllGather;
  new_ag.inputs = {ValueRef{true, renamed.at(comps.back())}};
  const ExprNode* last_root =
      last.expr.empty() ? nullptr : &last.expr.nodes[size_t(last.expr.root)];
  std::string chain_target;
  if (last_root && last_root->op == ExprNode::Op::Update) chain_target = last_root->target;
  new_ag.gather_decl = chain_target;  // re-materialize the tensor the chain updates

  // one gathering node per remaining updated tensor, in chain order
  std::vector<OpNode> gathers;
  std::set<std::string> seen_targets;
  for (size_t i = 0; i < comps.size(); ++i) {
    for (auto& t : p.find_node(comps[i])->expr.update_targets()) {
      if (t == chain_target || !seen_targets.insert(t).second) continue;
      OpNode gn;
      gn.id = p.fresh_id(t + "_ag");
      gn.kind = OpKind::AllGather;
      gn.gather_decl = t;
      gn.inputs = {ValueRef{true, renamed.at(comps[i])}};
      gathers.push_back(gn);
    }
  }

  int pos = p.node_index(ag_id);
  detail::erase_node(p, ag_id);
  for (auto& id : comps) {
    pos = std::min(pos, p.node_index(id));
    detail::erase_node(p, id);
  }
  std::set<std::string> fresh;
  for (auto& sc : sc_nodes) fresh.insert(sc.id);
  detail::rewire(p, comps.back(), new_ag.id, fresh);
  std::vector<OpNode> added = sc_nodes;
  added.push_back(new_ag);
  for (auto& gn : gathers) added.push_back(gn);
  p.nodes.insert(p.nodes.begin() + pos, added.begin(), added.end());
  if (prov) {
    for (auto& [from, to] : renamed) prov->push_back({from, to});
    prov->push_back({ag_id, new_ag.id});
  }
  try {
    reinfer(p);
  } catch (const Error& e) {
    if (e.code() == ErrCode::LayoutMismatch || e.code() == ErrCode::ShapeMismatch ||
        e.code() == ErrCode::DivisibilityError)
      throw Error(ErrCode::NotSliceable, std::string("chain cannot be sliced: ") + e.what());
    throw;
  }
  for (auto& sc : sc_nodes)
    if (!p.find_node(sc.id)->out_layout.is_sliced())
      throw Error(ErrCode::NotSliceable, "'" + sc.id + "' did not become sliced");
  return p;
}

// Symmetric form for Broadcast: the chain runs on the pre-broadcast value
// (meaningful on the root; other ranks' results are discarded by the new
// Broadcast).
inline Program reorder_broadcast(Program p, const std::string& bc_id,
                                 const std::vector<std::string>& comps,
                                 Provenance* prov = nullptr) {
  OpNode& bc = detail::need_node(p, bc_id, ErrCode::NotAConsumer, "reorder");
  if (bc.kind != OpKind::Broadcast)
    throw Error(ErrCode::NotAConsumer, "'" + bc_id + "' is not a broadcast");
  if (comps.empty()) return p;
  std::set<std::string> members(comps.begin(), comps.end());
  auto cons = p.consumers();
  for (auto& c : cons[bc_id])
    if (!members.count(c))
      throw Error(ErrCode::NotAConsumer, "broadcast also feeds '" + c + "'");
  detail::check_interior_consumers(p, comps, ErrCode::DependencyViolation);
  ValueRef src = bc.inputs[0];
  int root = bc.root;
  std::map<std::string, std::string> renamed;
  std::vector<OpNode> sc_nodes;
  for (auto& id : comps) {
    const OpNode* c = p.find_node(id);
    if (!c) throw Error(ErrCode::NotAConsumer, "no node '" + id + "'");
    if (c->kind != OpKind::Pointwise)
      throw Error(ErrCode::NotComputation, "'" + id + "' is not a pointwise computation");
    OpNode sc = *c;
    sc.id = p.fresh_id(c->id + "_rt");
    bool chained = false;
    for (auto& in : sc.inputs) {
      if (in.is_node && in.id == bc_id) {
        in = src;
        chained = true;
      } else if (in.is_node && renamed.count(in.id)) {
        in.id = renamed.at(in.id);
        chained = true;
      }
    }
    if (!chained)
      throw Error(ErrCode::NotAConsumer, "'" + id + "' does not consume the broadcast chain");
    renamed[c->id] = sc.id;
    sc_nodes.push_back(sc);
  }
  OpNode new_bc;
  new_bc.id = p.fresh_id(comps.back() + "_bc");
  new_bc.kind = OpKind::Broadcast;
  new_bc.root = root;
  new_bc.inputs = {ValueRef{true, renamed.at(comps.back())}};
  int pos = p.node_index(bc_id);
  detail::erase_node(p, bc_id);
  for (auto& id : comps) {
    pos = std::min(pos, p.node_index(id));
    detail::erase_node(p, id);
  }
  std::set<std::string> fresh;
  for (auto& sc : sc_nodes) fresh.insert(sc.id);
  detail::rewire(p, comps.back(), new_bc.id, fresh);
  std::vector<OpNode> added = sc_nodes;
  added.push_back(new_bc);
  p.nodes.insert(p.nodes.begin() + pos, added.begin(), added.end());
  if (prov) {
    for (auto& [from, to] : renamed) prov->push_back({from, to});
    prov->push_back({bc_id, new_bc.id});
  }
  reinfer(p);
  return p;
}

// ---------------------------------------------------------------------------
// fuse_computation: a producer-consumer chain of pointwise nodes becomes one
// node whose expression is the composition.

inline Program fuse_computation(Program p, const std::vector<std::string>& ids,
                                Provenance* prov = nullptr) {
  if (ids.empty()) throw Error(ErrCode::NotComputation, "empty fuse list");
  if (ids.size() == 1) {
    detail::need_node(p, ids[0], ErrCode::NotComputation, "fuse");
    return p;  // single-node fuse is the identity
  }
  detail::check_interior_consumers(p, ids, ErrCode::DependencyViolation);
  detail::ComposedExpr comp =
      detail::compose_chain(p, ids, {}, {}, ErrCode::DependencyViolation,
                            /*require_chain=*/false);
  OpNode fused;
  fused.id = p.fresh_id(ids.back() + "_fused");
  fused.kind = OpKind::Pointwise;
  fused.expr = comp.expr;
  fused.inputs = comp.inputs;
  fused.stage_count = comp.stage_count;
  int pos = p.node_index(ids.back());
  detail::rewire(p, ids.back(), fused.id);
  for (auto& id : ids) {
    pos = std::min(pos, p.node_index(id));
    detail::erase_node(p, id);
  }
  p.nodes.insert(p.nodes.begin() + pos, fused);
  if (prov)
    for (auto& id : ids) prov->push_back({id, fused.id});
  reinfer(p);
  return p;
}

// ---------------------------------------------------------------------------
// fuse_allreduce: ReduceScatter + sliced computations + AllGather collapse
// into one FusedAllReduce; with no computations the result is a plain
// AllReduce (the inverse of split).

inline Program fuse_allreduce(Program p, const std::string& rs_id,
                              const std::vector<std::string>& comps, const std::string& ag_id,
                              Provenance* prov = nullptr) {
  OpNode& rs = detail::need_node(p, rs_id, ErrCode::ChainBroken, "fuse_allreduce");
  OpNode& ag = detail::need_node(p, ag_id, ErrCode::ChainBroken, "fuse_allreduce");
  if (rs.kind != OpKind::ReduceScatter)
    throw Error(ErrCode::ChainBroken, "'" + rs_id + "' is not a reduce_scatter");
  if (ag.kind != OpKind::AllGather)
    throw Error(ErrCode::ChainBroken, "'" + ag_id + "' is not an allgather");
  std::string ag_feed = comps.empty() ? rs_id : comps.back();
  if (!detail::consumes(ag, ag_feed))
    throw Error(ErrCode::ChainBroken, "'" + ag_id + "' does not consume '" + ag_feed + "'");
  auto cons = p.consumers();
  {
    std::set<std::string> members(comps.begin(), comps.end());
    members.insert(ag_id);
    for (auto& c : cons[rs_id])
      if (!members.count(c))
        throw Error(ErrCode::ChainBroken, "'" + rs_id + "' feeds '" + c + "' outside the chain");
  }
  OpNode fused;
  fused.id = p.fresh_id(rs_id + "_fusedar");
  fused.reducer = rs.reducer;
  fused.gather_decl = ag.gather_decl;
  if (comps.empty()) {
    fused.kind = OpKind::AllReduce;
    fused.inputs = rs.inputs;
  } else {
    detail::check_interior_consumers(p, comps, ErrCode::ChainBroken);
    for (auto& id : comps)
      if (!p.find_node(id) || !p.find_node(id)->out_layout.is_sliced())
        throw Error(ErrCode::ChainBroken, "'" + id + "' is not a sliced computation");
    int axis = p.find_node(comps.back())->out_layout.dim;
    std::map<std::string, int> pre_slots{{rs_id, 0}};
    detail::ComposedExpr comp =
        detail::compose_chain(p, comps, {rs.inputs[0]}, pre_slots, ErrCode::ChainBroken);
    fused.kind = OpKind::FusedAllReduce;
    fused.expr = comp.expr;
    fused.inputs = comp.inputs;
    fused.stage_count = comp.stage_count;
    fused.axis = axis;
  }
  int pos = p.node_index(rs_id);
  detail::rewire(p, ag_id, fused.id);
  detail::erase_node(p, ag_id);
  for (auto& id : comps) {
    pos = std::min(pos, p.node_index(id));
    detail::erase_node(p, id);
  }
  pos = std::min(pos, p.node_index(rs_id));
  detail::erase_node(p, rs_id);
  p.nodes.insert(p.nodes.begin() + pos, fused);
  if (prov) {
    prov->push_back({rs_id, fused.id});
    for (auto& id : comps) prov->push_back({id, fused.id});
    prov->push_back({ag_id, fused.id});
  }
  reinfer(p);
  return p;
}

// ---------------------------------------------------------------------------
// fuse_send: a pointwise computation is applied element-wise while its result
// is sent to the next group.

inline Program fuse_send(Program p, const std::string& comp_id, const std::string& send_id,
                         Provenance* prov = nullptr) {
  OpNode& comp = detail::need_node(p, comp_id, ErrCode::NotConsumer, "fuse_send");
  OpNode& send = detail::need_node(p, send_id, ErrCode::NotConsumer, "fuse_send");
  if (send.kind != OpKind::Send)
    throw Error(ErrCode::NotConsumer, "'" + send_id + "' is not a send");
  if (comp.kind != OpKind::Pointwise)
    throw Error(ErrCode::NotComputation, "'" + comp_id + "' is not a pointwise computation");
  if (!detail::consumes(send, comp_id))
    throw Error(ErrCode::NotConsumer, "'" + send_id + "' does not consume '" + comp_id + "'");
  auto cons = p.consumers();
  for (auto& c : cons[comp_id])
    if (c != send_id)
      throw Error(ErrCode::NotConsumer, "'" + comp_id + "' also feeds '" + c + "'");
  OpNode fused;
  fused.id = p.fresh_id(send_id + "_fused");
  fused.kind = OpKind::FusedSend;
  fused.group_offset = send.group_offset;
  fused.expr = comp.expr;
  fused.inputs = comp.inputs;
  fused.stage_count = detail::stages_of(comp);
  int pos = std::min(p.node_index(comp_id), p.node_index(send_id));
  detail::rewire(p, send_id, fused.id);
  detail::erase_node(p, send_id);
  detail::erase_node(p, comp_id);
  p.nodes.insert(p.nodes.begin() + pos, fused);
  if (prov) {
    prov->push_back({comp_id, fused.id});
    prov->push_back({send_id, fused.id});
  }
  reinfer(p);
  return p;
}

// ---------------------------------------------------------------------------
// overlap: a producer-consumer chain becomes one OverlapGroup whose members
// the runtime interleaves at chunk granularity.

inline Program overlap(Program p, const std::vector<std::string>& ids,
                       Provenance* prov = nullptr) {
  if (ids.size() < 2)
    throw Error(ErrCode::NotProducerConsumerChain, "overlap needs at least two operations");
  for (size_t i = 1; i < ids.size(); ++i) {
    const OpNode* c = p.find_node(ids[i]);
    if (!c || !p.find_node(ids[i - 1]))
      throw Error(ErrCode::NotProducerConsumerChain, "unknown overlap member");
    if (!detail::consumes(*c, ids[i - 1]))
      throw Error(ErrCode::NotProducerConsumerChain,
                  "'" + ids[i] + "' does not consume '" + ids[i - 1] + "'");
  }
  std::set<std::string> members(ids.begin(), ids.end());
  auto cons = p.consumers();
  for (size_t i = 0; i + 1 < ids.size(); ++i)
    for (auto& c : cons[ids[i]])
      if (!members.count(c))
        throw Error(ErrCode::NotProducerConsumerChain,
                    "'" + ids[i] + "' feeds '" + c + "' outside the group");
  for (auto& id : ids)
    if (p.grouped_members().count(id))
      throw Error(ErrCode::NotProducerConsumerChain, "'" + id + "' is already in a group");
  OpNode grp;
  grp.id = p.fresh_id(ids.back() + "_ol");
  grp.kind = OpKind::OverlapGroup;
  grp.members = ids;
  detail::rewire(p, ids.back(), grp.id, members);
  int pos = 0;
  for (auto& id : ids) pos = std::max(pos, p.node_index(id));
  p.nodes.insert(p.nodes.begin() + pos + 1, grp);
  if (prov)
    for (auto& id : ids) prov->push_back({id, grp.id});
  reinfer(p);
  return p;
}

// ---------------------------------------------------------------------------
// as_slice: a replicated tensor whose every reader is a sliced computation on
// one common axis becomes declared Sliced, cutting its per-rank memory by the
// group size.

inline Program as_slice(Program p, const std::string& tensor, Provenance* prov = nullptr) {
  (void)prov;
  TensorDecl* decl = nullptr;
  for (auto& d : p.decls)
    if (d.name == tensor) decl = &d;
  if (!decl) throw Error(ErrCode::UnknownId, "no tensor '" + tensor + "'");
  if (decl->layout.kind != LayoutKind::Replicated)
    throw Error(ErrCode::ConsumerNotSliced, "'" + tensor + "' is not replicated");
  const ProcessGroup* g = p.find_group(decl->group);
  int axis = -1;
  for (auto& n : p.nodes) {
    bool reads = false;
    for (auto& in : n.inputs)
      if (!in.is_node && in.id == tensor) reads = true;
    bool updates = false;
    for (auto& t : n.expr.update_targets())
      if (t == tensor) updates = true;
    if (!reads && !updates) continue;
    if (n.gather_decl == tensor) continue;  // its own gathering node may stay for now
    int a;
    if (n.kind == OpKind::FusedAllReduce) {
      a = n.axis + int(decl->shape.size()) - int(n.out_shape.size());
    } else if (n.out_layout.is_sliced()) {
      a = n.out_layout.dim + int(decl->shape.size()) - int(n.out_shape.size());
    } else {
      throw Error(ErrCode::ConsumerNotSliced,
                  "'" + n.id + "' reads '" + tensor + "' in a non-sliced computation");
    }
    if (a < 0 || a >= int(decl->shape.size()) ||
        decl->shape[size_t(a)] != n.out_shape[size_t(a + int(n.out_shape.size()) - int(decl->shape.size()))])
      throw Error(ErrCode::ConsumerNotSliced,
                  "'" + n.id + "' broadcasts '" + tensor + "' over the sliced axis");
    if (axis >= 0 && axis != a)
      throw Error(ErrCode::ConsumerNotSliced, "consumers slice '" + tensor + "' on different axes");
    axis = a;
  }
  if (axis < 0)
    throw Error(ErrCode::ConsumerNotSliced, "'" + tensor + "' has no sliced consumer");
  if (decl->shape[size_t(axis)] % g->world_size != 0)
    throw Error(ErrCode::DivisibilityError, "'" + tensor + "' extent does not divide");
  decl->layout = Layout::sliced(axis);
  reinfer(p);
  return p;
}

// ---------------------------------------------------------------------------
// dead: removes a node nothing depends on.

inline Program dead(Program p, const std::string& id, Provenance* prov = nullptr) {
  (void)prov;
  detail::need_node(p, id, ErrCode::UnknownId, "dead");
  if (std::find(p.outputs.begin(), p.outputs.end(), id) != p.outputs.end())
    throw Error(ErrCode::StillLive, "'" + id + "' is a program output");
  auto cons = p.consumers();
  if (!cons[id].empty())
    throw Error(ErrCode::StillLive, "'" + id + "' feeds '" + cons[id][0] + "'");
  if (p.grouped_members().count(id))
    throw Error(ErrCode::StillLive, "'" + id + "' is an overlap member");
  detail::erase_node(p, id);
  return p;
}

// ---------------------------------------------------------------------------

inline Program apply_directive(Program p, const Directive& d, Provenance* prov = nullptr) {
  switch (d.kind) {
    case DirectiveKind::SplitArRsAg: return split_allreduce(std::move(p), d.target, prov);
    case DirectiveKind::ReorderAllGather: return reorder_allgather(std::move(p), d.ag, d.ids, prov);
    case DirectiveKind::ReorderBroadcast: return reorder_broadcast(std::move(p), d.bc, d.ids, prov);
    case DirectiveKind::FuseComputation: return fuse_computation(std::move(p), d.ids, prov);
    case DirectiveKind::FuseAllReduce: return fuse_allreduce(std::move(p), d.rs, d.ids, d.ag, prov);
    case DirectiveKind::FuseSend: return fuse_send(std::move(p), d.comp, d.send, prov);
    case DirectiveKind::Overlap: return overlap(std::move(p), d.ids, prov);
    case DirectiveKind::AsSlice: return as_slice(std::move(p), d.target, prov);
    case DirectiveKind::Dead: return dead(std::move(p), d.target, prov);
  }
  throw Error(ErrCode::InvalidInput, "unknown directive");
}

inline Program apply_schedule(Program p, const Schedule& s, Provenance* prov = nullptr) {
  for (size_t i = 0; i < s.directives.size(); ++i) {
    try {
      p = apply_directive(std::move(p), s.directives[i], prov);
    } catch (const Error& e) {
      throw Error(e.code(), "directive " + std::to_string(i) + " (" +
                                directive_kind_name(s.directives[i].kind) + "): " + e.what());
    }
  }
  return p;
}

}  // namespace ccopt
