#pragma once

#include <queue>

#include "ccopt/oracle.hpp"
#include "ccopt/runtime.hpp"
#include "ccopt/transform.hpp"

namespace ccopt {

// Schedule search: enumerate every distinct program reachable through the
// transformation directives (bounded depth, memoized on structural shape),
// verify each against the sequential reference, and pick the cheapest under
// the simulated cost model.

struct TuneConfig {
  CommConfig comm;
  uint64_t seed = 1;
  double tol = 1e-5;
  int fusion_threshold = 16;  // max composed expression stages per fused kernel
};

struct Candidate {
  Schedule schedule;
  double simulated_time = 0.0;
  int64_t comm_bytes = 0;  // summed over ranks
  int kernel_steps = 0;
  double deviation = 0.0;
};

struct TuneReport {
  std::vector<Candidate> candidates;
  size_t winner = 0;
};

namespace detail {

// Maximal sets of pointwise nodes that can become one kernel. Greedy over the
// topological order: a cluster absorbs any later pointwise node consuming a
// member, capped by the stage threshold, then trimmed until the fusion is
// legal (interior members must not escape the cluster).
inline std::vector<std::vector<std::string>> fusion_clusters(const Program& p, int threshold) {
  std::vector<std::vector<std::string>> out;
  std::set<std::string> taken;
  std::vector<std::string> order = topo_order(p);
  Program cur = p;
  for (auto& seed_id : order) {
    const OpNode* seed = cur.find_node(seed_id);
    if (!seed || seed->kind != OpKind::Pointwise || taken.count(seed_id)) continue;
    std::set<std::string> members{seed_id};
    int stages = stages_of(*seed);
    // grow to a fixpoint over undirected producer-consumer adjacency, so
    // branches joined only through a later consumer still land in one kernel
    bool grew = true;
    while (grew) {
      grew = false;
      for (auto& id : order) {
        if (members.count(id) || taken.count(id)) continue;
        const OpNode* n = cur.find_node(id);
        if (!n || n->kind != OpKind::Pointwise) continue;
        bool links = false;
        for (auto& in : n->inputs)
          if (in.is_node && members.count(in.id)) links = true;
        for (auto& m : members)
          if (consumes(*cur.find_node(m), id)) links = true;
        if (!links || stages + stages_of(*n) > threshold) continue;
        members.insert(id);
        stages += stages_of(*n);
        grew = true;
      }
    }
    std::vector<std::string> cluster;
    for (auto& id : order)
      if (members.count(id)) cluster.push_back(id);
    while (cluster.size() > 1) {
      try {
        cur = fuse_computation(cur, cluster);
        break;
      } catch (const Error&) {
        cluster.pop_back();
      }
    }
    if (cluster.size() < 2) continue;
    for (auto& id : cluster) taken.insert(id);
    out.push_back(cluster);
  }
  return out;
}

// Directive bundles applicable to `p`, in a deterministic order. Each bundle
// is applied atomically during the search (as_slice travels with the dead
// removal of its gather nodes, since dropping a gather alone changes results).
inline std::vector<std::vector<Directive>> next_directives(const Program& p) {
  std::vector<std::vector<Directive>> out;
  auto cons = p.consumers();
  std::set<std::string> grouped = p.grouped_members();
  auto is_output = [&](const std::string& id) {
    return std::find(p.outputs.begin(), p.outputs.end(), id) != p.outputs.end();
  };
  for (auto& n : p.nodes) {
    if (grouped.count(n.id)) continue;
    if (n.kind == OpKind::AllReduce) {
      Directive d;
      d.kind = DirectiveKind::SplitArRsAg;
      d.target = n.id;
      out.push_back({d});
    }
    if ((n.kind == OpKind::AllGather && n.gather_decl.empty()) ||
        n.kind == OpKind::Broadcast) {
      // maximal single-consumer computation chain hanging off the collective
      std::vector<std::string> chain;
      std::string cur = n.id;
      while (true) {
        auto it = cons.find(cur);
        if (it == cons.end() || it->second.size() != 1) break;
        const OpNode* c = p.find_node(it->second[0]);
        if (!c || grouped.count(c->id)) break;
        bool comp = c->kind == OpKind::Pointwise ||
                    (n.kind == OpKind::AllGather && c->kind == OpKind::FusedSend);
        if (!comp || c->expr.has_reduce()) break;
        chain.push_back(c->id);
        if (is_output(c->id)) break;
        cur = c->id;
      }
      if (!chain.empty()) {
        Directive d;
        if (n.kind == OpKind::AllGather) {
          d.kind = DirectiveKind::ReorderAllGather;
          d.ag = n.id;
        } else {
          d.kind = DirectiveKind::ReorderBroadcast;
          d.bc = n.id;
        }
        d.ids = chain;
        out.push_back({d});
      }
    }
    if (n.kind == OpKind::ReduceScatter) {
      // rs -> sliced comps -> ag collapses into one fused collective
      std::vector<std::string> comps;
      std::string cur = n.id;
      std::string ag;
      while (true) {
        auto it = cons.find(cur);
        if (it == cons.end() || it->second.size() != 1) break;
        const OpNode* c = p.find_node(it->second[0]);
        if (!c || grouped.count(c->id)) break;
        if (c->kind == OpKind::AllGather) {
          ag = c->id;
          break;
        }
        if (c->kind != OpKind::Pointwise || !c->out_layout.is_sliced() || is_output(c->id))
          break;
        comps.push_back(c->id);
        cur = c->id;
      }
      if (!ag.empty()) {
        Directive d;
        d.kind = DirectiveKind::FuseAllReduce;
        d.rs = n.id;
        d.ids = comps;
        d.ag = ag;
        out.push_back({d});
      }
    }
    if (n.kind == OpKind::Send && n.inputs[0].is_node) {
      const OpNode* c = p.find_node(n.inputs[0].id);
      if (c && c->kind == OpKind::Pointwise && !grouped.count(c->id) &&
          cons[c->id].size() == 1 && !is_output(c->id)) {
        Directive d;
        d.kind = DirectiveKind::FuseSend;
        d.comp = c->id;
        d.send = n.id;
        out.push_back({d});
      }
    }
  }
  // overlap: maximal single-consumer producer-consumer chains
  for (auto& n : p.nodes) {
    if (n.kind == OpKind::OverlapGroup || grouped.count(n.id)) continue;
    bool chain_head = true;
    for (auto& in : n.inputs) {
      if (!in.is_node) continue;
      const OpNode* pr = p.find_node(in.id);
      if (pr && pr->kind != OpKind::OverlapGroup && !grouped.count(pr->id) &&
          cons[pr->id].size() == 1 && !is_output(pr->id))
        chain_head = false;
    }
    if (!chain_head) continue;
    std::vector<std::string> chain{n.id};
    std::string cur = n.id;
    while (!is_output(cur)) {
      auto it = cons.find(cur);
      if (it == cons.end() || it->second.size() != 1) break;
      const OpNode* c = p.find_node(it->second[0]);
      if (!c || c->kind == OpKind::OverlapGroup || grouped.count(c->id)) break;
      chain.push_back(c->id);
      cur = c->id;
    }
    if (chain.size() >= 2) {
      Directive d;
      d.kind = DirectiveKind::Overlap;
      d.ids = chain;
      out.push_back({d});
    }
  }
  // as_slice bundled with removing the now-redundant gathers of the tensor
  for (auto& decl : p.decls) {
    if (decl.layout.kind != LayoutKind::Replicated) continue;
    try {
      as_slice(p, decl.name);
    } catch (const Error&) {
      continue;
    }
    std::vector<Directive> bundle;
    Directive d;
    d.kind = DirectiveKind::AsSlice;
    d.target = decl.name;
    bundle.push_back(d);
    for (auto& n : p.nodes)
      if (n.gather_decl == decl.name && cons[n.id].empty() && !is_output(n.id) &&
          !grouped.count(n.id)) {
        Directive dd;
        dd.kind = DirectiveKind::Dead;
        dd.target = n.id;
        bundle.push_back(dd);
      }
    out.push_back(bundle);
  }
  return out;
}

}  // namespace detail

// Breadth-first enumeration of distinct transformed programs, starting from a
// kernel-fusion pre-pass. Candidate 0 is always the pre-pass alone.
inline std::vector<Schedule> enumerate_schedules(const Program& base, const TuneConfig& cfg) {
  Schedule prefix;
  for (auto& cluster : detail::fusion_clusters(base, cfg.fusion_threshold)) {
    Directive d;
    d.kind = DirectiveKind::FuseComputation;
    d.ids = cluster;
    prefix.directives.push_back(d);
  }
  Program start = apply_schedule(base, prefix);
  int comm_nodes = 0;
  for (auto& n : start.nodes)
    if (is_comm(n.kind)) ++comm_nodes;
  int max_depth = 3 * comm_nodes + 2;

  std::vector<Schedule> out;
  std::set<std::string> seen{structural_signature(start)};
  std::queue<std::tuple<Program, Schedule, int>> frontier;
  out.push_back(prefix);
  frontier.push({start, prefix, 0});
  while (!frontier.empty()) {
    auto [p, sched, depth] = std::move(frontier.front());
    frontier.pop();
    if (depth >= max_depth) continue;
    for (auto& bundle : detail::next_directives(p)) {
      Program q = p;
      Schedule qs = sched;
      bool ok = true;
      for (auto& d : bundle) {
        try {
          q = apply_directive(std::move(q), d);
        } catch (const Error&) {
          ok = false;
          break;
        }
        qs.directives.push_back(d);
      }
      if (!ok || !validate_program(q).empty()) continue;
      if (!seen.insert(structural_signature(q)).second) continue;
      out.push_back(qs);
      frontier.push({std::move(q), std::move(qs), depth + 1});
    }
  }
  return out;
}

// Exhaustive evaluation: every candidate runs against the reference results;
// any mismatch beyond tolerance aborts the search (it signals a transformation
// bug, never a tuning outcome).
inline TuneReport tune(const Program& base, const TuneConfig& cfg) {
  TuneReport rep;
  auto oracle_ref = oracle_results(base, gen_decl_values(base, cfg.seed), cfg.seed);
  for (auto& sched : enumerate_schedules(base, cfg)) {
    Program p = apply_schedule(base, sched);
    Engine eng(p, cfg.comm, cfg.seed);
    RunReport run = eng.run(gen_decl_values(p, cfg.seed));
    Candidate c;
    c.schedule = sched;
    c.simulated_time = run.simulated_time;
    for (auto b : run.comm_bytes) c.comm_bytes += b;
    c.kernel_steps = run.kernel_steps;
    c.deviation = compare_results(oracle_ref, run.results);
    if (c.deviation > cfg.tol)
      throw Error(ErrCode::CandidateFailed,
                  "schedule [" + sched.str() + "] deviates " + std::to_string(c.deviation));
    rep.candidates.push_back(std::move(c));
  }
  for (size_t i = 1; i < rep.candidates.size(); ++i) {
    const Candidate& a = rep.candidates[i];
    const Candidate& b = rep.candidates[rep.winner];
    double scale = std::max({1.0, a.simulated_time, b.simulated_time});
    bool tie = std::abs(a.simulated_time - b.simulated_time) <= 1e-9 * scale;
    if ((!tie && a.simulated_time < b.simulated_time) ||
        (tie && (a.kernel_steps < b.kernel_steps ||
                 (a.kernel_steps == b.kernel_steps &&
                  a.schedule.str() < b.schedule.str()))))
      rep.winner = i;
  }
  return rep;
}

inline Json tune_report_to_json(const TuneReport& rep) {
  Json j;
  j["candidates"] = Json::array();
  for (auto& c : rep.candidates) {
    Json cj;
    cj["schedule"] = schedule_to_json(c.schedule);
    cj["simulated_time"] = c.simulated_time;
    cj["comm_bytes"] = c.comm_bytes;
    cj["kernel_steps"] = c.kernel_steps;
    cj["deviation"] = c.deviation;
    j["candidates"].push_back(cj);
  }
  j["winner"] = rep.winner;
  j["winner_schedule"] = schedule_to_json(rep.candidates.at(rep.winner).schedule);
  return j;
}

}  // namespace ccopt
