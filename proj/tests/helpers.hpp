#pragma once

// Shared test fixtures: golden-program loading and small program builders.

#include <map>
#include <string>

#include "ccopt/json_io.hpp"
#include "ccopt/program.hpp"

namespace ccopt::testutil {

inline std::string src_path(const std::string& rel) {
  return std::string(CCOPT_SOURCE_DIR) + "/" + rel;
}

inline std::map<std::string, int64_t> desk_sizes(int ranks, int64_t n = 1024) {
  return {{"B", 2}, {"S", 8}, {"H", 64}, {"N", n}, {"W", ranks}};
}

inline Program load_golden(const std::string& name, int ranks, int64_t n = 1024) {
  return program_from_json(load_json_file(src_path("goldens/" + name)),
                           desk_sizes(ranks, n));
}

inline Schedule load_schedule(const std::string& name) {
  return schedule_from_json(load_json_file(src_path("schedules/" + name)));
}

// One group of `world` ranks, a Local input of `n` elements, one AllReduce.
inline Program simple_allreduce(int world, int64_t n) {
  Program p;
  p.name = "ar";
  p.groups.push_back({0, world, 0});
  TensorDecl d;
  d.name = "x";
  d.shape = {n};
  d.layout = Layout::local();
  p.decls.push_back(d);
  OpNode ar;
  ar.id = "ar";
  ar.kind = OpKind::AllReduce;
  ar.inputs = {ValueRef{false, "x"}};
  p.nodes.push_back(ar);
  p.outputs = {"ar"};
  reinfer(p);
  return p;
}

inline OpNode pointwise(const std::string& id, const std::vector<std::string>& input_names,
                        const std::string& expr) {
  OpNode n;
  n.id = id;
  n.kind = OpKind::Pointwise;
  for (auto& in : input_names) n.inputs.push_back(ValueRef{false, in});
  n.expr = parse_expr(expr, input_names, id);
  return n;
}

}  // namespace ccopt::testutil
