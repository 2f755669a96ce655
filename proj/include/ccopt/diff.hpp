#pragma once

#include "ccopt/json_io.hpp"

namespace ccopt {

// Structural dataflow-graph diff between two programs, keyed by node id and
// tensor name. Empty result means structurally identical.

struct DiffEntry {
  enum class Kind { Added, Removed, Changed } kind;
  std::string id;      // node id or "tensor:<name>"
  std::string detail;  // human-readable description of the change
};

namespace detail {

inline std::string node_summary(const Program& p, const OpNode& n) {
  std::string s = op_kind_name(n.kind);
  s += "(";
  for (size_t i = 0; i < n.inputs.size(); ++i) s += (i ? "," : "") + n.inputs[i].id;
  s += ")";
  if (!n.expr.empty()) {
    std::vector<std::string> names;
    for (auto& in : n.inputs) names.push_back(in.id);
    s += " expr=" + expr_to_string(n.expr, names);
  }
  if (!n.members.empty()) {
    s += " members=[";
    for (size_t i = 0; i < n.members.size(); ++i) s += (i ? "," : "") + n.members[i];
    s += "]";
  }
  if (!n.gather_decl.empty()) s += " gather=" + n.gather_decl;
  s += " -> " + shape_str(n.out_shape) + " " + n.out_layout.str();
  (void)p;
  return s;
}

}  // namespace detail

inline std::vector<DiffEntry> diff_programs(const Program& a, const Program& b) {
  std::vector<DiffEntry> out;
  for (auto& da : a.decls) {
    const TensorDecl* db = b.find_decl(da.name);
    if (!db) {
      out.push_back({DiffEntry::Kind::Removed, "tensor:" + da.name, da.layout.str()});
    } else if (da.layout != db->layout || da.shape != db->shape) {
      out.push_back({DiffEntry::Kind::Changed, "tensor:" + da.name,
                     shape_str(da.shape) + " " + da.layout.str() + " -> " +
                         shape_str(db->shape) + " " + db->layout.str()});
    }
  }
  for (auto& db : b.decls)
    if (!a.find_decl(db.name))
      out.push_back({DiffEntry::Kind::Added, "tensor:" + db.name, db.layout.str()});
  for (auto& na : a.nodes) {
    const OpNode* nb = b.find_node(na.id);
    if (!nb) {
      out.push_back({DiffEntry::Kind::Removed, na.id, detail::node_summary(a, na)});
      continue;
    }
    std::string sa = detail::node_summary(a, na);
    std::string sb = detail::node_summary(b, *nb);
    if (sa != sb) out.push_back({DiffEntry::Kind::Changed, na.id, sa + " -> " + sb});
  }
  for (auto& nb : b.nodes)
    if (!a.find_node(nb.id))
      out.push_back({DiffEntry::Kind::Added, nb.id, detail::node_summary(b, nb)});
  if (a.outputs != b.outputs) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (auto& x : v) s += (s.empty() ? "" : ",") + x;
      return s;
    };
    out.push_back({DiffEntry::Kind::Changed, "outputs", join(a.outputs) + " -> " + join(b.outputs)});
  }
  return out;
}

inline Json diff_to_json(const std::vector<DiffEntry>& entries) {
  Json j = Json::array();
  for (auto& e : entries) {
    Json ej;
    ej["kind"] = e.kind == DiffEntry::Kind::Added     ? "added"
                 : e.kind == DiffEntry::Kind::Removed ? "removed"
                                                      : "changed";
    ej["id"] = e.id;
    ej["detail"] = e.detail;
    j.push_back(ej);
  }
  return j;
}

}  // namespace ccopt
