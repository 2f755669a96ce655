#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccopt/program.hpp"

namespace ccopt {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Size expressions: program files may use "W", "H", "W/2", "B*S" for extents
// and group sizes; values come from the CLI (--ranks, --size).

inline int64_t eval_dim_expr(const std::string& s,
                             const std::map<std::string, int64_t>& dims) {
  size_t i = 0;
  auto skip = [&] { while (i < s.size() && std::isspace((unsigned char)s[i])) ++i; };
  auto term = [&]() -> int64_t {
    skip();
    if (i >= s.size()) throw Error(ErrCode::ParseError, "empty size term in '" + s + "'");
    if (std::isdigit((unsigned char)s[i])) {
      int64_t v = 0;
      while (i < s.size() && std::isdigit((unsigned char)s[i])) v = v * 10 + (s[i++] - '0');
      return v;
    }
    if (std::isalpha((unsigned char)s[i]) || s[i] == '_') {
      std::string name;
      while (i < s.size() && (std::isalnum((unsigned char)s[i]) || s[i] == '_'))
        name += s[i++];
      auto it = dims.find(name);
      if (it == dims.end())
        throw Error(ErrCode::ParseError, "unknown size symbol '" + name + "'");
      return it->second;
    }
    throw Error(ErrCode::ParseError, "bad size expression '" + s + "'");
  };
  int64_t v = term();
  for (skip(); i < s.size(); skip()) {
    char op = s[i++];
    int64_t rhs = term();
    if (op == '*') v *= rhs;
    else if (op == '/') {
      if (rhs == 0 || v % rhs != 0)
        throw Error(ErrCode::ParseError, "size '" + s + "' does not divide evenly");
      v /= rhs;
    } else {
      throw Error(ErrCode::ParseError, std::string("bad size operator '") + op + "'");
    }
  }
  return v;
}

inline int64_t json_dim(const Json& j, const std::map<std::string, int64_t>& dims) {
  if (j.is_number_integer()) return j.get<int64_t>();
  if (j.is_string()) return eval_dim_expr(j.get<std::string>(), dims);
  throw Error(ErrCode::ParseError, "size must be an integer or expression string");
}

// ---------------------------------------------------------------------------
// Small enum codecs.

inline Elem elem_from_str(const std::string& s) {
  if (s == "f16") return Elem::F16;
  if (s == "f32") return Elem::F32;
  throw Error(ErrCode::ParseError, "unknown element type '" + s + "'");
}

inline Reducer reducer_from_str(const std::string& s) {
  if (s == "sum") return Reducer::Sum;
  if (s == "max") return Reducer::Max;
  if (s == "min") return Reducer::Min;
  throw Error(ErrCode::ParseError, "unknown reducer '" + s + "'");
}

inline Layout layout_from_json(const Json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "sliced") return Layout::sliced(j.at("dim").get<int>());
  if (kind == "replicated") return Layout::replicated();
  if (kind == "local") return Layout::local();
  throw Error(ErrCode::ParseError, "unknown layout kind '" + kind + "'");
}

inline Json layout_to_json(const Layout& l) {
  Json j;
  switch (l.kind) {
    case LayoutKind::Sliced: j["kind"] = "sliced"; j["dim"] = l.dim; break;
    case LayoutKind::Replicated: j["kind"] = "replicated"; break;
    case LayoutKind::Local: j["kind"] = "local"; break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Pointwise expression strings. Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := NUMBER | IDENT | FN '(' args ')' | '(' expr ')' | '-' factor
// Functions: sqrt(x), pow(x,y), dropout(x,rate[,key]), update(target,x),
// reduce_sum(x), reduce_max(x), reduce_min(x).
// Identifiers resolve to the node's input slots by name.

class ExprParser {
 public:
  ExprParser(const std::string& src, const std::vector<std::string>& input_names,
             uint64_t default_key)
      : s_(src), names_(input_names), key_(default_key) {}

  ExprDag parse() {
    ExprDag d;
    d.root = expr(d);
    skip();
    if (i_ < s_.size())
      throw Error(ErrCode::ParseError, "trailing characters in expression '" + s_ + "'");
    return d;
  }

 private:
  void skip() { while (i_ < s_.size() && std::isspace((unsigned char)s_[i_])) ++i_; }
  bool eat(char c) {
    skip();
    if (i_ < s_.size() && s_[i_] == c) { ++i_; return true; }
    return false;
  }
  void expect(char c) {
    if (!eat(c))
      throw Error(ErrCode::ParseError, std::string("expected '") + c + "' in '" + s_ + "'");
  }
  std::string ident() {
    skip();
    std::string out;
    while (i_ < s_.size() && (std::isalnum((unsigned char)s_[i_]) || s_[i_] == '_'))
      out += s_[i_++];
    return out;
  }
  double number() {
    skip();
    size_t end = 0;
    double v = std::stod(s_.substr(i_), &end);
    i_ += end;
    return v;
  }
  // dropout keys are full-width uint64 hashes; going through double would
  // round anything above 2^53
  uint64_t unsigned_number() {
    skip();
    size_t end = 0;
    uint64_t v = std::stoull(s_.substr(i_), &end);
    i_ += end;
    return v;
  }
  int slot(const std::string& name) {
    for (size_t k = 0; k < names_.size(); ++k)
      if (names_[k] == name) return int(k);
    throw Error(ErrCode::ParseError, "expression operand '" + name + "' is not a node input");
  }

  int expr(ExprDag& d) {
    int a = term(d);
    while (true) {
      skip();
      if (eat('+')) a = d.binary(ExprNode::Op::Add, a, term(d));
      else if (eat('-')) a = d.binary(ExprNode::Op::Sub, a, term(d));
      else return a;
    }
  }
  int term(ExprDag& d) {
    int a = factor(d);
    while (true) {
      skip();
      if (eat('*')) a = d.binary(ExprNode::Op::Mul, a, factor(d));
      else if (eat('/')) a = d.binary(ExprNode::Op::Div, a, factor(d));
      else return a;
    }
  }
  int factor(ExprDag& d) {
    skip();
    if (eat('(')) {
      int a = expr(d);
      expect(')');
      return a;
    }
    if (eat('-')) return d.binary(ExprNode::Op::Sub, d.constant(0.0), factor(d));
    if (i_ < s_.size() && (std::isdigit((unsigned char)s_[i_]) || s_[i_] == '.'))
      return d.constant(number());
    std::string name = ident();
    if (name.empty())
      throw Error(ErrCode::ParseError, "bad expression '" + s_ + "' at offset " + std::to_string(i_));
    skip();
    if (i_ < s_.size() && s_[i_] == '(') {
      ++i_;
      if (name == "sqrt") {
        int a = expr(d);
        expect(')');
        return d.unary(ExprNode::Op::Sqrt, a);
      }
      if (name == "pow") {
        int a = expr(d);
        expect(',');
        int b = expr(d);
        expect(')');
        return d.binary(ExprNode::Op::Pow, a, b);
      }
      if (name == "dropout") {
        int a = expr(d);
        expect(',');
        double rate = number();
        uint64_t key = key_ + dropout_ordinal_++;
        if (eat(',')) key = unsigned_number();
        expect(')');
        return d.dropout(a, rate, key);
      }
      if (name == "update") {
        std::string target = ident();
        expect(',');
        int a = expr(d);
        expect(')');
        return d.update(a, target);
      }
      if (name == "reduce_sum" || name == "reduce_max" || name == "reduce_min") {
        int a = expr(d);
        expect(')');
        Reducer r = name == "reduce_sum" ? Reducer::Sum
                    : name == "reduce_max" ? Reducer::Max : Reducer::Min;
        return d.reduce(a, r);
      }
      throw Error(ErrCode::ParseError, "unknown function '" + name + "'");
    }
    return d.in(slot(name));
  }

  std::string s_;
  size_t i_ = 0;
  std::vector<std::string> names_;
  uint64_t key_;
  uint64_t dropout_ordinal_ = 0;
};

inline ExprDag parse_expr(const std::string& src, const std::vector<std::string>& input_names,
                          const std::string& node_id) {
  return ExprParser(src, input_names, fnv1a(node_id)).parse();
}

// Serialize an ExprDag back to the expression-string form. Dropout keys are
// written explicitly so a round trip through JSON preserves masks.
inline std::string expr_to_string(const ExprDag& d, const std::vector<std::string>& input_names) {
  std::function<std::string(int, int)> rec = [&](int idx, int parent_prec) -> std::string {
    const ExprNode& n = d.nodes[idx];
    using Op = ExprNode::Op;
    auto wrap = [&](const std::string& s, int prec) {
      return prec < parent_prec ? "(" + s + ")" : s;
    };
    switch (n.op) {
      case Op::Const: {
        std::ostringstream os;
        os << n.value;
        return os.str();
      }
      case Op::Input: return input_names.at(n.input);
      case Op::Add: return wrap(rec(n.a, 1) + " + " + rec(n.b, 2), 1);
      case Op::Sub: return wrap(rec(n.a, 1) + " - " + rec(n.b, 2), 1);
      case Op::Mul: return wrap(rec(n.a, 2) + " * " + rec(n.b, 3), 2);
      case Op::Div: return wrap(rec(n.a, 2) + " / " + rec(n.b, 3), 2);
      case Op::Sqrt: return "sqrt(" + rec(n.a, 0) + ")";
      case Op::Pow: return "pow(" + rec(n.a, 0) + ", " + rec(n.b, 0) + ")";
      case Op::Dropout: {
        std::ostringstream os;
        os << "dropout(" << rec(n.a, 0) << ", " << n.rate << ", " << n.key << ")";
        return os.str();
      }
      case Op::ReduceTensor:
        return std::string("reduce_") + reducer_name(n.red) + "(" + rec(n.a, 0) + ")";
      case Op::Update: return "update(" + n.target + ", " + rec(n.a, 0) + ")";
    }
    return "?";
  };
  return rec(d.root, 0);
}

// ---------------------------------------------------------------------------
// Program schema:
// {name, groups:[{id,size}], tensors:[{name,elem,shape,layout:{kind,dim?},group}],
//  nodes:[{id,kind,attrs,inputs}], outputs:[ids]}

inline OpKind op_kind_from_str(const std::string& s) {
  static const std::map<std::string, OpKind> m = {
      {"matmul", OpKind::MatMul},        {"pointwise", OpKind::Pointwise},
      {"allreduce", OpKind::AllReduce},  {"reduce_scatter", OpKind::ReduceScatter},
      {"allgather", OpKind::AllGather},  {"reduce", OpKind::Reduce},
      {"broadcast", OpKind::Broadcast},  {"send", OpKind::Send},
      {"recv", OpKind::Recv},            {"fused_allreduce", OpKind::FusedAllReduce},
      {"fused_send", OpKind::FusedSend}, {"overlap_group", OpKind::OverlapGroup},
  };
  auto it = m.find(s);
  if (it == m.end()) throw Error(ErrCode::ParseError, "unknown op kind '" + s + "'");
  return it->second;
}

inline Program program_from_json(const Json& j, const std::map<std::string, int64_t>& dims) {
  Program p;
  p.name = j.value("name", "program");
  for (auto& g : j.at("groups")) {
    ProcessGroup pg;
    pg.group_id = g.at("id").get<int>();
    pg.world_size = int(json_dim(g.at("size"), dims));
    pg.first_rank = p.world_size();
    p.groups.push_back(pg);
  }
  for (auto& t : j.at("tensors")) {
    TensorDecl d;
    d.name = t.at("name").get<std::string>();
    d.elem = elem_from_str(t.value("elem", "f32"));
    for (auto& e : t.at("shape")) d.shape.push_back(json_dim(e, dims));
    d.layout = layout_from_json(t.at("layout"));
    d.group = t.value("group", 0);
    p.decls.push_back(d);
  }
  for (auto& nj : j.at("nodes")) {
    OpNode n;
    n.id = nj.at("id").get<std::string>();
    n.kind = op_kind_from_str(nj.at("kind").get<std::string>());
    Json attrs = nj.value("attrs", Json::object());
    n.reducer = reducer_from_str(attrs.value("reducer", "sum"));
    n.root = attrs.value("root", 0);
    n.group_offset = attrs.value("offset", 1);
    n.axis = attrs.value("axis", -1);
    n.stage_count = attrs.value("stages", 0);
    n.gather_decl = attrs.value("gather", "");
    std::vector<std::string> input_names;
    for (auto& in : nj.value("inputs", Json::array()))
      input_names.push_back(in.get<std::string>());
    if (attrs.contains("members"))
      for (auto& m : attrs.at("members")) n.members.push_back(m.get<std::string>());
    for (auto& name : input_names) n.inputs.push_back(ValueRef{false, name});
    if (attrs.contains("expr"))
      n.expr = parse_expr(attrs.at("expr").get<std::string>(), input_names, n.id);
    else if (n.kind == OpKind::Pointwise || n.kind == OpKind::FusedAllReduce ||
             n.kind == OpKind::FusedSend)
      n.expr = ExprDag::identity();
    p.nodes.push_back(n);
  }
  // resolve which input names are nodes vs tensors
  for (auto& n : p.nodes)
    for (auto& in : n.inputs)
      in.is_node = p.find_node(in.id) != nullptr;
  for (auto& o : j.at("outputs")) p.outputs.push_back(o.get<std::string>());
  reinfer(p);
  return p;
}

inline Json program_to_json(const Program& p) {
  Json j;
  j["name"] = p.name;
  j["groups"] = Json::array();
  for (auto& g : p.groups) j["groups"].push_back({{"id", g.group_id}, {"size", g.world_size}});
  j["tensors"] = Json::array();
  for (auto& d : p.decls) {
    Json t;
    t["name"] = d.name;
    t["elem"] = elem_name(d.elem);
    t["shape"] = d.shape;
    t["layout"] = layout_to_json(d.layout);
    t["group"] = d.group;
    j["tensors"].push_back(t);
  }
  j["nodes"] = Json::array();
  for (auto& n : p.nodes) {
    Json nj;
    nj["id"] = n.id;
    nj["kind"] = op_kind_name(n.kind);
    Json attrs = Json::object();
    if (is_comm(n.kind) && n.reducer != Reducer::Sum) attrs["reducer"] = reducer_name(n.reducer);
    if (n.kind == OpKind::Reduce || n.kind == OpKind::Broadcast) attrs["root"] = n.root;
    if (n.kind == OpKind::Send || n.kind == OpKind::Recv || n.kind == OpKind::FusedSend)
      attrs["offset"] = n.group_offset;
    if (n.kind == OpKind::ReduceScatter && n.axis >= 0) attrs["axis"] = n.axis;
    if (n.stage_count > 0) attrs["stages"] = n.stage_count;
    if (!n.gather_decl.empty()) attrs["gather"] = n.gather_decl;
    if (!n.members.empty()) attrs["members"] = n.members;
    if (!n.expr.empty()) {
      std::vector<std::string> names;
      for (auto& in : n.inputs) names.push_back(in.id);
      attrs["expr"] = expr_to_string(n.expr, names);
    }
    nj["attrs"] = attrs;
    Json inputs = Json::array();
    for (auto& in : n.inputs) inputs.push_back(in.id);
    nj["inputs"] = inputs;
    j["nodes"].push_back(nj);
  }
  j["outputs"] = p.outputs;
  return j;
}

// ---------------------------------------------------------------------------
// Schedule schema: {directives:[{kind, args:{...}}]}

enum class DirectiveKind {
  SplitArRsAg,
  ReorderAllGather,
  ReorderBroadcast,
  FuseComputation,
  FuseAllReduce,
  FuseSend,
  Overlap,
  AsSlice,
  Dead,
};

inline const char* directive_kind_name(DirectiveKind k) {
  switch (k) {
    case DirectiveKind::SplitArRsAg: return "split_ar_rs_ag";
    case DirectiveKind::ReorderAllGather: return "reorder_allgather";
    case DirectiveKind::ReorderBroadcast: return "reorder_broadcast";
    case DirectiveKind::FuseComputation: return "fuse_computation";
    case DirectiveKind::FuseAllReduce: return "fuse_allreduce";
    case DirectiveKind::FuseSend: return "fuse_send";
    case DirectiveKind::Overlap: return "overlap";
    case DirectiveKind::AsSlice: return "as_slice";
    default: return "dead";
  }
}

inline DirectiveKind directive_kind_from_str(const std::string& s) {
  static const std::map<std::string, DirectiveKind> m = {
      {"split_ar_rs_ag", DirectiveKind::SplitArRsAg},
      {"reorder_allgather", DirectiveKind::ReorderAllGather},
      {"reorder_broadcast", DirectiveKind::ReorderBroadcast},
      {"fuse_computation", DirectiveKind::FuseComputation},
      {"fuse_allreduce", DirectiveKind::FuseAllReduce},
      {"fuse_send", DirectiveKind::FuseSend},
      {"overlap", DirectiveKind::Overlap},
      {"as_slice", DirectiveKind::AsSlice},
      {"dead", DirectiveKind::Dead},
  };
  auto it = m.find(s);
  if (it == m.end()) throw Error(ErrCode::ParseError, "unknown directive kind '" + s + "'");
  return it->second;
}

struct Directive {
  DirectiveKind kind = DirectiveKind::SplitArRsAg;
  std::string target;               // split: allreduce id; as_slice: tensor; dead: node id
  std::string ag, rs, bc;           // reorder / fuse_allreduce anchors
  std::string comp, send;           // fuse_send
  std::vector<std::string> ids;     // comps / fuse list / overlap members

  // Canonical one-line form, used for tie-breaking and reporting.
  std::string str() const {
    std::string s = directive_kind_name(kind);
    s += "(";
    bool first = true;
    auto add = [&](const std::string& v) {
      if (v.empty()) return;
      if (!first) s += ",";
      s += v;
      first = false;
    };
    add(target);
    add(rs);
    add(ag);
    add(bc);
    add(comp);
    add(send);
    for (auto& id : ids) add(id);
    return s + ")";
  }
  bool operator==(const Directive& o) const { return str() == o.str(); }
};

struct Schedule {
  std::vector<Directive> directives;

  std::string str() const {
    std::string s;
    for (auto& d : directives) {
      if (!s.empty()) s += "; ";
      s += d.str();
    }
    return s;
  }
};

inline Schedule schedule_from_json(const Json& j) {
  Schedule s;
  for (auto& dj : j.at("directives")) {
    Directive d;
    d.kind = directive_kind_from_str(dj.at("kind").get<std::string>());
    Json args = dj.value("args", Json::object());
    auto ids_of = [&](const char* key) {
      std::vector<std::string> out;
      if (args.contains(key))
        for (auto& v : args.at(key)) out.push_back(v.get<std::string>());
      return out;
    };
    switch (d.kind) {
      case DirectiveKind::SplitArRsAg: d.target = args.at("target"); break;
      case DirectiveKind::ReorderAllGather:
        d.ag = args.at("ag");
        d.ids = ids_of("comps");
        break;
      case DirectiveKind::ReorderBroadcast:
        d.bc = args.at("bc");
        d.ids = ids_of("comps");
        break;
      case DirectiveKind::FuseComputation: d.ids = ids_of("ids"); break;
      case DirectiveKind::FuseAllReduce:
        d.rs = args.at("rs");
        d.ids = ids_of("comps");
        d.ag = args.at("ag");
        break;
      case DirectiveKind::FuseSend:
        d.comp = args.at("comp");
        d.send = args.at("send");
        break;
      case DirectiveKind::Overlap: d.ids = ids_of("ids"); break;
      case DirectiveKind::AsSlice: d.target = args.at("tensor"); break;
      case DirectiveKind::Dead: d.target = args.at("id"); break;
    }
    s.directives.push_back(d);
  }
  return s;
}

inline Json schedule_to_json(const Schedule& s) {
  Json j;
  j["directives"] = Json::array();
  for (auto& d : s.directives) {
    Json dj;
    dj["kind"] = directive_kind_name(d.kind);
    Json args = Json::object();
    switch (d.kind) {
      case DirectiveKind::SplitArRsAg: args["target"] = d.target; break;
      case DirectiveKind::ReorderAllGather: args["ag"] = d.ag; args["comps"] = d.ids; break;
      case DirectiveKind::ReorderBroadcast: args["bc"] = d.bc; args["comps"] = d.ids; break;
      case DirectiveKind::FuseComputation: args["ids"] = d.ids; break;
      case DirectiveKind::FuseAllReduce:
        args["rs"] = d.rs;
        args["comps"] = d.ids;
        args["ag"] = d.ag;
        break;
      case DirectiveKind::FuseSend: args["comp"] = d.comp; args["send"] = d.send; break;
      case DirectiveKind::Overlap: args["ids"] = d.ids; break;
      case DirectiveKind::AsSlice: args["tensor"] = d.target; break;
      case DirectiveKind::Dead: args["id"] = d.target; break;
    }
    dj["args"] = args;
    j["directives"].push_back(dj);
  }
  return j;
}

// ---------------------------------------------------------------------------
// File helpers.

inline Json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrCode::ParseError, "cannot open " + path);
  try {
    return Json::parse(f);
  } catch (const std::exception& e) {
    throw Error(ErrCode::ParseError, path + ": " + e.what());
  }
}

inline void save_json_file(const std::string& path, const Json& j) {
  std::ofstream f(path);
  if (!f) throw Error(ErrCode::ParseError, "cannot write " + path);
  f << j.dump(2) << "\n";
}

// Tensor data files: little-endian float32, row-major, with a JSON sidecar.
inline void write_tensor_file(const std::string& base, const std::string& name,
                              const Shape& shape, Elem elem, const std::vector<float>& data) {
  std::ofstream bin(base + ".bin", std::ios::binary);
  if (!bin) throw Error(ErrCode::ParseError, "cannot write " + base + ".bin");
  bin.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size() * sizeof(float)));
  Json side;
  side["name"] = name;
  side["shape"] = shape;
  side["elem"] = elem_name(elem);
  save_json_file(base + ".json", side);
}

inline std::vector<float> read_tensor_file(const std::string& base, std::string* name = nullptr,
                                           Shape* shape = nullptr, Elem* elem = nullptr) {
  Json side = load_json_file(base + ".json");
  Shape s;
  for (auto& e : side.at("shape")) s.push_back(e.get<int64_t>());
  if (name) *name = side.at("name").get<std::string>();
  if (shape) *shape = s;
  if (elem) *elem = elem_from_str(side.at("elem").get<std::string>());
  std::ifstream bin(base + ".bin", std::ios::binary);
  if (!bin) throw Error(ErrCode::ParseError, "cannot open " + base + ".bin");
  std::vector<float> data(size_t(num_elems(s)));
  bin.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(float)));
  if (!bin) throw Error(ErrCode::ParseError, base + ".bin truncated");
  return data;
}

}  // namespace ccopt
