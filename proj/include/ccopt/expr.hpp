#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ccopt/types.hpp"

namespace ccopt {

// Counter-based uniform in [0,1) keyed by (seed, key, index). Replicated and
// sliced executions of the same dropout see identical masks because the index
// is always the global flat element index.
inline double counter_uniform(uint64_t seed, uint64_t key, uint64_t index) {
  uint64_t x = seed ^ (key * 0x9e3779b97f4a7c15ull) ^ (index + 0x632be59bd9b4e019ull);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return double(x >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
}

inline bool dropout_keep(uint64_t seed, uint64_t key, uint64_t index, double rate) {
  return counter_uniform(seed, key, index) >= rate;
}

struct ExprNode {
  enum class Op {
    Const,
    Input,   // reads node input `input` at the current element
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Pow,
    Dropout,      // child a, field rate/key
    ReduceTensor, // child a reduced over the whole tensor, field red
    Update,       // child a; stores the value into decl `target` elementwise
  };
  Op op = Op::Const;
  double value = 0.0;
  int input = -1;
  int a = -1, b = -1;
  double rate = 0.0;
  uint64_t key = 0;
  Reducer red = Reducer::Sum;
  std::string target;
};

// Expression DAG over the inputs of the node that owns it. Index-based so
// shared subexpressions evaluate once per element.
struct ExprDag {
  std::vector<ExprNode> nodes;
  int root = -1;

  bool empty() const { return root < 0; }

  int add(ExprNode n) {
    nodes.push_back(std::move(n));
    return int(nodes.size()) - 1;
  }
  int constant(double v) {
    ExprNode n;
    n.op = ExprNode::Op::Const;
    n.value = v;
    return add(n);
  }
  int in(int i) {
    ExprNode n;
    n.op = ExprNode::Op::Input;
    n.input = i;
    return add(n);
  }
  int binary(ExprNode::Op op, int a, int b) {
    ExprNode n;
    n.op = op;
    n.a = a;
    n.b = b;
    return add(n);
  }
  int unary(ExprNode::Op op, int a) {
    ExprNode n;
    n.op = op;
    n.a = a;
    return add(n);
  }
  int dropout(int a, double rate, uint64_t key) {
    ExprNode n;
    n.op = ExprNode::Op::Dropout;
    n.a = a;
    n.rate = rate;
    n.key = key;
    return add(n);
  }
  int reduce(int a, Reducer r) {
    ExprNode n;
    n.op = ExprNode::Op::ReduceTensor;
    n.a = a;
    n.red = r;
    return add(n);
  }
  int update(int a, const std::string& target) {
    ExprNode n;
    n.op = ExprNode::Op::Update;
    n.a = a;
    n.target = target;
    return add(n);
  }

  static ExprDag identity() {
    ExprDag d;
    d.root = d.in(0);
    return d;
  }

  int max_input() const {
    int m = -1;
    for (auto& n : nodes)
      if (n.op == ExprNode::Op::Input && n.input > m) m = n.input;
    return m;
  }

  bool has_reduce() const {
    for (auto& n : nodes)
      if (n.op == ExprNode::Op::ReduceTensor) return true;
    return false;
  }

  std::vector<std::string> update_targets() const {
    std::vector<std::string> out;
    for (auto& n : nodes)
      if (n.op == ExprNode::Op::Update) out.push_back(n.target);
    return out;
  }

  // Count of primitive arithmetic stages; feeds the fused-kernel overhead model.
  int op_count() const {
    int c = 0;
    for (auto& n : nodes)
      if (n.op != ExprNode::Op::Const && n.op != ExprNode::Op::Input) ++c;
    return c;
  }

  void remap_inputs(const std::vector<int>& map) {
    for (auto& n : nodes)
      if (n.op == ExprNode::Op::Input) n.input = map.at(n.input);
  }

  // Append `other`, remapping its Input slots: slot i either forwards to an
  // already-present expr node (subst[i] >= 0) or becomes Input(input_map[i]).
  // Returns the index of other's root in this dag.
  int append(const ExprDag& other, const std::vector<int>& subst,
             const std::vector<int>& input_map) {
    int base = int(nodes.size());
    for (auto n : other.nodes) {
      if (n.a >= 0) n.a += base;
      if (n.b >= 0) n.b += base;
      if (n.op == ExprNode::Op::Input) {
        int slot = n.input;
        if (slot < int(subst.size()) && subst[slot] >= 0) {
          n = nodes[subst[slot]];  // alias the existing subexpression
        } else {
          n.input = input_map.at(slot);
        }
      }
      nodes.push_back(n);
    }
    return other.root + base;
  }
};

// Per-element evaluation context. `read(i)` yields the value of node input i
// at the current element; `write(target, v)` performs an Update store;
// `reduced(expr_index)` yields the precomputed value of a ReduceTensor node.
struct EvalCtx {
  uint64_t seed = 0;
  uint64_t element = 0;  // global flat index of the current element
  std::function<double(int)> read;
  std::function<void(const std::string&, double)> write;
  std::function<double(int)> reduced;  // by expr-node index
};

inline double eval_expr(const ExprDag& dag, int idx, const EvalCtx& ctx,
                        std::vector<double>& memo, std::vector<char>& done) {
  if (done[idx]) return memo[idx];
  const ExprNode& n = dag.nodes[idx];
  double v = 0;
  using Op = ExprNode::Op;
  switch (n.op) {
    case Op::Const: v = n.value; break;
    case Op::Input: v = ctx.read(n.input); break;
    case Op::Add: v = eval_expr(dag, n.a, ctx, memo, done) + eval_expr(dag, n.b, ctx, memo, done); break;
    case Op::Sub: v = eval_expr(dag, n.a, ctx, memo, done) - eval_expr(dag, n.b, ctx, memo, done); break;
    case Op::Mul: v = eval_expr(dag, n.a, ctx, memo, done) * eval_expr(dag, n.b, ctx, memo, done); break;
    case Op::Div: v = eval_expr(dag, n.a, ctx, memo, done) / eval_expr(dag, n.b, ctx, memo, done); break;
    case Op::Sqrt: v = std::sqrt(eval_expr(dag, n.a, ctx, memo, done)); break;
    case Op::Pow: v = std::pow(eval_expr(dag, n.a, ctx, memo, done), eval_expr(dag, n.b, ctx, memo, done)); break;
    case Op::Dropout: {
      double x = eval_expr(dag, n.a, ctx, memo, done);
      v = dropout_keep(ctx.seed, n.key, ctx.element, n.rate) ? x / (1.0 - n.rate) : 0.0;
      break;
    }
    case Op::ReduceTensor: v = ctx.reduced(idx); break;
    case Op::Update: {
      v = eval_expr(dag, n.a, ctx, memo, done);
      if (ctx.write) ctx.write(n.target, v);
      break;
    }
  }
  memo[idx] = v;
  done[idx] = 1;
  return v;
}

inline double eval_expr(const ExprDag& dag, const EvalCtx& ctx) {
  std::vector<double> memo(dag.nodes.size());
  std::vector<char> done(dag.nodes.size(), 0);
  return eval_expr(dag, dag.root, ctx, memo, done);
}

}  // namespace ccopt
