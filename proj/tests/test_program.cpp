#include <gtest/gtest.h>

#include "ccopt/json_io.hpp"
#include "ccopt/program.hpp"
#include "helpers.hpp"

using namespace ccopt;
using namespace ccopt::testutil;

TEST(InferLayout, MatMulSlicedContraction) {
  // [B,S,H] sliced on the contraction axis x [H,H] sliced on rows -> Local
  auto r = infer_layout(OpKind::MatMul, {Layout::sliced(2), Layout::sliced(0)},
                        {{2, 8, 64}, {64, 64}}, 4);
  EXPECT_EQ(r.layout, Layout::local());
  EXPECT_EQ(r.shape, (Shape{2, 8, 64}));
}

TEST(InferLayout, MatMulReplicatedWeight) {
  auto r = infer_layout(OpKind::MatMul, {Layout::local(), Layout::replicated()},
                        {{4, 8}, {8, 16}}, 2);
  EXPECT_EQ(r.layout, Layout::local());
  EXPECT_EQ(r.shape, (Shape{4, 16}));
  EXPECT_THROW(infer_layout(OpKind::MatMul, {Layout::sliced(0), Layout::sliced(1)},
                            {{4, 8}, {8, 16}}, 2),
               Error);
}

TEST(InferLayout, AllReduceLocalToReplicated) {
  auto r = infer_layout(OpKind::AllReduce, {Layout::local()}, {{2, 8, 64}}, 4);
  EXPECT_EQ(r.layout, Layout::replicated());
  EXPECT_TRUE(r.warnings.empty());
  // replicated input is redundant but allowed, flagged as a warning
  auto w = infer_layout(OpKind::AllReduce, {Layout::replicated()}, {{4}}, 4);
  EXPECT_EQ(w.warnings.size(), 1u);
  EXPECT_THROW(infer_layout(OpKind::AllReduce, {Layout::sliced(0)}, {{4}}, 4), Error);
}

TEST(InferLayout, ReduceScatterAndAllGather) {
  auto rs = infer_layout(OpKind::ReduceScatter, {Layout::local()}, {{2, 8}}, 2);
  EXPECT_EQ(rs.layout, Layout::sliced(1));  // last axis by default
  auto rs0 = infer_layout(OpKind::ReduceScatter, {Layout::local()}, {{2, 8}}, 2, 0);
  EXPECT_EQ(rs0.layout, Layout::sliced(0));
  auto ag = infer_layout(OpKind::AllGather, {Layout::sliced(1)}, {{2, 8}}, 2);
  EXPECT_EQ(ag.layout, Layout::replicated());
  EXPECT_THROW(infer_layout(OpKind::AllGather, {Layout::local()}, {{2, 8}}, 2), Error);
  EXPECT_THROW(infer_layout(OpKind::ReduceScatter, {Layout::replicated()}, {{2, 8}}, 2), Error);
}

TEST(InferLayout, PointwiseJoin) {
  auto r = infer_layout(OpKind::Pointwise, {Layout::replicated(), Layout::replicated()},
                        {{4}, {}}, 4);
  EXPECT_EQ(r.layout, Layout::replicated());
  EXPECT_EQ(r.shape, (Shape{4}));
  auto s = infer_layout(OpKind::Pointwise, {Layout::sliced(0), Layout::replicated()},
                        {{8}, {8}}, 4);
  EXPECT_EQ(s.layout, Layout::sliced(0));
  // incompatible slice axes fail as LayoutMismatch, not ShapeMismatch, even
  // though the shapes also disagree
  try {
    infer_layout(OpKind::Pointwise, {Layout::sliced(0), Layout::sliced(1)}, {{8}, {8, 2}}, 4);
    FAIL() << "expected LayoutMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrCode::LayoutMismatch);
  }
}

TEST(InferLayout, SliceAxisFollowsBroadcastRank) {
  // [8] sliced on axis 0 broadcast with [2,8]: output rank 2, slice moves to axis 1
  auto r = infer_layout(OpKind::Pointwise, {Layout::sliced(0), Layout::replicated()},
                        {{8}, {2, 8}}, 4);
  EXPECT_EQ(r.layout, Layout::sliced(1));
  EXPECT_EQ(r.shape, (Shape{2, 8}));
}

TEST(InferLayout, Pure) {
  for (int i = 0; i < 3; ++i) {
    auto r = infer_layout(OpKind::MatMul, {Layout::sliced(2), Layout::sliced(0)},
                          {{2, 8, 64}, {64, 64}}, 4);
    EXPECT_EQ(r.layout, Layout::local());
  }
}

TEST(Validate, GoldenModelParallelClean) {
  Program p = load_golden("model_parallel.json", 4);
  EXPECT_TRUE(validate_program(p).empty());
  // inferred node layouts match the declared comments of the golden
  EXPECT_EQ(p.find_node("layer")->out_layout, Layout::local());
  EXPECT_EQ(p.find_node("sum")->out_layout, Layout::replicated());
  EXPECT_EQ(p.find_node("dropout")->out_layout, Layout::replicated());
  EXPECT_EQ(p.find_node("out")->out_layout, Layout::replicated());
}

TEST(Validate, DivisibilityDiagnostic) {
  Program p;
  p.groups.push_back({0, 4, 0});
  TensorDecl d;
  d.name = "t";
  d.shape = {7};
  d.layout = Layout::sliced(0);
  p.decls.push_back(d);
  auto diags = validate_program(p);
  ASSERT_FALSE(diags.empty());
  EXPECT_NE(diags[0].find("divisible"), std::string::npos);
}

TEST(Validate, DanglingOutput) {
  Program p;
  p.groups.push_back({0, 2, 0});
  p.outputs = {"missing"};
  auto diags = validate_program(p);
  ASSERT_FALSE(diags.empty());
  EXPECT_NE(diags[0].find("missing"), std::string::npos);
}

TEST(Validate, CycleDetected) {
  Program p;
  p.groups.push_back({0, 1, 0});
  OpNode a = pointwise("a", {"b"}, "b + 1");
  a.inputs[0].is_node = true;
  OpNode b = pointwise("b", {"a"}, "a + 1");
  b.inputs[0].is_node = true;
  a.out_shape = b.out_shape = {};
  a.out_layout = b.out_layout = Layout::replicated();
  p.nodes = {a, b};
  p.outputs = {"a"};
  auto diags = validate_program(p);
  ASSERT_FALSE(diags.empty());
  EXPECT_NE(diags[0].find("cycle"), std::string::npos);
}

TEST(Topo, GoldenOrderFollowsListing) {
  Program p = load_golden("model_parallel.json", 4);
  EXPECT_EQ(topo_order(p),
            (std::vector<std::string>{"layer", "sum", "dropout", "out"}));
}

TEST(Topo, DiamondTieBreak) {
  Program p;
  p.groups.push_back({0, 1, 0});
  TensorDecl d;
  d.name = "x";
  d.shape = {4};
  d.layout = Layout::replicated();
  p.decls.push_back(d);
  OpNode a = pointwise("a", {"x"}, "x + 1");
  OpNode b = pointwise("b", {"a"}, "a * 2");
  b.inputs[0].is_node = true;
  OpNode c = pointwise("c", {"a"}, "a * 3");
  c.inputs[0].is_node = true;
  OpNode e = pointwise("e", {"b", "c"}, "b + c");
  e.inputs[0].is_node = e.inputs[1].is_node = true;
  p.nodes = {a, b, c, e};
  p.outputs = {"e"};
  reinfer(p);
  EXPECT_EQ(topo_order(p), (std::vector<std::string>{"a", "b", "c", "e"}));
}

TEST(Signature, InsensitiveToNodeIds) {
  Program p = load_golden("adam.json", 4);
  Program q = p;
  // rename a node consistently; the structural signature must not change
  q.find_node("m1")->id = "m1_renamed";
  for (auto& n : q.nodes)
    for (auto& in : n.inputs)
      if (in.is_node && in.id == "m1") in.id = "m1_renamed";
  EXPECT_EQ(structural_signature(p), structural_signature(q));
  // but changing an expression does
  Program r = p;
  r.find_node("m1")->expr = parse_expr("m_ * 2", {"m_"}, "m1");
  EXPECT_NE(structural_signature(p), structural_signature(r));
}
