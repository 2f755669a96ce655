#include <gtest/gtest.h>

#include "ccopt/oracle.hpp"
#include "ccopt/transform.hpp"
#include "helpers.hpp"

using namespace ccopt;
using namespace ccopt::testutil;

namespace {

ErrCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrCode::ParseError;
}

}  // namespace

TEST(Split, RewiresConsumersToAllGather) {
  Program p = load_golden("model_parallel.json", 4);
  Provenance prov;
  Program q = split_allreduce(p, "sum", &prov);
  EXPECT_EQ(q.find_node("sum"), nullptr);
  ASSERT_NE(q.find_node("sum_rs"), nullptr);
  ASSERT_NE(q.find_node("sum_ag"), nullptr);
  EXPECT_EQ(q.find_node("sum_rs")->kind, OpKind::ReduceScatter);
  EXPECT_EQ(q.find_node("sum_ag")->kind, OpKind::AllGather);
  EXPECT_EQ(q.find_node("dropout")->inputs[0].id, "sum_ag");
  EXPECT_EQ(prov.size(), 2u);
  EXPECT_TRUE(validate_program(q).empty());
}

TEST(Split, RoundTripWithFuseIsIsomorphic) {
  Program p = load_golden("model_parallel.json", 4);
  Program q = fuse_allreduce(split_allreduce(p, "sum"), "sum_rs", {}, "sum_ag");
  EXPECT_EQ(structural_signature(p), structural_signature(q));
}

TEST(Split, NotAllReduce) {
  Program p = load_golden("model_parallel.json", 4);
  EXPECT_EQ(code_of([&] { split_allreduce(p, "layer"); }), ErrCode::NotAllReduce);
  EXPECT_EQ(code_of([&] { split_allreduce(p, "nope"); }), ErrCode::NotAllReduce);
}

TEST(Reorder, MovesCompsBeforeAllGather) {
  Program p = split_allreduce(load_golden("model_parallel.json", 4), "sum");
  Program q = reorder_allgather(p, "sum_ag", {"dropout", "out"});
  ASSERT_NE(q.find_node("dropout_sc"), nullptr);
  ASSERT_NE(q.find_node("out_sc"), nullptr);
  ASSERT_NE(q.find_node("out_ag"), nullptr);
  EXPECT_TRUE(q.find_node("dropout_sc")->out_layout.is_sliced());
  EXPECT_TRUE(q.find_node("out_sc")->out_layout.is_sliced());
  EXPECT_EQ(q.outputs, std::vector<std::string>{"out_ag"});
  EXPECT_TRUE(validate_program(q).empty());
  // semantics preserved, including the dropout mask
  auto ref = oracle_results(p, gen_decl_values(p, 5), 5);
  auto got = oracle_results(q, gen_decl_values(q, 5), 5);
  EXPECT_LE(compare_results(ref, got), 1e-5);
}

TEST(Reorder, RejectsReductionOverGatheredAxis) {
  // a comp whose expression reduces over the whole tensor cannot move behind
  // the gather
  Program p = split_allreduce(load_golden("model_parallel.json", 4), "sum");
  OpNode* d = p.find_node("dropout");
  std::vector<std::string> names;
  for (auto& in : d->inputs) names.push_back(in.id);
  d->expr = parse_expr("sum_ag / reduce_sum(sum_ag)", names, d->id);
  reinfer(p);
  EXPECT_EQ(code_of([&] { reorder_allgather(p, "sum_ag", {"dropout", "out"}); }),
            ErrCode::NotSliceable);
}

TEST(Reorder, NotAConsumer) {
  Program p = split_allreduce(load_golden("model_parallel.json", 4), "sum");
  EXPECT_EQ(code_of([&] { reorder_allgather(p, "sum_ag", {"layer"}); }),
            ErrCode::NotAConsumer);
  EXPECT_EQ(code_of([&] { reorder_allgather(p, "sum_rs", {"dropout"}); }),
            ErrCode::NotAConsumer);
}

TEST(FuseComputation, ChainBecomesOneNode) {
  Program p = load_golden("adam.json", 4, 64);
  Program q = fuse_computation(p, {"m_", "v_", "m1", "v1", "p_"});
  ASSERT_NE(q.find_node("p__fused"), nullptr);
  EXPECT_EQ(q.find_node("m_"), nullptr);
  EXPECT_EQ(q.outputs, std::vector<std::string>{"p__fused"});
  EXPECT_EQ(q.find_node("p__fused")->stage_count, 5);
  auto ref = oracle_results(p, gen_decl_values(p, 2), 2);
  auto got = oracle_results(q, gen_decl_values(q, 2), 2);
  EXPECT_LE(compare_results(ref, got), 1e-5);
}

TEST(FuseComputation, SingleNodeIsIdentity) {
  Program p = load_golden("adam.json", 4, 64);
  Program q = fuse_computation(p, {"m1"});
  EXPECT_EQ(structural_signature(p), structural_signature(q));
}

TEST(FuseComputation, DependencyViolation) {
  // fusing {m_, m1} orphans nothing, but fusing {m_, p_} skips m1/v1 which
  // read the interior member
  Program p = load_golden("adam.json", 4, 64);
  EXPECT_EQ(code_of([&] { fuse_computation(p, {"m_", "p_"}); }),
            ErrCode::DependencyViolation);
}

TEST(FuseComputation, NotComputation) {
  // a collective in the fuse list is rejected even when the chain shape is fine
  Program p = simple_allreduce(4, 32);
  OpNode c = pointwise("c", {"ar"}, "ar * 2");
  c.inputs[0].is_node = true;
  p.nodes.push_back(c);
  p.outputs = {"c"};
  reinfer(p);
  EXPECT_EQ(code_of([&] { fuse_computation(p, {"ar", "c"}); }), ErrCode::NotComputation);
}

TEST(FuseAllReduce, EmptyCompsYieldsPlainAllReduce) {
  Program p = split_allreduce(simple_allreduce(4, 32), "ar");
  Program q = fuse_allreduce(p, "ar_rs", {}, "ar_ag");
  ASSERT_NE(q.find_node("ar_rs_fusedar"), nullptr);
  EXPECT_EQ(q.find_node("ar_rs_fusedar")->kind, OpKind::AllReduce);
}

TEST(FuseAllReduce, SlicedChainBecomesFusedCollective) {
  Program p = split_allreduce(load_golden("model_parallel.json", 4), "sum");
  p = reorder_allgather(p, "sum_ag", {"dropout", "out"});
  Program q = fuse_allreduce(p, "sum_rs", {"dropout_sc", "out_sc"}, "out_ag");
  const OpNode* f = q.find_node("sum_rs_fusedar");
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->kind, OpKind::FusedAllReduce);
  EXPECT_EQ(f->stage_count, 2);
  auto ref = oracle_results(p, gen_decl_values(p, 9), 9);
  auto got = oracle_results(q, gen_decl_values(q, 9), 9);
  EXPECT_LE(compare_results(ref, got), 1e-5);
}

TEST(FuseAllReduce, ChainBroken) {
  Program p = split_allreduce(load_golden("model_parallel.json", 4), "sum");
  EXPECT_EQ(code_of([&] { fuse_allreduce(p, "sum_rs", {}, "dropout"); }),
            ErrCode::ChainBroken);
  EXPECT_EQ(code_of([&] { fuse_allreduce(p, "layer", {}, "sum_ag"); }),
            ErrCode::ChainBroken);
}

TEST(FuseSend, CompDisappearsIntoSend) {
  Program p = load_golden("pipeline.json", 4);
  Program q = fuse_send(p, "send", "output");
  const OpNode* f = q.find_node("output_fused");
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->kind, OpKind::FusedSend);
  EXPECT_EQ(q.find_node("send"), nullptr);
  auto ref = oracle_results(p, gen_decl_values(p, 4), 4);
  auto got = oracle_results(q, gen_decl_values(q, 4), 4);
  EXPECT_LE(compare_results(ref, got), 1e-5);
}

TEST(FuseSend, NotConsumer) {
  Program p = load_golden("pipeline.json", 4);
  EXPECT_EQ(code_of([&] { fuse_send(p, "sum", "output"); }), ErrCode::NotComputation);
  Program p2 = load_golden("model_parallel.json", 4);
  EXPECT_EQ(code_of([&] { fuse_send(p2, "dropout", "out"); }), ErrCode::NotConsumer);
}

TEST(Overlap, GroupPreservesSemantics) {
  Program p = split_allreduce(load_golden("model_parallel.json", 4), "sum");
  p = reorder_allgather(p, "sum_ag", {"dropout", "out"});
  p = fuse_allreduce(p, "sum_rs", {"dropout_sc", "out_sc"}, "out_ag");
  Program q = overlap(p, {"layer", "sum_rs_fusedar"});
  const OpNode* g = q.find_node("sum_rs_fusedar_ol");
  ASSERT_NE(g, nullptr);
  EXPECT_EQ(g->kind, OpKind::OverlapGroup);
  EXPECT_EQ(g->members, (std::vector<std::string>{"layer", "sum_rs_fusedar"}));
  EXPECT_TRUE(validate_program(q).empty());
  auto ref = oracle_results(p, gen_decl_values(p, 8), 8);
  auto got = oracle_results(q, gen_decl_values(q, 8), 8);
  EXPECT_LE(compare_results(ref, got), 1e-5);
}

TEST(Overlap, RequiresProducerConsumerChain) {
  Program p = load_golden("model_parallel.json", 4);
  EXPECT_EQ(code_of([&] { overlap(p, {"layer", "dropout"}); }),
            ErrCode::NotProducerConsumerChain);
  EXPECT_EQ(code_of([&] { overlap(p, {"layer"}); }), ErrCode::NotProducerConsumerChain);
}

TEST(AsSliceAndDead, AdamOptimizerStateSharding) {
  Program p = load_golden("adam.json", 4, 64);
  Schedule s = load_schedule("adam_fused.json");
  Program q = apply_schedule(p, s);
  EXPECT_EQ(q.find_decl("m")->layout, Layout::sliced(0));
  EXPECT_EQ(q.find_decl("v")->layout, Layout::sliced(0));
  int fused = 0;
  for (auto& n : q.nodes) fused += n.kind == OpKind::FusedAllReduce ? 1 : 0;
  EXPECT_EQ(fused, 1);
  EXPECT_TRUE(validate_program(q).empty());
}

TEST(AsSlice, ConsumerNotSliced) {
  Program p = load_golden("adam.json", 4, 64);
  // m is read by the replicated computation m_ before any reorder
  EXPECT_EQ(code_of([&] { as_slice(p, "m"); }), ErrCode::ConsumerNotSliced);
}

TEST(Dead, StillLive) {
  Program p = load_golden("model_parallel.json", 4);
  EXPECT_EQ(code_of([&] { dead(p, "out"); }), ErrCode::StillLive);   // program output
  EXPECT_EQ(code_of([&] { dead(p, "layer"); }), ErrCode::StillLive); // feeds sum
}

TEST(ApplySchedule, ErrorNamesDirectiveIndex) {
  Program p = load_golden("model_parallel.json", 4);
  Schedule s;
  Directive d;
  d.kind = DirectiveKind::SplitArRsAg;
  d.target = "layer";
  s.directives.push_back(d);
  try {
    apply_schedule(p, s);
    FAIL() << "expected an Error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrCode::NotAllReduce);
    EXPECT_NE(std::string(e.what()).find("directive 0"), std::string::npos);
  }
}

TEST(ApplySchedule, EmptyScheduleIsIdentity) {
  Program p = load_golden("adam.json", 4, 64);
  Program q = apply_schedule(p, Schedule{});
  EXPECT_EQ(structural_signature(p), structural_signature(q));
}

TEST(ApplySchedule, Deterministic) {
  Program p = load_golden("model_parallel.json", 4);
  Schedule s = load_schedule("mp_overlap.json");
  Program a = apply_schedule(p, s);
  Program b = apply_schedule(p, s);
  EXPECT_EQ(structural_signature(a), structural_signature(b));
  EXPECT_EQ(program_to_json(a).dump(), program_to_json(b).dump());
}
