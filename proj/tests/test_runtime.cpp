#include <gtest/gtest.h>

#include <random>

#include "ccopt/runtime.hpp"
#include "ccopt/transform.hpp"
#include "helpers.hpp"

using namespace ccopt;
using namespace ccopt::testutil;

namespace {

CommConfig cfg_mode(ExecMode m) {
  CommConfig c;
  c.mode = m;
  return c;
}

}  // namespace

TEST(ChunkOrder, RotatesFromOwnIndex) {
  EXPECT_EQ(chunk_order(3, 16),
            (std::vector<int>{3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 0, 1, 2}));
  EXPECT_EQ(chunk_order(0, 4), (std::vector<int>{0, 1, 2, 3}));
}

TEST(RingAllReduce, ConstantInputs) {
  // rank r holds all elements = r+1; every element of the sum is 10 at W=4
  Program p = simple_allreduce(4, 8);
  ValueMap vals = gen_decl_values(p, 1);
  for (int r = 0; r < 4; ++r)
    std::fill(vals.at("x").per_rank[size_t(r)].begin(),
              vals.at("x").per_rank[size_t(r)].end(), float(r + 1));
  RunReport rep = execute(p, cfg_mode(ExecMode::RoundRobin), std::move(vals), 1);
  for (float v : rep.results.at("out0").data[0]) EXPECT_EQ(v, 10.0f);
}

TEST(RingAllReduce, ByteFormulaExact) {
  for (int W : {2, 4, 8}) {
    for (int64_t N : {int64_t(1) << 10, int64_t(1) << 12}) {
      Program p = simple_allreduce(W, N);
      RunReport rep = execute(p, cfg_mode(ExecMode::RoundRobin), gen_decl_values(p, 1), 1);
      int64_t expect = 2 * (W - 1) * N / W * 4;  // 2(W-1)/W * N * bw
      for (int r = 0; r < W; ++r) EXPECT_EQ(rep.comm_bytes[size_t(r)], expect) << W << " " << N;
    }
  }
}

TEST(RingRsAg, ByteFormulaExact) {
  for (int W : {2, 4, 8}) {
    int64_t N = 1 << 12;
    Program p = split_allreduce(simple_allreduce(W, N), "ar");
    RunReport rep = execute(p, cfg_mode(ExecMode::RoundRobin), gen_decl_values(p, 1), 1);
    // RS and AG each move (W-1)/W * N * bw per rank
    int64_t expect = 2 * ((W - 1) * N / W * 4);
    for (int r = 0; r < W; ++r) EXPECT_EQ(rep.comm_bytes[size_t(r)], expect);
  }
}

TEST(RingRsAg, ComposedEqualsAllReduce) {
  std::mt19937_64 gen(99);
  for (int it = 0; it < 20; ++it) {
    int W = std::vector<int>{2, 4, 8}[gen() % 3];
    int64_t N = int64_t(1) << (10 + gen() % 5);
    Program ar = simple_allreduce(W, N);
    Program rsag = split_allreduce(ar, "ar");
    uint64_t seed = gen();
    RunReport a = execute(ar, cfg_mode(ExecMode::RoundRobin), gen_decl_values(ar, seed), seed);
    RunReport b = execute(rsag, cfg_mode(ExecMode::RoundRobin), gen_decl_values(rsag, seed), seed);
    EXPECT_LE(compare_results(a.results, b.results), 1e-5);
  }
}

TEST(RingAllReduce, UnevenElementCounts) {
  // N not divisible by W: flat chunks are contiguous and uneven
  Program p = simple_allreduce(4, 10);
  ValueMap vals = gen_decl_values(p, 1);
  std::vector<double> expect(10, 0.0);
  for (int r = 0; r < 4; ++r)
    for (int i = 0; i < 10; ++i) expect[size_t(i)] += vals.at("x").per_rank[size_t(r)][size_t(i)];
  RunReport rep = execute(p, cfg_mode(ExecMode::RoundRobin), std::move(vals), 1);
  for (int i = 0; i < 10; ++i)
    EXPECT_NEAR(rep.results.at("out0").data[0][size_t(i)], expect[size_t(i)], 1e-5);
}

TEST(RingAllGather, ConcatenatesInRankOrder) {
  Program p;
  p.groups.push_back({0, 4, 0});
  TensorDecl d{"x", Elem::F32, {8}, Layout::sliced(0), 0};
  p.decls.push_back(d);
  OpNode ag;
  ag.id = "ag";
  ag.kind = OpKind::AllGather;
  ag.inputs = {ValueRef{false, "x"}};
  p.nodes.push_back(ag);
  p.outputs = {"ag"};
  reinfer(p);
  ValueMap vals = gen_decl_values(p, 1);
  for (int r = 0; r < 4; ++r)
    for (int i = 0; i < 2; ++i) vals.at("x").per_rank[size_t(r)][size_t(i)] = float(r);
  RunReport rep = execute(p, cfg_mode(ExecMode::RoundRobin), std::move(vals), 1);
  EXPECT_EQ(rep.results.at("out0").data[0],
            (std::vector<float>{0, 0, 1, 1, 2, 2, 3, 3}));
}

TEST(ReduceBroadcast, Semantics) {
  Program p;
  p.groups.push_back({0, 4, 0});
  TensorDecl d{"x", Elem::F32, {4}, Layout::local(), 0};
  p.decls.push_back(d);
  OpNode red;
  red.id = "red";
  red.kind = OpKind::Reduce;
  red.root = 2;
  red.reducer = Reducer::Max;
  red.inputs = {ValueRef{false, "x"}};
  OpNode bc;
  bc.id = "bc";
  bc.kind = OpKind::Broadcast;
  bc.root = 2;
  bc.inputs = {ValueRef{true, "red"}};
  p.nodes = {red, bc};
  p.outputs = {"bc"};
  reinfer(p);
  ValueMap vals = gen_decl_values(p, 1);
  std::vector<float> expect(4, -1e30f);
  for (int r = 0; r < 4; ++r)
    for (int i = 0; i < 4; ++i)
      expect[size_t(i)] = std::max(expect[size_t(i)], vals.at("x").per_rank[size_t(r)][size_t(i)]);
  RunReport rep = execute(p, cfg_mode(ExecMode::RoundRobin), std::move(vals), 1);
  EXPECT_EQ(rep.results.at("out0").data[0], expect);
}

TEST(Execute, ModeIdenticalResults) {
  for (const char* name : {"model_parallel.json", "adam.json", "pipeline.json"}) {
    Program p = load_golden(name, 4, 256);
    RunReport a = execute(p, cfg_mode(ExecMode::RoundRobin), gen_decl_values(p, 6), 6);
    RunReport b = execute(p, cfg_mode(ExecMode::Threaded), gen_decl_values(p, 6), 6);
    EXPECT_EQ(a.digest, b.digest) << name;
    EXPECT_EQ(a.comm_bytes, b.comm_bytes) << name;
    EXPECT_EQ(a.simulated_time, b.simulated_time) << name;
  }
}

TEST(Execute, ReplicationViolation) {
  Program p = load_golden("adam.json", 4, 16);
  ValueMap vals = gen_decl_values(p, 1);
  vals.at("p").per_rank[2][0] += 1.0f;  // replicated tensors must agree
  try {
    execute(p, cfg_mode(ExecMode::RoundRobin), std::move(vals), 1);
    FAIL() << "expected ReplicationViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrCode::ReplicationViolation);
  }
}

TEST(Execute, MemoryCounterTracksSlicedDecls) {
  Program p = apply_schedule(load_golden("adam.json", 4, 4096), load_schedule("adam_fused.json"));
  RunReport rep = execute(p, cfg_mode(ExecMode::RoundRobin), gen_decl_values(p, 1), 1);
  EXPECT_EQ(rep.memory_elems.at("m"), 1024);  // N/W
  EXPECT_EQ(rep.memory_elems.at("v"), 1024);
  EXPECT_EQ(rep.memory_elems.at("p"), 4096);  // still replicated
  EXPECT_EQ(rep.kernel_steps, 1);
}

TEST(FusedAllReduce, EqualsUnfusedChainAndSavesTraffic) {
  Program p = split_allreduce(load_golden("model_parallel.json", 4), "sum");
  p = reorder_allgather(p, "sum_ag", {"dropout", "out"});
  Program q = fuse_allreduce(p, "sum_rs", {"dropout_sc", "out_sc"}, "out_ag");
  RunReport a = execute(p, cfg_mode(ExecMode::RoundRobin), gen_decl_values(p, 3), 3);
  RunReport b = execute(q, cfg_mode(ExecMode::RoundRobin), gen_decl_values(q, 3), 3);
  EXPECT_LE(compare_results(a.results, b.results), 1e-5);
  EXPECT_EQ(a.traffic_saved_bytes, 0);
  // two fused stages each save a store+reload of the whole tensor per rank
  int64_t n = num_elems(q.find_node("sum_rs_fusedar")->out_shape);
  EXPECT_EQ(b.traffic_saved_bytes, 2 * n * 4 * 2);
}

TEST(BucketTable, CapacityAndMetadata) {
  BucketTable t = build_bucket_table({{"a", 2048}});
  EXPECT_EQ(t.buckets.size(), 2u);
  EXPECT_EQ(t.metadata_bytes(), 24);
  BucketTable t2 = build_bucket_table({{"a", 1000}, {"b", 25}});
  EXPECT_EQ(t2.buckets.size(), 2u);  // per-tensor bucketing, no cross packing
  EXPECT_EQ(t2.buckets[0].extent, 1000);
  EXPECT_EQ(t2.buckets[1].extent, 25);
  for (auto& b : t2.buckets) EXPECT_LE(b.extent, kBucketCapacity);
  EXPECT_THROW(build_bucket_table({{"bad", 0}}), Error);
}

TEST(BucketTable, RoundRobinAcrossTensors) {
  BucketTable t = build_bucket_table({{"a", 3000}, {"b", 2000}});
  std::vector<std::string> order;
  for (auto& b : t.buckets) order.push_back(b.tensor);
  EXPECT_EQ(order, (std::vector<std::string>{"a", "b", "a", "b", "a"}));
}

TEST(Scattered, EqualsContiguousExactly) {
  std::mt19937_64 gen(123);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  const int world = 4;
  std::vector<std::pair<std::string, int64_t>> sizes{{"t0", 700}, {"t1", 1500}, {"t2", 64}};
  std::map<std::string, std::vector<std::vector<float>>> tensors;
  for (auto& [name, count] : sizes) {
    auto& per_rank = tensors[name];
    per_rank.assign(world, std::vector<float>(size_t(count)));
    for (auto& arr : per_rank)
      for (auto& v : arr) v = dist(gen);
  }
  BucketTable table = build_bucket_table(sizes);
  ScatteredResult got = scattered_collective(cfg_mode(ExecMode::RoundRobin), table,
                                             OpKind::AllReduce, Reducer::Sum, tensors, world);
  EXPECT_EQ(got.kernel_steps, 1);
  // reference: the same ring collective on each tensor separately, whole
  int64_t total = 0;
  for (auto& [name, count] : sizes) total += count;
  Program p = simple_allreduce(world, total);
  ValueMap vals = gen_decl_values(p, 1);
  for (int r = 0; r < world; ++r) {
    int64_t pos = 0;
    for (auto& b : table.buckets) {
      for (int64_t i = 0; i < b.extent; ++i)
        vals.at("x").per_rank[size_t(r)][size_t(pos + i)] =
            tensors.at(b.tensor)[size_t(r)][size_t(b.offset + i)];
      pos += b.extent;
    }
  }
  RunReport ref = execute(p, cfg_mode(ExecMode::RoundRobin), std::move(vals), 1);
  int64_t pos = 0;
  for (auto& b : table.buckets) {
    for (int r = 0; r < world; ++r)
      for (int64_t i = 0; i < b.extent; ++i)
        EXPECT_EQ(got.per_tensor.at(b.tensor)[size_t(r)][size_t(b.offset + i)],
                  ref.results.at("out0").data[0][size_t(pos + i)]);
    pos += b.extent;
  }
}

TEST(Pipeline, IntergroupBytesPerRank) {
  // replicated send moves the whole tensor per rank; the transformed schedule
  // sends only each rank's slice
  const int64_t N = 1024;
  Program base = load_golden("pipeline.json", 4, N);
  RunReport a = execute(base, cfg_mode(ExecMode::RoundRobin), gen_decl_values(base, 2), 2);
  for (int r = 0; r < 2; ++r) EXPECT_EQ(a.intergroup_bytes[size_t(r)], N * 4);
  for (int r = 2; r < 4; ++r) EXPECT_EQ(a.intergroup_bytes[size_t(r)], 0);
  Program t = apply_schedule(base, load_schedule("pipeline_overlap.json"));
  RunReport b = execute(t, cfg_mode(ExecMode::RoundRobin), gen_decl_values(t, 2), 2);
  for (int r = 0; r < 2; ++r) EXPECT_EQ(b.intergroup_bytes[size_t(r)], N / 2 * 4);
  EXPECT_LE(compare_results(a.results, b.results), 1e-5);
}

TEST(SimulatedClock, MoreWorkNeverCheaper) {
  CommConfig cfg;
  Program small = simple_allreduce(4, 1 << 10);
  Program big = simple_allreduce(4, 1 << 14);
  RunReport a = execute(small, cfg, gen_decl_values(small, 1), 1);
  RunReport b = execute(big, cfg, gen_decl_values(big, 1), 1);
  EXPECT_LE(a.simulated_time, b.simulated_time);
}
