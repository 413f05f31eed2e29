#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"

using namespace archpred;
using archpred::testing::node;
using archpred::testing::random_dag;

namespace {

using Cells = std::set<std::pair<std::size_t, std::size_t>>;

Cells ones(const Tensor& m) {
  Cells out;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0.0) out.insert({r, c});
  return out;
}

// Reachability by explicit edge lists, independent of any matrix product.
struct BruteForceMasks {
  Cells son, father, grandfather;
};

BruteForceMasks brute_force(const ArchGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::set<std::size_t>> preds(n);
  BruteForceMasks out;
  for (const Edge& e : g.edges()) {
    out.son.insert({e.src, e.dst});
    out.father.insert({e.dst, e.src});
    preds[e.dst].insert(e.src);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p : preds[i])
      for (std::size_t gp : preds[p]) out.grandfather.insert({i, gp});
  return out;
}

}  // namespace

TEST(ParseTest, SingleNode) {
  ArchGraph g = parse_architecture(std::string(R"({"name":"one","nodes":[{"id":0,"op":"Conv","category":"ParamL","attrs":[3]}],"edges":[]})"));
  EXPECT_EQ(g.size(), 1u);
  EXPECT_TRUE(ones(derive_masks(g).adjacency).empty());
}

TEST(ParseTest, ChainTopologyAndAdjacency) {
  ArchGraph g = parse_architecture(std::string(R"({"nodes":[
      {"id":0,"op":"Conv","attrs":[3]},{"id":1,"op":"ReLU"},{"id":2,"op":"FC","attrs":[512,10]}],
      "edges":[[0,1],[1,2]]})"));
  EXPECT_EQ(g.topo_order(), (std::vector<std::int64_t>{0, 1, 2}));
  EXPECT_EQ(ones(derive_masks(g).adjacency), (Cells{{0, 1}, {1, 2}}));
}

TEST(ParseTest, CycleIsATopologyError) {
  EXPECT_THROW(parse_architecture(std::string(R"({"nodes":[
      {"id":0,"op":"Conv","attrs":[3]},{"id":1,"op":"ReLU"},{"id":2,"op":"FC","attrs":[512,10]}],
      "edges":[[0,1],[1,2],[2,0]]})")),
               TopologyError);
}

TEST(ParseTest, UnknownOpIsAVocabularyError) {
  EXPECT_THROW(parse_architecture(std::string(R"({"nodes":[{"id":0,"op":"Warp"}],"edges":[]})")), VocabularyError);
}

TEST(ParseTest, DanglingEdgeIsASchemaError) {
  EXPECT_THROW(parse_architecture(std::string(R"({"nodes":[{"id":0,"op":"ReLU"}],"edges":[[0,5]]})")), SchemaError);
}

TEST(ParseTest, AttributeArityIsChecked) {
  EXPECT_THROW(parse_architecture(std::string(R"({"nodes":[{"id":0,"op":"Conv","attrs":[3,3]}],"edges":[]})")),
               SchemaError);
  EXPECT_THROW(parse_architecture(std::string(R"({"nodes":[{"id":0,"op":"Conv","category":"ParamN","attrs":[3]}]})")),
               SchemaError);
}

TEST(ParseTest, DuplicateEdgesAndSelfLoopsAreRejected) {
  EXPECT_THROW(ArchGraph::build({node(0, "ReLU"), node(1, "ReLU")}, {{0, 1}, {0, 1}}), SchemaError);
  EXPECT_THROW(ArchGraph::build({node(0, "ReLU")}, {{0, 0}}), Error);
}

TEST(ParseTest, ReindexesToTopologicalPositionsWithAscendingIdTieBreak) {
  // Ids 10, 5, 7 with edges 10->5, 10->7: ready set {5, 7} after 10 picks 5 first.
  ArchGraph g = ArchGraph::build({node(10, "Conv", {3}), node(5, "ReLU"), node(7, "BN")}, {{10, 5}, {10, 7}});
  EXPECT_EQ(g.topo_order(), (std::vector<std::int64_t>{10, 5, 7}));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.node(i).id, std::int64_t(i));
  EXPECT_EQ(g.node(1).op_name, "ReLU");
  for (const Edge& e : g.edges()) EXPECT_LT(e.src, e.dst);
}

TEST(ParseTest, JsonRoundTrip) {
  ArchitectureDocument doc;
  doc.name = "x";
  doc.graph = archpred::testing::five_node_graph();
  doc.latency_ms = 1.25;
  doc.platform_id = "t4-fp32";
  ArchitectureDocument back = parse_architecture_document(to_json(doc));
  EXPECT_EQ(back.graph, doc.graph);
  EXPECT_EQ(back.latency_ms, doc.latency_ms);
  EXPECT_EQ(back.platform_id, doc.platform_id);
}

TEST(MaskTest, Chain) {
  AdjacencyMasks m = derive_masks(archpred::testing::chain3());
  EXPECT_EQ(ones(m.son), (Cells{{0, 1}, {1, 2}}));
  EXPECT_EQ(ones(m.father), (Cells{{1, 0}, {2, 1}}));
  EXPECT_EQ(ones(m.grandfather), (Cells{{2, 0}}));
}

TEST(MaskTest, DiamondCollapsesPathMultiplicity) {
  ArchGraph g = ArchGraph::build({node(0, "Conv", {3}), node(1, "ReLU"), node(2, "BN"), node(3, "Add")},
                                 {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  AdjacencyMasks m = derive_masks(g);
  EXPECT_EQ(ones(m.grandfather), (Cells{{3, 0}}));
  EXPECT_EQ(m.grandfather(3, 0), 1.0);
}

TEST(MaskTest, NoEdgesGivesZeroMasks) {
  ArchGraph g = ArchGraph::build({node(0, "ReLU"), node(1, "ReLU"), node(2, "ReLU"), node(3, "ReLU")}, {});
  AdjacencyMasks m = derive_masks(g);
  EXPECT_TRUE(ones(m.son).empty());
  EXPECT_TRUE(ones(m.father).empty());
  EXPECT_TRUE(ones(m.grandfather).empty());
}

TEST(MaskTest, MatchesBruteForceOnRandomDags) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ArchGraph g = random_dag(rng, 1 + rng.below(12));
    AdjacencyMasks m = derive_masks(g);
    BruteForceMasks bf = brute_force(g);
    ASSERT_EQ(ones(m.son), bf.son);
    ASSERT_EQ(ones(m.father), bf.father);
    ASSERT_EQ(ones(m.grandfather), bf.grandfather);
    ASSERT_EQ(m.father, m.son.transposed());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ASSERT_EQ(m.son(i, i), 0.0);
      ASSERT_EQ(m.father(i, i), 0.0);
      ASSERT_EQ(m.grandfather(i, i), 0.0);
    }
  }
}

TEST(MaskTest, RelabelingPermutesMasks) {
  // Relabel a random DAG by a permutation of positions; masks computed on
  // raw index space must transform as P M P^T.
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    ArchGraph g = random_dag(rng, 2 + rng.below(9));
    const std::size_t n = g.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<Edge> permuted;
    for (const Edge& e : g.edges()) permuted.push_back({perm[e.src], perm[e.dst]});
    // Mask derivation on an explicit adjacency, shared with derive_masks' definition.
    Tensor a = Tensor::zeros(n, n);
    for (const Edge& e : permuted) a(e.src, e.dst) = 1.0;
    AdjacencyMasks m = derive_masks(g);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_EQ(a(perm[i], perm[j]), m.son(i, j));
        double two_hop = 0.0;
        for (std::size_t k = 0; k < n; ++k) two_hop += a(perm[k], perm[i]) * a(perm[j], perm[k]);
        ASSERT_EQ(two_hop > 0.0 ? 1.0 : 0.0, m.grandfather(i, j));
      }
  }
}

TEST(ValidateDagTest, ChainIsOk) {
  std::vector<Edge> edges{{0, 1}, {1, 2}};
  DagValidation v = validate_dag(3, edges);
  EXPECT_TRUE(v.ok);
  EXPECT_EQ(v.order, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ValidateDagTest, TwoCycleNamesBothEdges) {
  std::vector<Edge> edges{{0, 1}, {1, 0}};
  DagValidation v = validate_dag(2, edges);
  EXPECT_FALSE(v.ok);
  std::set<Edge> cycle(v.cycle.begin(), v.cycle.end());
  EXPECT_EQ(cycle, (std::set<Edge>{{0, 1}, {1, 0}}));
  try {
    ArchGraph::build({node(0, "ReLU"), node(1, "ReLU")}, {{0, 1}, {1, 0}});
    FAIL() << "expected a topology error";
  } catch (const TopologyError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("0->1"), std::string::npos) << what;
    EXPECT_NE(what.find("1->0"), std::string::npos) << what;
  }
}

TEST(ValidateDagTest, CycleInsideLargerGraphIsReported) {
  std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}, {3, 1}, {0, 4}};
  DagValidation v = validate_dag(5, edges);
  EXPECT_FALSE(v.ok);
  std::set<Edge> cycle(v.cycle.begin(), v.cycle.end());
  EXPECT_EQ(cycle, (std::set<Edge>{{1, 2}, {2, 3}, {3, 1}}));
}

TEST(ValidateDagTest, SyntheticGraphsAreAcyclic) {
  Rng rng(13);
  const auto families = available_families();
  for (int seed = 0; seed < 1000; ++seed) {
    ArchGraph g = generate_architecture(families[std::size_t(seed) % families.size()], rng);
    ASSERT_TRUE(validate_dag(g).ok);
    ASSERT_GE(g.size(), 4u);
    ASSERT_LE(g.size(), 20u);
  }
}
