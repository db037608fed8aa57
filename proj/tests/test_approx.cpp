#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

#include "fixtures.hpp"
#include "trank/approx.hpp"
#include "trank/breakpoints.hpp"
#include "trank/core.hpp"
#include "trank/exact.hpp"

namespace {

using namespace trank;

// Oracle for everything here: the brute-force ranking over the snapped
// window. brute_force_topk is itself checked against quadrature in the core
// suite, so list contents and re-scored answers all reduce to it.
RankedAnswer snapped_oracle(const Dataset& ds, Time b1, Time b2, std::size_t k) {
  return brute_force_topk(ds, QuerySpec{k, {b1, b2}, Aggregate::sum});
}

// hand-made grid for worked examples; mass and threshold only matter for
// encoding round trips, not for list building
BreakpointSet manual_bps(std::vector<Time> b, double mass, double eps) {
  BreakpointSet s;
  s.breakpoints = std::move(b);
  s.epsilon = eps;
  s.mass = mass;
  s.threshold = eps * mass;
  s.method = BreakpointMethod::bp1;
  s.mass_mode = MassMode::summed;
  return s;
}

std::size_t ceil_log2(std::size_t n) {
  std::size_t b = 0;
  while ((std::size_t{1} << b) < n) ++b;
  return b;
}

// node budget of a dyadic cover; a single gap still needs one node
std::size_t cover_budget(std::size_t gaps) {
  return std::max<std::size_t>(1, 2 * ceil_log2(gaps));
}

TimeInterval clamped_snap(const BreakpointSet& b, Time t1, Time t2) {
  Time end = b.domain_end();
  return {b.snap(std::min(t1, end)), b.snap(std::min(t2, end))};
}

// ---------------------------------------------------------------------------
// Query1Index

TEST(QueryOneLists, WorkedListsMatchHandComputation) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = manual_bps({0.0, 5.0, 10.0}, 100.0, 0.25);
  Query1Index ix = Query1Index::build(ds, bps, 3, tfx::temp_path("q1_worked"));

  EXPECT_EQ(ix.list_count(), 3u);
  EXPECT_EQ(ix.list_len(), 3u);

  IntervalTopList first = ix.list_at(0, 1);  // [0, 5]
  ASSERT_EQ(first.entries.size(), 3u);
  EXPECT_EQ(first.entries[0].first, 3u);
  EXPECT_DOUBLE_EQ(first.entries[0].second, 15.0);
  EXPECT_EQ(first.entries[1].first, 2u);
  EXPECT_DOUBLE_EQ(first.entries[1].second, 12.5);
  EXPECT_EQ(first.entries[2].first, 1u);
  EXPECT_DOUBLE_EQ(first.entries[2].second, 10.0);

  IntervalTopList second = ix.list_at(1, 2);  // [5, 10]
  EXPECT_EQ(second.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(second.entries[0].second, 37.5);
  EXPECT_EQ(second.entries[1].first, 3u);
  EXPECT_DOUBLE_EQ(second.entries[1].second, 15.0);
  EXPECT_EQ(second.entries[2].first, 1u);
  EXPECT_DOUBLE_EQ(second.entries[2].second, 10.0);

  IntervalTopList whole = ix.list_at(0, 2);  // [0, 10]
  EXPECT_EQ(whole.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(whole.entries[0].second, 50.0);
  EXPECT_EQ(whole.entries[1].first, 3u);
  EXPECT_DOUBLE_EQ(whole.entries[1].second, 30.0);
  EXPECT_EQ(whole.entries[2].first, 1u);
  EXPECT_DOUBLE_EQ(whole.entries[2].second, 20.0);
}

TEST(QueryOneLists, EveryPairMatchesTheReferenceRanking) {
  tfx::RandomDatasetOpts partial;
  partial.partial_extents = true;
  tfx::RandomDatasetOpts mixed;
  mixed.mixed_sign = true;
  Dataset sets[] = {tfx::random_dataset(25, 10, 71, partial),
                    tfx::random_dataset(18, 8, 72, mixed)};
  for (const Dataset& ds : sets) {
    BreakpointSet bps = build_breakpoints2(ds, 0.13);
    std::size_t r = bps.breakpoints.size();
    Query1Index ix = Query1Index::build(ds, bps, 7, tfx::temp_path("q1_pairs"));
    EXPECT_EQ(ix.list_count(), r * (r - 1) / 2);
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t j2 = j + 1; j2 < r; ++j2) {
        RankedAnswer got;
        got.entries = ix.list_at(j, j2).entries;
        RankedAnswer want =
            snapped_oracle(ds, bps.breakpoints[j], bps.breakpoints[j2], 7);
        std::string why;
        ASSERT_TRUE(tfx::answers_match(got, want, 1e-9, 1e-9, &why))
            << "pair (" << j << ", " << j2 << "): " << why;
      }
  }
}

TEST(QueryOneLists, KmaxBeyondObjectCountKeepsAllObjects) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = build_breakpoints1(ds, 0.5);
  Query1Index ix = Query1Index::build(ds, bps, 50, tfx::temp_path("q1_wide"));
  EXPECT_EQ(ix.k_max(), 50u);
  EXPECT_EQ(ix.list_len(), 3u);
  EXPECT_EQ(ix.list_at(0, 1).entries.size(), 3u);
}

TEST(QueryOneQueries, WorkedQueriesSnapAndTruncate) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = manual_bps({0.0, 5.0, 10.0}, 100.0, 0.25);
  Query1Index ix = Query1Index::build(ds, bps, 3, tfx::temp_path("q1_q"));

  RankedAnswer a = ix.query(QuerySpec{2, {1.0, 6.0}, Aggregate::sum});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(a.entries[0].second, 37.5);
  EXPECT_EQ(a.entries[1].first, 3u);
  EXPECT_DOUBLE_EQ(a.entries[1].second, 15.0);

  RankedAnswer b = ix.query(QuerySpec{1, {0.0, 10.0}, Aggregate::sum});
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(b.entries[0].second, 50.0);
}

TEST(QueryOneQueries, DegenerateSnapRanksByIdWithZeroScores) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = manual_bps({0.0, 5.0, 10.0}, 100.0, 0.25);
  Query1Index ix = Query1Index::build(ds, bps, 3, tfx::temp_path("q1_dg"));

  RankedAnswer a = ix.query(QuerySpec{2, {1.0, 4.0}, Aggregate::sum});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a.entries[0].first, 1u);
  EXPECT_EQ(a.entries[1].first, 2u);
  EXPECT_DOUBLE_EQ(a.entries[0].second, 0.0);
  EXPECT_DOUBLE_EQ(a.entries[1].second, 0.0);

  // answer length still capped by the object count
  EXPECT_EQ(ix.query(QuerySpec{3, {0.2, 4.9}, Aggregate::sum}).size(), 3u);
}

TEST(QueryOneQueries, MatchesTheReferenceOnSnappedWindows) {
  tfx::RandomDatasetOpts opts;
  opts.partial_extents = true;
  Dataset ds = tfx::random_dataset(30, 12, 73, opts);
  BreakpointSet bps = build_breakpoints2(ds, 0.09);
  Query1Index ix = Query1Index::build(ds, bps, 10, tfx::temp_path("q1_ref"));

  tfx::Rng rng(74);
  for (int i = 0; i < 300; ++i) {
    Time t1 = rng.uniform(0.0, ds.t_end);
    Time t2 = rng.uniform(0.0, ds.t_end);
    if (t2 < t1) std::swap(t1, t2);
    std::size_t k = 1 + rng.index(10);
    RankedAnswer got = ix.query(QuerySpec{k, {t1, t2}, Aggregate::sum});
    RankedAnswer want = snapped_oracle(ds, bps.snap(t1), bps.snap(t2), k);
    std::string why;
    ASSERT_TRUE(tfx::answers_match(got, want, 1e-9, 1e-9, &why))
        << "window [" << t1 << ", " << t2 << "] k=" << k << ": " << why;
  }

  // breakpoint-aligned windows skip the snap entirely
  std::size_t r = bps.breakpoints.size();
  for (std::size_t j = 0; j + 1 < r; j += 2) {
    RankedAnswer got = ix.query(
        QuerySpec{5, {bps.breakpoints[j], bps.breakpoints[r - 1]}, Aggregate::sum});
    RankedAnswer want =
        snapped_oracle(ds, bps.breakpoints[j], bps.breakpoints[r - 1], 5);
    std::string why;
    ASSERT_TRUE(tfx::answers_match(got, want, 1e-9, 1e-9, &why)) << why;
  }
}

TEST(QueryOneQueries, AverageAggregateDividesBySnappedLength) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = manual_bps({0.0, 5.0, 10.0}, 100.0, 0.25);
  Query1Index ix = Query1Index::build(ds, bps, 3, tfx::temp_path("q1_avg"));

  RankedAnswer a = ix.query(QuerySpec{1, {1.0, 6.0}, Aggregate::avg});
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(a.entries[0].second, 7.5);  // 37.5 over a 5-long window
}

TEST(QueryOneQueries, RejectsOversizedKAndWindowsOutsideTheDomain) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = build_breakpoints1(ds, 0.25);
  Query1Index ix = Query1Index::build(ds, bps, 3, tfx::temp_path("q1_rej"));

  EXPECT_THROW(ix.query(QuerySpec{4, {0.0, 10.0}, Aggregate::sum}),
               std::invalid_argument);
  EXPECT_THROW(ix.query(QuerySpec{1, {-0.5, 3.0}, Aggregate::sum}),
               std::domain_error);
  EXPECT_THROW(ix.query(QuerySpec{1, {2.0, 10.5}, Aggregate::sum}),
               std::domain_error);
  EXPECT_EQ(ix.query(QuerySpec{0, {0.0, 10.0}, Aggregate::sum}).size(), 0u);
}

TEST(QueryOneQueries, RoundTripsThroughItsFile) {
  tfx::RandomDatasetOpts opts;
  opts.partial_extents = true;
  Dataset ds = tfx::random_dataset(12, 6, 75, opts);
  BreakpointSet bps = build_breakpoints1(ds, 0.2);
  std::string path = tfx::temp_path("q1_file");
  {
    Query1Index built = Query1Index::build(ds, bps, 5, path);
    (void)built;
  }
  Query1Index ix = Query1Index::open(path);
  EXPECT_EQ(ix.k_max(), 5u);
  EXPECT_EQ(ix.object_count(), 12u);
  ASSERT_EQ(ix.breakpoints().breakpoints.size(), bps.breakpoints.size());
  for (std::size_t j = 0; j < bps.breakpoints.size(); ++j)
    EXPECT_DOUBLE_EQ(ix.breakpoints().breakpoints[j], bps.breakpoints[j]);

  tfx::Rng rng(76);
  for (int i = 0; i < 60; ++i) {
    Time t1 = rng.uniform(0.0, ds.t_end);
    Time t2 = rng.uniform(t1, ds.t_end);
    std::size_t k = 1 + rng.index(5);
    RankedAnswer got = ix.query(QuerySpec{k, {t1, t2}, Aggregate::sum});
    RankedAnswer want = snapped_oracle(ds, bps.snap(t1), bps.snap(t2), k);
    std::string why;
    ASSERT_TRUE(tfx::answers_match(got, want, 1e-9, 1e-9, &why)) << why;
  }
}

TEST(QueryOneQueries, RejectsForeignFiles) {
  Dataset ds = tfx::make_d0();
  std::string ex_path = tfx::temp_path("q1_foreign_ex1");
  { Exact1Index built = Exact1Index::build(ds, ex_path); (void)built; }
  EXPECT_THROW(Query1Index::open(ex_path), std::runtime_error);

  BreakpointSet bps = build_breakpoints1(ds, 0.5);
  std::string q1_path = tfx::temp_path("q1_foreign_q1");
  { Query1Index built = Query1Index::build(ds, bps, 2, q1_path); (void)built; }
  EXPECT_THROW(Query2Index::open(q1_path), std::runtime_error);
}

TEST(QueryOneLists, RefusesAbsurdCapacitiesAndBadParameters) {
  Dataset tall;
  tall.t_end = 60000.0;
  for (ObjectId i = 1; i <= 3; ++i) {
    Polyline p;
    p.id = i;
    p.vertices = {{0.0, 1.0}, {60000.0, 1.0}};
    tall.objects.push_back(std::move(p));
  }
  std::vector<Time> grid(60001);
  for (std::size_t j = 0; j < grid.size(); ++j) grid[j] = static_cast<Time>(j);
  BreakpointSet huge = manual_bps(std::move(grid), 180000.0, 0.001);
  EXPECT_THROW(Query1Index::build(tall, huge, 200, tfx::temp_path("q1_cap")),
               std::runtime_error);

  Dataset ds = tfx::make_d0();
  BreakpointSet bps = build_breakpoints1(ds, 0.5);
  EXPECT_THROW(Query1Index::build(ds, bps, 0, tfx::temp_path("q1_k0")),
               std::invalid_argument);
  BreakpointSet off = manual_bps({0.0, 5.0, 9.0}, 100.0, 0.25);
  EXPECT_THROW(Query1Index::build(ds, off, 3, tfx::temp_path("q1_off")),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// dyadic decomposition

TEST(DyadicDecomposition, CoversTheWorkedEightGapExample) {
  auto cover = decompose_dyadic(8, 1, 7);
  ASSERT_EQ(cover.size(), 4u);
  EXPECT_EQ(cover[0], (std::pair<std::size_t, std::size_t>{1, 2}));
  EXPECT_EQ(cover[1], (std::pair<std::size_t, std::size_t>{2, 4}));
  EXPECT_EQ(cover[2], (std::pair<std::size_t, std::size_t>{4, 6}));
  EXPECT_EQ(cover[3], (std::pair<std::size_t, std::size_t>{6, 7}));
}

TEST(DyadicDecomposition, FullRangeIsTheRootAndSingleGapsAreLeaves) {
  auto root = decompose_dyadic(8, 0, 8);
  ASSERT_EQ(root.size(), 1u);
  EXPECT_EQ(root[0], (std::pair<std::size_t, std::size_t>{0, 8}));

  auto leaf = decompose_dyadic(8, 3, 4);
  ASSERT_EQ(leaf.size(), 1u);
  EXPECT_EQ(leaf[0], (std::pair<std::size_t, std::size_t>{3, 4}));

  EXPECT_TRUE(decompose_dyadic(8, 5, 5).empty());
  EXPECT_TRUE(decompose_dyadic(1, 0, 0).empty());
}

TEST(DyadicDecomposition, ExhaustiveSoundnessUpToSixtyFourGaps) {
  for (std::size_t g = 1; g <= 64; ++g) {
    std::size_t budget = cover_budget(g);
    for (std::size_t lo = 0; lo < g; ++lo)
      for (std::size_t hi = lo + 1; hi <= g; ++hi) {
        auto cover = decompose_dyadic(g, lo, hi);
        ASSERT_LE(cover.size(), budget) << "g=" << g << " [" << lo << "," << hi << ")";
        ASSERT_FALSE(cover.empty());
        ASSERT_EQ(cover.front().first, lo);
        ASSERT_EQ(cover.back().second, hi);
        for (std::size_t i = 0; i + 1 < cover.size(); ++i)
          ASSERT_EQ(cover[i].second, cover[i + 1].first)
              << "g=" << g << " [" << lo << "," << hi << ")";
      }
  }
}

TEST(DyadicDecomposition, RejectsBadRanges) {
  EXPECT_THROW(decompose_dyadic(8, 3, 9), std::invalid_argument);
  EXPECT_THROW(decompose_dyadic(8, 5, 4), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Query2Index

TEST(QueryTwoLists, WorkedTreeHasThreeNodesWithExactLists) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = manual_bps({0.0, 5.0, 10.0}, 100.0, 0.25);
  Query2Index ix = Query2Index::build(ds, bps, 3, tfx::temp_path("q2_worked"));

  ASSERT_EQ(ix.node_count(), 3u);
  EXPECT_EQ(ix.node_gaps(0), (std::pair<std::size_t, std::size_t>{0, 2}));
  EXPECT_EQ(ix.node_gaps(1), (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(ix.node_gaps(2), (std::pair<std::size_t, std::size_t>{1, 2}));

  IntervalTopList root = ix.node_list(0);  // [0, 10]
  EXPECT_EQ(root.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(root.entries[0].second, 50.0);
  EXPECT_EQ(root.entries[1].first, 3u);
  EXPECT_DOUBLE_EQ(root.entries[1].second, 30.0);

  IntervalTopList left = ix.node_list(1);  // [0, 5]
  EXPECT_EQ(left.entries[0].first, 3u);
  EXPECT_DOUBLE_EQ(left.entries[0].second, 15.0);

  IntervalTopList right = ix.node_list(2);  // [5, 10]
  EXPECT_EQ(right.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(right.entries[0].second, 37.5);
}

TEST(QueryTwoLists, EveryNodeListMatchesTheReferenceRanking) {
  tfx::RandomDatasetOpts opts;
  opts.partial_extents = true;
  Dataset ds = tfx::random_dataset(22, 9, 81, opts);
  BreakpointSet bps = build_breakpoints2(ds, 0.07);
  Query2Index ix = Query2Index::build(ds, bps, 6, tfx::temp_path("q2_nodes"));

  std::size_t g = bps.gap_count();
  EXPECT_EQ(ix.node_count(), 2 * g - 1);
  for (std::size_t n = 0; n < ix.node_count(); ++n) {
    IntervalTopList list = ix.node_list(n);
    RankedAnswer got;
    got.entries = list.entries;
    RankedAnswer want =
        snapped_oracle(ds, bps.breakpoints[list.lo], bps.breakpoints[list.hi], 6);
    std::string why;
    ASSERT_TRUE(tfx::answers_match(got, want, 1e-9, 1e-9, &why))
        << "node " << n << ": " << why;
  }
}

TEST(QueryTwoQueries, SingleNodeWindowsAreExact) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = manual_bps({0.0, 5.0, 10.0}, 100.0, 0.25);
  Query2Index ix = Query2Index::build(ds, bps, 3, tfx::temp_path("q2_single"));

  RankedAnswer a = ix.query(QuerySpec{2, {1.0, 6.0}, Aggregate::sum});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(a.entries[0].second, 37.5);
  EXPECT_EQ(a.entries[1].first, 3u);
  EXPECT_DOUBLE_EQ(a.entries[1].second, 15.0);

  RankedAnswer b = ix.query(QuerySpec{1, {0.0, 10.0}, Aggregate::sum});
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(b.entries[0].second, 50.0);

  RankedAnswer c = ix.query(QuerySpec{2, {1.0, 4.0}, Aggregate::sum});
  EXPECT_EQ(c.entries[0].first, 1u);
  EXPECT_DOUBLE_EQ(c.entries[0].second, 0.0);
}

TEST(QueryTwoQueries, ReturnedScoresObeyTheSandwich) {
  tfx::RandomDatasetOpts opts;
  opts.partial_extents = true;
  Dataset ds = tfx::random_dataset(30, 12, 82, opts);
  BreakpointSet bps = build_breakpoints2(ds, 0.08);
  Query2Index ix = Query2Index::build(ds, bps, 12, tfx::temp_path("q2_sand"));

  std::size_t g = bps.gap_count();
  std::size_t alpha = cover_budget(g);
  tfx::Rng rng(83);
  for (int i = 0; i < 400; ++i) {
    Time t1 = rng.uniform(0.0, ds.t_end);
    Time t2 = rng.uniform(t1, ds.t_end);
    std::size_t k = 1 + rng.index(12);
    QueryDiag diag;
    RankedAnswer ans = ix.query(QuerySpec{k, {t1, t2}, Aggregate::sum}, &diag);
    Time b1 = bps.snap(t1), b2 = bps.snap(t2);
    if (b1 == b2) continue;
    EXPECT_LE(diag.nodes, alpha);
    EXPECT_LE(diag.candidates, diag.nodes * std::min(k, ix.list_len()));
    EXPECT_EQ(ans.size(), std::min(k, ds.objects.size()));
    for (const auto& [id, s] : ans.entries) {
      double exact = polyline_integral(ds.objects[id - 1], {b1, b2});
      double tol = 1e-9 * std::max(1.0, std::fabs(exact));
      EXPECT_LE(s, exact + tol) << "object " << id;
      EXPECT_GE(s, exact / static_cast<double>(alpha) - tol) << "object " << id;
    }
  }
}

TEST(QueryTwoQueries, RoundTripsWithCompanionPath) {
  tfx::RandomDatasetOpts opts;
  opts.partial_extents = true;
  Dataset ds = tfx::random_dataset(14, 7, 84, opts);
  BreakpointSet bps = build_breakpoints2(ds, 0.15);
  std::string ex_path = tfx::temp_path("q2_rt_ex2");
  std::string q2_path = tfx::temp_path("q2_rt");
  { Exact2Index built = Exact2Index::build(ds, ex_path); (void)built; }
  {
    Query2Index built = Query2Index::build(ds, bps, 6, q2_path, ex_path);
    (void)built;
  }
  Query2Index ix = Query2Index::open(q2_path);
  EXPECT_EQ(ix.companion_path(), ex_path);
  EXPECT_EQ(ix.k_max(), 6u);
  EXPECT_EQ(ix.node_count(), 2 * bps.gap_count() - 1);

  Exact2Index ex2 = Exact2Index::open(ix.companion_path());
  tfx::Rng rng(85);
  for (int i = 0; i < 60; ++i) {
    Time t1 = rng.uniform(0.0, ds.t_end);
    Time t2 = rng.uniform(t1, ds.t_end);
    std::size_t k = 1 + rng.index(6);
    RankedAnswer plus = ix.query_plus(ex2, QuerySpec{k, {t1, t2}, Aggregate::sum});
    for (const auto& [id, s] : plus.entries) {
      double exact =
          polyline_integral(ds.objects[id - 1], {bps.snap(t1), bps.snap(t2)});
      EXPECT_NEAR(s, exact, 1e-9 * std::max(1.0, std::fabs(exact)));
    }
  }
}

TEST(QueryTwoPlus, WorkedExampleIsExactEverywhere) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = manual_bps({0.0, 5.0, 10.0}, 100.0, 0.25);
  Query2Index ix = Query2Index::build(ds, bps, 3, tfx::temp_path("q2p_worked"));
  Exact2Index ex2 = Exact2Index::build(ds, tfx::temp_path("q2p_worked_ex2"));

  RankedAnswer a = ix.query_plus(ex2, QuerySpec{2, {1.0, 6.0}, Aggregate::sum});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(a.entries[0].second, 37.5);
  EXPECT_EQ(a.entries[1].first, 3u);
  EXPECT_DOUBLE_EQ(a.entries[1].second, 15.0);

  RankedAnswer b = ix.query_plus(ex2, QuerySpec{1, {0.0, 10.0}, Aggregate::sum});
  EXPECT_EQ(b.entries[0].first, 2u);
  EXPECT_DOUBLE_EQ(b.entries[0].second, 50.0);

  RankedAnswer c = ix.query_plus(ex2, QuerySpec{1, {1.0, 6.0}, Aggregate::avg});
  EXPECT_DOUBLE_EQ(c.entries[0].second, 7.5);
}

TEST(QueryTwoPlus, RescoredAnswersEqualTheSnappedReferenceScores) {
  tfx::RandomDatasetOpts partial;
  partial.partial_extents = true;
  tfx::RandomDatasetOpts mixed;
  mixed.mixed_sign = true;
  Dataset sets[] = {tfx::random_dataset(28, 10, 86, partial),
                    tfx::random_dataset(20, 9, 87, mixed)};
  int stem = 0;
  for (const Dataset& ds : sets) {
    BreakpointSet bps = build_breakpoints2(ds, 0.1);
    std::string tag = "q2p_ref" + std::to_string(++stem);
    Query2Index ix = Query2Index::build(ds, bps, 15, tfx::temp_path(tag));
    Exact2Index ex2 = Exact2Index::build(ds, tfx::temp_path(tag + "_ex2"));

    tfx::Rng rng(88);
    for (int i = 0; i < 300; ++i) {
      Time t1 = rng.uniform(0.0, ds.t_end);
      Time t2 = rng.uniform(t1, ds.t_end);
      std::size_t k = 1 + rng.index(15);
      QuerySpec q{k, {t1, t2}, Aggregate::sum};
      RankedAnswer ans = ix.query_plus(ex2, q);
      Time b1 = bps.snap(t1), b2 = bps.snap(t2);
      for (const auto& [id, s] : ans.entries) {
        double exact = polyline_integral(ds.objects[id - 1], {b1, b2});
        ASSERT_NEAR(s, exact, 1e-9 * std::max(1.0, std::fabs(exact)))
            << "object " << id;
      }

      // when the candidate pool holds the true top-k, the answer is exact
      if (b1 == b2) continue;
      std::size_t j1 = bps.snap_index(t1), j2 = bps.snap_index(t2);
      auto pool = ix.gather(j1, j2, std::min(k, ix.list_len()));
      RankedAnswer want = snapped_oracle(ds, b1, b2, k);
      bool contained = true;
      for (const auto& e : want.entries)
        if (!pool.count(e.first)) contained = false;
      if (contained) {
        std::string why;
        ASSERT_TRUE(tfx::answers_match(ans, want, 1e-9, 1e-9, &why)) << why;
      }
    }
  }
}

TEST(QueryTwoPlus, MismatchedCompanionIsRejected) {
  Dataset ds = tfx::make_d0();
  BreakpointSet bps = build_breakpoints1(ds, 0.25);
  Query2Index ix = Query2Index::build(ds, bps, 3, tfx::temp_path("q2p_mis"));
  Dataset other = tfx::random_dataset(5, 4, 89);
  Exact2Index ex2 = Exact2Index::build(other, tfx::temp_path("q2p_mis_ex2"));
  EXPECT_THROW(ix.query_plus(ex2, QuerySpec{1, {0.0, 10.0}, Aggregate::sum}),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// ApproxBundle appends

Dataset early_ender() {
  Dataset ds;
  ds.t_end = 100.0;
  Polyline o1;
  o1.id = 1;
  o1.vertices = {{0.0, 1.0}, {100.0, 1.0}};
  Polyline o2;
  o2.id = 2;
  o2.vertices = {{0.0, 2.0}, {40.0, 2.0}};
  Polyline o3;
  o3.id = 3;
  o3.vertices = {{0.0, 0.0}, {100.0, 4.0}};
  ds.objects = {o1, o2, o3};
  ds.validate();
  return ds;
}

TEST(BundleAppends, TailContributesToEveryEngine) {
  BundleConfig cfg;
  cfg.method = BreakpointMethod::bp2;
  cfg.epsilon = 0.2;
  cfg.k_max = 3;
  ApproxBundle b = ApproxBundle::create(early_ender(), cfg, tfx::temp_path("bun_tail"));

  b.append({40.0, 50.0, 2.0, 3.0, 2});
  b.append({50.0, 60.0, 3.0, 1.0, 2});
  ASSERT_EQ(b.rebuilds(), 0u);
  ASSERT_EQ(b.tail_size(), 2u);

  const Dataset& live = b.dataset();
  Time probes[][2] = {{0.0, 100.0}, {30.0, 55.0},  {45.0, 95.0}, {10.0, 42.0},
                      {41.0, 49.0}, {90.0, 100.0}, {95.0, 200.0}};
  for (auto& p : probes) {
    TimeInterval w = clamped_snap(b.breakpoints(), p[0], p[1]);
    RankedAnswer want = snapped_oracle(live, w.t1, w.t2, 3);
    std::string why;
    RankedAnswer a1 = b.query1(QuerySpec{3, {p[0], p[1]}, Aggregate::sum});
    ASSERT_TRUE(tfx::answers_match(a1, want, 1e-9, 1e-9, &why)) << "q1: " << why;
    RankedAnswer a2 = b.query2(QuerySpec{3, {p[0], p[1]}, Aggregate::sum});
    ASSERT_TRUE(tfx::answers_match(a2, want, 1e-9, 1e-9, &why)) << "q2: " << why;
    RankedAnswer a3 = b.query2_plus(QuerySpec{3, {p[0], p[1]}, Aggregate::sum});
    ASSERT_TRUE(tfx::answers_match(a3, want, 1e-9, 1e-9, &why)) << "q2+: " << why;
  }
}

TEST(BundleAppends, RebuildFiresExactlyOnceAtTheBuildMass) {
  Dataset ds;
  ds.t_end = 10.0;
  Polyline o1;
  o1.id = 1;
  o1.vertices = {{0.0, 1.0}, {10.0, 1.0}};
  Polyline o2;
  o2.id = 2;
  o2.vertices = {{0.0, 2.0}, {10.0, 2.0}};
  ds.objects = {o1, o2};
  ds.validate();

  BundleConfig cfg;
  cfg.method = BreakpointMethod::bp1;
  cfg.epsilon = 0.5;
  cfg.k_max = 2;
  ApproxBundle b = ApproxBundle::create(ds, cfg, tfx::temp_path("bun_mass"));
  ASSERT_DOUBLE_EQ(b.rebuild_at(), 30.0);

  b.append({10.0, 12.0, 1.0, 1.0, 1});   // 2
  b.append({10.0, 20.0, 2.0, 2.0, 2});   // 20
  b.append({12.0, 16.0, 1.0, 1.0, 1});   // 4
  EXPECT_EQ(b.rebuilds(), 0u);
  EXPECT_DOUBLE_EQ(b.pending_mass(), 26.0);

  b.append({20.0, 22.0, 2.0, 2.0, 2});   // 4 tips it over
  EXPECT_EQ(b.rebuilds(), 1u);
  EXPECT_EQ(b.tail_size(), 0u);
  EXPECT_DOUBLE_EQ(b.pending_mass(), 0.0);
  EXPECT_DOUBLE_EQ(b.rebuild_at(), 60.0);
  EXPECT_DOUBLE_EQ(b.breakpoints().threshold, 30.0);  // fresh eps * mass
  EXPECT_DOUBLE_EQ(b.breakpoints().domain_end(), 22.0);

  b.append({16.0, 17.0, 1.0, 1.0, 1});
  EXPECT_EQ(b.rebuilds(), 1u);
}

TEST(BundleAppends, PostRebuildAnswersMatchAFreshBuild) {
  BundleConfig cfg;
  cfg.method = BreakpointMethod::bp2;
  cfg.epsilon = 0.25;
  cfg.k_max = 3;
  ApproxBundle b = ApproxBundle::create(early_ender(), cfg, tfx::temp_path("bun_post"));

  // o2 regrows past its old end until the appended mass forces the rebuild
  double v = 2.0;
  Time t = 40.0;
  while (b.rebuilds() == 0) {
    b.append({t, t + 5.0, v, v + 0.5, 2});
    t += 5.0;
    v += 0.5;
    ASSERT_LT(t, 4000.0);
  }
  ASSERT_EQ(b.tail_size(), 0u);

  ApproxBundle fresh =
      ApproxBundle::create(b.dataset(), cfg, tfx::temp_path("bun_fresh"));
  ASSERT_EQ(fresh.breakpoints().breakpoints.size(),
            b.breakpoints().breakpoints.size());

  tfx::Rng rng(91);
  for (int i = 0; i < 80; ++i) {
    Time t1 = rng.uniform(0.0, b.dataset().t_end);
    Time t2 = rng.uniform(t1, b.dataset().t_end);
    std::size_t k = 1 + rng.index(3);
    QuerySpec q{k, {t1, t2}, Aggregate::sum};
    std::string why;
    ASSERT_TRUE(tfx::answers_match(b.query1(q), fresh.query1(q), 1e-9, 1e-9, &why))
        << "q1: " << why;
    ASSERT_TRUE(tfx::answers_match(b.query2(q), fresh.query2(q), 1e-9, 1e-9, &why))
        << "q2: " << why;
    ASSERT_TRUE(
        tfx::answers_match(b.query2_plus(q), fresh.query2_plus(q), 1e-9, 1e-9, &why))
        << "q2+: " << why;
  }
}

TEST(BundleAppends, RejectsBrokenContinuations) {
  BundleConfig cfg;
  cfg.epsilon = 0.5;
  cfg.k_max = 3;
  ApproxBundle b = ApproxBundle::create(early_ender(), cfg, tfx::temp_path("bun_rej"));

  EXPECT_THROW(b.append({90.0, 95.0, 1.0, 1.0, 1}), std::invalid_argument);
  EXPECT_THROW(b.append({100.0, 100.0, 1.0, 1.0, 1}), std::invalid_argument);
  EXPECT_THROW(b.append({100.0, 105.0, 5.0, 5.0, 1}), std::invalid_argument);
  EXPECT_THROW(b.append({40.0, 45.0, 2.0, 2.0, 99}), std::invalid_argument);
  b.append({100.0, 105.0, 1.0, 1.0, 1});
  EXPECT_EQ(b.tail_size(), 1u);
}

}  // namespace
