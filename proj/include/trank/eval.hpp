#pragma once

// Ground-truth comparison harness: quality metrics, rank-wise guarantee
// checks, deterministic synthetic datasets, and IO benchmarking.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trank/approx.hpp"
#include "trank/block_store.hpp"
#include "trank/breakpoints.hpp"
#include "trank/core.hpp"
#include "trank/exact.hpp"

namespace trank {

// ---------------------------------------------------------------------------
// quality metrics

// Shared-denominator precision == recall: |ans ∩ truth| / k on object ids.
inline double precision_recall(const RankedAnswer& ans, const RankedAnswer& truth) {
  if (ans.size() != truth.size())
    throw std::invalid_argument("precision needs equal answer sizes");
  if (ans.size() == 0) return 1.0;
  std::unordered_set<ObjectId> ids;
  ids.reserve(truth.size());
  for (const auto& e : truth.entries) ids.insert(e.first);
  std::size_t hit = 0;
  for (const auto& e : ans.entries) hit += ids.count(e.first);
  return static_cast<double>(hit) / static_cast<double>(ans.size());
}

// Mean of reported/true score over the returned objects, true scores taken
// over the raw query window. Objects whose true score is exactly zero have
// no defined ratio; they are skipped and tallied in *zero_truth. An answer
// with no usable entries scores a neutral 1.
inline double approx_ratio(const RankedAnswer& ans, const Dataset& ds,
                           const QuerySpec& q, std::size_t* zero_truth = nullptr) {
  double len = q.window.length();
  if (q.agg == Aggregate::avg && len <= 0.0)
    throw std::domain_error("avg aggregate undefined on a degenerate window");
  double sum = 0.0;
  std::size_t used = 0, zeros = 0;
  for (const auto& [id, score] : ans.entries) {
    if (id < 1 || id > ds.objects.size())
      throw std::invalid_argument("answer names an unknown object");
    double truth = polyline_integral(ds.objects[id - 1], q.window);
    if (q.agg == Aggregate::avg) truth /= len;
    if (truth == 0.0) {
      ++zeros;
      continue;
    }
    sum += score / truth;
    ++used;
  }
  if (zero_truth) *zero_truth = zeros;
  return used ? sum / static_cast<double>(used) : 1.0;
}

// Rank-wise guarantee check: at every rank j the reported score must lie in
// [σ/α − εM, σ + εM] against the truth score at rank j, and also against the
// reported object's own true score whenever that object appears in the truth
// list (its true score is unknown otherwise).
inline std::vector<bool> verify_rankwise(const RankedAnswer& ans,
                                         const RankedAnswer& truth, double epsilon,
                                         double alpha, double mass) {
  if (ans.size() != truth.size())
    throw std::invalid_argument("rank-wise check needs equal answer sizes");
  if (alpha < 1.0) throw std::invalid_argument("alpha must be at least 1");
  double slack = epsilon * mass;
  std::unordered_map<ObjectId, double> own;
  own.reserve(truth.size());
  for (const auto& e : truth.entries) own.emplace(e.first, e.second);
  std::vector<bool> ok(ans.size(), true);
  for (std::size_t j = 0; j < ans.size(); ++j) {
    double got = ans.entries[j].second;
    auto sandwiched = [&](double sigma) {
      double tol = 1e-9 * (std::fabs(sigma) + mass + 1.0);
      return got >= sigma / alpha - slack - tol && got <= sigma + slack + tol;
    };
    bool pass = sandwiched(truth.entries[j].second);
    auto it = own.find(ans.entries[j].first);
    if (it != own.end()) pass = pass && sandwiched(it->second);
    ok[j] = pass;
  }
  return ok;
}

struct QualityReport {
  QuerySpec query;
  double precision = 1.0;  // equals recall: same denominator
  double ratio = 1.0;
  std::size_t zero_truth = 0;
  bool rankwise_pass = true;
};

inline QualityReport evaluate_answer(const RankedAnswer& ans, const Dataset& ds,
                                     const QuerySpec& q, const RankedAnswer& truth,
                                     double epsilon, double alpha, double mass) {
  QualityReport r;
  r.query = q;
  r.precision = precision_recall(ans, truth);
  r.ratio = approx_ratio(ans, ds, q, &r.zero_truth);
  auto flags = verify_rankwise(ans, truth, epsilon, alpha, mass);
  r.rankwise_pass =
      std::all_of(flags.begin(), flags.end(), [](bool b) { return b; });
  return r;
}

// ---------------------------------------------------------------------------
// synthetic datasets

struct SynthProfile {
  enum class Model : std::uint8_t {
    random_walk_positive,
    random_walk_mixed,
    disjoint_support,
    bursty,
  };

  std::size_t m = 10;
  std::size_t n_avg = 10;
  std::uint64_t seed = 1;
  Model model = Model::random_walk_positive;
  Time t_end = 1000.0;
};

namespace detail {

// splitmix64; self-contained so generated datasets are reproducible
// independently of the standard library's distributions
struct SynthRng {
  std::uint64_t state;

  explicit SynthRng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * u01(); }
};

// >= 1, mean ~ target, capped at 3 * target
inline std::size_t geometric_segments(SynthRng& rng, std::size_t target) {
  if (target <= 1) return 1;
  double p = 1.0 / static_cast<double>(target);
  double u = rng.u01();
  auto k = static_cast<std::size_t>(1.0 + std::log1p(-u) / std::log1p(-p));
  return std::clamp<std::size_t>(k, 1, 3 * target);
}

inline std::vector<Time> sorted_times(SynthRng& rng, Time lo, Time hi,
                                      std::size_t segments) {
  std::vector<Time> ts{lo, hi};
  for (std::size_t k = 1; k < segments; ++k) ts.push_back(rng.uniform(lo, hi));
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

}  // namespace detail

// Deterministic generator: the same profile always yields the same dataset.
inline Dataset gen_synthetic(const SynthProfile& p) {
  if (p.m < 1 || p.n_avg < 1)
    throw std::invalid_argument("profile needs m >= 1 and n_avg >= 1");
  using Model = SynthProfile::Model;
  detail::SynthRng rng(p.seed * 0x2545f4914f6cdd1dull + 0x9e3779b9ull +
                       static_cast<std::uint64_t>(p.model));
  Dataset ds;
  ds.t_end = p.t_end;
  double span = p.t_end / static_cast<double>(p.m);
  for (std::size_t i = 1; i <= p.m; ++i) {
    Polyline po;
    po.id = static_cast<ObjectId>(i);
    std::size_t segments = detail::geometric_segments(rng, p.n_avg);
    Time lo = 0.0, hi = p.t_end;
    switch (p.model) {
      case Model::random_walk_positive:
      case Model::random_walk_mixed: {
        if (rng.u01() < 0.3) {  // some objects cover only part of the domain
          lo = rng.uniform(0.0, 0.5 * p.t_end);
          hi = rng.uniform(lo + 0.02 * p.t_end, p.t_end);
        }
        // per-object magnitude, log-uniform across two decades: fleets of
        // real series mix hot and cold objects rather than clones of one walk
        double scale =
            std::exp(rng.uniform(std::log(0.5), std::log(50.0)));
        double v = rng.uniform(1.0, 10.0);
        for (Time t : detail::sorted_times(rng, lo, hi, segments)) {
          po.vertices.push_back({t, scale * v});
          v += rng.uniform(-2.0, 2.0);
          if (p.model == Model::random_walk_positive && v < 0.5) v = 1.0 - v;
        }
        break;
      }
      case Model::disjoint_support: {
        // touching equal spans of constant equal value, two vertices each so
        // per-object masses stay exactly t_end/m: between two adjacent
        // breakpoints exactly one object carries mass, and both breakpoint
        // builders cut at the same junctions whenever the quantum divides the
        // span mass
        lo = static_cast<double>(i - 1) * span;
        hi = (i == p.m) ? p.t_end : static_cast<double>(i) * span;
        po.vertices.push_back({lo, 1.0});
        po.vertices.push_back({hi, 1.0});
        break;
      }
      case Model::bursty: {
        // short positive bursts: quiet floor with occasional spikes
        double width = rng.uniform(0.02, 0.1) * p.t_end;
        lo = rng.uniform(0.0, p.t_end - width);
        hi = lo + width;
        for (Time t : detail::sorted_times(rng, lo, hi, segments)) {
          double v = rng.u01() < 0.5 ? rng.uniform(0.0, 2.0) : rng.uniform(5.0, 25.0);
          po.vertices.push_back({t, v});
        }
        break;
      }
    }
    ds.objects.push_back(std::move(po));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// method tags

enum class MethodTag : std::uint8_t {
  exact1,
  exact2,
  exact3,
  appx1b,  // pair lists on BP1 breakpoints
  appx2b,  // dyadic lists on BP1 breakpoints
  appx1,   // pair lists on BP2 breakpoints
  appx2,   // dyadic lists on BP2 breakpoints
  appx2plus,
};

inline const char* method_name(MethodTag t) {
  switch (t) {
    case MethodTag::exact1: return "EXACT1";
    case MethodTag::exact2: return "EXACT2";
    case MethodTag::exact3: return "EXACT3";
    case MethodTag::appx1b: return "APPX1-B";
    case MethodTag::appx2b: return "APPX2-B";
    case MethodTag::appx1: return "APPX1";
    case MethodTag::appx2: return "APPX2";
    case MethodTag::appx2plus: return "APPX2+";
  }
  return "?";
}

inline std::optional<MethodTag> method_from_name(std::string_view s) {
  std::string low;
  for (char c : s)
    low.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(
                                       static_cast<unsigned char>(c))));
  if (low == "exact1") return MethodTag::exact1;
  if (low == "exact2") return MethodTag::exact2;
  if (low == "exact3") return MethodTag::exact3;
  if (low == "appx1-b" || low == "appx1b") return MethodTag::appx1b;
  if (low == "appx2-b" || low == "appx2b") return MethodTag::appx2b;
  if (low == "appx1") return MethodTag::appx1;
  if (low == "appx2") return MethodTag::appx2;
  if (low == "appx2+" || low == "appx2plus") return MethodTag::appx2plus;
  return std::nullopt;
}

inline bool method_is_exact(MethodTag t) {
  return t == MethodTag::exact1 || t == MethodTag::exact2 || t == MethodTag::exact3;
}

inline BreakpointMethod method_breakpoints(MethodTag t) {
  return (t == MethodTag::appx1b || t == MethodTag::appx2b) ? BreakpointMethod::bp1
                                                            : BreakpointMethod::bp2;
}

// rank-wise guarantee width at breakpoint count r: 1 for exact engines and
// the pair-list engines, 2*ceil(log2 r) for the dyadic engines
inline double guarantee_alpha(MethodTag t, std::size_t r) {
  if (method_is_exact(t) || t == MethodTag::appx1b || t == MethodTag::appx1)
    return 1.0;
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < r) ++bits;
  return std::max(1.0, 2.0 * static_cast<double>(bits));
}

// epsilon that makes the chosen builder produce about r_target breakpoints:
// exact closed form for the global sweep; a geometric bisection for the
// per-object sweep, which lands at the largest epsilon whose count still
// stays within the target
inline double epsilon_for_target_r(const Dataset& ds, BreakpointMethod method,
                                   std::size_t r_target) {
  if (r_target < 2) throw std::invalid_argument("target r must be at least 2");
  if (method == BreakpointMethod::bp1)
    return 1.0 / static_cast<double>(r_target - 1);
  double lo = 1e-7, hi = 1.0;
  if (build_breakpoints2(ds, lo).breakpoints.size() <= r_target) return lo;
  for (int it = 0; it < 48; ++it) {
    double mid = std::sqrt(lo * hi);
    if (build_breakpoints2(ds, mid).breakpoints.size() > r_target)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// benchmarking

struct BenchRow {
  MethodTag method = MethodTag::exact1;
  std::size_t m = 0, segments = 0;
  std::size_t r = 0;       // breakpoint count; 0 for exact methods
  double epsilon = 0.0;    // 0 for exact methods
  std::size_t k = 0;       // largest k in the workload
  std::size_t k_max = 0;   // 0 for exact methods
  std::uint64_t build_reads = 0, build_writes = 0;
  double build_ms = 0.0;
  std::uint64_t index_pages = 0;
  std::size_t queries = 0;
  double query_reads_mean = 0.0;
  std::uint64_t query_reads_max = 0;
  double query_ms_mean = 0.0;
};

inline const char* bench_columns() {
  return "method\tm\tsegments\tr\tepsilon\tk\tk_max\tbuild_reads\tbuild_writes"
         "\tbuild_ms\tindex_pages\tqueries\tquery_reads_mean\tquery_reads_max"
         "\tquery_ms_mean";
}

inline std::string format_row(const BenchRow& row) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s\t%zu\t%zu\t%zu\t%.6g\t%zu\t%zu\t%llu\t%llu\t%.3f\t%llu\t%zu"
                "\t%.3f\t%llu\t%.4f",
                method_name(row.method), row.m, row.segments, row.r, row.epsilon,
                row.k, row.k_max,
                static_cast<unsigned long long>(row.build_reads),
                static_cast<unsigned long long>(row.build_writes), row.build_ms,
                static_cast<unsigned long long>(row.index_pages), row.queries,
                row.query_reads_mean,
                static_cast<unsigned long long>(row.query_reads_max),
                row.query_ms_mean);
  return buf;
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   t0)
      .count();
}

template <class Query>
void run_workload(BenchRow& row, const std::vector<QuerySpec>& workload,
                  const IoStats& io, Query&& query) {
  std::uint64_t total = 0;
  auto t0 = std::chrono::steady_clock::now();
  for (const QuerySpec& q : workload) {
    std::uint64_t before = io.reads;
    query(q);
    std::uint64_t delta = io.reads - before;
    total += delta;
    row.query_reads_max = std::max(row.query_reads_max, delta);
    row.k = std::max(row.k, q.k);
  }
  row.queries = workload.size();
  if (!workload.empty()) {
    row.query_reads_mean =
        static_cast<double>(total) / static_cast<double>(workload.size());
    row.query_ms_mean = ms_since(t0) / static_cast<double>(workload.size());
  }
}

inline std::uint64_t file_pages(const std::string& path, std::uint32_t page_size) {
  return std::filesystem::file_size(path) / page_size;
}

}  // namespace detail

// One row per method: build the index under prefix, then reopen it without a
// cache and run the workload. IO counts are deterministic for a fixed
// workload; times are informational only.
inline std::vector<BenchRow> bench(const Dataset& ds,
                                   const std::vector<MethodTag>& methods,
                                   const std::vector<QuerySpec>& workload,
                                   const std::string& prefix, double epsilon = 0.1,
                                   std::size_t k_max = 200,
                                   std::uint32_t page_size = BlockStore::default_page_size) {
  std::vector<BenchRow> rows;
  rows.reserve(methods.size());
  for (MethodTag tag : methods) {
    BenchRow row;
    row.method = tag;
    row.m = ds.objects.size();
    row.segments = ds.segment_count();
    std::string path = prefix + "." + std::to_string(static_cast<int>(tag));

    auto run_exact = [&]<class Ix>(std::type_identity<Ix>) {
      auto t0 = std::chrono::steady_clock::now();
      {
        Ix built = Ix::build(ds, path, page_size);
        row.build_ms = detail::ms_since(t0);
        row.build_reads = built.stats().reads;
        row.build_writes = built.stats().writes;
      }
      Ix ix = Ix::open(path);
      detail::run_workload(row, workload, ix.stats(),
                           [&](const QuerySpec& q) { ix.query(q); });
    };

    auto make_bps = [&] {
      return method_breakpoints(tag) == BreakpointMethod::bp1
                 ? build_breakpoints1(ds, epsilon)
                 : build_breakpoints2(ds, epsilon);
    };

    switch (tag) {
      case MethodTag::exact1:
        run_exact(std::type_identity<Exact1Index>{});
        break;
      case MethodTag::exact2:
        run_exact(std::type_identity<Exact2Index>{});
        break;
      case MethodTag::exact3:
        run_exact(std::type_identity<Exact3Index>{});
        break;
      case MethodTag::appx1b:
      case MethodTag::appx1: {
        auto t0 = std::chrono::steady_clock::now();
        {
          BreakpointSet bps = make_bps();
          Query1Index built = Query1Index::build(ds, bps, k_max, path, page_size);
          row.build_ms = detail::ms_since(t0);
          row.r = bps.breakpoints.size();
          row.build_reads = built.stats().reads;
          row.build_writes = built.stats().writes;
        }
        row.epsilon = epsilon;
        row.k_max = k_max;
        Query1Index ix = Query1Index::open(path);
        detail::run_workload(row, workload, ix.stats(),
                             [&](const QuerySpec& q) { ix.query(q); });
        break;
      }
      case MethodTag::appx2b:
      case MethodTag::appx2: {
        auto t0 = std::chrono::steady_clock::now();
        {
          BreakpointSet bps = make_bps();
          Query2Index built = Query2Index::build(ds, bps, k_max, path, "", page_size);
          row.build_ms = detail::ms_since(t0);
          row.r = bps.breakpoints.size();
          row.build_reads = built.stats().reads;
          row.build_writes = built.stats().writes;
        }
        row.epsilon = epsilon;
        row.k_max = k_max;
        Query2Index ix = Query2Index::open(path);
        detail::run_workload(row, workload, ix.stats(),
                             [&](const QuerySpec& q) { ix.query(q); });
        break;
      }
      case MethodTag::appx2plus: {
        std::string ex_path = path + ".ex2";
        auto t0 = std::chrono::steady_clock::now();
        {
          BreakpointSet bps = build_breakpoints2(ds, epsilon);
          Exact2Index ex_built = Exact2Index::build(ds, ex_path, page_size);
          Query2Index built =
              Query2Index::build(ds, bps, k_max, path, ex_path, page_size);
          row.build_ms = detail::ms_since(t0);
          row.r = bps.breakpoints.size();
          row.build_reads = built.stats().reads + ex_built.stats().reads;
          row.build_writes = built.stats().writes + ex_built.stats().writes;
        }
        row.epsilon = epsilon;
        row.k_max = k_max;
        Query2Index ix = Query2Index::open(path);
        Exact2Index ex2 = Exact2Index::open(ex_path);
        std::uint64_t total = 0;
        auto q0 = std::chrono::steady_clock::now();
        for (const QuerySpec& q : workload) {
          std::uint64_t before = ix.stats().reads + ex2.stats().reads;
          ix.query_plus(ex2, q);
          std::uint64_t delta = ix.stats().reads + ex2.stats().reads - before;
          total += delta;
          row.query_reads_max = std::max(row.query_reads_max, delta);
          row.k = std::max(row.k, q.k);
        }
        row.queries = workload.size();
        if (!workload.empty()) {
          row.query_reads_mean =
              static_cast<double>(total) / static_cast<double>(workload.size());
          row.query_ms_mean =
              detail::ms_since(q0) / static_cast<double>(workload.size());
        }
        row.index_pages = detail::file_pages(path, page_size) +
                          detail::file_pages(ex_path, page_size);
        rows.push_back(row);
        continue;
      }
    }
    if (row.index_pages == 0)
      row.index_pages = detail::file_pages(path, page_size);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace trank
