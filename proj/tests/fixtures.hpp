#pragma once

// Shared test fixtures: the 3-object reference dataset, a deterministic rng,
// a dumb random dataset generator, and a quadrature oracle that integrates
// by midpoint sums so it shares no code with the library's trapezoid math.

#include <trank/core.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tfx {

using namespace trank;

// o1: constant 2 on [0,10]; o2: ramp 0..10; o3: vee 6 -> 0 -> 6 with the
// minimum at t = 5.
inline Dataset make_d0() {
  Dataset ds;
  ds.t_end = 10.0;
  ds.objects = {
      Polyline{1, {{0.0, 2.0}, {10.0, 2.0}}},
      Polyline{2, {{0.0, 0.0}, {10.0, 10.0}}},
      Polyline{3, {{0.0, 6.0}, {5.0, 0.0}, {10.0, 6.0}}},
  };
  ds.validate();
  return ds;
}

// splitmix64; self-contained so fixtures never depend on library rng choices
struct Rng {
  std::uint64_t s;
  explicit Rng(std::uint64_t seed) : s(seed + 0x9e3779b97f4a7c15ull) {}
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * u01(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }
};

struct RandomDatasetOpts {
  bool mixed_sign = false;
  bool partial_extents = false;
  double t_end = 100.0;
};

inline Dataset random_dataset(std::size_t m, std::size_t n_avg,
                              std::uint64_t seed,
                              RandomDatasetOpts opts = {}) {
  Rng rng(seed);
  Dataset ds;
  ds.t_end = opts.t_end;
  for (std::size_t i = 1; i <= m; ++i) {
    Polyline p;
    p.id = static_cast<ObjectId>(i);
    double lo = 0.0, hi = opts.t_end;
    if (opts.partial_extents && rng.u01() < 0.7) {
      lo = rng.uniform(0.0, 0.6 * opts.t_end);
      hi = rng.uniform(lo + 0.05 * opts.t_end, opts.t_end);
    }
    std::size_t segs = 1 + rng.index(2 * n_avg > 1 ? 2 * n_avg - 1 : 1);
    std::vector<double> ts{lo, hi};
    for (std::size_t k = 1; k < segs; ++k) ts.push_back(rng.uniform(lo, hi));
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    double v = rng.uniform(0.5, 10.0);
    for (double t : ts) {
      p.vertices.push_back({t, v});
      v += rng.uniform(-2.0, 2.0);
      if (!opts.mixed_sign && v < 0.0) v = -v;
    }
    ds.objects.push_back(std::move(p));
  }
  ds.validate();
  return ds;
}

// value of an object's series at t, zero outside its extent; linear scan,
// no shared code with Polyline::segment
inline double naive_value(const Polyline& p, Time t) {
  if (t < p.t_min() || t > p.t_max()) return 0.0;
  for (std::size_t k = 0; k + 1 < p.vertices.size(); ++k) {
    const auto& a = p.vertices[k];
    const auto& b = p.vertices[k + 1];
    if (t >= a.t && t <= b.t) {
      if (a.t == b.t) return a.v;
      return a.v + (b.v - a.v) * (t - a.t) / (b.t - a.t);
    }
  }
  return p.vertices.back().v;
}

// midpoint-rule quadrature; resolution ~1e-5 relative at default steps
inline double quad_integral(const Polyline& p, const TimeInterval& w,
                            int steps = 200000, bool absolute = false) {
  if (w.t2 <= w.t1) return 0.0;
  double h = (w.t2 - w.t1) / steps;
  double acc = 0.0;
  for (int i = 0; i < steps; ++i) {
    double f = naive_value(p, w.t1 + (i + 0.5) * h);
    acc += absolute ? std::fabs(f) : f;
  }
  return acc * h;
}

// rank-wise answer comparison with the tie rule: ids must match rank by
// rank, except that adjacent entries whose scores coincide within tolerance
// may appear in either order
inline bool answers_match(const RankedAnswer& a, const RankedAnswer& b,
                          double rel = 1e-9, double abs_tol = 1e-9,
                          std::string* why = nullptr) {
  auto close = [&](double x, double y) {
    return approx_eq(x, y, rel, abs_tol);
  };
  if (a.size() != b.size()) {
    if (why) *why = "size mismatch";
    return false;
  }
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (!close(a.entries[j].second, b.entries[j].second)) {
      if (why)
        *why = "score mismatch at rank " + std::to_string(j) + ": " +
               std::to_string(a.entries[j].second) + " vs " +
               std::to_string(b.entries[j].second);
      return false;
    }
    if (a.entries[j].first == b.entries[j].first) continue;
    // tolerate a swap only inside a tolerance-level score plateau
    bool a_has = false, b_has = false;
    for (std::size_t l = 0; l < a.size(); ++l) {
      if (!close(a.entries[l].second, a.entries[j].second)) continue;
      a_has |= a.entries[l].first == b.entries[j].first;
    }
    for (std::size_t l = 0; l < b.size(); ++l) {
      if (!close(b.entries[l].second, b.entries[j].second)) continue;
      b_has |= b.entries[l].first == a.entries[j].first;
    }
    if (!(a_has && b_has)) {
      if (why)
        *why = "object mismatch at rank " + std::to_string(j) + ": " +
               std::to_string(a.entries[j].first) + " vs " +
               std::to_string(b.entries[j].first);
      return false;
    }
  }
  return true;
}

// fresh path under the build tree's temp dir
inline std::string temp_path(const std::string& stem) {
  static std::uint64_t n = 0;
  auto dir = std::filesystem::temp_directory_path() / "trank_tests";
  std::filesystem::create_directories(dir);
  return (dir / (stem + "_" + std::to_string(++n))).string();
}

}  // namespace tfx
