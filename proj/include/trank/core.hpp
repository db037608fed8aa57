#pragma once

// Core model: piecewise-linear time series, interval integrals, and the
// reference top-k ranking used as ground truth by every other component.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trank {

using ObjectId = std::uint32_t;
using Time     = double;

// Closed query window [t1, t2]; degenerate t1 == t2 is legal for sums.
struct TimeInterval {
  Time t1 = 0.0;
  Time t2 = 0.0;

  TimeInterval() = default;
  TimeInterval(Time a, Time b) : t1(a), t2(b) {
    if (!(t1 <= t2)) throw std::invalid_argument("TimeInterval: t1 > t2");
  }
  Time length() const { return t2 - t1; }
};

// One linear piece of an object's series, from (t_l, v_l) to (t_r, v_r).
struct Segment {
  Time t_l = 0.0, t_r = 0.0;
  double v_l = 0.0, v_r = 0.0;
  ObjectId id = 0;

  double slope() const { return (v_r - v_l) / (t_r - t_l); }
};

struct Vertex {
  Time t;
  double v;
};

// Polyline of an object: >= 2 vertices, strictly increasing timestamps.
struct Polyline {
  ObjectId id = 0;
  std::vector<Vertex> vertices;

  std::size_t segment_count() const { return vertices.size() - 1; }
  Time t_min() const { return vertices.front().t; }
  Time t_max() const { return vertices.back().t; }

  Segment segment(std::size_t k) const {
    return Segment{vertices[k].t, vertices[k + 1].t, vertices[k].v,
                   vertices[k + 1].v, id};
  }

  void validate() const {
    if (vertices.size() < 2)
      throw std::invalid_argument("polyline needs at least two vertices");
    for (std::size_t k = 1; k < vertices.size(); ++k)
      if (!(vertices[k - 1].t < vertices[k].t))
        throw std::invalid_argument("polyline timestamps must strictly increase");
  }
};

enum class Aggregate { sum, avg };

struct QuerySpec {
  std::size_t k = 1;
  TimeInterval window;
  Aggregate agg = Aggregate::sum;
};

// Ranked (object, score) list: descending score, ties by ascending id.
struct RankedAnswer {
  std::vector<std::pair<ObjectId, double>> entries;

  std::size_t size() const { return entries.size(); }
};

struct Dataset {
  std::vector<Polyline> objects;  // ids dense in [1, m], ascending
  Time t_end = 0.0;               // domain end, >= every vertex time

  std::size_t object_count() const { return objects.size(); }

  std::size_t segment_count() const {
    std::size_t n = 0;
    for (const auto& p : objects) n += p.segment_count();
    return n;
  }

  bool has_negative() const {
    for (const auto& p : objects)
      for (const auto& v : p.vertices)
        if (v.v < 0.0) return true;
    return false;
  }

  void validate() const {
    for (std::size_t i = 0; i < objects.size(); ++i) {
      objects[i].validate();
      if (objects[i].id != static_cast<ObjectId>(i + 1))
        throw std::invalid_argument("object ids must be dense in [1, m]");
      if (objects[i].t_min() < 0.0 || objects[i].t_max() > t_end)
        throw std::invalid_argument("object extent outside [0, t_end]");
    }
  }
};

// ---------------------------------------------------------------------------
// numeric comparison policy: 1e-9 relative, 1e-12 absolute near zero

inline bool approx_eq(double a, double b, double rel = 1e-9,
                      double abs_tol = 1e-12) {
  double diff = std::fabs(a - b);
  if (diff <= abs_tol) return true;
  return diff <= rel * std::max(std::fabs(a), std::fabs(b));
}

// ---------------------------------------------------------------------------
// segment arithmetic

inline double segment_value(const Segment& g, Time t) {
  if (t < g.t_l || t > g.t_r)
    throw std::domain_error("segment_value: t outside segment span");
  return g.v_l + g.slope() * (t - g.t_l);
}

// Integral of g over the overlap with [t1, t2] (trapezoid on the clipped
// span); zero when they are disjoint or the overlap has zero width.
inline double segment_integral(const Segment& g, const TimeInterval& w) {
  Time lo = std::max(w.t1, g.t_l);
  Time hi = std::min(w.t2, g.t_r);
  if (lo >= hi) return 0.0;
  double s  = g.slope();
  double vl = g.v_l + s * (lo - g.t_l);
  double vr = g.v_l + s * (hi - g.t_l);
  return 0.5 * (hi - lo) * (vl + vr);
}

// Same but over |g|: a sign change inside the clipped span splits it at the
// zero crossing so each half is a plain trapezoid.
inline double segment_integral_abs(const Segment& g, const TimeInterval& w) {
  Time lo = std::max(w.t1, g.t_l);
  Time hi = std::min(w.t2, g.t_r);
  if (lo >= hi) return 0.0;
  double s  = g.slope();
  double vl = g.v_l + s * (lo - g.t_l);
  double vr = g.v_l + s * (hi - g.t_l);
  if (vl == 0.0 || vr == 0.0 || (vl > 0.0) == (vr > 0.0))
    return 0.5 * (hi - lo) * (std::fabs(vl) + std::fabs(vr));
  Time tz = lo - vl / s;  // interior zero crossing
  return 0.5 * (tz - lo) * std::fabs(vl) + 0.5 * (hi - tz) * std::fabs(vr);
}

namespace detail {

template <typename SegFn>
double polyline_sum(const Polyline& p, const TimeInterval& w, SegFn seg_fn) {
  if (w.t1 >= p.t_max() || w.t2 <= p.t_min()) return 0.0;
  // first vertex with t > t1 bounds the first segment that can overlap
  auto it = std::upper_bound(
      p.vertices.begin(), p.vertices.end(), w.t1,
      [](Time t, const Vertex& v) { return t < v.t; });
  std::size_t k = it == p.vertices.begin()
                      ? 0
                      : static_cast<std::size_t>(it - p.vertices.begin()) - 1;
  double acc = 0.0;
  for (; k + 1 < p.vertices.size() && p.vertices[k].t < w.t2; ++k)
    acc += seg_fn(p.segment(k), w);
  return acc;
}

}  // namespace detail

inline double polyline_integral(const Polyline& p, const TimeInterval& w) {
  return detail::polyline_sum(p, w, [](const Segment& g, const TimeInterval& x) {
    return segment_integral(g, x);
  });
}

inline double polyline_integral_abs(const Polyline& p, const TimeInterval& w) {
  return detail::polyline_sum(p, w, [](const Segment& g, const TimeInterval& x) {
    return segment_integral_abs(g, x);
  });
}

enum class MassMode { summed, absolute };

// Total dataset mass M = sum_i integral over the whole domain.
inline double total_mass(const Dataset& ds, MassMode mode = MassMode::summed) {
  double m = 0.0;
  TimeInterval all{0.0, ds.t_end};
  for (const auto& p : ds.objects)
    m += mode == MassMode::summed ? polyline_integral(p, all)
                                  : polyline_integral_abs(p, all);
  return m;
}

// ---------------------------------------------------------------------------
// ranking

namespace detail {

inline bool rank_less(const std::pair<ObjectId, double>& a,
                      const std::pair<ObjectId, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace detail

// Top-k of a full (id, score) table; keeps at most k entries.
inline RankedAnswer select_topk(std::vector<std::pair<ObjectId, double>> scores,
                                std::size_t k) {
  RankedAnswer out;
  if (k == 0 || scores.empty()) return out;
  if (k < scores.size()) {
    std::nth_element(scores.begin(), scores.begin() + static_cast<long>(k) - 1,
                     scores.end(), detail::rank_less);
    scores.resize(k);
  }
  std::sort(scores.begin(), scores.end(), detail::rank_less);
  out.entries = std::move(scores);
  return out;
}

// avg is a positive rescaling of sum, so ranks are unchanged.
inline void apply_aggregate(RankedAnswer& ans, const QuerySpec& q) {
  if (q.agg == Aggregate::sum) return;
  double len = q.window.length();
  if (len <= 0.0)
    throw std::domain_error("avg aggregate undefined on a degenerate window");
  for (auto& e : ans.entries) e.second /= len;
}

// Reference answer: integrate every object directly. Everything else in the
// library is checked against this.
inline RankedAnswer brute_force_topk(const Dataset& ds, const QuerySpec& q) {
  std::vector<std::pair<ObjectId, double>> scores;
  scores.reserve(ds.objects.size());
  for (const auto& p : ds.objects)
    scores.emplace_back(p.id, polyline_integral(p, q.window));
  RankedAnswer ans = select_topk(std::move(scores), q.k);
  apply_aggregate(ans, q);
  return ans;
}

}  // namespace trank
