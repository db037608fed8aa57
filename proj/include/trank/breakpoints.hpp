#pragma once
// Epsilon mass partitions of the time axis. A breakpoint set cuts [0, T] so
// that bounded score mass sits between consecutive cuts:
//   bp1 cuts whenever the total mass rate, summed over all objects, has
//       accumulated tau = epsilon * M since the previous cut;
//   bp2 cuts whenever any single object has accumulated tau since the
//       previous cut. It never needs more cuts than bp1.
// Sweeps integrate |g_i(t)|, so mixed-sign data partitions by absolute mass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "trank/core.hpp"

namespace trank {

enum class BreakpointMethod : std::uint8_t { bp1 = 1, bp2 = 2 };

// Smallest t' >= t at which acc + rate*(t'-t) + rate_slope*(t'-t)^2/2 first
// reaches tau, assuming the current rate and its slope persist. nullopt when
// the accumulation never gets there (rate decays too fast, or is zero).
inline std::optional<Time> solve_crossing(double rate, double rate_slope,
                                          double acc, double tau, Time t) {
  double need = tau - acc;
  if (need <= 0.0) return t;
  double disc = rate * rate + 2.0 * rate_slope * need;
  if (disc < 0.0) return std::nullopt;
  double denom = rate + std::sqrt(disc);
  if (denom <= 0.0) return std::nullopt;
  return t + 2.0 * need / denom;
}

struct BreakpointSet {
  std::vector<Time> breakpoints;  // b_0 = 0 < b_1 < ... < b_r = T
  double epsilon = 0.0;
  double threshold = 0.0;  // tau = epsilon * mass
  double mass = 0.0;       // total |g| mass M of the dataset at build time
  BreakpointMethod method = BreakpointMethod::bp1;
  MassMode mass_mode = MassMode::summed;

  std::size_t size() const { return breakpoints.size(); }
  std::size_t gap_count() const { return breakpoints.size() - 1; }
  Time domain_end() const { return breakpoints.back(); }

  // index of the smallest breakpoint >= t
  std::size_t snap_index(Time t) const {
    if (!(t >= breakpoints.front() && t <= breakpoints.back()))
      throw std::domain_error("snap: time outside the breakpoint domain");
    return static_cast<std::size_t>(
        std::lower_bound(breakpoints.begin(), breakpoints.end(), t) -
        breakpoints.begin());
  }
  Time snap(Time t) const { return breakpoints[snap_index(t)]; }

  std::vector<char> encode() const {
    std::vector<char> out(40 + 8 * breakpoints.size());
    char* p = out.data();
    p[0] = static_cast<char>(method);
    p[1] = static_cast<char>(mass_mode);
    std::uint32_t n = static_cast<std::uint32_t>(breakpoints.size());
    std::memcpy(p + 4, &n, 4);
    std::memcpy(p + 8, &epsilon, 8);
    std::memcpy(p + 16, &threshold, 8);
    std::memcpy(p + 24, &mass, 8);
    std::memcpy(p + 32, &n, 4);  // repeated for a cheap integrity check
    std::memcpy(p + 40, breakpoints.data(), 8 * breakpoints.size());
    return out;
  }

  static BreakpointSet decode(const char* p, std::size_t len) {
    if (len < 40) throw std::runtime_error("breakpoint blob truncated");
    BreakpointSet out;
    std::uint8_t mth = static_cast<std::uint8_t>(p[0]);
    std::uint8_t mde = static_cast<std::uint8_t>(p[1]);
    if (mth != 1 && mth != 2)
      throw std::runtime_error("breakpoint blob has unknown method tag");
    if (mde > 1)
      throw std::runtime_error("breakpoint blob has unknown mass mode");
    out.method = static_cast<BreakpointMethod>(mth);
    out.mass_mode = static_cast<MassMode>(mde);
    std::uint32_t n = 0, n2 = 0;
    std::memcpy(&n, p + 4, 4);
    std::memcpy(&n2, p + 32, 4);
    if (n != n2 || n < 2) throw std::runtime_error("breakpoint blob corrupt");
    if (len < 40 + 8ull * n) throw std::runtime_error("breakpoint blob truncated");
    std::memcpy(&out.epsilon, p + 8, 8);
    std::memcpy(&out.threshold, p + 16, 8);
    std::memcpy(&out.mass, p + 24, 8);
    out.breakpoints.resize(n);
    std::memcpy(out.breakpoints.data(), p + 40, 8ull * n);
    if (out.breakpoints.front() != 0.0)
      throw std::runtime_error("breakpoint blob does not start at zero");
    for (std::size_t j = 1; j < out.breakpoints.size(); ++j)
      if (!(out.breakpoints[j] > out.breakpoints[j - 1]))
        throw std::runtime_error("breakpoint blob not strictly increasing");
    return out;
  }

  std::size_t encoded_size() const { return 40 + 8 * breakpoints.size(); }
};

namespace detail {

// one linear piece of |g_i|; segments are cut where g crosses zero so each
// piece carries a single sign
struct SweepPiece {
  Time a = 0.0, b = 0.0;
  double va = 0.0, vb = 0.0;
  double slope() const { return (vb - va) / (b - a); }
  double full_mass() const { return 0.5 * (va + vb) * (b - a); }
  double value_at(Time t) const { return va + slope() * (t - a); }
  double mass_to(Time t) const {
    return 0.5 * (va + value_at(t)) * (t - a);
  }
};

inline std::vector<std::vector<SweepPiece>> abs_pieces(const Dataset& ds) {
  std::vector<std::vector<SweepPiece>> out(ds.objects.size());
  for (std::size_t oi = 0; oi < ds.objects.size(); ++oi) {
    const Polyline& po = ds.objects[oi];
    auto& pieces = out[oi];
    pieces.reserve(po.segment_count());
    for (std::size_t k = 0; k < po.segment_count(); ++k) {
      Segment s = po.segment(k);
      if ((s.v_l >= 0.0) == (s.v_r >= 0.0) || s.v_l == 0.0 || s.v_r == 0.0) {
        pieces.push_back({s.t_l, s.t_r, std::fabs(s.v_l), std::fabs(s.v_r)});
        continue;
      }
      Time tz = s.t_l - s.v_l / s.slope();
      if (!(tz > s.t_l && tz < s.t_r)) {
        pieces.push_back({s.t_l, s.t_r, std::fabs(s.v_l), std::fabs(s.v_r)});
        continue;
      }
      pieces.push_back({s.t_l, tz, std::fabs(s.v_l), 0.0});
      pieces.push_back({tz, s.t_r, 0.0, std::fabs(s.v_r)});
    }
  }
  return out;
}

struct SweepSetup {
  std::vector<std::vector<SweepPiece>> pieces;
  double mass = 0.0;
  double tau = 0.0;
  Time t_end = 0.0;
  double tol = 0.0;        // coincident-cut tolerance, 1e-12 * T
  Time cut_limit = 0.0;    // crossings at or past this fold into the
                           // terminal cut: the global mass is spent there
  MassMode mode = MassMode::summed;
};

inline SweepSetup sweep_setup(const Dataset& ds, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon must be in (0, 1]");
  ds.validate();
  SweepSetup s;
  s.mode = ds.has_negative() ? MassMode::absolute : MassMode::summed;
  s.mass = total_mass(ds, MassMode::absolute);
  if (!(s.mass > 0.0))
    throw std::invalid_argument("dataset carries no mass to partition");
  s.tau = epsilon * s.mass;
  s.t_end = ds.t_end;
  s.tol = 1e-12 * ds.t_end;
  s.pieces = abs_pieces(ds);
  Time support_end = 0.0;
  for (const auto& pl : s.pieces)
    for (const auto& p : pl)
      if (p.full_mass() > 0.0) support_end = std::max(support_end, p.b);
  s.cut_limit = support_end - s.tol;
  return s;
}

inline void finish_at_t_end(std::vector<Time>& bps, Time t_end, double tol) {
  if (t_end - bps.back() <= tol)
    bps.back() = t_end;
  else
    bps.push_back(t_end);
}

}  // namespace detail

// Global-sum partition: each interior gap carries total |g| mass exactly tau.
// A cut that would land where the dataset's remaining mass is exhausted is
// dropped (it would duplicate the terminal cut), which keeps the emergent
// count at ceil(1/epsilon)+1 on full-mass data.
inline BreakpointSet build_breakpoints1(const Dataset& ds, double epsilon) {
  auto su = detail::sweep_setup(ds, epsilon);

  struct Ev {
    Time t;
    double dv, dw;
  };
  std::vector<Ev> evs;
  for (const auto& pl : su.pieces)
    for (const auto& p : pl) {
      double w = p.slope();
      evs.push_back({p.a, p.va, w});
      evs.push_back({p.b, -p.vb, -w});
    }
  std::sort(evs.begin(), evs.end(),
            [](const Ev& x, const Ev& y) { return x.t < y.t; });

  BreakpointSet out;
  out.epsilon = epsilon;
  out.threshold = su.tau;
  out.mass = su.mass;
  out.method = BreakpointMethod::bp1;
  out.mass_mode = su.mode;
  auto& bps = out.breakpoints;
  bps.push_back(0.0);

  double V = 0.0, W = 0.0, I = 0.0;
  double consumed = 0.0;  // mass already walled off behind emitted cuts
  Time t = 0.0;
  std::size_t i = 0;
  bool spent = false;
  while (i < evs.size()) {
    Time te = evs[i].t;
    if (te > t) {
      while (!spent) {
        auto c = solve_crossing(V, W, I, su.tau, t);
        if (!c || *c > te) break;
        if (consumed + su.tau >= su.mass * (1.0 - 1e-12)) {
          spent = true;  // this cut would sit on top of the terminal one
          break;
        }
        Time b = *c;
        V += W * (b - t);
        I = 0.0;
        consumed += su.tau;
        t = b;
        if (b - bps.back() > su.tol) bps.push_back(b);
      }
      double dt = te - t;
      I += (V + 0.5 * W * dt) * dt;
      V += W * dt;
      t = te;
    }
    while (i < evs.size() && evs[i].t == te) {
      V += evs[i].dv;
      W += evs[i].dw;
      ++i;
    }
  }
  detail::finish_at_t_end(bps, su.t_end, su.tol);
  return out;
}

// Per-object-max partition, straightforward variant: advance every object
// across every inter-event span, emit at the earliest per-object crossing,
// and reset all running masses at each cut. Costs O(spans * m) plus O(m) per
// cut; kept simple because it is the reference the fast variant must match.
inline BreakpointSet build_breakpoints2_baseline(const Dataset& ds,
                                                 double epsilon) {
  auto su = detail::sweep_setup(ds, epsilon);
  const std::size_t m = su.pieces.size();

  std::vector<Time> ets;
  for (const auto& pl : su.pieces)
    for (const auto& p : pl) {
      ets.push_back(p.a);
      ets.push_back(p.b);
    }
  std::sort(ets.begin(), ets.end());
  ets.erase(std::unique(ets.begin(), ets.end()), ets.end());

  std::vector<std::size_t> idx(m, 0);
  std::vector<double> acc(m, 0.0);  // mass since the last cut
  std::vector<char> exhausted(m, 0);

  BreakpointSet out;
  out.epsilon = epsilon;
  out.threshold = su.tau;
  out.mass = su.mass;
  out.method = BreakpointMethod::bp2;
  out.mass_mode = su.mode;
  auto& bps = out.breakpoints;
  bps.push_back(0.0);

  for (std::size_t e = 0; e + 1 < ets.size(); ++e) {
    Time ta = ets[e], tb = ets[e + 1];
    for (std::size_t i = 0; i < m; ++i)
      while (idx[i] < su.pieces[i].size() && su.pieces[i][idx[i]].b <= ta)
        ++idx[i];
    Time t = ta;
    for (;;) {
      Time best = std::numeric_limits<Time>::infinity();
      std::size_t who = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (exhausted[i] || idx[i] >= su.pieces[i].size()) continue;
        const auto& p = su.pieces[i][idx[i]];
        if (p.a > ta) continue;  // starts later than this span
        double v1 = p.value_at(t);
        double gain = 0.5 * (v1 + p.value_at(tb)) * (tb - t);
        if (acc[i] + gain < su.tau) continue;
        auto c = solve_crossing(v1, p.slope(), acc[i], su.tau, t);
        Time ci = c ? std::min(*c, tb) : tb;
        if (ci < best) {
          best = ci;
          who = i;
        }
      }
      if (who == m) {
        for (std::size_t i = 0; i < m; ++i) {
          if (idx[i] >= su.pieces[i].size()) continue;
          const auto& p = su.pieces[i][idx[i]];
          if (p.a > ta) continue;
          acc[i] += 0.5 * (p.value_at(t) + p.value_at(tb)) * (tb - t);
        }
        break;
      }
      // advance everyone to the cut; a crossing where the global mass runs
      // out is the terminal cut in disguise, not a fresh one
      for (std::size_t i = 0; i < m; ++i) {
        if (idx[i] >= su.pieces[i].size()) continue;
        const auto& p = su.pieces[i][idx[i]];
        if (p.a > ta) continue;
        acc[i] += 0.5 * (p.value_at(t) + p.value_at(best)) * (best - t);
      }
      t = best;
      if (best >= su.cut_limit) {
        exhausted[who] = 1;  // every later candidate of its would be, too
      } else {
        if (best - bps.back() > su.tol) bps.push_back(best);
        std::fill(acc.begin(), acc.end(), 0.0);
      }
      if (t >= tb) break;
    }
  }
  detail::finish_at_t_end(bps, su.t_end, su.tol);
  return out;
}

// work profile of the fast bp2 sweep, for checking that its cost does not
// couple the cut count to the object count
struct SweepCounters {
  std::uint64_t events = 0;          // piece activations
  std::uint64_t candidates = 0;      // crossing computations
  std::uint64_t heap_pops = 0;
  std::uint64_t base_refreshes = 0;  // lazy per-object mass rebases
  std::uint64_t total() const {
    return events + candidates + heap_pops + base_refreshes;
  }
};

// Per-object-max partition without the O(m) reset per cut. Each object keeps
// a never-reset cumulative mass; its mass since the latest cut is recovered
// lazily (cumulative now minus cumulative at that cut) whenever the object
// surfaces. Crossing candidates wait in a min-heap and are revalidated on
// pop: a candidate computed against an older cut is a lower bound on the
// true crossing, so popping early and recomputing never misses a cut.
inline BreakpointSet build_breakpoints2(const Dataset& ds, double epsilon,
                                        SweepCounters* counters = nullptr) {
  auto su = detail::sweep_setup(ds, epsilon);
  const std::size_t m = su.pieces.size();
  SweepCounters cnt;

  struct Ev {
    Time t;
    std::uint32_t obj;
    std::uint32_t k;
  };
  std::vector<Ev> evs;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < su.pieces[i].size(); ++k)
      evs.push_back({su.pieces[i][k].a, static_cast<std::uint32_t>(i),
                     static_cast<std::uint32_t>(k)});
  std::sort(evs.begin(), evs.end(), [](const Ev& x, const Ev& y) {
    if (x.t != y.t) return x.t < y.t;
    return x.obj < y.obj;
  });

  struct St {
    std::int64_t k = -1;    // active piece, -1 before the first
    double c_start = 0.0;   // cumulative mass at that piece's start
    double base = 0.0;      // cumulative mass at cut number `epoch`
    std::size_t epoch = 0;
    std::uint64_t gen = 0;  // bumped whenever the active piece changes
    bool spent = false;
  };
  std::vector<St> st(m);

  BreakpointSet out;
  out.epsilon = epsilon;
  out.threshold = su.tau;
  out.mass = su.mass;
  out.method = BreakpointMethod::bp2;
  out.mass_mode = su.mode;
  auto& bps = out.breakpoints;
  bps.push_back(0.0);

  std::size_t cur_epoch = 0;
  Time b_cur = 0.0;

  struct Cand {
    Time bhat;
    std::uint32_t obj;
    std::uint64_t gen;
    std::size_t epoch;
  };
  auto later = [](const Cand& x, const Cand& y) {
    if (x.bhat != y.bhat) return x.bhat > y.bhat;
    return x.obj > y.obj;
  };
  std::priority_queue<Cand, std::vector<Cand>, decltype(later)> heap(later);

  auto c_at = [&](std::uint32_t i, Time x) -> double {
    const St& s = st[i];
    if (s.k < 0) return 0.0;
    const auto& p = su.pieces[i][static_cast<std::size_t>(s.k)];
    if (x <= p.a) return s.c_start;
    if (x >= p.b) return s.c_start + p.full_mass();
    return s.c_start + p.mass_to(x);
  };
  auto refresh = [&](std::uint32_t i) {
    St& s = st[i];
    if (s.epoch != cur_epoch) {
      s.base = c_at(i, b_cur);
      s.epoch = cur_epoch;
      ++cnt.base_refreshes;
    }
  };
  auto push_candidate = [&](std::uint32_t i) {
    St& s = st[i];
    if (s.k < 0 || s.spent) return;
    refresh(i);
    const auto& p = su.pieces[i][static_cast<std::size_t>(s.k)];
    ++cnt.candidates;
    auto c = solve_crossing(p.va, p.slope(), s.c_start - s.base, su.tau, p.a);
    if (!c) return;
    Time bhat = std::max(*c, b_cur);
    if (bhat > p.b) return;  // beyond this piece; a later piece will retry
    heap.push({bhat, i, s.gen, s.epoch});
  };
  auto drain = [&](Time until) {
    while (!heap.empty() && heap.top().bhat < until) {
      Cand c = heap.top();
      heap.pop();
      ++cnt.heap_pops;
      St& s = st[c.obj];
      if (c.gen != s.gen || c.epoch != cur_epoch) {
        push_candidate(c.obj);  // stale; recompute against current state
        continue;
      }
      if (c.bhat >= su.cut_limit) {
        s.spent = true;  // the global mass is gone there; terminal cut
        continue;
      }
      if (c.bhat - bps.back() > su.tol) bps.push_back(c.bhat);
      ++cur_epoch;  // even a coincident cut resets every running mass
      b_cur = c.bhat;
      push_candidate(c.obj);
    }
  };

  std::size_t i = 0;
  while (i < evs.size()) {
    Time te = evs[i].t;
    drain(te);
    while (i < evs.size() && evs[i].t == te) {
      const Ev& e = evs[i];
      ++i;
      ++cnt.events;
      St& s = st[e.obj];
      refresh(e.obj);  // rebase on the old piece while it is still current
      if (s.k >= 0) s.c_start += su.pieces[e.obj][s.k].full_mass();
      s.k = e.k;
      ++s.gen;
      push_candidate(e.obj);
    }
  }
  drain(std::numeric_limits<Time>::infinity());
  detail::finish_at_t_end(bps, su.t_end, su.tol);
  if (counters) *counters = cnt;
  return out;
}

}  // namespace trank
