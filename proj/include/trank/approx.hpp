#pragma once

// Approximate top-k engines on a breakpoint grid. Queries snap their window
// to the grid and answer from precomputed top lists:
//
//   Query1Index  one exact top list per breakpoint pair; a query is a single
//                list lookup
//   Query2Index  top lists on a dyadic tree over the gaps between adjacent
//                breakpoints; a query merges the lists of the covering nodes,
//                optionally re-scoring the merged candidates exactly against
//                a companion Exact2Index
//
// ApproxBundle wraps the engines for appends: new segments are buffered in a
// tail that queries fold in linearly, and everything is rebuilt once the
// appended mass reaches the mass the structures were built from.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trank/block_store.hpp"
#include "trank/breakpoints.hpp"
#include "trank/core.hpp"
#include "trank/exact.hpp"

namespace trank {

struct IntervalTopList {
  std::size_t lo = 0, hi = 0;  // breakpoint indexes; interval [b_lo, b_hi]
  std::vector<std::pair<ObjectId, double>> entries;  // score desc, id asc
};

struct QueryDiag {
  std::size_t nodes = 0;       // tree nodes merged
  std::size_t candidates = 0;  // distinct objects considered
};

namespace detail {

// list entries are packed (u32 id, f64 score)
constexpr std::size_t list_entry_width = 12;

// builds refuse to produce files or scratch tables past this
constexpr std::uint64_t max_build_bytes = 1ull << 31;

inline void check_build_size(std::uint64_t lists, std::uint64_t entries_per_list,
                             std::uint64_t m, std::uint64_t r) {
  if (lists * entries_per_list * list_entry_width > max_build_bytes ||
      m * r * 8 > max_build_bytes)
    throw std::runtime_error("index would exceed the 2 GiB build cap");
}

// sequential page-granular writer; nothing else may allocate while in use
class PageWriter {
 public:
  explicit PageWriter(BlockStore& s) : s_(&s), buf_(s.page_size(), 0) {}

  void put(const void* p, std::size_t n) {
    const char* src = static_cast<const char*>(p);
    while (n > 0) {
      std::size_t take = std::min(n, buf_.size() - fill_);
      std::memcpy(buf_.data() + fill_, src, take);
      fill_ += take;
      src += take;
      n -= take;
      if (fill_ == buf_.size()) flush();
    }
  }

  void finish() {
    if (fill_ > 0) {
      std::memset(buf_.data() + fill_, 0, buf_.size() - fill_);
      fill_ = buf_.size();
      flush();
    }
  }

  std::uint64_t first_page() const { return first_; }

 private:
  void flush() {
    std::uint64_t page = s_->allocate_page();
    if (first_ == 0) first_ = page;
    s_->write_page(page, buf_.data());
    fill_ = 0;
  }

  BlockStore* s_;
  std::vector<char> buf_;
  std::size_t fill_ = 0;
  std::uint64_t first_ = 0;
};

inline void read_bytes(const BlockStore& s, std::uint64_t start_page,
                       std::uint64_t byte_off, char* out, std::size_t len) {
  std::vector<char> page(s.page_size());
  while (len > 0) {
    std::uint64_t p = start_page + byte_off / s.page_size();
    std::size_t off = byte_off % s.page_size();
    std::size_t take = std::min<std::size_t>(len, s.page_size() - off);
    s.read_page(p, page.data());
    std::memcpy(out, page.data() + off, take);
    out += take;
    byte_off += take;
    len -= take;
  }
}

// row-major upper triangle over r breakpoint indexes, pairs j < j2
inline std::uint64_t pair_index(std::uint64_t r, std::uint64_t j, std::uint64_t j2) {
  return j * (2 * r - j - 1) / 2 + (j2 - j - 1);
}

// F[i][j] = signed mass of object i from its first vertex to breakpoint j,
// row-major m x r
inline std::vector<double> prefix_table(const Dataset& ds, const BreakpointSet& bps) {
  std::size_t m = ds.objects.size(), r = bps.breakpoints.size();
  std::vector<double> tab(m * r, 0.0);
  for (const auto& po : ds.objects) {
    double* row = tab.data() + (po.id - 1) * r;
    double pref = 0.0;
    std::size_t k = 0, n = po.segment_count();
    for (std::size_t j = 0; j < r; ++j) {
      double b = bps.breakpoints[j];
      while (k < n && po.vertices[k + 1].t <= b) {
        Segment g = po.segment(k);
        pref += segment_integral(g, {g.t_l, g.t_r});
        ++k;
      }
      double part = 0.0;
      if (k < n) {
        Segment g = po.segment(k);
        if (b > g.t_l) part = segment_integral(g, {g.t_l, b});
      }
      row[j] = pref + part;
    }
  }
  return tab;
}

inline std::vector<std::pair<ObjectId, double>> topk_between(
    const std::vector<double>& tab, std::size_t m, std::size_t r,
    std::size_t j1, std::size_t j2, std::size_t want) {
  std::vector<std::pair<ObjectId, double>> sc;
  sc.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    sc.emplace_back(static_cast<ObjectId>(i + 1), tab[i * r + j2] - tab[i * r + j1]);
  return select_topk(std::move(sc), want).entries;
}

inline RankedAnswer zero_answer(std::size_t n) {
  RankedAnswer ans;
  ans.entries.reserve(n);
  for (std::size_t i = 1; i <= n; ++i)
    ans.entries.emplace_back(static_cast<ObjectId>(i), 0.0);
  return ans;
}

inline void scale_avg(RankedAnswer& ans, const QuerySpec& q, double snapped_len) {
  if (q.agg != Aggregate::avg) return;
  for (auto& e : ans.entries) e.second /= snapped_len;
}

inline void check_bps_domain(const Dataset& ds, const BreakpointSet& bps) {
  if (!approx_eq(bps.domain_end(), ds.t_end, 1e-9, 1e-9))
    throw std::invalid_argument("breakpoints do not span the dataset");
}

// dyadic tree over gap indexes [lo, hi); the left child always covers the
// largest power of two below the span, so the shape is a function of the gap
// count alone and both builder and reader derive it independently
struct DyadicNode {
  std::uint32_t lo, hi, left, right;  // children ~0u on leaves
};

inline std::uint32_t build_shape(std::vector<DyadicNode>& out, std::uint32_t lo,
                                 std::uint32_t hi) {
  auto id = static_cast<std::uint32_t>(out.size());
  out.push_back({lo, hi, ~0u, ~0u});
  if (hi - lo > 1) {
    std::uint32_t half = 1;
    while (half * 2 < hi - lo) half *= 2;
    std::uint32_t l = build_shape(out, lo, lo + half);
    std::uint32_t r = build_shape(out, lo + half, hi);
    out[id].left = l;
    out[id].right = r;
  }
  return id;
}

inline void decompose_rec(const std::vector<DyadicNode>& t, std::uint32_t id,
                          std::uint32_t lo, std::uint32_t hi,
                          std::vector<std::uint32_t>& out) {
  const DyadicNode& n = t[id];
  if (lo <= n.lo && n.hi <= hi) {
    out.push_back(id);
    return;
  }
  std::uint32_t split = t[n.left].hi;
  if (lo < split) decompose_rec(t, n.left, lo, hi, out);
  if (hi > split) decompose_rec(t, n.right, lo, hi, out);
}

}  // namespace detail

// Minimal cover of the gap range [lo, hi) by dyadic tree nodes, left to
// right. Empty range gives an empty cover.
inline std::vector<std::pair<std::size_t, std::size_t>> decompose_dyadic(
    std::size_t gaps, std::size_t lo, std::size_t hi) {
  if (lo > hi || hi > gaps) throw std::invalid_argument("bad gap range");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (lo == hi) return out;
  std::vector<detail::DyadicNode> tree;
  detail::build_shape(tree, 0, static_cast<std::uint32_t>(gaps));
  std::vector<std::uint32_t> ids;
  detail::decompose_rec(tree, 0, static_cast<std::uint32_t>(lo),
                        static_cast<std::uint32_t>(hi), ids);
  out.reserve(ids.size());
  for (std::uint32_t id : ids) out.emplace_back(tree[id].lo, tree[id].hi);
  return out;
}

// ---------------------------------------------------------------------------
// Query1Index

class Query1Index {
 public:
  static Query1Index build(const Dataset& ds, const BreakpointSet& bps,
                           std::size_t k_max, const std::string& path,
                           std::uint32_t page_size = BlockStore::default_page_size) {
    if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
    ds.validate();
    detail::check_bps_domain(ds, bps);
    Query1Index ix;
    ix.bps_ = bps;
    ix.m_ = ds.objects.size();
    ix.kmax_ = k_max;
    ix.len_ = std::min(k_max, ix.m_);
    std::size_t r = bps.breakpoints.size();
    std::uint64_t lists = static_cast<std::uint64_t>(r) * (r - 1) / 2;
    detail::check_build_size(lists, ix.len_, ix.m_, r);

    ix.store_ = std::make_unique<BlockStore>(BlockStore::create(path, page_size));
    ix.write_bps_blob();
    std::vector<double> tab = detail::prefix_table(ds, bps);
    detail::PageWriter w(*ix.store_);
    char rec[detail::list_entry_width];
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t j2 = j + 1; j2 < r; ++j2)
        for (const auto& e : detail::topk_between(tab, ix.m_, r, j, j2, ix.len_)) {
          detail::st<std::uint32_t>(rec, e.first);
          detail::st<double>(rec + 4, e.second);
          w.put(rec, sizeof rec);
        }
    w.finish();
    ix.lists_start_ = w.first_page();
    ix.flush_header(StoreKind::query1, lists);
    return ix;
  }

  static Query1Index open(const std::string& path, CacheMode mode = CacheMode::none,
                          std::size_t cache_pages = 256) {
    Query1Index ix;
    ix.store_ =
        std::make_unique<BlockStore>(BlockStore::open_file(path, mode, cache_pages));
    ix.read_header(StoreKind::query1, "Q1");
    return ix;
  }

  RankedAnswer query(const QuerySpec& q) const {
    if (q.k > kmax_) throw std::invalid_argument("k exceeds k_max for this index");
    std::size_t j1 = bps_.snap_index(q.window.t1);
    std::size_t j2 = bps_.snap_index(q.window.t2);
    if (q.k == 0) return {};
    if (j1 == j2) return detail::zero_answer(std::min(q.k, m_));
    RankedAnswer ans;
    ans.entries = read_list(j1, j2, std::min(q.k, len_));
    detail::scale_avg(ans, q, bps_.breakpoints[j2] - bps_.breakpoints[j1]);
    return ans;
  }

  IntervalTopList list_at(std::size_t j1, std::size_t j2) const {
    if (j1 >= j2 || j2 >= bps_.breakpoints.size())
      throw std::invalid_argument("bad breakpoint pair");
    return {j1, j2, read_list(j1, j2, len_)};
  }

  std::size_t list_count() const {
    std::size_t r = bps_.breakpoints.size();
    return r * (r - 1) / 2;
  }

  const BreakpointSet& breakpoints() const { return bps_; }
  std::size_t k_max() const { return kmax_; }
  std::size_t list_len() const { return len_; }
  std::size_t object_count() const { return m_; }
  const IoStats& stats() const { return store_->stats(); }
  void reset_stats() { store_->reset_stats(); }

 private:
  friend class Query2Index;

  void write_bps_blob() {
    std::vector<char> blob = bps_.encode();
    detail::PageWriter w(*store_);
    w.put(blob.data(), blob.size());
    w.finish();
    bps_start_ = w.first_page();
    bps_len_ = blob.size();
  }

  void flush_header(StoreKind kind, std::uint64_t lists) {
    FileHeader h = store_->read_header();
    h.kind = kind;
    h.entry_width = detail::list_entry_width;
    h.entry_count = lists;
    h.aux[0] = bps_start_;
    h.aux[1] = bps_len_;
    h.aux[2] = kmax_;
    h.aux[3] = len_;
    h.aux[4] = lists_start_;
    h.aux[5] = m_;
    h.aux[6] = aux6_;
    h.aux[7] = aux7_;
    store_->write_header(h);
  }

  void read_header(StoreKind kind, const char* tag) {
    FileHeader h = store_->read_header();
    if (h.kind != kind)
      throw std::runtime_error(std::string("not a ") + tag + " index");
    bps_start_ = h.aux[0];
    bps_len_ = h.aux[1];
    kmax_ = h.aux[2];
    len_ = h.aux[3];
    lists_start_ = h.aux[4];
    m_ = h.aux[5];
    aux6_ = h.aux[6];
    aux7_ = h.aux[7];
    std::vector<char> blob(bps_len_);
    detail::read_bytes(*store_, bps_start_, 0, blob.data(), blob.size());
    bps_ = BreakpointSet::decode(blob.data(), blob.size());
  }

  std::vector<std::pair<ObjectId, double>> read_list(std::size_t j1, std::size_t j2,
                                                     std::size_t want) const {
    std::uint64_t idx = detail::pair_index(bps_.breakpoints.size(), j1, j2);
    return read_entries(idx, want);
  }

  std::vector<std::pair<ObjectId, double>> read_entries(std::uint64_t list_idx,
                                                        std::size_t want) const {
    std::vector<char> raw(want * detail::list_entry_width);
    detail::read_bytes(*store_, lists_start_,
                       list_idx * len_ * detail::list_entry_width, raw.data(),
                       raw.size());
    std::vector<std::pair<ObjectId, double>> out;
    out.reserve(want);
    for (std::size_t i = 0; i < want; ++i) {
      const char* p = raw.data() + i * detail::list_entry_width;
      out.emplace_back(detail::ld<std::uint32_t>(p), detail::ld<double>(p + 4));
    }
    return out;
  }

  std::unique_ptr<BlockStore> store_;
  BreakpointSet bps_;
  std::size_t m_ = 0, kmax_ = 0, len_ = 0;
  std::uint64_t bps_start_ = 0, bps_len_ = 0, lists_start_ = 0;
  std::uint64_t aux6_ = 0, aux7_ = 0;
};

// ---------------------------------------------------------------------------
// Query2Index

class Query2Index {
 public:
  static Query2Index build(const Dataset& ds, const BreakpointSet& bps,
                           std::size_t k_max, const std::string& path,
                           const std::string& companion = "",
                           std::uint32_t page_size = BlockStore::default_page_size) {
    if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
    ds.validate();
    detail::check_bps_domain(ds, bps);
    Query2Index ix;
    ix.base_.bps_ = bps;
    ix.base_.m_ = ds.objects.size();
    ix.base_.kmax_ = k_max;
    ix.base_.len_ = std::min(k_max, ix.base_.m_);
    std::size_t r = bps.breakpoints.size();
    ix.rebuild_shape();
    detail::check_build_size(ix.shape_.size(), ix.base_.len_, ix.base_.m_, r);

    ix.base_.store_ =
        std::make_unique<BlockStore>(BlockStore::create(path, page_size));
    BlockStore& store = *ix.base_.store_;
    ix.base_.write_bps_blob();
    if (!companion.empty()) {
      if (companion.size() > store.page_size() - 4)
        throw std::invalid_argument("companion path too long");
      std::vector<char> page(store.page_size(), 0);
      detail::st<std::uint32_t>(page.data(),
                                static_cast<std::uint32_t>(companion.size()));
      std::memcpy(page.data() + 4, companion.data(), companion.size());
      std::uint64_t p = store.allocate_page();
      store.write_page(p, page.data());
      ix.base_.aux7_ = p;
    }
    std::vector<double> tab = detail::prefix_table(ds, bps);
    detail::PageWriter w(store);
    char rec[detail::list_entry_width];
    for (const auto& n : ix.shape_)
      for (const auto& e :
           detail::topk_between(tab, ix.base_.m_, r, n.lo, n.hi, ix.base_.len_)) {
        detail::st<std::uint32_t>(rec, e.first);
        detail::st<double>(rec + 4, e.second);
        w.put(rec, sizeof rec);
      }
    w.finish();
    ix.base_.lists_start_ = w.first_page();
    ix.base_.flush_header(StoreKind::query2, ix.shape_.size());
    return ix;
  }

  static Query2Index open(const std::string& path, CacheMode mode = CacheMode::none,
                          std::size_t cache_pages = 256) {
    Query2Index ix;
    ix.base_.store_ =
        std::make_unique<BlockStore>(BlockStore::open_file(path, mode, cache_pages));
    ix.base_.read_header(StoreKind::query2, "Q2");
    ix.rebuild_shape();
    return ix;
  }

  // top per_node entries of every covering node, scores summed per object
  std::unordered_map<ObjectId, double> gather(std::size_t j1, std::size_t j2,
                                              std::size_t per_node,
                                              std::size_t* nodes_out = nullptr) const {
    std::vector<std::uint32_t> ids;
    detail::decompose_rec(shape_, 0, static_cast<std::uint32_t>(j1),
                          static_cast<std::uint32_t>(j2), ids);
    if (nodes_out) *nodes_out = ids.size();
    std::unordered_map<ObjectId, double> acc;
    for (std::uint32_t id : ids)
      for (const auto& e : base_.read_entries(id, per_node)) acc[e.first] += e.second;
    return acc;
  }

  RankedAnswer query(const QuerySpec& q, QueryDiag* diag = nullptr) const {
    if (q.k > base_.kmax_) throw std::invalid_argument("k exceeds k_max for this index");
    std::size_t j1 = base_.bps_.snap_index(q.window.t1);
    std::size_t j2 = base_.bps_.snap_index(q.window.t2);
    if (q.k == 0) return {};
    if (j1 == j2) return detail::zero_answer(std::min(q.k, base_.m_));
    std::size_t nodes = 0;
    auto acc = gather(j1, j2, std::min(q.k, base_.len_), &nodes);
    if (diag) {
      diag->nodes = nodes;
      diag->candidates = acc.size();
    }
    RankedAnswer ans = select_topk({acc.begin(), acc.end()}, q.k);
    detail::scale_avg(ans, q, snapped_len(j1, j2));
    return ans;
  }

  // same candidates, each re-scored exactly over the snapped window
  RankedAnswer query_plus(const Exact2Index& ex2, const QuerySpec& q,
                          QueryDiag* diag = nullptr) const {
    if (q.k > base_.kmax_) throw std::invalid_argument("k exceeds k_max for this index");
    if (ex2.object_count() != base_.m_)
      throw std::invalid_argument("companion index does not match");
    std::size_t j1 = base_.bps_.snap_index(q.window.t1);
    std::size_t j2 = base_.bps_.snap_index(q.window.t2);
    if (q.k == 0) return {};
    if (j1 == j2) return detail::zero_answer(std::min(q.k, base_.m_));
    std::size_t nodes = 0;
    auto acc = gather(j1, j2, std::min(q.k, base_.len_), &nodes);
    if (diag) {
      diag->nodes = nodes;
      diag->candidates = acc.size();
    }
    Time b1 = base_.bps_.breakpoints[j1], b2 = base_.bps_.breakpoints[j2];
    std::vector<std::pair<ObjectId, double>> sc;
    sc.reserve(acc.size());
    for (const auto& [id, unused] : acc)
      sc.emplace_back(id, ex2.prefix_mass(id, b2) - ex2.prefix_mass(id, b1));
    RankedAnswer ans = select_topk(std::move(sc), q.k);
    detail::scale_avg(ans, q, b2 - b1);
    return ans;
  }

  std::size_t node_count() const { return shape_.size(); }

  std::pair<std::size_t, std::size_t> node_gaps(std::size_t node) const {
    return {shape_.at(node).lo, shape_.at(node).hi};
  }

  IntervalTopList node_list(std::size_t node) const {
    const detail::DyadicNode& n = shape_.at(node);
    return {n.lo, n.hi, base_.read_entries(node, base_.len_)};
  }

  std::string companion_path() const {
    if (base_.aux7_ == 0) return "";
    std::vector<char> page(base_.store_->page_size());
    base_.store_->read_page(base_.aux7_, page.data());
    std::uint32_t len = detail::ld<std::uint32_t>(page.data());
    return {page.data() + 4, page.data() + 4 + len};
  }

  const BreakpointSet& breakpoints() const { return base_.bps_; }
  std::size_t k_max() const { return base_.kmax_; }
  std::size_t list_len() const { return base_.len_; }
  std::size_t object_count() const { return base_.m_; }
  const IoStats& stats() const { return base_.store_->stats(); }
  void reset_stats() { base_.store_->reset_stats(); }

 private:
  double snapped_len(std::size_t j1, std::size_t j2) const {
    return base_.bps_.breakpoints[j2] - base_.bps_.breakpoints[j1];
  }

  void rebuild_shape() {
    shape_.clear();
    detail::build_shape(shape_, 0,
                        static_cast<std::uint32_t>(base_.bps_.gap_count()));
  }

  Query1Index base_;  // shared layout: header, blob, packed lists
  std::vector<detail::DyadicNode> shape_;
};

// ---------------------------------------------------------------------------
// ApproxBundle

struct BundleConfig {
  BreakpointMethod method = BreakpointMethod::bp2;
  double epsilon = 0.1;
  std::size_t k_max = 200;
  std::uint32_t page_size = BlockStore::default_page_size;
  bool with_query1 = true;
};

// Owns the live dataset plus the file-backed structures built from it.
// Appends extend the dataset and a tail buffer; queries fold the tail in.
// Once the tail's absolute mass reaches the mass the structures were built
// from, everything is rebuilt in place with a fresh threshold.
class ApproxBundle {
 public:
  static ApproxBundle create(Dataset ds, const BundleConfig& cfg,
                             const std::string& prefix) {
    ApproxBundle b;
    b.ds_ = std::move(ds);
    b.cfg_ = cfg;
    b.prefix_ = prefix;
    b.build_all();
    return b;
  }

  void append(const Segment& seg) {
    if (seg.id < 1 || seg.id > ds_.objects.size())
      throw std::invalid_argument("append: unknown object id");
    Polyline& po = ds_.objects[seg.id - 1];
    const Vertex& last = po.vertices.back();
    if (!approx_eq(seg.t_l, last.t, 1e-12, 1e-12) ||
        !approx_eq(seg.v_l, last.v, 1e-12, 1e-12))
      throw std::invalid_argument(
          "append: segment does not continue the object's last vertex");
    if (!(seg.t_r > seg.t_l))
      throw std::invalid_argument("append: time must extend the object");
    po.vertices.push_back({seg.t_r, seg.v_r});
    ds_.t_end = std::max(ds_.t_end, seg.t_r);
    tail_.push_back(seg);
    pending_ += segment_integral_abs(seg, {seg.t_l, seg.t_r});
    if (pending_ >= build_mass_) {
      build_all();
      ++rebuilds_;
    }
  }

  RankedAnswer query1(const QuerySpec& q) const {
    const Query1Index& ix = require(q1_);
    if (q.k > ix.k_max()) throw std::invalid_argument("k exceeds k_max for this index");
    auto [j1, j2] = snap_window(q.window);
    if (q.k == 0) return {};
    if (j1 == j2) return detail::zero_answer(std::min(q.k, ds_.objects.size()));
    std::unordered_map<ObjectId, double> acc;
    for (const auto& e : ix.list_at(j1, j2).entries) acc[e.first] = e.second;
    Time b1 = bps().breakpoints[j1], b2 = bps().breakpoints[j2];
    add_tail(acc, b1, b2);
    RankedAnswer ans = select_topk({acc.begin(), acc.end()}, q.k);
    detail::scale_avg(ans, q, b2 - b1);
    return ans;
  }

  RankedAnswer query2(const QuerySpec& q, QueryDiag* diag = nullptr) const {
    const Query2Index& ix = require(q2_);
    if (q.k > ix.k_max()) throw std::invalid_argument("k exceeds k_max for this index");
    auto [j1, j2] = snap_window(q.window);
    if (q.k == 0) return {};
    if (j1 == j2) return detail::zero_answer(std::min(q.k, ds_.objects.size()));
    std::size_t nodes = 0;
    auto acc = ix.gather(j1, j2, std::min(q.k, ix.list_len()), &nodes);
    Time b1 = bps().breakpoints[j1], b2 = bps().breakpoints[j2];
    add_tail(acc, b1, b2);
    if (diag) {
      diag->nodes = nodes;
      diag->candidates = acc.size();
    }
    RankedAnswer ans = select_topk({acc.begin(), acc.end()}, q.k);
    detail::scale_avg(ans, q, b2 - b1);
    return ans;
  }

  RankedAnswer query2_plus(const QuerySpec& q, QueryDiag* diag = nullptr) const {
    const Query2Index& ix = require(q2_);
    if (q.k > ix.k_max()) throw std::invalid_argument("k exceeds k_max for this index");
    auto [j1, j2] = snap_window(q.window);
    if (q.k == 0) return {};
    if (j1 == j2) return detail::zero_answer(std::min(q.k, ds_.objects.size()));
    std::size_t nodes = 0;
    auto acc = ix.gather(j1, j2, std::min(q.k, ix.list_len()), &nodes);
    Time b1 = bps().breakpoints[j1], b2 = bps().breakpoints[j2];
    std::unordered_map<ObjectId, double> tailm;
    add_tail(tailm, b1, b2);
    for (const auto& [id, unused] : tailm) acc.try_emplace(id, 0.0);
    if (diag) {
      diag->nodes = nodes;
      diag->candidates = acc.size();
    }
    std::vector<std::pair<ObjectId, double>> sc;
    sc.reserve(acc.size());
    for (const auto& [id, unused] : acc) {
      double s = ex2_->prefix_mass(id, b2) - ex2_->prefix_mass(id, b1);
      auto it = tailm.find(id);
      if (it != tailm.end()) s += it->second;
      sc.emplace_back(id, s);
    }
    RankedAnswer ans = select_topk(std::move(sc), q.k);
    detail::scale_avg(ans, q, b2 - b1);
    return ans;
  }

  const Dataset& dataset() const { return ds_; }
  const BreakpointSet& breakpoints() const { return bps(); }
  std::size_t rebuilds() const { return rebuilds_; }
  std::size_t tail_size() const { return tail_.size(); }
  double pending_mass() const { return pending_; }
  double rebuild_at() const { return build_mass_; }
  const Query1Index& pair_lists() const { return require(q1_); }
  const Query2Index& dyadic_lists() const { return require(q2_); }
  const Exact2Index& companion() const { return *ex2_; }

 private:
  void build_all() {
    BreakpointSet b = cfg_.method == BreakpointMethod::bp1
                          ? build_breakpoints1(ds_, cfg_.epsilon)
                          : build_breakpoints2(ds_, cfg_.epsilon);
    ex2_.emplace(Exact2Index::build(ds_, prefix_ + ".ex2", cfg_.page_size));
    q2_.emplace(Query2Index::build(ds_, b, cfg_.k_max, prefix_ + ".q2",
                                   prefix_ + ".ex2", cfg_.page_size));
    if (cfg_.with_query1)
      q1_.emplace(Query1Index::build(ds_, b, cfg_.k_max, prefix_ + ".q1",
                                     cfg_.page_size));
    tail_.clear();
    pending_ = 0.0;
    build_mass_ = b.mass;
  }

  const BreakpointSet& bps() const { return require(q2_).breakpoints(); }

  template <class T>
  static const T& require(const std::optional<T>& o) {
    if (!o) throw std::logic_error("engine not built in this bundle");
    return *o;
  }

  // snap the window against the current grid; times past the grid (appends
  // newer than the last build) clamp to its end and reach answers through
  // the tail scan instead
  std::pair<std::size_t, std::size_t> snap_window(const TimeInterval& w) const {
    const BreakpointSet& b = bps();
    Time end = b.domain_end();
    return {b.snap_index(std::min(w.t1, end)), b.snap_index(std::min(w.t2, end))};
  }

  void add_tail(std::unordered_map<ObjectId, double>& acc, Time a, Time b) const {
    for (const Segment& s : tail_) {
      double v = segment_integral(s, {a, b});
      if (v != 0.0) acc[s.id] += v;
    }
  }

  Dataset ds_;
  BundleConfig cfg_;
  std::string prefix_;
  std::optional<Query1Index> q1_;
  std::optional<Query2Index> q2_;
  std::optional<Exact2Index> ex2_;
  std::vector<Segment> tail_;
  double pending_ = 0.0, build_mass_ = 0.0;
  std::size_t rebuilds_ = 0;
};

}  // namespace trank
