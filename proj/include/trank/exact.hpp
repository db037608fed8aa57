#pragma once

// The three exact top-k engines. All of them answer the same question
// (rank objects by integral over a time window) with different disk layouts:
//
//   Exact1Index: one B+-tree over every segment, keyed by left endpoint.
//                Queries scan [t1, t2) and walk backward for segments that
//                straddle t1.
//   Exact2Index: one B+-tree per object over (right endpoint, segment,
//                prefix mass), all trees in one file behind a directory.
//                Two point searches per object answer a window.
//   Exact3Index: one interval tree over every segment's time span with the
//                prefix mass attached; a window costs two stabbing queries
//                regardless of m's tree count.
//
// All engines share the prefix identity: with F_i(t) = mass of object i from
// its start up to time t, a window is F_i(t2) - F_i(t1), and F_i(t) inside a
// segment is that segment's stored prefix minus the part past t.
//
// Appends extend one object at its right end. Exact1 takes a general ordered
// insert (other objects may already reach further right); Exact2 appends at
// each tree's maximum; Exact3 collects appended spans in a tail that every
// stab also scans.

#include <trank/block_store.hpp>
#include <trank/btree.hpp>
#include <trank/core.hpp>
#include <trank/interval_tree.hpp>

#include <bit>
#include <cstring>
#include <memory>
#include <optional>
#include <vector>

namespace trank {

namespace detail {

constexpr std::uint32_t segment_width = 36;  // 4 doubles + object id

inline void encode_segment(char* p, const Segment& s) {
  st<double>(p, s.t_l);
  st<double>(p + 8, s.t_r);
  st<double>(p + 16, s.v_l);
  st<double>(p + 24, s.v_r);
  st<std::uint32_t>(p + 32, s.id);
}

inline Segment decode_segment(const char* p) {
  Segment s;
  s.t_l = ld<double>(p);
  s.t_r = ld<double>(p + 8);
  s.v_l = ld<double>(p + 16);
  s.v_r = ld<double>(p + 24);
  s.id = ld<std::uint32_t>(p + 32);
  return s;
}

// fixed-width per-object records in a reserved page range
class FixedTable {
 public:
  FixedTable(std::uint32_t rec_size, std::uint32_t page_size)
      : rec_size_(rec_size), per_page_(page_size / rec_size) {}

  std::uint64_t pages_for(std::size_t m) const {
    return m == 0 ? 0 : (m + per_page_ - 1) / per_page_;
  }

  // reserve pages and write all m records (packed, caller-encoded)
  std::uint64_t write_all(BlockStore& s, const std::vector<char>& recs) {
    std::size_t m = recs.size() / rec_size_;
    std::uint64_t start = s.page_count();
    std::uint64_t np = pages_for(m);
    std::vector<char> page(s.page_size(), 0);
    for (std::uint64_t p = 0; p < np; ++p) s.allocate_page();
    for (std::uint64_t p = 0; p < np; ++p) {
      std::memset(page.data(), 0, page.size());
      std::size_t first = p * per_page_;
      std::size_t cnt = std::min<std::size_t>(per_page_, m - first);
      std::memcpy(page.data(), recs.data() + first * rec_size_,
                  cnt * rec_size_);
      s.write_page(start + p, page.data());
    }
    return start;
  }

  std::vector<char> read_all(BlockStore& s, std::uint64_t start,
                             std::size_t m) const {
    std::vector<char> recs(m * rec_size_);
    std::vector<char> page(s.page_size());
    for (std::uint64_t p = 0; p < pages_for(m); ++p) {
      s.read_page(start + p, page.data());
      std::size_t first = p * per_page_;
      std::size_t cnt = std::min<std::size_t>(per_page_, m - first);
      std::memcpy(recs.data() + first * rec_size_, page.data(),
                  cnt * rec_size_);
    }
    return recs;
  }

  // rewrite the one page containing record i (0-based)
  void update_rec(BlockStore& s, std::uint64_t start, std::size_t i,
                  const char* rec) const {
    std::vector<char> page(s.page_size());
    std::uint64_t p = start + i / per_page_;
    s.read_page(p, page.data());
    std::memcpy(page.data() + (i % per_page_) * rec_size_, rec, rec_size_);
    s.write_page(p, page.data());
  }

 private:
  std::uint32_t rec_size_, per_page_;
};

inline RankedAnswer rank_scores(const std::vector<double>& scores,
                                std::size_t m, const QuerySpec& q) {
  std::vector<std::pair<ObjectId, double>> pairs;
  pairs.reserve(m);
  for (std::size_t i = 1; i <= m; ++i)
    pairs.emplace_back(static_cast<ObjectId>(i), scores[i]);
  RankedAnswer ans = select_topk(std::move(pairs), q.k);
  apply_aggregate(ans, q);
  return ans;
}

}  // namespace detail

// per-object bookkeeping every engine needs for appends
struct ObjectExtent {
  Time t_min = 0.0, t_max = 0.0;
  double last_v = 0.0;
  double total = 0.0;  // mass over the full extent
};

namespace detail {

constexpr std::uint32_t extent_rec_size = 32;

inline void encode_extent(char* p, const ObjectExtent& e) {
  st<double>(p, e.t_min);
  st<double>(p + 8, e.t_max);
  st<double>(p + 16, e.last_v);
  st<double>(p + 24, e.total);
}

inline ObjectExtent decode_extent(const char* p) {
  ObjectExtent e;
  e.t_min = ld<double>(p);
  e.t_max = ld<double>(p + 8);
  e.last_v = ld<double>(p + 16);
  e.total = ld<double>(p + 24);
  return e;
}

template <typename Engine>
void checked_append_segment(Engine& eng, const Segment& seg) {
  if (seg.id < 1 || seg.id > eng.object_count())
    throw std::invalid_argument("append: unknown object id");
  const ObjectExtent& e = eng.extent(seg.id);
  if (!approx_eq(seg.t_l, e.t_max, 1e-12, 1e-12) ||
      !approx_eq(seg.v_l, e.last_v, 1e-12, 1e-12))
    throw std::invalid_argument(
        "append: segment does not continue the object's last vertex");
  eng.append_vertex(seg.id, seg.t_r, seg.v_r);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exact1Index

class Exact1Index {
 public:
  static Exact1Index build(const Dataset& ds, const std::string& path,
                           std::uint32_t page_size = BlockStore::default_page_size) {
    ds.validate();
    Exact1Index ix;
    ix.store_ = std::make_unique<BlockStore>(BlockStore::create(path, page_size));
    ix.m_ = ds.objects.size();
    ix.t_end_ = ds.t_end;
    ix.load_extents_from(ds);
    ix.table_start_ = ix.table().write_all(*ix.store_, ix.encoded_extents());

    std::vector<std::pair<double, std::vector<char>>> es;
    es.reserve(ds.segment_count());
    for (const auto& p : ds.objects)
      for (std::size_t k = 0; k < p.segment_count(); ++k) {
        Segment s = p.segment(k);
        std::vector<char> v(detail::segment_width);
        detail::encode_segment(v.data(), s);
        es.emplace_back(s.t_l, std::move(v));
      }
    std::stable_sort(es.begin(), es.end(),
                     [](auto& a, auto& b) { return a.first < b.first; });
    ix.tree_.emplace(*ix.store_, detail::segment_width);
    ix.tree_->bulk_load(es);
    ix.flush_header();
    return ix;
  }

  static Exact1Index open(const std::string& path,
                          CacheMode mode = CacheMode::none,
                          std::size_t cache_pages = 256) {
    Exact1Index ix;
    ix.store_ =
        std::make_unique<BlockStore>(BlockStore::open_file(path, mode, cache_pages));
    FileHeader h = ix.store_->read_header();
    if (h.kind != StoreKind::exact1)
      throw std::runtime_error(path + ": not an EX1 index");
    ix.m_ = h.aux[0];
    ix.table_start_ = h.aux[1];
    ix.t_end_ = std::bit_cast<double>(h.aux[2]);
    ix.tree_ = BPlusTree::attach(*ix.store_, detail::segment_width, h.root_page,
                                 h.entry_count, static_cast<std::uint32_t>(h.aux[3]),
                                 std::bit_cast<double>(h.aux[4]));
    std::vector<char> recs = ix.table().read_all(*ix.store_, ix.table_start_, ix.m_);
    ix.extents_.resize(ix.m_ + 1);
    for (std::size_t i = 1; i <= ix.m_; ++i)
      ix.extents_[i] =
          detail::decode_extent(recs.data() + (i - 1) * detail::extent_rec_size);
    return ix;
  }

  RankedAnswer query(const QuerySpec& q) const {
    std::vector<double> scores(m_ + 1, 0.0);
    const Time t1 = q.window.t1, t2 = q.window.t2;
    if (m_ > 0 && tree_->size() > 0 && t2 > t1) {
      // how many objects must the backward walk account for?
      std::size_t required = 0;
      for (std::size_t i = 1; i <= m_; ++i)
        if (extents_[i].t_min < t1 && t1 < extents_[i].t_max) ++required;

      BPlusTree::Cursor fwd = tree_->lower_bound(t1);
      if (required > 0) {
        BPlusTree::Cursor back = fwd.valid() ? fwd : tree_->last();
        bool have = fwd.valid() ? back.prev() : back.valid();
        std::vector<bool> seen(m_ + 1, false);
        while (have) {
          Segment s = detail::decode_segment(back.value());
          if (!seen[s.id]) {
            // first encounter going left is the object's latest segment
            // starting before t1; only that one can straddle the window
            seen[s.id] = true;
            if (s.t_r > t1) scores[s.id] += segment_integral(s, q.window);
            if (extents_[s.id].t_min < t1 && t1 < extents_[s.id].t_max &&
                --required == 0)
              break;
          }
          have = back.prev();
        }
      }
      for (BPlusTree::Cursor c = fwd; c.valid() && c.key() < t2; c.next()) {
        Segment s = detail::decode_segment(c.value());
        scores[s.id] += segment_integral(s, q.window);
      }
    }
    return detail::rank_scores(scores, m_, q);
  }

  void append_vertex(ObjectId id, Time t, double v) {
    ObjectExtent& e = extent_for_append(id, t);
    Segment s{e.t_max, t, e.last_v, v, id};
    std::vector<char> val(detail::segment_width);
    detail::encode_segment(val.data(), s);
    tree_->insert(s.t_l, val.data());
    e.t_max = t;
    e.last_v = v;
    e.total += segment_integral(s, {s.t_l, s.t_r});
    persist_extent(id);
    t_end_ = std::max(t_end_, t);
    flush_header();
  }

  void append(const Segment& seg) { detail::checked_append_segment(*this, seg); }

  std::size_t object_count() const { return m_; }
  Time t_end() const { return t_end_; }
  const ObjectExtent& extent(ObjectId id) const { return extents_[id]; }
  BlockStore& store() { return *store_; }
  const IoStats& stats() const { return store_->stats(); }
  void reset_stats() { store_->reset_stats(); }

 private:
  Exact1Index() = default;

  detail::FixedTable table() const {
    return detail::FixedTable(detail::extent_rec_size, store_->page_size());
  }

  void load_extents_from(const Dataset& ds) {
    extents_.assign(m_ + 1, {});
    for (const auto& p : ds.objects) {
      ObjectExtent e;
      e.t_min = p.t_min();
      e.t_max = p.t_max();
      e.last_v = p.vertices.back().v;
      e.total = polyline_integral(p, {p.t_min(), p.t_max()});
      extents_[p.id] = e;
    }
  }

  std::vector<char> encoded_extents() const {
    std::vector<char> recs(m_ * detail::extent_rec_size);
    for (std::size_t i = 1; i <= m_; ++i)
      detail::encode_extent(recs.data() + (i - 1) * detail::extent_rec_size,
                            extents_[i]);
    return recs;
  }

  ObjectExtent& extent_for_append(ObjectId id, Time t) {
    if (id < 1 || id > m_) throw std::invalid_argument("append: unknown object id");
    ObjectExtent& e = extents_[id];
    if (!(t > e.t_max))
      throw std::invalid_argument("append: time must extend the object");
    return e;
  }

  void persist_extent(ObjectId id) {
    char rec[detail::extent_rec_size];
    detail::encode_extent(rec, extents_[id]);
    table().update_rec(*store_, table_start_, id - 1, rec);
  }

  void flush_header() {
    FileHeader h;
    h.kind = StoreKind::exact1;
    h.page_size = store_->page_size();
    h.entry_width = detail::segment_width;
    h.root_page = tree_->root();
    h.entry_count = tree_->size();
    h.aux[0] = m_;
    h.aux[1] = table_start_;
    h.aux[2] = std::bit_cast<std::uint64_t>(t_end_);
    h.aux[3] = tree_->height();
    h.aux[4] = std::bit_cast<std::uint64_t>(tree_->max_key());
    store_->write_header(h);
  }

  std::unique_ptr<BlockStore> store_;
  std::optional<BPlusTree> tree_;
  std::vector<ObjectExtent> extents_;
  std::size_t m_ = 0;
  std::uint64_t table_start_ = 0;
  Time t_end_ = 0.0;
};

// ---------------------------------------------------------------------------
// Exact2Index

class Exact2Index {
 public:
  // tree entry: key = segment right endpoint; value = segment + prefix mass
  static constexpr std::uint32_t entry_width = detail::segment_width + 8;

  static Exact2Index build(const Dataset& ds, const std::string& path,
                           std::uint32_t page_size = BlockStore::default_page_size) {
    ds.validate();
    Exact2Index ix;
    ix.store_ = std::make_unique<BlockStore>(BlockStore::create(path, page_size));
    ix.m_ = ds.objects.size();
    ix.t_end_ = ds.t_end;
    ix.dirs_.assign(ix.m_ + 1, {});

    detail::FixedTable dir_tbl = ix.dir_table();
    ix.dir_start_ = ix.store_->page_count();
    for (std::uint64_t p = 0; p < dir_tbl.pages_for(ix.m_); ++p)
      ix.store_->allocate_page();

    ix.trees_.reserve(ix.m_ + 1);
    ix.trees_.emplace_back(*ix.store_, entry_width);  // slot 0 unused
    for (const auto& p : ds.objects) {
      std::vector<std::pair<double, std::vector<char>>> es;
      es.reserve(p.segment_count());
      double prefix = 0.0;
      for (std::size_t k = 0; k < p.segment_count(); ++k) {
        Segment s = p.segment(k);
        prefix += segment_integral(s, {s.t_l, s.t_r});
        std::vector<char> v(entry_width);
        detail::encode_segment(v.data(), s);
        detail::st<double>(v.data() + detail::segment_width, prefix);
        es.emplace_back(s.t_r, std::move(v));
      }
      BPlusTree t(*ix.store_, entry_width);
      t.bulk_load(es);
      DirRec d;
      d.root = t.root();
      d.count = t.size();
      d.height = t.height();
      d.ext.t_min = p.t_min();
      d.ext.t_max = p.t_max();
      d.ext.last_v = p.vertices.back().v;
      d.ext.total = prefix;
      ix.dirs_[p.id] = d;
      ix.trees_.push_back(std::move(t));
    }
    // trees were built in id order, slot i belongs to object i
    ix.persist_all_dirs();
    ix.flush_header();
    return ix;
  }

  static Exact2Index open(const std::string& path,
                          CacheMode mode = CacheMode::none,
                          std::size_t cache_pages = 256) {
    Exact2Index ix;
    ix.store_ =
        std::make_unique<BlockStore>(BlockStore::open_file(path, mode, cache_pages));
    FileHeader h = ix.store_->read_header();
    if (h.kind != StoreKind::exact2)
      throw std::runtime_error(path + ": not an EX2 index");
    ix.m_ = h.aux[0];
    ix.dir_start_ = h.aux[1];
    ix.t_end_ = std::bit_cast<double>(h.aux[2]);
    std::vector<char> recs =
        ix.dir_table().read_all(*ix.store_, ix.dir_start_, ix.m_);
    ix.dirs_.assign(ix.m_ + 1, {});
    ix.trees_.reserve(ix.m_ + 1);
    ix.trees_.emplace_back(*ix.store_, entry_width);
    for (std::size_t i = 1; i <= ix.m_; ++i) {
      DirRec d = decode_dir(recs.data() + (i - 1) * dir_rec_size);
      ix.dirs_[i] = d;
      ix.trees_.push_back(BPlusTree::attach(*ix.store_, entry_width, d.root,
                                            d.count, d.height, d.ext.t_max));
    }
    return ix;
  }

  // mass of object id from its first vertex up to time t (clamped)
  double prefix_mass(ObjectId id, Time t) const {
    const DirRec& d = dirs_[id];
    if (t >= d.ext.t_max) return d.ext.total;
    char v[entry_width];
    auto key = trees_[id].search_first_geq(t, v);
    // t < t_max guarantees a hit
    Segment s = detail::decode_segment(v);
    double prefix = detail::ld<double>(v + detail::segment_width);
    return prefix - segment_integral(s, {t, *key});
  }

  RankedAnswer query(const QuerySpec& q) const {
    std::vector<double> scores(m_ + 1, 0.0);
    if (q.window.t2 > q.window.t1)
      for (std::size_t i = 1; i <= m_; ++i)
        scores[i] = prefix_mass(static_cast<ObjectId>(i), q.window.t2) -
                    prefix_mass(static_cast<ObjectId>(i), q.window.t1);
    return detail::rank_scores(scores, m_, q);
  }

  void append_vertex(ObjectId id, Time t, double v) {
    if (id < 1 || id > m_) throw std::invalid_argument("append: unknown object id");
    DirRec& d = dirs_[id];
    if (!(t > d.ext.t_max))
      throw std::invalid_argument("append: time must extend the object");
    Segment s{d.ext.t_max, t, d.ext.last_v, v, id};
    double prefix = d.ext.total + segment_integral(s, {s.t_l, s.t_r});
    char val[entry_width];
    detail::encode_segment(val, s);
    detail::st<double>(val + detail::segment_width, prefix);
    trees_[id].append(t, val);
    d.root = trees_[id].root();
    d.count = trees_[id].size();
    d.height = trees_[id].height();
    d.ext.t_max = t;
    d.ext.last_v = v;
    d.ext.total = prefix;
    persist_dir(id);
    t_end_ = std::max(t_end_, t);
    flush_header();
  }

  void append(const Segment& seg) { detail::checked_append_segment(*this, seg); }

  std::size_t object_count() const { return m_; }
  Time t_end() const { return t_end_; }
  const ObjectExtent& extent(ObjectId id) const { return dirs_[id].ext; }
  BlockStore& store() { return *store_; }
  const IoStats& stats() const { return store_->stats(); }
  void reset_stats() { store_->reset_stats(); }

 private:
  Exact2Index() = default;

  struct DirRec {
    std::uint64_t root = 0;
    std::uint64_t count = 0;
    std::uint32_t height = 0;
    ObjectExtent ext;
  };
  static constexpr std::uint32_t dir_rec_size = 8 + 8 + 4 + 4 + 32;

  static void encode_dir(char* p, const DirRec& d) {
    detail::st<std::uint64_t>(p, d.root);
    detail::st<std::uint64_t>(p + 8, d.count);
    detail::st<std::uint32_t>(p + 16, d.height);
    detail::encode_extent(p + 24, d.ext);
  }
  static DirRec decode_dir(const char* p) {
    DirRec d;
    d.root = detail::ld<std::uint64_t>(p);
    d.count = detail::ld<std::uint64_t>(p + 8);
    d.height = detail::ld<std::uint32_t>(p + 16);
    d.ext = detail::decode_extent(p + 24);
    return d;
  }

  detail::FixedTable dir_table() const {
    return detail::FixedTable(dir_rec_size, store_->page_size());
  }

  void persist_all_dirs() {
    std::vector<char> recs(m_ * dir_rec_size);
    for (std::size_t i = 1; i <= m_; ++i)
      encode_dir(recs.data() + (i - 1) * dir_rec_size, dirs_[i]);
    detail::FixedTable tbl = dir_table();
    std::vector<char> page(store_->page_size(), 0);
    for (std::uint64_t p = 0; p < tbl.pages_for(m_); ++p) {
      std::size_t per = store_->page_size() / dir_rec_size;
      std::memset(page.data(), 0, page.size());
      std::size_t first = p * per;
      std::size_t cnt = std::min<std::size_t>(per, m_ - first);
      std::memcpy(page.data(), recs.data() + first * dir_rec_size,
                  cnt * dir_rec_size);
      store_->write_page(dir_start_ + p, page.data());
    }
  }

  void persist_dir(ObjectId id) {
    char rec[dir_rec_size];
    encode_dir(rec, dirs_[id]);
    dir_table().update_rec(*store_, dir_start_, id - 1, rec);
  }

  void flush_header() {
    FileHeader h;
    h.kind = StoreKind::exact2;
    h.page_size = store_->page_size();
    h.entry_width = entry_width;
    h.root_page = 0;
    std::uint64_t n = 0;
    for (std::size_t i = 1; i <= m_; ++i) n += dirs_[i].count;
    h.entry_count = n;
    h.aux[0] = m_;
    h.aux[1] = dir_start_;
    h.aux[2] = std::bit_cast<std::uint64_t>(t_end_);
    store_->write_header(h);
  }

  std::unique_ptr<BlockStore> store_;
  std::vector<BPlusTree> trees_;  // slot 0 unused
  std::vector<DirRec> dirs_;
  std::size_t m_ = 0;
  std::uint64_t dir_start_ = 0;
  Time t_end_ = 0.0;
};

// ---------------------------------------------------------------------------
// Exact3Index

class Exact3Index {
 public:
  // entry value: segment + prefix mass through it
  static constexpr std::uint32_t entry_width = detail::segment_width + 8;

  static Exact3Index build(const Dataset& ds, const std::string& path,
                           std::uint32_t page_size = BlockStore::default_page_size) {
    ds.validate();
    Exact3Index ix;
    ix.store_ = std::make_unique<BlockStore>(BlockStore::create(path, page_size));
    ix.m_ = ds.objects.size();
    ix.t_end_ = ds.t_end;
    ix.extents_.assign(ix.m_ + 1, {});

    // per-object extent table goes first so its pages never move
    std::vector<char> recs(ix.m_ * detail::extent_rec_size);
    for (const auto& p : ds.objects) {
      ObjectExtent e;
      e.t_min = p.t_min();
      e.t_max = p.t_max();
      e.last_v = p.vertices.back().v;
      e.total = 0.0;  // filled below
      ix.extents_[p.id] = e;
    }

    std::vector<IntervalRec> ivs;
    std::vector<char> vals;
    ivs.reserve(ds.segment_count());
    vals.reserve(ds.segment_count() * entry_width);
    for (const auto& p : ds.objects) {
      double prefix = 0.0;
      for (std::size_t k = 0; k < p.segment_count(); ++k) {
        Segment s = p.segment(k);
        prefix += segment_integral(s, {s.t_l, s.t_r});
        ivs.push_back({s.t_l, s.t_r, k + 1 == p.segment_count()});
        char v[entry_width];
        detail::encode_segment(v, s);
        detail::st<double>(v + detail::segment_width, prefix);
        vals.insert(vals.end(), v, v + entry_width);
      }
      ix.extents_[p.id].total = prefix;
    }
    for (std::size_t i = 1; i <= ix.m_; ++i)
      detail::encode_extent(recs.data() + (i - 1) * detail::extent_rec_size,
                            ix.extents_[i]);
    ix.table_start_ = ix.table().write_all(*ix.store_, recs);

    ix.tree_.emplace(*ix.store_, entry_width);
    ix.tree_->build(std::move(ivs), vals);
    ix.flush_header();
    return ix;
  }

  static Exact3Index open(const std::string& path,
                          CacheMode mode = CacheMode::none,
                          std::size_t cache_pages = 256) {
    Exact3Index ix;
    ix.store_ =
        std::make_unique<BlockStore>(BlockStore::open_file(path, mode, cache_pages));
    FileHeader h = ix.store_->read_header();
    if (h.kind != StoreKind::exact3)
      throw std::runtime_error(path + ": not an EX3 index");
    ix.m_ = h.aux[0];
    ix.table_start_ = h.aux[1];
    ix.t_end_ = std::bit_cast<double>(h.aux[2]);
    ExternalIntervalTree::Layout lay;
    lay.node_start_page = h.root_page;
    lay.list_entries = h.entry_count;
    lay.node_count = h.aux[3];
    lay.list_start_page = h.aux[4];
    lay.height = h.aux[5];
    ix.tail_start_ = h.aux[6];
    ix.tail_count_ = h.aux[7];
    ix.tree_ = ExternalIntervalTree::attach(*ix.store_, entry_width, lay);

    std::vector<char> recs = ix.table().read_all(*ix.store_, ix.table_start_, ix.m_);
    ix.extents_.assign(ix.m_ + 1, {});
    for (std::size_t i = 1; i <= ix.m_; ++i)
      ix.extents_[i] =
          detail::decode_extent(recs.data() + (i - 1) * detail::extent_rec_size);

    // reload the append tail
    std::vector<char> page(ix.store_->page_size());
    std::size_t per = ix.store_->page_size() / tail_entry_size;
    for (std::uint64_t k = 0; k < ix.tail_count_; ++k) {
      if (k % per == 0)
        ix.store_->read_page(ix.tail_start_ + k / per, page.data());
      const char* at = page.data() + (k % per) * tail_entry_size;
      IntervalRec r;
      r.lo = detail::ld<double>(at);
      r.hi = detail::ld<double>(at + 8);
      r.closed_right = detail::ld<std::uint32_t>(at + 16) != 0;
      ix.tree_->append_tail(r, at + 20);
    }
    return ix;
  }

  RankedAnswer query(const QuerySpec& q) const {
    std::vector<double> scores(m_ + 1, 0.0);
    const Time t1 = q.window.t1, t2 = q.window.t2;
    if (m_ > 0 && t2 > t1) {
      std::vector<double> f1(m_ + 1), f2(m_ + 1);
      std::vector<double> lo1(m_ + 1), lo2(m_ + 1);
      std::vector<bool> h1(m_ + 1, false), h2(m_ + 1, false);
      tree_->stab(t1, [&](const IntervalRec& iv, const char* v) {
        ObjectId id = detail::ld<std::uint32_t>(v + 32);
        if (!h1[id] || iv.lo > lo1[id]) {
          h1[id] = true;
          lo1[id] = iv.lo;
          f1[id] = prefix_up_to(v, t1);
        }
      });
      tree_->stab(t2, [&](const IntervalRec& iv, const char* v) {
        ObjectId id = detail::ld<std::uint32_t>(v + 32);
        if (!h2[id] || iv.lo > lo2[id]) {
          h2[id] = true;
          lo2[id] = iv.lo;
          f2[id] = prefix_up_to(v, t2);
        }
      });
      for (std::size_t i = 1; i <= m_; ++i) {
        const ObjectExtent& e = extents_[i];
        double a = h1[i] ? f1[i] : (t1 < e.t_min ? 0.0 : e.total);
        double b = h2[i] ? f2[i] : (t2 < e.t_min ? 0.0 : e.total);
        scores[i] = b - a;
      }
    }
    return detail::rank_scores(scores, m_, q);
  }

  void append_vertex(ObjectId id, Time t, double v) {
    if (id < 1 || id > m_) throw std::invalid_argument("append: unknown object id");
    ObjectExtent& e = extents_[id];
    if (!(t > e.t_max))
      throw std::invalid_argument("append: time must extend the object");
    Segment s{e.t_max, t, e.last_v, v, id};
    double prefix = e.total + segment_integral(s, {s.t_l, s.t_r});
    char val[entry_width];
    detail::encode_segment(val, s);
    detail::st<double>(val + detail::segment_width, prefix);
    IntervalRec r{s.t_l, s.t_r, true};
    tree_->append_tail(r, val);
    persist_tail_entry(r, val);
    e.t_max = t;
    e.last_v = v;
    e.total = prefix;
    char rec[detail::extent_rec_size];
    detail::encode_extent(rec, e);
    table().update_rec(*store_, table_start_, id - 1, rec);
    t_end_ = std::max(t_end_, t);
    flush_header();
  }

  void append(const Segment& seg) { detail::checked_append_segment(*this, seg); }

  std::size_t object_count() const { return m_; }
  Time t_end() const { return t_end_; }
  const ObjectExtent& extent(ObjectId id) const { return extents_[id]; }
  BlockStore& store() { return *store_; }
  const IoStats& stats() const { return store_->stats(); }
  void reset_stats() { store_->reset_stats(); }

 private:
  Exact3Index() = default;

  static constexpr std::size_t tail_entry_size = 20 + entry_width;

  // mass of the entry's object from its first vertex up to t, for t inside
  // the entry's span
  static double prefix_up_to(const char* val, Time t) {
    Segment s = detail::decode_segment(val);
    double prefix = detail::ld<double>(val + detail::segment_width);
    return prefix - segment_integral(s, {t, s.t_r});
  }

  detail::FixedTable table() const {
    return detail::FixedTable(detail::extent_rec_size, store_->page_size());
  }

  void persist_tail_entry(const IntervalRec& r, const char* val) {
    std::size_t per = store_->page_size() / tail_entry_size;
    std::vector<char> page(store_->page_size(), 0);
    std::uint64_t slot = tail_count_ % per;
    std::uint64_t pg;
    if (tail_count_ == 0 || slot == 0) {
      pg = store_->allocate_page();
      if (tail_count_ == 0) tail_start_ = pg;
    } else {
      pg = tail_start_ + tail_count_ / per;
      store_->read_page(pg, page.data());
    }
    char* at = page.data() + slot * tail_entry_size;
    detail::st<double>(at, r.lo);
    detail::st<double>(at + 8, r.hi);
    detail::st<std::uint32_t>(at + 16, r.closed_right ? 1u : 0u);
    std::memcpy(at + 20, val, entry_width);
    store_->write_page(pg, page.data());
    ++tail_count_;
  }

  void flush_header() {
    FileHeader h;
    h.kind = StoreKind::exact3;
    h.page_size = store_->page_size();
    h.entry_width = entry_width;
    const auto& lay = tree_->layout();
    h.root_page = lay.node_start_page;
    h.entry_count = lay.list_entries;
    h.aux[0] = m_;
    h.aux[1] = table_start_;
    h.aux[2] = std::bit_cast<std::uint64_t>(t_end_);
    h.aux[3] = lay.node_count;
    h.aux[4] = lay.list_start_page;
    h.aux[5] = lay.height;
    h.aux[6] = tail_start_;
    h.aux[7] = tail_count_;
    store_->write_header(h);
  }

  std::unique_ptr<BlockStore> store_;
  std::optional<ExternalIntervalTree> tree_;
  std::vector<ObjectExtent> extents_;
  std::size_t m_ = 0;
  std::uint64_t table_start_ = 0;
  std::uint64_t tail_start_ = 0, tail_count_ = 0;
  Time t_end_ = 0.0;
};

}  // namespace trank
