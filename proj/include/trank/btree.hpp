#pragma once

// Disk-resident B+-tree over (f64 key, fixed-width value) entries.
//
// Pages share one layout header:
//   [0]  u8   is_leaf
//   [2]  u16  count            entries (leaf) or children (internal)
//   [8]  u64  prev             leaf-level left sibling, 0 = none
//   [16] u64  next             leaf-level right sibling, 0 = none
//   [24] payload
// Leaf payload: count * (f64 key | value bytes), sorted by key.
// Internal payload: f64 child_min[cap] then u64 child_id[cap]; routing keys
// are the minimum key stored under each child.
//
// Duplicate keys are allowed; searches land on the leftmost duplicate.
// Bulk load packs leaves full, so every leaf is at least half full except
// possibly the last. Page id 0 is the file header and doubles as "null".

#include <trank/block_store.hpp>

#include <algorithm>
#include <cstring>
#include <optional>
#include <vector>

namespace trank {

class BPlusTree {
 public:
  static constexpr std::size_t node_header = 24;

  BPlusTree(BlockStore& store, std::uint32_t value_width)
      : store_(&store), vw_(value_width) {
    leaf_cap_ = (store.page_size() - node_header) / (8 + vw_);
    inner_cap_ = (store.page_size() - node_header) / 16;
    if (leaf_cap_ < 2 || inner_cap_ < 2)
      throw std::invalid_argument("page too small for entry width");
  }

  // reopen a tree previously built in this store
  static BPlusTree attach(BlockStore& store, std::uint32_t value_width,
                          std::uint64_t root, std::uint64_t count) {
    BPlusTree t(store, value_width);
    t.root_ = root;
    t.count_ = count;
    if (root != 0) {
      std::vector<char> buf(store.page_size());
      std::uint64_t id = root;
      t.height_ = 1;
      store.read_page(id, buf.data());
      while (!is_leaf(buf.data())) {
        id = t.child_id(buf.data(), node_count(buf.data()) - 1);
        store.read_page(id, buf.data());
        ++t.height_;
      }
      t.max_key_ = t.lkey(buf.data(), node_count(buf.data()) - 1);
    }
    return t;
  }

  // attach with externally persisted geometry; costs no page reads
  static BPlusTree attach(BlockStore& store, std::uint32_t value_width,
                          std::uint64_t root, std::uint64_t count,
                          std::uint32_t height, double max_key) {
    BPlusTree t(store, value_width);
    t.root_ = root;
    t.count_ = count;
    t.height_ = height;
    t.max_key_ = max_key;
    return t;
  }

  std::uint64_t root() const { return root_; }
  std::uint64_t size() const { return count_; }
  std::uint32_t height() const { return height_; }
  std::uint32_t leaf_capacity() const { return leaf_cap_; }
  double max_key() const { return max_key_; }

  struct EntryRef {
    double key;
    const char* value;  // vw_ bytes, valid only during the callback
  };

  // entries must be sorted by key (duplicates fine)
  void bulk_load(const std::vector<std::pair<double, std::vector<char>>>& es) {
    for (std::size_t i = 1; i < es.size(); ++i)
      if (es[i - 1].first > es[i].first)
        throw std::invalid_argument("bulk_load input not sorted");
    root_ = 0;
    height_ = 0;
    count_ = es.size();
    if (es.empty()) return;

    std::vector<char> buf(store_->page_size());
    std::vector<std::pair<double, std::uint64_t>> level;  // (min key, page)
    std::size_t n_leaves = (es.size() + leaf_cap_ - 1) / leaf_cap_;
    std::uint64_t first_leaf = 0;
    for (std::size_t l = 0; l < n_leaves; ++l) {
      std::uint64_t id = store_->allocate_page();
      if (l == 0) first_leaf = id;
    }
    std::size_t pos = 0;
    for (std::size_t l = 0; l < n_leaves; ++l) {
      std::uint64_t id = first_leaf + l;
      std::size_t take = std::min<std::size_t>(leaf_cap_, es.size() - pos);
      std::memset(buf.data(), 0, buf.size());
      detail::st<std::uint8_t>(buf.data(), 1);
      detail::st<std::uint16_t>(buf.data() + 2,
                                static_cast<std::uint16_t>(take));
      detail::st<std::uint64_t>(buf.data() + 8, l == 0 ? 0 : id - 1);
      detail::st<std::uint64_t>(buf.data() + 16,
                                l + 1 == n_leaves ? 0 : id + 1);
      for (std::size_t i = 0; i < take; ++i) {
        char* at = buf.data() + node_header + i * (8 + vw_);
        detail::st<double>(at, es[pos + i].first);
        if (vw_)
          std::memcpy(at + 8, es[pos + i].second.data(), vw_);
      }
      store_->write_page(id, buf.data());
      level.emplace_back(es[pos].first, id);
      pos += take;
    }
    max_key_ = es.back().first;
    height_ = 1;

    while (level.size() > 1) {
      std::vector<std::pair<double, std::uint64_t>> up;
      for (std::size_t at = 0; at < level.size(); at += inner_cap_) {
        std::size_t take = std::min<std::size_t>(inner_cap_, level.size() - at);
        std::uint64_t id = store_->allocate_page();
        std::memset(buf.data(), 0, buf.size());
        detail::st<std::uint8_t>(buf.data(), 0);
        detail::st<std::uint16_t>(buf.data() + 2,
                                  static_cast<std::uint16_t>(take));
        for (std::size_t i = 0; i < take; ++i) {
          detail::st<double>(buf.data() + node_header + 8 * i,
                             level[at + i].first);
          detail::st<std::uint64_t>(
              buf.data() + node_header + 8 * inner_cap_ + 8 * i,
              level[at + i].second);
        }
        store_->write_page(id, buf.data());
        up.emplace_back(level[at].first, id);
      }
      level = std::move(up);
      ++height_;
    }
    root_ = level.front().second;
  }

  // Forward/backward entry cursor. Moving across a leaf boundary costs one
  // page read, everything else is free.
  class Cursor {
   public:
    bool valid() const { return leaf_ != 0; }
    double key() const { return tree_->lkey(buf_.data(), slot_); }
    const char* value() const {
      return buf_.data() + node_header + slot_ * (8 + tree_->vw_) + 8;
    }

    bool next() {
      if (!valid()) return false;
      if (++slot_ < n_) return true;
      std::uint64_t nx = detail::ld<std::uint64_t>(buf_.data() + 16);
      if (nx == 0) {
        leaf_ = 0;
        return false;
      }
      load(nx);
      slot_ = 0;
      return n_ > 0;
    }

    bool prev() {
      if (!valid()) return false;
      if (slot_ > 0) {
        --slot_;
        return true;
      }
      std::uint64_t pv = detail::ld<std::uint64_t>(buf_.data() + 8);
      if (pv == 0) {
        leaf_ = 0;
        return false;
      }
      load(pv);
      slot_ = n_ - 1;
      return n_ > 0;
    }

   private:
    friend class BPlusTree;
    Cursor(const BPlusTree* t, std::uint64_t leaf, std::size_t slot,
           std::vector<char> buf)
        : tree_(t), leaf_(leaf), slot_(slot), buf_(std::move(buf)) {
      if (leaf_) n_ = node_count(buf_.data());
    }
    void load(std::uint64_t id) {
      tree_->store_->read_page(id, buf_.data());
      leaf_ = id;
      n_ = node_count(buf_.data());
    }

    const BPlusTree* tree_ = nullptr;
    std::uint64_t leaf_ = 0;
    std::size_t slot_ = 0, n_ = 0;
    std::vector<char> buf_;
  };

  // cursor at the leftmost entry with key >= q; invalid if none
  Cursor lower_bound(double q) const {
    if (root_ == 0) return Cursor(this, 0, 0, {});
    std::vector<char> buf(store_->page_size());
    std::uint64_t id = descend(q, buf, nullptr);
    std::size_t n = node_count(buf.data());
    std::size_t slot = leaf_lower_bound(buf.data(), n, q);
    Cursor c(this, id, slot, std::move(buf));
    if (slot == n) {
      // everything here is smaller; answer is the next leaf's first entry
      c.slot_ = n == 0 ? 0 : n - 1;
      std::uint64_t nx = detail::ld<std::uint64_t>(c.buf_.data() + 16);
      if (nx == 0) return Cursor(this, 0, 0, {});
      c.load(nx);
      c.slot_ = 0;
      return c;
    }
    // duplicates of q may spill into earlier leaves
    while (c.slot_ == 0) {
      std::uint64_t pv = detail::ld<std::uint64_t>(c.buf_.data() + 8);
      if (pv == 0) break;
      std::vector<char> pbuf(store_->page_size());
      store_->read_page(pv, pbuf.data());
      std::size_t pn = node_count(pbuf.data());
      if (pn == 0 || lkey(pbuf.data(), pn - 1) < q) break;
      c.buf_ = std::move(pbuf);
      c.leaf_ = pv;
      c.n_ = pn;
      c.slot_ = leaf_lower_bound(c.buf_.data(), pn, q);
    }
    return c;
  }

  // cursor at the last entry; invalid on an empty tree
  Cursor last() const {
    if (root_ == 0) return Cursor(this, 0, 0, {});
    std::vector<char> buf(store_->page_size());
    std::uint64_t id = root_;
    store_->read_page(id, buf.data());
    while (!is_leaf(buf.data())) {
      id = child_id(buf.data(), node_count(buf.data()) - 1);
      store_->read_page(id, buf.data());
    }
    std::size_t n = node_count(buf.data());
    return Cursor(this, id, n - 1, std::move(buf));
  }

  // smallest-keyed entry with key >= q, or nullopt
  std::optional<double> search_first_geq(double q, char* value_out = nullptr) const {
    Cursor c = lower_bound(q);
    if (!c.valid()) return std::nullopt;
    if (value_out && vw_) std::memcpy(value_out, c.value(), vw_);
    return c.key();
  }

  // visit all entries with from <= key <= to, in key order
  template <typename Fn>
  void range_scan(double from, double to, Fn&& visit) const {
    for (Cursor c = lower_bound(from); c.valid() && c.key() <= to; c.next())
      visit(c.key(), c.value());
  }

  // ordered insert; splits propagate toward the root
  void insert(double key, const char* value) {
    if (root_ == 0) {
      std::vector<char> buf(store_->page_size(), 0);
      std::uint64_t id = store_->allocate_page();
      detail::st<std::uint8_t>(buf.data(), 1);
      detail::st<std::uint16_t>(buf.data() + 2, 1);
      char* at = buf.data() + node_header;
      detail::st<double>(at, key);
      if (vw_) std::memcpy(at + 8, value, vw_);
      store_->write_page(id, buf.data());
      root_ = id;
      height_ = 1;
      count_ = 1;
      max_key_ = key;
      return;
    }
    std::vector<std::pair<std::uint64_t, std::size_t>> path;  // (page, slot)
    std::vector<char> buf(store_->page_size());
    std::uint64_t id = descend(key, buf, &path);
    insert_into_leaf(id, buf, key, value, path);
    ++count_;
    max_key_ = std::max(max_key_, key);
  }

  // append-at-current-time contract: key must not precede the maximum
  void append(double key, const char* value) {
    if (count_ > 0 && key < max_key_)
      throw std::invalid_argument("append key below current maximum");
    insert(key, value);
  }

 private:
  static bool is_leaf(const char* p) { return detail::ld<std::uint8_t>(p) != 0; }
  static std::size_t node_count(const char* p) {
    return detail::ld<std::uint16_t>(p + 2);
  }
  double lkey(const char* p, std::size_t i) const {
    return detail::ld<double>(p + node_header + i * (8 + vw_));
  }
  static double inner_min(const char* p, std::size_t i) {
    return detail::ld<double>(p + node_header + 8 * i);
  }
  std::uint64_t inner_child(const char* p, std::size_t i) const {
    return detail::ld<std::uint64_t>(p + node_header + 8 * inner_cap_ + 8 * i);
  }
  std::uint64_t child_id(const char* p, std::size_t i) const {
    return inner_child(p, i);
  }
  std::size_t leaf_lower_bound(const char* p, std::size_t n, double q) const {
    std::size_t lo = 0, hi = n;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (lkey(p, mid) < q)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  // route to the last child whose stored min <= q (clamped to the first)
  std::size_t route(const char* p, double q) const {
    std::size_t n = node_count(p), lo = 0, hi = n;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (inner_min(p, mid) <= q)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo == 0 ? 0 : lo - 1;
  }

  std::uint64_t descend(double q, std::vector<char>& buf,
                        std::vector<std::pair<std::uint64_t, std::size_t>>* path) const {
    std::uint64_t id = root_;
    store_->read_page(id, buf.data());
    while (!is_leaf(buf.data())) {
      std::size_t slot = route(buf.data(), q);
      if (path) path->emplace_back(id, slot);
      id = child_id(buf.data(), slot);
      store_->read_page(id, buf.data());
    }
    return id;
  }

  void insert_into_leaf(std::uint64_t id, std::vector<char>& buf, double key,
                        const char* value,
                        std::vector<std::pair<std::uint64_t, std::size_t>>& path) {
    std::size_t n = node_count(buf.data());
    std::size_t esz = 8 + vw_;
    std::size_t pos = 0;
    while (pos < n && lkey(buf.data(), pos) <= key) ++pos;  // after duplicates
    if (n < leaf_cap_) {
      char* base = buf.data() + node_header;
      std::memmove(base + (pos + 1) * esz, base + pos * esz, (n - pos) * esz);
      detail::st<double>(base + pos * esz, key);
      if (vw_) std::memcpy(base + pos * esz + 8, value, vw_);
      detail::st<std::uint16_t>(buf.data() + 2,
                                static_cast<std::uint16_t>(n + 1));
      store_->write_page(id, buf.data());
      return;
    }

    // split: gather n+1 entries, left keeps the first half
    std::vector<char> merged((n + 1) * esz);
    const char* base = buf.data() + node_header;
    std::memcpy(merged.data(), base, pos * esz);
    detail::st<double>(merged.data() + pos * esz, key);
    if (vw_) std::memcpy(merged.data() + pos * esz + 8, value, vw_);
    std::memcpy(merged.data() + (pos + 1) * esz, base + pos * esz,
                (n - pos) * esz);
    std::size_t left_n = (n + 2) / 2, right_n = n + 1 - left_n;

    std::uint64_t right_id = store_->allocate_page();
    std::vector<char> rbuf(store_->page_size(), 0);
    detail::st<std::uint8_t>(rbuf.data(), 1);
    detail::st<std::uint16_t>(rbuf.data() + 2,
                              static_cast<std::uint16_t>(right_n));
    detail::st<std::uint64_t>(rbuf.data() + 8, id);
    std::uint64_t old_next = detail::ld<std::uint64_t>(buf.data() + 16);
    detail::st<std::uint64_t>(rbuf.data() + 16, old_next);
    std::memcpy(rbuf.data() + node_header, merged.data() + left_n * esz,
                right_n * esz);
    store_->write_page(right_id, rbuf.data());

    detail::st<std::uint16_t>(buf.data() + 2,
                              static_cast<std::uint16_t>(left_n));
    detail::st<std::uint64_t>(buf.data() + 16, right_id);
    std::memcpy(buf.data() + node_header, merged.data(), left_n * esz);
    store_->write_page(id, buf.data());

    if (old_next != 0) {
      std::vector<char> nbuf(store_->page_size());
      store_->read_page(old_next, nbuf.data());
      detail::st<std::uint64_t>(nbuf.data() + 8, right_id);
      store_->write_page(old_next, nbuf.data());
    }

    double up_key = detail::ld<double>(merged.data() + left_n * esz);
    propagate_split(up_key, right_id, path);
  }

  void propagate_split(double key, std::uint64_t child,
                       std::vector<std::pair<std::uint64_t, std::size_t>>& path) {
    std::vector<char> buf(store_->page_size());
    while (!path.empty()) {
      auto [id, slot] = path.back();
      path.pop_back();
      store_->read_page(id, buf.data());
      std::size_t n = node_count(buf.data());
      std::size_t pos = slot + 1;  // new child goes right of the routed slot
      if (n < inner_cap_) {
        char* mins = buf.data() + node_header;
        char* kids = buf.data() + node_header + 8 * inner_cap_;
        std::memmove(mins + 8 * (pos + 1), mins + 8 * pos, 8 * (n - pos));
        std::memmove(kids + 8 * (pos + 1), kids + 8 * pos, 8 * (n - pos));
        detail::st<double>(mins + 8 * pos, key);
        detail::st<std::uint64_t>(kids + 8 * pos, child);
        detail::st<std::uint16_t>(buf.data() + 2,
                                  static_cast<std::uint16_t>(n + 1));
        store_->write_page(id, buf.data());
        return;
      }
      std::vector<double> mins(n);
      std::vector<std::uint64_t> kids(n);
      for (std::size_t i = 0; i < n; ++i) {
        mins[i] = inner_min(buf.data(), i);
        kids[i] = inner_child(buf.data(), i);
      }
      mins.insert(mins.begin() + static_cast<long>(pos), key);
      kids.insert(kids.begin() + static_cast<long>(pos), child);
      std::size_t left_n = (n + 2) / 2, right_n = n + 1 - left_n;

      std::uint64_t right_id = store_->allocate_page();
      std::vector<char> rbuf(store_->page_size(), 0);
      detail::st<std::uint8_t>(rbuf.data(), 0);
      detail::st<std::uint16_t>(rbuf.data() + 2,
                                static_cast<std::uint16_t>(right_n));
      for (std::size_t i = 0; i < right_n; ++i) {
        detail::st<double>(rbuf.data() + node_header + 8 * i, mins[left_n + i]);
        detail::st<std::uint64_t>(
            rbuf.data() + node_header + 8 * inner_cap_ + 8 * i,
            kids[left_n + i]);
      }
      store_->write_page(right_id, rbuf.data());

      std::memset(buf.data() + node_header, 0,
                  store_->page_size() - node_header);
      detail::st<std::uint16_t>(buf.data() + 2,
                                static_cast<std::uint16_t>(left_n));
      for (std::size_t i = 0; i < left_n; ++i) {
        detail::st<double>(buf.data() + node_header + 8 * i, mins[i]);
        detail::st<std::uint64_t>(
            buf.data() + node_header + 8 * inner_cap_ + 8 * i, kids[i]);
      }
      store_->write_page(id, buf.data());

      key = mins[left_n];
      child = right_id;
    }

    // split reached the root: grow one level
    std::vector<char> old(store_->page_size());
    store_->read_page(root_, old.data());
    double left_min = is_leaf(old.data()) ? lkey(old.data(), 0)
                                          : inner_min(old.data(), 0);
    std::uint64_t new_root = store_->allocate_page();
    std::vector<char> rb(store_->page_size(), 0);
    detail::st<std::uint8_t>(rb.data(), 0);
    detail::st<std::uint16_t>(rb.data() + 2, 2);
    detail::st<double>(rb.data() + node_header, left_min);
    detail::st<double>(rb.data() + node_header + 8, key);
    detail::st<std::uint64_t>(rb.data() + node_header + 8 * inner_cap_, root_);
    detail::st<std::uint64_t>(rb.data() + node_header + 8 * inner_cap_ + 8,
                              child);
    store_->write_page(new_root, rb.data());
    root_ = new_root;
    ++height_;
  }

  BlockStore* store_;
  std::uint32_t vw_;
  std::uint32_t leaf_cap_ = 0, inner_cap_ = 0;
  std::uint64_t root_ = 0;
  std::uint32_t height_ = 0;
  std::uint64_t count_ = 0;
  double max_key_ = 0.0;
};

}  // namespace trank
