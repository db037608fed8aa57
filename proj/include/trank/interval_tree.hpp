#pragma once

// Static interval tree over half-open intervals [lo, hi), bulk-built into a
// BlockStore, plus a small in-memory append tail for updates.
//
// Shape: classic centered tree. Each node's center is the median left
// endpoint of its entries, so at least the median entry lands on the node
// (every interval contains its own lo) and each child gets at most half the
// entries; height is O(log n) by construction. A node keeps its entries
// twice, sorted ascending by lo and descending by hi, so a stab reads only a
// prefix of one list.
//
// On disk: a packed array of 40-byte node records, then all node lists
// packed back to back. Total size is O(n / page) pages; a stab costs one
// page per visited node record plus the pages of the scanned list prefixes.
//
// An entry may be flagged closed_right, meaning it also contains t == hi;
// the per-object final segments of a series use this so the domain end
// remains stabbable.

#include <trank/block_store.hpp>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <vector>

namespace trank {

struct IntervalRec {
  double lo = 0.0, hi = 0.0;
  bool closed_right = false;

  bool contains(double t) const {
    return lo <= t && (t < hi || (closed_right && t == hi));
  }
};

class ExternalIntervalTree {
 public:
  static constexpr std::size_t node_rec_size = 40;

  struct Layout {
    std::uint64_t node_start_page = 0;
    std::uint64_t node_count = 0;
    std::uint64_t list_start_page = 0;
    std::uint64_t list_entries = 0;
    std::uint64_t height = 0;
  };

  ExternalIntervalTree(BlockStore& store, std::uint32_t value_width)
      : store_(&store), vw_(value_width), esz_(20 + value_width) {}

  static ExternalIntervalTree attach(BlockStore& store,
                                     std::uint32_t value_width,
                                     const Layout& lay) {
    ExternalIntervalTree t(store, value_width);
    t.lay_ = lay;
    return t;
  }

  const Layout& layout() const { return lay_; }

  // values: packed ivs.size() * value_width bytes, parallel to ivs
  void build(std::vector<IntervalRec> ivs, const std::vector<char>& values) {
    if (values.size() != ivs.size() * vw_)
      throw std::invalid_argument("interval values size mismatch");
    for (const auto& iv : ivs)
      if (!(iv.lo < iv.hi))
        throw std::invalid_argument("interval needs lo < hi");

    std::vector<std::uint32_t> order(ivs.size());
    std::iota(order.begin(), order.end(), 0);

    struct Node {
      double center;
      std::int32_t left = -1, right = -1;
      std::vector<std::uint32_t> at;
      std::uint64_t lo_off = 0, hi_off = 0;
    };
    std::vector<Node> nodes;

    // partition [b, e) of order around the median lo; returns node index
    auto make = [&](auto&& self, std::size_t b, std::size_t e,
                    std::uint64_t depth) -> std::int32_t {
      if (b >= e) return -1;
      lay_.height = std::max(lay_.height, depth + 1);
      auto mid = order.begin() + static_cast<long>(b + (e - b) / 2);
      std::nth_element(order.begin() + static_cast<long>(b), mid,
                       order.begin() + static_cast<long>(e),
                       [&](std::uint32_t x, std::uint32_t y) {
                         return ivs[x].lo < ivs[y].lo;
                       });
      double c = ivs[*mid].lo;
      Node nd;
      nd.center = c;
      auto here = std::partition(
          order.begin() + static_cast<long>(b),
          order.begin() + static_cast<long>(e),
          [&](std::uint32_t x) { return ivs[x].contains(c); });
      std::size_t n_at = static_cast<std::size_t>(
          here - (order.begin() + static_cast<long>(b)));
      nd.at.assign(order.begin() + static_cast<long>(b), here);
      auto lefts = std::partition(
          here, order.begin() + static_cast<long>(e),
          [&](std::uint32_t x) { return ivs[x].hi <= c; });
      std::size_t n_left = static_cast<std::size_t>(lefts - here);
      std::int32_t me = static_cast<std::int32_t>(nodes.size());
      nodes.push_back(std::move(nd));
      std::int32_t l = self(self, b + n_at, b + n_at + n_left, depth + 1);
      std::int32_t r = self(self, b + n_at + n_left, e, depth + 1);
      nodes[static_cast<std::size_t>(me)].left = l;
      nodes[static_cast<std::size_t>(me)].right = r;
      return me;
    };
    lay_.height = 0;
    make(make, 0, order.size(), 0);

    lay_.node_count = nodes.size();
    std::uint32_t psz = store_->page_size();
    std::size_t recs_per_page = psz / node_rec_size;
    std::size_t node_pages =
        nodes.empty() ? 0 : (nodes.size() + recs_per_page - 1) / recs_per_page;
    lay_.node_start_page = store_->page_count();
    for (std::size_t i = 0; i < node_pages; ++i) store_->allocate_page();

    // stream the per-node lists; offsets are in entry units
    lay_.list_start_page = store_->page_count();
    std::vector<char> page(psz, 0);
    std::size_t in_page = 0;
    std::uint64_t next_off = 0;
    auto flush = [&] {
      std::uint64_t id = store_->allocate_page();
      store_->write_page(id, page.data());
      std::memset(page.data(), 0, psz);
      in_page = 0;
    };
    auto emit = [&](std::uint32_t idx) {
      char tmp[8 + 8 + 4];
      detail::st<double>(tmp, ivs[idx].lo);
      detail::st<double>(tmp + 8, ivs[idx].hi);
      detail::st<std::uint32_t>(tmp + 16, ivs[idx].closed_right ? 1u : 0u);
      const char* val = values.data() + static_cast<std::size_t>(idx) * vw_;
      auto push_bytes = [&](const char* src, std::size_t n) {
        while (n > 0) {
          std::size_t room = psz - in_page;
          std::size_t take = std::min(room, n);
          std::memcpy(page.data() + in_page, src, take);
          in_page += take;
          src += take;
          n -= take;
          if (in_page == psz) flush();
        }
      };
      push_bytes(tmp, sizeof tmp);
      if (vw_) push_bytes(val, vw_);
      ++next_off;
    };
    for (auto& nd : nodes) {
      std::sort(nd.at.begin(), nd.at.end(), [&](std::uint32_t x, std::uint32_t y) {
        return ivs[x].lo < ivs[y].lo;
      });
      nd.lo_off = next_off;
      for (auto idx : nd.at) emit(idx);
      std::sort(nd.at.begin(), nd.at.end(), [&](std::uint32_t x, std::uint32_t y) {
        return ivs[x].hi > ivs[y].hi;
      });
      nd.hi_off = next_off;
      for (auto idx : nd.at) emit(idx);
    }
    if (in_page > 0) flush();
    lay_.list_entries = next_off;

    // now fill the reserved node-record pages
    std::vector<char> npage(psz, 0);
    for (std::size_t p = 0; p < node_pages; ++p) {
      std::memset(npage.data(), 0, psz);
      for (std::size_t k = 0; k < recs_per_page; ++k) {
        std::size_t i = p * recs_per_page + k;
        if (i >= nodes.size()) break;
        char* at = npage.data() + k * node_rec_size;
        detail::st<double>(at, nodes[i].center);
        detail::st<std::int32_t>(at + 8, nodes[i].left);
        detail::st<std::int32_t>(at + 12, nodes[i].right);
        detail::st<std::uint64_t>(at + 16, nodes[i].lo_off);
        detail::st<std::uint32_t>(at + 24,
                                  static_cast<std::uint32_t>(nodes[i].at.size()));
        detail::st<std::uint64_t>(at + 28, nodes[i].hi_off);
        // shared count: lo and hi lists hold the same entries
        detail::st<std::uint32_t>(at + 36,
                                  static_cast<std::uint32_t>(nodes[i].at.size()));
      }
      store_->write_page(lay_.node_start_page + p, npage.data());
    }
  }

  // visit(rec, value_ptr) for every stored interval containing t
  template <typename Fn>
  void stab(double t, Fn&& visit) const {
    if (lay_.node_count > 0) {
      std::vector<char> npage(store_->page_size());
      std::uint64_t loaded = UINT64_MAX;
      std::size_t recs_per_page = store_->page_size() / node_rec_size;
      std::int32_t cur = 0;
      ListReader lr(*this);
      while (cur >= 0) {
        std::uint64_t pg =
            lay_.node_start_page + static_cast<std::uint64_t>(cur) / recs_per_page;
        if (pg != loaded) {
          store_->read_page(pg, npage.data());
          loaded = pg;
        }
        const char* rec = npage.data() +
                          (static_cast<std::size_t>(cur) % recs_per_page) *
                              node_rec_size;
        double center = detail::ld<double>(rec);
        std::int32_t left = detail::ld<std::int32_t>(rec + 8);
        std::int32_t right = detail::ld<std::int32_t>(rec + 12);
        std::uint64_t lo_off = detail::ld<std::uint64_t>(rec + 16);
        std::uint32_t cnt = detail::ld<std::uint32_t>(rec + 24);
        std::uint64_t hi_off = detail::ld<std::uint64_t>(rec + 28);
        if (t == center) {
          for (std::uint32_t i = 0; i < cnt; ++i) {
            auto [iv, val] = lr.get(lo_off + i);
            visit(iv, val);
          }
          break;
        } else if (t < center) {
          for (std::uint32_t i = 0; i < cnt; ++i) {
            auto [iv, val] = lr.get(lo_off + i);
            if (iv.lo > t) break;
            visit(iv, val);  // lo <= t < center < hi
          }
          cur = left;
        } else {
          for (std::uint32_t i = 0; i < cnt; ++i) {
            auto [iv, val] = lr.get(hi_off + i);
            if (iv.hi < t) break;
            if (iv.contains(t)) visit(iv, val);
          }
          cur = right;
        }
      }
    }
    for (const auto& e : tail_)
      if (e.rec.contains(t)) visit(e.rec, e.value.data());
  }

  // updates land in a sorted in-memory buffer, merged on the next rebuild
  void append_tail(const IntervalRec& rec, const char* value) {
    if (!(rec.lo < rec.hi))
      throw std::invalid_argument("interval needs lo < hi");
    TailEntry e{rec, std::vector<char>(value, value + vw_)};
    auto it = std::upper_bound(tail_.begin(), tail_.end(), e,
                               [](const TailEntry& a, const TailEntry& b) {
                                 return a.rec.lo < b.rec.lo;
                               });
    tail_.insert(it, std::move(e));
  }

  std::size_t tail_size() const { return tail_.size(); }

  template <typename Fn>
  void for_each_tail(Fn&& fn) const {
    for (const auto& e : tail_) fn(e.rec, e.value.data());
  }

 private:
  struct TailEntry {
    IntervalRec rec;
    std::vector<char> value;
  };

  // sequential reader over the packed list region; entries may straddle pages
  class ListReader {
   public:
    explicit ListReader(const ExternalIntervalTree& t)
        : t_(&t), page_(t.store_->page_size()), loaded_(UINT64_MAX) {}

    std::pair<IntervalRec, const char*> get(std::uint64_t entry_idx) {
      std::uint64_t byte = entry_idx * t_->esz_;
      scratch_.resize(t_->esz_);
      for (std::size_t i = 0; i < t_->esz_; ++i) {
        std::uint64_t b = byte + i;
        std::uint64_t pg = t_->lay_.list_start_page + b / t_->store_->page_size();
        if (pg != loaded_) {
          t_->store_->read_page(pg, page_.data());
          loaded_ = pg;
        }
        scratch_[i] =
            page_[static_cast<std::size_t>(b % t_->store_->page_size())];
      }
      IntervalRec r;
      r.lo = detail::ld<double>(scratch_.data());
      r.hi = detail::ld<double>(scratch_.data() + 8);
      r.closed_right = detail::ld<std::uint32_t>(scratch_.data() + 16) != 0;
      return {r, scratch_.data() + 20};
    }

   private:
    const ExternalIntervalTree* t_;
    std::vector<char> page_;
    std::uint64_t loaded_;
    std::vector<char> scratch_;
  };

  BlockStore* store_;
  std::uint32_t vw_;
  std::size_t esz_;
  Layout lay_;
  std::vector<TailEntry> tail_;
};

}  // namespace trank
