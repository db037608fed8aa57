#pragma once

// Page-granular file storage with IO accounting. Every index structure sits
// on one of these; acceptance of the IO-cost claims depends on the counters,
// so by default there is no cache and every logical page access is counted.

#include <bit>
#include <cstdint>
#include <cstring>
#include <list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

namespace trank {

static_assert(std::endian::native == std::endian::little,
              "on-disk format is little-endian");

namespace detail {

template <typename T>
void st(char* p, T v) {
  std::memcpy(p, &v, sizeof v);
}

template <typename T>
T ld(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

}  // namespace detail

struct IoStats {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
};

// structure kind tags stored in file headers
enum class StoreKind : std::uint16_t {
  exact1 = 1,   // EX1: one segment tree
  exact2 = 2,   // EX2: per-object prefix trees
  exact3 = 3,   // EX3: interval tree
  query1 = 4,   // Q1: all-pairs interval lists
  query2 = 5,   // Q2: dyadic interval lists
};

inline const char* store_kind_name(StoreKind k) {
  switch (k) {
    case StoreKind::exact1: return "EX1";
    case StoreKind::exact2: return "EX2";
    case StoreKind::exact3: return "EX3";
    case StoreKind::query1: return "Q1";
    case StoreKind::query2: return "Q2";
  }
  return "?";
}

// page 0, offset 0
struct FileHeader {
  static constexpr char magic[4] = {'T', 'R', 'N', 'K'};
  static constexpr std::uint16_t current_version = 1;
  static constexpr std::size_t aux_slots = 8;

  std::uint16_t version = current_version;
  StoreKind kind = StoreKind::exact1;
  std::uint32_t page_size = 4096;
  std::uint32_t entry_width = 0;
  std::uint64_t root_page = 0;
  std::uint64_t entry_count = 0;
  std::uint64_t aux[aux_slots] = {};  // engine-specific slots

  static constexpr std::size_t byte_size = 4 + 2 + 2 + 4 + 4 + 8 + 8 + 8 * aux_slots;

  void encode(char* p) const {
    std::memcpy(p, magic, 4);
    detail::st<std::uint16_t>(p + 4, version);
    detail::st<std::uint16_t>(p + 6, static_cast<std::uint16_t>(kind));
    detail::st<std::uint32_t>(p + 8, page_size);
    detail::st<std::uint32_t>(p + 12, entry_width);
    detail::st<std::uint64_t>(p + 16, root_page);
    detail::st<std::uint64_t>(p + 24, entry_count);
    for (std::size_t i = 0; i < aux_slots; ++i)
      detail::st<std::uint64_t>(p + 32 + 8 * i, aux[i]);
  }

  static FileHeader decode(const char* p) {
    if (std::memcmp(p, magic, 4) != 0)
      throw std::runtime_error("not an index file (bad magic)");
    FileHeader h;
    h.version = detail::ld<std::uint16_t>(p + 4);
    if (h.version != current_version)
      throw std::runtime_error("unsupported index file version");
    h.kind = static_cast<StoreKind>(detail::ld<std::uint16_t>(p + 6));
    h.page_size = detail::ld<std::uint32_t>(p + 8);
    h.entry_width = detail::ld<std::uint32_t>(p + 12);
    h.root_page = detail::ld<std::uint64_t>(p + 16);
    h.entry_count = detail::ld<std::uint64_t>(p + 24);
    for (std::size_t i = 0; i < aux_slots; ++i)
      h.aux[i] = detail::ld<std::uint64_t>(p + 32 + 8 * i);
    return h;
  }
};

enum class CacheMode { none, lru };

class BlockStore {
 public:
  static constexpr std::uint32_t default_page_size = 4096;

  BlockStore() = default;
  BlockStore(const BlockStore&) = delete;
  BlockStore& operator=(const BlockStore&) = delete;
  BlockStore(BlockStore&& o) noexcept { *this = std::move(o); }
  BlockStore& operator=(BlockStore&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_; o.fd_ = -1;
      page_size_ = o.page_size_;
      page_count_ = o.page_count_;
      stats_ = o.stats_;
      mode_ = o.mode_;
      cache_cap_ = o.cache_cap_;
      lru_ = std::move(o.lru_);
      lru_pos_ = std::move(o.lru_pos_);
    }
    return *this;
  }
  ~BlockStore() { close(); }

  // new file; page 0 is reserved for the header
  static BlockStore create(const std::string& path,
                           std::uint32_t page_size = default_page_size,
                           CacheMode mode = CacheMode::none,
                           std::size_t cache_pages = 256) {
    if (page_size < FileHeader::byte_size || page_size % 512 != 0)
      throw std::invalid_argument("bad page size");
    BlockStore s;
    s.fd_ = ::open(path.c_str(), O_CREAT | O_TRUNC | O_RDWR, 0644);
    if (s.fd_ < 0) throw std::runtime_error("cannot create " + path);
    s.page_size_ = page_size;
    s.page_count_ = 1;
    s.mode_ = mode;
    s.cache_cap_ = cache_pages;
    std::vector<char> zero(page_size, 0);
    FileHeader h;
    h.page_size = page_size;
    h.encode(zero.data());
    if (::pwrite(s.fd_, zero.data(), page_size, 0) !=
        static_cast<ssize_t>(page_size))
      throw std::runtime_error("cannot write header page");
    return s;
  }

  static BlockStore open_file(const std::string& path,
                              CacheMode mode = CacheMode::none,
                              std::size_t cache_pages = 256) {
    BlockStore s;
    s.fd_ = ::open(path.c_str(), O_RDWR);
    if (s.fd_ < 0) throw std::runtime_error("cannot open " + path);
    char raw[FileHeader::byte_size];
    if (::pread(s.fd_, raw, sizeof raw, 0) != static_cast<ssize_t>(sizeof raw))
      throw std::runtime_error("short read on header of " + path);
    FileHeader h = FileHeader::decode(raw);
    s.page_size_ = h.page_size;
    off_t end = ::lseek(s.fd_, 0, SEEK_END);
    s.page_count_ = static_cast<std::uint64_t>(end) / h.page_size;
    s.mode_ = mode;
    s.cache_cap_ = cache_pages;
    return s;
  }

  std::uint32_t page_size() const { return page_size_; }
  std::uint64_t page_count() const { return page_count_; }

  std::uint64_t allocate_page() { return page_count_++; }

  void read_page(std::uint64_t id, char* out) const {
    if (id >= page_count_) throw std::out_of_range("page id out of range");
    if (mode_ == CacheMode::lru) {
      auto it = lru_pos_.find(id);
      if (it != lru_pos_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second);
        std::memcpy(out, it->second->second.data(), page_size_);
        return;  // cache hit: no physical read
      }
    }
    ++stats_.reads;
    ssize_t got = ::pread(fd_, out, page_size_,
                          static_cast<off_t>(id) * page_size_);
    if (got < 0) throw std::runtime_error("page read failed");
    if (got < static_cast<ssize_t>(page_size_))
      std::memset(out + got, 0, page_size_ - got);  // allocated, never written
    if (mode_ == CacheMode::lru) cache_put(id, out);
  }

  void write_page(std::uint64_t id, const char* data) {
    if (id >= page_count_) throw std::out_of_range("page id out of range");
    ++stats_.writes;
    if (::pwrite(fd_, data, page_size_, static_cast<off_t>(id) * page_size_) !=
        static_cast<ssize_t>(page_size_))
      throw std::runtime_error("page write failed");
    if (mode_ == CacheMode::lru && lru_pos_.count(id)) cache_put(id, data);
  }

  FileHeader read_header() const {
    std::vector<char> buf(page_size_);
    read_page(0, buf.data());
    return FileHeader::decode(buf.data());
  }

  void write_header(const FileHeader& h) {
    std::vector<char> buf(page_size_, 0);
    h.encode(buf.data());
    write_page(0, buf.data());
  }

  const IoStats& stats() const { return stats_; }
  void reset_stats() { stats_ = IoStats{}; }

 private:
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void cache_put(std::uint64_t id, const char* data) const {
    auto it = lru_pos_.find(id);
    if (it != lru_pos_.end()) {
      std::memcpy(it->second->second.data(), data, page_size_);
      lru_.splice(lru_.begin(), lru_, it->second);
      return;
    }
    lru_.emplace_front(id, std::vector<char>(data, data + page_size_));
    lru_pos_[id] = lru_.begin();
    if (lru_.size() > cache_cap_) {
      lru_pos_.erase(lru_.back().first);
      lru_.pop_back();
    }
  }

  int fd_ = -1;
  std::uint32_t page_size_ = default_page_size;
  std::uint64_t page_count_ = 0;
  mutable IoStats stats_;
  CacheMode mode_ = CacheMode::none;
  std::size_t cache_cap_ = 0;
  mutable std::list<std::pair<std::uint64_t, std::vector<char>>> lru_;
  mutable std::unordered_map<
      std::uint64_t,
      std::list<std::pair<std::uint64_t, std::vector<char>>>::iterator>
      lru_pos_;
};

}  // namespace trank
