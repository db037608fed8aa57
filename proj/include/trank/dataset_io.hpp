#pragma once

// Dataset serialization: a canonical little-endian binary file for fast
// reload, and the text ingestion format (one vertex per row).
//
// Binary layout:
//   [0]  "TRNK"
//   [4]  u16  version (1)
//   [6]  u16  flavor  (0 = dataset; index files store a structure kind here)
//   [8]  u32  object count m
//   [12] u32  reserved
//   [16] u64  total segment count N
//   [24] f64  domain end T
//   then per object: u32 id, u32 vertex count, that many (f64 t, f64 v)

#include <trank/block_store.hpp>
#include <trank/core.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

namespace trank {

inline void write_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  char hdr[32] = {};
  std::memcpy(hdr, FileHeader::magic, 4);
  detail::st<std::uint16_t>(hdr + 4, 1);
  detail::st<std::uint16_t>(hdr + 6, 0);
  detail::st<std::uint32_t>(hdr + 8,
                            static_cast<std::uint32_t>(ds.objects.size()));
  detail::st<std::uint64_t>(hdr + 16, ds.segment_count());
  detail::st<double>(hdr + 24, ds.t_end);
  out.write(hdr, sizeof hdr);
  for (const auto& p : ds.objects) {
    char oh[8];
    detail::st<std::uint32_t>(oh, p.id);
    detail::st<std::uint32_t>(oh + 4,
                              static_cast<std::uint32_t>(p.vertices.size()));
    out.write(oh, sizeof oh);
    for (const auto& v : p.vertices) {
      char vb[16];
      detail::st<double>(vb, v.t);
      detail::st<double>(vb + 8, v.v);
      out.write(vb, sizeof vb);
    }
  }
  if (!out) throw std::runtime_error("short write to " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char hdr[32];
  in.read(hdr, sizeof hdr);
  if (!in || std::memcmp(hdr, FileHeader::magic, 4) != 0)
    throw std::runtime_error(path + ": not a dataset file (bad magic)");
  if (detail::ld<std::uint16_t>(hdr + 4) != 1)
    throw std::runtime_error(path + ": unsupported dataset version");
  if (detail::ld<std::uint16_t>(hdr + 6) != 0)
    throw std::runtime_error(path + ": index file, not a dataset");
  std::uint32_t m = detail::ld<std::uint32_t>(hdr + 8);
  std::uint64_t n = detail::ld<std::uint64_t>(hdr + 16);
  Dataset ds;
  ds.t_end = detail::ld<double>(hdr + 24);
  ds.objects.reserve(m);
  for (std::uint32_t i = 0; i < m; ++i) {
    char oh[8];
    in.read(oh, sizeof oh);
    if (!in) throw std::runtime_error(path + ": truncated object header");
    Polyline p;
    p.id = detail::ld<std::uint32_t>(oh);
    std::uint32_t nv = detail::ld<std::uint32_t>(oh + 4);
    p.vertices.reserve(nv);
    for (std::uint32_t j = 0; j < nv; ++j) {
      char vb[16];
      in.read(vb, sizeof vb);
      if (!in) throw std::runtime_error(path + ": truncated vertex data");
      p.vertices.push_back({detail::ld<double>(vb), detail::ld<double>(vb + 8)});
    }
    ds.objects.push_back(std::move(p));
  }
  ds.validate();
  if (ds.segment_count() != n)
    throw std::runtime_error(path + ": segment count mismatch");
  return ds;
}

// Text rows `object_id,t,value`, one vertex per row. Rows of one object must
// arrive in ascending t; different objects may interleave. Blank lines and
// lines starting with '#' are skipped.
inline Dataset read_csv(std::istream& in) {
  std::map<ObjectId, Polyline> objs;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("row " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos || line[a] == '#') continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
      fail("expected exactly 3 comma-separated fields");
    auto num = [&](std::string s) {
      std::size_t used = 0;
      double x;
      try {
        x = std::stod(s, &used);
      } catch (const std::exception&) {
        fail("bad number '" + s + "'");
        return 0.0;
      }
      while (used < s.size() &&
             (s[used] == ' ' || s[used] == '\t' || s[used] == '\r'))
        ++used;
      if (used != s.size()) fail("bad number '" + s + "'");
      return x;
    };
    double idd = num(line.substr(0, c1));
    double t = num(line.substr(c1 + 1, c2 - c1 - 1));
    double v = num(line.substr(c2 + 1));
    if (idd < 1 || idd != std::floor(idd) || idd > 4294967295.0)
      fail("object id must be a positive integer");
    auto id = static_cast<ObjectId>(idd);
    Polyline& p = objs[id];
    p.id = id;
    if (!p.vertices.empty() && !(t > p.vertices.back().t))
      fail("vertex times for object " + std::to_string(id) +
           " must be strictly increasing");
    p.vertices.push_back({t, v});
  }
  Dataset ds;
  ds.objects.reserve(objs.size());
  double t_end = 0.0;
  for (auto& [id, p] : objs) {
    if (p.vertices.size() < 2)
      throw std::runtime_error("object " + std::to_string(id) +
                               " has fewer than 2 vertices");
    t_end = std::max(t_end, p.t_max());
    ds.objects.push_back(std::move(p));
  }
  ds.t_end = t_end;
  ds.validate();  // enforces dense ids 1..m among other things
  return ds;
}

inline Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in);
}

inline void write_csv(const Dataset& ds, std::ostream& out) {
  out << std::setprecision(17);
  for (const auto& p : ds.objects)
    for (const auto& v : p.vertices)
      out << p.id << ',' << v.t << ',' << v.v << '\n';
}

}  // namespace trank
