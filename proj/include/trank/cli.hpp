#pragma once

// Command-line surface. run_cli drives everything in-process so tests can
// call it with captured streams; tools/trank.cpp is a thin main wrapper.
//
// Commands: gen, ingest, info, build, query, bench, eval. Relative file
// paths resolve against $TRANK_DATA_DIR when it is set. Errors print one
// machine-readable "error: ..." line; exit codes: 0 success, 2 usage or
// argument errors, 1 data and IO errors.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trank/dataset_io.hpp"
#include "trank/eval.hpp"

namespace trank {

namespace detail {

inline std::string fmt_g(double x) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", x);
  return b;
}

inline std::string resolve_path(const std::string& p) {
  if (p.empty()) return p;
  const char* base = std::getenv("TRANK_DATA_DIR");
  if (!base || !*base) return p;
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(base) / fp).string();
}

struct FilePeek {
  bool trnk = false;
  std::uint16_t kind_raw = 0;
};

inline FilePeek peek_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char head[8] = {};
  in.read(head, 8);
  FilePeek p;
  p.trnk = in.gcount() == 8 && std::memcmp(head, "TRNK", 4) == 0;
  if (p.trnk) std::memcpy(&p.kind_raw, head + 6, 2);
  return p;
}

inline Dataset load_dataset(const std::string& path) {
  FilePeek p = peek_file(path);
  if (p.trnk && p.kind_raw != 0)
    throw std::runtime_error(path + " is an index file, expected a dataset");
  return p.trnk ? read_dataset(path) : read_csv_file(path);
}

inline void print_dataset_summary(std::ostream& out, const Dataset& ds) {
  out << "dataset: m=" << ds.objects.size() << " N=" << ds.segment_count()
      << " M=" << fmt_g(total_mass(ds)) << " T=" << fmt_g(ds.t_end) << "\n";
}

inline SynthProfile::Model parse_model(const std::string& s) {
  using Model = SynthProfile::Model;
  if (s == "random_walk_positive") return Model::random_walk_positive;
  if (s == "random_walk_mixed") return Model::random_walk_mixed;
  if (s == "disjoint_support") return Model::disjoint_support;
  if (s == "bursty") return Model::bursty;
  throw std::invalid_argument(
      "unknown model '" + s +
      "' (random_walk_positive, random_walk_mixed, disjoint_support, bursty)");
}

inline Aggregate parse_agg(const std::string& s) {
  if (s == "sum") return Aggregate::sum;
  if (s == "avg") return Aggregate::avg;
  throw std::invalid_argument("unknown aggregate '" + s + "' (sum, avg)");
}

inline MethodTag parse_method(const std::string& s) {
  auto t = method_from_name(s);
  if (!t)
    throw std::invalid_argument(
        "unknown method '" + s +
        "' (exact1, exact2, exact3, appx1b, appx2b, appx1, appx2, appx2plus)");
  return *t;
}

// every engine flavor behind one query call; exactly one member is engaged
struct AnyEngine {
  std::optional<Exact1Index> e1;
  std::optional<Exact2Index> e2;
  std::optional<Exact3Index> e3;
  std::optional<Query1Index> q1;
  std::optional<Query2Index> q2;
  std::optional<Exact2Index> companion;

  RankedAnswer query(const QuerySpec& q) {
    if (e1) return e1->query(q);
    if (e2) return e2->query(q);
    if (e3) return e3->query(q);
    if (q1) return q1->query(q);
    if (q2) return companion ? q2->query_plus(*companion, q) : q2->query(q);
    throw std::logic_error("no engine open");
  }

  std::uint64_t reads() const {
    std::uint64_t n = 0;
    if (e1) n += e1->stats().reads;
    if (e2) n += e2->stats().reads;
    if (e3) n += e3->stats().reads;
    if (q1) n += q1->stats().reads;
    if (q2) n += q2->stats().reads;
    if (companion) n += companion->stats().reads;
    return n;
  }

  void reset_stats() {
    if (e1) e1->reset_stats();
    if (e2) e2->reset_stats();
    if (e3) e3->reset_stats();
    if (q1) q1->reset_stats();
    if (q2) q2->reset_stats();
    if (companion) companion->reset_stats();
  }
};

inline AnyEngine open_index(const std::string& path) {
  FilePeek p = peek_file(path);
  if (!p.trnk || p.kind_raw < 1 || p.kind_raw > 5)
    throw std::runtime_error(path + " is not an index file");
  AnyEngine eng;
  switch (static_cast<StoreKind>(p.kind_raw)) {
    case StoreKind::exact1: eng.e1 = Exact1Index::open(path); break;
    case StoreKind::exact2: eng.e2 = Exact2Index::open(path); break;
    case StoreKind::exact3: eng.e3 = Exact3Index::open(path); break;
    case StoreKind::query1: eng.q1 = Query1Index::open(path); break;
    case StoreKind::query2: {
      eng.q2 = Query2Index::open(path);
      std::string comp = eng.q2->companion_path();
      if (!comp.empty()) eng.companion = Exact2Index::open(comp);
      break;
    }
  }
  return eng;
}

inline std::uint64_t pages_of(const std::string& path, std::uint32_t block) {
  return std::filesystem::file_size(path) / block;
}

struct BuildOutcome {
  AnyEngine eng;
  std::uint64_t pages = 0, reads = 0, writes = 0;
  std::size_t r = 0;
  double epsilon = 0.0;
  double alpha = 1.0;
  double mass = 0.0;
};

inline BuildOutcome build_method(const Dataset& ds, MethodTag tag,
                                 std::optional<double> eps_in,
                                 std::optional<std::size_t> r_target,
                                 std::size_t k_max, std::uint32_t block,
                                 const std::string& out_path) {
  BuildOutcome b;
  if (method_is_exact(tag)) {
    switch (tag) {
      case MethodTag::exact1: b.eng.e1 = Exact1Index::build(ds, out_path, block); break;
      case MethodTag::exact2: b.eng.e2 = Exact2Index::build(ds, out_path, block); break;
      default: b.eng.e3 = Exact3Index::build(ds, out_path, block); break;
    }
    b.reads = b.eng.reads();
    b.writes = b.eng.e1   ? b.eng.e1->stats().writes
               : b.eng.e2 ? b.eng.e2->stats().writes
                          : b.eng.e3->stats().writes;
    b.pages = pages_of(out_path, block);
    b.mass = total_mass(ds);
    return b;
  }

  if (!eps_in && !r_target)
    throw std::invalid_argument(
        "approximate methods need --epsilon or --target-r");
  double eps = eps_in ? *eps_in
                      : epsilon_for_target_r(ds, method_breakpoints(tag), *r_target);
  if (!(eps > 0.0) || eps > 1.0)
    throw std::invalid_argument("epsilon must be in (0, 1]");
  BreakpointSet bps = method_breakpoints(tag) == BreakpointMethod::bp1
                          ? build_breakpoints1(ds, eps)
                          : build_breakpoints2(ds, eps);
  b.r = bps.breakpoints.size();
  b.epsilon = eps;
  b.alpha = guarantee_alpha(tag, b.r);
  b.mass = bps.mass;
  switch (tag) {
    case MethodTag::appx1b:
    case MethodTag::appx1:
      b.eng.q1 = Query1Index::build(ds, bps, k_max, out_path, block);
      b.reads = b.eng.q1->stats().reads;
      b.writes = b.eng.q1->stats().writes;
      b.pages = pages_of(out_path, block);
      break;
    case MethodTag::appx2b:
    case MethodTag::appx2:
      b.eng.q2 = Query2Index::build(ds, bps, k_max, out_path, "", block);
      b.reads = b.eng.q2->stats().reads;
      b.writes = b.eng.q2->stats().writes;
      b.pages = pages_of(out_path, block);
      break;
    default: {
      std::string comp = out_path + ".ex2";
      b.eng.companion = Exact2Index::build(ds, comp, block);
      b.eng.q2 = Query2Index::build(ds, bps, k_max, out_path, comp, block);
      b.reads = b.eng.q2->stats().reads + b.eng.companion->stats().reads;
      b.writes = b.eng.q2->stats().writes + b.eng.companion->stats().writes;
      b.pages = pages_of(out_path, block) + pages_of(comp, block);
      break;
    }
  }
  return b;
}

inline std::vector<QuerySpec> make_workload(const Dataset& ds, std::size_t n,
                                            std::uint64_t seed, std::size_t k,
                                            double frac) {
  if (frac < 0.0 || frac > 1.0)
    throw std::invalid_argument("--frac must be in [0, 1]");
  SynthRng rng(seed);
  std::vector<QuerySpec> qs;
  qs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Time a, b;
    if (frac > 0.0) {
      double len = frac * ds.t_end;
      a = rng.u01() * (ds.t_end - len);
      b = a + len;
    } else {
      a = rng.u01() * ds.t_end;
      b = rng.u01() * ds.t_end;
      if (b < a) std::swap(a, b);
    }
    qs.push_back({k, {a, b}, Aggregate::sum});
  }
  return qs;
}

inline std::string work_path(const std::string& workdir, const std::string& stem) {
  std::filesystem::path dir =
      workdir.empty() ? std::filesystem::temp_directory_path() / "trank_work"
                      : std::filesystem::path(resolve_path(workdir));
  std::filesystem::create_directories(dir);
  return (dir / stem).string();
}

inline void write_report(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << body;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int run_cli(std::vector<std::string> args, std::ostream& out,
                   std::ostream& err) {
  using detail::fmt_g;
  using detail::resolve_path;

  CLI::App app{"temporal top-k toolkit: datasets, indexes, queries, sweeps"};
  app.name("trank");
  app.require_subcommand(0, 1);

  // gen
  struct {
    std::string model = "random_walk_positive", out, format = "bin";
    std::size_t m = 10, n_avg = 10;
    std::uint64_t seed = 1;
    double t_end = 1000.0;
  } g;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--model", g.model,
                  "random_walk_positive | random_walk_mixed | disjoint_support | bursty")
      ->capture_default_str();
  gen->add_option("-m,--objects", g.m, "object count")->capture_default_str();
  gen->add_option("--n-avg", g.n_avg, "average segments per object")
      ->capture_default_str();
  gen->add_option("--seed", g.seed, "generator seed")->capture_default_str();
  gen->add_option("--t-end", g.t_end, "domain end")->capture_default_str();
  gen->add_option("-o,--out", g.out, "output file")->required();
  gen->add_option("--format", g.format, "bin | csv (csv keeps no explicit domain end)")
      ->capture_default_str();

  // ingest
  struct {
    std::string in, out;
  } ing;
  CLI::App* ingest =
      app.add_subcommand("ingest", "convert text rows or binary to canonical binary");
  ingest->add_option("-i,--in", ing.in, "input file (csv rows id,t,value or binary)")
      ->required();
  ingest->add_option("-o,--out", ing.out, "output binary file")->required();

  // info
  struct {
    std::string file;
  } inf;
  CLI::App* info = app.add_subcommand("info", "describe a dataset or index file");
  info->add_option("file,-i,--in", inf.file, "file to describe")->required();

  // build
  struct {
    std::string dataset, method, out;
    double epsilon = 0.0;
    std::size_t target_r = 0, k_max = 200;
    std::uint32_t block = BlockStore::default_page_size;
  } bld;
  CLI::App* build = app.add_subcommand("build", "build an index from a dataset");
  build->add_option("-d,--dataset", bld.dataset, "dataset file")->required();
  build->add_option("-m,--method", bld.method,
                    "exact1|exact2|exact3|appx1b|appx2b|appx1|appx2|appx2plus")
      ->required();
  build->add_option("-o,--out", bld.out, "index file to write")->required();
  CLI::Option* bld_eps =
      build->add_option("--epsilon", bld.epsilon, "approximation budget in (0,1]");
  CLI::Option* bld_r = build->add_option(
      "--target-r", bld.target_r, "choose epsilon so the breakpoint count stays at or under this");
  bld_eps->excludes(bld_r);
  build->add_option("--k-max", bld.k_max, "largest k the index will serve")
      ->capture_default_str();
  build->add_option("--block-size", bld.block, "page size in bytes")
      ->capture_default_str();

  // query
  struct {
    std::string index, agg = "sum";
    std::size_t k = 50;
    double t1 = 0.0, t2 = 0.0;
  } qr;
  CLI::App* query = app.add_subcommand("query", "run one top-k query against an index");
  query->add_option("-i,--index", qr.index, "index file")->required();
  query->add_option("-k", qr.k, "answer size")->capture_default_str();
  query->add_option("--t1", qr.t1, "window start")->required();
  query->add_option("--t2", qr.t2, "window end")->required();
  query->add_option("--agg", qr.agg, "sum | avg")->capture_default_str();

  // bench
  struct {
    std::string dataset, workdir, out;
    std::vector<std::string> methods;
    std::vector<double> epsilons;
    std::vector<std::size_t> targets;
    std::size_t queries = 50, k = 50, k_max = 200;
    std::uint64_t seed = 1;
    double frac = 0.0;
    std::uint32_t block = BlockStore::default_page_size;
  } bn;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "build methods and measure build and query IO");
  bench_cmd->add_option("-d,--dataset", bn.dataset, "dataset file")->required();
  bench_cmd->add_option("--methods", bn.methods, "comma-separated method tags")
      ->required()
      ->delimiter(',');
  CLI::Option* bn_eps = bench_cmd
                            ->add_option("--epsilon", bn.epsilons,
                                         "epsilon grid (one bench point per value)")
                            ->delimiter(',');
  CLI::Option* bn_r = bench_cmd
                          ->add_option("--target-r", bn.targets,
                                       "breakpoint-count grid (one point per value)")
                          ->delimiter(',');
  bn_eps->excludes(bn_r);
  bench_cmd->add_option("--queries", bn.queries, "workload size")->capture_default_str();
  bench_cmd->add_option("--seed", bn.seed, "workload seed")->capture_default_str();
  bench_cmd->add_option("-k", bn.k, "k for every workload query")->capture_default_str();
  bench_cmd->add_option("--k-max", bn.k_max, "k_max for approximate builds")
      ->capture_default_str();
  bench_cmd->add_option("--frac", bn.frac,
                        "fix every window to this fraction of the domain (0 = random)")
      ->capture_default_str();
  bench_cmd->add_option("--block-size", bn.block, "page size in bytes")
      ->capture_default_str();
  bench_cmd->add_option("--workdir", bn.workdir, "directory for index files");
  bench_cmd->add_option("-o,--out", bn.out, "also write the table to this file");

  // eval
  struct {
    std::string dataset, method, workdir, out;
    double epsilon = 0.0;
    std::size_t target_r = 0, queries = 100, k = 50, k_max = 200;
    std::uint64_t seed = 1;
    std::uint32_t block = BlockStore::default_page_size;
  } ev;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "compare a method's answers against the exact oracle");
  eval_cmd->add_option("-d,--dataset", ev.dataset, "dataset file")->required();
  eval_cmd->add_option("-m,--method", ev.method, "method tag")->required();
  CLI::Option* ev_eps =
      eval_cmd->add_option("--epsilon", ev.epsilon, "approximation budget in (0,1]");
  CLI::Option* ev_r =
      eval_cmd->add_option("--target-r", ev.target_r, "breakpoint-count target");
  ev_eps->excludes(ev_r);
  eval_cmd->add_option("--queries", ev.queries, "query count")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "workload seed")->capture_default_str();
  eval_cmd->add_option("-k", ev.k, "answer size")->capture_default_str();
  eval_cmd->add_option("--k-max", ev.k_max, "k_max for approximate builds")
      ->capture_default_str();
  eval_cmd->add_option("--block-size", ev.block, "page size in bytes")
      ->capture_default_str();
  eval_cmd->add_option("--workdir", ev.workdir, "directory for index files");
  eval_cmd->add_option("-o,--out", ev.out, "also write the report to this file");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    int code = e.get_exit_code();
    return code == 0 ? 2 : code;
  }

  try {
    if (gen->parsed()) {
      SynthProfile p;
      p.m = g.m;
      p.n_avg = g.n_avg;
      p.seed = g.seed;
      p.t_end = g.t_end;
      p.model = detail::parse_model(g.model);
      Dataset ds = gen_synthetic(p);
      std::string path = resolve_path(g.out);
      if (g.format == "bin") {
        write_dataset(ds, path);
      } else if (g.format == "csv") {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + path);
        write_csv(ds, f);
      } else {
        throw std::invalid_argument("unknown format '" + g.format + "' (bin, csv)");
      }
      detail::print_dataset_summary(out, ds);
      out << "wrote: " << path << "\n";
      return 0;
    }

    if (ingest->parsed()) {
      Dataset ds = detail::load_dataset(resolve_path(ing.in));
      std::string path = resolve_path(ing.out);
      write_dataset(ds, path);
      detail::print_dataset_summary(out, ds);
      out << "wrote: " << path << "\n";
      return 0;
    }

    if (info->parsed()) {
      std::string path = resolve_path(inf.file);
      detail::FilePeek p = detail::peek_file(path);
      if (!p.trnk || p.kind_raw == 0) {
        detail::print_dataset_summary(out, detail::load_dataset(path));
        return 0;
      }
      BlockStore store = BlockStore::open_file(path);
      FileHeader h = store.read_header();
      out << "index: kind=" << store_kind_name(h.kind)
          << " page_size=" << h.page_size << " pages=" << store.page_count();
      if (h.kind == StoreKind::query1) {
        Query1Index ix = Query1Index::open(path);
        out << " m=" << ix.object_count() << " r=" << ix.breakpoints().breakpoints.size()
            << " k_max=" << ix.k_max() << " list_len=" << ix.list_len()
            << " lists=" << ix.list_count();
      } else if (h.kind == StoreKind::query2) {
        Query2Index ix = Query2Index::open(path);
        out << " m=" << ix.object_count() << " r=" << ix.breakpoints().breakpoints.size()
            << " k_max=" << ix.k_max() << " list_len=" << ix.list_len()
            << " nodes=" << ix.node_count();
        std::string comp = ix.companion_path();
        out << " companion=" << (comp.empty() ? "none" : comp);
      }
      out << "\n";
      return 0;
    }

    if (build->parsed()) {
      Dataset ds = detail::load_dataset(resolve_path(bld.dataset));
      MethodTag tag = detail::parse_method(bld.method);
      std::string path = resolve_path(bld.out);
      std::optional<double> eps;
      std::optional<std::size_t> rt;
      if (bld_eps->count()) eps = bld.epsilon;
      if (bld_r->count()) rt = bld.target_r;
      detail::BuildOutcome b =
          detail::build_method(ds, tag, eps, rt, bld.k_max, bld.block, path);
      out << "build: method=" << method_name(tag) << " file=" << path
          << " pages=" << b.pages << " reads=" << b.reads << " writes=" << b.writes;
      if (!method_is_exact(tag))
        out << " r=" << b.r << " epsilon=" << fmt_g(b.epsilon) << " k_max=" << bld.k_max;
      out << "\n";
      return 0;
    }

    if (query->parsed()) {
      detail::AnyEngine eng = detail::open_index(resolve_path(qr.index));
      QuerySpec q{qr.k, {qr.t1, qr.t2}, detail::parse_agg(qr.agg)};
      eng.reset_stats();
      auto t0 = std::chrono::steady_clock::now();
      RankedAnswer ans = eng.query(q);
      double ms = detail::ms_since(t0);
      for (std::size_t i = 0; i < ans.size(); ++i)
        out << i + 1 << "\t" << ans.entries[i].first << "\t"
            << fmt_g(ans.entries[i].second) << "\n";
      char trail[96];
      std::snprintf(trail, sizeof trail, "# reads=%llu elapsed_ms=%.3f",
                    static_cast<unsigned long long>(eng.reads()), ms);
      out << trail << "\n";
      return 0;
    }

    if (bench_cmd->parsed()) {
      Dataset ds = detail::load_dataset(resolve_path(bn.dataset));
      std::vector<MethodTag> tags;
      for (const auto& s : bn.methods) tags.push_back(detail::parse_method(s));
      auto workload = detail::make_workload(ds, bn.queries, bn.seed, bn.k, bn.frac);
      std::string prefix = detail::work_path(bn.workdir, "bench_idx");

      std::vector<MethodTag> exact_tags, appx_tags;
      for (MethodTag t : tags)
        (method_is_exact(t) ? exact_tags : appx_tags).push_back(t);

      std::vector<BenchRow> rows;
      if (!exact_tags.empty()) {
        auto r = bench(ds, exact_tags, workload, prefix, 0.1, bn.k_max, bn.block);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      if (!appx_tags.empty()) {
        std::vector<double> eps_grid = bn.epsilons;
        if (eps_grid.empty() && bn.targets.empty()) eps_grid.push_back(0.1);
        if (!bn.targets.empty()) {
          for (std::size_t target : bn.targets)
            for (MethodTag t : appx_tags) {
              double e = epsilon_for_target_r(ds, method_breakpoints(t), target);
              auto r = bench(ds, {t}, workload, prefix, e, bn.k_max, bn.block);
              rows.insert(rows.end(), r.begin(), r.end());
            }
        } else {
          for (double e : eps_grid) {
            auto r = bench(ds, appx_tags, workload, prefix, e, bn.k_max, bn.block);
            rows.insert(rows.end(), r.begin(), r.end());
          }
        }
      }

      std::string body = std::string(bench_columns()) + "\n";
      for (const BenchRow& row : rows) body += format_row(row) + "\n";
      out << body;
      if (!bn.out.empty()) detail::write_report(resolve_path(bn.out), body);
      return 0;
    }

    if (eval_cmd->parsed()) {
      Dataset ds = detail::load_dataset(resolve_path(ev.dataset));
      MethodTag tag = detail::parse_method(ev.method);
      std::optional<double> eps;
      std::optional<std::size_t> rt;
      if (ev_eps->count()) eps = ev.epsilon;
      if (ev_r->count()) rt = ev.target_r;
      if (!method_is_exact(tag) && !eps && !rt) eps = 0.1;
      std::string path = detail::work_path(
          ev.workdir, std::string("eval_idx.") + method_name(tag));
      detail::BuildOutcome b =
          detail::build_method(ds, tag, eps, rt, ev.k_max, ev.block, path);

      auto workload = detail::make_workload(ds, ev.queries, ev.seed, ev.k, 0.0);
      std::string body =
          "# query\tk\tt1\tt2\tprecision\tratio\tzero_truth\trankwise\n";
      double sum_p = 0.0, sum_ratio = 0.0, max_dev = 0.0;
      std::size_t zero_total = 0, pass_count = 0;
      for (std::size_t i = 0; i < workload.size(); ++i) {
        const QuerySpec& q = workload[i];
        RankedAnswer ans = b.eng.query(q);
        RankedAnswer truth = brute_force_topk(ds, q);
        QualityReport rep =
            evaluate_answer(ans, ds, q, truth, b.epsilon, b.alpha, b.mass);
        sum_p += rep.precision;
        sum_ratio += rep.ratio;
        max_dev = std::max(max_dev, std::fabs(rep.ratio - 1.0));
        zero_total += rep.zero_truth;
        pass_count += rep.rankwise_pass ? 1 : 0;
        body += std::to_string(i + 1) + "\t" + std::to_string(q.k) + "\t" +
                fmt_g(q.window.t1) + "\t" + fmt_g(q.window.t2) + "\t" +
                fmt_g(rep.precision) + "\t" + fmt_g(rep.ratio) + "\t" +
                std::to_string(rep.zero_truth) + "\t" +
                (rep.rankwise_pass ? "1" : "0") + "\n";
      }
      double n = workload.empty() ? 1.0 : static_cast<double>(workload.size());
      body += "# method=" + std::string(method_name(tag)) +
              " r=" + std::to_string(b.r) + " epsilon=" + fmt_g(b.epsilon) +
              " alpha=" + fmt_g(b.alpha) + "\n";
      body += "# queries=" + std::to_string(workload.size()) +
              " mean_precision=" + fmt_g(sum_p / n) +
              " mean_ratio=" + fmt_g(sum_ratio / n) +
              " max_ratio_dev=" + fmt_g(max_dev) +
              " zero_truth_total=" + std::to_string(zero_total) +
              " rankwise_pass=" + std::to_string(pass_count) + "/" +
              std::to_string(workload.size()) + "\n";
      out << body;
      if (!ev.out.empty()) detail::write_report(resolve_path(ev.out), body);
      return 0;
    }

    err << "error: no command given (see trank --help)\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace trank
