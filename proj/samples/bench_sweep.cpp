// Build every index flavor on one synthetic dataset and print the standard
// bench table: build cost, index size, and per-query page reads under a
// fixed random workload. Pages are 4 KiB and query IO is measured with the
// cache disabled, so the numbers are deterministic for a given seed.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <vector>

#include "trank/eval.hpp"

using namespace trank;

int main(int argc, char** argv) {
  SynthProfile profile;
  profile.m = 200;
  profile.n_avg = 100;
  profile.seed = 42;
  profile.t_end = 1000.0;
  if (argc > 1) profile.m = std::strtoull(argv[1], nullptr, 10);
  if (argc > 2) profile.n_avg = std::strtoull(argv[2], nullptr, 10);
  Dataset ds = gen_synthetic(profile);

  std::vector<QuerySpec> workload;
  detail::SynthRng rng(1234);
  for (int i = 0; i < 50; ++i) {
    double a = rng.uniform(0.0, ds.t_end);
    double b = rng.uniform(0.0, ds.t_end);
    if (a > b) std::swap(a, b);
    workload.push_back({10, {a, b}, Aggregate::sum});
  }

  std::vector<MethodTag> methods = {
      MethodTag::exact1, MethodTag::exact2, MethodTag::exact3,
      MethodTag::appx1b, MethodTag::appx1,  MethodTag::appx2b,
      MethodTag::appx2,  MethodTag::appx2plus,
  };

  namespace fs = std::filesystem;
  fs::path dir = "bench_out";
  fs::create_directories(dir);
  std::printf("m=%zu n_avg=%zu segments=%zu queries=%zu\n", profile.m,
              profile.n_avg, ds.segment_count(), workload.size());
  std::printf("%s\n", bench_columns());
  for (const BenchRow& row :
       bench(ds, methods, workload, (dir / "sweep").string(), 0.02, 50))
    std::printf("%s\n", format_row(row).c_str());
  return 0;
}
