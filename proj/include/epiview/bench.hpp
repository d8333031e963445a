#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epiview/pipeline.hpp"

namespace epiview::bench {

struct BenchRow {
  int L = 0;
  pipeline::InjectionMode mode = pipeline::InjectionMode::epipolar;
  std::size_t buffer_elems = 0;  // similarity-buffer elements of one head
  std::int64_t wall_ns_median = 0;
  int reps = 0;
};

struct BenchOptions {
  int channels = 8;
  int heads = 1;
  std::uint64_t seed = 7;
  geometry::SampleAxis axis = geometry::SampleAxis::dominant;
};

/// Times one cross-view attention evaluation on an L x L feature grid per
/// size, with random features, random projections and a random camera pair
/// at least 20 degrees apart (so the pose is never degenerate).
std::vector<BenchRow> run_scaling_bench(std::span<const int> sizes, pipeline::InjectionMode mode, int repetitions,
                                        const BenchOptions& options = {});

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

double buffer_slope(std::span<const BenchRow> rows);
double time_slope(std::span<const BenchRow> rows);

/// L,mode,buffer_elems,wall_ns_median,reps
std::string bench_csv(std::span<const BenchRow> rows);

}  // namespace epiview::bench
