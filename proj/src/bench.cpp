#include "epiview/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "epiview/attention.hpp"
#include "epiview/geometry.hpp"

namespace epiview::bench {

namespace {

std::pair<geometry::SphericalCamera, geometry::SphericalCamera> random_camera_pair(numerics::Rng& rng) {
  std::uniform_real_distribution<double> elev(-10.0, 40.0);
  std::uniform_real_distribution<double> az(0.0, 360.0);
  for (;;) {
    geometry::SphericalCamera a{elev(rng), az(rng), 2.5};
    geometry::SphericalCamera b{elev(rng), az(rng), 2.5};
    if (geometry::angular_distance_deg(a, b) >= 20.0) return {a, b};
  }
}

}  // namespace

std::vector<BenchRow> run_scaling_bench(std::span<const int> sizes, pipeline::InjectionMode mode, int repetitions,
                                        const BenchOptions& options) {
  if (repetitions < 3) throw std::invalid_argument("bench: repetitions must be >= 3");
  if (mode == pipeline::InjectionMode::off) throw std::invalid_argument("bench: mode must be epipolar or full");
  if (sizes.empty()) throw std::invalid_argument("bench: no sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 2 || (i && sizes[i] <= sizes[i - 1])) throw std::invalid_argument("bench: sizes must ascend from >= 2");
  }
  if (options.channels % options.heads) throw std::invalid_argument("bench: heads must divide channels");

  std::vector<BenchRow> rows;
  for (int L : sizes) {
    numerics::Rng rng(options.seed + static_cast<std::uint64_t>(L));
    attention::AttentionParams params;
    params.heads = options.heads;
    params.head_dim = options.channels / options.heads;
    params.q_proj = numerics::random_linear(options.channels, options.channels, rng);
    params.k_proj = numerics::random_linear(options.channels, options.channels, rng);
    params.v_proj = numerics::random_linear(options.channels, options.channels, rng);
    params.out_proj = numerics::random_linear(options.channels, options.channels, rng);
    const numerics::FeatureMap target = numerics::random_normal(L, L, options.channels, rng);
    const numerics::FeatureMap reference = numerics::random_normal(L, L, options.channels, rng);
    const auto ctx = attention::make_context(reference, params);
    const auto [cam_ref, cam_tgt] = random_camera_pair(rng);
    const auto pose =
        geometry::relative_pose(geometry::camera_on_sphere(cam_ref), geometry::camera_on_sphere(cam_tgt));
    const auto K_feat = geometry::CameraIntrinsics::from_fov(L, L);
    const auto block = attention::EpipolarAttentionBlock::from_self_attention(params);

    BenchRow row;
    row.L = L;
    row.mode = mode;
    row.reps = repetitions;
    std::vector<std::int64_t> times;
    for (int r = 0; r < repetitions; ++r) {
      const auto start = std::chrono::steady_clock::now();
      attention::Retrieval out;
      if (mode == pipeline::InjectionMode::epipolar) {
        out = attention::epipolar_attention(target, ctx, geometry::build_sample_set(pose, K_feat, options.axis), block);
      } else {
        out = attention::full_cross_attention(target, ctx, params);
      }
      times.push_back(
          std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count());
      row.buffer_elems = std::max(row.buffer_elems, out.similarity_elems);
    }
    std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
    row.wall_ns_median = times[times.size() / 2];
    rows.push_back(row);
  }
  return rows;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw std::invalid_argument("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

double buffer_slope(std::span<const BenchRow> rows) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    x.push_back(r.L);
    y.push_back(static_cast<double>(r.buffer_elems));
  }
  return loglog_slope(x, y);
}

double time_slope(std::span<const BenchRow> rows) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    x.push_back(r.L);
    y.push_back(static_cast<double>(std::max<std::int64_t>(r.wall_ns_median, 1)));
  }
  return loglog_slope(x, y);
}

std::string bench_csv(std::span<const BenchRow> rows) {
  std::ostringstream out;
  out << "L,mode,buffer_elems,wall_ns_median,reps\n";
  for (const auto& r : rows) {
    out << r.L << ',' << pipeline::to_string(r.mode) << ',' << r.buffer_elems << ',' << r.wall_ns_median << ','
        << r.reps << '\n';
  }
  return out.str();
}

}  // namespace epiview::bench
