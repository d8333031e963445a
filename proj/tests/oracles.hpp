// Independent reference implementations used as test oracles. They share no
// code with the library beyond the plain data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "epiview/attention.hpp"
#include "epiview/numerics.hpp"

namespace oracle {

using epiview::attention::AttentionParams;
using epiview::numerics::FeatureMap;
using epiview::numerics::LinearMap;

inline std::vector<double> affine(const LinearMap& m, const std::vector<double>& x) {
  std::vector<double> y(m.out_dim, 0.0);
  for (int o = 0; o < m.out_dim; ++o) {
    double s = m.bias.empty() ? 0.0 : m.bias[o];
    for (int i = 0; i < m.in_dim; ++i) s += m.weight[static_cast<std::size_t>(o) * m.in_dim + i] * x[i];
    y[o] = s;
  }
  return y;
}

inline std::vector<double> pixel(const FeatureMap& f, int p) {
  std::vector<double> v(f.channels());
  const int y = p / f.width();
  const int x = p % f.width();
  for (int c = 0; c < f.channels(); ++c) v[c] = f.at(y, x, c);
  return v;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i]);
  for (std::size_t i = 0; i < logits.size(); ++i) w[i] = std::exp(logits[i]) / z;
  return w;
}

// Queries from `target`, keys and values from `reference`, every position
// against every position, heads concatenated, then the output projection.
inline FeatureMap cross_attention(const FeatureMap& target, const FeatureMap& reference, const AttentionParams& p) {
  const int nq = target.height() * target.width();
  const int nk = reference.height() * reference.width();
  const int d = p.head_dim;
  FeatureMap out(target.height(), target.width(), p.out_proj.out_dim);
  std::vector<std::vector<double>> keys, values;
  for (int j = 0; j < nk; ++j) {
    keys.push_back(affine(p.k_proj, pixel(reference, j)));
    values.push_back(affine(p.v_proj, pixel(reference, j)));
  }
  for (int i = 0; i < nq; ++i) {
    const auto q = affine(p.q_proj, pixel(target, i));
    std::vector<double> concat(p.heads * d, 0.0);
    for (int h = 0; h < p.heads; ++h) {
      std::vector<double> logits(nk);
      for (int j = 0; j < nk; ++j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += q[h * d + k] * keys[j][h * d + k];
        logits[j] = s / std::sqrt(static_cast<double>(d));
      }
      const auto w = softmax(logits);
      for (int j = 0; j < nk; ++j) {
        for (int k = 0; k < d; ++k) concat[h * d + k] += w[j] * values[j][h * d + k];
      }
    }
    const auto o = affine(p.out_proj, concat);
    for (int c = 0; c < p.out_proj.out_dim; ++c) out.at(i / target.width(), i % target.width(), c) = o[c];
  }
  return out;
}

inline double mse(const FeatureMap& a, const FeatureMap& b) {
  double s = 0.0;
  int n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        s += d * d;
        ++n;
      }
    }
  }
  return s / n;
}

// Every window visited with direct sums.
inline double ssim(const FeatureMap& a, const FeatureMap& b, int win) {
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y0 = 0; y0 + win <= a.height(); ++y0) {
      for (int x0 = 0; x0 + win <= a.width(); ++x0) {
        double ma = 0, mb = 0;
        for (int y = y0; y < y0 + win; ++y) {
          for (int x = x0; x < x0 + win; ++x) {
            ma += a.at(y, x, c);
            mb += b.at(y, x, c);
          }
        }
        const double n = win * win;
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cov = 0;
        for (int y = y0; y < y0 + win; ++y) {
          for (int x = x0; x < x0 + win; ++x) {
            const double da = a.at(y, x, c) - ma;
            const double db = b.at(y, x, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        }
        va /= n;
        vb /= n;
        cov /= n;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / count;
}

inline double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  double m = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

}  // namespace oracle
