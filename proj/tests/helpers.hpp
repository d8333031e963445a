#pragma once

#include "epiview/attention.hpp"
#include "epiview/numerics.hpp"

namespace helpers {

inline epiview::attention::AttentionParams random_params(int channels, int heads, epiview::numerics::Rng& rng) {
  epiview::attention::AttentionParams p;
  p.heads = heads;
  p.head_dim = channels / heads;
  p.q_proj = epiview::numerics::random_linear(channels, channels, rng);
  p.k_proj = epiview::numerics::random_linear(channels, channels, rng);
  p.v_proj = epiview::numerics::random_linear(channels, channels, rng);
  p.out_proj = epiview::numerics::random_linear(channels, channels, rng);
  return p;
}

}  // namespace helpers
