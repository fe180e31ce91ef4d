#pragma once

// Straight-line double-precision re-evaluation of a layer chain, written
// independently of src/network.cpp. Used as the oracle for forward values and
// (through double finite differences) for gradients.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "abstain/network.hpp"

namespace reftest {

using abstain::LayerKind;
using abstain::LayerSpec;

struct RefValue {
  std::vector<double> data;
  std::vector<std::size_t> shape;  // (c, h, w) or (n)
};

// Smallest gap between the largest and second largest entries over every
// pooling window visited; small gaps make finite differences unreliable.
struct RefStats {
  double min_pool_gap = std::numeric_limits<double>::infinity();
};

inline double ref_softplus(double z) {
  if (z > 30) return z;
  return std::log(1.0 + std::exp(z));
}

/// params: one flat vector per parameter tensor (weight then bias per
/// dense/conv layer), same index layout as abstain::Network.
inline std::vector<double> ref_forward(const std::vector<LayerSpec>& layers,
                                       const std::vector<std::vector<double>>& params,
                                       const std::vector<std::size_t>& input_shape,
                                       const std::vector<double>& x, RefStats* stats = nullptr) {
  RefValue v{x, input_shape};
  std::size_t p = 0;
  for (const auto& L : layers) {
    if (L.kind == LayerKind::dense) {
      const auto& W = params[p];
      const auto& b = params[p + 1];
      p += 2;
      std::vector<double> out(L.out);
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < L.in; ++i) s += W[o * L.in + i] * v.data[i];
        out[o] = s;
      }
      v = {out, {L.out}};
    } else if (L.kind == LayerKind::conv2d) {
      const auto& W = params[p];
      const auto& b = params[p + 1];
      p += 2;
      const std::size_t C = v.shape[0], H = v.shape[1], Wd = v.shape[2], k = L.kernel, s = L.stride;
      const std::size_t OH = (H - k) / s + 1, OW = (Wd - k) / s + 1;
      std::vector<double> out(L.out * OH * OW);
      for (std::size_t o = 0; o < L.out; ++o)
        for (std::size_t i = 0; i < OH; ++i)
          for (std::size_t j = 0; j < OW; ++j) {
            double acc = b[o];
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t a = 0; a < k; ++a)
                for (std::size_t bb = 0; bb < k; ++bb)
                  acc += W[((o * C + c) * k + a) * k + bb] * v.data[(c * H + i * s + a) * Wd + j * s + bb];
            out[(o * OH + i) * OW + j] = acc;
          }
      v = {out, {L.out, OH, OW}};
    } else if (L.kind == LayerKind::maxpool) {
      const std::size_t C = v.shape[0], H = v.shape[1], Wd = v.shape[2], k = L.kernel, s = L.stride;
      const std::size_t OH = (H - k) / s + 1, OW = (Wd - k) / s + 1;
      std::vector<double> out(C * OH * OW);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < OH; ++i)
          for (std::size_t j = 0; j < OW; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            double second = best;
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t bb = 0; bb < k; ++bb) {
                const double val = v.data[(c * H + i * s + a) * Wd + j * s + bb];
                if (val > best) {
                  second = best;
                  best = val;
                } else if (val > second) {
                  second = val;
                }
              }
            if (stats && k * k > 1) stats->min_pool_gap = std::min(stats->min_pool_gap, best - second);
            out[(c * OH + i) * OW + j] = best;
          }
      v = {out, {C, OH, OW}};
    } else {
      for (auto& z : v.data) z = ref_softplus(z);
    }
  }
  return v.data;
}

inline std::vector<std::vector<double>> to_double(const abstain::Parameters& params) {
  std::vector<std::vector<double>> out;
  for (const auto& t : params) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

inline std::vector<double> to_double(const abstain::Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace reftest
