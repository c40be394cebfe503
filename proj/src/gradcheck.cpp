// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace wealy {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) {
    m = std::max(m, e.rel_error);
  }
  return m;
}

const GradCheckEntry* GradCheckReport::worst() const {
  const GradCheckEntry* w = nullptr;
  for (const auto& e : entries) {
    if (w == nullptr || e.rel_error > w->rel_error) {
      w = &e;
    }
  }
  return w;
}

GradCheckReport check_gradients(const EncoderParams<double>& params, const EncoderConfig& config,
                                const BatchLossFn<double>& loss_fn, const std::vector<Matrix<double>>& windows,
                                const std::vector<ForwardMode>& modes, double step) {
  const auto analytic = compute_gradients(params, config, loss_fn, windows, modes);

  auto total_loss = [&](const EncoderParams<double>& p) {
    std::vector<RowVector<double>> z;
    z.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
      z.push_back(forward(p, config, windows[i], modes[i]));
    }
    std::vector<RowVector<double>> unused(z.size());
    return loss_fn(z, unused);
  };

  EncoderParams<double> probe = params;
  auto probe_arrays = probe.arrays();
  const auto grad_arrays = analytic.grads.arrays();

  // Arrays whose true gradient is exactly zero (e.g. attention key biases,
  // which softmax cancels) are measured against this floor instead of their
  // own rounding noise.
  double scale = 0.0;
  for (const auto& g : grad_arrays) {
    for (double v : g.values) scale = std::max(scale, std::abs(v));
  }
  const double floor = std::max(kGradCheckFloor * scale, 1e-12);

  GradCheckReport report;
  for (std::size_t a = 0; a < probe_arrays.size(); ++a) {
    auto values = probe_arrays[a].values;
    const auto grad = grad_arrays[a].values;
    double diff = 0.0;
    double na = 0.0;
    double nn = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = total_loss(probe);
      values[i] = saved - step;
      const double down = total_loss(probe);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      diff = std::max(diff, std::abs(numeric - grad[i]));
      na = std::max(na, std::abs(grad[i]));
      nn = std::max(nn, std::abs(numeric));
    }
    report.entries.push_back({probe_arrays[a].name, values.size(), diff / std::max({na, nn, floor})});
  }
  return report;
}

}  // namespace wealy
