// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <string>
#include <vector>

#include "wealy/encoder.hpp"

namespace wealy {

inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  // ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf, floor),
  // floor = kGradCheckFloor * largest analytic gradient entry over all arrays

  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  const GradCheckEntry* worst() const;
};

/// Compares compute_gradients against central finite differences, element
/// by element. Dropout masks are reproduced exactly from the modes' seeds.
GradCheckReport check_gradients(const EncoderParams<double>& params, const EncoderConfig& config,
                                const BatchLossFn<double>& loss_fn, const std::vector<Matrix<double>>& windows,
                                const std::vector<ForwardMode>& modes, double step = 1e-4);

}  // namespace wealy
