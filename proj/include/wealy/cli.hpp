// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <ostream>

namespace wealy::cli {

/// Entry point of the `wealy` tool. Exit status: 0 success, 1 usage or
/// validation error, 2 I/O or format error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wealy::cli
