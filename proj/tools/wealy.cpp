// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include <iostream>

#include "wealy/cli.hpp"

int main(int argc, char** argv) { return wealy::cli::run(argc, argv, std::cout, std::cerr); }
