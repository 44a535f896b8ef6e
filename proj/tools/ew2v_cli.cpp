// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#include "ew2v/cli.hpp"

int main(int argc, char** argv) { return ew2v::cli::run_cli(argc, argv); }
