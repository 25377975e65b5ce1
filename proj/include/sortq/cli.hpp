/*
 * Copyright 2026 The sortq Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SORTQ_CLI_HPP
#define SORTQ_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "sortq/model.hpp"

namespace sortq {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Subcommands: toy, make-data, compress, prune, eval, inspect. `args`
/// excludes the program name. Returns the process exit code.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

/// Token or hidden-state sequences from JSON: {"tokens": [[int...]...]} or
/// {"hidden": [[[row]...]...]}.
CalibrationSet read_calibration_set(const std::string& path);
void write_calibration_set(const CalibrationSet& set, const std::string& path);

}  // namespace sortq

#endif  // SORTQ_CLI_HPP
