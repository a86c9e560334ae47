// Copyright 2026 The dialeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dialeval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Fixed artifact names under --out.
inline constexpr const char* kCheckpointFile = "checkpoint.unrf";
inline constexpr const char* kTrainLogFile = "train_log.jsonl";
inline constexpr const char* kScoredFile = "scored.tsv";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kGridFile = "grid.tsv";
inline constexpr const char* kRunManifestFile = "run.json";

/// Entry point for `dialeval <train|eval|grid> ...`. Returns the process
/// exit code: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parallelism cap from DIALEVAL_THREADS (default: hardware concurrency).
unsigned thread_budget();

}  // namespace dialeval::cli
