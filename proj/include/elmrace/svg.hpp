// Copyright 2026 The elmrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "elmrace/harness.hpp"
#include "elmrace/raceline.hpp"

namespace elmrace {

// Plots are derived views of the CSV/JSON outputs; emitting them never
// alters the numeric artifacts.

void plot_raceline(const RacelineArtifact& artifact, const std::filesystem::path& file);

void plot_trajectory(const RacelineArtifact& artifact, const RunLog& log,
                     const std::filesystem::path& file);

void plot_speeds(const RacelineArtifact& artifact, const RunLog& log,
                 const std::filesystem::path& file);

void plot_mu(const RunLog& log, const std::filesystem::path& file);

void plot_validation(const FitReport& report, const std::filesystem::path& file);

}  // namespace elmrace
