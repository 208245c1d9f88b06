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

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maxconf/executor.hpp"
#include "maxconf/param_space.hpp"
#include "maxconf/scoring.hpp"
#include "maxconf/tuner.hpp"

namespace maxconf {

struct RankedConfigs {
  std::vector<Configuration> configs;
  bool truncated = false;  // fewer than k distinct configurations existed
};

// Orders archive entries by rank inside their generation (ascending), then by
// generation (most recent first), and keeps the first k distinct configs.
RankedConfigs rank_archive(const Archive& archive, std::size_t k);

struct Candidate {
  Configuration config;
  double mse_score = 0;
  std::map<std::string, InstanceResult> per_instance;  // keyed by instance id
  std::map<std::string, std::string> run_keys;         // instance id -> run key
};

// Candidates ordered by score (descending), ties by config id.
struct CandidatePool {
  std::vector<Candidate> candidates;
  BoundsRegistry registry;

  nlohmann::json to_json() const;
  static CandidatePool from_json(const nlohmann::json& j, const ParameterSpace& space);
  void save(const std::filesystem::path& path) const;
  static CandidatePool load(const std::filesystem::path& path, const ParameterSpace& space);
};

struct CompletionStats {
  std::size_t reused = 0;
  std::size_t executed = 0;
};

// Scores every config on every training instance under the MSE score. Archived
// runs are reused (latest generation first); missing pairs run with `seed`.
// Failed runs count as no solution.
CandidatePool complete_and_score(std::span<const Configuration> configs, std::span<const std::string> instances,
                                 const BoundsRegistry& registry, const Archive& archive, Evaluator& evaluator,
                                 std::uint64_t seed, CompletionStats* stats = nullptr,
                                 std::vector<RunRecord>* new_runs = nullptr);

// Recomputes a candidate's score from its stored per-instance outcomes.
double rescore(const Candidate& candidate, const BoundsRegistry& registry);

const Configuration& winner(const CandidatePool& pool);

}  // namespace maxconf
