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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "maxconf/executor.hpp"
#include "maxconf/param_space.hpp"
#include "maxconf/run_record.hpp"
#include "maxconf/scoring.hpp"
#include "maxconf/selection.hpp"

namespace maxconf {

// ---- parallel portfolios -------------------------------------------------

enum class PortfolioKind { Seeds, Configs };

struct PortfolioEntry {
  Configuration config;
  std::uint64_t seed = 0;
};

struct ParallelPortfolio {
  PortfolioKind kind = PortfolioKind::Configs;
  std::vector<PortfolioEntry> entries;
};

// Seed of the i-th portfolio entry derived from a base seed.
std::uint64_t portfolio_seed(std::uint64_t base_seed, std::size_t index);

// Top-n pool candidates, one derived seed each. Throws when the pool is smaller.
ParallelPortfolio build_parallel(const CandidatePool& pool, std::size_t n, std::uint64_t base_seed);
// n distinct derived seeds on one configuration.
ParallelPortfolio build_parallel_seeds(const Configuration& config, std::size_t n, std::uint64_t base_seed);

// Per instance, the best validated cost over the entries; then score_solver.
// Throws naming the first (entry, instance) pair without a run.
double score_parallel(const ParallelPortfolio& portfolio, std::span<const RunRecord> runs,
                      const BoundsRegistry& registry);

// Writes <dir>/entry_NN.sh (takes the instance path as $1) and manifest.json.
void write_parallel_portfolio(const std::filesystem::path& dir, const ParallelPortfolio& portfolio,
                              const ParameterSpace& space, const CommandTemplate& command,
                              const nlohmann::json& provenance = {});

// ---- virtual sequential portfolios ---------------------------------------

struct Schedule {
  std::vector<Configuration> sequence;
  double mtbs = 10;       // maximum time between solutions
  double budget_to = 60;  // global time budget
};

struct Segment {
  std::string config_id;
  double start = 0;
  double stop = 0;
  std::optional<Weight> best_at_stop;  // best bound seen overall when the segment ends
};

struct SimResult {
  std::optional<Weight> bound;
  std::vector<Segment> log;
};

struct SimOptions {
  // Stops a non-final solver that has not reported by this local time.
  // Unset: wait for the first solution until the global budget runs out.
  std::optional<double> first_solution_cap;
};

// Event-driven simulation of running `traces` (one per schedule position, in
// order) under the MTBS switching rule. An event at exactly t + mtbs keeps
// the solver alive; the last solver runs until the budget; events after the
// budget are cut.
SimResult simulate_sequence(std::span<const Trace* const> traces, std::span<const std::string> ids, double mtbs,
                            double budget_to, const SimOptions& options = {});

// Validated traces keyed by (config id, instance id).
class TraceTable {
 public:
  void add(const std::string& config_id, const std::string& instance, Trace trace);
  const Trace* find(const std::string& config_id, const std::string& instance) const;
  const Trace& at(const std::string& config_id, const std::string& instance) const;
  std::size_t size() const { return traces_.size(); }

  // Validated traces of every record, keyed by its config and instance id.
  static TraceTable from_runs(std::span<const RunRecord> runs);

 private:
  std::map<std::pair<std::string, std::string>, Trace> traces_;
};

SimResult simulate_schedule(const Schedule& schedule, const TraceTable& traces, const std::string& instance,
                            const SimOptions& options = {});

struct SearchSettings {
  std::size_t max_len = 3;
  std::vector<double> mtbs_grid{2, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  double budget_to = 60;
  bool allow_repeats = false;
  SimOptions sim;
};

struct SearchResult {
  Schedule best;
  double train_score = 0;
  std::size_t schedules_evaluated = 0;
};

// Exhaustive search over ordered sequences of length 1..max_len (without
// repetition unless allowed) crossed with the MTBS grid. Ties prefer shorter
// sequences, then smaller MTBS, then lexicographically smaller config ids.
SearchResult search_best_schedule(std::span<const Configuration> pool, const TraceTable& traces,
                                  std::span<const std::string> instances, const BoundsRegistry& registry,
                                  const SearchSettings& settings);

struct ScheduleEvaluation {
  std::map<std::string, InstanceResult> per_instance;
  std::map<std::string, std::vector<Segment>> logs;
  double score = 0;
};

ScheduleEvaluation evaluate_schedule(const Schedule& schedule, const TraceTable& traces,
                                     std::span<const std::string> instances, const BoundsRegistry& registry,
                                     const SimOptions& options = {});

nlohmann::json schedule_to_json(const Schedule& schedule, const nlohmann::json& provenance = {});
Schedule schedule_from_json(const nlohmann::json& j, const ParameterSpace& space);

// ---- live sequential runner ----------------------------------------------

struct LiveOutcome {
  InstanceResult result;
  std::vector<Segment> log;
  std::vector<RunRecord> runs;
};

// Runs the schedule on real processes, one solver at a time, applying the
// same switching rule with the harness clock. Carries monitoring overhead the
// simulation does not model.
LiveOutcome run_schedule_live(const Schedule& schedule, const ParameterSpace& space, const CommandTemplate& command,
                              const std::string& instance, std::uint64_t seed, const RunLimits& base_limits);

}  // namespace maxconf
