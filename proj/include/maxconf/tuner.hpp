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
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maxconf/error.hpp"
#include "maxconf/executor.hpp"
#include "maxconf/param_space.hpp"
#include "maxconf/run_record.hpp"
#include "maxconf/scoring.hpp"

namespace maxconf {

enum class Gender { Competitive, NonCompetitive };

struct Genome {
  Configuration config;
  Gender gender = Gender::Competitive;
  int age = 0;
  int birth_generation = 0;
};

struct Population {
  std::vector<Genome> competitive;
  std::vector<Genome> noncompetitive;
  std::vector<Configuration> elites;  // evaluated every generation

  std::size_t size() const { return competitive.size() + noncompetitive.size(); }
};

struct InstancePolicy {
  enum class Kind { AllInstances, Incremental };
  Kind kind = Kind::AllInstances;
  double start_fraction = 0.2;  // of |instances| at generation 1
  int full_at_generation = 25;

  static InstancePolicy all() { return {}; }
  static InstancePolicy incremental(double start_fraction, int full_at_generation) {
    return {Kind::Incremental, start_fraction, full_at_generation};
  }
};

struct TunerSettings {
  int num_tournaments = 5;
  int population_size = 100;
  double budget_seconds = 3600;  // wall clock
  InstancePolicy instance_policy;
  int max_age = 3;
  double mutation_rate = 0.10;
  std::uint64_t rng_seed = 0;
  int max_generations = 0;     // 0: budget-only termination
  bool default_elite = true;   // inject the default configuration as an elite

  void validate(std::size_t num_instances) const;
};

struct ArchiveEntry {
  Configuration config;
  int generation = 0;
  int rank_in_generation = 0;  // 1-based position inside its mini-tournament
  double mean_cost = 0;
  std::vector<std::string> runs;  // run keys
};

// Every configuration evaluated during tuning, one entry per generation it
// took part in, plus the run records those entries reference.
class Archive {
 public:
  // Throws if (config, generation) is already present.
  void add_entry(ArchiveEntry entry);
  void add_run(const RunRecord& record);

  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  const std::map<std::string, RunRecord>& runs() const { return runs_; }
  const RunRecord* run(const std::string& key) const;
  bool empty() const { return entries_.empty(); }

  // Latest-generation run record of `config_id` on each instance id.
  std::map<std::string, const RunRecord*> latest_runs(const std::string& config_id) const;

  nlohmann::json to_json() const;
  static Archive from_json(const nlohmann::json& j, const ParameterSpace& space);

 private:
  std::vector<ArchiveEntry> entries_;
  std::map<std::string, RunRecord> runs_;
  std::map<std::pair<std::string, int>, std::size_t> index_;
};

// Number of instances used at generation j (>= 1) out of n.
std::size_t instances_at_generation(std::size_t n, int generation, const InstancePolicy& policy);

// Prefix of the fixed ordering of size instances_at_generation(...).
std::vector<std::string> select_instances(std::span<const std::string> ordering, int generation,
                                          const InstancePolicy& policy);

// Splits participants into n groups of near-equal size: elites first, one per
// group, then the remaining participants round-robin after an rng shuffle.
// Participants are deduplicated by configuration id.
std::vector<std::vector<Configuration>> partition_tournaments(std::span<const Configuration> competitive,
                                                             std::span<const Configuration> elites, int n,
                                                             std::mt19937_64& rng);

struct ScoredConfig {
  Configuration config;
  double mean_cost = 0;
};

struct TournamentOutcome {
  std::vector<ScoredConfig> winners;              // ordered by mean cost, then id
  std::vector<std::vector<ScoredConfig>> groups;  // each ordered by mean cost, then id
};

// Ranks each group by mean cost (ties: lower id) and orders the winners.
TournamentOutcome rank_tournaments(const std::vector<std::vector<Configuration>>& groups,
                                   const std::map<std::string, double>& mean_costs);

// partition_tournaments followed by rank_tournaments, with costs supplied by
// `mean_cost` for every distinct participant.
TournamentOutcome run_mini_tournaments(std::span<const Configuration> competitive,
                                       std::span<const Configuration> elites, int n, std::mt19937_64& rng,
                                       const std::function<std::map<std::string, double>(
                                           std::span<const Configuration>)>& mean_cost);

// Uniform crossover of each winner with ceil(|noncompetitive| / |winners|)
// randomly chosen non-competitive partners, per-parameter mutation, and
// constraint repair. Children get a uniformly random gender.
std::vector<Genome> crossover_and_mutate(std::span<const Genome> noncompetitive,
                                         std::span<const Configuration> winners, const ParameterSpace& space,
                                         double mutation_rate, int generation, std::mt19937_64& rng);

// Ages every genome, removes those older than max_age (the current best is
// exempt), adds the offspring, trims the oldest genomes if above
// population_size, and refills with fresh samples if below.
Population aging_and_death(const Configuration& best, Population population, std::vector<Genome> offspring,
                           const ParameterSpace& space, int population_size, int max_age, int generation,
                           std::mt19937_64& rng);

// Serializable tuner state; a checkpoint is written after every generation.
struct TunerState {
  Population population;
  Archive archive;
  std::vector<std::string> instance_order;
  int generation = 0;  // last completed generation
  std::optional<Configuration> best;
  std::string rng_state;
  double elapsed_seconds = 0;

  nlohmann::json to_json() const;
  static TunerState from_json(const nlohmann::json& j, const ParameterSpace& space);
  void save(const std::filesystem::path& path) const;
  static TunerState load(const std::filesystem::path& path, const ParameterSpace& space);
};

struct TuneResult {
  Configuration winner;
  Archive archive;
  int generations = 0;
};

// Raised when no generation completes within the budget.
class TuneError : public Error {
 public:
  TuneError(const std::string& what, Archive partial) : Error(what), partial_(std::move(partial)) {}
  const Archive& partial_archive() const { return partial_; }

 private:
  Archive partial_;
};

struct TuneHooks {
  std::optional<std::filesystem::path> checkpoint;
  std::ostream* progress = nullptr;  // one line per generation
  std::optional<TunerState> resume;
};

// Per-generation instance seed, independent of the genealogy rng.
std::uint64_t generation_seed(std::uint64_t rng_seed, int generation, const std::string& instance);

// Gender-based genetic configuration over `instances` with costs from
// cost_ac against `registry`, until the wall-clock budget (or
// max_generations) is used up.
TuneResult tune(const ParameterSpace& space, std::span<const std::string> instances, const BoundsRegistry& registry,
                const TunerSettings& settings, Evaluator& evaluator, const TuneHooks& hooks = {});

}  // namespace maxconf
