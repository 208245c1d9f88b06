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

#include "maxconf/tuner.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "maxconf/hash.hpp"

namespace maxconf {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr int kMaxRepairAttempts = 1000;

bool by_cost_then_id(const ScoredConfig& a, const ScoredConfig& b) {
  if (a.mean_cost != b.mean_cost) return a.mean_cost < b.mean_cost;
  return a.config.id() < b.config.id();
}

json genome_to_json(const Genome& g) {
  return {{"config", g.config.to_json()},
          {"gender", g.gender == Gender::Competitive ? "competitive" : "noncompetitive"},
          {"age", g.age},
          {"birth_generation", g.birth_generation}};
}

Genome genome_from_json(const json& j, const ParameterSpace& space) {
  Genome g;
  g.config = space.from_json(j.at("config"));
  g.gender = j.at("gender").get<std::string>() == "competitive" ? Gender::Competitive : Gender::NonCompetitive;
  g.age = j.at("age").get<int>();
  g.birth_generation = j.at("birth_generation").get<int>();
  return g;
}

std::vector<Genome>& group_of(Population& pop, Gender g) {
  return g == Gender::Competitive ? pop.competitive : pop.noncompetitive;
}

Population initial_population(const ParameterSpace& space, int size, std::mt19937_64& rng) {
  Population pop;
  for (int i = 0; i < size; ++i) {
    Genome g{sample_config(space, rng), i % 2 == 0 ? Gender::Competitive : Gender::NonCompetitive, 0, 0};
    group_of(pop, g.gender).push_back(std::move(g));
  }
  return pop;
}

}  // namespace

void TunerSettings::validate(std::size_t num_instances) const {
  if (num_instances == 0) throw Error("tuning needs at least one instance");
  if (num_tournaments < 1) throw Error("num_tournaments must be positive");
  if (population_size < 2 * num_tournaments) throw Error("population_size must be at least 2 * num_tournaments");
  if (!(budget_seconds > 0)) throw Error("tuning budget must be positive");
  if (max_age < 1) throw Error("max_age must be positive");
  if (mutation_rate < 0 || mutation_rate > 1) throw Error("mutation_rate must lie in [0, 1]");
  if (max_generations < 0) throw Error("max_generations must be non-negative");
  if (instance_policy.kind == InstancePolicy::Kind::Incremental) {
    if (!(instance_policy.start_fraction > 0) || instance_policy.start_fraction > 1) {
      throw Error("incremental start fraction must lie in (0, 1]");
    }
    if (instance_policy.full_at_generation < 1) throw Error("full_at_generation must be positive");
    if (instance_policy.start_fraction * static_cast<double>(num_instances) < 1 - 1e-9) {
      throw Error("incremental start fraction selects no instance");
    }
  }
}

void Archive::add_entry(ArchiveEntry entry) {
  auto key = std::make_pair(entry.config.id(), entry.generation);
  if (index_.count(key)) {
    throw Error("archive already holds configuration " + key.first + " at generation " + std::to_string(key.second));
  }
  index_.emplace(key, entries_.size());
  entries_.push_back(std::move(entry));
}

void Archive::add_run(const RunRecord& record) { runs_.insert_or_assign(record.key(), record); }

const RunRecord* Archive::run(const std::string& key) const {
  auto it = runs_.find(key);
  return it == runs_.end() ? nullptr : &it->second;
}

std::map<std::string, const RunRecord*> Archive::latest_runs(const std::string& config_id) const {
  std::vector<const ArchiveEntry*> mine;
  for (const auto& e : entries_) {
    if (e.config.id() == config_id) mine.push_back(&e);
  }
  std::stable_sort(mine.begin(), mine.end(),
                   [](const ArchiveEntry* a, const ArchiveEntry* b) { return a->generation > b->generation; });
  std::map<std::string, const RunRecord*> out;
  for (const auto* e : mine) {
    for (const auto& key : e->runs) {
      if (const RunRecord* r = run(key)) out.emplace(instance_id(r->instance), r);
    }
  }
  return out;
}

json Archive::to_json() const {
  json entries = json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"config", e.config.to_json()},
                       {"generation", e.generation},
                       {"rank", e.rank_in_generation},
                       {"mean_cost", e.mean_cost},
                       {"runs", e.runs}});
  }
  json runs = json::array();
  for (const auto& [key, r] : runs_) runs.push_back(maxconf::to_json(r));
  return {{"entries", entries}, {"runs", runs}};
}

Archive Archive::from_json(const json& j, const ParameterSpace& space) {
  Archive a;
  for (const auto& r : j.at("runs")) a.add_run(run_record_from_json(r));
  for (const auto& e : j.at("entries")) {
    a.add_entry({space.from_json(e.at("config")), e.at("generation").get<int>(), e.at("rank").get<int>(),
                 e.at("mean_cost").get<double>(), e.at("runs").get<std::vector<std::string>>()});
  }
  return a;
}

std::size_t instances_at_generation(std::size_t n, int generation, const InstancePolicy& policy) {
  if (n == 0) return 0;
  if (policy.kind == InstancePolicy::Kind::AllInstances) return n;
  const double first = std::max(1.0, std::ceil(policy.start_fraction * static_cast<double>(n) - 1e-9));
  if (generation >= policy.full_at_generation || policy.full_at_generation <= 1) return n;
  const double frac = static_cast<double>(std::max(generation, 1) - 1) / (policy.full_at_generation - 1);
  const auto k = static_cast<std::size_t>(std::llround(first + (static_cast<double>(n) - first) * frac));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<std::string> select_instances(std::span<const std::string> ordering, int generation,
                                          const InstancePolicy& policy) {
  const std::size_t k = instances_at_generation(ordering.size(), generation, policy);
  return {ordering.begin(), ordering.begin() + static_cast<std::ptrdiff_t>(k)};
}

std::vector<std::vector<Configuration>> partition_tournaments(std::span<const Configuration> competitive,
                                                             std::span<const Configuration> elites, int n,
                                                             std::mt19937_64& rng) {
  std::set<std::string> seen;
  std::vector<Configuration> elite_list, others;
  for (const auto& c : elites) {
    if (seen.insert(c.id()).second) elite_list.push_back(c);
  }
  for (const auto& c : competitive) {
    if (seen.insert(c.id()).second) others.push_back(c);
  }
  std::shuffle(others.begin(), others.end(), rng);
  const std::size_t total = elite_list.size() + others.size();
  const std::size_t groups_n = std::min<std::size_t>(static_cast<std::size_t>(std::max(n, 1)), total);
  std::vector<std::vector<Configuration>> groups(groups_n);
  if (groups_n == 0) return groups;
  std::size_t slot = 0;
  for (auto& c : elite_list) groups[slot++ % groups_n].push_back(std::move(c));
  for (auto& c : others) groups[slot++ % groups_n].push_back(std::move(c));
  return groups;
}

TournamentOutcome rank_tournaments(const std::vector<std::vector<Configuration>>& groups,
                                   const std::map<std::string, double>& mean_costs) {
  TournamentOutcome out;
  for (const auto& group : groups) {
    if (group.empty()) continue;
    std::vector<ScoredConfig> scored;
    for (const auto& c : group) {
      auto it = mean_costs.find(c.id());
      if (it == mean_costs.end()) throw Error("no cost for configuration " + c.id());
      scored.push_back({c, it->second});
    }
    std::sort(scored.begin(), scored.end(), by_cost_then_id);
    out.winners.push_back(scored.front());
    out.groups.push_back(std::move(scored));
  }
  std::sort(out.winners.begin(), out.winners.end(), by_cost_then_id);
  return out;
}

TournamentOutcome run_mini_tournaments(std::span<const Configuration> competitive,
                                       std::span<const Configuration> elites, int n, std::mt19937_64& rng,
                                       const std::function<std::map<std::string, double>(
                                           std::span<const Configuration>)>& mean_cost) {
  auto groups = partition_tournaments(competitive, elites, n, rng);
  std::vector<Configuration> participants;
  for (const auto& g : groups) participants.insert(participants.end(), g.begin(), g.end());
  return rank_tournaments(groups, mean_cost(participants));
}

std::vector<Genome> crossover_and_mutate(std::span<const Genome> noncompetitive,
                                         std::span<const Configuration> winners, const ParameterSpace& space,
                                         double mutation_rate, int generation, std::mt19937_64& rng) {
  if (winners.empty()) throw Error("crossover needs at least one winner");
  const std::size_t per_winner =
      noncompetitive.empty() ? 1 : (noncompetitive.size() + winners.size() - 1) / winners.size();
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution mutate(mutation_rate);
  std::uniform_int_distribution<std::size_t> any_param(0, space.params().empty() ? 0 : space.params().size() - 1);

  std::vector<std::size_t> partner_idx(noncompetitive.size());
  std::iota(partner_idx.begin(), partner_idx.end(), std::size_t{0});

  std::vector<Genome> children;
  for (const auto& winner : winners) {
    std::shuffle(partner_idx.begin(), partner_idx.end(), rng);
    for (std::size_t m = 0; m < per_winner; ++m) {
      const Configuration& partner =
          noncompetitive.empty() ? winner : noncompetitive[partner_idx[m % partner_idx.size()]].config;
      std::map<std::string, ParamValue> values;
      for (const auto& p : space.params()) {
        ParamValue v = coin(rng) ? winner.at(p.name) : partner.at(p.name);
        if (mutate(rng)) v = random_value(p, rng);
        values.emplace(p.name, std::move(v));
      }
      int attempts = 0;
      while (space.violates_constraints(values) && attempts < kMaxRepairAttempts) {
        const auto& p = space.params()[any_param(rng)];
        values[p.name] = random_value(p, rng);
        ++attempts;
      }
      const Gender gender = coin(rng) ? Gender::Competitive : Gender::NonCompetitive;
      if (space.violates_constraints(values)) {
        spdlog::warn("generation {}: dropped a child that stayed infeasible after {} repairs", generation,
                     kMaxRepairAttempts);
        continue;
      }
      children.push_back({space.make(std::move(values)), gender, 0, generation});
    }
  }
  return children;
}

Population aging_and_death(const Configuration& best, Population population, std::vector<Genome> offspring,
                           const ParameterSpace& space, int population_size, int max_age, int generation,
                           std::mt19937_64& rng) {
  auto age_and_cull = [&](std::vector<Genome>& group) {
    for (auto& g : group) ++g.age;
    std::erase_if(group, [&](const Genome& g) { return g.age > max_age && g.config.id() != best.id(); });
  };
  age_and_cull(population.competitive);
  age_and_cull(population.noncompetitive);
  for (auto& child : offspring) group_of(population, child.gender).push_back(std::move(child));

  const auto target = static_cast<std::size_t>(population_size);
  if (population.size() > target) {
    struct Slot {
      Gender gender;
      std::size_t index;
      int age;
    };
    std::vector<Slot> removable;
    for (std::size_t i = 0; i < population.competitive.size(); ++i) {
      if (population.competitive[i].config.id() != best.id()) {
        removable.push_back({Gender::Competitive, i, population.competitive[i].age});
      }
    }
    for (std::size_t i = 0; i < population.noncompetitive.size(); ++i) {
      removable.push_back({Gender::NonCompetitive, i, population.noncompetitive[i].age});
    }
    std::shuffle(removable.begin(), removable.end(), rng);
    std::stable_sort(removable.begin(), removable.end(), [](const Slot& a, const Slot& b) { return a.age > b.age; });
    const std::size_t excess = population.size() - target;
    std::vector<bool> drop_comp(population.competitive.size(), false);
    std::vector<bool> drop_non(population.noncompetitive.size(), false);
    for (std::size_t k = 0; k < excess && k < removable.size(); ++k) {
      (removable[k].gender == Gender::Competitive ? drop_comp : drop_non)[removable[k].index] = true;
    }
    auto compact = [](std::vector<Genome>& group, const std::vector<bool>& drop) {
      std::vector<Genome> kept;
      for (std::size_t i = 0; i < group.size(); ++i) {
        if (!drop[i]) kept.push_back(std::move(group[i]));
      }
      group = std::move(kept);
    };
    compact(population.competitive, drop_comp);
    compact(population.noncompetitive, drop_non);
  }
  while (population.size() < target) {
    const Gender g = population.competitive.size() <= population.noncompetitive.size() ? Gender::Competitive
                                                                                        : Gender::NonCompetitive;
    group_of(population, g).push_back({sample_config(space, rng), g, 0, generation});
  }
  return population;
}

json TunerState::to_json() const {
  json comp = json::array(), non = json::array(), elites = json::array();
  for (const auto& g : population.competitive) comp.push_back(genome_to_json(g));
  for (const auto& g : population.noncompetitive) non.push_back(genome_to_json(g));
  for (const auto& c : population.elites) elites.push_back(c.to_json());
  return {{"population", {{"competitive", comp}, {"noncompetitive", non}, {"elites", elites}}},
          {"archive", archive.to_json()},
          {"instance_order", instance_order},
          {"generation", generation},
          {"best", best ? best->to_json() : json(nullptr)},
          {"rng_state", rng_state},
          {"elapsed_seconds", elapsed_seconds}};
}

TunerState TunerState::from_json(const json& j, const ParameterSpace& space) {
  TunerState s;
  const auto& pop = j.at("population");
  for (const auto& g : pop.at("competitive")) s.population.competitive.push_back(genome_from_json(g, space));
  for (const auto& g : pop.at("noncompetitive")) s.population.noncompetitive.push_back(genome_from_json(g, space));
  for (const auto& c : pop.at("elites")) s.population.elites.push_back(space.from_json(c));
  s.archive = Archive::from_json(j.at("archive"), space);
  s.instance_order = j.at("instance_order").get<std::vector<std::string>>();
  s.generation = j.at("generation").get<int>();
  if (!j.at("best").is_null()) s.best = space.from_json(j.at("best"));
  s.rng_state = j.at("rng_state").get<std::string>();
  s.elapsed_seconds = j.at("elapsed_seconds").get<double>();
  return s;
}

void TunerState::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp);
    out << to_json().dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

TunerState TunerState::load(const std::filesystem::path& path, const ParameterSpace& space) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  try {
    return from_json(json::parse(in), space);
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

std::uint64_t generation_seed(std::uint64_t rng_seed, int generation, const std::string& instance) {
  std::uint64_t h = mix64(rng_seed ^ mix64(static_cast<std::uint64_t>(generation)));
  for (unsigned char c : instance_id(instance)) h = mix64(h ^ c);
  return h & 0x7fffffffULL;  // solvers commonly parse 32-bit seeds
}

TuneResult tune(const ParameterSpace& space, std::span<const std::string> instances, const BoundsRegistry& registry,
                const TunerSettings& settings, Evaluator& evaluator, const TuneHooks& hooks) {
  settings.validate(instances.size());
  for (const auto& inst : instances) registry.require(instance_id(inst));

  const auto started = Clock::now();
  const auto deadline = started + std::chrono::duration_cast<Clock::duration>(
                                      std::chrono::duration<double>(settings.budget_seconds));
  std::mt19937_64 rng(settings.rng_seed);
  TunerState state;
  if (hooks.resume) {
    state = *hooks.resume;
    std::istringstream rs(state.rng_state);
    rs >> rng;
  } else {
    state.instance_order.assign(instances.begin(), instances.end());
    std::shuffle(state.instance_order.begin(), state.instance_order.end(), rng);
    state.population = initial_population(space, settings.population_size, rng);
    if (settings.default_elite) state.population.elites.push_back(default_config(space));
  }
  const double elapsed_before = state.elapsed_seconds;

  while (Clock::now() < deadline &&
         (settings.max_generations == 0 || state.generation < settings.max_generations)) {
    const int gen = state.generation + 1;
    const auto gen_instances = select_instances(state.instance_order, gen, settings.instance_policy);

    std::vector<Configuration> competitive;
    for (const auto& g : state.population.competitive) competitive.push_back(g.config);
    auto groups = partition_tournaments(competitive, state.population.elites, settings.num_tournaments, rng);

    // One task per distinct (participant, instance); seeds are fixed per generation.
    std::vector<RunTask> tasks;
    std::map<std::string, std::size_t> task_of_key;
    std::map<std::string, std::vector<std::string>> keys_of_config;
    for (const auto& group : groups) {
      for (const auto& c : group) {
        for (const auto& inst : gen_instances) {
          const std::uint64_t seed = generation_seed(settings.rng_seed, gen, inst);
          const std::string key = run_key(c.id(), inst, seed);
          keys_of_config[c.id()].push_back(key);
          if (task_of_key.emplace(key, tasks.size()).second) tasks.push_back({c, inst, seed});
        }
      }
    }
    auto records = evaluator.evaluate(tasks, deadline);
    if (!records) break;  // budget ran out mid-generation; the generation is discarded

    std::map<std::string, const RunRecord*> by_key;
    for (const auto& r : *records) by_key.emplace(r.key(), &r);
    std::map<std::string, double> mean_costs;
    for (const auto& [config_id, keys] : keys_of_config) {
      double total = 0;
      for (const auto& key : keys) {
        const RunRecord& r = *by_key.at(key);
        total += cost_ac(registry.require(instance_id(r.instance)), r.result());
      }
      mean_costs[config_id] = total / static_cast<double>(keys.size());
    }
    TournamentOutcome outcome = rank_tournaments(groups, mean_costs);

    for (const auto& r : *records) state.archive.add_run(r);
    std::vector<ArchiveEntry> entries;
    for (const auto& group : outcome.groups) {
      for (std::size_t pos = 0; pos < group.size(); ++pos) {
        entries.push_back({group[pos].config, gen, static_cast<int>(pos) + 1, group[pos].mean_cost,
                           keys_of_config.at(group[pos].config.id())});
      }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const ArchiveEntry& a, const ArchiveEntry& b) {
      if (a.rank_in_generation != b.rank_in_generation) return a.rank_in_generation < b.rank_in_generation;
      if (a.mean_cost != b.mean_cost) return a.mean_cost < b.mean_cost;
      return a.config.id() < b.config.id();
    });
    for (auto& e : entries) state.archive.add_entry(std::move(e));

    std::vector<Configuration> winners;
    for (const auto& w : outcome.winners) winners.push_back(w.config);
    const Configuration& best = winners.front();
    auto offspring = crossover_and_mutate(state.population.noncompetitive, winners, space, settings.mutation_rate,
                                          gen, rng);
    state.population = aging_and_death(best, std::move(state.population), std::move(offspring), space,
                                       settings.population_size, settings.max_age, gen, rng);
    state.best = best;
    state.generation = gen;
    state.elapsed_seconds = elapsed_before + std::chrono::duration<double>(Clock::now() - started).count();
    std::ostringstream rs;
    rs << rng;
    state.rng_state = rs.str();

    if (hooks.checkpoint) state.save(*hooks.checkpoint);
    if (hooks.progress) {
      *hooks.progress << "generation " << gen << " instances " << gen_instances.size() << " best_mean_cost "
                      << std::setprecision(6) << outcome.winners.front().mean_cost << " best " << best.id()
                      << " wall_seconds " << std::fixed << std::setprecision(1) << state.elapsed_seconds
                      << std::defaultfloat << '\n';
      hooks.progress->flush();
    }
  }

  if (!state.best) {
    throw TuneError("no generation completed within the tuning budget", std::move(state.archive));
  }
  return {*state.best, std::move(state.archive), state.generation};
}

}  // namespace maxconf
