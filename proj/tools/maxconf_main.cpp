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

// maxconf: tune, select, build portfolios for and score MaxSAT solvers.
//
// Exit codes
//   0   success (validate: valid model)
//   1   runtime failure (empty archive, pool too small, stale stage, solver errors)
//   2   usage error, unreadable input or invalid scenario
//   10  validate: no solution
//   11  validate: hard clause violated
//   12  validate: malformed output

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "maxconf/campaign.hpp"
#include "maxconf/error.hpp"
#include "maxconf/executor.hpp"
#include "maxconf/hash.hpp"
#include "maxconf/portfolio.hpp"
#include "maxconf/scenario.hpp"
#include "maxconf/selection.hpp"
#include "maxconf/tuner.hpp"
#include "maxconf/wcnf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maxconf;

namespace {

// Bad invocation or unreadable input: exit 2.
struct UsageError : Error {
  using Error::Error;
};

struct Globals {
  std::string workdir = ".";
  std::uint64_t seed = 0;
  bool json = false;
  int workers = 1;
  bool verbose = false;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt_score(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << x;
  return s.str();
}

// The campaign plus the scenario recorded by `tune`.
struct Loaded {
  Campaign campaign;
  Scenario scenario;
};

Loaded open_campaign(const Globals& g) {
  auto campaign = Campaign::open(g.workdir);
  auto path = campaign.scenario_path();
  if (!path) throw Error("no scenario recorded in " + campaign.workdir().string() + "; run `maxconf tune` first");
  auto scenario = load_scenario(*path);
  const std::string recorded = read_json(campaign.workdir() / "campaign.json").value("scenario_hash", "");
  if (!recorded.empty() && file_hash(*path) != recorded) {
    throw Error("scenario " + *path + " changed since tuning; re-run `maxconf tune`");
  }
  return {std::move(campaign), std::move(scenario)};
}

void require_fresh(const Campaign& c, Stage stage, const fs::path& output) {
  if (!c.has(stage)) {
    throw Error("campaign stage '" + std::string(to_string(stage)) + "' has not run");
  }
  if (!fs::exists(output) || file_hash(output) != c.output_hash(stage)) {
    throw Error(output.string() + " does not match the recorded '" + std::string(to_string(stage)) +
                "' stage; re-run that stage");
  }
}

// Run records by key, from the frozen archive first and the run store otherwise.
class RunLookup {
 public:
  RunLookup(const Archive* archive, RunStore store) : archive_(archive), store_(std::move(store)) {}

  std::optional<RunRecord> find(const std::string& key) const {
    if (archive_) {
      if (const auto* r = archive_->run(key)) return *r;
    }
    if (store_.contains(key)) return store_.load(key);
    return std::nullopt;
  }

 private:
  const Archive* archive_;
  RunStore store_;
};

// ---------------------------------------------------------------- validate

int cmd_validate(const Globals& g, const std::string& instance, const std::string& output) {
  WcnfFormula formula;
  try {
    formula = load_wcnf(instance);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::string text;
  if (output == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    text = buf.str();
  } else {
    text = read_file(output);
  }
  const auto verdict = validate_output(formula, text);
  if (g.json) {
    json j{{"instance", instance_id(instance)}, {"verdict", to_string(verdict.status)}};
    j["true_cost"] = verdict.true_cost ? json(*verdict.true_cost) : json(nullptr);
    j["reported_cost"] = verdict.reported_cost ? json(*verdict.reported_cost) : json(nullptr);
    if (!verdict.detail.empty()) j["detail"] = verdict.detail;
    std::cout << j.dump() << '\n';
  } else {
    std::cout << "verdict " << to_string(verdict.status) << '\n';
    if (verdict.true_cost) std::cout << "cost " << *verdict.true_cost << '\n';
    if (verdict.reported_cost) std::cout << "reported " << *verdict.reported_cost << '\n';
    if (!verdict.detail.empty()) std::cerr << verdict.detail << '\n';
  }
  switch (verdict.status) {
    case VerdictStatus::Valid: return 0;
    case VerdictStatus::NoSolution: return 10;
    case VerdictStatus::HardViolation: return 11;
    case VerdictStatus::MalformedOutput: return 12;
  }
  return 1;
}

// ---------------------------------------------------------------- tune

struct TuneArgs {
  std::string scenario;
  double budget = 3600;
  std::string policy;
  double start_fraction = -1;
  int full_at = 0;
  int max_generations = 0;
  int population = 0;
  int tournaments = 0;
  bool resume = false;
};

int cmd_tune(const Globals& g, const TuneArgs& a) {
  auto campaign = Campaign::open(g.workdir);
  std::string scenario_path = a.scenario;
  if (scenario_path.empty()) {
    if (auto p = campaign.scenario_path(); p && a.resume) {
      scenario_path = *p;
    } else {
      throw UsageError("--scenario is required");
    }
  }
  Scenario scenario = load_scenario(scenario_path);

  TunerSettings settings = scenario.tuner;
  settings.budget_seconds = a.budget;
  settings.rng_seed = g.seed;
  settings.max_generations = a.max_generations;
  if (a.population > 0) settings.population_size = a.population;
  if (a.tournaments > 0) settings.num_tournaments = a.tournaments;
  if (a.policy == "all") {
    settings.instance_policy = InstancePolicy::all();
  } else if (a.policy == "incremental") {
    settings.instance_policy.kind = InstancePolicy::Kind::Incremental;
  } else if (!a.policy.empty()) {
    throw UsageError("--policy must be 'all' or 'incremental'");
  }
  if (a.start_fraction >= 0) settings.instance_policy.start_fraction = a.start_fraction;
  if (a.full_at > 0) settings.instance_policy.full_at_generation = a.full_at;
  try {
    settings.validate(scenario.instances.size());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const auto registry = scenario.load_bounds();
  const auto dir = campaign.tune_dir();
  fs::create_directories(dir);
  const auto checkpoint = dir / "checkpoint.json";

  TuneHooks hooks;
  hooks.checkpoint = checkpoint;
  if (a.resume) {
    if (!fs::exists(checkpoint)) throw UsageError("--resume given but " + checkpoint.string() + " does not exist");
    hooks.resume = TunerState::load(checkpoint, scenario.space);
  } else {
    fs::remove(checkpoint);
  }
  std::ofstream progress(dir / "progress.log", a.resume ? std::ios::app : std::ios::trunc);
  hooks.progress = &progress;

  write_text(dir / "bounds.txt", registry.serialize());
  campaign.set_scenario(scenario_path, file_hash(scenario_path));

  check_platform_support();
  ProcessEvaluator evaluator(scenario.space, scenario.command, scenario.limits, g.workers,
                             RunStore(campaign.runs_dir()));
  TuneResult result;
  try {
    result = tune(scenario.space, scenario.instances, registry, settings, evaluator, hooks);
  } catch (const TuneError& e) {
    write_json(dir / "archive.json", e.partial_archive().to_json());
    throw;
  }

  write_json(dir / "archive.json", result.archive.to_json());
  json winner{{"config", result.winner.to_json()},
              {"generations", result.generations},
              {"seed", g.seed},
              {"budget_seconds", settings.budget_seconds},
              {"runs_executed", evaluator.runs_executed()}};
  write_json(dir / "winner.json", winner);

  json settings_json{{"seed", g.seed},
                     {"population", settings.population_size},
                     {"tournaments", settings.num_tournaments},
                     {"max_age", settings.max_age},
                     {"mutation_rate", settings.mutation_rate},
                     {"max_generations", settings.max_generations}};
  const std::string input = short_hash(file_hash(scenario_path) + registry.hash() + settings_json.dump());
  campaign.mark(Stage::Tuned, input, file_hash(dir / "archive.json"), settings_json);
  campaign.save();

  if (g.json) {
    std::cout << winner.dump() << '\n';
  } else {
    std::cout << "winner " << result.winner.id() << " after " << result.generations << " generations\n";
    for (const auto& [name, value] : result.winner.values()) std::cout << "  " << name << " = " << format_value(value) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- select

int cmd_select(const Globals& g, std::size_t k) {
  auto [campaign, scenario] = open_campaign(g);
  const auto archive_path = campaign.tune_dir() / "archive.json";
  require_fresh(campaign, Stage::Tuned, archive_path);
  const auto archive = Archive::from_json(read_json(archive_path), scenario.space);
  if (archive.empty()) {
    spdlog::error("the tuning archive is empty");
    return 1;
  }
  const auto ranked = rank_archive(archive, k);
  if (ranked.truncated) {
    spdlog::warn("archive holds only {} distinct configurations; pool clamped from {}", ranked.configs.size(), k);
  }
  const auto registry = BoundsRegistry::load(campaign.tune_dir() / "bounds.txt");

  check_platform_support();
  ProcessEvaluator evaluator(scenario.space, scenario.command, scenario.limits, g.workers,
                             RunStore(campaign.runs_dir()));
  CompletionStats stats;
  const auto pool =
      complete_and_score(ranked.configs, scenario.instances, registry, archive, evaluator, g.seed, &stats);

  const auto pool_path = campaign.select_dir() / "pool.json";
  pool.save(pool_path);
  json extra{{"k", k}, {"seed", g.seed}, {"reused", stats.reused}, {"executed", stats.executed}};
  campaign.mark(Stage::Selected, short_hash(campaign.output_hash(Stage::Tuned) + extra.dump()), file_hash(pool_path),
                extra);
  campaign.save();

  const auto& best = winner(pool);
  if (g.json) {
    json out{{"winner", best.id()}, {"pool_size", pool.candidates.size()}, {"reused", stats.reused},
             {"executed", stats.executed}};
    std::cout << out.dump() << '\n';
  } else {
    std::cout << "pool of " << pool.candidates.size() << " (" << stats.reused << " runs reused, " << stats.executed
              << " executed)\n";
    for (const auto& c : pool.candidates) std::cout << "  " << c.config.id() << "  " << fmt_score(c.mse_score) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- portfolio

CandidatePool load_pool(const Campaign& c, const Scenario& s) {
  const auto path = c.select_dir() / "pool.json";
  require_fresh(c, Stage::Selected, path);
  return CandidatePool::load(path, s.space);
}

int cmd_portfolio_par(const Globals& g, std::size_t n, const std::string& kind) {
  auto [campaign, scenario] = open_campaign(g);
  const auto pool = load_pool(campaign, scenario);
  if (n == 0) throw UsageError("--n must be positive");
  ParallelPortfolio portfolio;
  if (kind == "configs") {
    if (n > pool.candidates.size()) {
      spdlog::error("pool has only {} candidates; cannot build a portfolio of {}", pool.candidates.size(), n);
      return 1;
    }
    portfolio = build_parallel(pool, n, g.seed);
  } else if (kind == "seeds") {
    portfolio = build_parallel_seeds(winner(pool), n, g.seed);
  } else {
    throw UsageError("--kind must be 'configs' or 'seeds'");
  }
  const auto dir = campaign.portfolio_dir() / "par";
  fs::remove_all(dir);
  json provenance{{"seed", g.seed}, {"pool", campaign.output_hash(Stage::Selected)}, {"n", n}};
  write_parallel_portfolio(dir, portfolio, scenario.space, scenario.command, provenance);
  campaign.mark(Stage::PortfolioBuilt, short_hash(campaign.output_hash(Stage::Selected) + provenance.dump() + kind),
                file_hash(dir / "manifest.json"), {{"mode", "par"}});
  campaign.save();
  if (g.json) {
    std::cout << read_json(dir / "manifest.json").dump() << '\n';
  } else {
    std::cout << "wrote " << portfolio.entries.size() << " launch scripts to " << dir.string() << '\n';
  }
  return 0;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0)) throw std::invalid_argument(item);
      grid.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad --grid value '" + item + "'");
    }
  }
  if (grid.empty()) throw UsageError("--grid is empty");
  return grid;
}

// Training traces for every pool candidate, taken from the runs scored during selection.
TraceTable pool_traces(const CandidatePool& pool, const RunLookup& runs) {
  std::vector<RunRecord> records;
  for (const auto& c : pool.candidates) {
    for (const auto& [inst, key] : c.run_keys) {
      auto r = runs.find(key);
      if (!r) throw Error("run " + key + " of " + c.config.id() + " on " + inst + " is missing from the run store");
      records.push_back(std::move(*r));
    }
  }
  return TraceTable::from_runs(records);
}

int cmd_portfolio_seq(const Globals& g, std::size_t max_len, const std::string& grid, double to, bool repeats,
                      double first_cap) {
  auto [campaign, scenario] = open_campaign(g);
  const auto pool = load_pool(campaign, scenario);
  const auto archive = Archive::from_json(read_json(campaign.tune_dir() / "archive.json"), scenario.space);
  const RunLookup runs(&archive, RunStore(campaign.runs_dir()));
  const auto traces = pool_traces(pool, runs);

  SearchSettings settings;
  settings.max_len = max_len;
  if (!grid.empty()) settings.mtbs_grid = parse_grid(grid);
  settings.budget_to = to;
  settings.allow_repeats = repeats;
  if (first_cap > 0) settings.sim.first_solution_cap = first_cap;
  if (to > scenario.limits.cpu_seconds) {
    spdlog::warn("budget {}s exceeds the {}s cpu limit the training traces were collected under", to,
                 scenario.limits.cpu_seconds);
  }

  std::vector<Configuration> configs;
  for (const auto& c : pool.candidates) configs.push_back(c.config);
  std::vector<std::string> instances;
  for (const auto& inst : scenario.instances) instances.push_back(instance_id(inst));
  const auto result = search_best_schedule(configs, traces, instances, pool.registry, settings);

  json provenance{{"seed", g.seed},
                  {"pool", campaign.output_hash(Stage::Selected)},
                  {"max_len", settings.max_len},
                  {"grid", settings.mtbs_grid},
                  {"allow_repeats", settings.allow_repeats},
                  {"train_score", result.train_score},
                  {"schedules_evaluated", result.schedules_evaluated}};
  if (settings.sim.first_solution_cap) provenance["first_solution_cap"] = *settings.sim.first_solution_cap;
  const auto path = campaign.portfolio_dir() / "seq" / "schedule.json";
  write_json(path, schedule_to_json(result.best, provenance));
  campaign.mark(Stage::PortfolioBuilt, short_hash(campaign.output_hash(Stage::Selected) + provenance.dump()),
                file_hash(path), {{"mode", "seq"}});
  campaign.save();

  if (g.json) {
    std::cout << read_json(path).dump() << '\n';
  } else {
    std::cout << "schedule";
    for (const auto& c : result.best.sequence) std::cout << ' ' << c.id();
    std::cout << " mtbs " << result.best.mtbs << " budget " << result.best.budget_to << '\n';
    std::cout << "train score " << fmt_score(result.train_score) << " over " << result.schedules_evaluated
              << " schedules\n";
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

json segments_json(const std::vector<Segment>& log) {
  json out = json::array();
  for (const auto& s : log) {
    out.push_back({{"config", s.config_id},
                   {"start", s.start},
                   {"stop", s.stop},
                   {"best", s.best_at_stop ? json(*s.best_at_stop) : json(nullptr)}});
  }
  return out;
}

struct SimulateArgs {
  std::string schedule;
  std::string instances;
  std::vector<std::string> registries;
  bool live = false;
  bool training = false;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  auto [campaign, scenario] = open_campaign(g);
  const fs::path schedule_path = a.schedule.empty() ? campaign.portfolio_dir() / "seq" / "schedule.json" : fs::path(a.schedule);
  if (a.schedule.empty()) require_fresh(campaign, Stage::PortfolioBuilt, schedule_path);
  const json schedule_json = read_json(schedule_path);
  const auto schedule = schedule_from_json(schedule_json, scenario.space);

  std::vector<std::string> instances;
  if (!a.instances.empty()) {
    instances = load_instance_list(a.instances);
  } else if (!a.training && !scenario.test_instances.empty()) {
    instances = scenario.test_instances;
  } else {
    instances = scenario.instances;
  }

  std::vector<BoundsRegistry> regs{scenario.load_bounds()};
  for (const auto& r : a.registries) regs.push_back(BoundsRegistry::load(r));
  const auto registry = merge_bounds(regs);

  check_platform_support();
  const RunStore store(campaign.runs_dir());
  json per_instance = json::object();
  std::vector<InstanceResult> results;
  std::vector<RunRecord> used;

  if (a.live) {
    for (const auto& inst : instances) {
      auto outcome = run_schedule_live(schedule, scenario.space, scenario.command, inst, g.seed, scenario.limits);
      for (const auto& r : outcome.runs) store.save(r);
      per_instance[outcome.result.instance] = {
          {"bound", outcome.result.ub ? json(*outcome.result.ub) : json(nullptr)}, {"log", segments_json(outcome.log)}};
      results.push_back(outcome.result);
    }
  } else {
    // Reuse the selection-phase traces where they exist; otherwise run each
    // configuration once for the whole budget.
    std::map<std::string, std::map<std::string, std::string>> pool_keys;
    std::optional<Archive> archive;
    if (campaign.has(Stage::Selected) && fs::exists(campaign.select_dir() / "pool.json")) {
      const auto pool = CandidatePool::load(campaign.select_dir() / "pool.json", scenario.space);
      for (const auto& c : pool.candidates) pool_keys[c.config.id()] = c.run_keys;
      archive = Archive::from_json(read_json(campaign.tune_dir() / "archive.json"), scenario.space);
    }
    const RunLookup lookup(archive ? &*archive : nullptr, store);

    RunLimits limits = scenario.limits;
    limits.cpu_seconds = std::max(limits.cpu_seconds, schedule.budget_to);
    std::vector<RunTask> missing;
    std::set<std::string> seen;
    for (const auto& config : schedule.sequence) {
      if (!seen.insert(config.id()).second) continue;
      for (const auto& inst : instances) {
        std::optional<RunRecord> r;
        if (auto it = pool_keys.find(config.id()); it != pool_keys.end()) {
          if (auto k = it->second.find(instance_id(inst)); k != it->second.end()) r = lookup.find(k->second);
        }
        if (!r) r = lookup.find(run_key(config.id(), instance_id(inst), g.seed));
        if (r) {
          used.push_back(std::move(*r));
        } else {
          missing.push_back({config, inst, g.seed});
        }
      }
    }
    if (!missing.empty()) {
      spdlog::info("running {} missing (configuration, instance) pairs", missing.size());
      auto fresh = run_batch(scenario.space, scenario.command, missing, limits, g.workers, &store);
      for (auto& r : fresh) used.push_back(std::move(r));
    }
    const auto traces = TraceTable::from_runs(used);
    std::vector<std::string> ids;
    for (const auto& inst : instances) ids.push_back(instance_id(inst));
    const auto eval = evaluate_schedule(schedule, traces, ids, registry);
    for (const auto& [id, res] : eval.per_instance) {
      per_instance[id] = {{"bound", res.ub ? json(*res.ub) : json(nullptr)}, {"log", segments_json(eval.logs.at(id))}};
      results.push_back(res);
    }
  }

  const double score = score_solver(results, registry);
  json out{{"schedule", schedule_to_json(schedule)},
           {"schedule_file", fs::absolute(schedule_path).string()},
           {"seed", g.seed},
           {"mode", a.live ? "live" : "trace"},
           {"score", score},
           {"registry_hash", registry.hash()},
           {"per_instance", per_instance}};
  const auto path = campaign.simulate_dir() / "simulation.json";
  write_json(path, out);
  if (g.json) {
    std::cout << json{{"score", score}, {"file", path.string()}}.dump() << '\n';
  } else {
    std::cout << "simulated " << results.size() << " instances, score " << fmt_score(score) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- score

struct Row {
  std::string solver;
  std::size_t seeds = 0;
  std::size_t instances = 0;
  ScoreStats stats;
};

std::vector<RunRecord> read_run_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<RunRecord> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(read_run_log(f));
  return out;
}

struct ScoreArgs {
  std::vector<std::string> runs;
  std::vector<std::string> simulations;
  std::vector<std::string> registries;
  std::string instances;
  bool include_vbs = false;
  std::string csv;
};

int cmd_score(const Globals& g, const ScoreArgs& a) {
  if (a.runs.empty() && a.simulations.empty()) throw UsageError("give at least one --runs directory or --simulation");

  std::optional<std::set<std::string>> only;
  if (!a.instances.empty()) {
    only.emplace();
    for (const auto& p : load_instance_list(a.instances)) only->insert(instance_id(p));
  }
  auto keep = [&](const std::string& id) { return !only || only->count(id); };

  // solver name -> seed -> per-instance results
  std::map<std::string, std::map<std::uint64_t, std::map<std::string, InstanceResult>>> solvers;
  std::vector<RunRecord> all_runs;
  for (const auto& d : a.runs) {
    auto records = read_run_dir(d);
    std::set<std::string> configs;
    for (const auto& r : records) configs.insert(r.config_id);
    const std::string base = fs::path(d).filename().empty() ? fs::path(d).parent_path().filename().string()
                                                            : fs::path(d).filename().string();
    for (const auto& r : records) {
      const auto res = r.result();
      if (!keep(res.instance)) continue;
      const std::string name = configs.size() > 1 ? base + ":" + r.config_id : base;
      auto& slot = solvers[name][r.seed];
      if (slot.count(res.instance)) throw Error(name + " has two runs on " + res.instance + " with seed " + std::to_string(r.seed));
      slot[res.instance] = res;
      all_runs.push_back(r);
    }
  }
  for (const auto& s : a.simulations) {
    const auto j = read_json(s);
    const std::string name = "sim:" + fs::path(s).parent_path().filename().string();
    auto& slot = solvers[name][j.value("seed", std::uint64_t{0})];
    for (const auto& [id, v] : j.at("per_instance").items()) {
      if (!keep(id)) continue;
      InstanceResult res{id, std::nullopt};
      if (!v.at("bound").is_null()) res.ub = v.at("bound").get<Weight>();
      slot[id] = res;
    }
  }

  std::vector<BoundsRegistry> regs;
  for (const auto& r : a.registries) {
    try {
      regs.push_back(BoundsRegistry::load(r));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (a.include_vbs) {
    BoundsRegistry vbs;
    for (const auto& [name, seeds] : solvers) {
      for (const auto& [seed, results] : seeds) {
        for (const auto& [id, res] : results) {
          if (res.ub) vbs.add(id, *res.ub, "vbs");
        }
      }
    }
    regs.push_back(std::move(vbs));
  }
  if (regs.empty()) throw UsageError("give at least one --registry or --include-vbs");
  const auto registry = merge_bounds(regs);

  std::vector<Row> rows;
  for (const auto& [name, seeds] : solvers) {
    std::set<std::string> covered;
    for (const auto& [seed, results] : seeds) {
      std::set<std::string> ids;
      for (const auto& [id, res] : results) ids.insert(id);
      if (!covered.empty() && ids != covered) {
        throw Error(name + ": seeds cover different instance sets; restrict with --instances");
      }
      covered = std::move(ids);
    }
    std::vector<double> scores;
    for (const auto& [seed, results] : seeds) {
      std::vector<InstanceResult> list;
      for (const auto& [id, res] : results) list.push_back(res);
      scores.push_back(score_solver(list, registry));
    }
    if (scores.empty()) continue;
    rows.push_back({name, scores.size(), covered.size(), seed_stats(scores)});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    return x.stats.mean != y.stats.mean ? x.stats.mean > y.stats.mean : x.solver < y.solver;
  });

  if (!a.csv.empty()) {
    std::ostringstream csv;
    csv << "solver,seeds,instances,mean,median,min,max,std\n";
    csv << std::setprecision(17);
    for (const auto& r : rows) {
      csv << r.solver << ',' << r.seeds << ',' << r.instances << ',' << r.stats.mean << ',' << r.stats.median << ','
          << r.stats.min << ',' << r.stats.max << ',' << r.stats.std << '\n';
    }
    write_text(a.csv, csv.str());
  }
  if (g.json) {
    json out = json::array();
    for (const auto& r : rows) {
      out.push_back({{"solver", r.solver},
                     {"seeds", r.seeds},
                     {"instances", r.instances},
                     {"mean", r.stats.mean},
                     {"median", r.stats.median},
                     {"min", r.stats.min},
                     {"max", r.stats.max},
                     {"std", r.stats.std}});
    }
    std::cout << out.dump() << '\n';
  } else {
    std::size_t width = 6;
    for (const auto& r : rows) width = std::max(width, r.solver.size());
    std::cout << std::left << std::setw(static_cast<int>(width)) << "solver" << std::right << std::setw(7) << "seeds"
              << std::setw(6) << "inst" << std::setw(9) << "mean" << std::setw(9) << "median" << std::setw(9) << "min"
              << std::setw(9) << "max" << std::setw(9) << "std" << '\n';
    for (const auto& r : rows) {
      std::cout << std::left << std::setw(static_cast<int>(width)) << r.solver << std::right << std::setw(7) << r.seeds
                << std::setw(6) << r.instances << std::setw(9) << fmt_score(r.stats.mean) << std::setw(9)
                << fmt_score(r.stats.median) << std::setw(9) << fmt_score(r.stats.min) << std::setw(9)
                << fmt_score(r.stats.max) << std::setw(9) << fmt_score(r.stats.std) << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("maxconf"));
  spdlog::set_pattern("%^%l%$: %v");
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"Tune, select, combine and score MaxSAT solver configurations"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--workdir", g.workdir, "Campaign directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("--json", g.json, "Machine-readable output on stdout");
  app.add_option("--workers", g.workers, "Parallel solver runs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "Log progress to stderr");

  std::function<int()> action;

  auto* validate = app.add_subcommand("validate", "Check a solver's output against an instance");
  std::string v_instance, v_output;
  validate->add_option("instance", v_instance, "WCNF file")->required();
  validate->add_option("output", v_output, "Solver output, '-' for stdin")->required();
  validate->callback([&] { action = [&] { return cmd_validate(g, v_instance, v_output); }; });

  auto* tune_cmd = app.add_subcommand("tune", "Run the genetic configurator");
  TuneArgs t;
  tune_cmd->add_option("--scenario", t.scenario, "Scenario file");
  tune_cmd->add_option("--budget", t.budget, "Wall-clock budget in seconds")->capture_default_str();
  tune_cmd->add_option("--policy", t.policy, "all | incremental");
  tune_cmd->add_option("--start-fraction", t.start_fraction, "Incremental policy: share of instances at generation 1");
  tune_cmd->add_option("--full-at", t.full_at, "Incremental policy: generation that uses every instance");
  tune_cmd->add_option("--max-generations", t.max_generations, "Stop after this many generations (0: budget only)");
  tune_cmd->add_option("--population", t.population, "Population size");
  tune_cmd->add_option("--tournaments", t.tournaments, "Mini-tournaments per generation");
  tune_cmd->add_flag("--resume", t.resume, "Continue from the last checkpoint");
  tune_cmd->callback([&] { action = [&] { return cmd_tune(g, t); }; });

  auto* select = app.add_subcommand("select", "Rescore the best explored configurations");
  std::size_t k = 50;
  select->add_option("--k", k, "Configurations to keep")->check(CLI::PositiveNumber)->capture_default_str();
  select->callback([&] { action = [&] { return cmd_select(g, k); }; });

  auto* portfolio = app.add_subcommand("portfolio", "Build a parallel or sequential portfolio");
  portfolio->require_subcommand(1);
  auto* par = portfolio->add_subcommand("par", "Parallel portfolio launch scripts");
  std::size_t par_n = 5;
  std::string par_kind = "configs";
  par->add_option("--n", par_n, "Portfolio size")->capture_default_str();
  par->add_option("--kind", par_kind, "configs | seeds")->capture_default_str();
  par->callback([&] { action = [&] { return cmd_portfolio_par(g, par_n, par_kind); }; });
  auto* seq = portfolio->add_subcommand("seq", "Search a sequential schedule over stored traces");
  std::size_t max_len = 3;
  std::string grid;
  double to = 60;
  bool repeats = false;
  double first_cap = 0;
  seq->add_option("--max-len", max_len, "Longest sequence")->check(CLI::PositiveNumber)->capture_default_str();
  seq->add_option("--grid", grid, "Comma-separated MTBS values in seconds");
  seq->add_option("--to", to, "Global time budget in seconds")->check(CLI::PositiveNumber)->capture_default_str();
  seq->add_flag("--allow-repeats", repeats, "Allow a configuration twice in a sequence");
  seq->add_option("--first-solution-cap", first_cap, "Abandon a silent non-final solver after this many seconds");
  seq->callback([&] { action = [&] { return cmd_portfolio_seq(g, max_len, grid, to, repeats, first_cap); }; });

  auto* simulate = app.add_subcommand("simulate", "Evaluate a schedule on instances");
  SimulateArgs s;
  simulate->add_option("--schedule", s.schedule, "Schedule file (default: the campaign's)");
  simulate->add_option("--instances", s.instances, "Instance list (default: test instances, else training)");
  simulate->add_option("--registry", s.registries, "Extra bounds files");
  simulate->add_flag("--live", s.live, "Run the schedule for real instead of replaying traces");
  simulate->add_flag("--training", s.training, "Use the training instances");
  simulate->callback([&] { action = [&] { return cmd_simulate(g, s); }; });

  auto* score = app.add_subcommand("score", "Rank solvers by mean score");
  ScoreArgs sc;
  score->add_option("--runs", sc.runs, "Directory of run logs (one solver each)");
  score->add_option("--simulation", sc.simulations, "simulation.json from `maxconf simulate`");
  score->add_option("--registry", sc.registries, "Bounds files, merged");
  score->add_option("--instances", sc.instances, "Restrict to this instance list");
  score->add_flag("--include-vbs", sc.include_vbs, "Add the best bound of the scored runs to the registry");
  score->add_option("--csv", sc.csv, "Also write the table as CSV");
  score->callback([&] { action = [&] { return cmd_score(g, sc); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (g.verbose) spdlog::set_level(spdlog::level::info);

  try {
    return action();
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
