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

#include "maxconf/portfolio.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "maxconf/error.hpp"
#include "maxconf/hash.hpp"

namespace maxconf {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<Weight> better(std::optional<Weight> a, Weight b) { return a ? std::min(*a, b) : b; }

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

}  // namespace

std::uint64_t portfolio_seed(std::uint64_t base_seed, std::size_t index) {
  return mix64(base_seed * 0x100000001b3ULL + index) & 0x7fffffffULL;
}

ParallelPortfolio build_parallel(const CandidatePool& pool, std::size_t n, std::uint64_t base_seed) {
  if (n == 0) throw Error("portfolio size must be positive");
  if (pool.candidates.size() < n) {
    throw Error("pool has only " + std::to_string(pool.candidates.size()) + " candidates, " + std::to_string(n) +
                " requested");
  }
  ParallelPortfolio p{PortfolioKind::Configs, {}};
  for (std::size_t i = 0; i < n; ++i) p.entries.push_back({pool.candidates[i].config, portfolio_seed(base_seed, i)});
  return p;
}

ParallelPortfolio build_parallel_seeds(const Configuration& config, std::size_t n, std::uint64_t base_seed) {
  if (n == 0) throw Error("portfolio size must be positive");
  ParallelPortfolio p{PortfolioKind::Seeds, {}};
  std::set<std::uint64_t> used;
  for (std::size_t i = 0, k = 0; p.entries.size() < n; ++k) {
    const std::uint64_t s = portfolio_seed(base_seed, k);
    if (!used.insert(s).second) continue;
    p.entries.push_back({config, s});
    ++i;
  }
  return p;
}

double score_parallel(const ParallelPortfolio& portfolio, std::span<const RunRecord> runs,
                      const BoundsRegistry& registry) {
  if (portfolio.entries.empty()) throw Error("empty portfolio");
  std::map<std::tuple<std::string, std::uint64_t, std::string>, const RunRecord*> index;
  std::set<std::pair<std::string, std::uint64_t>> members;
  for (const auto& e : portfolio.entries) members.emplace(e.config.id(), e.seed);
  std::set<std::string> instances;
  for (const auto& r : runs) {
    if (!members.count({r.config_id, r.seed})) continue;
    const std::string id = instance_id(r.instance);
    index[{r.config_id, r.seed, id}] = &r;
    instances.insert(id);
  }
  if (instances.empty()) throw Error("no runs for any portfolio entry");
  std::vector<InstanceResult> results;
  for (const auto& inst : instances) {
    InstanceResult best{inst, std::nullopt};
    for (const auto& e : portfolio.entries) {
      auto it = index.find({e.config.id(), e.seed, inst});
      if (it == index.end()) {
        throw Error("no run for entry (" + e.config.id() + ", seed " + std::to_string(e.seed) + ") on instance '" +
                    inst + "'");
      }
      if (auto ub = it->second->result().ub) best.ub = better(best.ub, *ub);
    }
    results.push_back(std::move(best));
  }
  return score_solver(results, registry);
}

void write_parallel_portfolio(const std::filesystem::path& dir, const ParallelPortfolio& portfolio,
                              const ParameterSpace& space, const CommandTemplate& command,
                              const json& provenance) {
  std::filesystem::create_directories(dir);
  json entries = json::array();
  for (std::size_t i = 0; i < portfolio.entries.size(); ++i) {
    const auto& e = portfolio.entries[i];
    char name[32];
    std::snprintf(name, sizeof name, "entry_%02zu.sh", i + 1);
    const auto argv = render_cmdline(space, command, e.config, "", e.seed);
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw Error("cannot write launch script " + (dir / name).string());
    out << "#!/bin/sh\n# config " << e.config.id() << " seed " << e.seed << "\n";
    out << "exec " << shell_quote(argv[0]) << " \"$1\"";
    for (std::size_t a = 2; a < argv.size(); ++a) out << ' ' << shell_quote(argv[a]);
    out << '\n';
    out.close();
    std::filesystem::permissions(dir / name,
                                 std::filesystem::perms::owner_exec | std::filesystem::perms::group_exec |
                                     std::filesystem::perms::others_exec,
                                 std::filesystem::perm_options::add);
    entries.push_back({{"script", name}, {"config", e.config.to_json()}, {"seed", e.seed}});
  }
  json manifest{{"kind", portfolio.kind == PortfolioKind::Seeds ? "seeds" : "configs"},
                {"entries", entries},
                {"provenance", provenance}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
}

SimResult simulate_sequence(std::span<const Trace* const> traces, std::span<const std::string> ids, double mtbs,
                            double budget_to, const SimOptions& options) {
  SimResult result;
  double clock = 0;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    if (clock >= budget_to) break;
    const bool last = k + 1 == traces.size();
    const double start = clock;
    double deadline = (!last && options.first_solution_cap) ? *options.first_solution_cap : kInf;
    for (const auto& ev : *traces[k]) {
      if (start + ev.t > budget_to) break;
      if (!last && ev.t > deadline) break;
      result.bound = better(result.bound, ev.bound);
      if (!last) deadline = ev.t + mtbs;
    }
    const double stop = last ? budget_to : std::min(budget_to, start + deadline);
    result.log.push_back({k < ids.size() ? ids[k] : std::string(), start, stop, result.bound});
    clock = stop;
  }
  return result;
}

void TraceTable::add(const std::string& config_id, const std::string& instance, Trace trace) {
  traces_[{config_id, instance_id(instance)}] = std::move(trace);
}

const Trace* TraceTable::find(const std::string& config_id, const std::string& instance) const {
  auto it = traces_.find({config_id, instance_id(instance)});
  return it == traces_.end() ? nullptr : &it->second;
}

const Trace& TraceTable::at(const std::string& config_id, const std::string& instance) const {
  if (const Trace* t = find(config_id, instance)) return *t;
  throw Error("no trace for configuration " + config_id + " on instance '" + instance_id(instance) + "'");
}

TraceTable TraceTable::from_runs(std::span<const RunRecord> runs) {
  TraceTable table;
  for (const auto& r : runs) table.add(r.config_id, r.instance, r.validated_trace());
  return table;
}

SimResult simulate_schedule(const Schedule& schedule, const TraceTable& traces, const std::string& instance,
                            const SimOptions& options) {
  std::vector<const Trace*> seq;
  std::vector<std::string> ids;
  for (const auto& c : schedule.sequence) {
    seq.push_back(&traces.at(c.id(), instance));
    ids.push_back(c.id());
  }
  return simulate_sequence(seq, ids, schedule.mtbs, schedule.budget_to, options);
}

SearchResult search_best_schedule(std::span<const Configuration> pool, const TraceTable& traces,
                                  std::span<const std::string> instances, const BoundsRegistry& registry,
                                  const SearchSettings& settings) {
  if (pool.empty()) throw Error("schedule search needs a non-empty pool");
  if (settings.mtbs_grid.empty()) throw Error("schedule search needs a non-empty MTBS grid");
  if (settings.max_len == 0) throw Error("max sequence length must be positive");

  // trace_of[c][i]: trace of pool config c on instance i
  std::vector<std::vector<const Trace*>> trace_of(pool.size());
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < pool.size(); ++c) {
    ids.push_back(pool[c].id());
    for (const auto& inst : instances) trace_of[c].push_back(&traces.at(pool[c].id(), inst));
  }
  std::vector<Weight> best_known;
  std::vector<std::string> inst_ids;
  for (const auto& inst : instances) {
    inst_ids.push_back(instance_id(inst));
    best_known.push_back(registry.require(inst_ids.back()));
  }

  SearchResult out;
  bool have_best = false;
  std::vector<std::size_t> best_seq;
  double best_mtbs = 0;
  std::vector<std::string> best_ids;

  std::vector<std::size_t> seq;
  std::vector<const Trace*> seq_traces(settings.max_len);
  const auto evaluate = [&] {
    std::vector<std::string> seq_ids;
    for (auto c : seq) seq_ids.push_back(ids[c]);
    for (double mtbs : settings.mtbs_grid) {
      double total = 0;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        for (std::size_t p = 0; p < seq.size(); ++p) seq_traces[p] = trace_of[seq[p]][i];
        const SimResult r = simulate_sequence(std::span(seq_traces.data(), seq.size()), {}, mtbs,
                                              settings.budget_to, settings.sim);
        total += score_instance(best_known[i], {inst_ids[i], r.bound});
      }
      const double score = instances.empty() ? 0.0 : total / static_cast<double>(instances.size());
      ++out.schedules_evaluated;
      bool take = !have_best || score > out.train_score;
      if (have_best && score == out.train_score) {
        if (seq.size() != best_seq.size()) take = seq.size() < best_seq.size();
        else if (mtbs != best_mtbs) take = mtbs < best_mtbs;
        else take = seq_ids < best_ids;
      }
      if (take) {
        have_best = true;
        out.train_score = score;
        best_seq = seq;
        best_mtbs = mtbs;
        best_ids = seq_ids;
      }
    }
  };
  std::vector<bool> used(pool.size(), false);
  const auto extend = [&](auto&& self) -> void {
    if (!seq.empty()) evaluate();
    if (seq.size() == settings.max_len) return;
    for (std::size_t c = 0; c < pool.size(); ++c) {
      if (used[c] && !settings.allow_repeats) continue;
      used[c] = true;
      seq.push_back(c);
      self(self);
      seq.pop_back();
      used[c] = std::count(seq.begin(), seq.end(), c) > 0;
    }
  };
  extend(extend);

  for (auto c : best_seq) out.best.sequence.push_back(pool[c]);
  out.best.mtbs = best_mtbs;
  out.best.budget_to = settings.budget_to;
  return out;
}

ScheduleEvaluation evaluate_schedule(const Schedule& schedule, const TraceTable& traces,
                                     std::span<const std::string> instances, const BoundsRegistry& registry,
                                     const SimOptions& options) {
  ScheduleEvaluation ev;
  std::vector<InstanceResult> results;
  for (const auto& inst : instances) {
    SimResult r = simulate_schedule(schedule, traces, inst, options);
    const std::string id = instance_id(inst);
    results.push_back({id, r.bound});
    ev.per_instance[id] = results.back();
    ev.logs[id] = std::move(r.log);
  }
  ev.score = score_solver(results, registry);
  return ev;
}

json schedule_to_json(const Schedule& schedule, const json& provenance) {
  json ids = json::array(), configs = json::array();
  for (const auto& c : schedule.sequence) {
    ids.push_back(c.id());
    configs.push_back(c.to_json());
  }
  return {{"sequence", ids},
          {"configs", configs},
          {"mtbs", schedule.mtbs},
          {"budget_to", schedule.budget_to},
          {"provenance", provenance}};
}

Schedule schedule_from_json(const json& j, const ParameterSpace& space) {
  Schedule s;
  const auto ids = j.at("sequence").get<std::vector<std::string>>();
  std::map<std::string, Configuration> by_id;
  for (const auto& c : j.at("configs")) {
    Configuration conf = space.from_json(c);
    by_id.emplace(conf.id(), conf);
  }
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("schedule references unknown configuration " + id);
    s.sequence.push_back(it->second);
  }
  if (s.sequence.empty()) throw Error("schedule has an empty sequence");
  s.mtbs = j.at("mtbs").get<double>();
  s.budget_to = j.at("budget_to").get<double>();
  if (!(s.mtbs > 0) || !(s.budget_to > 0)) throw Error("schedule mtbs and budget_to must be positive");
  return s;
}

LiveOutcome run_schedule_live(const Schedule& schedule, const ParameterSpace& space, const CommandTemplate& command,
                              const std::string& instance, std::uint64_t seed, const RunLimits& base_limits) {
  LiveOutcome out;
  out.result.instance = instance_id(instance);
  auto formula = std::make_shared<const WcnfFormula>(load_wcnf(instance));
  double clock = 0;
  for (std::size_t k = 0; k < schedule.sequence.size(); ++k) {
    const double remaining = schedule.budget_to - clock;
    if (remaining <= 0) break;
    const bool last = k + 1 == schedule.sequence.size();
    RunLimits limits = base_limits;
    limits.cpu_seconds = remaining;
    limits.wall_seconds = 0;
    ExecuteOptions opts;
    opts.formula = formula;
    if (!last) {
      const double mtbs = schedule.mtbs;
      opts.stop_when = [mtbs](double now, const Trace& trace) {
        return !trace.empty() && now > trace.back().t + mtbs;
      };
    }
    const Configuration& config = schedule.sequence[k];
    RunRecord rec = execute(space, command, config, instance, seed, limits, opts);
    const double used = std::min(rec.cpu_seconds, remaining);
    if (auto ub = rec.result().ub) out.result.ub = better(out.result.ub, *ub);
    out.log.push_back({config.id(), clock, clock + used, out.result.ub});
    out.runs.push_back(std::move(rec));
    clock += used;
  }
  return out;
}

}  // namespace maxconf
