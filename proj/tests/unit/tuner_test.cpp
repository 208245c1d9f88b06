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


#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "maxconf/error.hpp"
#include "maxconf/tuner.hpp"
#include "test_support.hpp"

namespace maxconf {
namespace {

using testing::convex_space;
using testing::FunctionEvaluator;

InstancePolicy ramp() { return InstancePolicy::incremental(0.2, 25); }

TEST(SelectInstances, RampExamples) {
  EXPECT_EQ(instances_at_generation(100, 1, ramp()), 20u);
  EXPECT_EQ(instances_at_generation(100, 25, ramp()), 100u);
  EXPECT_EQ(instances_at_generation(100, 13, ramp()), 60u);
  EXPECT_EQ(instances_at_generation(100, 40, ramp()), 100u);
  for (int j : {1, 7, 50}) EXPECT_EQ(instances_at_generation(100, j, InstancePolicy::all()), 100u);
  EXPECT_EQ(instances_at_generation(3, 1, InstancePolicy::incremental(0.2, 5)), 1u);
}

TEST(SelectInstances, PrefixChain) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng() % 200;
    const double frac = std::max(1.0 / static_cast<double>(n), std::uniform_real_distribution<double>(0.01, 1)(rng));
    const auto policy = InstancePolicy::incremental(frac, 1 + static_cast<int>(rng() % 40));
    std::vector<std::string> order;
    for (std::size_t i = 0; i < n; ++i) order.push_back("i" + std::to_string(i));
    std::vector<std::string> prev;
    for (int j = 1; j <= 45; ++j) {
      const auto cur = select_instances(order, j, policy);
      ASSERT_GE(cur.size(), std::max<std::size_t>(1, prev.size()));
      EXPECT_TRUE(std::equal(prev.begin(), prev.end(), cur.begin()));
      prev = cur;
    }
    EXPECT_EQ(prev.size(), n);
  }
}

std::vector<Configuration> configs(const ParameterSpace& space, int n, std::uint64_t seed) {
  std::vector<Configuration> out;
  std::set<std::string> ids;
  std::mt19937_64 rng(seed);
  while (static_cast<int>(out.size()) < n) {
    auto c = sample_config(space, rng);
    if (ids.insert(c.id()).second) out.push_back(c);
  }
  return out;
}

TEST(MiniTournaments, HandBuiltCosts) {
  const auto space = convex_space();
  const auto cs = configs(space, 4, 1);
  const std::vector<std::vector<Configuration>> groups{{cs[0], cs[1]}, {cs[2], cs[3]}};
  const std::map<std::string, double> costs{
      {cs[0].id(), 0.1}, {cs[1].id(), 0.3}, {cs[2].id(), 0.2}, {cs[3].id(), 0.4}};
  const auto out = rank_tournaments(groups, costs);
  ASSERT_EQ(out.winners.size(), 2u);
  EXPECT_EQ(out.winners[0].config, cs[0]);
  EXPECT_EQ(out.winners[1].config, cs[2]);
  EXPECT_EQ(out.groups[0][1].config, cs[1]);
}

TEST(MiniTournaments, SingleTournamentPicksGlobalMinimum) {
  const auto space = convex_space();
  const auto cs = configs(space, 9, 2);
  std::mt19937_64 rng(3);
  const auto out = run_mini_tournaments(cs, {}, 1, rng, [](std::span<const Configuration> ps) {
    std::map<std::string, double> m;
    for (const auto& c : ps) m[c.id()] = static_cast<double>(testing::convex_bound(c));
    return m;
  });
  ASSERT_EQ(out.winners.size(), 1u);
  Weight best = ~Weight{0};
  for (const auto& c : cs) best = std::min(best, testing::convex_bound(c));
  EXPECT_EQ(testing::convex_bound(out.winners[0].config), best);
}

TEST(MiniTournaments, TieGoesToLowerId) {
  const auto space = convex_space();
  const auto cs = configs(space, 5, 4);
  std::mt19937_64 rng(5);
  const auto out = run_mini_tournaments(cs, {}, 1, rng, [](std::span<const Configuration> ps) {
    std::map<std::string, double> m;
    for (const auto& c : ps) m[c.id()] = 0.25;
    return m;
  });
  std::string lowest = cs[0].id();
  for (const auto& c : cs) lowest = std::min(lowest, c.id());
  EXPECT_EQ(out.winners[0].config.id(), lowest);
}

TEST(MiniTournaments, PartitionShape) {
  const auto space = convex_space();
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const int k = n + static_cast<int>(rng() % 30);
    auto cs = configs(space, k + 2, rng());
    std::vector<Configuration> elites(cs.end() - std::min<int>(2, n), cs.end());
    cs.resize(static_cast<std::size_t>(k));
    const auto groups = partition_tournaments(cs, elites, n, rng);
    ASSERT_EQ(static_cast<int>(groups.size()), n);
    std::size_t lo = groups[0].size(), hi = lo, total = 0;
    std::set<std::string> seen;
    for (const auto& g : groups) {
      lo = std::min(lo, g.size());
      hi = std::max(hi, g.size());
      total += g.size();
      for (const auto& c : g) EXPECT_TRUE(seen.insert(c.id()).second);
    }
    EXPECT_LE(hi - lo, 1u);
    EXPECT_EQ(total, cs.size() + elites.size());
    for (std::size_t e = 0; e < elites.size(); ++e) EXPECT_EQ(groups[e].front(), elites[e]);
  }
}

TEST(Crossover, Examples) {
  const auto space = convex_space();
  const auto a = space.make({{"x", std::int64_t{3}}, {"y", std::int64_t{4}}, {"cat", std::string("b")}});
  const auto b = space.make({{"x", std::int64_t{3}}, {"y", std::int64_t{9}}, {"cat", std::string("b")}});
  std::mt19937_64 rng(8);
  const std::vector<Genome> non{{a, Gender::NonCompetitive, 0, 0}};
  for (const auto& child : crossover_and_mutate(non, std::vector{a}, space, 0.0, 1, rng)) EXPECT_EQ(child.config, a);

  const std::vector<Genome> partner{{b, Gender::NonCompetitive, 0, 0}};
  std::set<std::int64_t> ys;
  for (int i = 0; i < 100; ++i) {
    for (const auto& child : crossover_and_mutate(partner, std::vector{a}, space, 0.0, 2, rng)) {
      ys.insert(std::get<std::int64_t>(child.config.at("y")));
      EXPECT_EQ(child.birth_generation, 2);
      EXPECT_EQ(std::get<std::int64_t>(child.config.at("x")), 3);
    }
  }
  EXPECT_EQ(ys, (std::set<std::int64_t>{4, 9}));

  const ParameterSpace single({{"p", Categorical{{"a"}}, std::string("a"), ""}});
  const auto only = default_config(single);
  const std::vector<Genome> same{{only, Gender::NonCompetitive, 0, 0}};
  for (const auto& child : crossover_and_mutate(same, std::vector{only}, single, 1.0, 1, rng)) {
    EXPECT_EQ(std::get<std::string>(child.config.at("p")), "a");
  }
}

TEST(Crossover, EachWinnerGetsCeilShareOfPartners) {
  const auto space = convex_space();
  const auto cs = configs(space, 10, 9);
  std::vector<Genome> non;
  for (int i = 0; i < 7; ++i) non.push_back({cs[static_cast<std::size_t>(i)], Gender::NonCompetitive, 0, 0});
  std::mt19937_64 rng(10);
  const std::vector<Configuration> winners(cs.begin() + 7, cs.end());
  EXPECT_EQ(crossover_and_mutate(non, winners, space, 0.1, 1, rng).size(), 9u);  // 3 winners * ceil(7/3)
}

TEST(Crossover, RepairsConstraints) {
  const ParameterSpace space({{"p", Categorical{{"a", "b"}}, std::string("a"), ""},
                              {"q", Categorical{{"a", "b"}}, std::string("a"), ""}},
                             {{{"p", std::string("b")}, {"q", std::string("b")}}});
  const auto ab = space.make({{"p", std::string("a")}, {"q", std::string("b")}});
  const auto ba = space.make({{"p", std::string("b")}, {"q", std::string("a")}});
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::vector<Genome> non{{ba, Gender::NonCompetitive, 0, 0}};
    for (const auto& child : crossover_and_mutate(non, std::vector{ab}, space, 0.5, 1, rng)) {
      EXPECT_FALSE(space.violates_constraints(child.config.values()));
    }
  }
}

TEST(Aging, Examples) {
  const auto space = convex_space();
  const auto cs = configs(space, 6, 12);
  std::mt19937_64 rng(13);
  Population pop;
  pop.competitive = {{cs[0], Gender::Competitive, 3, 0}, {cs[1], Gender::Competitive, 1, 2}};
  pop.noncompetitive = {{cs[2], Gender::NonCompetitive, 3, 0}, {cs[3], Gender::NonCompetitive, 0, 3}};
  // cs[0] is the overall best and survives past max_age; cs[2] dies.
  const auto next = aging_and_death(cs[0], pop, {}, space, 6, 3, 4, rng);
  EXPECT_EQ(next.size(), 6u);
  std::set<std::string> ids;
  for (const auto& g : next.competitive) ids.insert(g.config.id());
  for (const auto& g : next.noncompetitive) ids.insert(g.config.id());
  EXPECT_TRUE(ids.count(cs[0].id()));
  EXPECT_TRUE(ids.count(cs[1].id()));
  EXPECT_FALSE(ids.count(cs[2].id()));
  EXPECT_EQ(next.competitive.front().age, 4);

  // Without the exemption cs[0] would die too.
  const auto other = aging_and_death(cs[1], pop, {}, space, 6, 3, 4, rng);
  for (const auto& g : other.competitive) EXPECT_NE(g.config.id(), cs[0].id());

  // Offspring beyond the target push out the oldest genomes, never the best.
  std::vector<Genome> kids;
  for (int i = 0; i < 5; ++i) kids.push_back({sample_config(space, rng), i % 2 ? Gender::Competitive : Gender::NonCompetitive, 0, 4});
  const auto full = aging_and_death(cs[0], pop, kids, space, 4, 3, 4, rng);
  EXPECT_EQ(full.size(), 4u);
  bool best_kept = false;
  for (const auto& g : full.competitive) best_kept = best_kept || g.config.id() == cs[0].id();
  EXPECT_TRUE(best_kept);
}

TunerSettings small_settings(std::uint64_t seed) {
  TunerSettings s;
  s.population_size = 20;
  s.num_tournaments = 3;
  s.budget_seconds = 600;
  s.max_generations = 8;
  s.rng_seed = seed;
  return s;
}

BoundsRegistry registry_for(const std::vector<std::string>& instances) {
  BoundsRegistry r;
  for (const auto& i : instances) r.add(instance_id(i), 50, "fixture");
  return r;
}

TEST(Tune, DeterministicForFixedSeed) {
  const auto space = convex_space();
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf", "c.wcnf"};
  FunctionEvaluator e1(testing::convex_record), e2(testing::convex_record);
  const auto r1 = tune(space, inst, registry_for(inst), small_settings(5), e1);
  const auto r2 = tune(space, inst, registry_for(inst), small_settings(5), e2);
  EXPECT_EQ(r1.winner, r2.winner);
  EXPECT_EQ(r1.archive.to_json(), r2.archive.to_json());
  EXPECT_EQ(r1.generations, 8);
}

TEST(Tune, ArchiveBookkeeping) {
  const auto space = convex_space();
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf"};
  FunctionEvaluator ev(testing::convex_record);
  auto settings = small_settings(6);
  settings.max_generations = 1;
  const auto r = tune(space, inst, registry_for(inst), settings, ev);
  // Competitive genomes plus the default elite; non-competitive ones never race.
  EXPECT_LE(r.archive.entries().size(), 11u);
  EXPECT_GE(r.archive.entries().size(), 2u);
  std::set<std::string> ids;
  for (const auto& e : r.archive.entries()) {
    EXPECT_EQ(e.generation, 1);
    EXPECT_TRUE(ids.insert(e.config.id()).second);
    EXPECT_EQ(e.runs.size(), 2u);
    for (const auto& k : e.runs) EXPECT_NE(r.archive.run(k), nullptr);
  }
  EXPECT_EQ(ev.runs(), 2 * r.archive.entries().size());
}

TEST(Tune, DefaultEliteRacesEveryGeneration) {
  const auto space = convex_space();
  const std::vector<std::string> inst{"a.wcnf"};
  FunctionEvaluator ev(testing::convex_record);
  const auto r = tune(space, inst, registry_for(inst), small_settings(7), ev);
  const auto def = default_config(space).id();
  std::set<int> gens;
  for (const auto& e : r.archive.entries()) {
    if (e.config.id() == def) gens.insert(e.generation);
  }
  EXPECT_EQ(gens.size(), 8u);
}

TEST(Tune, BestCostNeverIncreases) {
  const auto space = convex_space();
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf"};
  FunctionEvaluator ev(testing::convex_record);
  auto settings = small_settings(8);
  settings.max_generations = 25;
  std::ostringstream progress;
  TuneHooks hooks;
  hooks.progress = &progress;
  const auto r = tune(space, inst, registry_for(inst), settings, ev, hooks);
  std::map<int, double> best;
  for (const auto& e : r.archive.entries()) {
    auto [it, inserted] = best.emplace(e.generation, e.mean_cost);
    if (!inserted) it->second = std::min(it->second, e.mean_cost);
  }
  double prev = 2;
  for (const auto& [g, c] : best) {
    EXPECT_LE(c, prev) << "generation " << g;
    prev = c;
  }
  std::istringstream lines(progress.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    ++count;
    EXPECT_EQ(line.rfind("generation " + std::to_string(count) + " instances 2 best_mean_cost ", 0), 0u) << line;
    EXPECT_NE(line.find(" wall_seconds "), std::string::npos);
  }
  EXPECT_EQ(count, 25);
}

TEST(Tune, EvaluationsCachedWithinGeneration) {
  // A single-value space: every genome is the default, so each generation runs once per instance.
  const ParameterSpace space({{"p", Categorical{{"a"}}, std::string("a"), ""}});
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf"};
  FunctionEvaluator ev([](const RunTask& t) { return testing::synthetic_run(t.config.id(), t.instance, t.seed, 60); });
  auto settings = small_settings(9);
  settings.max_generations = 3;
  const auto r = tune(space, inst, registry_for(inst), settings, ev);
  EXPECT_EQ(ev.runs(), 6u);
  EXPECT_EQ(r.archive.entries().size(), 3u);
}

TEST(Tune, ResumeContinuesGenerationCount) {
  const auto space = convex_space();
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf"};
  testing::TempDir dir;
  TuneHooks hooks;
  hooks.checkpoint = dir / "ckpt.json";
  FunctionEvaluator ev(testing::convex_record);
  auto settings = small_settings(10);
  settings.max_generations = 3;
  tune(space, inst, registry_for(inst), settings, ev, hooks);

  TuneHooks again;
  again.resume = TunerState::load(dir / "ckpt.json", space);
  EXPECT_EQ(again.resume->generation, 3);
  settings.max_generations = 5;
  const auto resumed = tune(space, inst, registry_for(inst), settings, ev, again);
  EXPECT_EQ(resumed.generations, 5);
  int top = 0;
  for (const auto& e : resumed.archive.entries()) top = std::max(top, e.generation);
  EXPECT_EQ(top, 5);

  // Same five generations straight through give the same archive.
  FunctionEvaluator fresh(testing::convex_record);
  const auto direct = tune(space, inst, registry_for(inst), settings, fresh);
  EXPECT_EQ(direct.archive.to_json(), resumed.archive.to_json());
}

TEST(Tune, NoCompletedGenerationThrowsWithPartialArchive) {
  const auto space = convex_space();
  const std::vector<std::string> inst{"a.wcnf"};
  FunctionEvaluator ev(testing::convex_record);
  auto settings = small_settings(11);
  settings.budget_seconds = 1e-9;
  try {
    tune(space, inst, registry_for(inst), settings, ev);
    FAIL();
  } catch (const TuneError& e) {
    EXPECT_TRUE(e.partial_archive().empty());
  }
}

TEST(Tune, MissingBoundRejected) {
  const auto space = convex_space();
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf"};
  FunctionEvaluator ev(testing::convex_record);
  EXPECT_THROW(tune(space, inst, registry_for({"a.wcnf"}), small_settings(1), ev), Error);
}

TEST(TunerSettings, Validation) {
  TunerSettings s;
  EXPECT_NO_THROW(s.validate(10));
  EXPECT_THROW(s.validate(0), Error);
  s.population_size = 9;
  EXPECT_THROW(s.validate(10), Error);
  s = {};
  s.instance_policy = InstancePolicy::incremental(0.05, 25);
  EXPECT_THROW(s.validate(10), Error);
  EXPECT_NO_THROW(s.validate(20));
}

TEST(Archive, LatestRunsPreferNewestGeneration) {
  const auto space = convex_space();
  const auto c = default_config(space);
  Archive a;
  const auto old_run = testing::synthetic_run(c.id(), "i.wcnf", 1, 90);
  const auto new_run = testing::synthetic_run(c.id(), "i.wcnf", 2, 80);
  a.add_run(old_run);
  a.add_run(new_run);
  a.add_entry({c, 1, 1, 0.5, {old_run.key()}});
  a.add_entry({c, 2, 1, 0.4, {new_run.key()}});
  EXPECT_THROW(a.add_entry({c, 2, 2, 0.4, {}}), Error);
  EXPECT_EQ(a.latest_runs(c.id()).at("i.wcnf")->seed, 2u);
  const auto back = Archive::from_json(a.to_json(), space);
  EXPECT_EQ(back.to_json(), a.to_json());
}

}  // namespace
}  // namespace maxconf
