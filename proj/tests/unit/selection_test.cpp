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

#include "maxconf/error.hpp"
#include "maxconf/selection.hpp"
#include "test_support.hpp"

namespace maxconf {
namespace {

using testing::convex_space;
using testing::FunctionEvaluator;

std::vector<Configuration> distinct_configs(const ParameterSpace& space, std::size_t n, std::uint64_t seed) {
  std::vector<Configuration> out;
  std::set<std::string> ids;
  std::mt19937_64 rng(seed);
  while (out.size() < n) {
    auto c = sample_config(space, rng);
    if (ids.insert(c.id()).second) out.push_back(c);
  }
  return out;
}

// Entries walked bucket by bucket: rank 1 of the newest generation, rank 1 of
// the one before, ..., then rank 2, keeping insertion order inside a bucket.
std::vector<std::string> bucket_order(const Archive& a, std::size_t k) {
  int max_rank = 0, max_gen = 0;
  for (const auto& e : a.entries()) {
    max_rank = std::max(max_rank, e.rank_in_generation);
    max_gen = std::max(max_gen, e.generation);
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (int r = 1; r <= max_rank; ++r) {
    for (int g = max_gen; g >= 1; --g) {
      for (const auto& e : a.entries()) {
        if (e.rank_in_generation == r && e.generation == g && out.size() < k && seen.insert(e.config.id()).second) {
          out.push_back(e.config.id());
        }
      }
    }
  }
  return out;
}

TEST(RankArchive, SmallHandSortedExample) {
  const auto space = convex_space();
  const auto c = distinct_configs(space, 4, 1);
  Archive a;
  a.add_entry({c[0], 1, 1, 0.2, {}});
  a.add_entry({c[1], 1, 2, 0.3, {}});
  a.add_entry({c[2], 2, 1, 0.25, {}});
  a.add_entry({c[0], 2, 2, 0.4, {}});
  a.add_entry({c[3], 2, 3, 0.5, {}});
  const auto r = rank_archive(a, 3);
  ASSERT_EQ(r.configs.size(), 3u);
  EXPECT_EQ(r.configs[0], c[2]);
  EXPECT_EQ(r.configs[1], c[0]);
  EXPECT_EQ(r.configs[2], c[1]);
  EXPECT_FALSE(r.truncated);

  const auto all = rank_archive(a, 10);
  EXPECT_EQ(all.configs.size(), 4u);
  EXPECT_TRUE(all.truncated);
  EXPECT_THROW(rank_archive(Archive{}, 3), Error);
}

TEST(RankArchive, MatchesBucketWalkOnRandomArchives) {
  const auto space = convex_space();
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto pool = distinct_configs(space, 60, rng());
    Archive a;
    std::set<std::pair<std::string, int>> used;
    while (a.entries().size() < 200) {
      const auto& c = pool[rng() % pool.size()];
      const int gen = 1 + static_cast<int>(rng() % 15);
      if (!used.insert({c.id(), gen}).second) continue;
      a.add_entry({c, gen, 1 + static_cast<int>(rng() % 8), 0.5, {}});
    }
    for (std::size_t k : {1u, 10u, 50u, 100u}) {
      const auto r = rank_archive(a, k);
      std::vector<std::string> got;
      for (const auto& c : r.configs) got.push_back(c.id());
      EXPECT_EQ(got, bucket_order(a, k));
    }
  }
}

BoundsRegistry registry_for(const std::vector<std::string>& instances, Weight b) {
  BoundsRegistry r;
  for (const auto& i : instances) r.add(instance_id(i), b, "test");
  return r;
}

TEST(CompleteAndScore, ReusesArchivedRunsAndFillsGaps) {
  const auto space = convex_space();
  const auto c = distinct_configs(space, 3, 3);
  const std::vector<std::string> inst{"d/i1.wcnf", "d/i2.wcnf"};
  Archive a;
  for (const auto& cfg : {c[0], c[1]}) {
    std::vector<std::string> keys;
    for (const auto& i : inst) {
      const auto r = testing::synthetic_run(cfg.id(), i, 4, testing::convex_bound(cfg));
      a.add_run(r);
      keys.push_back(r.key());
    }
    a.add_entry({cfg, 1, 1, 0, keys});
  }
  FunctionEvaluator ev(testing::convex_record);
  CompletionStats stats;
  std::vector<RunRecord> fresh;
  const auto pool = complete_and_score(c, inst, registry_for(inst, 50), a, ev, 77, &stats, &fresh);
  EXPECT_EQ(stats.reused, 4u);
  EXPECT_EQ(stats.executed, 2u);
  EXPECT_EQ(ev.runs(), 2u);
  ASSERT_EQ(fresh.size(), 2u);
  for (const auto& r : fresh) {
    EXPECT_EQ(r.config_id, c[2].id());
    EXPECT_EQ(r.seed, 77u);
  }
  ASSERT_EQ(pool.candidates.size(), 3u);
  for (std::size_t i = 0; i + 1 < pool.candidates.size(); ++i) {
    EXPECT_GE(pool.candidates[i].mse_score, pool.candidates[i + 1].mse_score);
  }
  for (const auto& cand : pool.candidates) {
    const double expect = 51.0 / static_cast<double>(1 + testing::convex_bound(cand.config));
    EXPECT_NEAR(cand.mse_score, expect, 1e-12);
    EXPECT_EQ(cand.run_keys.size(), 2u);
  }
  EXPECT_EQ(winner(pool), pool.candidates.front().config);
}

TEST(CompleteAndScore, FullyCoveredArchiveRunsNothing) {
  const auto space = convex_space();
  const auto c = distinct_configs(space, 5, 5);
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf", "c.wcnf"};
  Archive a;
  int gen = 1;
  for (const auto& cfg : c) {
    std::vector<std::string> keys;
    for (const auto& i : inst) {
      const auto r = testing::synthetic_run(cfg.id(), i, static_cast<std::uint64_t>(gen), 70);
      a.add_run(r);
      keys.push_back(r.key());
    }
    a.add_entry({cfg, gen++, 1, 0, keys});
  }
  FunctionEvaluator ev([](const RunTask&) -> RunRecord { throw Error("should not run"); });
  CompletionStats stats;
  const auto pool = complete_and_score(c, inst, registry_for(inst, 50), a, ev, 1, &stats);
  EXPECT_EQ(ev.runs(), 0u);
  EXPECT_EQ(stats.executed, 0u);
  EXPECT_EQ(stats.reused, 15u);
  // Equal scores tie-break by id.
  for (std::size_t i = 0; i + 1 < pool.candidates.size(); ++i) {
    EXPECT_LT(pool.candidates[i].config.id(), pool.candidates[i + 1].config.id());
  }
}

TEST(CompleteAndScore, FailedRunsScoreZero) {
  const auto space = convex_space();
  const auto c = distinct_configs(space, 1, 6);
  const std::vector<std::string> inst{"a.wcnf"};
  FunctionEvaluator ev([](const RunTask& t) { return testing::synthetic_run(t.config.id(), t.instance, t.seed, {}); });
  const auto pool = complete_and_score(c, inst, registry_for(inst, 50), Archive{}, ev, 1);
  EXPECT_EQ(pool.candidates[0].mse_score, 0.0);
  EXPECT_FALSE(pool.candidates[0].per_instance.at("a.wcnf").solved());
}

TEST(CompleteAndScore, RejectsDuplicatesAndMissingBounds) {
  const auto space = convex_space();
  const auto c = distinct_configs(space, 1, 7);
  FunctionEvaluator ev(testing::convex_record);
  const std::vector<Configuration> dup{c[0], c[0]};
  const std::vector<std::string> inst{"a.wcnf"};
  EXPECT_THROW(complete_and_score(dup, inst, registry_for(inst, 50), Archive{}, ev, 1), Error);
  EXPECT_THROW(complete_and_score(c, inst, BoundsRegistry{}, Archive{}, ev, 1), Error);
}

TEST(CandidatePool, JsonRoundTrip) {
  const auto space = convex_space();
  const auto c = distinct_configs(space, 4, 8);
  const std::vector<std::string> inst{"a.wcnf", "b.wcnf"};
  FunctionEvaluator ev(testing::convex_record);
  const auto pool = complete_and_score(c, inst, registry_for(inst, 50), Archive{}, ev, 9);
  testing::TempDir dir;
  pool.save(dir / "pool.json");
  const auto back = CandidatePool::load(dir / "pool.json", space);
  EXPECT_EQ(back.to_json(), pool.to_json());
  EXPECT_EQ(back.registry, pool.registry);
  for (const auto& cand : back.candidates) EXPECT_DOUBLE_EQ(rescore(cand, back.registry), cand.mse_score);
}

}  // namespace
}  // namespace maxconf
