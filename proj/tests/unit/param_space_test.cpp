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
#include "maxconf/param_space.hpp"
#include "test_support.hpp"

namespace maxconf {
namespace {

ParameterSpace mixed_space() {
  return ParameterSpace({{"weight-strategy", Categorical{{"0", "1", "2"}}, std::string("1"), "--weight-strategy={value}"},
                         {"eps", RealRange{0.0, 1.0}, 0.25, "--eps={value}"},
                         {"k", IntegerRange{1, 5}, std::int64_t{2}, "-k {value}"}});
}

TEST(ParamSpace, DefaultConfig) {
  const ParameterSpace one({{"weight-strategy", Categorical{{"1", "2"}}, std::string("1"), "--ws={value}"}});
  const auto c = default_config(one);
  EXPECT_EQ(c.values(), (std::map<std::string, ParamValue>{{"weight-strategy", std::string("1")}}));
  EXPECT_TRUE(default_config(ParameterSpace()).values().empty());
}

TEST(ParamSpace, ConstructionRejectsBadSpaces) {
  using P = std::vector<ParamDef>;
  EXPECT_THROW(ParameterSpace(P{{"a", Categorical{{"x"}}, std::string("y"), ""}}), Error);
  EXPECT_THROW(ParameterSpace(P{{"a", Categorical{{}}, std::string("y"), ""}}), Error);
  EXPECT_THROW(ParameterSpace(P{{"a", Categorical{{"x", "x"}}, std::string("x"), ""}}), Error);
  EXPECT_THROW(ParameterSpace(P{{"a", IntegerRange{3, 1}, std::int64_t{2}, ""}}), Error);
  EXPECT_THROW(ParameterSpace(P{{"a", IntegerRange{0, 1}, std::int64_t{0}, ""}, {"a", IntegerRange{0, 1}, std::int64_t{0}, ""}}),
               Error);
  // The default configuration itself is forbidden.
  EXPECT_THROW(ParameterSpace(P{{"a", IntegerRange{0, 1}, std::int64_t{0}, ""}}, {{{"a", std::int64_t{0}}}}), Error);
}

TEST(ParamSpace, RenderCmdline) {
  const auto space = mixed_space();
  const auto c = space.make({{"weight-strategy", std::string("2")}, {"eps", 0.5}, {"k", std::int64_t{3}}});
  const auto argv = render_cmdline(space, {"/bin/solver", "--seed={value}"}, c, "inst.wcnf", 42);
  EXPECT_EQ(argv, (std::vector<std::string>{"/bin/solver", "inst.wcnf", "--weight-strategy=2", "--eps=0.5", "-k 3",
                                            "--seed=42"}));
  EXPECT_EQ(argv, render_cmdline(space, {"/bin/solver", "--seed={value}"}, space.make(c.values()), "inst.wcnf", 42));
  const auto no_seed = render_cmdline(space, {"/bin/solver", ""}, c, "i", 42);
  EXPECT_EQ(no_seed.size(), 5u);
}

TEST(ParamSpace, RealsRoundTrip) {
  const auto space = mixed_space();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto c = sample_config(space, rng);
    const double eps = std::get<double>(c.at("eps"));
    EXPECT_EQ(std::get<double>(space.parse_value(*space.find("eps"), format_value(eps))), eps);
  }
}

TEST(ParamSpace, RenderIsInjective) {
  const auto space = mixed_space();
  std::mt19937_64 rng(2);
  std::map<std::vector<std::string>, std::string> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto c = sample_config(space, rng);
    auto [it, inserted] = seen.emplace(render_cmdline(space, {"s", ""}, c, "i", 0), c.id());
    if (!inserted) EXPECT_EQ(it->second, c.id());
  }
}

TEST(ParamSpace, ConfigIdIsContentHash) {
  const auto space = mixed_space();
  const auto a = space.make({{"weight-strategy", std::string("0")}, {"eps", 0.1}, {"k", std::int64_t{1}}});
  const auto b = space.make({{"k", std::int64_t{1}}, {"eps", 0.1}, {"weight-strategy", std::string("0")}});
  const auto c = space.make({{"k", std::int64_t{2}}, {"eps", 0.1}, {"weight-strategy", std::string("0")}});
  EXPECT_EQ(a.id(), b.id());
  EXPECT_NE(a.id(), c.id());
  EXPECT_EQ(a.id().size(), 16u);
  EXPECT_EQ(space.from_json(a.to_json()), a);
}

TEST(ParamSpace, MakeRejectsInvalid) {
  const auto space = mixed_space();
  EXPECT_THROW(space.make({{"weight-strategy", std::string("9")}, {"eps", 0.1}, {"k", std::int64_t{1}}}), Error);
  EXPECT_THROW(space.make({{"eps", 0.1}, {"k", std::int64_t{1}}}), Error);
  EXPECT_THROW(space.make({{"weight-strategy", std::string("0")}, {"eps", 1.5}, {"k", std::int64_t{1}}}), Error);
  EXPECT_THROW(
      space.make({{"weight-strategy", std::string("0")}, {"eps", 0.1}, {"k", std::int64_t{1}}, {"extra", 1.0}}),
      Error);
}

TEST(Sample, Examples) {
  const ParameterSpace ab({{"p", Categorical{{"a", "b"}}, std::string("a"), ""}});
  const ParameterSpace unit({{"n", IntegerRange{1, 1}, std::int64_t{1}, ""}});
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto v = std::get<std::string>(sample_config(ab, s).at("p"));
    EXPECT_TRUE(v == "a" || v == "b");
    EXPECT_EQ(std::get<std::int64_t>(sample_config(unit, s).at("n")), 1);
  }
  const auto space = mixed_space();
  EXPECT_EQ(sample_config(space, 77).id(), sample_config(space, 77).id());
}

TEST(Sample, CoversEveryCategory) {
  const ParameterSpace space({{"p", Categorical{{"a", "b", "c", "d", "e"}}, std::string("a"), ""},
                              {"q", Categorical{{"x", "y"}}, std::string("x"), ""}});
  std::mt19937_64 rng(3);
  std::set<std::string> ps, qs;
  for (int i = 0; i < 10000; ++i) {
    const auto c = sample_config(space, rng);
    ps.insert(std::get<std::string>(c.at("p")));
    qs.insert(std::get<std::string>(c.at("q")));
  }
  EXPECT_EQ(ps.size(), 5u);
  EXPECT_EQ(qs.size(), 2u);
}

TEST(Sample, RespectsConstraints) {
  const ParameterSpace space({{"p", Categorical{{"a", "b"}}, std::string("a"), ""},
                              {"n", IntegerRange{0, 3}, std::int64_t{0}, ""}},
                             {{{"p", std::string("b")}, {"n", std::int64_t{3}}}});
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    const auto c = sample_config(space, rng);
    EXPECT_FALSE(std::get<std::string>(c.at("p")) == "b" && std::get<std::int64_t>(c.at("n")) == 3);
  }
}

TEST(Sample, OverConstrainedSpaceFails) {
  // Only the all-zero default survives: one valid point in a million.
  std::vector<ParamDef> params;
  std::vector<ForbiddenCombination> forbidden;
  for (const char* name : {"n1", "n2", "n3"}) {
    params.push_back({name, IntegerRange{0, 99}, std::int64_t{0}, ""});
    for (std::int64_t v = 1; v <= 99; ++v) forbidden.push_back({{name, v}});
  }
  const ParameterSpace space(params, forbidden);
  EXPECT_THROW(sample_config(space, 5), Error);
}

}  // namespace
}  // namespace maxconf
