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


// Reference implementations used to cross-check the library. They favour
// obviousness over speed and share no code with src/.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maxconf/run_record.hpp"
#include "maxconf/wcnf.hpp"

namespace maxconf::testing {

// (hard clauses all satisfied, falsified soft weight) for the assignment whose
// bit v-1 holds variable v.
std::pair<bool, Weight> mask_cost(const WcnfFormula& f, std::uint32_t mask);
std::uint32_t to_mask(const Assignment& a);

// Every assignment of a formula with at most 20 variables, indexed by mask.
std::vector<std::pair<bool, Weight>> enumerate_costs(const WcnfFormula& f);

struct OracleSegment {
  std::size_t position = 0;
  double start = 0, stop = 0;
  std::optional<Weight> best;
};

struct OracleSim {
  std::optional<Weight> bound;
  std::vector<OracleSegment> segments;
};

// Steps a global clock one tick at a time. Every trace time, mtbs, cap and
// budget must be a whole number of ticks.
OracleSim tick_simulate(const std::vector<Trace>& traces, double mtbs, double budget_to, double tick,
                        std::optional<double> first_solution_cap = std::nullopt);

struct OracleSearch {
  std::vector<std::size_t> sequence;  // indices into the pool
  double mtbs = 0;
  double score = 0;
  std::size_t evaluated = 0;
};

// traces[c][i]: trace of pool member c on instance i. Enumerates every
// sequence as a base-|pool| counter and keeps the best under the ordering
// (score desc, length asc, mtbs asc, ids lexicographic).
OracleSearch brute_force_search(const std::vector<std::vector<Trace>>& traces, const std::vector<std::string>& ids,
                                const std::vector<Weight>& best_known, std::size_t max_len,
                                const std::vector<double>& grid, double budget_to, double tick, bool allow_repeats);

}  // namespace maxconf::testing
