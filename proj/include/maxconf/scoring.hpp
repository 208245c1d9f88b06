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

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "maxconf/run_record.hpp"

namespace maxconf {

// Per-instance best-known upper bounds with the labels of the sources that
// contributed them. Merging keeps the per-instance minimum.
class BoundsRegistry {
 public:
  // Lowers the bound for `instance` to `bound` if smaller; records `source`.
  void add(const std::string& instance, Weight bound, const std::string& source);

  std::optional<Weight> bound(const std::string& instance) const;
  Weight require(const std::string& instance) const;  // throws naming the instance
  bool contains(const std::string& instance) const { return bounds_.count(instance) != 0; }
  std::size_t size() const { return bounds_.size(); }
  bool empty() const { return bounds_.empty(); }

  const std::map<std::string, Weight>& bounds() const { return bounds_; }
  const std::map<std::string, std::set<std::string>>& provenance() const { return provenance_; }

  // `<instance-id> <bound> <source,source,...>` per line, '#' comments.
  void write(std::ostream& out) const;
  std::string serialize() const;
  std::string hash() const;

  static BoundsRegistry read(std::istream& in, const std::string& source_name);
  static BoundsRegistry load(const std::filesystem::path& path);

  bool operator==(const BoundsRegistry&) const = default;

 private:
  std::map<std::string, Weight> bounds_;
  std::map<std::string, std::set<std::string>> provenance_;
};

// (1 + best_known) / (1 + ub); 0 when no solution was found.
double score_instance(Weight best_known, const InstanceResult& result);

// Mean of score_instance over results. Throws if an instance has no bound or
// appears twice.
double score_solver(std::span<const InstanceResult> results, const BoundsRegistry& registry);

// Tuner cost: 1 - score when ub >= best_known, 1/score - 1 when the bound beats
// the best known, and 1 when no solution was found. Range (-1, 1].
double cost_ac(Weight best_known, const InstanceResult& result);

BoundsRegistry merge_bounds(std::span<const BoundsRegistry> registries);

// Best validated cost per instance over `runs`, labelled `source`.
BoundsRegistry vbs_bounds(std::span<const RunRecord> runs, const std::string& source = "vbs");

struct ScoreStats {
  double mean = 0, median = 0, min = 0, max = 0, std = 0;
};

// Population statistics (std divides by n) over per-seed scores.
ScoreStats seed_stats(std::span<const double> per_seed_scores);

}  // namespace maxconf
