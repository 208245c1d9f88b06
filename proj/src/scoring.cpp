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

#include "maxconf/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "maxconf/error.hpp"
#include "maxconf/hash.hpp"

namespace maxconf {

void BoundsRegistry::add(const std::string& instance, Weight bound, const std::string& source) {
  auto [it, inserted] = bounds_.emplace(instance, bound);
  if (!inserted) it->second = std::min(it->second, bound);
  provenance_[instance].insert(source);
}

std::optional<Weight> BoundsRegistry::bound(const std::string& instance) const {
  auto it = bounds_.find(instance);
  if (it == bounds_.end()) return std::nullopt;
  return it->second;
}

Weight BoundsRegistry::require(const std::string& instance) const {
  auto it = bounds_.find(instance);
  if (it == bounds_.end()) throw Error("no best-known bound for instance '" + instance + "'");
  return it->second;
}

void BoundsRegistry::write(std::ostream& out) const {
  for (const auto& [id, b] : bounds_) {
    out << id << ' ' << b << ' ';
    bool first = true;
    for (const auto& s : provenance_.at(id)) {
      if (!first) out << ',';
      out << s;
      first = false;
    }
    out << '\n';
  }
}

std::string BoundsRegistry::serialize() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

std::string BoundsRegistry::hash() const { return short_hash(serialize()); }

BoundsRegistry BoundsRegistry::read(std::istream& in, const std::string& source_name) {
  BoundsRegistry reg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string id, bound_text, sources;
    if (!(fields >> id)) continue;
    if (!(fields >> bound_text)) throw ParseError(source_name, line_no, "missing bound for '" + id + "'");
    Weight bound = 0;
    auto [ptr, ec] = std::from_chars(bound_text.data(), bound_text.data() + bound_text.size(), bound);
    if (ec != std::errc() || ptr != bound_text.data() + bound_text.size()) {
      throw ParseError(source_name, line_no, "invalid bound '" + bound_text + "'");
    }
    fields >> sources;
    std::string extra;
    if (fields >> extra) throw ParseError(source_name, line_no, "unexpected field '" + extra + "'");
    if (sources.empty()) {
      reg.add(id, bound, std::filesystem::path(source_name).stem().string());
      continue;
    }
    std::istringstream labels(sources);
    std::string label;
    bool any = false;
    while (std::getline(labels, label, ',')) {
      if (label.empty()) continue;
      reg.add(id, bound, label);
      any = true;
    }
    if (!any) throw ParseError(source_name, line_no, "empty source list");
  }
  return reg;
}

BoundsRegistry BoundsRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open bounds file");
  return read(in, path.string());
}

double score_instance(Weight best_known, const InstanceResult& result) {
  if (!result.ub) return 0.0;
  return (1.0 + static_cast<double>(best_known)) / (1.0 + static_cast<double>(*result.ub));
}

double score_solver(std::span<const InstanceResult> results, const BoundsRegistry& registry) {
  if (results.empty()) return 0.0;
  std::set<std::string> seen;
  double total = 0.0;
  for (const auto& r : results) {
    if (!seen.insert(r.instance).second) throw Error("duplicate result for instance '" + r.instance + "'");
    total += score_instance(registry.require(r.instance), r);
  }
  return total / static_cast<double>(results.size());
}

double cost_ac(Weight best_known, const InstanceResult& result) {
  if (!result.ub) return 1.0;
  const double score = score_instance(best_known, result);
  if (*result.ub >= best_known) return 1.0 - score;
  return 1.0 / score - 1.0;
}

BoundsRegistry merge_bounds(std::span<const BoundsRegistry> registries) {
  BoundsRegistry merged;
  for (const auto& reg : registries) {
    for (const auto& [id, b] : reg.bounds()) {
      for (const auto& src : reg.provenance().at(id)) merged.add(id, b, src);
    }
  }
  return merged;
}

BoundsRegistry vbs_bounds(std::span<const RunRecord> runs, const std::string& source) {
  BoundsRegistry reg;
  for (const auto& run : runs) {
    const InstanceResult r = run.result();
    if (r.ub) reg.add(r.instance, *r.ub, source);
  }
  return reg;
}

ScoreStats seed_stats(std::span<const double> per_seed_scores) {
  if (per_seed_scores.empty()) throw Error("seed_stats requires at least one score");
  std::vector<double> v(per_seed_scores.begin(), per_seed_scores.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  ScoreStats s;
  s.min = v.front();
  s.max = v.back();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 ? v[mid] : (v[mid - 1] + v[mid]) / 2.0;
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(sq / n);
  // Rounding can push the mean one ulp outside [min, max].
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

}  // namespace maxconf
