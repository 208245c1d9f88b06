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

#include "maxconf/selection.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "maxconf/error.hpp"

namespace maxconf {

using nlohmann::json;

RankedConfigs rank_archive(const Archive& archive, std::size_t k) {
  if (archive.empty()) throw Error("cannot rank an empty archive");
  std::vector<const ArchiveEntry*> order;
  for (const auto& e : archive.entries()) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const ArchiveEntry* a, const ArchiveEntry* b) {
    if (a->rank_in_generation != b->rank_in_generation) return a->rank_in_generation < b->rank_in_generation;
    return a->generation > b->generation;
  });
  RankedConfigs out;
  std::set<std::string> seen;
  for (const auto* e : order) {
    if (out.configs.size() == k) break;
    if (seen.insert(e->config.id()).second) out.configs.push_back(e->config);
  }
  out.truncated = out.configs.size() < k;
  return out;
}

double rescore(const Candidate& candidate, const BoundsRegistry& registry) {
  std::vector<InstanceResult> results;
  for (const auto& [id, r] : candidate.per_instance) results.push_back(r);
  return score_solver(results, registry);
}

CandidatePool complete_and_score(std::span<const Configuration> configs, std::span<const std::string> instances,
                                 const BoundsRegistry& registry, const Archive& archive, Evaluator& evaluator,
                                 std::uint64_t seed, CompletionStats* stats, std::vector<RunRecord>* new_runs) {
  std::set<std::string> ids;
  for (const auto& c : configs) {
    if (!ids.insert(c.id()).second) throw Error("duplicate configuration " + c.id() + " in selection input");
  }
  for (const auto& inst : instances) registry.require(instance_id(inst));

  CandidatePool pool;
  pool.registry = registry;
  std::vector<RunTask> missing;
  std::vector<std::size_t> missing_owner;
  for (const auto& c : configs) {
    Candidate cand{c, 0, {}, {}};
    const auto archived = archive.latest_runs(c.id());
    for (const auto& inst : instances) {
      const std::string id = instance_id(inst);
      auto it = archived.find(id);
      if (it != archived.end()) {
        cand.per_instance[id] = it->second->result();
        cand.run_keys[id] = it->second->key();
        if (stats) ++stats->reused;
      } else {
        missing.push_back({c, inst, seed});
        missing_owner.push_back(pool.candidates.size());
      }
    }
    pool.candidates.push_back(std::move(cand));
  }

  if (!missing.empty()) {
    auto records = evaluator.evaluate(missing, Deadline::max());
    if (!records || records->size() != missing.size()) throw Error("selection evaluations did not complete");
    for (std::size_t i = 0; i < missing.size(); ++i) {
      const RunRecord& r = (*records)[i];
      Candidate& cand = pool.candidates[missing_owner[i]];
      const std::string id = instance_id(missing[i].instance);
      cand.per_instance[id] = r.result();
      cand.run_keys[id] = r.key();
    }
    if (stats) stats->executed += missing.size();
    if (new_runs) new_runs->insert(new_runs->end(), records->begin(), records->end());
  }

  for (auto& cand : pool.candidates) cand.mse_score = rescore(cand, registry);
  std::stable_sort(pool.candidates.begin(), pool.candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.mse_score != b.mse_score) return a.mse_score > b.mse_score;
    return a.config.id() < b.config.id();
  });
  return pool;
}

const Configuration& winner(const CandidatePool& pool) {
  if (pool.candidates.empty()) throw Error("empty candidate pool has no winner");
  return pool.candidates.front().config;
}

json CandidatePool::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates) {
    json per = json::object();
    for (const auto& [id, r] : c.per_instance) per[id] = r.ub ? json(*r.ub) : json(nullptr);
    cands.push_back({{"config", c.config.to_json()},
                     {"mse_score", c.mse_score},
                     {"per_instance", per},
                     {"runs", c.run_keys}});
  }
  json bounds = json::object();
  for (const auto& [id, b] : registry.bounds()) {
    const auto& src = registry.provenance().at(id);
    bounds[id] = {{"bound", b}, {"sources", std::vector<std::string>(src.begin(), src.end())}};
  }
  return {{"candidates", cands}, {"registry", bounds}, {"registry_hash", registry.hash()}};
}

CandidatePool CandidatePool::from_json(const json& j, const ParameterSpace& space) {
  CandidatePool pool;
  for (const auto& [id, entry] : j.at("registry").items()) {
    for (const auto& s : entry.at("sources")) pool.registry.add(id, entry.at("bound").get<Weight>(), s.get<std::string>());
  }
  if (j.contains("registry_hash") && j.at("registry_hash").get<std::string>() != pool.registry.hash()) {
    throw Error("pool registry does not match its recorded hash");
  }
  for (const auto& c : j.at("candidates")) {
    Candidate cand;
    cand.config = space.from_json(c.at("config"));
    cand.mse_score = c.at("mse_score").get<double>();
    for (const auto& [id, ub] : c.at("per_instance").items()) {
      cand.per_instance[id] = {id, ub.is_null() ? std::nullopt : std::optional<Weight>(ub.get<Weight>())};
    }
    cand.run_keys = c.value("runs", std::map<std::string, std::string>{});
    pool.candidates.push_back(std::move(cand));
  }
  return pool;
}

void CandidatePool::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write pool " + path.string());
  out << to_json().dump(2) << '\n';
}

CandidatePool CandidatePool::load(const std::filesystem::path& path, const ParameterSpace& space) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pool " + path.string());
  try {
    return from_json(json::parse(in), space);
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace maxconf
