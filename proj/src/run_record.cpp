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

#include "maxconf/run_record.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "maxconf/error.hpp"
#include "maxconf/hash.hpp"

namespace maxconf {

using nlohmann::json;

std::string instance_id(std::string_view path) {
  return std::filesystem::path(path).filename().string();
}

std::string_view to_string(ExitKind kind) {
  switch (kind) {
    case ExitKind::Finished: return "finished";
    case ExitKind::Timeout: return "timeout";
    case ExitKind::MemOut: return "memout";
    case ExitKind::Crash: return "crash";
  }
  return "crash";
}

std::string_view to_string(TimeSource source) { return source == TimeSource::Cpu ? "cpu" : "wall"; }

namespace {

ExitKind exit_from_string(std::string_view s) {
  for (auto k : {ExitKind::Finished, ExitKind::Timeout, ExitKind::MemOut, ExitKind::Crash}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown exit kind '" + std::string(s) + "'");
}

}  // namespace

void RunLimits::validate() const {
  if (!(cpu_seconds > 0) || memory_bytes == 0 || !(grace_seconds > 0) || wall_seconds < 0) {
    throw Error("run limits must be positive");
  }
}

std::string run_key(std::string_view config_id, std::string_view instance, std::uint64_t seed) {
  std::string canon;
  canon.append(config_id).append("\n").append(instance_id(instance)).append("\n").append(std::to_string(seed));
  return short_hash(canon, 24);
}

std::string RunRecord::key() const { return run_key(config_id, instance, seed); }

InstanceResult RunRecord::result() const {
  InstanceResult r{instance_id(instance), std::nullopt};
  if (verdict.solved()) r.ub = verdict.true_cost;
  return r;
}

Trace RunRecord::validated_trace() const {
  if (!verdict.solved()) return {};
  const Weight cost = *verdict.true_cost;
  Trace out;
  for (const auto& p : trace) {
    if (p.bound > cost) out.push_back(p);
  }
  const double t_final = trace.empty() ? cpu_seconds : trace.back().t;
  if (!out.empty() && out.back().t >= t_final) out.pop_back();
  out.push_back({t_final, cost});
  return out;
}

namespace {

json terminal_json(const RunRecord& record) {
  json end{{"verdict", to_string(record.verdict.status)},
           {"true_cost", record.verdict.true_cost ? json(*record.verdict.true_cost) : json(nullptr)},
           {"reported_cost", record.verdict.reported_cost ? json(*record.verdict.reported_cost) : json(nullptr)},
           {"exit", to_string(record.exit)},
           {"cpu", record.cpu_seconds},
           {"wall", record.wall_seconds},
           {"time_source", to_string(record.time_source)},
           {"config_id", record.config_id},
           {"instance", record.instance},
           {"seed", record.seed}};
  if (!record.verdict.detail.empty()) end["detail"] = record.verdict.detail;
  return end;
}

void read_terminal(const json& j, RunRecord& r) {
  auto status = verdict_status_from_string(j.at("verdict").get<std::string>());
  if (!status) throw Error("unknown verdict '" + j.at("verdict").get<std::string>() + "'");
  r.verdict.status = *status;
  if (!j.at("true_cost").is_null()) r.verdict.true_cost = j.at("true_cost").get<Weight>();
  if (j.contains("reported_cost") && !j.at("reported_cost").is_null()) {
    r.verdict.reported_cost = j.at("reported_cost").get<Weight>();
  }
  r.verdict.detail = j.value("detail", "");
  r.exit = exit_from_string(j.at("exit").get<std::string>());
  r.cpu_seconds = j.at("cpu").get<double>();
  r.wall_seconds = j.value("wall", 0.0);
  r.time_source = j.value("time_source", "cpu") == "wall" ? TimeSource::Wall : TimeSource::Cpu;
  r.config_id = j.value("config_id", "");
  r.instance = j.value("instance", "");
  r.seed = j.value("seed", std::uint64_t{0});
}

}  // namespace

json to_json(const RunRecord& record) {
  json j = terminal_json(record);
  json trace = json::array();
  for (const auto& p : record.trace) trace.push_back({p.t, p.bound});
  j["trace"] = std::move(trace);
  return j;
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  read_terminal(j, r);
  for (const auto& p : j.at("trace")) r.trace.push_back({p.at(0).get<double>(), p.at(1).get<Weight>()});
  return r;
}

void write_run_log(const std::filesystem::path& path, const RunRecord& record) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write run log " + tmp);
    for (const auto& p : record.trace) out << json{{"t", p.t}, {"bound", p.bound}}.dump() << '\n';
    out << terminal_json(record).dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

RunRecord read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open run log " + path.string());
  RunRecord r;
  bool terminal = false;
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (terminal) throw ParseError(path.string(), line_no, "record after terminal record");
      const json j = json::parse(line);
      if (j.contains("t")) {
        r.trace.push_back({j.at("t").get<double>(), j.at("bound").get<Weight>()});
        continue;
      }
      read_terminal(j, r);
      terminal = true;
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string(), line_no, e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(path.string(), line_no, e.what());
  }
  if (!terminal) throw ParseError(path.string(), 0, "run log has no terminal record");
  return r;
}

RunStore::RunStore(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path RunStore::path_for(std::string_view key) const {
  return root_ / std::string(key.substr(0, 2)) / (std::string(key) + ".jsonl");
}

bool RunStore::contains(std::string_view key) const { return std::filesystem::exists(path_for(key)); }

void RunStore::save(const RunRecord& record) const { write_run_log(path_for(record.key()), record); }

RunRecord RunStore::load(std::string_view key) const { return read_run_log(path_for(key)); }

std::vector<RunRecord> RunStore::load_all() const {
  std::vector<std::filesystem::path> paths;
  if (std::filesystem::exists(root_)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(root_)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") paths.push_back(e.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RunRecord> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(read_run_log(p));
  return out;
}

}  // namespace maxconf
