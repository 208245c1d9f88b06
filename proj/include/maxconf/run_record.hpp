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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "maxconf/wcnf.hpp"

namespace maxconf {

// Registry and report key for an instance: the file's base name.
std::string instance_id(std::string_view path);

// Outcome of one solver on one instance: an upper bound, or nothing.
struct InstanceResult {
  std::string instance;
  std::optional<Weight> ub;

  bool solved() const { return ub.has_value(); }
  bool operator==(const InstanceResult&) const = default;
};

struct TracePoint {
  double t = 0.0;  // seconds since the solver started
  Weight bound = 0;

  bool operator==(const TracePoint&) const = default;
};

using Trace = std::vector<TracePoint>;

enum class ExitKind { Finished, Timeout, MemOut, Crash };
enum class TimeSource { Cpu, Wall };

std::string_view to_string(ExitKind kind);
std::string_view to_string(TimeSource source);

struct RunLimits {
  double cpu_seconds = 60.0;
  std::uint64_t memory_bytes = 32ULL << 30;
  double grace_seconds = 2.0;
  // Wall-clock backstop for solvers that block without burning CPU.
  // 0 selects 2 * cpu_seconds + grace_seconds.
  double wall_seconds = 0.0;

  double effective_wall_seconds() const {
    return wall_seconds > 0 ? wall_seconds : 2.0 * cpu_seconds + grace_seconds;
  }
  void validate() const;
};

// One (configuration, instance, seed) execution.
struct RunRecord {
  std::string config_id;
  std::string instance;  // path as given to the solver
  std::uint64_t seed = 0;
  Trace trace;           // strictly increasing t, strictly decreasing bound
  ValidationVerdict verdict;
  double cpu_seconds = 0.0;
  double wall_seconds = 0.0;
  ExitKind exit = ExitKind::Finished;
  TimeSource time_source = TimeSource::Cpu;

  std::string key() const;
  InstanceResult result() const;

  // The trace restricted to what validation supports: empty unless the final
  // model is valid, points not above the validated cost are dropped, and the
  // last point carries the validated cost.
  Trace validated_trace() const;
};

std::string run_key(std::string_view config_id, std::string_view instance, std::uint64_t seed);

nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

// JSON-lines run log: one {"t","bound"} record per trace point, then a
// terminal record holding the verdict and resource usage.
void write_run_log(const std::filesystem::path& path, const RunRecord& record);
RunRecord read_run_log(const std::filesystem::path& path);

// Content-addressed directory of run logs: <root>/<key[0:2]>/<key>.jsonl.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_for(std::string_view key) const;
  bool contains(std::string_view key) const;
  void save(const RunRecord& record) const;
  RunRecord load(std::string_view key) const;
  std::vector<RunRecord> load_all() const;

 private:
  std::filesystem::path root_;
};

}  // namespace maxconf
