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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maxconf/param_space.hpp"
#include "maxconf/run_record.hpp"
#include "maxconf/wcnf.hpp"

namespace maxconf {

struct RunTask {
  Configuration config;
  std::string instance;
  std::uint64_t seed = 0;
};

struct ExecuteOptions {
  // Polled with the current trace-clock time and the trace so far; returning
  // true terminates the solver gracefully (SIGTERM, then SIGKILL after grace).
  std::function<bool(double now, const Trace& trace)> stop_when;
  // Parsed instance; loaded from the instance path when null.
  std::shared_ptr<const WcnfFormula> formula;
};

// Throws Error when the platform cannot enforce CPU and memory limits
// (no /proc process accounting or no setrlimit).
void check_platform_support();

// Root for per-run working directories: $MAXCONF_SCRATCH, else the system
// temporary directory.
std::filesystem::path scratch_root();

// Runs one solver process under `limits`. The solver runs in its own process
// group; CPU time and resident memory are summed over the group. `o` lines are
// captured with their CPU timestamps (non-improving ones are dropped) and the
// final output is validated. Throws Error when the solver cannot be spawned.
RunRecord execute(const ParameterSpace& space, const CommandTemplate& command, const Configuration& config,
                  const std::string& instance, std::uint64_t seed, const RunLimits& limits,
                  const ExecuteOptions& options = {});

using Deadline = std::chrono::steady_clock::time_point;

// Runs tasks with at most `max_workers` concurrent solvers. Results follow task
// order. A task that fails to run yields a Crash record. Tasks not started by
// `deadline` yield nullopt. Records are saved to `store` when given.
std::vector<std::optional<RunRecord>> run_batch_until(const ParameterSpace& space, const CommandTemplate& command,
                                                      std::span<const RunTask> tasks, const RunLimits& limits,
                                                      int max_workers, Deadline deadline,
                                                      const RunStore* store = nullptr);

std::vector<RunRecord> run_batch(const ParameterSpace& space, const CommandTemplate& command,
                                 std::span<const RunTask> tasks, const RunLimits& limits, int max_workers,
                                 const RunStore* store = nullptr);

// Source of run records for the tuner and the selection phase.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  // nullopt when the deadline passed before every task could run.
  virtual std::optional<std::vector<RunRecord>> evaluate(std::span<const RunTask> tasks, Deadline deadline) = 0;
};

// Evaluator backed by real solver processes.
class ProcessEvaluator : public Evaluator {
 public:
  ProcessEvaluator(ParameterSpace space, CommandTemplate command, RunLimits limits, int max_workers,
                   std::optional<RunStore> store = std::nullopt);

  std::optional<std::vector<RunRecord>> evaluate(std::span<const RunTask> tasks, Deadline deadline) override;
  std::size_t runs_executed() const { return runs_executed_.load(); }

 private:
  ParameterSpace space_;
  CommandTemplate command_;
  RunLimits limits_;
  int max_workers_;
  std::optional<RunStore> store_;
  std::atomic<std::size_t> runs_executed_{0};
};

}  // namespace maxconf
