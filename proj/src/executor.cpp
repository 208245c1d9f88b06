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

#include "maxconf/executor.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "maxconf/error.hpp"

namespace maxconf {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Closes a file descriptor on scope exit.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    reset(std::exchange(o.fd_, -1));
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_ = -1;
};

struct GroupSample {
  double cpu_seconds = 0;
  std::uint64_t rss_bytes = 0;
  int processes = 0;
};

const long kClockTicks = ::sysconf(_SC_CLK_TCK);
const long kPageSize = ::sysconf(_SC_PAGESIZE);

// Fields of /proc/<pid>/stat after the parenthesised command name.
bool read_stat(const char* path, pid_t& pgrp, double& cpu, std::uint64_t& rss) {
  int fd = ::open(path, O_RDONLY | O_CLOEXEC);
  if (fd < 0) return false;
  char buf[1024];
  ssize_t n = ::read(fd, buf, sizeof buf - 1);
  ::close(fd);
  if (n <= 0) return false;
  buf[n] = '\0';
  const char* p = std::strrchr(buf, ')');
  if (!p) return false;
  p += 2;
  // state ppid pgrp session tty tpgid flags minflt cminflt majflt cmajflt utime stime cutime cstime
  // priority nice threads itrealvalue starttime vsize rss
  unsigned long long field[21] = {};
  int idx = 0;
  ++p;  // skip state character
  while (*p && idx < 21) {
    while (*p == ' ') ++p;
    char* end = nullptr;
    field[idx++] = std::strtoull(p, &end, 10);
    if (end == p) return false;
    p = end;
  }
  if (idx < 21) return false;
  pgrp = static_cast<pid_t>(field[1]);
  cpu = static_cast<double>(field[10] + field[11] + field[12] + field[13]) / static_cast<double>(kClockTicks);
  rss = field[20] * static_cast<std::uint64_t>(kPageSize);
  return true;
}

GroupSample sample_group(pid_t pgid) {
  GroupSample s;
  DIR* dir = ::opendir("/proc");
  if (!dir) return s;
  char path[300];
  while (dirent* e = ::readdir(dir)) {
    if (e->d_name[0] < '0' || e->d_name[0] > '9') continue;
    std::snprintf(path, sizeof path, "/proc/%s/stat", e->d_name);
    pid_t pgrp = 0;
    double cpu = 0;
    std::uint64_t rss = 0;
    if (!read_stat(path, pgrp, cpu, rss) || pgrp != pgid) continue;
    s.cpu_seconds += cpu;
    s.rss_bytes += rss;
    ++s.processes;
  }
  ::closedir(dir);
  return s;
}

enum class StopReason { None, Cpu, Wall, Memory, Requested };

std::string_view trim_line(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::optional<Weight> parse_bound_line(std::string_view line) {
  if (line.size() < 3 || line[0] != 'o' || (line[1] != ' ' && line[1] != '\t')) return std::nullopt;
  auto rest = trim_line(line.substr(2));
  Weight w = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), w);
  if (ec != std::errc() || ptr != rest.data() + rest.size()) return std::nullopt;
  return w;
}

std::atomic<std::uint64_t> g_run_counter{0};

// Everything the parent needs to observe one child process.
class ChildRun {
 public:
  ChildRun(const RunLimits& limits, const ExecuteOptions& options) : limits_(limits), options_(options) {}

  void start(const std::vector<std::string>& argv) {
    scratch_ = scratch_root() / ("run-" + std::to_string(::getpid()) + "-" + std::to_string(g_run_counter++));
    std::filesystem::create_directories(scratch_);

    int out_pipe[2];
    int err_pipe[2];
    if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0) {
      throw Error(std::string("pipe failed: ") + std::strerror(errno));
    }
    out_.reset(out_pipe[0]);
    Fd out_w(out_pipe[1]);
    Fd exec_r(err_pipe[0]);
    Fd exec_w(err_pipe[1]);
    Fd devnull(::open("/dev/null", O_RDONLY | O_CLOEXEC));
    const std::string stderr_path = (scratch_ / "stderr.txt").string();
    Fd errfile(::open(stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    const std::string cwd = scratch_.string();

    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const rlim_t as_limit = static_cast<rlim_t>(limits_.memory_bytes);
    const rlim_t cpu_soft = static_cast<rlim_t>(std::ceil(limits_.cpu_seconds + limits_.grace_seconds)) + 1;

    start_ = Clock::now();
    pid_t pid = ::fork();
    if (pid < 0) throw Error(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
      // Only async-signal-safe calls from here on.
      ::setpgid(0, 0);
      struct rlimit rl;
      rl.rlim_cur = rl.rlim_max = as_limit;
      ::setrlimit(RLIMIT_AS, &rl);
      rl.rlim_cur = cpu_soft;
      rl.rlim_max = cpu_soft + 1;
      ::setrlimit(RLIMIT_CPU, &rl);
      rl.rlim_cur = rl.rlim_max = 0;
      ::setrlimit(RLIMIT_CORE, &rl);
      ::dup2(devnull.get(), STDIN_FILENO);
      ::dup2(out_w.get(), STDOUT_FILENO);
      if (errfile.get() >= 0) ::dup2(errfile.get(), STDERR_FILENO);
      if (::chdir(cwd.c_str()) != 0) { /* run from the inherited directory */ }
      ::execvp(cargv[0], cargv.data());
      int err = errno;
      ssize_t ignored = ::write(exec_w.get(), &err, sizeof err);
      (void)ignored;
      ::_exit(127);
    }
    pid_ = pid;
    ::setpgid(pid, pid);
    out_w.reset();
    exec_w.reset();
    int child_errno = 0;
    ssize_t n;
    do {
      n = ::read(exec_r.get(), &child_errno, sizeof child_errno);
    } while (n < 0 && errno == EINTR);
    if (n > 0) {
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
      cleanup_scratch();
      throw Error("cannot execute '" + argv.front() + "': " + std::strerror(child_errno));
    }
  }

  RunRecord monitor() {
    RunRecord record;
    record.time_source = TimeSource::Cpu;
    bool exited = false;
    bool eof = false;
    int status = 0;
    struct rusage usage {};
    auto last_sample_at = Clock::time_point{};

    while (!exited || !eof) {
      if (!eof) {
        pollfd pfd{out_.get(), POLLIN, 0};
        int rc = ::poll(&pfd, 1, exited ? 200 : 50);
        if (rc > 0) {
          char buf[65536];
          ssize_t n = ::read(out_.get(), buf, sizeof buf);
          if (n > 0) {
            consume(std::string_view(buf, static_cast<std::size_t>(n)));
          } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
            eof = true;
          }
        } else if (rc == 0 && exited) {
          // Descendants were killed with the group; a silent pipe means done.
          eof = true;
        }
      } else if (!exited) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
      if (!exited) {
        siginfo_t info{};
        info.si_pid = 0;
        if (::waitid(P_PID, static_cast<id_t>(pid_), &info, WEXITED | WNOHANG | WNOWAIT) == 0 &&
            info.si_pid == pid_) {
          // Sample while the zombie still exists, then clear out the group.
          sample_now();
          ::kill(-pid_, SIGKILL);
          ::wait4(pid_, &status, 0, &usage);
          exited = true;
          continue;
        }
      }
      if (exited) continue;
      if (Clock::now() - last_sample_at >= std::chrono::milliseconds(100)) {
        sample_now();
        last_sample_at = Clock::now();
      }
      enforce();
    }
    flush_partial_line();

    record.wall_seconds = seconds_since(start_);
    const double rusage_cpu = static_cast<double>(usage.ru_utime.tv_sec + usage.ru_stime.tv_sec) +
                              static_cast<double>(usage.ru_utime.tv_usec + usage.ru_stime.tv_usec) / 1e6;
    record.cpu_seconds = std::max(cpu_, rusage_cpu);
    peak_rss_ = std::max<std::uint64_t>(peak_rss_, static_cast<std::uint64_t>(usage.ru_maxrss) * 1024);
    record.exit = classify(status);
    record.trace = std::move(trace_);
    pid_ = -1;
    cleanup_scratch();
    return record;
  }

  std::string captured_output() const {
    std::string out = kept_;
    if (last_model_) out.append(*last_model_).append("\n");
    return out;
  }

  ~ChildRun() {
    if (pid_ > 0) {
      ::kill(-pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    cleanup_scratch();
  }

 private:
  double trace_clock() const { return cpu_; }

  void sample_now() {
    GroupSample s = sample_group(pid_);
    if (s.processes > 0) {
      cpu_ = std::max(cpu_, s.cpu_seconds);
      peak_rss_ = std::max(peak_rss_, s.rss_bytes);
      rss_ = s.rss_bytes;
    }
  }

  void terminate(StopReason reason) {
    if (stop_reason_ != StopReason::None) return;
    stop_reason_ = reason;
    term_sent_at_ = Clock::now();
    ::kill(-pid_, SIGTERM);
  }

  void enforce() {
    if (stop_reason_ != StopReason::None) {
      if (!kill_sent_ && seconds_since(term_sent_at_) >= limits_.grace_seconds) {
        ::kill(-pid_, SIGKILL);
        kill_sent_ = true;
      }
      return;
    }
    if (rss_ >= limits_.memory_bytes) terminate(StopReason::Memory);
    else if (cpu_ >= limits_.cpu_seconds) terminate(StopReason::Cpu);
    else if (seconds_since(start_) >= limits_.effective_wall_seconds()) terminate(StopReason::Wall);
    else if (options_.stop_when && options_.stop_when(trace_clock(), trace_)) terminate(StopReason::Requested);
  }

  void consume(std::string_view chunk) {
    partial_.append(chunk);
    std::size_t start = 0;
    while (true) {
      auto nl = partial_.find('\n', start);
      if (nl == std::string::npos) break;
      handle_line(std::string_view(partial_).substr(start, nl - start));
      start = nl + 1;
    }
    partial_.erase(0, start);
  }

  void flush_partial_line() {
    if (!partial_.empty()) handle_line(partial_);
    partial_.clear();
  }

  void handle_line(std::string_view raw) {
    auto line = trim_line(raw);
    if (line.empty()) return;
    if (line[0] == 'v' && (line.size() == 1 || line[1] == ' ' || line[1] == '\t')) {
      last_model_ = std::string(line);
      return;
    }
    if (line[0] == 's' || line[0] == 'o') kept_.append(line).append("\n");
    auto bound = parse_bound_line(line);
    if (!bound || (!trace_.empty() && *bound >= trace_.back().bound)) return;
    if (stop_reason_ == StopReason::None) sample_now();
    const double t = trace_clock();
    if (!trace_.empty() && t <= trace_.back().t) {
      trace_.back().bound = *bound;  // same clock tick: keep the better bound
    } else {
      trace_.push_back({t, *bound});
    }
    if (options_.stop_when && stop_reason_ == StopReason::None && options_.stop_when(t, trace_)) {
      terminate(StopReason::Requested);
    }
  }

  ExitKind classify(int status) const {
    switch (stop_reason_) {
      case StopReason::Memory: return ExitKind::MemOut;
      case StopReason::Cpu:
      case StopReason::Wall:
      case StopReason::Requested: return ExitKind::Timeout;
      case StopReason::None: break;
    }
    const bool near_memory_limit = static_cast<double>(peak_rss_) >= 0.8 * static_cast<double>(limits_.memory_bytes);
    if (WIFSIGNALED(status)) {
      const int sig = WTERMSIG(status);
      if (sig == SIGXCPU || (sig == SIGKILL && cpu_ >= limits_.cpu_seconds)) return ExitKind::Timeout;
      return near_memory_limit ? ExitKind::MemOut : ExitKind::Crash;
    }
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code == 0 || code == 10 || code == 20 || code == 30) return ExitKind::Finished;
    return near_memory_limit ? ExitKind::MemOut : ExitKind::Crash;
  }

  void cleanup_scratch() {
    if (scratch_.empty()) return;
    std::error_code ec;
    std::filesystem::remove_all(scratch_, ec);
    scratch_.clear();
  }

  const RunLimits& limits_;
  const ExecuteOptions& options_;
  std::filesystem::path scratch_;
  Fd out_;
  pid_t pid_ = -1;
  Clock::time_point start_;
  Clock::time_point term_sent_at_;
  StopReason stop_reason_ = StopReason::None;
  bool kill_sent_ = false;
  double cpu_ = 0;
  std::uint64_t rss_ = 0;
  std::uint64_t peak_rss_ = 0;
  std::string partial_;
  std::string kept_;
  std::optional<std::string> last_model_;
  Trace trace_;
};

class FormulaCache {
 public:
  std::shared_ptr<const WcnfFormula> get(const std::string& path) {
    std::lock_guard lock(mu_);
    auto& slot = cache_[path];
    if (!slot) slot = std::make_shared<const WcnfFormula>(load_wcnf(path));
    return slot;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const WcnfFormula>> cache_;
};

RunRecord crash_record(const RunTask& task, const std::string& why) {
  RunRecord r;
  r.config_id = task.config.id();
  r.instance = task.instance;
  r.seed = task.seed;
  r.exit = ExitKind::Crash;
  r.verdict.status = VerdictStatus::NoSolution;
  r.verdict.detail = why;
  return r;
}

}  // namespace

void check_platform_support() {
  static const bool ok = [] {
    struct rlimit rl;
    if (::getrlimit(RLIMIT_AS, &rl) != 0 || ::getrlimit(RLIMIT_CPU, &rl) != 0) return false;
    pid_t pgrp = 0;
    double cpu = 0;
    std::uint64_t rss = 0;
    return read_stat("/proc/self/stat", pgrp, cpu, rss) && pgrp == ::getpgrp();
  }();
  if (!ok) throw Error("resource limits cannot be enforced on this platform (need /proc accounting and setrlimit)");
}

std::filesystem::path scratch_root() {
  if (const char* env = std::getenv("MAXCONF_SCRATCH"); env && *env) return env;
  return std::filesystem::temp_directory_path() / "maxconf";
}

RunRecord execute(const ParameterSpace& space, const CommandTemplate& command, const Configuration& config,
                  const std::string& instance, std::uint64_t seed, const RunLimits& limits,
                  const ExecuteOptions& options) {
  check_platform_support();
  limits.validate();
  auto formula = options.formula ? options.formula : std::make_shared<const WcnfFormula>(load_wcnf(instance));
  const auto argv = render_cmdline(space, command, config, instance, seed);

  ChildRun child(limits, options);
  child.start(argv);
  RunRecord record = child.monitor();
  record.config_id = config.id();
  record.instance = instance;
  record.seed = seed;
  record.verdict = validate_output(*formula, child.captured_output());
  return record;
}

std::vector<std::optional<RunRecord>> run_batch_until(const ParameterSpace& space, const CommandTemplate& command,
                                                      std::span<const RunTask> tasks, const RunLimits& limits,
                                                      int max_workers, Deadline deadline, const RunStore* store) {
  if (max_workers < 1) throw Error("max_workers must be positive");
  check_platform_support();
  std::vector<std::optional<RunRecord>> results(tasks.size());
  if (tasks.empty()) return results;

  FormulaCache formulas;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      if (Clock::now() >= deadline) continue;
      const RunTask& task = tasks[i];
      RunRecord rec;
      try {
        ExecuteOptions opts;
        opts.formula = formulas.get(task.instance);
        rec = execute(space, command, task.config, task.instance, task.seed, limits, opts);
      } catch (const std::exception& e) {
        spdlog::warn("run {} on {} failed: {}", task.config.id(), task.instance, e.what());
        rec = crash_record(task, e.what());
      }
      if (store) {
        try {
          store->save(rec);
        } catch (const std::exception& e) {
          spdlog::warn("cannot persist run log: {}", e.what());
        }
      }
      results[i] = std::move(rec);
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(max_workers), tasks.size());
  std::vector<std::jthread> threads;
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  threads.clear();
  return results;
}

std::vector<RunRecord> run_batch(const ParameterSpace& space, const CommandTemplate& command,
                                 std::span<const RunTask> tasks, const RunLimits& limits, int max_workers,
                                 const RunStore* store) {
  auto partial = run_batch_until(space, command, tasks, limits, max_workers, Deadline::max(), store);
  std::vector<RunRecord> out;
  out.reserve(partial.size());
  for (auto& r : partial) out.push_back(std::move(*r));
  return out;
}

ProcessEvaluator::ProcessEvaluator(ParameterSpace space, CommandTemplate command, RunLimits limits,
                                   int max_workers, std::optional<RunStore> store)
    : space_(std::move(space)),
      command_(std::move(command)),
      limits_(limits),
      max_workers_(max_workers),
      store_(std::move(store)) {
  check_platform_support();
  limits_.validate();
}

std::optional<std::vector<RunRecord>> ProcessEvaluator::evaluate(std::span<const RunTask> tasks, Deadline deadline) {
  auto partial = run_batch_until(space_, command_, tasks, limits_, max_workers_, deadline,
                                 store_ ? &*store_ : nullptr);
  std::vector<RunRecord> out;
  out.reserve(partial.size());
  bool complete = true;
  for (auto& r : partial) {
    if (!r) {
      complete = false;
      continue;
    }
    ++runs_executed_;
    out.push_back(std::move(*r));
  }
  if (!complete) return std::nullopt;
  return out;
}

}  // namespace maxconf
