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
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maxconf {

using Literal = std::int32_t;
using Weight = std::uint64_t;
using Clause = std::vector<Literal>;

struct SoftClause {
  Weight weight = 1;
  Clause literals;

  bool operator==(const SoftClause&) const = default;
};

// A weighted partial MaxSAT instance. Every literal l satisfies
// 1 <= |l| <= num_vars, every clause is non-empty, every soft weight >= 1.
struct WcnfFormula {
  int num_vars = 0;
  std::vector<Clause> hard;
  std::vector<SoftClause> soft;
  std::string source_path;

  Weight total_soft_weight() const;

  // Structural equality; source_path is not compared.
  bool operator==(const WcnfFormula& other) const {
    return num_vars == other.num_vars && hard == other.hard && soft == other.soft;
  }
};

// Total truth assignment over variables 1..num_vars. Unset variables are false.
class Assignment {
 public:
  Assignment() = default;
  explicit Assignment(int num_vars) : values_(static_cast<std::size_t>(num_vars) + 1, false) {}

  int num_vars() const { return values_.empty() ? 0 : static_cast<int>(values_.size()) - 1; }
  bool value(int var) const { return values_[static_cast<std::size_t>(var)]; }
  void set(int var, bool v) { values_[static_cast<std::size_t>(var)] = v; }
  bool satisfies(Literal lit) const { return lit > 0 ? value(lit) : !value(-lit); }

  bool operator==(const Assignment&) const = default;

 private:
  std::vector<bool> values_;
};

enum class WcnfFormat { Legacy, Y2022 };

// Reads either the legacy `p wcnf <vars> <clauses> [<top>]` format or the
// headerless 2022 format (`h ... 0` hard, `<w> ... 0` soft). One clause per
// line, each terminated by 0. Throws ParseError naming the offending line.
WcnfFormula parse_wcnf(std::istream& in, std::string source = "<input>");
WcnfFormula parse_wcnf(std::string_view text, std::string source = "<input>");
WcnfFormula load_wcnf(const std::string& path);

void write_wcnf(std::ostream& out, const WcnfFormula& formula, WcnfFormat format);

struct CostResult {
  bool hard_ok = true;
  Weight cost = 0;  // falsified soft weight, computed even when !hard_ok

  bool operator==(const CostResult&) const = default;
};

CostResult cost_of(const WcnfFormula& formula, const Assignment& assignment);

enum class VerdictStatus { Valid, HardViolation, NoSolution, MalformedOutput };

std::string_view to_string(VerdictStatus status);
std::optional<VerdictStatus> verdict_status_from_string(std::string_view text);

struct ValidationVerdict {
  VerdictStatus status = VerdictStatus::NoSolution;
  std::optional<Weight> true_cost;      // present iff status == Valid
  std::optional<Weight> reported_cost;  // last `o` line, informational
  std::string detail;

  bool solved() const { return status == VerdictStatus::Valid; }
};

// Parses the body of a `v` line (without the leading "v") into an assignment.
// Accepts the literal form (`-1 2 3 [0]`) and the binary-string form (`0110`).
// Returns nullopt on malformed or contradictory models.
std::optional<Assignment> parse_model(std::string_view body, int num_vars, std::string* why = nullptr);

// Validates solver output against the formula. The last `v` line is the model;
// its cost is recomputed and always overrides the last `o` line.
ValidationVerdict validate_output(const WcnfFormula& formula, std::istream& solver_stdout);
ValidationVerdict validate_output(const WcnfFormula& formula, std::string_view solver_stdout);

}  // namespace maxconf
