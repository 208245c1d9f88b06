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

#include "maxconf/wcnf.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "maxconf/error.hpp"

namespace maxconf {
namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
std::optional<T> to_number(std::string_view tok) {
  T value{};
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return value;
}

class Parser {
 public:
  explicit Parser(std::string source) : source_(std::move(source)) {}

  WcnfFormula run(std::istream& in) {
    formula_.source_path = source_;
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no_;
      std::string_view line = trim(raw);
      if (line.empty() || line.front() == 'c') continue;
      handle(line);
    }
    if (!format_) fail(0, "no clauses or header found");
    if (*format_ == WcnfFormat::Y2022) formula_.num_vars = max_var_;
    return std::move(formula_);
  }

 private:
  [[noreturn]] void fail(std::size_t line, const std::string& what) const {
    throw ParseError(source_, line, what);
  }

  void handle(std::string_view line) {
    auto toks = tokens(line);
    if (toks.front() == "p") {
      if (format_) fail(line_no_, "unexpected header line");
      header(toks);
      return;
    }
    if (!format_) format_ = WcnfFormat::Y2022;
    if (toks.front() == "h") {
      if (*format_ == WcnfFormat::Legacy) fail(line_no_, "'h' clause in a file with a legacy header");
      formula_.hard.push_back(clause(toks, 1));
      return;
    }
    auto weight = to_number<std::int64_t>(toks.front());
    if (!weight) fail(line_no_, "expected clause weight, got '" + std::string(toks.front()) + "'");
    if (*weight <= 0) fail(line_no_, "clause weight must be positive");
    const auto w = static_cast<Weight>(*weight);
    if (*format_ == WcnfFormat::Legacy) {
      if (top_ && w > *top_) fail(line_no_, "clause weight exceeds top");
      if (top_ && w == *top_) {
        formula_.hard.push_back(clause(toks, 1));
        return;
      }
    }
    formula_.soft.push_back({w, clause(toks, 1)});
  }

  void header(const std::vector<std::string_view>& toks) {
    if (toks.size() < 4 || toks.size() > 5 || toks[1] != "wcnf") {
      fail(line_no_, "malformed header, expected 'p wcnf <vars> <clauses> [<top>]'");
    }
    auto vars = to_number<std::int64_t>(toks[2]);
    auto clauses = to_number<std::int64_t>(toks[3]);
    if (!vars || *vars < 0 || *vars > std::numeric_limits<Literal>::max() || !clauses || *clauses < 0) {
      fail(line_no_, "malformed header counts");
    }
    if (toks.size() == 5) {
      auto top = to_number<std::int64_t>(toks[4]);
      if (!top || *top <= 0) fail(line_no_, "malformed header top weight");
      top_ = static_cast<Weight>(*top);
    }
    format_ = WcnfFormat::Legacy;
    formula_.num_vars = static_cast<int>(*vars);
  }

  Clause clause(const std::vector<std::string_view>& toks, std::size_t first) {
    Clause c;
    bool terminated = false;
    for (std::size_t i = first; i < toks.size(); ++i) {
      if (terminated) fail(line_no_, "literal after terminating 0");
      auto lit = to_number<std::int64_t>(toks[i]);
      if (!lit) fail(line_no_, "invalid literal '" + std::string(toks[i]) + "'");
      if (*lit == 0) {
        terminated = true;
        continue;
      }
      const std::int64_t var = std::llabs(*lit);
      if (var > std::numeric_limits<Literal>::max()) fail(line_no_, "literal out of range");
      if (*format_ == WcnfFormat::Legacy && var > formula_.num_vars) {
        fail(line_no_, "literal " + std::to_string(*lit) + " out of range (num_vars " +
                           std::to_string(formula_.num_vars) + ")");
      }
      max_var_ = std::max(max_var_, static_cast<int>(var));
      c.push_back(static_cast<Literal>(*lit));
    }
    if (!terminated) fail(line_no_, "clause is missing terminating 0");
    if (c.empty()) fail(line_no_, "empty clause");
    return c;
  }

  std::string source_;
  WcnfFormula formula_;
  std::optional<WcnfFormat> format_;
  std::optional<Weight> top_;
  std::size_t line_no_ = 0;
  int max_var_ = 0;
};

void write_literals(std::ostream& out, const Clause& c) {
  for (Literal l : c) out << ' ' << l;
  out << " 0\n";
}

}  // namespace

Weight WcnfFormula::total_soft_weight() const {
  Weight total = 0;
  for (const auto& s : soft) total += s.weight;
  return total;
}

WcnfFormula parse_wcnf(std::istream& in, std::string source) { return Parser(std::move(source)).run(in); }

WcnfFormula parse_wcnf(std::string_view text, std::string source) {
  std::istringstream in{std::string(text)};
  return parse_wcnf(in, std::move(source));
}

WcnfFormula load_wcnf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return parse_wcnf(in, path);
}

void write_wcnf(std::ostream& out, const WcnfFormula& formula, WcnfFormat format) {
  if (format == WcnfFormat::Legacy) {
    const Weight top = formula.total_soft_weight() + 1;
    out << "p wcnf " << formula.num_vars << ' ' << formula.hard.size() + formula.soft.size() << ' ' << top
        << '\n';
    for (const auto& c : formula.hard) {
      out << top;
      write_literals(out, c);
    }
  } else {
    for (const auto& c : formula.hard) {
      out << 'h';
      write_literals(out, c);
    }
  }
  for (const auto& s : formula.soft) {
    out << s.weight;
    write_literals(out, s.literals);
  }
}

CostResult cost_of(const WcnfFormula& formula, const Assignment& assignment) {
  const auto satisfied = [&](const Clause& c) {
    return std::any_of(c.begin(), c.end(), [&](Literal l) {
      const int var = l > 0 ? l : -l;
      if (var > assignment.num_vars()) return l < 0;  // unset variables are false
      return assignment.satisfies(l);
    });
  };
  CostResult r;
  r.hard_ok = std::all_of(formula.hard.begin(), formula.hard.end(), satisfied);
  for (const auto& s : formula.soft) {
    if (!satisfied(s.literals)) r.cost += s.weight;
  }
  return r;
}

std::string_view to_string(VerdictStatus status) {
  switch (status) {
    case VerdictStatus::Valid: return "valid";
    case VerdictStatus::HardViolation: return "hard_violation";
    case VerdictStatus::NoSolution: return "no_solution";
    case VerdictStatus::MalformedOutput: return "malformed_output";
  }
  return "unknown";
}

std::optional<VerdictStatus> verdict_status_from_string(std::string_view text) {
  for (auto s : {VerdictStatus::Valid, VerdictStatus::HardViolation, VerdictStatus::NoSolution,
                 VerdictStatus::MalformedOutput}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::optional<Assignment> parse_model(std::string_view body, int num_vars, std::string* why) {
  const auto reject = [&](std::string msg) -> std::optional<Assignment> {
    if (why) *why = std::move(msg);
    return std::nullopt;
  };
  auto toks = tokens(body);
  Assignment a(num_vars);
  if (toks.empty()) return a;

  const bool binary = toks.size() == 1 && toks[0].find_first_not_of("01") == std::string_view::npos;
  if (binary) {
    if (static_cast<long>(toks[0].size()) > num_vars) return reject("binary model longer than num_vars");
    for (std::size_t i = 0; i < toks[0].size(); ++i) a.set(static_cast<int>(i) + 1, toks[0][i] == '1');
    return a;
  }

  std::vector<signed char> seen(static_cast<std::size_t>(num_vars) + 1, 0);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    auto lit = to_number<std::int64_t>(toks[i]);
    if (!lit) return reject("invalid model literal '" + std::string(toks[i]) + "'");
    if (*lit == 0) {
      if (i + 1 != toks.size()) return reject("model literal after terminating 0");
      break;
    }
    const std::int64_t var = std::llabs(*lit);
    if (var > num_vars) return reject("model literal " + std::to_string(*lit) + " out of range");
    const signed char sign = *lit > 0 ? 1 : -1;
    auto& prev = seen[static_cast<std::size_t>(var)];
    if (prev == -sign) return reject("contradictory literals for variable " + std::to_string(var));
    prev = sign;
    a.set(static_cast<int>(var), sign > 0);
  }
  return a;
}

ValidationVerdict validate_output(const WcnfFormula& formula, std::istream& solver_stdout) {
  ValidationVerdict verdict;
  std::optional<std::string> model;
  std::string raw;
  while (std::getline(solver_stdout, raw)) {
    std::string_view line = trim(raw);
    if (line.size() >= 1 && line[0] == 'v' && (line.size() == 1 || line[1] == ' ' || line[1] == '\t')) {
      model = std::string(line.substr(1));
    } else if (line.size() >= 2 && line[0] == 'o' && (line[1] == ' ' || line[1] == '\t')) {
      auto toks = tokens(line.substr(1));
      if (toks.size() == 1) {
        if (auto o = to_number<std::int64_t>(toks[0]); o && *o >= 0) verdict.reported_cost = static_cast<Weight>(*o);
      }
    }
  }
  if (!model) {
    verdict.status = VerdictStatus::NoSolution;
    verdict.detail = "no model line";
    return verdict;
  }
  std::string why;
  auto assignment = parse_model(*model, formula.num_vars, &why);
  if (!assignment) {
    verdict.status = VerdictStatus::MalformedOutput;
    verdict.detail = why;
    return verdict;
  }
  const CostResult cost = cost_of(formula, *assignment);
  if (!cost.hard_ok) {
    verdict.status = VerdictStatus::HardViolation;
    verdict.detail = "model falsifies a hard clause";
    return verdict;
  }
  verdict.status = VerdictStatus::Valid;
  verdict.true_cost = cost.cost;
  if (verdict.reported_cost && *verdict.reported_cost != cost.cost) {
    verdict.detail = "reported bound " + std::to_string(*verdict.reported_cost) + " differs from model cost " +
                     std::to_string(cost.cost);
  }
  return verdict;
}

ValidationVerdict validate_output(const WcnfFormula& formula, std::string_view solver_stdout) {
  std::istringstream in{std::string(solver_stdout)};
  return validate_output(formula, in);
}

}  // namespace maxconf
