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

#include "maxconf/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "maxconf/error.hpp"

namespace maxconf {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T number(const std::string& text, const std::string& what) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw Error("invalid " + what + " '" + text + "'");
  return v;
}

std::uint64_t memory_amount(std::string text) {
  std::uint64_t scale = 1;
  if (!text.empty()) {
    switch (text.back()) {
      case 'K': case 'k': scale = 1ULL << 10; break;
      case 'M': case 'm': scale = 1ULL << 20; break;
      case 'G': case 'g': scale = 1ULL << 30; break;
      default: break;
    }
    if (scale != 1) text.pop_back();
  }
  return number<std::uint64_t>(text, "memory limit") * scale;
}

bool boolean(const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw Error("expected true or false, got '" + text + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : std::filesystem::absolute(base_dir / path).lexically_normal();
}

struct RawParam {
  ParamDef def;
  std::string default_text;
  std::size_t line = 0;
};

RawParam parse_param(const std::string& rest) {
  // <name> <type> <domain> default <value> flag <template>
  std::istringstream in(rest);
  RawParam raw;
  std::string type;
  if (!(in >> raw.def.name >> type)) throw Error("expected 'param <name> <type> <domain> ...'");
  std::string tail;
  std::getline(in, tail);
  tail = trim(tail);
  const char open = type == "categorical" ? '{' : '[';
  const char close = type == "categorical" ? '}' : ']';
  if (tail.empty() || tail.front() != open) throw Error(std::string("expected domain starting with '") + open + "'");
  const auto end = tail.find(close);
  if (end == std::string::npos) throw Error(std::string("unterminated domain, missing '") + close + "'");
  const auto items = split(std::string_view(tail).substr(1, end - 1), ',');
  if (type == "categorical") {
    for (const auto& v : items) {
      if (v.empty()) throw Error("empty category");
    }
    raw.def.domain = Categorical{items};
  } else if (type == "integer") {
    if (items.size() != 2) throw Error("integer domain needs [lo,hi]");
    raw.def.domain = IntegerRange{number<std::int64_t>(items[0], "bound"), number<std::int64_t>(items[1], "bound")};
  } else if (type == "real") {
    if (items.size() != 2) throw Error("real domain needs [lo,hi]");
    raw.def.domain = RealRange{number<double>(items[0], "bound"), number<double>(items[1], "bound")};
  } else {
    throw Error("unknown parameter type '" + type + "' (categorical, integer, real)");
  }
  std::istringstream opts(tail.substr(end + 1));
  std::string word;
  bool have_default = false;
  while (opts >> word) {
    if (word == "default") {
      if (!(opts >> raw.default_text)) throw Error("missing default value");
      have_default = true;
    } else if (word == "flag") {
      std::getline(opts, raw.def.flag_template);
      raw.def.flag_template = trim(raw.def.flag_template);
      if (raw.def.flag_template.empty()) throw Error("missing flag template");
    } else {
      throw Error("unexpected '" + word + "' in parameter definition");
    }
  }
  if (!have_default) throw Error("parameter '" + raw.def.name + "' has no default");
  return raw;
}

}  // namespace

BoundsRegistry Scenario::load_bounds() const {
  std::vector<BoundsRegistry> regs;
  for (const auto& p : bounds_files) regs.push_back(BoundsRegistry::load(p));
  return merge_bounds(regs);
}

std::vector<std::string> load_instance_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open instance list");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (!line.empty()) out.push_back(resolve(path.parent_path(), line).string());
  }
  return out;
}

Scenario parse_scenario(std::istream& in, const std::filesystem::path& path) {
  Scenario sc;
  sc.path = path;
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::current_path();
  const std::string source = path.string();

  std::vector<RawParam> params;
  std::vector<std::pair<std::size_t, std::string>> forbids;
  std::size_t line_no = 0;
  std::string line;
  auto fail = [&](const std::string& what) -> ParseError { return ParseError(source, line_no, what); };

  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    try {
      if (line.rfind("param ", 0) == 0) {
        params.push_back(parse_param(line.substr(6)));
        params.back().line = line_no;
        continue;
      }
      if (line.rfind("forbid ", 0) == 0) {
        forbids.emplace_back(line_no, line.substr(7));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error("expected 'key = value', 'param ...' or 'forbid ...'");
      const std::string key = trim(std::string_view(line).substr(0, eq));
      const std::string value = trim(std::string_view(line).substr(eq + 1));
      if (key == "solver") {
        sc.command.solver = value.find('/') == std::string::npos ? value : resolve(base, value).string();
      } else if (key == "seed_flag") {
        sc.command.seed_flag = value;
      } else if (key == "instances") {
        sc.instances = load_instance_list(resolve(base, value));
      } else if (key == "test_instances") {
        sc.test_instances = load_instance_list(resolve(base, value));
      } else if (key == "bounds") {
        sc.bounds_files.push_back(resolve(base, value));
      } else if (key == "cpu_limit") {
        sc.limits.cpu_seconds = number<double>(value, "cpu limit");
      } else if (key == "memory_limit") {
        sc.limits.memory_bytes = memory_amount(value);
      } else if (key == "grace") {
        sc.limits.grace_seconds = number<double>(value, "grace");
      } else if (key == "wall_limit") {
        sc.limits.wall_seconds = number<double>(value, "wall limit");
      } else if (key == "tuner.population") {
        sc.tuner.population_size = number<int>(value, "population size");
      } else if (key == "tuner.tournaments") {
        sc.tuner.num_tournaments = number<int>(value, "tournament count");
      } else if (key == "tuner.max_age") {
        sc.tuner.max_age = number<int>(value, "max age");
      } else if (key == "tuner.mutation_rate") {
        sc.tuner.mutation_rate = number<double>(value, "mutation rate");
      } else if (key == "tuner.elite_default") {
        sc.tuner.default_elite = boolean(value);
      } else if (key == "tuner.policy") {
        std::istringstream p(value);
        std::string kind;
        p >> kind;
        if (kind == "all") {
          sc.tuner.instance_policy = InstancePolicy::all();
        } else if (kind == "incremental") {
          std::string frac, full;
          if (!(p >> frac >> full)) throw Error("incremental policy needs <start_fraction> <full_at_generation>");
          sc.tuner.instance_policy =
              InstancePolicy::incremental(number<double>(frac, "start fraction"), number<int>(full, "generation"));
        } else {
          throw Error("unknown instance policy '" + kind + "'");
        }
      } else {
        throw Error("unknown key '" + key + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw fail(e.what());
    }
  }

  line_no = 0;
  if (sc.command.solver.empty()) throw fail("scenario has no 'solver'");
  if (sc.instances.empty()) throw fail("scenario has no training instances");

  std::vector<ParamDef> defs;
  for (auto& raw : params) {
    line_no = raw.line;
    try {
      raw.def.default_value = ParameterSpace{}.parse_value(raw.def, raw.default_text);
      // Validates this definition on its own so errors keep their line.
      ParameterSpace single({raw.def});
    } catch (const Error& e) {
      throw fail(e.what());
    }
    for (const auto& d : defs) {
      if (d.name == raw.def.name) throw fail("duplicate parameter '" + raw.def.name + "'");
    }
    defs.push_back(raw.def);
  }
  std::vector<ForbiddenCombination> forbidden;
  for (const auto& [fline, text] : forbids) {
    line_no = fline;
    ForbiddenCombination combo;
    std::istringstream words(text);
    std::string pair;
    while (words >> pair) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos) throw fail("expected <name>=<value>, got '" + pair + "'");
      const std::string name = pair.substr(0, eq);
      auto it = std::find_if(defs.begin(), defs.end(), [&](const ParamDef& d) { return d.name == name; });
      if (it == defs.end()) throw fail("unknown parameter '" + name + "'");
      try {
        combo.emplace_back(name, ParameterSpace{}.parse_value(*it, pair.substr(eq + 1)));
      } catch (const Error& e) {
        throw fail(e.what());
      }
    }
    if (combo.empty()) throw fail("empty forbid line");
    forbidden.push_back(std::move(combo));
  }
  line_no = 0;
  try {
    sc.space = ParameterSpace(std::move(defs), std::move(forbidden));
    sc.limits.validate();
  } catch (const Error& e) {
    throw fail(e.what());
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open scenario");
  return parse_scenario(in, std::filesystem::absolute(path));
}

}  // namespace maxconf
