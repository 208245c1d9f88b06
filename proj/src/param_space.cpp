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

#include "maxconf/param_space.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "maxconf/error.hpp"
#include "maxconf/hash.hpp"

namespace maxconf {
namespace {

constexpr int kMaxSampleAttempts = 1000;

std::string substitute(const std::string& tmpl, const std::string& value) {
  static constexpr std::string_view kSlot = "{value}";
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = tmpl.find(kSlot, pos);
    if (hit == std::string::npos) break;
    out.append(tmpl, pos, hit - pos).append(value);
    pos = hit + kSlot.size();
  }
  out.append(tmpl, pos);
  return out;
}

std::string domain_kind(const Domain& d) {
  return std::visit(
      [](const auto& dom) -> std::string {
        using T = std::decay_t<decltype(dom)>;
        if constexpr (std::is_same_v<T, Categorical>) return "categorical";
        else if constexpr (std::is_same_v<T, IntegerRange>) return "integer";
        else return "real";
      },
      d);
}

}  // namespace

std::string format_value(const ParamValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else {
          char buf[64];
          auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
          return std::string(buf, ptr);
        }
      },
      v);
}

bool ParamDef::contains(const ParamValue& v) const {
  return std::visit(
      [&](const auto& dom) -> bool {
        using T = std::decay_t<decltype(dom)>;
        if constexpr (std::is_same_v<T, Categorical>) {
          const auto* s = std::get_if<std::string>(&v);
          return s && std::find(dom.values.begin(), dom.values.end(), *s) != dom.values.end();
        } else if constexpr (std::is_same_v<T, IntegerRange>) {
          const auto* i = std::get_if<std::int64_t>(&v);
          return i && *i >= dom.lo && *i <= dom.hi;
        } else {
          const auto* d = std::get_if<double>(&v);
          return d && std::isfinite(*d) && *d >= dom.lo && *d <= dom.hi;
        }
      },
      domain);
}

Configuration::Configuration(std::map<std::string, ParamValue> values) : values_(std::move(values)) {
  id_ = short_hash(canonical());
}

std::string Configuration::canonical() const {
  std::string out;
  for (const auto& [name, v] : values_) out.append(name).append("=").append(format_value(v)).append("\n");
  return out;
}

nlohmann::json Configuration::to_json() const {
  nlohmann::json values = nlohmann::json::object();
  for (const auto& [name, v] : values_) {
    std::visit([&](const auto& x) { values[name] = x; }, v);
  }
  return {{"id", id_}, {"values", values}};
}

ParameterSpace::ParameterSpace(std::vector<ParamDef> params, std::vector<ForbiddenCombination> forbidden)
    : params_(std::move(params)), forbidden_(std::move(forbidden)) {
  std::set<std::string> names;
  for (const auto& p : params_) {
    if (p.name.empty()) throw Error("parameter with empty name");
    if (!names.insert(p.name).second) throw Error("duplicate parameter '" + p.name + "'");
    std::visit(
        [&](const auto& dom) {
          using T = std::decay_t<decltype(dom)>;
          if constexpr (std::is_same_v<T, Categorical>) {
            if (dom.values.empty()) throw Error("parameter '" + p.name + "' has no categories");
            std::set<std::string> distinct(dom.values.begin(), dom.values.end());
            if (distinct.size() != dom.values.size()) {
              throw Error("parameter '" + p.name + "' has repeated categories");
            }
          } else {
            if (!(dom.lo <= dom.hi)) throw Error("parameter '" + p.name + "' has lo > hi");
          }
        },
        p.domain);
    if (!p.contains(p.default_value)) {
      throw Error("default of parameter '" + p.name + "' is outside its " + domain_kind(p.domain) + " domain");
    }
  }
  for (const auto& combo : forbidden_) {
    if (combo.empty()) throw Error("empty forbidden combination");
    for (const auto& [name, value] : combo) {
      const ParamDef* def = find(name);
      if (!def) throw Error("constraint names unknown parameter '" + name + "'");
      if (!def->contains(value)) {
        throw Error("constraint value '" + format_value(value) + "' outside the domain of '" + name + "'");
      }
    }
  }
  std::map<std::string, ParamValue> defaults;
  for (const auto& p : params_) defaults.emplace(p.name, p.default_value);
  if (violates_constraints(defaults)) throw Error("the default configuration violates a constraint");
}

const ParamDef* ParameterSpace::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

bool ParameterSpace::violates_constraints(const std::map<std::string, ParamValue>& values) const {
  return std::any_of(forbidden_.begin(), forbidden_.end(), [&](const ForbiddenCombination& combo) {
    return std::all_of(combo.begin(), combo.end(), [&](const auto& nv) {
      auto it = values.find(nv.first);
      return it != values.end() && it->second == nv.second;
    });
  });
}

Configuration ParameterSpace::make(std::map<std::string, ParamValue> values) const {
  if (values.size() != params_.size()) throw Error("configuration does not cover the parameter space");
  for (const auto& p : params_) {
    auto it = values.find(p.name);
    if (it == values.end()) throw Error("configuration is missing parameter '" + p.name + "'");
    if (!p.contains(it->second)) {
      throw Error("value '" + format_value(it->second) + "' outside the domain of '" + p.name + "'");
    }
  }
  if (violates_constraints(values)) throw Error("configuration violates a forbidden combination");
  return Configuration(std::move(values));
}

ParamValue ParameterSpace::parse_value(const ParamDef& def, std::string_view text) const {
  return std::visit(
      [&](const auto& dom) -> ParamValue {
        using T = std::decay_t<decltype(dom)>;
        if constexpr (std::is_same_v<T, Categorical>) {
          return std::string(text);
        } else if constexpr (std::is_same_v<T, IntegerRange>) {
          std::int64_t v = 0;
          auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
          if (ec != std::errc() || ptr != text.data() + text.size()) {
            throw Error("'" + std::string(text) + "' is not an integer (parameter '" + def.name + "')");
          }
          return v;
        } else {
          double v = 0;
          auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
          if (ec != std::errc() || ptr != text.data() + text.size()) {
            throw Error("'" + std::string(text) + "' is not a real (parameter '" + def.name + "')");
          }
          return v;
        }
      },
      def.domain);
}

Configuration ParameterSpace::from_json(const nlohmann::json& j) const {
  const auto& values = j.contains("values") ? j.at("values") : j;
  std::map<std::string, ParamValue> out;
  for (const auto& p : params_) {
    if (!values.contains(p.name)) throw Error("configuration JSON lacks parameter '" + p.name + "'");
    const auto& v = values.at(p.name);
    if (v.is_string()) out.emplace(p.name, parse_value(p, v.get<std::string>()));
    else if (std::holds_alternative<IntegerRange>(p.domain) && v.is_number_integer()) out.emplace(p.name, v.get<std::int64_t>());
    else if (std::holds_alternative<RealRange>(p.domain) && v.is_number()) out.emplace(p.name, v.get<double>());
    else throw Error("configuration JSON has a mistyped value for '" + p.name + "'");
  }
  Configuration c = make(std::move(out));
  if (j.contains("id") && j.at("id").get<std::string>() != c.id()) {
    throw Error("configuration id mismatch for " + j.at("id").get<std::string>());
  }
  return c;
}

Configuration default_config(const ParameterSpace& space) {
  std::map<std::string, ParamValue> values;
  for (const auto& p : space.params()) values.emplace(p.name, p.default_value);
  return space.make(std::move(values));
}

ParamValue random_value(const ParamDef& def, std::mt19937_64& rng) {
  return std::visit(
      [&](const auto& dom) -> ParamValue {
        using T = std::decay_t<decltype(dom)>;
        if constexpr (std::is_same_v<T, Categorical>) {
          std::uniform_int_distribution<std::size_t> pick(0, dom.values.size() - 1);
          return dom.values[pick(rng)];
        } else if constexpr (std::is_same_v<T, IntegerRange>) {
          std::uniform_int_distribution<std::int64_t> pick(dom.lo, dom.hi);
          return pick(rng);
        } else {
          if (dom.lo == dom.hi) return dom.lo;
          std::uniform_real_distribution<double> pick(dom.lo, dom.hi);
          return pick(rng);
        }
      },
      def.domain);
}

Configuration sample_config(const ParameterSpace& space, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
    std::map<std::string, ParamValue> values;
    for (const auto& p : space.params()) values.emplace(p.name, random_value(p, rng));
    if (!space.violates_constraints(values)) return space.make(std::move(values));
  }
  throw Error("no constraint-satisfying configuration found in " + std::to_string(kMaxSampleAttempts) +
              " samples; the space is too constrained for rejection sampling");
}

Configuration sample_config(const ParameterSpace& space, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  return sample_config(space, rng);
}

std::vector<std::string> render_cmdline(const ParameterSpace& space, const CommandTemplate& command,
                                        const Configuration& config, const std::string& instance_path,
                                        std::uint64_t seed) {
  std::vector<std::string> argv{command.solver, instance_path};
  for (const auto& p : space.params()) {
    if (p.flag_template.empty()) continue;
    argv.push_back(substitute(p.flag_template, format_value(config.at(p.name))));
  }
  if (!command.seed_flag.empty()) argv.push_back(substitute(command.seed_flag, std::to_string(seed)));
  return argv;
}

}  // namespace maxconf
