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
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace maxconf {

using ParamValue = std::variant<std::string, std::int64_t, double>;

struct Categorical {
  std::vector<std::string> values;
};
struct IntegerRange {
  std::int64_t lo = 0, hi = 0;  // inclusive
};
struct RealRange {
  double lo = 0, hi = 0;  // inclusive
};
using Domain = std::variant<Categorical, IntegerRange, RealRange>;

struct ParamDef {
  std::string name;
  Domain domain;
  ParamValue default_value;
  std::string flag_template;  // "{value}" is replaced by the rendered value

  bool contains(const ParamValue& v) const;
};

// A forbidden partial assignment: these name/value pairs may not all co-occur.
using ForbiddenCombination = std::vector<std::pair<std::string, ParamValue>>;

// Shortest decimal text that round-trips through parsing.
std::string format_value(const ParamValue& v);

class ParameterSpace;

// A total, valid assignment of values to the parameters of a space.
// The id is a content hash of the canonical name=value listing.
class Configuration {
 public:
  Configuration() : Configuration(std::map<std::string, ParamValue>{}) {}

  const std::string& id() const { return id_; }
  const std::map<std::string, ParamValue>& values() const { return values_; }
  const ParamValue& at(const std::string& name) const { return values_.at(name); }
  std::string canonical() const;

  bool operator==(const Configuration& o) const { return id_ == o.id_; }

  nlohmann::json to_json() const;

 private:
  friend class ParameterSpace;
  explicit Configuration(std::map<std::string, ParamValue> values);

  std::map<std::string, ParamValue> values_;
  std::string id_;
};

class ParameterSpace {
 public:
  ParameterSpace() = default;
  // Throws Error when names repeat, a domain is empty or inverted, a default
  // lies outside its domain, or the default configuration is forbidden.
  ParameterSpace(std::vector<ParamDef> params, std::vector<ForbiddenCombination> forbidden = {});

  const std::vector<ParamDef>& params() const { return params_; }
  const std::vector<ForbiddenCombination>& forbidden() const { return forbidden_; }
  const ParamDef* find(std::string_view name) const;
  std::size_t size() const { return params_.size(); }

  bool violates_constraints(const std::map<std::string, ParamValue>& values) const;

  // Validates and builds a configuration; throws Error on any violation.
  Configuration make(std::map<std::string, ParamValue> values) const;
  Configuration from_json(const nlohmann::json& j) const;

  // Parses `text` as a value of parameter `name` (used by scenario files and
  // configuration JSON).
  ParamValue parse_value(const ParamDef& def, std::string_view text) const;

 private:
  std::vector<ParamDef> params_;
  std::vector<ForbiddenCombination> forbidden_;
};

Configuration default_config(const ParameterSpace& space);

// Uniform draw from a parameter's domain.
ParamValue random_value(const ParamDef& def, std::mt19937_64& rng);

// Independent uniform draw per parameter, rejection-resampled until no
// constraint is violated (at most 1000 attempts, then Error).
Configuration sample_config(const ParameterSpace& space, std::mt19937_64& rng);
Configuration sample_config(const ParameterSpace& space, std::uint64_t rng_seed);

struct CommandTemplate {
  std::string solver;
  std::string seed_flag;  // empty when the solver takes no seed
};

// solver, instance, one flag per parameter in space order, then the seed flag.
std::vector<std::string> render_cmdline(const ParameterSpace& space, const CommandTemplate& command,
                                        const Configuration& config, const std::string& instance_path,
                                        std::uint64_t seed);

}  // namespace maxconf
