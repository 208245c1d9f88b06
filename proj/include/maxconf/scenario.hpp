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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "maxconf/param_space.hpp"
#include "maxconf/run_record.hpp"
#include "maxconf/scoring.hpp"
#include "maxconf/tuner.hpp"

namespace maxconf {

// Declarative description of a tuning campaign. Line-oriented text:
//
//   solver         = ./my-solver                 # relative to the scenario file
//   seed_flag      = --seed={value}
//   instances      = train.txt                   # one instance path per line
//   test_instances = test.txt                    # optional
//   bounds         = best.bounds                 # repeatable; merged
//   cpu_limit      = 60
//   memory_limit   = 32G
//   grace          = 2
//   wall_limit     = 0
//   param <name> categorical {a,b,c} default <v> flag <template>
//   param <name> integer [lo,hi] default <v> flag <template>
//   param <name> real [lo,hi] default <v> flag <template>
//   forbid <name>=<value> <name>=<value> ...
//   tuner.population = 100      tuner.tournaments = 5     tuner.max_age = 3
//   tuner.mutation_rate = 0.1   tuner.elite_default = true
//   tuner.policy = all | incremental <start_fraction> <full_at_generation>
struct Scenario {
  std::filesystem::path path;
  CommandTemplate command;
  ParameterSpace space;
  RunLimits limits;
  std::vector<std::string> instances;
  std::vector<std::string> test_instances;
  std::vector<std::filesystem::path> bounds_files;
  TunerSettings tuner;  // budget, seed and max_generations come from the caller

  BoundsRegistry load_bounds() const;
};

// Throws ParseError with the offending line number.
Scenario parse_scenario(std::istream& in, const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

// Reads an instance list: one path per line, '#' comments, paths relative to
// the list file's directory.
std::vector<std::string> load_instance_list(const std::filesystem::path& path);

}  // namespace maxconf
