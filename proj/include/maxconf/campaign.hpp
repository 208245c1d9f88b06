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
#include <optional>
#include <string>

#include "json.hpp"

namespace maxconf {

// Campaign stages, in pipeline order.
enum class Stage { Tuned, Selected, PortfolioBuilt };

std::string_view to_string(Stage stage);

// A workdir shared by tune, select and portfolio. campaign.json records, per
// completed stage, the hash of the inputs it consumed and of the output it
// produced, so a later stage can refuse stale inputs.
class Campaign {
 public:
  static Campaign open(const std::filesystem::path& workdir);

  const std::filesystem::path& workdir() const { return workdir_; }
  std::filesystem::path runs_dir() const { return workdir_ / "runs"; }
  std::filesystem::path tune_dir() const { return workdir_ / "tune"; }
  std::filesystem::path select_dir() const { return workdir_ / "select"; }
  std::filesystem::path portfolio_dir() const { return workdir_ / "portfolio"; }
  std::filesystem::path simulate_dir() const { return workdir_ / "simulate"; }

  std::optional<std::string> scenario_path() const;
  void set_scenario(const std::filesystem::path& scenario, const std::string& scenario_hash);

  bool has(Stage stage) const;
  // Output hash recorded for the stage; throws if the stage has not run.
  std::string output_hash(Stage stage) const;
  std::string input_hash(Stage stage) const;

  // Records the stage and drops every later stage marker.
  void mark(Stage stage, const std::string& input_hash, const std::string& output_hash, nlohmann::json extra = {});

  void save() const;

 private:
  std::filesystem::path workdir_;
  nlohmann::json state_;
};

std::string file_hash(const std::filesystem::path& path);

}  // namespace maxconf
