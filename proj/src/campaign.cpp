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

#include "maxconf/campaign.hpp"

#include <fstream>
#include <sstream>

#include "maxconf/error.hpp"
#include "maxconf/hash.hpp"

namespace maxconf {

using nlohmann::json;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Tuned: return "tuned";
    case Stage::Selected: return "selected";
    case Stage::PortfolioBuilt: return "portfolio_built";
  }
  return "unknown";
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return short_hash(buf.str());
}

Campaign Campaign::open(const std::filesystem::path& workdir) {
  Campaign c;
  c.workdir_ = std::filesystem::absolute(workdir);
  std::filesystem::create_directories(c.workdir_);
  const auto file = c.workdir_ / "campaign.json";
  if (std::filesystem::exists(file)) {
    std::ifstream in(file);
    try {
      c.state_ = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError(file.string(), 0, e.what());
    }
  } else {
    c.state_ = {{"stages", json::object()}};
  }
  return c;
}

std::optional<std::string> Campaign::scenario_path() const {
  if (!state_.contains("scenario")) return std::nullopt;
  return state_.at("scenario").get<std::string>();
}

void Campaign::set_scenario(const std::filesystem::path& scenario, const std::string& scenario_hash) {
  state_["scenario"] = std::filesystem::absolute(scenario).string();
  state_["scenario_hash"] = scenario_hash;
}

bool Campaign::has(Stage stage) const { return state_.at("stages").contains(std::string(to_string(stage))); }

std::string Campaign::output_hash(Stage stage) const {
  if (!has(stage)) throw Error("campaign stage '" + std::string(to_string(stage)) + "' has not run");
  return state_.at("stages").at(std::string(to_string(stage))).at("output_hash").get<std::string>();
}

std::string Campaign::input_hash(Stage stage) const {
  if (!has(stage)) throw Error("campaign stage '" + std::string(to_string(stage)) + "' has not run");
  return state_.at("stages").at(std::string(to_string(stage))).at("input_hash").get<std::string>();
}

void Campaign::mark(Stage stage, const std::string& input_hash, const std::string& output_hash, json extra) {
  auto& stages = state_["stages"];
  for (auto later : {Stage::Tuned, Stage::Selected, Stage::PortfolioBuilt}) {
    if (static_cast<int>(later) > static_cast<int>(stage)) stages.erase(std::string(to_string(later)));
  }
  json entry{{"input_hash", input_hash}, {"output_hash", output_hash}};
  if (!extra.is_null()) entry["extra"] = std::move(extra);
  stages[std::string(to_string(stage))] = std::move(entry);
}

void Campaign::save() const {
  const auto file = workdir_ / "campaign.json";
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << state_.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, file);
}

}  // namespace maxconf
