#pragma once

// JSON scenario and community snapshot files. Units are part of the field
// names (_ms, _s, _mb, _mc). Every problem found is reported, each prefixed
// with the path of the offending field.

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "mecctl/placement.hpp"
#include "mecctl/sim.hpp"

namespace mecctl::io {

class LoadError : public std::runtime_error {
 public:
  explicit LoadError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct LoadedScenario {
  sim::Scenario scenario;
  std::vector<std::string> warnings;
};

// Parses and validates; throws LoadError listing every problem.
LoadedScenario parse_scenario(const nlohmann::json& doc);
LoadedScenario load_scenario(const std::string& path);

struct Snapshot {
  placement::CommunityState state;
  placement::Deployed previous_gpu;
  placement::Deployed previous_cpu;
  placement::PlacementConfig config;
};

Snapshot parse_snapshot(const nlohmann::json& doc);
Snapshot load_snapshot(const std::string& path);

// Reads a whole file as JSON; throws LoadError on I/O or syntax errors.
nlohmann::json read_json(const std::string& path);

}  // namespace mecctl::io
