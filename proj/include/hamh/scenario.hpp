#pragma once

#include "hamh/directions.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace hamh::sim {

enum class ArrivalProcess { kDeterministic, kPoisson };

struct RateWindow {
  double t0_s = 0.0;
  double t1_s = 0.0;
  double rate_veh_per_hour = 0.0;
};

// Piecewise-constant arrival description for one boundary entry approach.
struct ArrivalSchedule {
  int row = 0;
  int col = 0;
  Dir side = Dir::kNorth;
  ArrivalProcess process = ArrivalProcess::kPoisson;
  std::vector<RateWindow> windows;

  double rate_at(double t_s) const;
};

struct TurnRatios {
  double left = 0.1;
  double through = 0.8;
  double right = 0.1;
};

// Declarative experiment description. Parsed from a plain-text key/value +
// table format; `config` carries training-hyperparameter overrides that the
// harness applies on top of the built-in defaults.
struct Scenario {
  std::string name;
  int rows = 1;
  int cols = 1;
  double link_length_m = 300.0;
  double speed_mps = 10.0;
  int episode_s = 3600;
  int decision_interval_s = 10;
  TurnRatios turn_ratios;
  std::vector<ArrivalSchedule> arrivals;
  std::map<std::string, std::string> config;

  int n_intersections() const { return rows * cols; }
  int steps_per_episode() const { return episode_s / decision_interval_s; }
  void validate() const;
};

// Parses a scenario file. Syntax errors carry the 1-based line number;
// semantic violations (negative rates, turn ratios not summing to 1, entries
// outside the grid or on non-boundary sides) are rejected.
Scenario parse_scenario(std::istream& is, const std::string& display_name);
Scenario parse_scenario_file(const std::string& path);

// Writes a scenario in the same format; write-then-read is the identity.
void write_scenario(std::ostream& os, const Scenario& s);
std::string scenario_to_string(const Scenario& s);

// Resolves a scenario argument: an existing path is used as-is, otherwise the
// name is looked up as <dir>/<name>.scn for each directory in
// $HAMH_SCENARIO_DIR, ./scenarios, and the compiled-in default.
std::string resolve_scenario_path(const std::string& name_or_path);

}  // namespace hamh::sim
