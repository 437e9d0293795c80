#include "hamh/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hamh::sim {

namespace {

std::string fmt_f64(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void syntax_error(const std::string& name, int line, const std::string& what) {
  throw std::runtime_error(name + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

double ArrivalSchedule::rate_at(double t_s) const {
  for (const RateWindow& w : windows)
    if (t_s >= w.t0_s && t_s < w.t1_s) return w.rate_veh_per_hour;
  return 0.0;
}

void Scenario::validate() const {
  if (rows < 1 || cols < 1) throw std::runtime_error(name + ": grid dimensions must be >= 1");
  if (link_length_m <= 0.0 || speed_mps <= 0.0)
    throw std::runtime_error(name + ": link length and speed must be positive");
  if (episode_s <= 0 || decision_interval_s <= 0 || episode_s % decision_interval_s != 0)
    throw std::runtime_error(name + ": episode length must be a multiple of the decision interval");
  const double ratio_sum = turn_ratios.left + turn_ratios.through + turn_ratios.right;
  if (turn_ratios.left < 0.0 || turn_ratios.through < 0.0 || turn_ratios.right < 0.0 ||
      std::abs(ratio_sum - 1.0) > 1e-9)
    throw std::runtime_error(name + ": turn ratios must be nonnegative and sum to 1");
  for (const ArrivalSchedule& a : arrivals) {
    if (a.row < 0 || a.row >= rows || a.col < 0 || a.col >= cols)
      throw std::runtime_error(name + ": arrival entry outside the grid");
    const bool boundary = (a.side == Dir::kNorth && a.row == 0) ||
                          (a.side == Dir::kSouth && a.row == rows - 1) ||
                          (a.side == Dir::kWest && a.col == 0) ||
                          (a.side == Dir::kEast && a.col == cols - 1);
    if (!boundary)
      throw std::runtime_error(name + ": arrival entry on a non-boundary side " +
                               std::string(1, dir_letter(a.side)));
    for (const RateWindow& w : a.windows) {
      if (w.rate_veh_per_hour < 0.0) throw std::runtime_error(name + ": negative arrival rate");
      if (w.t1_s <= w.t0_s) throw std::runtime_error(name + ": empty arrival window");
    }
  }
  for (std::size_t i = 0; i < arrivals.size(); ++i)
    for (std::size_t j = i + 1; j < arrivals.size(); ++j)
      if (arrivals[i].row == arrivals[j].row && arrivals[i].col == arrivals[j].col &&
          arrivals[i].side == arrivals[j].side)
        throw std::runtime_error(name + ": duplicate arrival entry");
}

Scenario parse_scenario(std::istream& is, const std::string& display_name) {
  Scenario s;
  s.name = display_name;
  std::string line;
  int lineno = 0;
  ArrivalSchedule* open_entry = nullptr;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;

    auto want = [&](auto& v, const char* what) {
      if (!(ls >> v)) syntax_error(display_name, lineno, std::string("expected ") + what);
    };
    if (key == "name") {
      want(s.name, "a name");
    } else if (key == "rows") {
      want(s.rows, "an integer");
    } else if (key == "cols") {
      want(s.cols, "an integer");
    } else if (key == "link_length_m") {
      want(s.link_length_m, "a number");
    } else if (key == "speed_mps") {
      want(s.speed_mps, "a number");
    } else if (key == "episode_s") {
      want(s.episode_s, "an integer");
    } else if (key == "decision_interval_s") {
      want(s.decision_interval_s, "an integer");
    } else if (key == "turn_ratios") {
      want(s.turn_ratios.left, "three numbers (left through right)");
      want(s.turn_ratios.through, "three numbers (left through right)");
      want(s.turn_ratios.right, "three numbers (left through right)");
    } else if (key == "entry") {
      ArrivalSchedule a;
      std::string side, process;
      want(a.row, "row col side process");
      want(a.col, "row col side process");
      want(side, "row col side process");
      want(process, "row col side process");
      if (side.size() != 1) syntax_error(display_name, lineno, "side must be one of N E S W");
      try {
        a.side = dir_from_letter(side[0]);
      } catch (const std::invalid_argument&) {
        syntax_error(display_name, lineno, "side must be one of N E S W");
      }
      if (process == "poisson")
        a.process = ArrivalProcess::kPoisson;
      else if (process == "deterministic")
        a.process = ArrivalProcess::kDeterministic;
      else
        syntax_error(display_name, lineno, "process must be poisson or deterministic");
      s.arrivals.push_back(a);
      open_entry = &s.arrivals.back();
    } else if (key == "window") {
      if (open_entry == nullptr)
        syntax_error(display_name, lineno, "window before any entry line");
      RateWindow w;
      want(w.t0_s, "t0 t1 rate");
      want(w.t1_s, "t0 t1 rate");
      want(w.rate_veh_per_hour, "t0 t1 rate");
      open_entry->windows.push_back(w);
    } else if (key == "config") {
      std::string k, v;
      want(k, "a key and value");
      want(v, "a key and value");
      s.config[k] = v;
    } else {
      syntax_error(display_name, lineno, "unknown directive '" + key + "'");
    }
  }
  s.validate();
  return s;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scenario file '" + path + "'");
  std::string stem = std::filesystem::path(path).stem().string();
  return parse_scenario(f, stem);
}

void write_scenario(std::ostream& os, const Scenario& s) {
  os << "name " << s.name << "\n";
  os << "rows " << s.rows << "\n";
  os << "cols " << s.cols << "\n";
  os << "link_length_m " << fmt_f64(s.link_length_m) << "\n";
  os << "speed_mps " << fmt_f64(s.speed_mps) << "\n";
  os << "episode_s " << s.episode_s << "\n";
  os << "decision_interval_s " << s.decision_interval_s << "\n";
  os << "turn_ratios " << fmt_f64(s.turn_ratios.left) << ' ' << fmt_f64(s.turn_ratios.through)
     << ' ' << fmt_f64(s.turn_ratios.right) << "\n";
  for (const ArrivalSchedule& a : s.arrivals) {
    os << "entry " << a.row << ' ' << a.col << ' ' << dir_letter(a.side) << ' '
       << (a.process == ArrivalProcess::kPoisson ? "poisson" : "deterministic") << "\n";
    for (const RateWindow& w : a.windows)
      os << "window " << fmt_f64(w.t0_s) << ' ' << fmt_f64(w.t1_s) << ' '
         << fmt_f64(w.rate_veh_per_hour) << "\n";
  }
  for (const auto& [k, v] : s.config) os << "config " << k << ' ' << v << "\n";
}

std::string scenario_to_string(const Scenario& s) {
  std::ostringstream os;
  write_scenario(os, s);
  return os.str();
}

std::string resolve_scenario_path(const std::string& name_or_path) {
  namespace fs = std::filesystem;
  if (fs::exists(name_or_path)) return name_or_path;
  std::vector<std::string> dirs;
  if (const char* env = std::getenv("HAMH_SCENARIO_DIR")) dirs.push_back(env);
  dirs.push_back("scenarios");
#ifdef HAMH_DEFAULT_SCENARIO_DIR
  dirs.push_back(HAMH_DEFAULT_SCENARIO_DIR);
#endif
  for (const std::string& d : dirs) {
    const fs::path p = fs::path(d) / (name_or_path + ".scn");
    if (fs::exists(p)) return p.string();
    const fs::path q = fs::path(d) / name_or_path;
    if (fs::exists(q)) return q.string();
  }
  throw std::runtime_error("cannot resolve scenario '" + name_or_path + "'");
}

}  // namespace hamh::sim
