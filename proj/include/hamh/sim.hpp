#pragma once

#include "hamh/directions.hpp"
#include "hamh/nets.hpp"
#include "hamh/rng.hpp"
#include "hamh/scenario.hpp"

#include <array>
#include <deque>
#include <string>
#include <vector>

namespace hamh::sim {

using nn::Mat;

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

struct ProtectedMovement {
  Dir from;
  Move turn;  // kLeft or kThrough only; right turns ride along everywhere
};

// The 8-phase set: the four dual through/left pairs plus the four
// single-approach through+left combinations.
class PhaseTable {
 public:
  static constexpr int kNumPhases = 8;
  static const std::array<std::array<ProtectedMovement, 2>, kNumPhases>& phases();
  // True when the movement may discharge under `phase`. Right turns are
  // permitted in every phase.
  static bool permits(int phase, Dir from, Move turn);
  static std::string phase_name(int phase);
};

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

inline constexpr int kLanesPerLink = 3;  // 0 = left, 1 = through, 2 = through+right
inline constexpr int kObsDim = 4 * kLanesPerLink;

struct Link {
  int id = -1;
  int from_intersection = -1;  // -1: boundary entry
  int to_intersection = -1;    // -1: boundary exit
  Dir approach = Dir::kNorth;  // side of `to` this link feeds (if to >= 0)
  int traversal_s = 1;
};

struct Intersection {
  int id = 0;
  int row = 0, col = 0;
  std::array<int, 4> in_links{-1, -1, -1, -1};   // by approach side
  std::array<int, 4> out_links{-1, -1, -1, -1};  // by exit side
};

struct RoadNetwork {
  int rows = 0, cols = 0;
  std::vector<Intersection> intersections;
  std::vector<Link> links;
  nets::Graph graph;

  int n_intersections() const { return rows * cols; }
  // Bidirectional intersection-to-intersection connections (2rc - r - c on a
  // full grid).
  int internal_connections() const;
  int lane_index(int link, int lane) const { return link * kLanesPerLink + lane; }
};

// Deterministic for equal inputs. Throws on invalid dimensions.
RoadNetwork build_network(const Scenario& scenario);

// ---------------------------------------------------------------------------
// Simulation state
// ---------------------------------------------------------------------------

struct RouteHop {
  int intersection = -1;
  Move turn = Move::kThrough;
};

struct Vehicle {
  int id = -1;
  long entry_s = 0;
  long exit_s = -1;  // unset until the vehicle leaves the network
  std::vector<RouteHop> route;
  int next_hop = 0;
};

struct PipelineEntry {
  int vehicle = -1;
  long ready_s = 0;  // second at which the vehicle reaches the waiting queue
};

struct LaneState {
  std::deque<PipelineEntry> pipeline;
  std::deque<int> queue;
};

enum class SignalMode { kGreen, kYellow, kAllRed };

inline constexpr int kYellowSeconds = 3;
inline constexpr int kAllRedSeconds = 2;

struct SignalState {
  int phase = 0;
  SignalMode mode = SignalMode::kGreen;
  int mode_remaining_s = 0;
  int pending_phase = 0;
};

struct ConservationCounts {
  long spawned = 0;
  long in_pipeline = 0;
  long in_queue = 0;
  long exited = 0;
  bool balanced() const { return spawned == in_pipeline + in_queue + exited; }
};

// Full traffic-network state at 1-second resolution. The per-second update
// order is: spawn arrivals, advance pipelines into queues, discharge heads of
// permitted lanes under green (1 veh/s/lane), advance signal timers
// (yellow -> all-red -> green), then advance the clock.
class SimState {
 public:
  SimState(const RoadNetwork& net, const Scenario& scenario, std::uint64_t seed);

  void step_second();
  // Decision-boundary phase selection. Choosing the current phase keeps green
  // uninterrupted; a change inserts 3 s yellow + 2 s all-red before the new
  // green. Throws on out-of-range phases or off-boundary calls.
  void apply_actions(const std::vector<int>& phases);

  // Waiting counts of the 12 incoming lanes of intersection i, ordered
  // (N, E, S, W) x (left, through, through). Pipeline vehicles are excluded.
  Eigen::VectorXd observe(int i) const;
  Mat observe_all() const;
  // r_i = -sum of waiting queue lengths over the incoming lanes.
  double reward(int i) const;
  // Sum over the phase's protected movements of upstream queue minus the
  // mean downstream queue of the receiving link (0 for exit links).
  double pressure(int i, int phase) const;

  long clock() const { return clock_s_; }
  const RoadNetwork& network() const { return *net_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  const SignalState& signal(int i) const { return signals_[static_cast<std::size_t>(i)]; }
  ConservationCounts counts() const;
  long spawned_count() const { return spawned_; }
  long exited_count() const { return exited_; }

  // Places a synthetic vehicle directly into a waiting queue; used to craft
  // states in tests and verification tools.
  void inject_queued_vehicle(int intersection, Dir from, int lane, Move turn);

  const LaneState& lane(int link, int lane) const {
    return lanes_[static_cast<std::size_t>(net_->lane_index(link, lane))];
  }

 private:
  void spawn_arrivals();
  void advance_pipelines();
  void discharge_green();
  void advance_signals();
  void place_on_link(int vehicle, int link);
  int pick_through_lane(int link) const;

  const RoadNetwork* net_;
  const Scenario* scenario_;
  std::vector<LaneState> lanes_;
  std::vector<SignalState> signals_;
  std::vector<Vehicle> vehicles_;
  std::vector<Rng> arrival_streams_;  // one per schedule entry
  std::vector<double> spawn_accumulators_;
  long clock_s_ = 0;
  long spawned_ = 0;
  long exited_ = 0;
};

// Average travel time over all vehicles that entered; vehicles still inside
// at the horizon contribute horizon_s as their exit time. Throws when no
// vehicle entered.
double travel_time_metric(const std::vector<Vehicle>& vehicles, long horizon_s);

}  // namespace hamh::sim
