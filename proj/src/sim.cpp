#include "hamh/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hamh::sim {

// ---------------------------------------------------------------------------
// PhaseTable
// ---------------------------------------------------------------------------

const std::array<std::array<ProtectedMovement, 2>, PhaseTable::kNumPhases>& PhaseTable::phases() {
  static const std::array<std::array<ProtectedMovement, 2>, kNumPhases> table = {{
      {{{Dir::kEast, Move::kThrough}, {Dir::kWest, Move::kThrough}}},
      {{{Dir::kNorth, Move::kThrough}, {Dir::kSouth, Move::kThrough}}},
      {{{Dir::kEast, Move::kLeft}, {Dir::kWest, Move::kLeft}}},
      {{{Dir::kNorth, Move::kLeft}, {Dir::kSouth, Move::kLeft}}},
      {{{Dir::kEast, Move::kThrough}, {Dir::kEast, Move::kLeft}}},
      {{{Dir::kWest, Move::kThrough}, {Dir::kWest, Move::kLeft}}},
      {{{Dir::kNorth, Move::kThrough}, {Dir::kNorth, Move::kLeft}}},
      {{{Dir::kSouth, Move::kThrough}, {Dir::kSouth, Move::kLeft}}},
  }};
  return table;
}

bool PhaseTable::permits(int phase, Dir from, Move turn) {
  if (phase < 0 || phase >= kNumPhases) throw std::out_of_range("PhaseTable: bad phase index");
  if (turn == Move::kRight) return true;
  for (const ProtectedMovement& m : phases()[static_cast<std::size_t>(phase)])
    if (m.from == from && m.turn == turn) return true;
  return false;
}

std::string PhaseTable::phase_name(int phase) {
  const auto& ms = phases().at(static_cast<std::size_t>(phase));
  auto one = [](const ProtectedMovement& m) {
    return std::string(1, dir_letter(m.from)) + (m.turn == Move::kLeft ? "-L" : "-T");
  };
  return one(ms[0]) + "+" + one(ms[1]);
}

// ---------------------------------------------------------------------------
// Network construction
// ---------------------------------------------------------------------------

int RoadNetwork::internal_connections() const {
  int n = 0;
  for (const Link& l : links)
    if (l.from_intersection >= 0 && l.to_intersection >= 0) ++n;
  return n / 2;
}

RoadNetwork build_network(const Scenario& scenario) {
  if (scenario.rows < 1 || scenario.cols < 1)
    throw std::invalid_argument("build_network: grid dimensions must be >= 1");
  if (scenario.link_length_m <= 0.0 || scenario.speed_mps <= 0.0)
    throw std::invalid_argument("build_network: link length and speed must be positive");

  RoadNetwork net;
  net.rows = scenario.rows;
  net.cols = scenario.cols;
  const int n = scenario.rows * scenario.cols;
  const int traversal =
      std::max(1, static_cast<int>(std::lround(scenario.link_length_m / scenario.speed_mps)));

  net.intersections.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < scenario.rows; ++r)
    for (int c = 0; c < scenario.cols; ++c) {
      Intersection& x = net.intersections[static_cast<std::size_t>(r * scenario.cols + c)];
      x.id = r * scenario.cols + c;
      x.row = r;
      x.col = c;
    }

  auto neighbor = [&](int id, Dir d) -> int {
    const int r = id / scenario.cols, c = id % scenario.cols;
    switch (d) {
      case Dir::kNorth: return r > 0 ? id - scenario.cols : -1;
      case Dir::kSouth: return r + 1 < scenario.rows ? id + scenario.cols : -1;
      case Dir::kWest: return c > 0 ? id - 1 : -1;
      case Dir::kEast: return c + 1 < scenario.cols ? id + 1 : -1;
    }
    return -1;
  };

  auto add_link = [&](int from, int to, Dir approach) {
    Link l;
    l.id = static_cast<int>(net.links.size());
    l.from_intersection = from;
    l.to_intersection = to;
    l.approach = approach;
    l.traversal_s = traversal;
    net.links.push_back(l);
    return l.id;
  };

  // Incoming links per intersection in approach order; the same pass fills
  // the upstream intersection's outgoing slot so internal links are shared.
  for (int id = 0; id < n; ++id) {
    for (Dir d : {Dir::kNorth, Dir::kEast, Dir::kSouth, Dir::kWest}) {
      const int nb = neighbor(id, d);
      const int link = add_link(nb, id, d);
      net.intersections[static_cast<std::size_t>(id)].in_links[static_cast<std::size_t>(d)] = link;
      if (nb >= 0)
        net.intersections[static_cast<std::size_t>(nb)]
            .out_links[static_cast<std::size_t>(opposite(d))] = link;
    }
  }
  // Boundary exits fill the remaining outgoing slots.
  for (int id = 0; id < n; ++id) {
    Intersection& x = net.intersections[static_cast<std::size_t>(id)];
    for (Dir d : {Dir::kNorth, Dir::kEast, Dir::kSouth, Dir::kWest}) {
      if (x.out_links[static_cast<std::size_t>(d)] < 0)
        x.out_links[static_cast<std::size_t>(d)] = add_link(id, -1, d);
    }
  }

  Mat adj = Mat::Zero(n, n);
  for (int id = 0; id < n; ++id) {
    adj(id, id) = 1.0;
    for (Dir d : {Dir::kNorth, Dir::kEast, Dir::kSouth, Dir::kWest}) {
      const int nb = neighbor(id, d);
      if (nb >= 0) adj(id, nb) = adj(nb, id) = 1.0;
    }
  }
  net.graph = nets::Graph::from_adjacency(std::move(adj));
  return net;
}

// ---------------------------------------------------------------------------
// SimState
// ---------------------------------------------------------------------------

SimState::SimState(const RoadNetwork& net, const Scenario& scenario, std::uint64_t seed)
    : net_(&net), scenario_(&scenario) {
  lanes_.resize(net.links.size() * kLanesPerLink);
  signals_.resize(static_cast<std::size_t>(net.n_intersections()));
  Rng root(seed);
  arrival_streams_.reserve(scenario.arrivals.size());
  for (std::size_t i = 0; i < scenario.arrivals.size(); ++i)
    arrival_streams_.push_back(root.substream("arrivals", i));
  spawn_accumulators_.assign(scenario.arrivals.size(), 0.0);
}

int SimState::pick_through_lane(int link) const {
  // Through traffic balances across the two through lanes; ties prefer the
  // inner lane.
  const LaneState& inner = lanes_[static_cast<std::size_t>(net_->lane_index(link, 1))];
  const LaneState& outer = lanes_[static_cast<std::size_t>(net_->lane_index(link, 2))];
  const std::size_t load_inner = inner.pipeline.size() + inner.queue.size();
  const std::size_t load_outer = outer.pipeline.size() + outer.queue.size();
  return load_outer < load_inner ? 2 : 1;
}

void SimState::place_on_link(int vehicle, int link) {
  Vehicle& v = vehicles_[static_cast<std::size_t>(vehicle)];
  const RouteHop& hop = v.route[static_cast<std::size_t>(v.next_hop)];
  int lane;
  switch (hop.turn) {
    case Move::kLeft: lane = 0; break;
    case Move::kRight: lane = 2; break;
    case Move::kThrough: lane = pick_through_lane(link); break;
    default: lane = 1; break;
  }
  PipelineEntry e;
  e.vehicle = vehicle;
  e.ready_s = clock_s_ + net_->links[static_cast<std::size_t>(link)].traversal_s;
  lanes_[static_cast<std::size_t>(net_->lane_index(link, lane))].pipeline.push_back(e);
}

void SimState::spawn_arrivals() {
  for (std::size_t si = 0; si < scenario_->arrivals.size(); ++si) {
    const ArrivalSchedule& sched = scenario_->arrivals[si];
    const double rate_per_s = sched.rate_at(static_cast<double>(clock_s_)) / 3600.0;
    int count = 0;
    if (sched.process == ArrivalProcess::kDeterministic) {
      spawn_accumulators_[si] += rate_per_s;
      // Epsilon absorbs float accumulation drift (e.g. ten 0.1 increments).
      while (spawn_accumulators_[si] >= 1.0 - 1e-9) {
        spawn_accumulators_[si] -= 1.0;
        ++count;
      }
    } else {
      count = arrival_streams_[si].poisson(rate_per_s);
    }
    if (count == 0) continue;

    const int first =
        net_->intersections[static_cast<std::size_t>(sched.row * net_->cols + sched.col)].id;
    const int entry_link =
        net_->intersections[static_cast<std::size_t>(first)].in_links[static_cast<std::size_t>(
            sched.side)];
    for (int k = 0; k < count; ++k) {
      Vehicle v;
      v.id = static_cast<int>(vehicles_.size());
      v.entry_s = clock_s_;
      // Sample the route hop by hop until the network boundary.
      int at = first;
      Dir from = sched.side;
      const TurnRatios& tr = scenario_->turn_ratios;
      while (at >= 0) {
        const double u = arrival_streams_[si].uniform();
        Move m;
        if (u < tr.left)
          m = Move::kLeft;
        else if (u < tr.left + tr.through)
          m = Move::kThrough;
        else
          m = Move::kRight;
        v.route.push_back({at, m});
        const int out =
            net_->intersections[static_cast<std::size_t>(at)].out_links[static_cast<std::size_t>(
                exit_side(from, m))];
        const Link& link = net_->links[static_cast<std::size_t>(out)];
        from = link.approach;
        at = link.to_intersection;
      }
      vehicles_.push_back(std::move(v));
      ++spawned_;
      place_on_link(vehicles_.back().id, entry_link);
    }
  }
}

void SimState::advance_pipelines() {
  for (LaneState& lane : lanes_) {
    while (!lane.pipeline.empty() && lane.pipeline.front().ready_s <= clock_s_) {
      lane.queue.push_back(lane.pipeline.front().vehicle);
      lane.pipeline.pop_front();
    }
  }
}

void SimState::discharge_green() {
  for (const Intersection& x : net_->intersections) {
    const SignalState& sig = signals_[static_cast<std::size_t>(x.id)];
    if (sig.mode != SignalMode::kGreen) continue;
    for (Dir d : {Dir::kNorth, Dir::kEast, Dir::kSouth, Dir::kWest}) {
      const int in = x.in_links[static_cast<std::size_t>(d)];
      for (int lane = 0; lane < kLanesPerLink; ++lane) {
        LaneState& ls = lanes_[static_cast<std::size_t>(net_->lane_index(in, lane))];
        if (ls.queue.empty()) continue;
        Vehicle& v = vehicles_[static_cast<std::size_t>(ls.queue.front())];
        const Move turn = v.route[static_cast<std::size_t>(v.next_hop)].turn;
        if (!PhaseTable::permits(sig.phase, d, turn)) continue;
        ls.queue.pop_front();
        const int out = x.out_links[static_cast<std::size_t>(exit_side(d, turn))];
        ++v.next_hop;
        if (net_->links[static_cast<std::size_t>(out)].to_intersection < 0) {
          v.exit_s = clock_s_;
          ++exited_;
        } else {
          place_on_link(v.id, out);
        }
      }
    }
  }
}

void SimState::advance_signals() {
  for (SignalState& sig : signals_) {
    switch (sig.mode) {
      case SignalMode::kGreen:
        break;
      case SignalMode::kYellow:
        if (--sig.mode_remaining_s == 0) {
          sig.mode = SignalMode::kAllRed;
          sig.mode_remaining_s = kAllRedSeconds;
        }
        break;
      case SignalMode::kAllRed:
        if (--sig.mode_remaining_s == 0) {
          sig.mode = SignalMode::kGreen;
          sig.phase = sig.pending_phase;
        }
        break;
    }
  }
}

void SimState::step_second() {
  spawn_arrivals();
  advance_pipelines();
  discharge_green();
  advance_signals();
  ++clock_s_;
}

void SimState::apply_actions(const std::vector<int>& phases) {
  if (phases.size() != signals_.size())
    throw std::invalid_argument("apply_actions: need one phase per intersection");
  if (clock_s_ % scenario_->decision_interval_s != 0)
    throw std::logic_error("apply_actions: not on a decision boundary");
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const int p = phases[i];
    if (p < 0 || p >= PhaseTable::kNumPhases)
      throw std::out_of_range("apply_actions: phase index " + std::to_string(p) +
                              " out of range");
    SignalState& sig = signals_[i];
    if (p == sig.phase) continue;  // green continues uninterrupted
    sig.mode = SignalMode::kYellow;
    sig.mode_remaining_s = kYellowSeconds;
    sig.pending_phase = p;
  }
}

Eigen::VectorXd SimState::observe(int i) const {
  const Intersection& x = net_->intersections.at(static_cast<std::size_t>(i));
  Eigen::VectorXd obs(kObsDim);
  int at = 0;
  for (Dir d : {Dir::kNorth, Dir::kEast, Dir::kSouth, Dir::kWest}) {
    const int in = x.in_links[static_cast<std::size_t>(d)];
    for (int lane = 0; lane < kLanesPerLink; ++lane)
      obs(at++) = static_cast<double>(
          lanes_[static_cast<std::size_t>(net_->lane_index(in, lane))].queue.size());
  }
  return obs;
}

Mat SimState::observe_all() const {
  Mat m(net_->n_intersections(), kObsDim);
  for (int i = 0; i < net_->n_intersections(); ++i) m.row(i) = observe(i).transpose();
  return m;
}

double SimState::reward(int i) const { return -observe(i).sum(); }

double SimState::pressure(int i, int phase) const {
  const Intersection& x = net_->intersections.at(static_cast<std::size_t>(i));
  if (phase < 0 || phase >= PhaseTable::kNumPhases)
    throw std::out_of_range("pressure: bad phase index");
  double total = 0.0;
  for (const ProtectedMovement& m : PhaseTable::phases()[static_cast<std::size_t>(phase)]) {
    const int in = x.in_links[static_cast<std::size_t>(m.from)];
    const int out = x.out_links[static_cast<std::size_t>(exit_side(m.from, m.turn))];
    double downstream = 0.0;
    if (net_->links[static_cast<std::size_t>(out)].to_intersection >= 0) {
      for (int lane = 0; lane < kLanesPerLink; ++lane)
        downstream += static_cast<double>(
            lanes_[static_cast<std::size_t>(net_->lane_index(out, lane))].queue.size());
      downstream /= static_cast<double>(kLanesPerLink);
    }
    const std::vector<int> up_lanes = m.turn == Move::kLeft ? std::vector<int>{0}
                                                            : std::vector<int>{1, 2};
    for (int lane : up_lanes) {
      const double q = static_cast<double>(
          lanes_[static_cast<std::size_t>(net_->lane_index(in, lane))].queue.size());
      total += q - downstream;
    }
  }
  return total;
}

ConservationCounts SimState::counts() const {
  ConservationCounts c;
  c.spawned = spawned_;
  c.exited = exited_;
  for (const LaneState& lane : lanes_) {
    c.in_pipeline += static_cast<long>(lane.pipeline.size());
    c.in_queue += static_cast<long>(lane.queue.size());
  }
  return c;
}

void SimState::inject_queued_vehicle(int intersection, Dir from, int lane, Move turn) {
  const Intersection& x = net_->intersections.at(static_cast<std::size_t>(intersection));
  Vehicle v;
  v.id = static_cast<int>(vehicles_.size());
  v.entry_s = clock_s_;
  // Continue with through hops until the boundary so the route stays valid.
  int at = intersection;
  Dir arriving = from;
  Move m = turn;
  while (at >= 0) {
    v.route.push_back({at, m});
    const int out = net_->intersections[static_cast<std::size_t>(at)]
                        .out_links[static_cast<std::size_t>(exit_side(arriving, m))];
    const Link& link = net_->links[static_cast<std::size_t>(out)];
    arriving = link.approach;
    at = link.to_intersection;
    m = Move::kThrough;
  }
  vehicles_.push_back(std::move(v));
  ++spawned_;
  const int in = x.in_links[static_cast<std::size_t>(from)];
  lanes_[static_cast<std::size_t>(net_->lane_index(in, lane))].queue.push_back(
      vehicles_.back().id);
}

double travel_time_metric(const std::vector<Vehicle>& vehicles, long horizon_s) {
  long n = 0;
  double total = 0.0;
  for (const Vehicle& v : vehicles) {
    ++n;
    const long out = v.exit_s >= 0 ? v.exit_s : horizon_s;
    total += static_cast<double>(out - v.entry_s);
  }
  if (n == 0) throw std::runtime_error("travel_time_metric: no vehicle entered the network");
  return total / static_cast<double>(n);
}

}  // namespace hamh::sim
