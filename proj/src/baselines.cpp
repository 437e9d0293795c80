#include "hamh/baselines.hpp"

#include <stdexcept>

namespace hamh::baselines {

int FixedTimePlan::cycle_length_s() const {
  int total = 0;
  for (const Step& s : steps) total += s.green_s;
  return total;
}

FixedTimePlan FixedTimePlan::default_plan() {
  FixedTimePlan plan;
  for (int phase : {0, 1, 2, 3}) plan.steps.push_back({phase, 30});
  return plan;
}

int fixed_time_action(long clock_s, const FixedTimePlan& plan) {
  if (plan.steps.empty()) throw std::invalid_argument("fixed_time_action: empty plan");
  const int cycle = plan.cycle_length_s();
  if (cycle <= 0) throw std::invalid_argument("fixed_time_action: plan has no green time");
  long t = clock_s % cycle;
  for (const FixedTimePlan::Step& s : plan.steps) {
    if (t < s.green_s) return s.phase;
    t -= s.green_s;
  }
  return plan.steps.back().phase;
}

int max_pressure_action(const sim::SimState& state, int intersection) {
  int best = 0;
  double best_pressure = state.pressure(intersection, 0);
  for (int phase = 1; phase < sim::PhaseTable::kNumPhases; ++phase) {
    const double p = state.pressure(intersection, phase);
    if (p > best_pressure) {
      best_pressure = p;
      best = phase;
    }
  }
  return best;
}

const char* controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kFixedTime: return "fixedtime";
    case ControllerKind::kMaxPressure: return "maxpressure";
    case ControllerKind::kHamh: return "hamh";
    case ControllerKind::kPpoShare: return "ppo-share";
    case ControllerKind::kPpoNonShare: return "ppo-nonshare";
  }
  return "?";
}

ControllerKind controller_from_string(const std::string& name) {
  for (ControllerKind kind :
       {ControllerKind::kFixedTime, ControllerKind::kMaxPressure, ControllerKind::kHamh,
        ControllerKind::kPpoShare, ControllerKind::kPpoNonShare}) {
    if (name == controller_name(kind)) return kind;
  }
  throw std::invalid_argument("unknown controller '" + name + "'");
}

bool is_learning_controller(ControllerKind kind) {
  return kind == ControllerKind::kHamh || kind == ControllerKind::kPpoShare ||
         kind == ControllerKind::kPpoNonShare;
}

VariantSetup make_variant(ControllerKind kind, const algo::Config& base) {
  VariantSetup setup;
  setup.config = base;
  switch (kind) {
    case ControllerKind::kHamh:
      setup.variant = algo::Variant::kHamh;
      break;
    case ControllerKind::kPpoShare:
      setup.variant = algo::Variant::kPpoShare;
      setup.config.k = 1;
      setup.config.entropy_coef = 0.0;
      break;
    case ControllerKind::kPpoNonShare:
      setup.variant = algo::Variant::kPpoNonShare;
      setup.config.k = 1;
      setup.config.entropy_coef = 0.0;
      break;
    default:
      throw std::invalid_argument(std::string("make_variant: unknown or non-learning kind '") +
                                  controller_name(kind) + "'");
  }
  setup.config.validate();
  return setup;
}

ControllerEpisodeResult run_controller_episode(const sim::Scenario& scenario, ControllerKind kind,
                                               std::uint64_t seed, const FixedTimePlan& plan) {
  if (is_learning_controller(kind))
    throw std::invalid_argument("run_controller_episode: use the trainer for learning controllers");
  const sim::RoadNetwork net = sim::build_network(scenario);
  sim::SimState state(net, scenario, seed);
  const int n = net.n_intersections();
  ControllerEpisodeResult out;
  double reward_sum = 0.0;
  long reward_count = 0;
  while (state.clock() < scenario.episode_s) {
    std::vector<int> actions(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      actions[static_cast<std::size_t>(i)] = kind == ControllerKind::kFixedTime
                                                 ? fixed_time_action(state.clock(), plan)
                                                 : max_pressure_action(state, i);
    state.apply_actions(actions);
    for (int s = 0; s < scenario.decision_interval_s; ++s) state.step_second();
    for (int i = 0; i < n; ++i) reward_sum += state.reward(i);
    reward_count += n;
  }
  out.m_tt = sim::travel_time_metric(state.vehicles(), scenario.episode_s);
  out.mean_reward = reward_count > 0 ? reward_sum / static_cast<double>(reward_count) : 0.0;
  out.spawned = state.spawned_count();
  out.exited = state.exited_count();
  return out;
}

}  // namespace hamh::baselines
