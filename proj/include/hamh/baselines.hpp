#pragma once

#include "hamh/algo.hpp"
#include "hamh/sim.hpp"

#include <string>
#include <utility>
#include <vector>

namespace hamh::baselines {

// Predetermined cyclic timing plan: ordered (phase, green seconds) pairs.
struct FixedTimePlan {
  struct Step {
    int phase = 0;
    int green_s = 0;
  };
  std::vector<Step> steps;

  int cycle_length_s() const;
  // The conventional plan: the four dual phases at 30 s green each.
  static FixedTimePlan default_plan();
};

// Phase determined solely by the clock modulo the cycle length.
int fixed_time_action(long clock_s, const FixedTimePlan& plan);

// Argmax of pressure over the 8 phases; ties break to the lowest index.
int max_pressure_action(const sim::SimState& state, int intersection);

enum class ControllerKind { kFixedTime, kMaxPressure, kHamh, kPpoShare, kPpoNonShare };

const char* controller_name(ControllerKind kind);
ControllerKind controller_from_string(const std::string& name);
bool is_learning_controller(ControllerKind kind);

// Maps an RL controller kind onto a trainer configuration. PPO-share is the
// k = 1, no-entropy collapse of the full method; PPO-non-share additionally
// trains one parameter set per intersection. Simulator settings never change
// across variants. Throws for the non-learning kinds.
struct VariantSetup {
  algo::Variant variant = algo::Variant::kHamh;
  algo::Config config;
};
VariantSetup make_variant(ControllerKind kind, const algo::Config& base);

// Runs one full episode under a non-learning controller at the same decision
// cadence (and yellow/all-red transitions) as the RL agents.
struct ControllerEpisodeResult {
  double m_tt = 0.0;
  double mean_reward = 0.0;
  long spawned = 0;
  long exited = 0;
};
ControllerEpisodeResult run_controller_episode(const sim::Scenario& scenario, ControllerKind kind,
                                               std::uint64_t seed,
                                               const FixedTimePlan& plan = FixedTimePlan::default_plan());

}  // namespace hamh::baselines
