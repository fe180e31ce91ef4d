#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "abstain/classifier.hpp"
#include "abstain/losses.hpp"

namespace abstain {

enum class ScheduleKind { constant, exponential, harmonic };

std::string_view to_string(ScheduleKind kind);
ScheduleKind schedule_from_string(std::string_view name);

/// constant: `step` if set, else 2 eps / T.
/// exponential: scale * eps * decay^t (defaults give eps / 2 * 0.8^t).
/// harmonic: eps / (t + offset).
struct StepSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  std::optional<double> step;
  double scale = 0.5;
  double decay = 0.8;
  double offset = 5.0;

  static StepSchedule constant() { return {}; }
  static StepSchedule exponential() { return {ScheduleKind::exponential, std::nullopt, 0.5, 0.8, 5.0}; }
  static StepSchedule harmonic() { return {ScheduleKind::harmonic, std::nullopt, 0.5, 0.8, 5.0}; }
};

double step_size(const StepSchedule& schedule, int t, int total, double epsilon);

enum class StopRule { fixed, converge };

/// What PGD ascends. `attack_loss` uses PGDConfig::loss; `cross_entropy`
/// ascends -log p_y (the inner maximization of standard adversarial
/// training).
enum class PgdObjective { attack_loss, cross_entropy };

struct PGDConfig {
  double epsilon = 0.1;
  int iterations = 100;
  AttackLossVariant loss = AttackLossVariant::cw;
  StepSchedule schedule;
  StopRule stop = StopRule::fixed;
  double threshold = 0.1;
  bool early_stop = true;
  int restarts = 0;  // extra runs from uniform random starts inside the ball
  std::uint64_t seed = 0;
  PgdObjective objective = PgdObjective::attack_loss;
  /// Treat the abstain output as an ordinary class: the loss is the plain cw
  /// margin over all outputs and success means argmax != y. Used for radius
  /// probes on a base classifier.
  bool abstain_as_class = false;

  void validate() const;
};

struct AttackResult {
  Tensor adversarial;
  bool success = false;
  int iterations = 0;
  double final_loss = 0.0;
  bool numeric_failure = false;
  std::string failure;  // diagnostic when numeric_failure is set

  double linf_norm(const Tensor& x) const { return linf_distance(adversarial, x); }
};

/// Clamp into [x - eps, x + eps] intersected with [0, 1].
Tensor project(const Tensor& candidate, const Tensor& x, double epsilon);

/// predict(x_adv) is neither y nor abstain.
bool is_adversarial(const Classifier& clf, const Tensor& x_adv, std::size_t y);

/// Optional replacement for the success test; receives each iterate.
using SuccessJudge = std::function<bool(const Tensor&)>;

/// L-infinity PGD with sign-gradient steps from x (or from `start`, which is
/// projected into the ball first).
AttackResult pgd_attack(const Classifier& clf, const Tensor& x, std::size_t y, const PGDConfig& cfg,
                        const Tensor* start = nullptr, const SuccessJudge* judge = nullptr);

/// Probe configuration used by margin estimates and the baseline classifier:
/// cw loss with abstain treated as a class, harmonic steps, early stop.
PGDConfig default_probe_config(int iterations = 50);

/// PGD probe at radius r against `label` (normally base's current output).
/// True means some point within distance r changes the output.
bool attack_succeeds_at_radius(const Classifier& base, const Tensor& x, std::size_t label, double r,
                               const PGDConfig& probe, const Tensor* warm_start = nullptr,
                               Tensor* final_point = nullptr);

/// Runs the probe at every radius in ascending order, warm starting each run
/// from the previous final point, and returns the first index that succeeds
/// (radii.size() if none). Success sets are nested by construction.
std::size_t first_success_index(const Classifier& base, const Tensor& x, std::size_t label,
                                std::span<const double> radii, const PGDConfig& probe);

}  // namespace abstain
