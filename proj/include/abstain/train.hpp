#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "abstain/attacks.hpp"
#include "abstain/dataset.hpp"

namespace abstain {

/// How training-time PGD runs for the abstain and sum losses.
/// converge: harmonic steps eps / (t + 5) until the loss moves by less than
/// 0.1, capped at converge_cap iterations. fixed: attack_iterations steps of
/// eps / 2 * 0.8^t. The interp loss always takes attack_iterations steps of
/// 2 eps / T.
enum class AttackStyle { converge, fixed };

std::string_view to_string(AttackStyle s);
AttackStyle attack_style_from_string(std::string_view name);

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
  std::optional<int> lr_drop_epoch;  // from this epoch on, use dropped_learning_rate
  double dropped_learning_rate = 1e-4;
  double lambda = 1.0;
  double eta = 0.02;
  double epsilon = 0.3;
  std::vector<AttackLossVariant> pool{AttackLossVariant::abstain, AttackLossVariant::sum,
                                      AttackLossVariant::interp};
  SurrogateVariant surrogate = SurrogateVariant::l1;
  AttackStyle attack_style = AttackStyle::converge;
  int attack_iterations = 10;
  int converge_cap = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = default_thread_count()

  /// `carl` additionally requires a non-empty pool of abstain-aware losses.
  void validate(bool carl) const;
  double learning_rate_at(int epoch) const;
};

struct AdamState {
  Parameters m;
  Parameters v;
  std::int64_t step = 0;

  static AdamState for_parameters(const Parameters& params);
};

/// Bias-corrected Adam update in place. Throws std::invalid_argument on
/// mismatched shapes and NumericError on non-finite gradients.
void adam_step(Parameters& params, const Parameters& grads, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Uniform draw from cfg.pool with the schedule that loss is run with.
PGDConfig sample_training_attack(std::mt19937_64& rng, const TrainConfig& cfg);

/// Raised when the training loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BatchRecord {
  int epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;      // mean over the batch
  double smoothed = 0.0;  // exponential moving average, weight 0.1 on the newest batch
};

struct TrainResult {
  Classifier model;
  std::vector<BatchRecord> curve;
};

/// Madry-style adversarial training of a classifier without an abstain
/// output: PGD on -log p_y from a random start in the eps-ball, then a step
/// on the mean of -log p_y at the adversarial points.
TrainResult adversarial_train(const Dataset& data, Classifier initial, const TrainConfig& cfg);

/// Joint training of an abstaining classifier on
/// -log p_y(x) + lambda * surrogate(x_adv) + eta * ||G||_1, with one PGD
/// attack sampled from the pool per example and run for its full budget.
TrainResult carl_train(const Dataset& data, Classifier initial, const TrainConfig& cfg);

}  // namespace abstain
