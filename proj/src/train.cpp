#include "abstain/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "abstain/parallel.hpp"

namespace abstain {

std::string_view to_string(AttackStyle s) { return s == AttackStyle::fixed ? "fixed" : "converge"; }

AttackStyle attack_style_from_string(std::string_view name) {
  if (name == "converge") return AttackStyle::converge;
  if (name == "fixed") return AttackStyle::fixed;
  throw std::invalid_argument("unknown attack style '" + std::string(name) + "'");
}

void TrainConfig::validate(bool carl) const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(learning_rate > 0) || !(dropped_learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (lr_drop_epoch && *lr_drop_epoch < 0) throw std::invalid_argument("learning rate drop epoch must be >= 0");
  if (!(lambda >= 0) || !(eta >= 0)) throw std::invalid_argument("lambda and eta must be >= 0");
  if (!(epsilon >= 0)) throw std::invalid_argument("training epsilon must be >= 0");
  if (attack_iterations < 1 || converge_cap < 1) throw std::invalid_argument("attack budget must be positive");
  if (carl) {
    if (pool.empty()) throw std::invalid_argument("CARL needs a non-empty attack pool");
    for (auto v : pool) {
      if (v == AttackLossVariant::cw) throw std::invalid_argument("cw does not target the abstain region; not a training loss");
    }
  }
}

double TrainConfig::learning_rate_at(int epoch) const {
  return lr_drop_epoch && epoch >= *lr_drop_epoch ? dropped_learning_rate : learning_rate;
}

AdamState AdamState::for_parameters(const Parameters& params) { return {zeros_like(params), zeros_like(params), 0}; }

void adam_step(Parameters& params, const Parameters& grads, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].shape() || state.m[k].shape() != params[k].shape() ||
        state.v[k].shape() != params[k].shape()) {
      throw std::invalid_argument("adam: shape mismatch in parameter tensor " + std::to_string(k));
    }
    if (!grads[k].all_finite()) throw NumericError(k, "adam: non-finite gradient in parameter tensor " + std::to_string(k));
  }
  ++state.step;
  const double c1 = 1 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double mi = beta1 * m[i] + (1 - beta1) * g[i];
      const double vi = beta2 * v[i] + (1 - beta2) * static_cast<double>(g[i]) * g[i];
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p[i] = static_cast<float>(p[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
    }
  }
}

PGDConfig sample_training_attack(std::mt19937_64& rng, const TrainConfig& cfg) {
  if (cfg.pool.empty()) throw std::invalid_argument("attack pool is empty");
  std::uniform_int_distribution<std::size_t> pick(0, cfg.pool.size() - 1);
  PGDConfig out;
  out.loss = cfg.pool[pick(rng)];
  out.epsilon = cfg.epsilon;
  out.early_stop = false;
  out.iterations = cfg.attack_iterations;
  out.stop = StopRule::fixed;
  if (out.loss == AttackLossVariant::interp || out.loss == AttackLossVariant::cw) {
    out.schedule = StepSchedule::constant();
  } else if (cfg.attack_style == AttackStyle::converge) {
    out.schedule = StepSchedule::harmonic();
    out.stop = StopRule::converge;
    out.threshold = 0.1;
    out.iterations = cfg.converge_cap;
  } else {
    out.schedule = StepSchedule::exponential();
  }
  return out;
}

namespace {

std::mt19937_64 example_rng(std::uint64_t seed, int epoch, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct ExampleResult {
  double loss = 0.0;
  Parameters grads;
};

// Shared epoch / batch loop. `example` maps (model snapshot, example index,
// per-example rng) to the loss and parameter gradient for that example.
template <typename ExampleFn>
TrainResult run_training(const Dataset& data, Classifier model, const TrainConfig& cfg, ExampleFn example) {
  data.validate();
  if (data.input_shape != model.input_shape()) {
    throw ShapeError("dataset inputs do not match the classifier");
  }
  if (data.num_classes != model.num_classes()) throw std::invalid_argument("dataset and classifier disagree on |Y|");
  TrainResult result{std::move(model), {}};
  if (cfg.epochs == 0 || data.empty()) return result;

  Classifier& clf = result.model;
  AdamState adam = AdamState::for_parameters(clf.network().parameters());
  std::vector<std::size_t> order(data.size());
  std::mt19937_64 shuffle_rng(cfg.seed);
  const std::size_t threads = cfg.threads ? cfg.threads : default_thread_count();
  double smoothed = 0.0;
  bool first = true;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = cfg.learning_rate_at(epoch);
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<ExampleResult> results(count);
      const Classifier& snapshot = clf;
      parallel_for(
          count,
          [&](std::size_t k) {
            const std::size_t idx = order[start + k];
            auto rng = example_rng(cfg.seed, epoch, idx);
            results[k] = example(snapshot, idx, rng);
          },
          threads);
      Parameters grad = zeros_like(clf.network().parameters());
      double loss = 0.0;
      for (const auto& r : results) {
        loss += r.loss;
        add_scaled(grad, r.grads, 1.0f / static_cast<float>(count));
      }
      loss /= static_cast<double>(count);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("training loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch) + " (learning rate " + std::to_string(lr) + ")");
      }
      adam_step(clf.network().parameters(), grad, adam, lr);
      smoothed = first ? loss : 0.9 * smoothed + 0.1 * loss;
      first = false;
      result.curve.push_back({epoch, batch, loss, smoothed});
    }
  }
  return result;
}

}  // namespace

TrainResult adversarial_train(const Dataset& data, Classifier initial, const TrainConfig& cfg) {
  cfg.validate(false);
  if (initial.abstaining()) throw std::invalid_argument("adversarial training expects a classifier without abstain");
  PGDConfig attack;
  attack.epsilon = cfg.epsilon;
  attack.iterations = cfg.attack_iterations;
  attack.schedule = StepSchedule::constant();
  attack.early_stop = false;
  attack.objective = PgdObjective::cross_entropy;
  return run_training(data, std::move(initial), cfg,
                      [&](const Classifier& clf, std::size_t idx, std::mt19937_64& rng) {
                        const Tensor& x = data.inputs[idx];
                        const std::size_t y = data.labels[idx];
                        std::uniform_real_distribution<double> u(-1.0, 1.0);
                        Tensor start(x.shape());
                        for (std::size_t i = 0; i < x.size(); ++i) {
                          start[i] = static_cast<float>(x[i] + cfg.epsilon * u(rng));
                        }
                        const AttackResult adv = pgd_attack(clf, x, y, attack, &start);
                        const Trace trace = clf.trace(adv.adversarial);
                        const LossValue l = natural_loss_from_logits(trace.output().values(), y);
                        Tensor w(trace.output().shape());
                        for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<float>(l.logit_grad[k]);
                        return ExampleResult{l.value, clf.backward(trace, w).params};
                      });
}

TrainResult carl_train(const Dataset& data, Classifier initial, const TrainConfig& cfg) {
  cfg.validate(true);
  if (!initial.abstaining()) throw std::invalid_argument("CARL training expects a classifier with an abstain output");
  return run_training(data, std::move(initial), cfg,
                      [&](const Classifier& clf, std::size_t idx, std::mt19937_64& rng) {
                        const Tensor& x = data.inputs[idx];
                        const std::size_t y = data.labels[idx];
                        const PGDConfig attack = sample_training_attack(rng, cfg);
                        const AttackResult adv = pgd_attack(clf, x, y, attack);
                        CarlLoss l = carl_example_loss(clf, x, adv.adversarial, y, cfg.lambda, cfg.eta,
                                                       cfg.surrogate, true);
                        return ExampleResult{l.total, std::move(l.grads)};
                      });
}

}  // namespace abstain
