#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abstain/attacks.hpp"
#include "abstain/dataset.hpp"
#include "abstain/deepfool.hpp"
#include "abstain/margin.hpp"

namespace abstain {

/// Anything that maps an input to a label (a classifier, f_baseline, ...).
using Predictor = std::function<Label(const Tensor&)>;

Predictor predictor_of(const Classifier& clf);

/// Percentages of natural inputs classified correctly, abstained on and
/// misclassified.
struct NaturalBreakdown {
  double correct = 0.0;
  double abstain = 0.0;
  double incorrect = 0.0;
  std::size_t total = 0;

  /// Abstentions count as natural errors.
  double natural_error() const { return abstain + incorrect; }
};

NaturalBreakdown eval_natural(const Predictor& predict, const Dataset& data);

/// Percentage of inputs on which the predictor abstains.
double eval_noise_abstention(const Predictor& predict, const std::vector<Tensor>& noise);

enum class AttackKind { pgd, deepfool, deepfool_abstain };

struct AttackSpec {
  std::string name;
  AttackKind kind = AttackKind::pgd;
  PGDConfig pgd;
  DeepFoolConfig deepfool;
};

/// The six evaluation attacks at radius eps: PGD with the abstain, sum,
/// interp and switch losses (T = 100, step 2 eps / T) and both DeepFool
/// variants (T = 50).
std::vector<AttackSpec> default_attack_suite(double epsilon);

AttackResult run_attack(const AttackSpec& spec, const Classifier& clf, const Tensor& x, std::size_t y);

struct AdversarialEvaluation {
  std::vector<std::string> attacks;
  std::vector<double> per_attack;  // percent; empty entries when columns were skipped
  double union_error = 0.0;        // percent
  /// success[a][i]: attack a fooled the judge on example i.
  std::vector<std::vector<bool>> success;
  /// First successful adversarial point per example, for replay audits.
  std::vector<std::optional<Tensor>> witness;
};

struct UnionOptions {
  /// Run every attack on every example so per-attack columns are exact;
  /// otherwise stop at the first success per example.
  bool full_columns = true;
  std::size_t threads = 0;  // 0 = default_thread_count()
};

/// Attacks are computed on `source`; an example counts as fooled when the
/// judge (default: source's own prediction) labels the attack's final point
/// with neither y nor abstain.
AdversarialEvaluation eval_adversarial_union(const Classifier& source, const Dataset& data,
                                             const std::vector<AttackSpec>& suite, const Predictor* judge = nullptr,
                                             const UnionOptions& opts = {});

/// Baseline f_baseline at every threshold in `gammas` (ascending). Attack
/// candidates come from `suite` run on the base classifier, independent of
/// the threshold; abstain sets are nested across thresholds.
struct BaselineSweepPoint {
  double gamma = 0.0;
  NaturalBreakdown natural;
  double union_error = 0.0;  // percent
};

std::vector<BaselineSweepPoint> eval_baseline_sweep(const Classifier& base, const Dataset& data,
                                                    const std::vector<double>& gammas,
                                                    const std::vector<AttackSpec>& suite, const PGDConfig& probe,
                                                    std::size_t threads = 0);

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Table-1 shaped evaluation summary.
struct ErrorReport {
  static constexpr int kSchemaVersion = 1;

  std::string model;
  double epsilon = 0.0;
  NaturalBreakdown natural;
  std::optional<double> noise_abstain;       // percent
  std::map<std::string, double> per_attack;  // percent
  double union_error = 0.0;                  // percent

  /// Throws ReportError when percentages are out of range, the natural
  /// breakdown does not sum to 100, or the union is below some attack.
  void validate() const;
  bool operator==(const ErrorReport&) const;
};

ErrorReport make_report(std::string model, double epsilon, const NaturalBreakdown& natural,
                        std::optional<double> noise_abstain, const AdversarialEvaluation& adversarial);

std::string report_to_json(const ErrorReport& report);
ErrorReport report_from_json(const std::string& text);
void save_report(const ErrorReport& report, const std::filesystem::path& path);
ErrorReport load_report(const std::filesystem::path& path);

}  // namespace abstain
