#include "abstain/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "abstain/parallel.hpp"
#include "json.hpp"

namespace abstain {

Predictor predictor_of(const Classifier& clf) {
  return [&clf](const Tensor& x) { return clf.predict(x); };
}

namespace {

double percent(std::size_t count, std::size_t total) {
  return 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

bool fooled(const Label& l, std::size_t y) { return !l.is_abstain() && !l.is(y); }

}  // namespace

NaturalBreakdown eval_natural(const Predictor& predict, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("natural evaluation of an empty dataset");
  std::size_t correct = 0, abstain = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Label l = predict(data.inputs[i]);
    if (l.is_abstain()) {
      ++abstain;
    } else if (l.is(data.labels[i])) {
      ++correct;
    }
  }
  const std::size_t n = data.size();
  const std::size_t incorrect = n - correct - abstain;
  return {percent(correct, n), percent(abstain, n), percent(incorrect, n), n};
}

double eval_noise_abstention(const Predictor& predict, const std::vector<Tensor>& noise) {
  if (noise.empty()) throw std::invalid_argument("noise evaluation needs at least one input");
  const auto hits = std::count_if(noise.begin(), noise.end(), [&](const Tensor& x) { return predict(x).is_abstain(); });
  return percent(static_cast<std::size_t>(hits), noise.size());
}

std::vector<AttackSpec> default_attack_suite(double epsilon) {
  std::vector<AttackSpec> suite;
  for (auto v : {AttackLossVariant::abstain, AttackLossVariant::sum, AttackLossVariant::interp,
                 AttackLossVariant::switching}) {
    AttackSpec s;
    s.name = "pgd-" + std::string(to_string(v));
    s.kind = AttackKind::pgd;
    s.pgd.epsilon = epsilon;
    s.pgd.iterations = 100;
    s.pgd.loss = v;
    s.pgd.schedule = StepSchedule::constant();
    suite.push_back(s);
  }
  AttackSpec df;
  df.name = "deepfool";
  df.kind = AttackKind::deepfool;
  df.deepfool.epsilon = epsilon;
  df.deepfool.iterations = 50;
  suite.push_back(df);
  df.name = "deepfool-abstain";
  df.kind = AttackKind::deepfool_abstain;
  suite.push_back(df);
  return suite;
}

AttackResult run_attack(const AttackSpec& spec, const Classifier& clf, const Tensor& x, std::size_t y) {
  switch (spec.kind) {
    case AttackKind::pgd: return pgd_attack(clf, x, y, spec.pgd);
    case AttackKind::deepfool: return deepfool_attack(clf, x, y, spec.deepfool);
    case AttackKind::deepfool_abstain: return deepfool_abstain_attack(clf, x, y, spec.deepfool);
  }
  throw std::invalid_argument("unknown attack kind");
}

AdversarialEvaluation eval_adversarial_union(const Classifier& source, const Dataset& data,
                                             const std::vector<AttackSpec>& suite, const Predictor* judge,
                                             const UnionOptions& opts) {
  if (suite.empty()) throw std::invalid_argument("attack suite is empty");
  if (data.empty()) throw std::invalid_argument("adversarial evaluation of an empty dataset");
  const Predictor own = predictor_of(source);
  const Predictor& decide = judge ? *judge : own;
  AdversarialEvaluation out;
  for (const auto& s : suite) out.attacks.push_back(s.name);
  out.success.assign(suite.size(), std::vector<bool>(data.size(), false));
  out.witness.assign(data.size(), std::nullopt);
  // vector<bool> packs bits, so collect per example and scatter afterwards.
  std::vector<std::vector<char>> hit(data.size(), std::vector<char>(suite.size(), 0));
  parallel_for(
      data.size(),
      [&](std::size_t i) {
        const std::size_t y = data.labels[i];
        for (std::size_t a = 0; a < suite.size(); ++a) {
          if (!opts.full_columns && out.witness[i]) break;
          const AttackResult r = run_attack(suite[a], source, data.inputs[i], y);
          if (fooled(decide(r.adversarial), y)) {
            hit[i][a] = 1;
            if (!out.witness[i]) out.witness[i] = r.adversarial;
          }
        }
      },
      opts.threads ? opts.threads : default_thread_count());
  std::size_t any = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool some = false;
    for (std::size_t a = 0; a < suite.size(); ++a) {
      out.success[a][i] = hit[i][a] != 0;
      some = some || hit[i][a];
    }
    any += some ? 1 : 0;
  }
  for (std::size_t a = 0; a < suite.size(); ++a) {
    out.per_attack.push_back(
        percent(static_cast<std::size_t>(std::count(out.success[a].begin(), out.success[a].end(), true)), data.size()));
  }
  out.union_error = percent(any, data.size());
  return out;
}

std::vector<BaselineSweepPoint> eval_baseline_sweep(const Classifier& base, const Dataset& data,
                                                    const std::vector<double>& gammas,
                                                    const std::vector<AttackSpec>& suite, const PGDConfig& probe,
                                                    std::size_t threads) {
  if (data.empty()) throw std::invalid_argument("baseline evaluation of an empty dataset");
  if (gammas.empty() || !std::is_sorted(gammas.begin(), gammas.end())) {
    throw std::invalid_argument("baseline thresholds must be ascending");
  }
  const std::size_t g = gammas.size();
  // Per example: natural label at each threshold, fooled flag at each threshold.
  std::vector<std::vector<Label>> natural(data.size());
  std::vector<std::vector<char>> fooled_at(data.size(), std::vector<char>(g, 0));
  parallel_for(
      data.size(),
      [&](std::size_t i) {
        const Tensor& x = data.inputs[i];
        const std::size_t y = data.labels[i];
        natural[i] = baseline_predict_sweep(base, x, gammas, probe);
        for (const auto& spec : suite) {
          const AttackResult r = run_attack(spec, base, x, y);
          if (base.predict(r.adversarial).is(y)) continue;
          const auto labels = baseline_predict_sweep(base, r.adversarial, gammas, probe);
          for (std::size_t k = 0; k < g; ++k) {
            if (fooled(labels[k], y)) fooled_at[i][k] = 1;
          }
        }
      },
      threads ? threads : default_thread_count());
  std::vector<BaselineSweepPoint> out;
  for (std::size_t k = 0; k < g; ++k) {
    std::size_t correct = 0, abstain = 0, fooled_count = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (natural[i][k].is_abstain()) {
        ++abstain;
      } else if (natural[i][k].is(data.labels[i])) {
        ++correct;
      }
      fooled_count += fooled_at[i][k] ? 1 : 0;
    }
    const std::size_t n = data.size();
    out.push_back({gammas[k],
                   {percent(correct, n), percent(abstain, n), percent(n - correct - abstain, n), n},
                   percent(fooled_count, n)});
  }
  return out;
}

void ErrorReport::validate() const {
  auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
  if (!in_range(natural.correct) || !in_range(natural.abstain) || !in_range(natural.incorrect)) {
    throw ReportError("natural percentages must lie in [0, 100]");
  }
  if (std::abs(natural.correct + natural.abstain + natural.incorrect - 100.0) > 0.01) {
    throw ReportError("natural percentages must sum to 100");
  }
  if (noise_abstain && !in_range(*noise_abstain)) throw ReportError("noise abstention must lie in [0, 100]");
  if (!in_range(union_error)) throw ReportError("union adversarial error must lie in [0, 100]");
  for (const auto& [name, v] : per_attack) {
    if (!in_range(v)) throw ReportError("adversarial error of '" + name + "' must lie in [0, 100]");
    if (v > union_error) throw ReportError("union adversarial error is below that of '" + name + "'");
  }
}

bool ErrorReport::operator==(const ErrorReport& o) const {
  return model == o.model && epsilon == o.epsilon && natural.correct == o.natural.correct &&
         natural.abstain == o.natural.abstain && natural.incorrect == o.natural.incorrect &&
         natural.total == o.natural.total && noise_abstain == o.noise_abstain && per_attack == o.per_attack &&
         union_error == o.union_error;
}

ErrorReport make_report(std::string model, double epsilon, const NaturalBreakdown& natural,
                        std::optional<double> noise_abstain, const AdversarialEvaluation& adversarial) {
  ErrorReport r;
  r.model = std::move(model);
  r.epsilon = epsilon;
  r.natural = natural;
  r.noise_abstain = noise_abstain;
  for (std::size_t a = 0; a < adversarial.attacks.size(); ++a) r.per_attack[adversarial.attacks[a]] = adversarial.per_attack[a];
  r.union_error = adversarial.union_error;
  r.validate();
  return r;
}

using Json = nlohmann::ordered_json;

std::string report_to_json(const ErrorReport& report) {
  Json j;
  j["schema_version"] = ErrorReport::kSchemaVersion;
  j["model"] = report.model;
  j["epsilon"] = report.epsilon;
  j["natural"] = {{"correct", report.natural.correct},
                  {"abstain", report.natural.abstain},
                  {"incorrect", report.natural.incorrect},
                  {"total", report.natural.total}};
  j["noise_abstain"] = report.noise_abstain ? Json(*report.noise_abstain) : Json(nullptr);
  Json per = Json::object();
  for (const auto& [name, v] : report.per_attack) per[name] = v;
  j["adversarial"] = {{"per_attack", per}, {"union", report.union_error}};
  return j.dump(2) + "\n";
}

ErrorReport report_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
  ErrorReport r;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != ErrorReport::kSchemaVersion) {
      throw ReportError("report schema version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(ErrorReport::kSchemaVersion) + ")");
    }
    r.model = j.at("model").get<std::string>();
    r.epsilon = j.at("epsilon").get<double>();
    const auto& nat = j.at("natural");
    r.natural = {nat.at("correct").get<double>(), nat.at("abstain").get<double>(), nat.at("incorrect").get<double>(),
                 nat.at("total").get<std::size_t>()};
    const auto& noise = j.at("noise_abstain");
    if (!noise.is_null()) r.noise_abstain = noise.get<double>();
    const auto& adv = j.at("adversarial");
    for (const auto& [name, v] : adv.at("per_attack").items()) r.per_attack[name] = v.get<double>();
    r.union_error = adv.at("union").get<double>();
  } catch (const Json::exception& e) {
    throw ReportError(std::string("report does not match the schema: ") + e.what());
  }
  r.validate();
  return r;
}

void save_report(const ErrorReport& report, const std::filesystem::path& path) {
  report.validate();
  std::ofstream out(path);
  if (!out) throw ReportError("cannot write " + path.string());
  out << report_to_json(report);
}

ErrorReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace abstain
