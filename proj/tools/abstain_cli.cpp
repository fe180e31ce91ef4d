// Command-line front end: data generation, training, attacks, evaluation,
// margins, Theorem-1 bounds and decision maps.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "abstain/data_io.hpp"
#include "abstain/deepfool.hpp"
#include "abstain/evaluation.hpp"
#include "abstain/margin.hpp"
#include "abstain/render.hpp"
#include "abstain/train.hpp"
#include "json.hpp"

using namespace abstain;
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const long v = std::stol(part);
    if (v <= 0) throw UsageError("shape entries must be positive: " + text);
    shape.push_back(static_cast<std::size_t>(v));
  }
  if (shape.empty()) throw UsageError("empty shape");
  return shape;
}

std::string label_text(const Label& l) { return l.is_abstain() ? "abstain" : std::to_string(l.index()); }

struct DataSource {
  std::string spec;  // CSV path, "mnist-train" or "mnist-test"
  std::size_t limit = 0;
  std::string data_dir;

  Dataset load(std::size_t num_classes, const Shape& shape) const {
    Dataset d;
    if (spec == "mnist-train" || spec == "mnist-test") {
      d = load_mnist(data_dir.empty() ? default_data_dir() : fs::path(data_dir), spec.substr(6), limit);
    } else {
      d = load_dataset_csv(spec, num_classes, shape);
      if (limit) d = d.head(limit);
    }
    if (!shape.empty() && d.input_shape != shape) throw UsageError("data shape does not match the model");
    return d;
  }
};

void add_data_options(CLI::App* cmd, DataSource& src, bool required = true) {
  cmd->add_option("--data", src.spec, "CSV file from gen-data, or mnist-train / mnist-test")->required(required);
  cmd->add_option("--limit", src.limit, "use only the first N examples (0 = all)");
  cmd->add_option("--data-dir", src.data_dir, "MNIST IDX directory (default: $ABSTAIN_DATA_DIR or data/mnist5k)");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// ---- gen-data -----------------------------------------------------------------

struct GenDataArgs {
  std::string kind = "two-class";
  std::size_t n = 200;
  double gap = 0.1, amplitude = 0.15, frequency = 1.5;
  std::string shape = "2";
  std::uint64_t seed = 0;
  std::string out;
};

void run_gen_data(const GenDataArgs& a) {
  std::mt19937_64 rng(a.seed);
  Dataset d;
  if (a.kind == "two-class") {
    d = gen_two_class_2d(rng, TwoClassSpec{a.n, a.gap, a.amplitude, a.frequency});
  } else if (a.kind == "noise") {
    const Shape shape = parse_shape(a.shape);
    d = Dataset{"noise", shape, 1, gen_uniform_noise(rng, a.n, shape), std::vector<std::size_t>(a.n, 0)};
  } else {
    throw UsageError("--kind must be two-class or noise");
  }
  save_dataset_csv(d, a.out);
  std::cout << "wrote " << d.size() << " examples to " << a.out << "\n";
}

// ---- train --------------------------------------------------------------------

// Training file: TrainConfig fields plus "trainer", "model", "data",
// "limit" and "classes". Unknown keys are rejected.
struct TrainJob {
  std::string trainer = "carl";
  Json model = {{"arch", "mlp"}, {"hidden", {32, 32}}};
  std::string data;
  std::size_t limit = 0;
  std::size_t classes = 0;
  TrainConfig cfg;
};

TrainJob parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw UsageError("malformed config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  TrainJob job;
  TrainConfig& c = job.cfg;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "trainer") job.trainer = v.get<std::string>();
      else if (key == "model") job.model = v;
      else if (key == "data") job.data = v.get<std::string>();
      else if (key == "limit") job.limit = v.get<std::size_t>();
      else if (key == "classes") job.classes = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "lr_drop_epoch") c.lr_drop_epoch = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else if (key == "dropped_learning_rate") c.dropped_learning_rate = v.get<double>();
      else if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "eta") c.eta = v.get<double>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "surrogate") c.surrogate = surrogate_from_string(v.get<std::string>());
      else if (key == "attack_style") c.attack_style = attack_style_from_string(v.get<std::string>());
      else if (key == "attack_iterations") c.attack_iterations = v.get<int>();
      else if (key == "converge_cap") c.converge_cap = v.get<int>();
      else if (key == "threads") c.threads = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "pool") {
        c.pool.clear();
        for (const auto& name : v) c.pool.push_back(attack_loss_from_string(name.get<std::string>()));
      } else {
        throw UsageError("unknown config key '" + key + "'");
      }
    }
  } catch (const Json::exception& e) {
    throw UsageError("bad value in config " + path + ": " + e.what());
  }
  if (job.trainer != "carl" && job.trainer != "adversarial") throw UsageError("trainer must be carl or adversarial");
  if (job.data.empty()) throw UsageError("config needs a \"data\" entry");
  return job;
}

Classifier initial_model(const TrainJob& job, const Dataset& data, std::uint64_t seed) {
  const bool abstaining = job.trainer == "carl";
  const std::size_t outputs = data.num_classes + (abstaining ? 1 : 0);
  const std::string arch = job.model.value("arch", "mlp");
  Standardization standardization;
  if (job.model.value("standardize", false)) {
    standardization = Standardization::fit(data.inputs, Standardization::channel_count(data.input_shape));
  }
  if (arch == "mlp") {
    const auto hidden = job.model.value("hidden", std::vector<std::size_t>{32, 32});
    return Classifier(Network(mlp_layers(shape_size(data.input_shape), hidden, outputs), seed, data.input_shape),
                      data.num_classes, abstaining, standardization);
  }
  if (arch == "mnist-cnn") {
    const double width = job.model.value("width", 1.0);
    return Classifier(Network(mnist_cnn_layers(outputs, width), seed, data.input_shape), data.num_classes, abstaining,
                      standardization);
  }
  throw UsageError("model arch must be mlp or mnist-cnn");
}

struct TrainArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string curve;
  std::string data_dir;
};

void run_train(const TrainArgs& a) {
  TrainJob job = parse_train_config(a.config);
  if (a.seed_set) job.cfg.seed = a.seed;
  DataSource src{job.data, job.limit, a.data_dir};
  std::size_t classes = job.classes;
  Dataset data;
  if (job.data.rfind("mnist-", 0) == 0) {
    data = src.load(10, {});
  } else {
    if (classes == 0) {
      // Infer |Y| from the labels.
      const Dataset probe = load_dataset_csv(job.data, std::numeric_limits<std::size_t>::max());
      classes = *std::max_element(probe.labels.begin(), probe.labels.end()) + 1;
    }
    data = src.load(classes, {});
  }
  const Classifier init = initial_model(job, data, job.cfg.seed);
  const TrainResult result =
      job.trainer == "carl" ? carl_train(data, init, job.cfg) : adversarial_train(data, init, job.cfg);
  save_classifier(result.model, a.out);
  const std::string curve = a.curve.empty() ? a.out + ".curve.csv" : a.curve;
  std::ofstream c(curve);
  if (!c) throw std::runtime_error("cannot write " + curve);
  c << "epoch,batch,loss,smoothed\n" << std::setprecision(10);
  for (const auto& r : result.curve) c << r.epoch << ',' << r.batch << ',' << r.loss << ',' << r.smoothed << '\n';
  std::cout << "trained " << job.trainer << " model on " << data.size() << " examples; classifier " << a.out
            << ", curve " << curve << "\n";
  if (!result.curve.empty()) {
    std::cout << "smoothed loss " << result.curve.front().smoothed << " -> " << result.curve.back().smoothed << "\n";
  }
}

// ---- attack -------------------------------------------------------------------

struct AttackArgs {
  std::string model;
  DataSource data;
  std::string method = "pgd";
  std::string loss = "abstain";
  double epsilon = 0.1;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::string out;
};

void run_attack_cmd(const AttackArgs& a) {
  const Classifier clf = load_classifier(a.model);
  const Dataset data = a.data.load(clf.num_classes(), clf.input_shape());
  AttackSpec spec;
  spec.name = a.method;
  if (a.method == "pgd") {
    spec.kind = AttackKind::pgd;
    spec.pgd.epsilon = a.epsilon;
    spec.pgd.loss = attack_loss_from_string(a.loss);
    spec.pgd.schedule = StepSchedule::constant();
    spec.pgd.seed = a.seed;
    if (a.iterations) spec.pgd.iterations = a.iterations;
  } else if (a.method == "deepfool" || a.method == "deepfool-abstain") {
    spec.kind = a.method == "deepfool" ? AttackKind::deepfool : AttackKind::deepfool_abstain;
    spec.deepfool.epsilon = a.epsilon;
    if (a.iterations) spec.deepfool.iterations = a.iterations;
  } else {
    throw UsageError("--method must be pgd, deepfool or deepfool-abstain");
  }
  std::ostringstream csv;
  csv << "index,label,clean_prediction,adversarial_prediction,success,iterations,linf\n" << std::setprecision(9);
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const AttackResult r = run_attack(spec, clf, data.inputs[i], data.labels[i]);
    fooled += r.success ? 1 : 0;
    csv << i << ',' << data.labels[i] << ',' << label_text(clf.predict(data.inputs[i])) << ','
        << label_text(clf.predict(r.adversarial)) << ',' << (r.success ? 1 : 0) << ',' << r.iterations << ','
        << r.linf_norm(data.inputs[i]) << '\n';
  }
  write_text(a.out, csv.str());
  std::cerr << a.method << ": " << fooled << " of " << data.size() << " examples fooled at eps " << a.epsilon << "\n";
}

// ---- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  DataSource data;
  double epsilon = 0.1;
  std::size_t noise = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string out;
};

void run_eval(const EvalArgs& a) {
  const Classifier clf = load_classifier(a.model);
  const Dataset data = a.data.load(clf.num_classes(), clf.input_shape());
  const auto natural = eval_natural(predictor_of(clf), data);
  std::optional<double> noise;
  if (a.noise) {
    std::mt19937_64 rng(a.seed);
    noise = eval_noise_abstention(predictor_of(clf), gen_uniform_noise(rng, a.noise, clf.input_shape()));
  }
  UnionOptions opts;
  opts.threads = a.threads;
  const auto adv = eval_adversarial_union(clf, data, default_attack_suite(a.epsilon), nullptr, opts);
  const ErrorReport report = make_report(fs::path(a.model).stem().string(), a.epsilon, natural, noise, adv);
  write_text(a.out, report_to_json(report));
}

// ---- margin -------------------------------------------------------------------

struct MarginArgs {
  std::string model;
  DataSource data;
  std::string method = "attack-bisection";
  double r_max = 1.0;
  double tolerance = 1e-4;
  double grid_h = 1e-3;
  std::string out;
};

void run_margin(const MarginArgs& a) {
  const Classifier clf = load_classifier(a.model);
  const Dataset data = a.data.load(clf.num_classes(), clf.input_shape());
  MarginOptions opts;
  opts.method = margin_method_from_string(a.method);
  opts.r_max = a.r_max;
  opts.tolerance = a.tolerance;
  std::optional<GridMargin> grid;
  if (opts.method == MarginMethod::grid_search) {
    grid.emplace(clf, a.grid_h);
    opts.grid = &*grid;
  }
  std::ostringstream csv;
  csv << "index,label,margin,certified\n" << std::setprecision(9);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const MarginEstimate m = signed_margin(clf, data.inputs[i], data.labels[i], opts);
    csv << i << ',' << data.labels[i] << ',' << m.value << ',' << (m.certified ? 1 : 0) << '\n';
  }
  write_text(a.out, csv.str());
}

// ---- bounds -------------------------------------------------------------------

struct BoundsArgs {
  std::string margins;
  double mu = 0.0, sigma = 0.0;
  double gamma = 0.0, epsilon = 0.0;
  std::string out;
};

std::vector<double> read_margin_column(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::stringstream header(line);
  std::string cell;
  int column = -1;
  for (int k = 0; std::getline(header, cell, ','); ++k) {
    if (cell == "margin") column = k;
  }
  if (column < 0) throw UsageError(path + " has no 'margin' column");
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    for (int k = 0; std::getline(row, cell, ','); ++k) {
      if (k == column) out.push_back(std::stod(cell));
    }
  }
  if (out.size() < 2) throw UsageError(path + " needs at least two margins");
  return out;
}

void run_bounds(const BoundsArgs& a) {
  MarginDistribution dist{a.mu, a.sigma};
  Json j;
  if (!a.margins.empty()) {
    const auto margins = read_margin_column(a.margins);
    const auto [lo, hi] = std::minmax_element(margins.begin(), margins.end());
    std::vector<double> radii;
    for (int k = 0; k <= 50; ++k) radii.push_back(*lo + (*hi - *lo) * k / 50.0);
    const auto cdf = empirical_cdf(margins, radii);
    dist = fit_normal(cdf);
    j["fitted_from"] = a.margins;
    j["examples"] = margins.size();
  }
  dist.validate();
  const Theorem1Bounds b = theorem1_bounds(dist, a.gamma, a.epsilon);
  j["mu"] = dist.mu;
  j["sigma"] = dist.sigma;
  j["gamma"] = a.gamma;
  j["epsilon"] = a.epsilon;
  j["natural_error"] = b.natural_error;
  j["adversarial_error_bound"] = b.adversarial_error_bound;
  write_text(a.out, j.dump(2) + "\n");
}

// ---- render -------------------------------------------------------------------

struct RenderArgs {
  std::string model;
  DataSource data;
  double epsilon = 0.0;
  std::size_t resolution = 200;
  std::size_t pixels = 400;
  std::string out;
};

void run_render(const RenderArgs& a) {
  const Classifier clf = load_classifier(a.model);
  RenderOptions opts;
  opts.resolution = a.resolution;
  opts.pixels = a.pixels;
  opts.epsilon = a.epsilon;
  std::optional<Dataset> points;
  if (!a.data.spec.empty()) {
    points = a.data.load(clf.num_classes(), clf.input_shape());
    opts.points = &*points;
  }
  write_text(a.out, render_decision_map(clf, opts));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial training with an abstain option: data, training, attacks and evaluation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the 2D two-class dataset or uniform noise as CSV");
  gen_cmd->add_option("--kind", gen.kind, "two-class or noise")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "number of examples")->capture_default_str();
  gen_cmd->add_option("--gap", gen.gap, "minimum L-inf distance between classes")->capture_default_str();
  gen_cmd->add_option("--amplitude", gen.amplitude, "boundary curve amplitude")->capture_default_str();
  gen_cmd->add_option("--frequency", gen.frequency, "boundary curve frequency")->capture_default_str();
  gen_cmd->add_option("--shape", gen.shape, "noise input shape, e.g. 1,28,28")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output CSV")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a CARL or adversarially trained classifier");
  train_cmd->add_option("--config", train.config, "JSON training config")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train.seed, "overrides the config seed");
  train_cmd->add_option("--out", train.out, "classifier file")->required();
  train_cmd->add_option("--curve", train.curve, "training-curve CSV (default: <out>.curve.csv)");
  train_cmd->add_option("--data-dir", train.data_dir, "MNIST IDX directory");

  AttackArgs attack;
  auto* attack_cmd = app.add_subcommand("attack", "attack every example and write per-example results as CSV");
  attack_cmd->add_option("--model", attack.model, "classifier file")->required()->check(CLI::ExistingFile);
  add_data_options(attack_cmd, attack.data);
  attack_cmd->add_option("--method", attack.method, "pgd, deepfool or deepfool-abstain")->capture_default_str();
  attack_cmd->add_option("--loss", attack.loss, "PGD loss: abstain, sum, interp, switch, cw")->capture_default_str();
  attack_cmd->add_option("--eps", attack.epsilon, "L-inf radius")->capture_default_str();
  attack_cmd->add_option("--iterations", attack.iterations, "0 keeps the evaluation default");
  attack_cmd->add_option("--seed", attack.seed)->capture_default_str();
  attack_cmd->add_option("--out", attack.out, "output CSV (default stdout)");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "natural, noise and six-attack union evaluation as a JSON report");
  eval_cmd->add_option("--model", eval.model, "classifier file")->required()->check(CLI::ExistingFile);
  add_data_options(eval_cmd, eval.data);
  eval_cmd->add_option("--eps", eval.epsilon, "L-inf radius")->capture_default_str();
  eval_cmd->add_option("--noise", eval.noise, "number of uniform noise inputs (0 skips)")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "noise seed")->capture_default_str();
  eval_cmd->add_option("--threads", eval.threads, "0 = $ABSTAIN_THREADS or hardware");
  eval_cmd->add_option("--out", eval.out, "report JSON (default stdout)");

  MarginArgs margin;
  auto* margin_cmd = app.add_subcommand("margin", "signed L-inf margins of a base classifier as CSV");
  margin_cmd->add_option("--model", margin.model, "classifier file")->required()->check(CLI::ExistingFile);
  add_data_options(margin_cmd, margin.data);
  margin_cmd->add_option("--method", margin.method, "attack-bisection or grid-search")->capture_default_str();
  margin_cmd->add_option("--r-max", margin.r_max, "largest radius probed")->capture_default_str();
  margin_cmd->add_option("--tolerance", margin.tolerance, "bisection bracket width")->capture_default_str();
  margin_cmd->add_option("--grid-h", margin.grid_h, "grid spacing for grid-search")->capture_default_str();
  margin_cmd->add_option("--out", margin.out, "output CSV (default stdout)");

  BoundsArgs bounds;
  auto* bounds_cmd = app.add_subcommand("bounds", "Theorem-1 errors from a normal margin model");
  auto* margins_opt = bounds_cmd->add_option("--margins", bounds.margins, "margin CSV to fit N(mu, sigma^2) from");
  auto* mu_opt = bounds_cmd->add_option("--mu", bounds.mu, "margin mean");
  auto* sigma_opt = bounds_cmd->add_option("--sigma", bounds.sigma, "margin standard deviation");
  mu_opt->excludes(margins_opt);
  sigma_opt->excludes(margins_opt);
  mu_opt->needs(sigma_opt);
  sigma_opt->needs(mu_opt);
  bounds_cmd->add_option("--gamma", bounds.gamma, "abstain threshold gamma*")->required();
  bounds_cmd->add_option("--eps", bounds.epsilon, "L-inf radius")->required();
  bounds_cmd->add_option("--out", bounds.out, "output JSON (default stdout)");

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "SVG decision map of a two-input classifier");
  render_cmd->add_option("--model", render.model, "classifier file")->required()->check(CLI::ExistingFile);
  add_data_options(render_cmd, render.data, false);
  render_cmd->add_option("--eps", render.epsilon, "draw eps squares around points")->capture_default_str();
  render_cmd->add_option("--resolution", render.resolution, "grid cells per axis")->capture_default_str();
  render_cmd->add_option("--pixels", render.pixels, "image side length")->capture_default_str();
  render_cmd->add_option("--out", render.out, "output SVG (default stdout)");

  // Subcommands other than train read option values from a TOML/INI file
  // with one section per subcommand ([attack], [eval], ...). train's own
  // --config is its JSON training config.
  app.set_config("--config", "", "TOML/INI file with option values, one [section] per subcommand");
  for (auto* cmd : {gen_cmd, attack_cmd, eval_cmd, margin_cmd, bounds_cmd, render_cmd}) cmd->fallthrough();

  CLI11_PARSE(app, argc, argv);
  train.seed_set = train_cmd->count("--seed") > 0;
  if (bounds_cmd->parsed() && bounds.margins.empty() && !mu_opt->count()) {
    std::cerr << "error: bounds needs --margins or --mu/--sigma\n";
    return 2;
  }

  try {
    if (gen_cmd->parsed()) run_gen_data(gen);
    if (train_cmd->parsed()) run_train(train);
    if (attack_cmd->parsed()) run_attack_cmd(attack);
    if (eval_cmd->parsed()) run_eval(eval);
    if (margin_cmd->parsed()) run_margin(margin);
    if (bounds_cmd->parsed()) run_bounds(bounds);
    if (render_cmd->parsed()) run_render(render);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
