#include "amoe/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "amoe/errors.hpp"
#include "amoe/parallel.hpp"

namespace amoe {
namespace {

namespace fs = std::filesystem;

// Substream indices derived from the experiment seed.
enum Stream : std::uint64_t {
  kAncestorStream = 1,
  kAdaptationStream = 2,
  kKldStream = 3,
  kReferenceStream = 4,
  kFilterStream = 5,
  kSimulationStream = 6,
};

const char* default_model(const std::string& command) {
  if (command == "compare-families") {
    return "tobit";
  }
  return "bessel";
}

Json model_defaults(const std::string& id) {
  if (id == "linear_gaussian") {
    return {{"sigma", 0.1}, {"sigma_y", 0.1}, {"filter_sigma", 0.1}, {"filter_mode", {0.0, 1.0}}};
  }
  if (id == "bessel") {
    return {{"sigma_x", 1.0}, {"sigma_y2", 0.01}, {"filter_mean", {0.7, 0.7}}, {"filter_variance", 0.5}};
  }
  if (id == "tobit") {
    return {{"a", 0.8},
            {"b", {1.0, 1.0}},
            {"sigma_u", 2.0},
            {"sigma_v2", 0.1},
            {"ancestor_mean", {1.0, 1.0}},
            {"ancestor_variance", 10.0}};
  }
  throw Error(ErrorCode::kConfig, "unknown model id '" + id + "'");
}

Json adaptation_block(Index iterations, Index n, Index n0, double scale) {
  return {{"iterations", iterations},
          {"sample_size", n},
          {"initial_sample_size", n0},
          {"step_rule", "constant"},
          {"step_scale", scale},
          {"step_exponent", 0.6},
          {"pilot_em_iterations", 0},
          {"literal_pooling", false},
          {"literal_hessian", false},
          {"literal_gating", false}};
}

void check_known_keys(const Json& user, const Json& defaults, const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    if (!defaults.contains(key)) {
      throw Error(ErrorCode::kConfig, "unknown configuration key '" + prefix + key + "'");
    }
    if (value.is_object() && defaults[key].is_object()) {
      check_known_keys(value, defaults[key], prefix + key + ".");
    }
  }
}

Index positive_count(const Json& j, const char* name) {
  const auto value = j.get<std::int64_t>();
  if (value < 1) {
    throw Error(ErrorCode::kConfig, std::string(name) + " must be positive");
  }
  return static_cast<Index>(value);
}

Matrix scaled_identity(const Json& j, Index dim) {
  if (j.is_number()) {
    return j.get<double>() * Matrix::Identity(dim, dim);
  }
  return matrix_from_json(j);
}

std::vector<double> downsampled(const std::vector<double>& values, std::size_t points) {
  if (values.size() <= points) {
    return values;
  }
  std::vector<double> out;
  for (std::size_t k = 0; k < points; ++k) {
    out.push_back(values[k * (values.size() - 1) / (points - 1)]);
  }
  return out;
}

std::string row_label(Index iteration) { return iteration == 0 ? "prior" : "iter" + std::to_string(iteration); }

class Emitter {
 public:
  Emitter(const ExperimentConfig& config) : dir_(config.out), format_(config.format), config_(config.resolved) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) {
      throw Error(ErrorCode::kIo, "cannot create output directory '" + dir_.string() + "'");
    }
  }

  void table(const std::string& stem, const CsvTable& table) {
    if (format_ == "json") {
      Json doc = table.to_json();
      doc["config"] = config_;
      write(stem + ".json", doc);
    } else {
      const fs::path path = dir_ / (stem + ".csv");
      table.write_csv(path);
      files_.push_back(path.string());
      write(stem + ".meta.json", Json{{"file", stem + ".csv"}, {"config", config_}});
    }
  }

  void json(const std::string& name, Json doc) {
    doc["config"] = config_;
    write(name, doc);
  }

  [[nodiscard]] const std::vector<std::string>& files() const { return files_; }

 private:
  void write(const std::string& name, const Json& doc) {
    const fs::path path = dir_ / name;
    write_json(path, doc);
    files_.push_back(path.string());
  }

  fs::path dir_;
  std::string format_;
  Json config_;
  std::vector<std::string> files_;
};

CsvTable kld_table(const AdaptationTrace& trace) {
  bool absolute = false;
  for (const auto& record : trace.iterations) {
    absolute = absolute || (record.kld && record.kld->absolute_value);
  }
  std::vector<std::string> header{"iteration", "kld", "stderr"};
  if (absolute) {
    header.insert(header.end(), {"kld_absolute", "stderr_absolute"});
  }
  CsvTable table(header);
  for (const auto& record : trace.iterations) {
    if (!record.kld) {
      continue;
    }
    std::vector<double> row{static_cast<double>(record.iteration), record.kld->value_up_to_constant,
                            record.kld->standard_error};
    if (absolute) {
      row.push_back(record.kld->absolute_value.value_or(std::nan("")));
      row.push_back(record.kld->absolute_standard_error.value_or(std::nan("")));
    }
    table.add_row(row);
  }
  return table;
}

CsvTable proportion_table(const std::vector<double>& weights) {
  const auto curve = proportion_curve(weights);
  const auto xs = downsampled(curve.particle_fraction, 1001);
  const auto ys = downsampled(curve.mass_fraction, 1001);
  CsvTable table({"particle_fraction", "mass_fraction"});
  for (std::size_t k = 0; k < xs.size(); ++k) {
    table.add_row({xs[k], ys[k]});
  }
  return table;
}

CsvTable histogram_table(const std::vector<double>& weights) {
  const auto h = weight_histogram(weights, 50);
  CsvTable table({"bin_lower", "bin_upper", "count"});
  for (std::size_t b = 0; b < h.count.size(); ++b) {
    table.add_row({h.lower[b], h.upper[b], static_cast<double>(h.count[b])});
  }
  return table;
}

CsvTable filter_table(const FilterTrace& trace, Index dim) {
  std::vector<std::string> header{"step", "ess", "relative_ess", "entropy", "cpu_ms"};
  for (Index c = 0; c < dim; ++c) {
    header.push_back("estimate_" + std::to_string(c));
  }
  CsvTable table(header);
  for (const auto& step : trace.steps) {
    std::vector<double> row{static_cast<double>(step.step), step.ess, step.relative_ess, step.negated_entropy,
                            step.cpu_ms};
    for (Index c = 0; c < dim; ++c) {
      row.push_back(step.estimate(c));
    }
    table.add_row(row);
  }
  return table;
}

// Averages over the filtering steps, excluding the initial sample.
std::pair<double, double> step_means(const FilterTrace& trace) {
  double ess = 0.0;
  double entropy = 0.0;
  std::size_t count = 0;
  for (const auto& step : trace.steps) {
    if (step.step == 0) {
      continue;
    }
    ess += step.relative_ess;
    entropy += step.negated_entropy;
    ++count;
  }
  if (count == 0) {
    return {std::nan(""), std::nan("")};
  }
  return {ess / static_cast<double>(count), entropy / static_cast<double>(count)};
}

Json mean_and_stderr(const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) {
    var += (v - mean) * (v - mean);
  }
  const double se = values.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : std::nan("");
  return {{"mean", mean}, {"stderr", se}};
}

}  // namespace

AdaptationConfig AdaptationSettings::build(bool pooled) const {
  AdaptationConfig config =
      make_adaptation_config(iterations, sample_size, initial_sample_size, step_rule, step_scale, step_exponent);
  config.pooled = pooled;
  config.literal_pooling = literal_pooling;
  config.literal_hessian = literal_hessian;
  config.literal_gating = literal_gating;
  return config;
}

Json default_config(const std::string& command, const std::string& model_id) {
  const std::string id = model_id.empty() ? default_model(command) : model_id;
  Json model = {{"id", id}, {"params", model_defaults(id)}};
  Json proposal = {{"family", "gaussian"}, {"nu", 4.0}, {"components", 2}, {"gating", "logistic"}, {"pooled", false}};
  Json observation;
  Json adaptation;
  Json proportions;
  if (id == "linear_gaussian") {
    observation = {1.0, 0.0};
    adaptation = adaptation_block(20, 1000, 2000, 0.1);
    proportions = {0, 1, 10, 20};
  } else if (id == "bessel") {
    observation = {1.0};
    proposal["components"] = 6;
    adaptation = adaptation_block(30, 200, 1000, 1.0);
    proportions = {0, 1, 2, 30};
  } else {
    observation = {0.0};
    adaptation = adaptation_block(50, 200, 400, 1.0);
    proportions = {0, 1, 10, 50};
  }
  if (command == "filter") {
    adaptation = adaptation_block(10, 200, 400, 1.0);
    proportions = {0};
  } else if (command == "compare-families") {
    adaptation = adaptation_block(500, 200, 400, 1.0);
    proportions = {0};
  }
  return {{"model", model},
          {"observation", observation},
          {"ancestors", 20000},
          {"proposal", proposal},
          {"adaptation", adaptation},
          {"kld", {{"reference_n", 10000}, {"every", 1}, {"reference_level_n", 100000}}},
          {"proportion_iterations", proportions},
          {"filter",
           {{"particles", 2000},
            {"steps", 50},
            {"replicates", 1},
            {"observations", ""},
            {"budget_fraction", 0.0},
            {"stride", 1},
            {"warm_start", true}}},
          {"seed", 1},
          {"out", "out"},
          {"format", "csv"},
          {"threads", 0}};
}

ExperimentConfig resolve_config(const std::string& command, const Json& user) {
  if (command != "adapt-demo" && command != "filter" && command != "compare-families") {
    throw Error(ErrorCode::kConfig, "unknown command '" + command + "'");
  }
  try {
    if (!user.is_null() && !user.is_object()) {
      throw Error(ErrorCode::kConfig, "configuration must be a JSON object");
    }
    std::string id;
    if (user.contains("model") && user["model"].contains("id")) {
      id = user["model"]["id"].get<std::string>();
    }
    Json resolved = default_config(command, id);
    if (!user.is_null()) {
      check_known_keys(user, resolved, "");
      resolved.merge_patch(user);
    }
    resolved["command"] = command;

    ExperimentConfig config;
    config.command = command;
    config.model_id = resolved["model"]["id"].get<std::string>();
    config.model_params = resolved["model"]["params"];
    config.observation = vector_from_json(resolved["observation"]);
    config.ancestors = positive_count(resolved["ancestors"], "ancestors");

    const auto& proposal = resolved["proposal"];
    const auto family = proposal["family"].get<std::string>();
    config.student_nu = proposal["nu"].get<double>();
    if (family == "gaussian") {
      config.proposal.family = StratumFamily::gaussian();
    } else if (family == "student_t") {
      config.proposal.family = StratumFamily::student_t(config.student_nu);
    } else {
      throw Error(ErrorCode::kConfig, "proposal.family must be 'gaussian' or 'student_t'");
    }
    config.proposal.components = positive_count(proposal["components"], "proposal.components");
    const auto gating = proposal["gating"].get<std::string>();
    if (gating != "logistic" && gating != "constant") {
      throw Error(ErrorCode::kConfig, "proposal.gating must be 'logistic' or 'constant'");
    }
    config.proposal.logistic = gating == "logistic";
    config.proposal.pooled = proposal["pooled"].get<bool>();

    const auto& a = resolved["adaptation"];
    config.adaptation.iterations = positive_count(a["iterations"], "adaptation.iterations");
    config.adaptation.sample_size = positive_count(a["sample_size"], "adaptation.sample_size");
    config.adaptation.initial_sample_size = positive_count(a["initial_sample_size"], "adaptation.initial_sample_size");
    const auto rule = a["step_rule"].get<std::string>();
    if (rule != "constant" && rule != "power") {
      throw Error(ErrorCode::kConfig, "adaptation.step_rule must be 'constant' or 'power'");
    }
    config.adaptation.step_rule = rule == "constant" ? StepRule::kConstant : StepRule::kPower;
    config.adaptation.step_scale = a["step_scale"].get<double>();
    config.adaptation.step_exponent = a["step_exponent"].get<double>();
    config.adaptation.literal_pooling = a["literal_pooling"].get<bool>();
    config.adaptation.literal_hessian = a["literal_hessian"].get<bool>();
    config.adaptation.literal_gating = a["literal_gating"].get<bool>();
    const auto pilot_em = a["pilot_em_iterations"].get<std::int64_t>();
    if (pilot_em < 0) {
      throw Error(ErrorCode::kConfig, "adaptation.pilot_em_iterations must be nonnegative");
    }
    config.adaptation.pilot_em_iterations = static_cast<Index>(pilot_em);
    (void)config.adaptation.build(config.proposal.pooled);

    const auto& kld = resolved["kld"];
    config.kld_reference_n = positive_count(kld["reference_n"], "kld.reference_n");
    if (config.kld_reference_n < 1000) {
      throw Error(ErrorCode::kConfig, "kld.reference_n must be at least 1000");
    }
    config.kld_every = positive_count(kld["every"], "kld.every");
    config.reference_level_n = positive_count(kld["reference_level_n"], "kld.reference_level_n");
    if (config.reference_level_n < 1000) {
      throw Error(ErrorCode::kConfig, "kld.reference_level_n must be at least 1000");
    }
    // Default curve iterations beyond a user-chosen L are dropped; explicit ones must fit.
    const bool explicit_curves = !user.is_null() && user.contains("proportion_iterations");
    if (!explicit_curves) {
      Json kept = Json::array();
      for (const auto& value : resolved["proportion_iterations"]) {
        if (value.get<std::int64_t>() <= config.adaptation.iterations) {
          kept.push_back(value);
        }
      }
      resolved["proportion_iterations"] = kept;
    }
    for (const auto& value : resolved["proportion_iterations"]) {
      const auto it = value.get<std::int64_t>();
      if (it < 0 || it > config.adaptation.iterations) {
        throw Error(ErrorCode::kConfig, "proportion_iterations entries must lie in [0, L]");
      }
      config.proportion_iterations.push_back(static_cast<Index>(it));
    }

    const auto& filter = resolved["filter"];
    config.particles = positive_count(filter["particles"], "filter.particles");
    if (config.particles < 2) {
      throw Error(ErrorCode::kConfig, "filter.particles must be at least 2");
    }
    config.steps = positive_count(filter["steps"], "filter.steps");
    config.replicates = positive_count(filter["replicates"], "filter.replicates");
    config.observations_path = filter["observations"].get<std::string>();
    config.budget_fraction = filter["budget_fraction"].get<double>();
    if (!(config.budget_fraction >= 0.0 && config.budget_fraction < 1.0)) {
      throw Error(ErrorCode::kConfig, "filter.budget_fraction must lie in [0, 1)");
    }
    config.stride = positive_count(filter["stride"], "filter.stride");
    config.warm_start = filter["warm_start"].get<bool>();

    config.seed = resolved["seed"].get<std::uint64_t>();
    config.out = resolved["out"].get<std::string>();
    config.format = resolved["format"].get<std::string>();
    if (config.format != "csv" && config.format != "json") {
      throw Error(ErrorCode::kConfig, "format must be 'csv' or 'json'");
    }
    config.threads = resolved["threads"].get<int>();
    if (config.threads < 0) {
      throw Error(ErrorCode::kConfig, "threads must be nonnegative");
    }
    (void)build_model(config.model_id, config.model_params);
    config.resolved = std::move(resolved);
    return config;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("invalid configuration: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) {
      throw Error(ErrorCode::kConfig, e.what());
    }
    throw;
  }
}

std::unique_ptr<StateSpaceModel> build_model(const std::string& id, const Json& params) {
  Json merged = model_defaults(id);
  if (!params.is_null()) {
    check_known_keys(params, merged, "model.params.");
    merged.merge_patch(params);
  }
  if (id == "linear_gaussian") {
    LinearGaussianParams p;
    p.sigma = scaled_identity(merged["sigma"], 2);
    p.sigma_y = scaled_identity(merged["sigma_y"], 2);
    p.filter_sigma = scaled_identity(merged["filter_sigma"], 2);
    p.filter_mode = vector_from_json(merged["filter_mode"]);
    return std::make_unique<LinearGaussianModel>(p);
  }
  if (id == "bessel") {
    BesselParams p;
    p.sigma_x = merged["sigma_x"].get<double>();
    p.sigma_y2 = merged["sigma_y2"].get<double>();
    p.filter_mean = vector_from_json(merged["filter_mean"]);
    p.filter_variance = merged["filter_variance"].get<double>();
    return std::make_unique<BesselModel>(p);
  }
  TobitParams p;
  p.a = scaled_identity(merged["a"], 2);
  p.b = vector_from_json(merged["b"]);
  p.sigma_u = scaled_identity(merged["sigma_u"], 2);
  p.sigma_v2 = merged["sigma_v2"].get<double>();
  p.ancestor_mean = vector_from_json(merged["ancestor_mean"]);
  p.ancestor_variance = merged["ancestor_variance"].get<double>();
  return std::make_unique<TobitModel>(p);
}

namespace {

// Guideline initialization from the pilot batch, optionally refined by a few
// rounds of batch EM on the same weighted pairs.
InitializerFn pilot_initializer(const ExperimentConfig& config, const StratumFamily& family,
                              const AuxiliaryProposal& aux, Index dim, const AdaptationConfig& adaptation) {
  return [&config, family, &aux, dim, adaptation](const std::vector<ProposalDraw>& draws,
                                                  const std::vector<double>& weights) {
    std::vector<Vector> children;
    children.reserve(draws.size());
    for (const auto& draw : draws) {
      children.push_back(draw.child);
    }
    MixtureParams theta = initial_mixture(children, weights, config.proposal.components, dim, family,
                                          config.proposal.logistic, config.proposal.pooled);
    if (config.adaptation.pilot_em_iterations == 0) {
      return theta;
    }
    std::vector<WeightedPair> pairs(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const Vector x = aux.ancestors().particles.col(draws[i].ancestor);
      pairs[i].ext_ancestor.resize(x.size() + 1);
      pairs[i].ext_ancestor << x, 1.0;
      pairs[i].child = draws[i].child;
      pairs[i].weight = weights[i];
    }
    return fit_mixture(theta, pairs, config.adaptation.pilot_em_iterations, adaptation);
  };
}

}  // namespace

AdaptDemoResult run_adapt_demo(const ExperimentConfig& config) {
  const auto model = build_model(config.model_id, config.model_params);
  const Vector& y = config.observation;
  model->check_observation(y);
  Rng ancestor_rng(config.seed, kAncestorStream);
  const AuxiliaryProposal aux(uniform_sample(model->sample_reference_filter(config.ancestors, ancestor_rng)));
  const LogKernelFn log_kernel = filtering_kernel(*model, y);
  std::vector<double> log_optimal;
  if (model->has_optimal_adjustment()) {
    log_optimal = optimal_log_adjustments(*model, aux.ancestors().particles, y);
  }
  const AdaptationConfig adaptation = config.adaptation.build(config.proposal.pooled);
  const Index last = adaptation.iterations;

  AdaptDemoResult result;
  Rng kld_rng(config.seed, kKldStream);
  const PriorProposal prior(*model);
  AdaptOptions options;
  options.pilot = &prior;
  options.keep_weights = true;
  options.initializer = pilot_initializer(config, config.proposal.family, aux, model->state_dim(), adaptation);
  options.diagnostics = [&](const ProposalKernel& proposal, IterationRecord& record) {
    const Index l = record.iteration;
    const bool curve = std::find(config.proportion_iterations.begin(), config.proportion_iterations.end(), l) !=
                       config.proportion_iterations.end();
    if (l % config.kld_every != 0 && l != last && !curve) {
      return;
    }
    std::vector<double> weights;
    KldOptions kld_options;
    kld_options.log_optimal_adjustment = log_optimal.empty() ? nullptr : &log_optimal;
    kld_options.weights_out = curve ? &weights : nullptr;
    record.kld = estimate_kld(proposal, aux, log_kernel, config.kld_reference_n, kld_rng, kld_options);
    if (curve) {
      result.reference_weights[l] = std::move(weights);
    }
  };
  const MixtureParams placeholder =
      initial_mixture({Vector::Zero(model->state_dim())}, {1.0}, config.proposal.components, model->state_dim(),
                      config.proposal.family, config.proposal.logistic, config.proposal.pooled);
  Rng adapt_rng(config.seed, kAdaptationStream);
  auto adapted = adapt(placeholder, aux, log_kernel, adaptation, adapt_rng, options);
  result.theta = std::move(adapted.theta);
  result.trace = std::move(adapted.trace);
  if (!result.trace.iterations.empty()) {
    result.pilot_weights = std::move(result.trace.iterations.front().weights);
  }
  for (auto& record : result.trace.iterations) {
    record.weights.clear();
  }
  if (model->has_optimal_sampler()) {
    const OptimalProposal optimal(*model, y);
    Rng reference_rng(config.seed, kReferenceStream);
    KldOptions kld_options;
    kld_options.log_optimal_adjustment = &log_optimal;
    result.optimal_level =
        estimate_kld(optimal, aux, log_kernel, config.reference_level_n, reference_rng, kld_options);
  }
  return result;
}

FilterConfig bootstrap_filter_config(const ExperimentConfig& config) {
  FilterConfig filter;
  filter.n_particles = config.particles;
  filter.proposal = ProposalMode::kPrior;
  filter.adjustment = AdjustmentMode::kUniform;
  return filter;
}

FilterConfig adaptive_filter_config(const ExperimentConfig& config) {
  FilterConfig filter = bootstrap_filter_config(config);
  filter.proposal = ProposalMode::kAdapted;
  filter.adapted.adaptation = config.adaptation.build(config.proposal.pooled);
  filter.adapted.components = config.proposal.components;
  filter.adapted.family = config.proposal.family;
  filter.adapted.logistic = config.proposal.logistic;
  filter.adapted.pooled = config.proposal.pooled;
  filter.adapted.warm_start = config.warm_start;
  filter.adapted.stride = config.stride;
  filter.adapted.budget_fraction = config.budget_fraction;
  return filter;
}

FilterComparison run_filter_comparison(const ExperimentConfig& config, const StateSpaceModel& model,
                                       const std::vector<Vector>& observations, std::uint64_t seed) {
  FilterComparison out;
  out.observations = observations;
  Rng bootstrap_rng(seed, kFilterStream);
  out.bootstrap = run_filter(model, observations, bootstrap_filter_config(config), bootstrap_rng);
  Rng adaptive_rng(seed, kFilterStream);
  out.adaptive = run_filter(model, observations, adaptive_filter_config(config), adaptive_rng);
  return out;
}

FamilyComparison run_family_comparison(const ExperimentConfig& config) {
  const auto model = build_model(config.model_id, config.model_params);
  const Vector& y = config.observation;
  model->check_observation(y);
  require(model->has_optimal_sampler(), "compare-families needs a model with a closed-form optimal kernel");
  Rng ancestor_rng(config.seed, kAncestorStream);
  const AuxiliaryProposal aux(uniform_sample(model->sample_reference_filter(config.ancestors, ancestor_rng)));
  const LogKernelFn log_kernel = filtering_kernel(*model, y);
  const std::vector<double> log_optimal = optimal_log_adjustments(*model, aux.ancestors().particles, y);
  KldOptions kld_options;
  kld_options.log_optimal_adjustment = &log_optimal;

  FamilyComparison out;
  const PriorProposal prior(*model);
  const OptimalProposal optimal(*model, y);
  Rng reference_rng(config.seed, kReferenceStream);
  out.prior_level = estimate_kld(prior, aux, log_kernel, config.reference_level_n, reference_rng, kld_options);
  out.optimal_level = estimate_kld(optimal, aux, log_kernel, config.reference_level_n, reference_rng, kld_options);

  const AdaptationConfig adaptation = config.adaptation.build(config.proposal.pooled);
  const Index last = adaptation.iterations;
  auto run = [&](const StratumFamily& family) {
    Rng kld_rng(config.seed, kKldStream);
    AdaptOptions options;
    options.pilot = &prior;
    options.initializer = pilot_initializer(config, family, aux, model->state_dim(), adaptation);
    options.diagnostics = [&](const ProposalKernel& proposal, IterationRecord& record) {
      if (record.iteration % config.kld_every == 0 || record.iteration == last) {
        record.kld = estimate_kld(proposal, aux, log_kernel, config.kld_reference_n, kld_rng, kld_options);
      }
    };
    const MixtureParams placeholder =
        initial_mixture({Vector::Zero(model->state_dim())}, {1.0}, config.proposal.components,
                        model->state_dim(), family, config.proposal.logistic, config.proposal.pooled);
    Rng adapt_rng(config.seed, kAdaptationStream);
    return adapt(placeholder, aux, log_kernel, adaptation, adapt_rng, options).trace;
  };
  out.gaussian = run(StratumFamily::gaussian());
  out.student = run(StratumFamily::student_t(config.student_nu));
  return out;
}

Json execute_command(const std::string& command, const Json& user_config) {
  const ExperimentConfig config = resolve_config(command, user_config);
  set_num_threads(config.threads);
  Emitter emit(config);
  Json summary = {{"command", command}, {"model", config.model_id}, {"seed", config.seed}};

  if (command == "adapt-demo") {
    const auto result = run_adapt_demo(config);
    emit.table("kld_trace", kld_table(result.trace));
    for (const auto& [iteration, weights] : result.reference_weights) {
      emit.table("proportions_" + row_label(iteration), proportion_table(weights));
      emit.table("weights_hist_" + row_label(iteration), histogram_table(weights));
    }
    emit.json("params_trace.json", Json{{"iterations", to_json(result.trace, true)}});
    const auto& first = result.trace.iterations.front();
    const auto& final_row = result.trace.iterations.back();
    summary["rows"] = result.trace.iterations.size();
    if (first.kld) {
      summary["kld_initial"] = to_json(*first.kld);
    }
    if (final_row.kld) {
      summary["kld_final"] = to_json(*final_row.kld);
    }
    if (!result.pilot_weights.empty()) {
      summary["pilot_null_weight_fraction"] = fraction_below(result.pilot_weights, 1e-6);
    }
    if (result.optimal_level) {
      summary["optimal_reference"] = to_json(*result.optimal_level);
    }
  } else if (command == "filter") {
    const auto model = build_model(config.model_id, config.model_params);
    std::vector<double> ess_gain;
    std::vector<double> entropy_gain;
    Json replicates = Json::array();
    for (Index r = 0; r < config.replicates; ++r) {
      const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
      std::vector<Vector> observations;
      if (!config.observations_path.empty()) {
        observations = read_observations_csv(config.observations_path, model->obs_dim());
      } else {
        Rng sim_rng(seed, kSimulationStream);
        observations = simulate(*model, config.steps, sim_rng).observations;
      }
      const auto comparison = run_filter_comparison(config, *model, observations, seed);
      const std::string suffix = config.replicates > 1 ? "_r" + std::to_string(r) : "";
      CsvTable obs_table({"step", "y"});
      if (model->obs_dim() == 1) {
        for (std::size_t k = 0; k < observations.size(); ++k) {
          obs_table.add_row({static_cast<double>(k + 1), observations[k](0)});
        }
        emit.table("observations" + suffix, obs_table);
      }
      emit.table("trace_bootstrap" + suffix, filter_table(comparison.bootstrap, model->state_dim()));
      emit.table("trace_adaptive" + suffix, filter_table(comparison.adaptive, model->state_dim()));
      const auto [b_ess, b_entropy] = step_means(comparison.bootstrap);
      const auto [a_ess, a_entropy] = step_means(comparison.adaptive);
      ess_gain.push_back(a_ess - b_ess);
      entropy_gain.push_back(b_entropy - a_entropy);
      replicates.push_back({{"seed", seed},
                            {"bootstrap", {{"mean_relative_ess", b_ess}, {"mean_entropy", b_entropy}}},
                            {"adaptive", {{"mean_relative_ess", a_ess}, {"mean_entropy", a_entropy}}},
                            {"collapsed", comparison.bootstrap.collapsed || comparison.adaptive.collapsed}});
    }
    summary["replicates"] = replicates;
    summary["relative_ess_gain"] = mean_and_stderr(ess_gain);
    summary["entropy_reduction"] = mean_and_stderr(entropy_gain);
  } else {
    const auto result = run_family_comparison(config);
    emit.table("kld_trace_gaussian", kld_table(result.gaussian));
    emit.table("kld_trace_student_t", kld_table(result.student));
    CsvTable levels({"level", "kld", "stderr", "kld_absolute", "stderr_absolute"});
    for (const auto* estimate : {&result.prior_level, &result.optimal_level}) {
      levels.add_row({estimate == &result.prior_level ? 0.0 : 1.0, estimate->value_up_to_constant,
                      estimate->standard_error, estimate->absolute_value.value_or(std::nan("")),
                      estimate->absolute_standard_error.value_or(std::nan(""))});
    }
    emit.table("reference_levels", levels);
    summary["prior_level"] = to_json(result.prior_level);
    summary["optimal_level"] = to_json(result.optimal_level);
    summary["gaussian_final"] = to_json(*result.gaussian.iterations.back().kld);
    summary["student_t_final"] = to_json(*result.student.iterations.back().kld);
  }
  summary["files"] = emit.files();
  write_json(fs::path(config.out) / "summary.json", summary);
  return summary;
}

}  // namespace amoe
