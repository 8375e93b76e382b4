#include "amoe_smc.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <span>
#include <string>

#include "amoe/errors.hpp"
#include "amoe/experiments.hpp"
#include "amoe/parallel.hpp"
#include "amoe/warnings.hpp"
#include "selftest/acceptance.hpp"

struct amoe_model {
  std::unique_ptr<amoe::StateSpaceModel> model;
};

struct amoe_sample {
  amoe::WeightedSample sample;
};

struct amoe_mixture {
  amoe::MixtureParams theta;
};

namespace {

using amoe::Error;
using amoe::ErrorCode;
using amoe::Index;
using amoe::Json;

thread_local std::string last_error;

amoe_status fail(amoe_status status, const char* message) {
  last_error = message;
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
amoe_status guarded(F&& body) noexcept {
  try {
    last_error.clear();
    body();
    return AMOE_OK;
  } catch (const Error& e) {
    return fail(static_cast<amoe_status>(static_cast<int>(e.code())), e.what());
  } catch (const Json::exception& e) {
    return fail(AMOE_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(AMOE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(AMOE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(AMOE_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* pointer, const char* name) {
  if (pointer == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must not be null");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) {
    throw std::bad_alloc();
  }
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parse(const char* json) {
  if (json == nullptr || *json == '\0') {
    return Json::object();
  }
  try {
    Json out = Json::parse(json);
    if (!out.is_object()) {
      throw Error(ErrorCode::kConfig, "configuration must be a JSON object");
    }
    return out;
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed JSON: ") + e.what());
  }
}

amoe::Vector read_vector(const double* values, Index n) {
  return Eigen::Map<const amoe::Vector>(values, n);
}

struct ProposalOptions {
  amoe::ProposalSettings proposal;
  amoe::AdaptationSettings adaptation;
  Index kld_reference_n = 0;
};

ProposalOptions proposal_options(const Json& j) {
  ProposalOptions out;
  const double nu = j.value("nu", 4.0);
  const std::string family = j.value("family", "gaussian");
  if (family == "student_t") {
    out.proposal.family = amoe::StratumFamily::student_t(nu);
  } else if (family != "gaussian") {
    throw Error(ErrorCode::kConfig, "family must be 'gaussian' or 'student_t'");
  }
  out.proposal.components = j.value("components", Index{2});
  const std::string gating = j.value("gating", "logistic");
  if (gating != "logistic" && gating != "constant") {
    throw Error(ErrorCode::kConfig, "gating must be 'logistic' or 'constant'");
  }
  out.proposal.logistic = gating == "logistic";
  out.proposal.pooled = j.value("pooled", false);
  out.adaptation.iterations = j.value("iterations", Index{20});
  out.adaptation.sample_size = j.value("sample_size", Index{1000});
  out.adaptation.initial_sample_size = j.value("initial_sample_size", Index{2000});
  const std::string rule = j.value("step_rule", "constant");
  if (rule != "constant" && rule != "power") {
    throw Error(ErrorCode::kConfig, "step_rule must be 'constant' or 'power'");
  }
  out.adaptation.step_rule = rule == "constant" ? amoe::StepRule::kConstant : amoe::StepRule::kPower;
  out.adaptation.step_scale = j.value("step_scale", 0.1);
  out.adaptation.step_exponent = j.value("step_exponent", 0.6);
  out.kld_reference_n = j.value("kld_reference_n", Index{0});
  if (out.proposal.components < 1 || out.kld_reference_n < 0 ||
      (out.kld_reference_n > 0 && out.kld_reference_n < 1000)) {
    throw Error(ErrorCode::kConfig, "invalid proposal options");
  }
  return out;
}

}  // namespace

extern "C" {

const char* amoe_version(void) { return "0.1.0"; }

const char* amoe_last_error(void) { return last_error.c_str(); }

const char* amoe_status_name(amoe_status status) {
  if (status == AMOE_OK) {
    return "Ok";
  }
  if (status == AMOE_ERR_INTERNAL) {
    return "Internal";
  }
  return amoe::to_string(static_cast<ErrorCode>(static_cast<int>(status)));
}

amoe_status amoe_set_num_threads(int threads) {
  return guarded([&] {
    amoe::require(threads >= 0, "thread count must be nonnegative");
    amoe::set_num_threads(threads);
  });
}

uint64_t amoe_warning_count(amoe_warning kind) {
  if (static_cast<int>(kind) < 0 || static_cast<int>(kind) >= static_cast<int>(amoe::Warning::kCount)) {
    return 0;
  }
  return amoe::warning_count(static_cast<amoe::Warning>(kind));
}

void amoe_reset_warnings(void) { amoe::reset_warnings(); }

void amoe_string_free(char* s) { std::free(s); }

amoe_status amoe_model_create(const char* id, const char* params_json, amoe_model** out) {
  return guarded([&] {
    need(id, "id");
    need(out, "out");
    *out = nullptr;
    auto model = amoe::build_model(id, params_json == nullptr ? Json() : parse(params_json));
    *out = new amoe_model{std::move(model)};
  });
}

void amoe_model_free(amoe_model* model) { delete model; }

amoe_status amoe_model_dims(const amoe_model* model, int64_t* state_dim, int64_t* obs_dim) {
  return guarded([&] {
    need(model, "model");
    if (state_dim != nullptr) {
      *state_dim = model->model->state_dim();
    }
    if (obs_dim != nullptr) {
      *obs_dim = model->model->obs_dim();
    }
  });
}

amoe_status amoe_model_default_observation(const amoe_model* model, double* y) {
  return guarded([&] {
    need(model, "model");
    need(y, "y");
    const amoe::Vector v = model->model->default_observation();
    std::copy(v.data(), v.data() + v.size(), y);
  });
}

amoe_status amoe_sample_create(int64_t dim, int64_t n, const double* particles, const double* weights,
                               amoe_sample** out) {
  return guarded([&] {
    need(particles, "particles");
    need(weights, "weights");
    need(out, "out");
    *out = nullptr;
    amoe::require(dim >= 1 && n >= 1, "sample dimensions must be positive");
    amoe::WeightedSample sample;
    sample.particles = Eigen::Map<const amoe::Matrix>(particles, dim, n);
    sample.weights.assign(weights, weights + n);
    amoe::validate(sample);
    *out = new amoe_sample{std::move(sample)};
  });
}

amoe_status amoe_sample_reference(const amoe_model* model, int64_t n, uint64_t seed, amoe_sample** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = nullptr;
    amoe::require(n >= 1, "sample size must be positive");
    amoe::Rng rng(seed);
    *out = new amoe_sample{amoe::uniform_sample(model->model->sample_reference_filter(n, rng))};
  });
}

void amoe_sample_free(amoe_sample* sample) { delete sample; }

amoe_status amoe_sample_shape(const amoe_sample* sample, int64_t* dim, int64_t* n) {
  return guarded([&] {
    need(sample, "sample");
    if (dim != nullptr) {
      *dim = sample->sample.dim();
    }
    if (n != nullptr) {
      *n = sample->sample.size();
    }
  });
}

amoe_status amoe_sample_read(const amoe_sample* sample, double* particles, double* weights) {
  return guarded([&] {
    need(sample, "sample");
    const auto& s = sample->sample;
    if (particles != nullptr) {
      Eigen::Map<amoe::Matrix>(particles, s.dim(), s.size()) = s.particles;
    }
    if (weights != nullptr) {
      std::copy(s.weights.begin(), s.weights.end(), weights);
    }
  });
}

amoe_status amoe_mixture_from_json(const char* json, amoe_mixture** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = nullptr;
    auto theta = amoe::mixture_from_json(parse(json));
    *out = new amoe_mixture{std::move(theta)};
  });
}

amoe_status amoe_mixture_to_json(const amoe_mixture* mixture, char** json) {
  return guarded([&] {
    need(mixture, "mixture");
    need(json, "json");
    *json = copy_string(amoe::to_json(mixture->theta).dump());
  });
}

void amoe_mixture_free(amoe_mixture* mixture) { delete mixture; }

amoe_status amoe_mixture_log_density(const amoe_mixture* mixture, const double* ancestor, const double* child,
                                     double* out) {
  return guarded([&] {
    need(mixture, "mixture");
    need(ancestor, "ancestor");
    need(child, "child");
    need(out, "out");
    const auto& theta = mixture->theta;
    *out = amoe::proposal_log_density(theta, read_vector(ancestor, theta.ancestor_dim()),
                                      read_vector(child, theta.child_dim()));
  });
}

amoe_status amoe_adapt(const amoe_model* model, const amoe_sample* ancestors, const double* y,
                       const char* config_json, uint64_t seed, amoe_mixture** theta, char** trace_json) {
  return guarded([&] {
    need(model, "model");
    need(ancestors, "ancestors");
    need(y, "y");
    need(theta, "theta");
    *theta = nullptr;
    const auto& m = *model->model;
    const auto options = proposal_options(parse(config_json));
    const amoe::Vector obs = read_vector(y, m.obs_dim());
    m.check_observation(obs);
    amoe::require(ancestors->sample.dim() == m.state_dim(), "ancestor dimension does not match the model");
    const amoe::AuxiliaryProposal aux(ancestors->sample);
    const auto log_kernel = amoe::filtering_kernel(m, obs);
    const amoe::PriorProposal prior(m);
    std::vector<double> log_optimal;
    if (m.has_optimal_adjustment()) {
      log_optimal = amoe::optimal_log_adjustments(m, aux.ancestors().particles, obs);
    }
    amoe::Rng kld_rng(seed, 3);
    amoe::AdaptOptions adapt_options;
    adapt_options.pilot = &prior;
    adapt_options.initializer = [&](const std::vector<amoe::ProposalDraw>& draws, const std::vector<double>& w) {
      std::vector<amoe::Vector> children;
      for (const auto& draw : draws) {
        children.push_back(draw.child);
      }
      return amoe::initial_mixture(children, w, options.proposal.components, m.state_dim(),
                                   options.proposal.family, options.proposal.logistic, options.proposal.pooled);
    };
    if (options.kld_reference_n > 0) {
      adapt_options.diagnostics = [&](const amoe::ProposalKernel& proposal, amoe::IterationRecord& record) {
        amoe::KldOptions kld;
        kld.log_optimal_adjustment = log_optimal.empty() ? nullptr : &log_optimal;
        record.kld = amoe::estimate_kld(proposal, aux, log_kernel, options.kld_reference_n, kld_rng, kld);
      };
    }
    const auto placeholder =
        amoe::initial_mixture({amoe::Vector::Zero(m.state_dim())}, {1.0}, options.proposal.components,
                              m.state_dim(), options.proposal.family, options.proposal.logistic,
                              options.proposal.pooled);
    amoe::Rng rng(seed, 2);
    auto result = amoe::adapt(placeholder, aux, log_kernel, options.adaptation.build(options.proposal.pooled), rng,
                              adapt_options);
    if (trace_json != nullptr) {
      *trace_json = copy_string(amoe::to_json(result.trace, true).dump());
    }
    *theta = new amoe_mixture{std::move(result.theta)};
  });
}

amoe_status amoe_filter(const amoe_model* model, const double* observations, int64_t steps,
                        const char* config_json, uint64_t seed, char** trace_json) {
  return guarded([&] {
    need(model, "model");
    need(observations, "observations");
    need(trace_json, "trace_json");
    const auto& m = *model->model;
    amoe::require(steps >= 1, "at least one observation is required");
    const Json j = parse(config_json);
    const auto options = proposal_options(j);
    amoe::FilterConfig config;
    config.n_particles = j.value("particles", Index{1000});
    const std::string proposal = j.value("proposal", "prior");
    if (proposal == "prior") {
      config.proposal = amoe::ProposalMode::kPrior;
    } else if (proposal == "optimal") {
      config.proposal = amoe::ProposalMode::kOptimal;
    } else if (proposal == "adapted") {
      config.proposal = amoe::ProposalMode::kAdapted;
    } else {
      throw Error(ErrorCode::kConfig, "proposal must be 'prior', 'optimal' or 'adapted'");
    }
    const std::string adjustment = j.value("adjustment", "uniform");
    if (adjustment != "uniform" && adjustment != "optimal") {
      throw Error(ErrorCode::kConfig, "adjustment must be 'uniform' or 'optimal'");
    }
    config.adjustment = adjustment == "uniform" ? amoe::AdjustmentMode::kUniform : amoe::AdjustmentMode::kOptimal;
    config.adapted.adaptation = options.adaptation.build(options.proposal.pooled);
    config.adapted.components = options.proposal.components;
    config.adapted.family = options.proposal.family;
    config.adapted.logistic = options.proposal.logistic;
    config.adapted.pooled = options.proposal.pooled;
    config.adapted.warm_start = j.value("warm_start", true);
    config.adapted.stride = j.value("stride", Index{1});
    config.adapted.budget_fraction = j.value("budget_fraction", 0.0);
    std::vector<amoe::Vector> ys;
    for (int64_t k = 0; k < steps; ++k) {
      ys.push_back(read_vector(observations + k * m.obs_dim(), m.obs_dim()));
    }
    amoe::Rng rng(seed, 5);
    const auto trace = amoe::run_filter(m, ys, config, rng);
    *trace_json = copy_string(amoe::to_json(trace).dump());
  });
}

amoe_status amoe_simulate(const amoe_model* model, int64_t steps, uint64_t seed, double* states,
                          double* observations) {
  return guarded([&] {
    need(model, "model");
    need(states, "states");
    need(observations, "observations");
    const auto& m = *model->model;
    amoe::Rng rng(seed, 6);
    const auto sim = amoe::simulate(m, steps, rng);
    for (std::size_t k = 0; k < sim.states.size(); ++k) {
      std::copy(sim.states[k].data(), sim.states[k].data() + m.state_dim(), states + k * m.state_dim());
    }
    for (std::size_t k = 0; k < sim.observations.size(); ++k) {
      std::copy(sim.observations[k].data(), sim.observations[k].data() + m.obs_dim(),
                observations + k * m.obs_dim());
    }
  });
}

amoe_status amoe_weight_diagnostics(const double* weights, int64_t n, double* ess, double* relative_ess,
                                    double* negated_entropy, double* coefficient_of_variation) {
  return guarded([&] {
    need(weights, "weights");
    amoe::require(n >= 1, "at least one weight is required");
    const std::span<const double> w(weights, static_cast<std::size_t>(n));
    if (ess != nullptr) {
      *ess = amoe::ess(w);
    }
    if (relative_ess != nullptr) {
      *relative_ess = amoe::relative_ess(w);
    }
    if (negated_entropy != nullptr) {
      *negated_entropy = amoe::negated_entropy(w);
    }
    if (coefficient_of_variation != nullptr) {
      *coefficient_of_variation = amoe::coefficient_of_variation(w);
    }
  });
}

amoe_status amoe_run_experiment(const char* command, const char* config_json, char** summary_json) {
  return guarded([&] {
    need(command, "command");
    const Json summary = amoe::execute_command(command, parse(config_json));
    if (summary_json != nullptr) {
      *summary_json = copy_string(summary.dump(2));
    }
  });
}

amoe_status amoe_resolve_config(const char* command, const char* config_json, char** resolved_json) {
  return guarded([&] {
    need(command, "command");
    need(resolved_json, "resolved_json");
    *resolved_json = copy_string(amoe::resolve_config(command, parse(config_json)).resolved.dump(2));
  });
}

amoe_status amoe_selftest_ids(char** ids_json) {
  return guarded([&] {
    need(ids_json, "ids_json");
    *ids_json = copy_string(Json(amoe::selftest::criterion_ids()).dump());
  });
}

amoe_status amoe_selftest_run(const char* id, int* passed, char** detail) {
  return guarded([&] {
    need(id, "id");
    need(passed, "passed");
    const auto result = amoe::selftest::run_criterion(id);
    *passed = result.passed ? 1 : 0;
    if (detail != nullptr) {
      *detail = copy_string(result.detail);
    }
  });
}

}  // extern "C"
