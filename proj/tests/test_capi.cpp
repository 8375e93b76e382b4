#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "amoe_smc.h"

namespace {

using nlohmann::json;

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  amoe_string_free(s);
  return out;
}

struct Model {
  amoe_model* ptr = nullptr;
  explicit Model(const char* id) { EXPECT_EQ(amoe_model_create(id, nullptr, &ptr), AMOE_OK); }
  ~Model() { amoe_model_free(ptr); }
};

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(amoe_status_name(AMOE_OK), "Ok");
  EXPECT_GT(std::string(amoe_version()).size(), 0u);
  EXPECT_STRNE(amoe_status_name(AMOE_ERR_CONFIG), amoe_status_name(AMOE_ERR_IO));
}

TEST(CApi, UnknownModelIsAConfigErrorWithMessage) {
  amoe_model* model = nullptr;
  EXPECT_EQ(amoe_model_create("garch", nullptr, &model), AMOE_ERR_CONFIG);
  EXPECT_EQ(model, nullptr);
  EXPECT_NE(std::string(amoe_last_error()).find("garch"), std::string::npos);
}

TEST(CApi, NullArgumentsAreRejected) {
  EXPECT_EQ(amoe_model_create(nullptr, nullptr, nullptr), AMOE_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(amoe_model_dims(nullptr, nullptr, nullptr), AMOE_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(amoe_mixture_from_json(nullptr, nullptr), AMOE_ERR_INVALID_ARGUMENT);
  amoe_model_free(nullptr);
  amoe_sample_free(nullptr);
  amoe_mixture_free(nullptr);
  amoe_string_free(nullptr);
}

TEST(CApi, ModelDimensionsAndObservation) {
  Model tobit("tobit");
  int64_t state = 0;
  int64_t obs = 0;
  ASSERT_EQ(amoe_model_dims(tobit.ptr, &state, &obs), AMOE_OK);
  EXPECT_EQ(state, 2);
  EXPECT_EQ(obs, 1);
  double y = -1.0;
  ASSERT_EQ(amoe_model_default_observation(tobit.ptr, &y), AMOE_OK);
  EXPECT_EQ(y, 0.0);
}

TEST(CApi, SampleRoundTrip) {
  const std::vector<double> particles{1, 2, 3, 4, 5, 6};
  const std::vector<double> weights{0.2, 0.3, 0.5};
  amoe_sample* sample = nullptr;
  ASSERT_EQ(amoe_sample_create(2, 3, particles.data(), weights.data(), &sample), AMOE_OK);
  int64_t dim = 0;
  int64_t n = 0;
  ASSERT_EQ(amoe_sample_shape(sample, &dim, &n), AMOE_OK);
  EXPECT_EQ(dim, 2);
  EXPECT_EQ(n, 3);
  std::vector<double> p(6);
  std::vector<double> w(3);
  ASSERT_EQ(amoe_sample_read(sample, p.data(), w.data()), AMOE_OK);
  EXPECT_EQ(p, particles);
  EXPECT_EQ(w, weights);
  amoe_sample_free(sample);

  const std::vector<double> bad{-1.0, 0.5, 0.5};
  EXPECT_EQ(amoe_sample_create(2, 3, particles.data(), bad.data(), &sample), AMOE_ERR_INVALID_ARGUMENT);
}

TEST(CApi, AdaptReturnsAUsableMixture) {
  Model lg("linear_gaussian");
  amoe_sample* ancestors = nullptr;
  ASSERT_EQ(amoe_sample_reference(lg.ptr, 2000, 1, &ancestors), AMOE_OK);
  double y[2];
  ASSERT_EQ(amoe_model_default_observation(lg.ptr, y), AMOE_OK);
  amoe_mixture* theta = nullptr;
  char* trace = nullptr;
  const char* config = R"({"iterations": 3, "sample_size": 200, "initial_sample_size": 400,
                           "kld_reference_n": 1000})";
  ASSERT_EQ(amoe_adapt(lg.ptr, ancestors, y, config, 7, &theta, &trace), AMOE_OK) << amoe_last_error();
  const json rows = json::parse(take(trace));
  EXPECT_EQ(rows.size(), 4u);

  char* text = nullptr;
  ASSERT_EQ(amoe_mixture_to_json(theta, &text), AMOE_OK);
  const std::string serialized = take(text);
  amoe_mixture* copy = nullptr;
  ASSERT_EQ(amoe_mixture_from_json(serialized.c_str(), &copy), AMOE_OK);
  const double x[2] = {0.1, -0.2};
  const double xp[2] = {1.0, 0.5};
  double a = 0.0;
  double b = 1.0;
  ASSERT_EQ(amoe_mixture_log_density(theta, x, xp, &a), AMOE_OK);
  ASSERT_EQ(amoe_mixture_log_density(copy, x, xp, &b), AMOE_OK);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::isfinite(a));
  amoe_mixture_free(copy);
  amoe_mixture_free(theta);
  amoe_sample_free(ancestors);
}

TEST(CApi, MalformedMixtureJson) {
  amoe_mixture* m = nullptr;
  EXPECT_EQ(amoe_mixture_from_json("{not json", &m), AMOE_ERR_CONFIG);
  EXPECT_EQ(amoe_mixture_from_json("{}", &m), AMOE_ERR_CONFIG);
}

TEST(CApi, SimulateThenFilter) {
  Model bessel("bessel");
  const int64_t steps = 5;
  std::vector<double> states((steps + 1) * 2);
  std::vector<double> obs(steps);
  ASSERT_EQ(amoe_simulate(bessel.ptr, steps, 3, states.data(), obs.data()), AMOE_OK);
  char* trace = nullptr;
  ASSERT_EQ(amoe_filter(bessel.ptr, obs.data(), steps, R"({"particles": 500})", 4, &trace), AMOE_OK)
      << amoe_last_error();
  const json t = json::parse(take(trace));
  EXPECT_EQ(t["steps"].size(), static_cast<std::size_t>(steps + 1));
  EXPECT_EQ(amoe_filter(bessel.ptr, obs.data(), steps, R"({"proposal": "magic"})", 4, &trace), AMOE_ERR_CONFIG);
}

TEST(CApi, WeightDiagnostics) {
  const double w[4] = {1.0, 1.0, 2.0, 4.0};
  double ess = 0.0;
  double rel = 0.0;
  double ent = 0.0;
  ASSERT_EQ(amoe_weight_diagnostics(w, 4, &ess, &rel, &ent, nullptr), AMOE_OK);
  EXPECT_NEAR(ess, 64.0 / 22.0, 1e-12);
  EXPECT_NEAR(rel, 16.0 / 22.0, 1e-12);
  EXPECT_LT(ent, 0.0);
}

TEST(CApi, ResolveConfigAndSelftestIds) {
  char* resolved = nullptr;
  ASSERT_EQ(amoe_resolve_config("filter", R"({"seed": 9})", &resolved), AMOE_OK);
  const json config = json::parse(take(resolved));
  EXPECT_EQ(config["seed"], 9);
  EXPECT_EQ(amoe_resolve_config("filter", R"({"bogus": 1})", &resolved), AMOE_ERR_CONFIG);

  char* ids = nullptr;
  ASSERT_EQ(amoe_selftest_ids(&ids), AMOE_OK);
  const json list = json::parse(take(ids));
  ASSERT_EQ(list.size(), 10u);
  EXPECT_EQ(list[0], "A1");
  int passed = -1;
  char* detail = nullptr;
  EXPECT_EQ(amoe_selftest_run("A99", &passed, &detail), AMOE_ERR_INVALID_ARGUMENT);
  ASSERT_EQ(amoe_selftest_run("A10", &passed, &detail), AMOE_OK);
  EXPECT_EQ(passed, 1);
  EXPECT_FALSE(take(detail).empty());
}

TEST(CApi, WarningCountersReset) {
  amoe_reset_warnings();
  EXPECT_EQ(amoe_warning_count(AMOE_WARN_COVARIANCE_JITTER), 0u);
  const char* degenerate = R"({"family": {"kind": "gaussian"}, "pooled": false,
    "gating": {"mode": "constant", "weights": [1.0]},
    "experts": [{"lambda": [[0, 0, 0], [0, 0, 0]], "sigma": [[1, 1], [1, 1]]}]})";
  amoe_mixture* m = nullptr;
  ASSERT_EQ(amoe_mixture_from_json(degenerate, &m), AMOE_OK) << amoe_last_error();
  const double x[2] = {0, 0};
  double out = 0.0;
  ASSERT_EQ(amoe_mixture_log_density(m, x, x, &out), AMOE_OK);
  EXPECT_GE(amoe_warning_count(AMOE_WARN_COVARIANCE_JITTER), 1u);
  amoe_mixture_free(m);
}

}  // namespace
