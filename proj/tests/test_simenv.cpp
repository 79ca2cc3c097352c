#include <cmath>
#include <random>

#include "doctest.h"
#include "metacp/rng.hpp"
#include "metacp/simenv/env.hpp"
#include "metacp/simenv/task.hpp"

using namespace metacp;
using namespace metacp::sim;

namespace {

TransitionMatrix constant_rows(const Distribution& row) {
  TransitionMatrix m{};
  for (auto& r : m) r = row;
  return m;
}

TaskSpec fixed_task(const Distribution& row, PhysicalParams p = {}) {
  TaskSpec t;
  t.params = p;
  t.workload_chains.assign(p.K, constant_rows(row));
  t.category = Category::General;
  t.task_id = "fixed";
  return t;
}

}  // namespace

TEST_CASE("rng substreams are distinct and reproducible") {
  CHECK(derive_seed(1, Stream::Policy) == derive_seed(1, Stream::Policy));
  CHECK(derive_seed(1, Stream::Policy) != derive_seed(1, Stream::EnvDynamics));
  CHECK(derive_seed(1, Stream::Policy, 0) != derive_seed(1, Stream::Policy, 1));
  CHECK(derive_seed(1, Stream::Policy) != derive_seed(2, Stream::Policy));
  auto a = make_rng(9, Stream::Minibatch);
  auto b = make_rng(9, Stream::Minibatch);
  CHECK(a() == b());
}

TEST_CASE("category names round-trip") {
  for (auto c : {Category::Low, Category::Medium, Category::High, Category::General}) {
    CHECK(parse_category(to_string(c)) == c);
  }
  CHECK_THROWS_AS(parse_category("extreme"), ConfigError);
}

TEST_CASE("steady-state targets are distributions") {
  for (auto c : {Category::Low, Category::Medium, Category::High, Category::General}) {
    double s = 0.0;
    for (double v : steady_state_target(c)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(steady_state_target(Category::Low)[0] == doctest::Approx(0.735 / 0.997));
  CHECK(steady_state_target(Category::High)[4] == doctest::Approx(0.670));
}

TEST_CASE("physical parameter validation") {
  PhysicalParams p;
  CHECK_NOTHROW(p.validate());
  p.delta_tilde = 2 * p.delta;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.penalty = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.gamma = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.noise = -1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("channel gain") {
  PhysicalParams p;
  CHECK(channel_gain(1.0, p) == doctest::Approx(p.g_ref));
  CHECK(channel_gain(40.0, p) == doctest::Approx(channel_gain(20.0, p) / 4.0));
  // 1e-6 / 30^2
  CHECK(channel_gain(30.0, p) == doctest::Approx(1.1111111111111111e-9).epsilon(1e-12));
}

TEST_CASE("stationary distribution") {
  SUBCASE("uniform matrix") {
    TransitionMatrix m{};
    for (auto& r : m) r.fill(0.2);
    for (double v : stationary_distribution(m)) CHECK(v == doctest::Approx(0.2).epsilon(1e-10));
  }
  SUBCASE("two-state chain embedded in five states") {
    // Inactive states jump to state 0; pi solves pi0 = 0.9 pi0 + 0.5 pi1.
    TransitionMatrix m{};
    m[0] = {0.9, 0.1, 0, 0, 0};
    m[1] = {0.5, 0.5, 0, 0, 0};
    for (int i = 2; i < 5; ++i) m[i] = {1, 0, 0, 0, 0};
    const auto pi = stationary_distribution(m);
    CHECK(pi[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-10));
    CHECK(pi[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
    CHECK(pi[2] == doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("rank-one matrix returns its row") {
    const Distribution r = {0.1, 0.2, 0.3, 0.15, 0.25};
    const auto pi = stationary_distribution(constant_rows(r));
    CHECK(l1_distance(pi, r) < 1e-12);
  }
  SUBCASE("periodic chain does not converge") {
    TransitionMatrix m{};
    m[0] = {0, 1, 0, 0, 0};
    m[1] = {1, 0, 0, 0, 0};
    for (int i = 2; i < 5; ++i) m[i] = {1, 0, 0, 0, 0};
    CHECK_THROWS_AS(stationary_distribution(m, 1e-12, 1000), NumericalError);
  }
}

TEST_CASE("sample_task meets the steady-state target") {
  for (auto c : {Category::Low, Category::Medium, Category::High, Category::General}) {
    for (std::uint64_t seed : {1u, 7u, 123u}) {
      const auto t = sample_task(c, seed);
      CHECK_NOTHROW(t.validate());
      CHECK(t.workload_chains.size() == 3);
      CHECK(t.category == c);
      for (const auto& m : t.workload_chains) {
        CHECK(l1_distance(stationary_distribution(m), steady_state_target(c)) <= 0.15);
      }
    }
  }
  const auto low = sample_task(Category::Low, 1);
  for (const auto& m : low.workload_chains) {
    CHECK(stationary_distribution(m)[0] == doctest::Approx(0.735).epsilon(0.1));
  }
  CHECK(sample_task(Category::High, 5) == sample_task(Category::High, 5));
  CHECK(sample_task(Category::High, 5).task_id != sample_task(Category::High, 6).task_id);
}

TEST_CASE("exact sampler reproduces the target rows") {
  const auto t = sample_task(Category::General, 3, {}, TaskSamplerConfig::exact());
  for (const auto& m : t.workload_chains) {
    for (const auto& row : m) CHECK(row == steady_state_target(Category::General));
    CHECK(l1_distance(stationary_distribution(m), steady_state_target(Category::General)) ==
          doctest::Approx(0.0));
  }
}

TEST_CASE("unreachable target raises a construction error") {
  TaskSamplerConfig s;
  s.concentration = 0.05;
  s.jitter = 5.0;
  s.max_l1 = 1e-6;
  s.max_resamples = 3;
  CHECK_THROWS_AS(sample_task(Category::Low, 1, {}, s), ConfigError);
}

TEST_CASE("task spec validation and JSON round trip") {
  auto t = sample_task(Category::Medium, 11);
  nlohmann::json j = t;
  CHECK(j.get<TaskSpec>() == t);
  t.workload_chains[0][2][0] += 0.01;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  nlohmann::json bad = t;
  CHECK_THROWS(bad.get<TaskSpec>());
}

TEST_CASE("reset") {
  const auto t = sample_task(Category::General, 2);
  const auto s = reset(t, 4);
  CHECK(s.prev_modes == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(s == reset(t, 4));
  for (int k = 0; k < 3; ++k) {
    CHECK(s.workloads[k] >= kMinWorkload);
    CHECK(s.workloads[k] <= kMaxWorkload);
    CHECK(s.distances[k] >= t.params.d_min);
    CHECK(s.distances[k] <= t.params.d_max);
  }
  PhysicalParams p;
  p.n_hdv = 0;
  auto t0 = sample_task(Category::General, 2, p);
  CHECK(reset(t0, 1).bandwidth == p.B_total);
}

TEST_CASE("step semantics") {
  const auto t = sample_task(Category::General, 2);
  auto s = reset(t, 1);
  Rng rng = make_rng(1, Stream::EnvDynamics, 1);

  SUBCASE("all-SP costs only switching") {
    s.prev_modes = {1, 0, 1};
    const auto out = step(s, Action{{0, 0, 0}}, t, rng);
    CHECK(out.feasible);
    CHECK(out.gain == 0.0);
    CHECK(out.switch_count == 2);
    CHECK(out.reward == doctest::Approx(-2 * t.params.omega));
    CHECK(out.next_state.prev_modes == std::vector<std::uint8_t>{0, 0, 0});
  }
  SUBCASE("switch count") {
    s.prev_modes = {0, 1, 0};
    CHECK(step(s, Action{{1, 1, 0}}, t, rng).switch_count == 1);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(step(s, Action{{1, 1}}, t, rng), std::invalid_argument);
  }
}

TEST_CASE("infeasible cooperative set yields the penalty") {
  PhysicalParams p;
  p.w_feat = 2e6;
  const auto t = fixed_task({0, 0, 0, 0, 1}, p);
  EnvState s;
  s.workloads = {8, 8, 8};
  s.distances = {60, 60, 60};
  s.prev_modes = {0, 0, 0};
  s.hdv_requests = 10;
  s.bandwidth = p.B_total - 10 * p.bw_per_hdv;
  Rng rng(0);
  const auto out = step(s, Action{{1, 1, 0}}, t, rng);
  CHECK_FALSE(out.feasible);
  CHECK(out.reward == p.penalty);
  const std::vector<std::size_t> coop = {0, 1};
  CHECK_FALSE(alloc::oracle_p1(coop, s, p, 1e-3).feasible);
}

TEST_CASE("switch count is symmetric") {
  std::mt19937_64 g(3);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::uint8_t> a(3), b(3);
    for (auto& x : a) x = coin(g);
    for (auto& x : b) x = coin(g);
    CHECK(switch_count(a, b) == switch_count(b, a));
    CHECK(switch_count(a, b) >= 0);
    CHECK(switch_count(a, b) <= 3);
  }
}

TEST_CASE("long-run dynamics") {
  const auto t = sample_task(Category::General, 8);
  Environment env(std::make_shared<const TaskSpec>(t), 5);
  const auto& p = t.params;
  constexpr int kSteps = 100000;
  std::vector<Distribution> counts(3, Distribution{});
  double hdv_sum = 0.0;
  const double b_max_gain_bound = [&] {
    double fd = alloc::default_freq(kMaxWorkload, p);
    return 3 * p.kappa * kMaxWorkload * 2 * p.delta * fd * fd;
  }();
  std::mt19937_64 g(17);
  std::bernoulli_distribution coin(0.3);
  for (int i = 0; i < kSteps; ++i) {
    Action a{{0, 0, 0}};
    if (i % 50 == 0) {
      for (auto& m : a.modes) m = coin(g);
    }
    const auto out = env.step(a);
    const auto& s = env.state();
    for (int k = 0; k < 3; ++k) {
      counts[k][s.workloads[k] - kMinWorkload] += 1.0 / kSteps;
      REQUIRE(s.distances[k] >= p.d_min);
      REQUIRE(s.distances[k] <= p.d_max);
    }
    REQUIRE(s.bandwidth == p.B_total - p.bw_per_hdv * s.hdv_requests);
    REQUIRE(s.hdv_requests >= 0);
    REQUIRE(s.hdv_requests <= p.n_hdv);
    REQUIRE(out.reward <= b_max_gain_bound);
    REQUIRE(out.reward >= p.penalty);
    hdv_sum += s.hdv_requests;
  }
  for (int k = 0; k < 3; ++k) {
    CHECK(l1_distance(counts[k], stationary_distribution(t.workload_chains[k])) < 0.05);
  }
  // Binomial(10, 0.5): mean 5, variance 2.5.
  const double mean = hdv_sum / kSteps;
  CHECK(std::abs(mean - 5.0) < 3.0 * std::sqrt(2.5 / kSteps));
}

TEST_CASE("identical seeds and actions give identical trajectories") {
  const auto t = std::make_shared<const TaskSpec>(sample_task(Category::High, 4));
  Environment a(t, 21), b(t, 21);
  for (int i = 0; i < 500; ++i) {
    Action act{{static_cast<std::uint8_t>(i % 2), 1, 0}};
    const auto oa = a.step(act);
    const auto ob = b.step(act);
    REQUIRE(oa.reward == ob.reward);
    REQUIRE(a.state() == b.state());
  }
  a.reset();
  Environment c(t, 21);
  CHECK(a.state() == c.state());
}
