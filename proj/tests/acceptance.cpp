// End-to-end acceptance gates. Prints one PASS/FAIL line per criterion.
// Exit status is nonzero only when a criterion throws, or when --strict is
// given and any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "metacp/allocator.hpp"
#include "metacp/expcli/commands.hpp"
#include "metacp/expcli/experiments.hpp"
#include "metacp/meta.hpp"
#include "metacp/neural.hpp"
#include "metacp/ppo.hpp"

namespace fs = std::filesystem;
using namespace metacp;
using namespace metacp::exp;
using sim::Category;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const char* name(Category c) {
  switch (c) {
    case Category::Low: return "low";
    case Category::Medium: return "medium";
    case Category::High: return "high";
    case Category::General: return "general";
  }
  return "?";
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

// ---------------------------------------------------------------- 1

Outcome allocator_vs_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = oracle_check(sim::PhysicalParams{}, 200, 1e-3, 2024);
  const double secs = seconds_since(t0);
  return {r.passed() && secs < 30.0,
          fmt("200 instances, max gap %.3g, agreement %.4f, %.1f s", r.max_relative_gap,
              r.agreement_rate, secs)};
}

// ---------------------------------------------------------------- 2

template <class F>
double fd_worst(std::vector<double> x, std::span<const double> analytic, F&& f, double h) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

// Smallest |pre-activation| over the hidden ReLU units, recomputed from the
// flat weights. Central differences are only valid away from the kinks.
double relu_margin(const nn::ModelWeights& w, std::span<const double> input) {
  std::vector<double> a(input.begin(), input.end());
  double margin = INFINITY;
  const auto shapes = nn::layout(w.spec);
  for (std::size_t l = 0; l + 1 < shapes.size(); ++l) {
    const auto s = shapes[l];
    std::vector<double> next(s.out);
    for (std::size_t o = 0; o < s.out; ++o) {
      double z = w.values[s.offset + s.out * s.in + o];
      for (std::size_t i = 0; i < s.in; ++i) z += w.values[s.offset + o * s.in + i] * a[i];
      margin = std::min(margin, std::abs(z));
      next[o] = std::max(z, 0.0);
    }
    a = std::move(next);
  }
  return margin;
}

Outcome gradient_exactness() {
  std::mt19937_64 g(7);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto network_error = [&](const nn::MlpSpec& spec, std::uint64_t seed) {
    auto w = nn::init_weights(spec, seed);
    for (auto& v : w.values) v += noise(g);
    std::vector<double> x(spec.input_dim), c(spec.heads * spec.head_dim);
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& v : x) v = u(g);
      if (relu_margin(w, x) > 1e-3) break;
    }
    for (auto& v : c) v = 2 * u(g) - 1;
    const auto analytic = nn::backward(w, nn::forward(w, x), c);
    auto probe = w;
    return fd_worst(w.values, analytic, [&](const std::vector<double>& theta) {
      probe.values = theta;
      const auto out = nn::forward(probe, x).outputs;
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += c[i] * out[i];
      return s;
    }, 1e-5);
  };
  double actor = 0.0, critic = 0.0;
  for (int d = 0; d < 100; ++d) {
    actor = std::max(actor, network_error(nn::MlpSpec::actor(10, 3), 100 + d));
    critic = std::max(critic, network_error(nn::MlpSpec::critic(10), 200 + d));
  }

  // Unified loss on a 10-sample batch drawn from a real rollout, with the
  // stored log-probs perturbed so ratios differ from 1.
  auto model = ppo::PolicyModel::init(3, 5);
  for (auto* w : {&model.actor, &model.critic}) {
    for (auto& v : w->values) v += 0.5 * noise(g);
  }
  sim::Environment env(std::make_shared<const sim::TaskSpec>(sim::sample_task(Category::High, 1)), 1);
  Rng rng(3);
  const auto traj = ppo::collect(model.actor, model.critic, env, 10, rng);
  const auto adv = ppo::compute_advantages(traj.rewards(), traj.values(), 0.99, 0.95);
  auto batch = ppo::make_batch(traj, adv);
  for (auto& s : batch) s.old_log_prob += 0.03 * noise(g);
  const auto loss = ppo::unified_loss(model, batch, 0.2);
  auto probe = model;
  const double unified = fd_worst(model.flatten(), loss.grad, [&](const std::vector<double>& theta) {
    probe.assign(theta);
    return ppo::unified_loss(probe, batch, 0.2).value;
  }, 1e-6);

  return {actor <= 1e-4 && critic <= 1e-4 && unified <= 1e-4,
          fmt("max rel error actor %.2e, critic %.2e, unified loss %.2e", actor, critic, unified)};
}

// ---------------------------------------------------------------- 3

Outcome delay_equality() {
  const sim::PhysicalParams p;
  sim::Environment env(std::make_shared<const sim::TaskSpec>(sim::sample_task(Category::General, 11)), 11);
  Rng rng(11);
  std::bernoulli_distribution coin(0.5);
  double worst_delay = 0.0, min_gain = INFINITY;
  std::size_t checked = 0;
  for (int t = 0; t < 300; ++t) {
    const sim::EnvState s = env.state();
    for (unsigned mask = 1; mask < 8; ++mask) {
      std::vector<std::size_t> coop;
      for (std::size_t k = 0; k < 3; ++k) {
        if (mask >> k & 1) coop.push_back(k);
      }
      const auto a = alloc::solve_p1(coop, s, p);
      if (!a.feasible) continue;
      for (std::size_t k : coop) {
        const double g = sim::channel_gain(s.distances[k], p);
        const double rate = a.betas[k] * s.bandwidth * alloc::spectral_efficiency(g, p);
        const double delay = p.w_feat / rate + p.delta_hat / a.freqs[k];
        const double budget = p.Delta / s.workloads[k];
        worst_delay = std::max(worst_delay, std::abs(delay - budget) / budget);
        ++checked;
      }
      for (double gk : a.gains) min_gain = std::min(min_gain, gk);
    }
    sim::Action act;
    for (int k = 0; k < 3; ++k) act.modes.push_back(coin(rng));
    env.step(act);
  }
  return {checked > 0 && worst_delay <= 1e-6 && min_gain >= -1e-12,
          fmt("%zu cooperative pairs, max delay residual %.2e, min gain %.3g", checked,
              worst_delay, min_gain)};
}

// ---------------------------------------------------------------- 4

sim::TaskSpec dominance_task() {
  sim::TaskSpec t;
  t.params.B_total = 100e6;
  t.params.omega = 0.0;
  t.category = Category::Low;
  t.task_id = "dominance";
  sim::TransitionMatrix chain{};
  for (auto& row : chain) row = {1.0, 0.0, 0.0, 0.0, 0.0};
  t.workload_chains.assign(t.params.K, chain);
  t.validate();
  return t;
}

Outcome ppo_dominance() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto task = std::make_shared<const sim::TaskSpec>(dominance_task());
  const auto& p = task->params;

  // All-CP must beat every other action in every visited state.
  sim::Environment probe(task, 99);
  Rng rng(99);
  std::bernoulli_distribution coin(0.5);
  double worst_margin = INFINITY;
  for (int t = 0; t < 500; ++t) {
    const auto& s = probe.state();
    std::vector<double> value(8);
    for (unsigned mask = 0; mask < 8; ++mask) {
      std::vector<std::size_t> coop;
      for (std::size_t k = 0; k < 3; ++k) {
        if (mask >> k & 1) coop.push_back(k);
      }
      const auto a = alloc::solve_p1(coop, s, p);
      value[mask] = a.feasible ? a.total_gain : p.penalty;
    }
    for (unsigned mask = 0; mask < 7; ++mask) worst_margin = std::min(worst_margin, value[7] - value[mask]);
    sim::Action act;
    for (int k = 0; k < 3; ++k) act.modes.push_back(coin(rng));
    probe.step(act);
  }
  if (!(worst_margin > 0.0)) return {false, fmt("all-CP not strictly optimal (margin %.3g)", worst_margin)};

  ppo::PpoConfig cfg;
  std::vector<double> rates;
  for (std::uint64_t seed : {1, 2, 3}) {
    sim::Environment env(task, derive_seed(seed, Stream::EnvDynamics));
    ppo::Agent agent(ppo::PolicyModel::init(3, derive_seed(seed, Stream::Init)), seed);
    for (int e = 0; e < 100; ++e) ppo::train_epoch(agent, env, cfg);
    sim::Environment eval_env(task, derive_seed(seed, Stream::EnvDynamics, 7));
    Rng eval_rng = make_rng(seed, Stream::Policy, 7);
    const auto traj = ppo::collect(agent.model.actor, agent.model.critic, eval_env, 1000, eval_rng);
    std::size_t all_cp = 0;
    for (const auto& st : traj.steps) {
      all_cp += std::all_of(st.action.modes.begin(), st.action.modes.end(),
                            [](std::uint8_t m) { return m == 1; });
    }
    rates.push_back(double(all_cp) / traj.size());
  }
  const double secs = seconds_since(t0);
  const bool ok = std::all_of(rates.begin(), rates.end(), [](double r) { return r >= 0.95; });
  return {ok && secs < 180.0,
          fmt("all-CP margin %.3g J, all-CP rate after 100 epochs %.3f/%.3f/%.3f, %.0f s",
              worst_margin, rates[0], rates[1], rates[2], secs)};
}

// ---------------------------------------------------------------- 5-8, 10

struct RunSummary {
  double e90 = 0.0;
  double final = 0.0;
  double start_smoothed = 0.0;
  double switch_rate = 0.0;  // mean over the final window
};

RunSummary summarize(const TrainingRun& r) {
  RunSummary s;
  s.e90 = double(epochs_to_fraction(r.curve));
  s.final = final_mean(r.curve.raw);
  s.start_smoothed = r.curve.smoothed.front();
  std::vector<double> sw;
  for (const auto& st : r.stats) sw.push_back(st.switch_rate);
  s.switch_rate = final_mean(sw);
  return s;
}

std::vector<double> field(const std::vector<RunSummary>& v, double RunSummary::*m) {
  std::vector<double> out;
  for (const auto& s : v) out.push_back(s.*m);
  return out;
}

std::string list(const std::vector<RunSummary>& v, double RunSummary::*m, const char* f = "%.0f") {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : "/") + fmt(f, s.*m);
  return out;
}

struct Study {
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::map<Category, ppo::PolicyModel> metas;
  std::map<Category, std::vector<RunSummary>> scratch;
  std::map<Category, std::vector<RunSummary>> adapted;  // same-category meta
  std::map<Category, std::vector<RunSummary>> to_high;  // source meta -> High
  std::vector<RunSummary> transfer;
  std::vector<RunSummary> heavy_switch;
  double meta_train_secs = 0.0;
  double max_run_secs = 0.0;

  Study() {
    config.epochs = 200;
    config.meta.meta_iterations = 300;
  }

  TrainingRun timed(const std::function<TrainingRun()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = f();
    max_run_secs = std::max(max_run_secs, seconds_since(t0));
    return r;
  }

  void run() {
    for (auto cat : {Category::Low, Category::Medium, Category::High, Category::General}) {
      progress(fmt("meta-training %s (%zu iterations)", name(cat), config.meta.meta_iterations));
      const auto t0 = std::chrono::steady_clock::now();
      metas[cat] = run_meta_train(config, cat, 1000 + static_cast<std::uint64_t>(cat)).meta_model;
      meta_train_secs = std::max(meta_train_secs, seconds_since(t0));
    }
    std::vector<ppo::PolicyModel> high_models;
    for (auto cat : {Category::Low, Category::Medium, Category::High, Category::General}) {
      for (auto s : seeds) {
        progress(fmt("scratch %s seed %llu", name(cat), (unsigned long long)s));
        auto r = timed([&] { return run_scratch(config, cat, s); });
        scratch[cat].push_back(summarize(r));
        if (cat == Category::High) high_models.push_back(r.model);
      }
    }
    for (auto cat : {Category::Low, Category::Medium, Category::High, Category::General}) {
      for (auto s : seeds) {
        progress(fmt("meta-adapt %s seed %llu", name(cat), (unsigned long long)s));
        adapted[cat].push_back(
            summarize(timed([&] { return run_meta_adapt(config, metas[cat], cat, cat, s); })));
      }
    }
    to_high[Category::High] = adapted[Category::High];
    for (auto src : {Category::General, Category::Low, Category::Medium}) {
      for (auto s : seeds) {
        progress(fmt("meta-adapt %s->high seed %llu", name(src), (unsigned long long)s));
        to_high[src].push_back(summarize(
            timed([&] { return run_meta_adapt(config, metas[src], src, Category::High, s); })));
      }
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      progress(fmt("transfer high->general seed %llu", (unsigned long long)seeds[i]));
      transfer.push_back(summarize(
          timed([&] { return run_transfer(config, high_models[i], Category::General, seeds[i]); })));
    }
    ExperimentConfig heavy = config;
    heavy.physical.omega *= 100.0;
    for (auto s : seeds) {
      progress(fmt("scratch general with 100x switching cost, seed %llu", (unsigned long long)s));
      heavy_switch.push_back(summarize(timed([&] { return run_scratch(heavy, Category::General, s); })));
    }
  }
};

Outcome meta_vs_scratch(const Study& st) {
  bool ok = true;
  std::string detail;
  for (auto cat : {Category::Low, Category::Medium, Category::High}) {
    const auto& sc = st.scratch.at(cat);
    const auto& ma = st.adapted.at(cat);
    const double e_sc = median(field(sc, &RunSummary::e90));
    const double e_ma = median(field(ma, &RunSummary::e90));
    const double f_sc = median(field(sc, &RunSummary::final));
    const double f_ma = median(field(ma, &RunSummary::final));
    const double rel = std::abs(f_ma - f_sc) / std::abs(f_sc);
    const bool cat_ok = e_ma < e_sc && rel <= 0.05;
    ok = ok && cat_ok;
    detail += fmt("%s%s: e90 meta %s vs scratch %s, final gap %.1f%%", detail.empty() ? "" : "; ",
                  name(cat), list(ma, &RunSummary::e90).c_str(), list(sc, &RunSummary::e90).c_str(),
                  100 * rel);
  }
  const bool budget = st.meta_train_secs <= 1800.0 && st.max_run_secs <= 300.0;
  detail += fmt("; slowest meta-training %.0f s, slowest run %.0f s", st.meta_train_secs, st.max_run_secs);
  return {ok && budget, detail};
}

Outcome workload_ordering(const Study& st) {
  const double lo = median(field(st.scratch.at(Category::Low), &RunSummary::final));
  const double me = median(field(st.scratch.at(Category::Medium), &RunSummary::final));
  const double hi = median(field(st.scratch.at(Category::High), &RunSummary::final));
  return {hi > me && me > lo, fmt("median converged reward high %.5f, medium %.5f, low %.5f", hi, me, lo)};
}

Outcome three_way(const Study& st) {
  const auto& ma = st.adapted.at(Category::General);
  const auto& sc = st.scratch.at(Category::General);
  const auto& tr = st.transfer;
  const double e_ma = median(field(ma, &RunSummary::e90));
  const double e_tr = median(field(tr, &RunSummary::e90));
  const double e_sc = median(field(sc, &RunSummary::e90));
  bool below = true;
  for (const auto& r : tr) below = below && r.start_smoothed < r.final;
  return {e_ma <= e_tr && e_tr <= e_sc && below,
          fmt("median e90 meta %.0f (%s), transfer %.0f (%s), scratch %.0f (%s); transfer "
              "start below converged on %s",
              e_ma, list(ma, &RunSummary::e90).c_str(), e_tr, list(tr, &RunSummary::e90).c_str(),
              e_sc, list(sc, &RunSummary::e90).c_str(), below ? "all seeds" : "not all seeds")};
}

Outcome customization(const Study& st) {
  auto med = [&](Category c) { return median(field(st.to_high.at(c), &RunSummary::e90)); };
  const double hi = med(Category::High), ge = med(Category::General);
  const double lo = med(Category::Low), me = med(Category::Medium);
  return {hi < ge && ge < std::min(lo, me),
          fmt("median e90 on high from high-meta %.0f (%s), general-meta %.0f (%s), low-meta "
              "%.0f (%s), medium-meta %.0f (%s)",
              hi, list(st.to_high.at(Category::High), &RunSummary::e90).c_str(), ge,
              list(st.to_high.at(Category::General), &RunSummary::e90).c_str(), lo,
              list(st.to_high.at(Category::Low), &RunSummary::e90).c_str(), me,
              list(st.to_high.at(Category::Medium), &RunSummary::e90).c_str())};
}

Outcome switching_cost(const Study& st) {
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
  };
  const double base = mean(field(st.scratch.at(Category::General), &RunSummary::switch_rate));
  const double heavy = mean(field(st.heavy_switch, &RunSummary::switch_rate));
  const double drop = base > 0 ? 1.0 - heavy / base : 0.0;
  return {base > 0 && heavy <= 0.5 * base,
          fmt("final-window switch rate %.4f at default cost, %.4f at 100x (drop %.0f%%)", base,
              heavy, 100 * drop)};
}

// ---------------------------------------------------------------- 9

int run_cli_args(std::vector<std::string> args) {
  args.insert(args.begin(), "metacp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::fflush(stdout);
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "metacp_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  ExperimentConfig c;
  c.seeds = {5};
  c.epochs = 5;
  c.ppo.steps_per_epoch = 200;
  c.meta.meta_iterations = 3;
  c.oracle_instances = 20;
  const auto config = root / "config.json";
  write_file_atomic(config, dump_config(c));

  auto run_all = [&](const fs::path& out) {
    const std::string cfg = config.string(), o = out.string();
    int rc = 0;
    rc |= run_cli_args({"train-scratch", "--config", cfg, "--out", o, "--category", "high"});
    rc |= run_cli_args({"meta-train", "--config", cfg, "--out", o, "--category", "low"});
    rc |= run_cli_args({"meta-adapt", "--config", cfg, "--out", o, "--category", "high",
                        "--checkpoint", (out / "meta-low-s5.ckpt").string()});
    rc |= run_cli_args({"transfer", "--config", cfg, "--out", o, "--category", "general",
                        "--checkpoint", (out / "scratch-high-s5.ckpt").string()});
    rc |= run_cli_args({"oracle-check", "--config", cfg, "--out", o});
    rc |= run_cli_args({"plot", (out / "scratch-high-s5.curve.csv").string(),
                        (out / "adapt-low-high-s5.curve.csv").string(), "--out", (out / "plot").string()});
    return rc;
  };
  const int rc_a = run_all(root / "a");
  const int rc_b = run_all(root / "b");

  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext != ".csv" && ext != ".ckpt" && ext != ".svg") continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    ++compared;
    if (!fs::exists(root / "b" / rel) || read_file(entry.path()) != read_file(root / "b" / rel)) {
      ++differing;
    }
  }
  fs::remove_all(root);
  return {rc_a == 0 && rc_b == 0 && compared >= 12 && differing == 0,
          fmt("%zu output files compared across two runs, %zu differ", compared, differing)};
}

}  // namespace

// Usage: metacp_acceptance [--strict] [--report <file>] [criterion ids...]
int main(int argc, char** argv) {
  bool strict = false;
  std::string report_path;
  std::string report_text;
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) {
      strict = true;
    } else if (std::strcmp(argv[i], "--report") == 0 && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      selected.push_back(std::atoi(argv[i]));
    }
  }
  auto wanted = [&](int id) {
    return selected.empty() || std::find(selected.begin(), selected.end(), id) != selected.end();
  };

  int ran = 0, failed = 0, errors = 0;
  auto report = [&](int id, const char* title, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      ++errors;
    }
    ++ran;
    failed += !o.pass;
    const std::string line = fmt("[%2d] %s  %s: %s (%.0f s)\n", id, o.pass ? "PASS" : "FAIL", title,
                                 o.detail.c_str(), seconds_since(t0));
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    report_text += line;
  };

  report(1, "allocator matches oracle", allocator_vs_oracle);
  report(2, "gradient exactness", gradient_exactness);
  report(3, "delay equality and nonnegative gain", delay_equality);
  report(4, "ppo learns the dominant action", ppo_dominance);

  Study study;
  bool study_ok = true;
  std::string study_error;
  if (wanted(5) || wanted(6) || wanted(7) || wanted(8) || wanted(10)) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      study.run();
    } catch (const std::exception& e) {
      study_ok = false;
      study_error = e.what();
    }
    std::fprintf(stderr, "  .. study finished in %.0f s\n", seconds_since(t0));
  }
  auto from_study = [&](Outcome (*f)(const Study&)) {
    return [&, f] {
      if (!study_ok) throw std::runtime_error(study_error);
      return f(study);
    };
  };
  report(5, "meta converges faster than scratch", from_study(meta_vs_scratch));
  report(6, "converged reward grows with workload", from_study(workload_ordering));
  report(7, "meta <= transfer <= scratch", from_study(three_way));
  report(8, "customized meta model adapts fastest", from_study(customization));
  report(9, "byte-identical reruns", determinism);
  report(10, "switching cost shapes the policy", from_study(switching_cost));

  const std::string total = fmt("%d of %d criteria passed\n", ran - failed, ran);
  std::fputs(total.c_str(), stdout);
  if (!report_path.empty()) write_file_atomic(report_path, report_text + total);
  if (errors > 0) return 2;
  return strict && failed > 0 ? 1 : 0;
}
