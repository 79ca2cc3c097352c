#include "metacp/simenv/params.hpp"

#include <cmath>

namespace metacp::sim {

namespace {

// Table rows are rounded to three decimals (Low and General sum to 0.997);
// they are rescaled so the exact sampler produces row-stochastic chains.
constexpr Distribution normalized(Distribution d) {
  double s = 0.0;
  for (double v : d) s += v;
  for (double& v : d) v /= s;
  return d;
}

constexpr Distribution kLowTarget = normalized({0.735, 0.064, 0.060, 0.052, 0.086});
constexpr Distribution kMediumTarget = normalized({0.061, 0.058, 0.775, 0.053, 0.053});
constexpr Distribution kHighTarget = normalized({0.053, 0.132, 0.093, 0.052, 0.670});
constexpr Distribution kGeneralTarget = normalized({0.152, 0.223, 0.247, 0.223, 0.152});

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("invalid physical params: ") + what);
}

}  // namespace

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Low: return "low";
    case Category::Medium: return "medium";
    case Category::High: return "high";
    case Category::General: return "general";
  }
  return "general";
}

Category parse_category(std::string_view name) {
  if (name == "low") return Category::Low;
  if (name == "medium") return Category::Medium;
  if (name == "high") return Category::High;
  if (name == "general") return Category::General;
  throw ConfigError("unknown category '" + std::string(name) +
                    "' (expected low|medium|high|general)");
}

const Distribution& steady_state_target(Category c) {
  switch (c) {
    case Category::Low: return kLowTarget;
    case Category::Medium: return kMediumTarget;
    case Category::High: return kHighTarget;
    case Category::General: return kGeneralTarget;
  }
  return kGeneralTarget;
}

void PhysicalParams::validate() const {
  require(K >= 1, "K >= 1");
  require(delta > 0 && delta_tilde > 0 && delta_hat > 0, "DNN demands > 0");
  require(2 * delta > delta_tilde, "2*delta > delta_tilde");
  require(kappa > 0, "kappa > 0");
  require(Delta > 0, "Delta > 0");
  require(w_feat > 0, "w_feat > 0");
  require(f_max > 0, "f_max > 0");
  require(B_total > 0, "B_total > 0");
  require(bw_per_hdv >= 0, "bw_per_hdv >= 0");
  require(n_hdv >= 0, "n_hdv >= 0");
  require(B_total - bw_per_hdv * n_hdv > 0, "bandwidth stays positive");
  require(p_tx > 0 && noise > 0 && g_ref > 0, "radio constants > 0");
  require(path_exp >= 0, "path_exp >= 0");
  require(d_min > 0 && d_max >= d_min, "0 < d_min <= d_max");
  require(walk_step >= 0, "walk_step >= 0");
  require(omega >= 0, "omega >= 0");
  require(penalty < 0, "penalty < 0");
  require(gamma >= 0 && gamma < 1, "0 <= gamma < 1");
}

double channel_gain(double distance, const PhysicalParams& p) {
  return p.g_ref * std::pow(distance, -p.path_exp);
}

}  // namespace metacp::sim
