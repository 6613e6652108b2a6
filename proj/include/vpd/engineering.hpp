#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vpd {

// Per-style engineering model.  Feasible designs satisfy
//   1000/(e - 3.46) = g_const + g_a*exp(-a) + g_t*t + g_at*a^2*t + g_w*w + g_wa*w*a
// which pins fuel economy e (mpg) once acceleration a (s, 0-60) is chosen;
// t is a technology index and w the curb weight in 1000 lb, both fixed here.
// Unit cost is in 10k$.
struct StyleEngineering {
  std::string name;
  double weight = 3.0;
  double tech = 20.0;
  double a_lo = 2.0, a_hi = 15.0;  // acceleration bounds (s)
  double e_lo = 5.0, e_hi = 50.0;  // fuel economy bounds (mpg)
  double g_const = 0.0, g_a = 0.0, g_t = 0.0, g_at = 0.0, g_w = 0.0, g_wa = 0.0;
  double c_const = 0.0, c_a = 0.0, c_t = 0.0, c_w = 0.0, c_wa = 0.0;
};

struct EngineeringConfig {
  std::vector<StyleEngineering> styles;

  const StyleEngineering& style(int b) const {
    if (b < 0 || b >= static_cast<int>(styles.size())) {
      throw std::invalid_argument("unknown body style index");
    }
    return styles[b];
  }
  int num_styles() const { return static_cast<int>(styles.size()); }
};

class InfeasibleDesign : public std::runtime_error {
 public:
  InfeasibleDesign(const std::string& what, int style, double a)
      : std::runtime_error(what), style(style), a(a) {}
  int style;
  double a;
};

// The right-hand side of the feasibility equation.
double economy_denominator(const StyleEngineering& s, double a);

// Fuel economy implied by acceleration `a`; throws InfeasibleDesign when the
// denominator is not positive.
double feasible_fuel_economy(const StyleEngineering& s, double a);

struct EconomyCheck {
  double e = 0.0;
  bool within_bounds = false;
};

// Same, but reports whether e respects the configured bounds instead of the
// caller having to re-check (the value is never clamped).
EconomyCheck feasible_fuel_economy_checked(const StyleEngineering& s, double a);

// de/da along the feasibility curve.
double economy_slope(const StyleEngineering& s, double a);

double unit_cost(const StyleEngineering& s, double a);
double cost_slope(const StyleEngineering& s, double a);

// Acceleration interval on which the style bounds and the induced fuel
// economy bounds all hold; throws InfeasibleDesign when empty.
std::pair<double, double> feasible_accel_interval(const StyleEngineering& s);

EngineeringConfig default_engineering_config();

EngineeringConfig load_engineering(const std::string& path);
void save_engineering(const EngineeringConfig& cfg, const std::string& path);

// Feasibility curves (a, e, cost) per style, written as CSV for inspection.
void write_feasibility_curves(const EngineeringConfig& cfg, const std::string& path,
                              int samples = 50);

}  // namespace vpd
