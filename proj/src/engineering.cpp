#include "vpd/engineering.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace vpd {

using nlohmann::json;

namespace {
constexpr double kEconomyOffset = 3.46;
}

double economy_denominator(const StyleEngineering& s, double a) {
  return s.g_const + s.g_a * std::exp(-a) + s.g_t * s.tech +
         s.g_at * a * a * s.tech + s.g_w * s.weight + s.g_wa * s.weight * a;
}

double feasible_fuel_economy(const StyleEngineering& s, double a) {
  double d = economy_denominator(s, a);
  if (!(d > 0.0)) {
    throw InfeasibleDesign("no feasible fuel economy for style '" + s.name +
                               "' at a=" + std::to_string(a),
                           -1, a);
  }
  return kEconomyOffset + 1000.0 / d;
}

EconomyCheck feasible_fuel_economy_checked(const StyleEngineering& s, double a) {
  EconomyCheck out;
  out.e = feasible_fuel_economy(s, a);
  out.within_bounds = a >= s.a_lo && a <= s.a_hi && out.e >= s.e_lo && out.e <= s.e_hi;
  return out;
}

double economy_slope(const StyleEngineering& s, double a) {
  double d = economy_denominator(s, a);
  if (!(d > 0.0)) {
    throw InfeasibleDesign("no feasible fuel economy for style '" + s.name +
                               "' at a=" + std::to_string(a),
                           -1, a);
  }
  double dd = -s.g_a * std::exp(-a) + 2.0 * s.g_at * a * s.tech + s.g_wa * s.weight;
  return -1000.0 * dd / (d * d);
}

double unit_cost(const StyleEngineering& s, double a) {
  return s.c_const + s.c_a * std::exp(-a) + s.c_t * s.tech + s.c_w * s.weight +
         s.c_wa * s.weight * a;
}

double cost_slope(const StyleEngineering& s, double a) {
  return -s.c_a * std::exp(-a) + s.c_wa * s.weight;
}

std::pair<double, double> feasible_accel_interval(const StyleEngineering& s) {
  auto ok = [&](double a) {
    double d = economy_denominator(s, a);
    if (!(d > 0.0)) return false;
    double e = kEconomyOffset + 1000.0 / d;
    return e >= s.e_lo && e <= s.e_hi;
  };
  constexpr int kScan = 256;
  int first = -1, last = -1;
  for (int i = 0; i <= kScan; ++i) {
    double a = s.a_lo + (s.a_hi - s.a_lo) * i / kScan;
    if (ok(a)) {
      if (first < 0) first = i;
      last = i;
    }
  }
  if (first < 0) {
    throw InfeasibleDesign("style '" + s.name + "' has no feasible acceleration", -1,
                           s.a_lo);
  }
  for (int i = first; i <= last; ++i) {
    double a = s.a_lo + (s.a_hi - s.a_lo) * i / kScan;
    if (!ok(a)) {
      throw InfeasibleDesign("style '" + s.name + "' has a split feasible interval",
                             -1, a);
    }
  }
  auto bisect = [&](double bad, double good) {
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (bad + good);
      (ok(mid) ? good : bad) = mid;
    }
    return good;
  };
  double step = (s.a_hi - s.a_lo) / kScan;
  double lo = s.a_lo + step * first;
  double hi = s.a_lo + step * last;
  if (first > 0) lo = bisect(lo - step, lo);
  if (last < kScan) hi = bisect(hi + step, hi);
  return {lo, hi};
}

EngineeringConfig default_engineering_config() {
  // Curb weights are in 1000 lb; the economy/cost coefficients were tuned so
  // that every style has a monotone e-a trade-off over its bounds, sedans
  // cover roughly 15-45 mpg, and unit costs stay between 1.0 and 4.0 (10k$).
  struct Row {
    const char* name;
    double w, a_lo, a_hi, e_lo, e_hi, g_const, g_at, c_const;
  };
  static const Row rows[] = {
      {"sports car", 3.2, 4.0, 9.0, 12.0, 24.0, 91.2482, -0.016023, 1.40},
      {"hatchback", 2.6, 7.0, 13.0, 20.0, 46.0, 58.9214, -0.004377, 0.55},
      {"compact sedan", 2.9, 7.0, 13.0, 18.0, 42.0, 67.5920, -0.005069, 0.62},
      {"standard sedan", 3.4, 5.0, 12.0, 14.0, 46.0, 85.4156, -0.012392, 0.70},
      {"crossover", 3.8, 7.0, 13.0, 14.0, 36.0, 94.3207, -0.008165, 0.80},
      {"small suv", 4.1, 7.0, 13.0, 13.0, 33.0, 103.1842, -0.008658, 0.85},
      {"full suv", 5.3, 8.0, 14.0, 10.0, 29.0, 155.0764, -0.013802, 1.10},
      {"pickup", 5.0, 8.0, 14.0, 10.0, 30.0, 145.5162, -0.012823, 0.95},
      {"minivan", 4.4, 8.0, 13.0, 13.0, 31.0, 114.3297, -0.010040, 0.90},
  };
  EngineeringConfig cfg;
  for (const Row& r : rows) {
    StyleEngineering s;
    s.name = r.name;
    s.weight = r.w;
    s.tech = 20.0;
    s.a_lo = r.a_lo;
    s.a_hi = r.a_hi;
    s.e_lo = r.e_lo;
    s.e_hi = r.e_hi;
    s.g_const = r.g_const;
    s.g_a = 50.0;
    s.g_t = 0.6;
    s.g_at = r.g_at;
    s.g_w = 3.5;
    s.g_wa = -1.2;
    s.c_const = r.c_const;
    s.c_a = 60.0;
    s.c_t = 0.02;
    s.c_w = 0.22;
    s.c_wa = -0.015;
    cfg.styles.push_back(std::move(s));
  }
  return cfg;
}

namespace {

json style_to_json(const StyleEngineering& s) {
  return json{{"name", s.name},       {"weight", s.weight},   {"tech", s.tech},
              {"a_lo", s.a_lo},       {"a_hi", s.a_hi},       {"e_lo", s.e_lo},
              {"e_hi", s.e_hi},       {"g_const", s.g_const}, {"g_a", s.g_a},
              {"g_t", s.g_t},         {"g_at", s.g_at},       {"g_w", s.g_w},
              {"g_wa", s.g_wa},       {"c_const", s.c_const}, {"c_a", s.c_a},
              {"c_t", s.c_t},         {"c_w", s.c_w},         {"c_wa", s.c_wa}};
}

StyleEngineering style_from_json(const json& j) {
  StyleEngineering s;
  s.name = j.at("name").get<std::string>();
  s.weight = j.at("weight").get<double>();
  s.tech = j.value("tech", 20.0);
  s.a_lo = j.at("a_lo").get<double>();
  s.a_hi = j.at("a_hi").get<double>();
  s.e_lo = j.at("e_lo").get<double>();
  s.e_hi = j.at("e_hi").get<double>();
  s.g_const = j.at("g_const").get<double>();
  s.g_a = j.at("g_a").get<double>();
  s.g_t = j.at("g_t").get<double>();
  s.g_at = j.at("g_at").get<double>();
  s.g_w = j.at("g_w").get<double>();
  s.g_wa = j.at("g_wa").get<double>();
  s.c_const = j.at("c_const").get<double>();
  s.c_a = j.at("c_a").get<double>();
  s.c_t = j.at("c_t").get<double>();
  s.c_w = j.at("c_w").get<double>();
  s.c_wa = j.at("c_wa").get<double>();
  return s;
}

}  // namespace

EngineeringConfig load_engineering(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open engineering config: " + path);
  json doc = json::parse(in);
  EngineeringConfig cfg;
  for (const auto& j : doc.at("styles")) cfg.styles.push_back(style_from_json(j));
  if (cfg.styles.empty()) throw std::runtime_error("engineering config has no styles");
  return cfg;
}

void save_engineering(const EngineeringConfig& cfg, const std::string& path) {
  json doc;
  doc["styles"] = json::array();
  for (const auto& s : cfg.styles) doc["styles"].push_back(style_to_json(s));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write engineering config: " + path);
  out << doc.dump(2) << "\n";
}

void write_feasibility_curves(const EngineeringConfig& cfg, const std::string& path,
                              int samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feasibility curves: " + path);
  out << "style,name,a,e,cost\n";
  char buf[160];
  for (int b = 0; b < cfg.num_styles(); ++b) {
    const StyleEngineering& s = cfg.styles[b];
    auto [lo, hi] = feasible_accel_interval(s);
    for (int i = 0; i <= samples; ++i) {
      double a = lo + (hi - lo) * i / samples;
      std::snprintf(buf, sizeof(buf), "%d,%s,%.10g,%.10g,%.10g\n", b + 1,
                    s.name.c_str(), a, feasible_fuel_economy(s, a), unit_cost(s, a));
      out << buf;
    }
  }
}

}  // namespace vpd
