#include "vpd/market.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vpd/screened.hpp"

namespace vpd {

using nlohmann::json;

Market generate_market(int num_vehicles, Rng& rng, const AttributeRanges& ranges) {
  if (num_vehicles < 1) throw std::invalid_argument("a market needs at least one vehicle");
  Market m;
  m.vehicles.resize(num_vehicles);
  for (Vehicle& v : m.vehicles) {
    v.e = rng.uniform(ranges.e_lo, ranges.e_hi);
    v.a = rng.uniform(ranges.a_lo, ranges.a_hi);
    v.p = rng.uniform(ranges.p_lo, ranges.p_hi);
    v.b = rng.uniform_int(0, ranges.num_styles - 1);
  }
  return m;
}

std::vector<Market> generate_markets(int num_markets, int num_vehicles, Rng& rng,
                                     const AttributeRanges& ranges) {
  std::vector<Market> out;
  out.reserve(num_markets);
  for (int m = 0; m < num_markets; ++m) {
    Rng sub = rng.derive("market", static_cast<std::uint64_t>(m));
    out.push_back(generate_market(num_vehicles, sub, ranges));
  }
  return out;
}

ShareData simulate_shares(const std::vector<Market>& markets,
                          const PopulationSpec& pop, int individuals, const Rng& rng) {
  if (markets.empty()) throw std::invalid_argument("no markets to simulate");
  if (individuals < 1) throw std::invalid_argument("need at least one individual");
  ShareData data;
  data.markets = markets;
  data.individuals = individuals;
  data.shares.reserve(markets.size());
  for (std::size_t m = 0; m < markets.size(); ++m) {
    const Market& market = markets[m];
    const int J = market.size();
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(J + 1);
    for (int i = 0; i < individuals; ++i) {
      Rng ind_rng = rng.derive("individual", static_cast<std::uint64_t>(m),
                               static_cast<std::uint64_t>(i));
      Individual ind = sample_individual(pop, ind_rng);
      int best = 0;
      double best_u = ind_rng.gumbel();  // outside good
      for (int j = 0; j < J; ++j) {
        const Vehicle& v = market.vehicles[j];
        if (!ind.rule.accepts(v.b)) continue;
        double u = true_utility(ind.coeff, v.e, v.a, v.p) + ind_rng.gumbel();
        if (u > best_u) {
          best_u = u;
          best = j + 1;
        }
      }
      counts[best] += 1.0;
    }
    data.shares.push_back(counts / static_cast<double>(individuals));
  }
  return data;
}

TasteDraws make_taste_draws(const PopulationSpec& pop, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("need at least one taste draw");
  TasteDraws draws;
  draws.theta.resize(4, count);
  draws.exp_price.resize(count);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    for (int k = 0; k < 4; ++k) {
      draws.theta(k, i) = pop.coeff_means[k] + pop.coeff_sds[k] * rng.normal();
    }
    draws.exp_price[i] = std::exp(draws.theta(0, i));
  }
  return draws;
}

Eigen::VectorXd true_choice_probability(const Market& market, const PopulationSpec& pop,
                                        const TasteDraws& draws) {
  const int J = market.size();
  const int I = draws.count();
  StyleProjection proj = project_styles(market, pop.num_styles);
  std::vector<double> weights;
  bucket_weights(proj, pop.rule_probs, weights);

  Eigen::VectorXd probs = Eigen::VectorXd::Zero(J + 1);
  Eigen::VectorXd u(J);
  ScreenedWorkspace ws;
  const double w = 1.0 / static_cast<double>(I);
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -draws.exp_price[i] * v.p + draws.theta(1, i) / v.e +
             draws.theta(2, i) / v.a + draws.theta(3, i);
    }
    accumulate_screened_probs(proj, weights, u, w, ws, probs);
  }
  return probs;
}

Eigen::VectorXd true_choice_probability(const Market& market, const PopulationSpec& pop,
                                        int mc_draws, std::uint64_t seed) {
  return true_choice_probability(market, pop, make_taste_draws(pop, mc_draws, seed));
}

void write_share_csv(const ShareData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write share csv: " + path);
  out << "market_id,j,e,a,p,b,share\n";
  char buf[192];
  for (std::size_t m = 0; m < data.markets.size(); ++m) {
    const Market& market = data.markets[m];
    std::snprintf(buf, sizeof(buf), "%zu,0,0,0,0,0,%.17g\n", m + 1, data.shares[m][0]);
    out << buf;
    for (int j = 0; j < market.size(); ++j) {
      const Vehicle& v = market.vehicles[j];
      std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%.17g,%.17g,%d,%.17g\n", m + 1,
                    j + 1, v.e, v.a, v.p, v.b + 1, data.shares[m][j + 1]);
      out << buf;
    }
  }
}

ShareData read_share_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open share csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty share csv: " + path);

  struct Row {
    std::size_t market;
    int j, b;
    double e, a, p, share;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r;
    if (std::sscanf(line.c_str(), "%zu,%d,%lf,%lf,%lf,%d,%lf", &r.market, &r.j, &r.e,
                    &r.a, &r.p, &r.b, &r.share) != 7) {
      throw std::runtime_error("bad share csv row: " + line);
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw std::runtime_error("share csv has no rows: " + path);

  std::size_t num_markets = 0;
  for (const Row& r : rows) num_markets = std::max(num_markets, r.market);
  ShareData data;
  data.markets.resize(num_markets);
  std::vector<std::vector<double>> shares(num_markets);
  std::vector<double> outside(num_markets, -1.0);
  for (const Row& r : rows) {
    if (r.market < 1) throw std::runtime_error("market_id must be positive");
    std::size_t m = r.market - 1;
    if (r.j == 0) {
      outside[m] = r.share;
    } else {
      std::size_t j = static_cast<std::size_t>(r.j);
      auto& mk = data.markets[m].vehicles;
      auto& sh = shares[m];
      if (mk.size() < j) {
        mk.resize(j);
        sh.resize(j);
      }
      mk[j - 1] = Vehicle{r.e, r.a, r.p, r.b - 1};
      sh[j - 1] = r.share;
    }
  }
  for (std::size_t m = 0; m < num_markets; ++m) {
    if (outside[m] < 0.0) throw std::runtime_error("market missing outside-good row");
    Eigen::VectorXd s(shares[m].size() + 1);
    s[0] = outside[m];
    for (std::size_t j = 0; j < shares[m].size(); ++j) s[j + 1] = shares[m][j];
    if (std::abs(s.sum() - 1.0) > 1e-6) {
      throw std::runtime_error("market shares do not sum to one");
    }
    data.shares.push_back(std::move(s));
  }
  return data;
}

void write_market_bundle(const ShareData& data, std::uint64_t seed,
                         const std::string& path) {
  json doc;
  doc["schema"] = 1;
  doc["seed"] = seed;
  doc["individuals"] = data.individuals;
  json markets = json::array();
  for (std::size_t m = 0; m < data.markets.size(); ++m) {
    json jm;
    jm["id"] = m + 1;
    json vehicles = json::array();
    for (const Vehicle& v : data.markets[m].vehicles) {
      vehicles.push_back({{"e", v.e}, {"a", v.a}, {"p", v.p}, {"b", v.b + 1}});
    }
    jm["vehicles"] = std::move(vehicles);
    std::vector<double> s(data.shares[m].data(),
                          data.shares[m].data() + data.shares[m].size());
    jm["shares"] = s;
    markets.push_back(std::move(jm));
  }
  doc["markets"] = std::move(markets);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write market bundle: " + path);
  out << doc.dump() << "\n";
}

ShareData read_market_bundle(const std::string& path, std::uint64_t* seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open market bundle: " + path);
  json doc = json::parse(in);
  if (seed) *seed = doc.value("seed", std::uint64_t{0});
  ShareData data;
  data.individuals = doc.value("individuals", 0);
  for (const auto& jm : doc.at("markets")) {
    Market market;
    for (const auto& jv : jm.at("vehicles")) {
      market.vehicles.push_back(Vehicle{jv.at("e").get<double>(), jv.at("a").get<double>(),
                                        jv.at("p").get<double>(),
                                        jv.at("b").get<int>() - 1});
    }
    std::vector<double> s = jm.at("shares").get<std::vector<double>>();
    if (s.size() != market.vehicles.size() + 1) {
      throw std::runtime_error("bundle shares length mismatch");
    }
    data.markets.push_back(std::move(market));
    data.shares.push_back(Eigen::Map<Eigen::VectorXd>(s.data(), s.size()));
  }
  return data;
}

}  // namespace vpd
