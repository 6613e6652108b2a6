#include "vpd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vpd/rng.hpp"

namespace vpd {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sanitize(const std::string& text) {
  std::string out = text;
  for (char& c : out) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return out;
}

std::string format_metrics_row(const MetricsRow& r) {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "%d,%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%.17g,%.17g,%.17g,%d,%.17g,%d,%d,%d,%d,%s\n",
                r.schema, r.model.c_str(), r.num_markets, r.replicate, r.mean_kld,
                r.design_error, r.design_count_term, r.design_attribute_term,
                r.true_profit, r.true_profit_se, r.ideal_profit, r.ideal_profit_se,
                r.profit_recovery, r.repriced_profit, r.repriced_profit_se,
                r.repriced_recovery, r.price_cap_active, r.fit_ll, r.fit_converged,
                r.fit_best_start, r.fit_iterations, r.failed, sanitize(r.error).c_str());
  return buf;
}

void append_design_rows(std::string& out, const std::string& model, int num_markets,
                        int replicate, const PortfolioDesign& design,
                        const PortfolioDesign* repriced) {
  char buf[512];
  for (std::size_t k = 0; k < design.products.size(); ++k) {
    const ProductDesign& pr = design.products[k];
    const double rp = repriced ? repriced->products[k].p : pr.p;
    std::snprintf(buf, sizeof buf, "1,%s,%d,%d,%zu,%d,%.17g,%.17g,%.17g,%.17g\n",
                  model.c_str(), num_markets, replicate, k, pr.b + 1, pr.a, pr.e, pr.p,
                  rp);
    out += buf;
  }
}

MetricsRow row_from_cell(const CellRecord& cell, const ProfitEstimate& ideal) {
  MetricsRow r;
  r.model = family_name(cell.family);
  r.num_markets = cell.num_markets;
  r.replicate = cell.replicate;
  r.failed = cell.failed ? 1 : 0;
  r.error = cell.error;
  if (cell.failed) return r;
  r.mean_kld = cell.mean_kld;
  r.design_error = cell.derr.total;
  r.design_count_term = cell.derr.count_term;
  r.design_attribute_term = cell.derr.attribute_term;
  r.true_profit = cell.profit.value;
  r.true_profit_se = cell.profit.se;
  r.ideal_profit = ideal.value;
  r.ideal_profit_se = ideal.se;
  r.profit_recovery = cell.recovery;
  r.repriced_profit = cell.repriced.value;
  r.repriced_profit_se = cell.repriced.se;
  r.repriced_recovery = cell.repriced_recovery;
  r.price_cap_active = cell.price_cap_active ? 1 : 0;
  r.fit_ll = cell.fit.final_ll;
  r.fit_converged = cell.fit.converged ? 1 : 0;
  r.fit_best_start = cell.fit.best_start;
  r.fit_iterations = cell.fit.iterations;
  return r;
}

std::uint64_t fnv1a_file(const std::string& path, std::uint64_t h) {
  std::ifstream in(path, std::ios::binary);
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

const char* const kMetricsHeader =
    "schema,model,num_markets,replicate,mean_kld,design_error,design_count_term,"
    "design_attribute_term,true_profit,true_profit_se,ideal_profit,ideal_profit_se,"
    "profit_recovery,repriced_profit,repriced_profit_se,repriced_recovery,"
    "price_cap_active,fit_ll,fit_converged,fit_best_start,fit_iterations,failed,error";

const char* const kDesignsHeader =
    "schema,model,num_markets,replicate,slot,style,accel,economy,price,repriced_price";

ExperimentConfig::ExperimentConfig()
    : population(default_market_population()), engineering(default_engineering_config()) {}

ExperimentConfig paper_scale_config() {
  ExperimentConfig cfg;
  cfg.market_grid = {10, 25, 50, 100, 200, 500, 1000};
  cfg.replicates = 20;
  cfg.truth_draws = 100000;
  return cfg;
}

bool RunRecord::all_succeeded() const {
  return std::none_of(cells.begin(), cells.end(),
                      [](const CellRecord& c) { return c.failed; });
}

RunRecord run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  const auto t_start = Clock::now();
  if (config.market_grid.empty() || config.replicates < 1 ||
      config.vehicles_per_market < 1 || config.individuals_per_market < 1 ||
      config.validation_markets < 1 || config.truth_draws < 2 || config.families.empty()) {
    throw std::invalid_argument("experiment config has a non-positive count");
  }
  if (!std::is_sorted(config.market_grid.begin(), config.market_grid.end()) ||
      config.market_grid.front() < 1) {
    throw std::invalid_argument("market grid must be positive and ascending");
  }
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  RunRecord record;
  record.config = config;

  TasteDraws truth = make_taste_draws(config.population, config.truth_draws);
  auto truth_kernel = make_truth_kernel(config.population, truth);

  Rng vrng(seed_mix(config.seed, "validation"));
  std::vector<Market> validation = generate_markets(
      config.validation_markets, config.vehicles_per_market, vrng, config.ranges);
  std::vector<Eigen::VectorXd> truth_probs;
  truth_probs.reserve(validation.size());
  for (const Market& market : validation) {
    truth_probs.push_back(true_choice_probability(market, config.population, truth));
  }
  say("validation set ready");

  OuterOptions ideal_opts = config.outer;
  ideal_opts.max_products = config.max_products;
  ideal_opts.seed = seed_mix(config.seed, "ideal");
  {
    const auto t0 = Clock::now();
    DesignResult ideal = optimize_portfolio(*truth_kernel, config.engineering, ideal_opts);
    record.ideal = ideal.design;
    record.ideal_price_cap_active = ideal.price_cap_active;
    record.ideal_profit = true_profit(ideal.design, config.population,
                                      config.engineering, truth);
    char msg[160];
    std::snprintf(msg, sizeof msg, "ideal profit %.6f (se %.1e) in %.1fs, %zu products",
                  record.ideal_profit.value, record.ideal_profit.se, seconds_since(t0),
                  record.ideal.products.size());
    say(msg);
  }

  std::ofstream metrics_out, designs_out;
  const bool persist = !config.output_dir.empty();
  if (persist) {
    std::filesystem::create_directories(config.output_dir);
    metrics_out.open(config.output_dir + "/metrics.csv");
    designs_out.open(config.output_dir + "/designs.csv");
    if (!metrics_out || !designs_out) {
      throw std::runtime_error("cannot open output files in " + config.output_dir);
    }
    metrics_out << kMetricsHeader << '\n';
    designs_out << kDesignsHeader << '\n';
    std::string rows;
    append_design_rows(rows, "ideal", 0, 0, record.ideal, nullptr);
    designs_out << rows << std::flush;
  }

  for (int M : config.market_grid) {
    for (int rep = 0; rep < config.replicates; ++rep) {
      Rng drng(seed_mix(config.seed, "data", M, rep));
      std::vector<Market> markets =
          generate_markets(M, config.vehicles_per_market, drng, config.ranges);
      ShareData data = simulate_shares(markets, config.population,
                                       config.individuals_per_market,
                                       drng.derive("shares"));
      for (Family family : config.families) {
        CellRecord cell;
        cell.family = family;
        cell.num_markets = M;
        cell.replicate = rep;
        try {
          const auto te = Clock::now();
          EstimationOptions eopt;
          eopt.multistart = config.multistart;
          eopt.rcl_draws = config.rcl_draws;
          eopt.rcl_draw_seed = seed_mix(config.seed, "rcl-estimation-draws");
          eopt.lambda_max = 10.0;
          eopt.num_styles = config.population.num_styles;
          eopt.seed = seed_mix(config.seed, "fit", family_name(family), M, rep);
          cell.fit = estimate(family, data, eopt);
          cell.estimate_seconds = seconds_since(te);

          auto kernel = make_model_kernel(cell.fit.model, config.rcl_draws,
                                          kPredictionDrawSeed);
          double total = 0.0;
          for (std::size_t v = 0; v < validation.size(); ++v) {
            // outside good included: the summary column must be a proper
            // divergence (nonnegative, shrinking as the fit tightens), which
            // the vehicles-only variant is not
            total += kld(truth_probs[v], kernel->probabilities(validation[v]),
                         /*include_outside=*/true);
          }
          cell.mean_kld = total / static_cast<double>(validation.size());

          const auto td = Clock::now();
          OuterOptions oo = config.outer;
          oo.max_products = config.max_products;
          oo.seed = seed_mix(config.seed, "design", family_name(family), M, rep);
          DesignResult dr = optimize_portfolio(*kernel, config.engineering, oo);
          cell.design = dr.design;
          cell.price_cap_active = dr.price_cap_active;
          cell.design_seconds = seconds_since(td);

          cell.derr = design_error(dr.design, record.ideal);
          cell.profit = true_profit(dr.design, config.population, config.engineering,
                                    truth);
          cell.recovery = cell.profit.value / record.ideal_profit.value;

          InnerOptions ro = config.outer.inner;
          ro.multistart = 3;
          ro.seed = seed_mix(config.seed, "reprice", family_name(family), M, rep);
          InnerResult rp = optimize_prices(*truth_kernel, config.engineering, dr.design,
                                           ro);
          cell.repriced_design = rp.design;
          cell.repriced = true_profit(rp.design, config.population, config.engineering,
                                      truth);
          cell.repriced_recovery = cell.repriced.value / record.ideal_profit.value;
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
        }
        record.cells.push_back(cell);
        if (persist) {
          metrics_out << format_metrics_row(row_from_cell(cell, record.ideal_profit))
                      << std::flush;
          if (!cell.failed) {
            std::string rows;
            append_design_rows(rows, family_name(family), M, rep, cell.design,
                               &cell.repriced_design);
            designs_out << rows << std::flush;
          }
        }
        char msg[200];
        std::snprintf(msg, sizeof msg,
                      "%s M=%d rep=%d: ll=%.3f kld=%.4f recovery=%.3f repriced=%.3f "
                      "(est %.1fs design %.1fs)%s",
                      family_name(family).c_str(), M, rep, cell.fit.final_ll,
                      cell.mean_kld, cell.recovery, cell.repriced_recovery,
                      cell.estimate_seconds, cell.design_seconds,
                      cell.failed ? " FAILED" : "");
        say(msg);
      }
    }
  }

  record.total_seconds = seconds_since(t_start);
  if (persist) {
    metrics_out.close();
    designs_out.close();
    std::uint64_t h = 1469598103934665603ull;
    h = fnv1a_file(config.output_dir + "/metrics.csv", h);
    h = fnv1a_file(config.output_dir + "/designs.csv", h);
    json manifest;
    manifest["schema"] = 1;
    manifest["seed"] = config.seed;
    manifest["market_grid"] = config.market_grid;
    manifest["replicates"] = config.replicates;
    manifest["vehicles_per_market"] = config.vehicles_per_market;
    manifest["individuals_per_market"] = config.individuals_per_market;
    manifest["validation_markets"] = config.validation_markets;
    manifest["rcl_draws"] = config.rcl_draws;
    manifest["truth_draws"] = config.truth_draws;
    manifest["multistart"] = config.multistart;
    manifest["max_products"] = config.max_products;
    json fams = json::array();
    for (Family f : config.families) fams.push_back(family_name(f));
    manifest["families"] = fams;
    manifest["ideal_profit"] = record.ideal_profit.value;
    manifest["ideal_profit_se"] = record.ideal_profit.se;
    manifest["total_seconds"] = record.total_seconds;
    char hex[32];
    std::snprintf(hex, sizeof hex, "fnv1a:%016llx",
                  static_cast<unsigned long long>(h));
    manifest["content_hash"] = hex;
    json cells = json::array();
    for (const CellRecord& c : record.cells) {
      cells.push_back({{"model", family_name(c.family)},
                       {"num_markets", c.num_markets},
                       {"replicate", c.replicate},
                       {"estimate_seconds", c.estimate_seconds},
                       {"design_seconds", c.design_seconds},
                       {"failed", c.failed}});
    }
    manifest["cells"] = cells;
    std::ofstream mout(config.output_dir + "/manifest.json");
    mout << manifest.dump(2) << '\n';
  }
  return record;
}

std::vector<MetricsRow> metrics_rows(const RunRecord& record) {
  std::vector<MetricsRow> rows;
  rows.reserve(record.cells.size());
  for (const CellRecord& cell : record.cells) {
    rows.push_back(row_from_cell(cell, record.ideal_profit));
  }
  return rows;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) out << format_metrics_row(r);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty metrics file: " + path);
  if (line != kMetricsHeader) {
    throw std::runtime_error("unexpected metrics header in " + path);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 23) throw std::runtime_error("malformed metrics row: " + line);
    MetricsRow r;
    r.schema = std::stoi(f[0]);
    r.model = f[1];
    r.num_markets = std::stoi(f[2]);
    r.replicate = std::stoi(f[3]);
    r.mean_kld = std::stod(f[4]);
    r.design_error = std::stod(f[5]);
    r.design_count_term = std::stod(f[6]);
    r.design_attribute_term = std::stod(f[7]);
    r.true_profit = std::stod(f[8]);
    r.true_profit_se = std::stod(f[9]);
    r.ideal_profit = std::stod(f[10]);
    r.ideal_profit_se = std::stod(f[11]);
    r.profit_recovery = std::stod(f[12]);
    r.repriced_profit = std::stod(f[13]);
    r.repriced_profit_se = std::stod(f[14]);
    r.repriced_recovery = std::stod(f[15]);
    r.price_cap_active = std::stoi(f[16]);
    r.fit_ll = std::stod(f[17]);
    r.fit_converged = std::stoi(f[18]);
    r.fit_best_start = std::stoi(f[19]);
    r.fit_iterations = std::stoi(f[20]);
    r.failed = std::stoi(f[21]);
    r.error = f[22];
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_figure_csv(const std::vector<MetricsRow>& rows, int figure, std::ostream& out) {
  if (figure < 1 || figure > 5) throw std::invalid_argument("figure must be 1..5");

  std::vector<std::string> models;
  for (const char* name : {"mnl", "rcl", "nml", "ctc"}) {
    for (const MetricsRow& r : rows) {
      if (r.model == name) {
        models.push_back(name);
        break;
      }
    }
  }
  for (const MetricsRow& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) {
      models.push_back(r.model);
    }
  }
  std::vector<int> grid;
  for (const MetricsRow& r : rows) grid.push_back(r.num_markets);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  auto value_of = [figure](const MetricsRow& r) {
    switch (figure) {
      case 1: return r.mean_kld;
      case 2: return r.design_error;
      case 3: return r.profit_recovery;
      default: return r.repriced_recovery;
    }
  };

  char buf[512];
  if (figure == 5) {
    out << "schema,model,num_markets,mean_kld,mean_design_error,mean_profit_recovery\n";
    for (const std::string& model : models) {
      for (int M : grid) {
        double sk = 0, sd = 0, sp = 0;
        int n = 0;
        for (const MetricsRow& r : rows) {
          if (r.model != model || r.num_markets != M || r.failed) continue;
          sk += r.mean_kld;
          sd += r.design_error;
          sp += r.profit_recovery;
          ++n;
        }
        if (n == 0) continue;
        std::snprintf(buf, sizeof buf, "1,%s,%d,%.17g,%.17g,%.17g\n", model.c_str(), M,
                      sk / n, sd / n, sp / n);
        out << buf;
      }
    }
    return;
  }

  out << "schema,figure,model,num_markets,min_value,mean_value,max_value\n";
  for (const std::string& model : models) {
    for (int M : grid) {
      double lo = 0, hi = 0, sum = 0;
      int n = 0;
      for (const MetricsRow& r : rows) {
        if (r.model != model || r.num_markets != M || r.failed) continue;
        const double v = value_of(r);
        if (n == 0) {
          lo = hi = v;
        } else {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        sum += v;
        ++n;
      }
      if (n == 0) continue;
      std::snprintf(buf, sizeof buf, "1,%d,%s,%d,%.17g,%.17g,%.17g\n", figure,
                    model.c_str(), M, lo, sum / n, hi);
      out << buf;
    }
  }
}

void emit_figure_csv(const std::vector<MetricsRow>& rows, int figure,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  emit_figure_csv(rows, figure, out);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  json j = json::parse(in);
  ExperimentConfig cfg;
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("market_grid")) cfg.market_grid = j["market_grid"].get<std::vector<int>>();
  if (j.contains("replicates")) cfg.replicates = j["replicates"].get<int>();
  if (j.contains("vehicles_per_market"))
    cfg.vehicles_per_market = j["vehicles_per_market"].get<int>();
  if (j.contains("individuals_per_market"))
    cfg.individuals_per_market = j["individuals_per_market"].get<int>();
  if (j.contains("validation_markets"))
    cfg.validation_markets = j["validation_markets"].get<int>();
  if (j.contains("rcl_draws")) cfg.rcl_draws = j["rcl_draws"].get<int>();
  if (j.contains("truth_draws")) cfg.truth_draws = j["truth_draws"].get<int>();
  if (j.contains("multistart")) cfg.multistart = j["multistart"].get<int>();
  if (j.contains("max_products")) cfg.max_products = j["max_products"].get<int>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("families")) {
    cfg.families.clear();
    for (const json& f : j["families"]) {
      cfg.families.push_back(family_from_name(f.get<std::string>()));
    }
  }
  if (j.contains("population_path")) {
    const std::string p = j["population_path"].get<std::string>();
    if (!p.empty()) cfg.population = load_population(p);
  }
  if (j.contains("engineering_path")) {
    const std::string p = j["engineering_path"].get<std::string>();
    if (!p.empty()) cfg.engineering = load_engineering(p);
  }
  if (j.contains("ranges")) {
    const json& r = j["ranges"];
    cfg.ranges.e_lo = r.at("e").at(0).get<double>();
    cfg.ranges.e_hi = r.at("e").at(1).get<double>();
    cfg.ranges.a_lo = r.at("a").at(0).get<double>();
    cfg.ranges.a_hi = r.at("a").at(1).get<double>();
    cfg.ranges.p_lo = r.at("p").at(0).get<double>();
    cfg.ranges.p_hi = r.at("p").at(1).get<double>();
  }
  if (j.contains("ga")) {
    const json& g = j["ga"];
    if (g.contains("population")) cfg.outer.population = g["population"].get<int>();
    if (g.contains("generations")) cfg.outer.generations = g["generations"].get<int>();
    if (g.contains("stall_generations"))
      cfg.outer.stall_generations = g["stall_generations"].get<int>();
    if (g.contains("inner_multistart"))
      cfg.outer.inner.multistart = g["inner_multistart"].get<int>();
  }
  return cfg;
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
  json j;
  j["schema"] = 1;
  j["seed"] = cfg.seed;
  j["market_grid"] = cfg.market_grid;
  j["replicates"] = cfg.replicates;
  j["vehicles_per_market"] = cfg.vehicles_per_market;
  j["individuals_per_market"] = cfg.individuals_per_market;
  j["validation_markets"] = cfg.validation_markets;
  j["rcl_draws"] = cfg.rcl_draws;
  j["truth_draws"] = cfg.truth_draws;
  j["multistart"] = cfg.multistart;
  j["max_products"] = cfg.max_products;
  j["output_dir"] = cfg.output_dir;
  json fams = json::array();
  for (Family f : cfg.families) fams.push_back(family_name(f));
  j["families"] = fams;
  j["population_path"] = "";
  j["engineering_path"] = "";
  j["ranges"] = {{"e", {cfg.ranges.e_lo, cfg.ranges.e_hi}},
                 {"a", {cfg.ranges.a_lo, cfg.ranges.a_hi}},
                 {"p", {cfg.ranges.p_lo, cfg.ranges.p_hi}}};
  j["ga"] = {{"population", cfg.outer.population},
             {"generations", cfg.outer.generations},
             {"stall_generations", cfg.outer.stall_generations},
             {"inner_multistart", cfg.outer.inner.multistart}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace vpd
