#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vpd/design.hpp"
#include "vpd/engineering.hpp"
#include "vpd/estimation.hpp"
#include "vpd/experiment.hpp"
#include "vpd/market.hpp"
#include "vpd/metrics.hpp"
#include "vpd/population.hpp"

namespace {

using namespace vpd;

PopulationSpec population_or_default(const std::string& path) {
  return path.empty() ? default_market_population() : load_population(path);
}

EngineeringConfig engineering_or_default(const std::string& path) {
  return path.empty() ? default_engineering_config() : load_engineering(path);
}

int cmd_generate(int markets, int vehicles, int individuals, std::uint64_t seed,
                 const std::string& pop_path, const std::string& out,
                 const std::string& bundle) {
  PopulationSpec pop = population_or_default(pop_path);
  Rng rng(seed_mix(seed, "data"));
  std::vector<Market> mkts = generate_markets(markets, vehicles, rng);
  ShareData data = simulate_shares(mkts, pop, individuals, rng.derive("shares"));
  if (!out.empty()) write_share_csv(data, out);
  if (!bundle.empty()) write_market_bundle(data, seed, bundle);
  double outside = 0.0;
  for (const auto& s : data.shares) outside += s[0];
  std::printf("generated %d markets x %d vehicles, %d individuals each\n", markets,
              vehicles, individuals);
  std::printf("mean outside share %.4f\n", outside / markets);
  if (!out.empty()) std::printf("shares -> %s\n", out.c_str());
  if (!bundle.empty()) std::printf("bundle -> %s\n", bundle.c_str());
  return 0;
}

int cmd_estimate(const std::string& family_str, const std::string& data_path,
                 const std::string& out, int multistart, int rcl_draws,
                 std::uint64_t seed, const std::string& trace) {
  Family family = family_from_name(family_str);
  ShareData data = read_share_csv(data_path);
  EstimationOptions opt;
  opt.multistart = multistart;
  opt.rcl_draws = rcl_draws;
  opt.seed = seed;
  opt.trace_path = trace;
  FitResult fit = estimate(family, data, opt);
  std::printf("%s: ll=%.6f converged=%s best_start=%d iterations=%d (%.1fs, %d evals)\n",
              family_str.c_str(), fit.final_ll, fit.converged ? "yes" : "no",
              fit.best_start, fit.iterations, fit.wall_seconds, fit.evaluations);
  if (!out.empty()) {
    save_fit(fit, out);
    std::printf("fit -> %s\n", out.c_str());
  }
  return 0;
}

int cmd_design(const std::string& fit_path, bool truth, const std::string& pop_path,
               int truth_draws, const std::string& eng_path, int products,
               std::uint64_t seed, int ga_population, int ga_generations,
               const std::string& out) {
  EngineeringConfig eng = engineering_or_default(eng_path);
  std::unique_ptr<DemandKernel> kernel;
  if (truth) {
    PopulationSpec pop = population_or_default(pop_path);
    TasteDraws draws = make_taste_draws(pop, truth_draws);
    kernel = make_truth_kernel(pop, draws);
  } else {
    if (fit_path.empty()) throw CLI::ValidationError("--fit or --truth is required");
    FitResult fit = load_fit(fit_path);
    kernel = make_model_kernel(fit.model);
  }
  OuterOptions opt;
  opt.max_products = products;
  opt.population = ga_population;
  opt.generations = ga_generations;
  opt.seed = seed;
  DesignResult res = optimize_portfolio(*kernel, eng, opt);
  std::printf("profit %.6f after %d generations (%d line-ups tried)%s\n", res.profit,
              res.generations, res.inner_solves,
              res.price_cap_active ? ", price cap active" : "");
  for (std::size_t k = 0; k < res.design.products.size(); ++k) {
    const ProductDesign& pr = res.design.products[k];
    std::printf("  %zu: style %d  a=%.3fs  e=%.3fmpg  p=$%.0f\n", k, pr.b + 1, pr.a,
                pr.e, pr.p * 1e4);
  }
  if (!out.empty()) {
    save_design(res.design, out);
    std::printf("design -> %s\n", out.c_str());
  }
  return 0;
}

int cmd_evaluate(const std::string& design_path, const std::string& ideal_path,
                 const std::string& pop_path, const std::string& eng_path,
                 int truth_draws, bool reprice, std::uint64_t seed) {
  PortfolioDesign design = load_design(design_path);
  PopulationSpec pop = population_or_default(pop_path);
  EngineeringConfig eng = engineering_or_default(eng_path);
  TasteDraws draws = make_taste_draws(pop, truth_draws);
  ProfitEstimate pe = true_profit(design, pop, eng, draws);
  std::printf("true profit %.6f (se %.2e)\n", pe.value, pe.se);
  if (!ideal_path.empty()) {
    PortfolioDesign ideal = load_design(ideal_path);
    ProfitEstimate ip = true_profit(ideal, pop, eng, draws);
    DesignError derr = design_error(design, ideal);
    std::printf("ideal profit %.6f, recovery %.4f\n", ip.value, pe.value / ip.value);
    std::printf("design error %.4f (count %.4f, attributes %.4f)\n", derr.total,
                derr.count_term, derr.attribute_term);
  }
  if (reprice) {
    auto kernel = make_truth_kernel(pop, draws);
    InnerOptions opt;
    opt.seed = seed;
    InnerResult rp = optimize_prices(*kernel, eng, design, opt);
    ProfitEstimate rpe = true_profit(rp.design, pop, eng, draws);
    std::printf("re-priced true profit %.6f (se %.2e)\n", rpe.value, rpe.se);
    for (std::size_t k = 0; k < rp.design.products.size(); ++k) {
      std::printf("  %zu: $%.0f -> $%.0f\n", k, design.products[k].p * 1e4,
                  rp.design.products[k].p * 1e4);
    }
  }
  return 0;
}

int cmd_experiment(const std::string& config_path, bool paper_scale, std::uint64_t seed,
                   bool seed_set, const std::string& out_dir,
                   const std::vector<std::string>& family_names, bool quiet) {
  ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = load_experiment_config(config_path);
  } else if (paper_scale) {
    cfg = paper_scale_config();
  }
  if (seed_set) cfg.seed = seed;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (cfg.output_dir.empty()) cfg.output_dir = "results";
  if (!family_names.empty()) {
    cfg.families.clear();
    for (const std::string& name : family_names) {
      cfg.families.push_back(family_from_name(name));
    }
  }
  ProgressFn progress;
  if (!quiet) {
    progress = [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); };
  }
  RunRecord record = run_experiment(cfg, progress);
  int failed = 0;
  for (const CellRecord& c : record.cells) failed += c.failed ? 1 : 0;
  std::printf("%zu cells, %d failed, %.1fs total; results in %s\n", record.cells.size(),
              failed, record.total_seconds, cfg.output_dir.c_str());
  return record.all_succeeded() ? 0 : 1;
}

int cmd_figure(int figure, const std::string& metrics_path, const std::string& out) {
  std::vector<MetricsRow> rows = read_metrics_csv(metrics_path);
  if (out.empty()) {
    emit_figure_csv(rows, figure, std::cout);
  } else {
    emit_figure_csv(rows, figure, out);
    std::printf("figure %d -> %s\n", figure, out.c_str());
  }
  return 0;
}

int cmd_defaults(const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_population(default_market_population(), dir + "/population.json");
  save_engineering(default_engineering_config(), dir + "/engineering.json");
  save_experiment_config(ExperimentConfig{}, dir + "/experiment.json");
  std::printf("templates -> %s/{population,engineering,experiment}.json\n", dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic vehicle-market choice modeling and portfolio design"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "simulate markets and choice shares");
  int g_markets = 50, g_vehicles = 5, g_individuals = 100;
  std::uint64_t g_seed = 7;
  std::string g_pop, g_out = "shares.csv", g_bundle;
  gen->add_option("--markets", g_markets, "number of markets");
  gen->add_option("--vehicles", g_vehicles, "vehicles per market");
  gen->add_option("--individuals", g_individuals, "choice observations per market");
  gen->add_option("--seed", g_seed, "master seed");
  gen->add_option("--population", g_pop, "population config JSON");
  gen->add_option("--out", g_out, "share CSV path");
  gen->add_option("--bundle", g_bundle, "also write a JSON bundle");

  // estimate
  auto* est = app.add_subcommand("estimate", "fit a choice model to share data");
  std::string e_family = "mnl", e_data = "shares.csv", e_out = "fit.json", e_trace;
  int e_multistart = 5, e_rcl_draws = 1000;
  std::uint64_t e_seed = 0;
  est->add_option("--family", e_family, "mnl | rcl | nml | ctc")->required();
  est->add_option("--data", e_data, "share CSV from `generate`");
  est->add_option("--out", e_out, "fit JSON path");
  est->add_option("--multistart", e_multistart, "number of starting points");
  est->add_option("--rcl-draws", e_rcl_draws, "Monte Carlo draws for rcl");
  est->add_option("--seed", e_seed, "seed for extra starts");
  est->add_option("--trace", e_trace, "per-iteration CSV trace");

  // design
  auto* des = app.add_subcommand("design", "optimize a product portfolio");
  std::string d_fit, d_pop, d_eng, d_out = "design.json";
  bool d_truth = false;
  int d_truth_draws = 10000, d_products = 5, d_ga_pop = 60, d_ga_gen = 100;
  std::uint64_t d_seed = 0;
  des->add_option("--fit", d_fit, "fit JSON from `estimate`");
  des->add_flag("--truth", d_truth, "design against the true population instead");
  des->add_option("--population", d_pop, "population config (with --truth)");
  des->add_option("--truth-draws", d_truth_draws, "Monte Carlo draws (with --truth)");
  des->add_option("--engineering", d_eng, "engineering config JSON");
  des->add_option("--products", d_products, "maximum portfolio size");
  des->add_option("--seed", d_seed, "search seed");
  des->add_option("--ga-population", d_ga_pop, "genetic population size");
  des->add_option("--ga-generations", d_ga_gen, "generation cap");
  des->add_option("--out", d_out, "design JSON path");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a design against the truth");
  std::string v_design = "design.json", v_ideal, v_pop, v_eng;
  int v_truth_draws = 10000;
  bool v_reprice = false;
  std::uint64_t v_seed = 0;
  ev->add_option("--design", v_design, "design JSON")->required();
  ev->add_option("--ideal", v_ideal, "ideal design JSON for error/recovery");
  ev->add_option("--population", v_pop, "population config JSON");
  ev->add_option("--engineering", v_eng, "engineering config JSON");
  ev->add_option("--truth-draws", v_truth_draws, "Monte Carlo draws");
  ev->add_flag("--reprice", v_reprice, "also re-optimize prices under the truth");
  ev->add_option("--seed", v_seed, "re-pricing search seed");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run the full study grid");
  std::string x_config, x_out;
  bool x_paper = false, x_quiet = false;
  std::uint64_t x_seed = 0;
  std::vector<std::string> x_families;
  exp->add_option("--config", x_config, "experiment config JSON");
  exp->add_flag("--paper-scale", x_paper, "full grid, 20 replicates, larger MC budget");
  auto* seed_opt = exp->add_option("--seed", x_seed, "master seed");
  exp->add_option("--out", x_out, "output directory (default: results)");
  exp->add_option("--families", x_families, "subset of mnl,rcl,nml,ctc")->delimiter(',');
  exp->add_flag("--quiet", x_quiet, "suppress progress lines");

  // figure
  auto* fig = app.add_subcommand("figure", "summarize metrics into figure tables");
  int f_n = 1;
  std::string f_metrics = "results/metrics.csv", f_out;
  fig->add_option("n", f_n, "figure number 1..5")->required();
  fig->add_option("--metrics", f_metrics, "metrics.csv from `experiment`");
  fig->add_option("--out", f_out, "output CSV (default: stdout)");

  // feasibility
  auto* fea = app.add_subcommand("feasibility", "tabulate engineering trade-off curves");
  std::string c_eng, c_out = "feasibility.csv";
  int c_samples = 50;
  fea->add_option("--engineering", c_eng, "engineering config JSON");
  fea->add_option("--out", c_out, "curve CSV path");
  fea->add_option("--samples", c_samples, "points per style");

  // defaults
  auto* def = app.add_subcommand("defaults", "write editable default config files");
  std::string t_dir = "configs";
  def->add_option("--dir", t_dir, "target directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_generate(g_markets, g_vehicles, g_individuals, g_seed, g_pop, g_out,
                          g_bundle);
    }
    if (est->parsed()) {
      return cmd_estimate(e_family, e_data, e_out, e_multistart, e_rcl_draws, e_seed,
                          e_trace);
    }
    if (des->parsed()) {
      return cmd_design(d_fit, d_truth, d_pop, d_truth_draws, d_eng, d_products, d_seed,
                        d_ga_pop, d_ga_gen, d_out);
    }
    if (ev->parsed()) {
      return cmd_evaluate(v_design, v_ideal, v_pop, v_eng, v_truth_draws, v_reprice,
                          v_seed);
    }
    if (exp->parsed()) {
      return cmd_experiment(x_config, x_paper, x_seed, seed_opt->count() > 0, x_out,
                            x_families, x_quiet);
    }
    if (fig->parsed()) return cmd_figure(f_n, f_metrics, f_out);
    if (fea->parsed()) {
      write_feasibility_curves(engineering_or_default(c_eng), c_out, c_samples);
      std::printf("curves -> %s\n", c_out.c_str());
      return 0;
    }
    if (def->parsed()) return cmd_defaults(t_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
