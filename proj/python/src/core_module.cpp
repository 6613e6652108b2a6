#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vpd/design.hpp"
#include "vpd/engineering.hpp"
#include "vpd/estimation.hpp"
#include "vpd/experiment.hpp"
#include "vpd/market.hpp"
#include "vpd/metrics.hpp"
#include "vpd/models.hpp"
#include "vpd/population.hpp"

namespace py = pybind11;
using namespace vpd;

namespace {

// pybind11's stl casters claim std::variant, so the fitted model crosses the
// boundary inside a plain wrapper instead.
struct PyModel {
  ChoiceModel value;
};

// The C++ side passes Rng& around; python callers just hand over seeds.
std::vector<Market> py_generate_markets(int num_markets, int num_vehicles,
                                        std::uint64_t seed, const AttributeRanges& ranges) {
  Rng rng(seed_mix(seed, "data"));
  return generate_markets(num_markets, num_vehicles, rng, ranges);
}

ShareData py_simulate_shares(const std::vector<Market>& markets, const PopulationSpec& pop,
                             int individuals, std::uint64_t seed) {
  Rng rng(seed_mix(seed, "data"));
  return simulate_shares(markets, pop, individuals, rng.derive("shares"));
}

ShareData py_generate_share_data(int num_markets, int num_vehicles, int individuals,
                                 std::uint64_t seed, const PopulationSpec& pop,
                                 const AttributeRanges& ranges) {
  Rng rng(seed_mix(seed, "data"));
  std::vector<Market> markets = generate_markets(num_markets, num_vehicles, rng, ranges);
  return simulate_shares(markets, pop, individuals, rng.derive("shares"));
}

FitResult py_estimate(const std::string& family, const ShareData& data, int multistart,
                      int rcl_draws, std::uint64_t seed, int max_iterations) {
  EstimationOptions opt;
  opt.multistart = multistart;
  opt.rcl_draws = rcl_draws;
  opt.seed = seed;
  opt.max_iterations = max_iterations;
  return estimate(family_from_name(family), data, opt);
}

DesignResult py_optimize_portfolio(const DemandKernel& kernel, const EngineeringConfig& eng,
                                   int max_products, int population, int generations,
                                   std::uint64_t seed) {
  OuterOptions opt;
  opt.max_products = max_products;
  opt.population = population;
  opt.generations = generations;
  opt.seed = seed;
  return optimize_portfolio(kernel, eng, opt);
}

PortfolioDesign py_reprice(const DemandKernel& kernel, const PortfolioDesign& design,
                           const EngineeringConfig& eng, std::uint64_t seed) {
  InnerOptions opt;
  opt.seed = seed;
  return optimize_prices(kernel, eng, design, opt).design;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "vehicle-market choice modeling and portfolio design";

  // population ------------------------------------------------------------
  py::class_<PopulationSpec>(m, "Population")
      .def(py::init<>())
      .def_readwrite("num_styles", &PopulationSpec::num_styles)
      .def_property(
          "coeff_means", [](const PopulationSpec& p) { return Eigen::VectorXd(p.coeff_means); },
          [](PopulationSpec& p, const Eigen::Vector4d& v) { p.coeff_means = v; })
      .def_property(
          "coeff_sds", [](const PopulationSpec& p) { return Eigen::VectorXd(p.coeff_sds); },
          [](PopulationSpec& p, const Eigen::Vector4d& v) { p.coeff_sds = v; })
      .def_readwrite("rule_probs", &PopulationSpec::rule_probs)
      .def("marginal_acceptance",
           [](const PopulationSpec& p, int style) { return marginal_acceptance(p, style); },
           py::arg("style"))
      .def("__repr__", [](const PopulationSpec& p) {
        return "<Population styles=" + std::to_string(p.num_styles) +
               " rules=" + std::to_string(p.rule_probs.size()) + ">";
      });
  m.def("default_population", &default_population,
        "taste moments and screens with the raw baseline constant");
  m.def("default_market_population", &default_market_population,
        "same screens with the sign-corrected constant; the study default");
  m.def("load_population", &load_population, py::arg("path"));
  m.def("save_population", &save_population, py::arg("population"), py::arg("path"));
  m.def("true_utility",
        [](const PopulationSpec& pop, double e, double a, double p) {
          Coefficients c{pop.coeff_means(0), pop.coeff_means(1), pop.coeff_means(2),
                         pop.coeff_means(3)};
          return true_utility(c, e, a, p);
        },
        py::arg("population"), py::arg("e"), py::arg("a"), py::arg("p"),
        "deterministic utility at the population mean tastes");

  // engineering ------------------------------------------------------------
  py::class_<StyleEngineering>(m, "StyleEngineering")
      .def_readonly("name", &StyleEngineering::name)
      .def_readonly("weight", &StyleEngineering::weight)
      .def_readonly("tech", &StyleEngineering::tech)
      .def_readonly("a_lo", &StyleEngineering::a_lo)
      .def_readonly("a_hi", &StyleEngineering::a_hi);
  py::class_<EngineeringConfig>(m, "Engineering")
      .def(py::init<>())
      .def_readonly("styles", &EngineeringConfig::styles)
      .def("feasible_fuel_economy",
           [](const EngineeringConfig& cfg, int b, double a) {
             return feasible_fuel_economy(cfg.styles.at(b), a);
           },
           py::arg("style"), py::arg("a"))
      .def("unit_cost",
           [](const EngineeringConfig& cfg, int b, double a) {
             return unit_cost(cfg.styles.at(b), a);
           },
           py::arg("style"), py::arg("a"))
      .def("feasible_accel_interval",
           [](const EngineeringConfig& cfg, int b) {
             return feasible_accel_interval(cfg.styles.at(b));
           },
           py::arg("style"));
  m.def("default_engineering", &default_engineering_config);
  m.def("load_engineering", &load_engineering, py::arg("path"));
  m.def("save_engineering", &save_engineering, py::arg("engineering"), py::arg("path"));

  // markets ----------------------------------------------------------------
  py::class_<Vehicle>(m, "Vehicle")
      .def(py::init([](double e, double a, double p, int b) {
             return Vehicle{e, a, p, b};
           }),
           py::arg("e"), py::arg("a"), py::arg("p"), py::arg("b"))
      .def_readwrite("e", &Vehicle::e)
      .def_readwrite("a", &Vehicle::a)
      .def_readwrite("p", &Vehicle::p)
      .def_readwrite("b", &Vehicle::b)
      .def("__repr__", [](const Vehicle& v) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "<Vehicle b=%d e=%.2f a=%.2f p=%.3f>", v.b, v.e,
                      v.a, v.p);
        return std::string(buf);
      });
  py::class_<Market>(m, "Market")
      .def(py::init<>())
      .def(py::init([](std::vector<Vehicle> vehicles) {
             Market mk;
             mk.vehicles = std::move(vehicles);
             return mk;
           }),
           py::arg("vehicles"))
      .def_readwrite("vehicles", &Market::vehicles)
      .def("__len__", &Market::size);
  py::class_<AttributeRanges>(m, "AttributeRanges")
      .def(py::init<>())
      .def_readwrite("e_lo", &AttributeRanges::e_lo)
      .def_readwrite("e_hi", &AttributeRanges::e_hi)
      .def_readwrite("a_lo", &AttributeRanges::a_lo)
      .def_readwrite("a_hi", &AttributeRanges::a_hi)
      .def_readwrite("p_lo", &AttributeRanges::p_lo)
      .def_readwrite("p_hi", &AttributeRanges::p_hi)
      .def_readwrite("num_styles", &AttributeRanges::num_styles);
  py::class_<ShareData>(m, "ShareData")
      .def(py::init<>())
      .def_readwrite("markets", &ShareData::markets)
      .def_readwrite("shares", &ShareData::shares)
      .def_readwrite("individuals", &ShareData::individuals)
      .def("__len__", [](const ShareData& d) { return d.markets.size(); });
  m.def("generate_markets", &py_generate_markets, py::arg("num_markets"),
        py::arg("num_vehicles"), py::arg("seed") = 7,
        py::arg("ranges") = AttributeRanges{});
  m.def("simulate_shares", &py_simulate_shares, py::arg("markets"), py::arg("population"),
        py::arg("individuals") = 100, py::arg("seed") = 7);
  m.def("generate_share_data", &py_generate_share_data, py::arg("num_markets"),
        py::arg("num_vehicles"), py::arg("individuals") = 100, py::arg("seed") = 7,
        py::arg("population") = default_market_population(),
        py::arg("ranges") = AttributeRanges{},
        "generate markets and simulate their choice shares in one call");
  m.def("true_probabilities",
        [](const Market& market, const PopulationSpec& pop, int draws) {
          return true_choice_probability(market, pop, draws);
        },
        py::arg("market"), py::arg("population"), py::arg("draws") = 10000,
        "choice probabilities under the true screen-then-choose population; "
        "index 0 is the outside good");
  m.def("write_share_csv", &write_share_csv, py::arg("data"), py::arg("path"));
  m.def("read_share_csv", &read_share_csv, py::arg("path"));

  // models and estimation --------------------------------------------------
  py::class_<PyModel>(m, "Model")
      .def_property_readonly(
          "family", [](const PyModel& m_) { return family_name(family_of(m_.value)); })
      .def("probabilities",
           [](const PyModel& m_, const Market& market) {
             return model_probabilities(market, m_.value);
           },
           py::arg("market"),
           "choice probabilities for one market; index 0 is the outside good")
      .def("__repr__", [](const PyModel& m_) {
        return "<Model " + family_name(family_of(m_.value)) + ">";
      });
  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly("family",
                             [](const FitResult& f) { return family_name(f.family); })
      .def_property_readonly("model", [](const FitResult& f) { return PyModel{f.model}; })
      .def_readonly("free_params", &FitResult::free_params)
      .def_readonly("final_ll", &FitResult::final_ll)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("best_start", &FitResult::best_start)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("evaluations", &FitResult::evaluations)
      .def_readonly("wall_seconds", &FitResult::wall_seconds)
      .def("__repr__", [](const FitResult& f) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "<FitResult %s ll=%.4f converged=%d>",
                      family_name(f.family).c_str(), f.final_ll, f.converged ? 1 : 0);
        return std::string(buf);
      });
  m.def("estimate", &py_estimate, py::arg("family"), py::arg("data"),
        py::arg("multistart") = 5, py::arg("rcl_draws") = 1000, py::arg("seed") = 0,
        py::arg("max_iterations") = 500,
        "maximum likelihood fit of mnl, rcl, nml, or ctc to share data");
  m.def("log_likelihood",
        [](const PyModel& model, const ShareData& data, int rcl_draws) {
          LikelihoodOptions opt;
          opt.rcl_draws = rcl_draws;
          Family fam = family_of(model.value);
          return log_likelihood(fam, pack_model(model.value, opt.lambda_max), data, opt)
              .value;
        },
        py::arg("model"), py::arg("data"), py::arg("rcl_draws") = 1000,
        "aggregate share log likelihood of a fitted model");
  m.def("save_fit", &save_fit, py::arg("fit"), py::arg("path"));
  m.def("load_fit", &load_fit, py::arg("path"));

  // design -----------------------------------------------------------------
  py::class_<ProductDesign>(m, "Product")
      .def_readwrite("b", &ProductDesign::b)
      .def_readwrite("a", &ProductDesign::a)
      .def_readwrite("e", &ProductDesign::e)
      .def_readwrite("p", &ProductDesign::p)
      .def("__repr__", [](const ProductDesign& pr) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "<Product b=%d a=%.3f e=%.3f p=%.3f>", pr.b, pr.a,
                      pr.e, pr.p);
        return std::string(buf);
      });
  py::class_<PortfolioDesign>(m, "Portfolio")
      .def(py::init<>())
      .def_readwrite("products", &PortfolioDesign::products)
      .def("market", &to_market, "the portfolio as an offered market")
      .def("__len__", [](const PortfolioDesign& d) { return d.products.size(); });
  py::class_<DemandKernel>(m, "DemandKernel")
      .def("probabilities", &DemandKernel::probabilities, py::arg("market"));
  m.def("model_kernel",
        [](const PyModel& model, int rcl_draws) {
          return make_model_kernel(model.value, rcl_draws);
        },
        py::arg("model"), py::arg("rcl_draws") = 1000);
  m.def("truth_kernel",
        [](const PopulationSpec& pop, int draws) {
          return make_truth_kernel(pop, make_taste_draws(pop, draws));
        },
        py::arg("population"), py::arg("draws") = 10000);
  py::class_<DesignResult>(m, "DesignResult")
      .def_readonly("design", &DesignResult::design)
      .def_readonly("profit", &DesignResult::profit)
      .def_readonly("generations", &DesignResult::generations)
      .def_readonly("inner_solves", &DesignResult::inner_solves)
      .def_readonly("price_cap_active", &DesignResult::price_cap_active);
  m.def("optimize_portfolio", &py_optimize_portfolio, py::arg("kernel"),
        py::arg("engineering") = default_engineering_config(), py::arg("max_products") = 5,
        py::arg("ga_population") = 60, py::arg("ga_generations") = 100, py::arg("seed") = 0,
        "bilevel style/attribute/price search against a demand kernel");
  m.def("reprice", &py_reprice, py::arg("kernel"), py::arg("design"),
        py::arg("engineering") = default_engineering_config(), py::arg("seed") = 0,
        "re-optimize prices only, attributes frozen");
  m.def("true_profit",
        [](const PortfolioDesign& design, const PopulationSpec& pop,
           const EngineeringConfig& eng, int draws) {
          ProfitEstimate pe = true_profit(design, pop, eng, make_taste_draws(pop, draws));
          return py::make_tuple(pe.value, pe.se);
        },
        py::arg("design"), py::arg("population"),
        py::arg("engineering") = default_engineering_config(), py::arg("draws") = 10000,
        "expected per-capita profit under the true population: (value, se)");
  m.def("save_design", &save_design, py::arg("design"), py::arg("path"));
  m.def("load_design", &load_design, py::arg("path"));

  // metrics ----------------------------------------------------------------
  m.def("kld", &kld, py::arg("truth"), py::arg("model"),
        py::arg("include_outside") = false,
        "share-weighted log ratio of true to model probabilities; vehicles only "
        "by default");
  py::class_<DesignError>(m, "DesignError")
      .def_readonly("total", &DesignError::total)
      .def_readonly("count_term", &DesignError::count_term)
      .def_readonly("attribute_term", &DesignError::attribute_term);
  m.def("design_error", &design_error, py::arg("design"), py::arg("ideal"));

  // experiment -------------------------------------------------------------
  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("market_grid", &ExperimentConfig::market_grid)
      .def_readwrite("replicates", &ExperimentConfig::replicates)
      .def_readwrite("vehicles_per_market", &ExperimentConfig::vehicles_per_market)
      .def_readwrite("individuals_per_market", &ExperimentConfig::individuals_per_market)
      .def_readwrite("validation_markets", &ExperimentConfig::validation_markets)
      .def_readwrite("rcl_draws", &ExperimentConfig::rcl_draws)
      .def_readwrite("truth_draws", &ExperimentConfig::truth_draws)
      .def_readwrite("multistart", &ExperimentConfig::multistart)
      .def_readwrite("max_products", &ExperimentConfig::max_products)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def_property(
          "families",
          [](const ExperimentConfig& c) {
            std::vector<std::string> names;
            for (Family f : c.families) names.push_back(family_name(f));
            return names;
          },
          [](ExperimentConfig& c, const std::vector<std::string>& names) {
            c.families.clear();
            for (const std::string& n : names) c.families.push_back(family_from_name(n));
          })
      .def_property(
          "outer_population",
          [](const ExperimentConfig& c) { return c.outer.population; },
          [](ExperimentConfig& c, int v) { c.outer.population = v; })
      .def_property(
          "outer_generations",
          [](const ExperimentConfig& c) { return c.outer.generations; },
          [](ExperimentConfig& c, int v) { c.outer.generations = v; })
      .def_property(
          "outer_stall",
          [](const ExperimentConfig& c) { return c.outer.stall_generations; },
          [](ExperimentConfig& c, int v) { c.outer.stall_generations = v; });
  m.def("paper_scale_config", &paper_scale_config);
  m.def("load_experiment_config", &load_experiment_config, py::arg("path"));
  m.def("save_experiment_config", &save_experiment_config, py::arg("config"),
        py::arg("path"));
  py::class_<CellRecord>(m, "CellRecord")
      .def_property_readonly("family",
                             [](const CellRecord& c) { return family_name(c.family); })
      .def_readonly("num_markets", &CellRecord::num_markets)
      .def_readonly("replicate", &CellRecord::replicate)
      .def_readonly("failed", &CellRecord::failed)
      .def_readonly("error", &CellRecord::error)
      .def_readonly("fit", &CellRecord::fit)
      .def_readonly("design", &CellRecord::design)
      .def_readonly("repriced_design", &CellRecord::repriced_design)
      .def_readonly("mean_kld", &CellRecord::mean_kld)
      .def_property_readonly("design_error",
                             [](const CellRecord& c) { return c.derr; })
      .def_property_readonly("true_profit",
                             [](const CellRecord& c) { return c.profit.value; })
      .def_readonly("recovery", &CellRecord::recovery)
      .def_property_readonly("repriced_profit",
                             [](const CellRecord& c) { return c.repriced.value; })
      .def_readonly("repriced_recovery", &CellRecord::repriced_recovery);
  py::class_<RunRecord>(m, "RunRecord")
      .def_readonly("ideal", &RunRecord::ideal)
      .def_property_readonly("ideal_profit",
                             [](const RunRecord& r) { return r.ideal_profit.value; })
      .def_readonly("cells", &RunRecord::cells)
      .def_readonly("total_seconds", &RunRecord::total_seconds)
      .def("all_succeeded", &RunRecord::all_succeeded);
  m.def("run_experiment",
        [](const ExperimentConfig& config, const ProgressFn& progress) {
          return run_experiment(config, progress);
        },
        py::arg("config"), py::arg("progress") = nullptr,
        py::call_guard<py::gil_scoped_release>(),
        "the full generate/estimate/design/score grid");

  m.attr("FAMILIES") = std::vector<std::string>{"mnl", "rcl", "nml", "ctc"};
  m.attr("NUM_STYLES") = kNumStyles;
}
