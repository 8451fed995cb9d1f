#pragma once

// Scenario orchestration: simulate -> correct -> hedge -> verify, collecting
// every enabled check into one deterministic JSON report.

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ru/config.hpp"
#include "ru/correction.hpp"
#include "ru/hedging.hpp"
#include "ru/io.hpp"
#include "ru/market.hpp"
#include "ru/utility.hpp"
#include "ru/verify.hpp"

namespace ru {

enum class Stage { Simulate, Correct, Hedge, Verify, Report };

inline std::optional<Stage> parse_stage(std::string_view s) {
  if (s == "simulate") return Stage::Simulate;
  if (s == "correct") return Stage::Correct;
  if (s == "hedge") return Stage::Hedge;
  if (s == "verify") return Stage::Verify;
  if (s == "report") return Stage::Report;
  return std::nullopt;
}

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Simulate: return "simulate";
    case Stage::Correct: return "correct";
    case Stage::Hedge: return "hedge";
    case Stage::Verify: return "verify";
    case Stage::Report: return "report";
  }
  return "";
}

struct PipelineResult {
  nlohmann::ordered_json report;
  std::vector<Check> checks;
  std::vector<std::string> artifacts;  // files written, relative to the output directory
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

namespace detail {

using oj = nlohmann::ordered_json;

inline oj to_json(const McEstimate& e) { return oj{{"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n}}; }

inline oj to_json(const Check& c) {
  oj j{{"name", c.name},
       {"estimate", c.estimate},
       {"std_error", c.std_error},
       {"tolerance", c.tolerance},
       {"passed", c.passed}};
  if (!c.detail.empty()) j["detail"] = c.detail;
  return j;
}

inline oj column_stats(const PathArray& a, std::size_t k) {
  const std::vector<double> c = a.column(k);
  const McEstimate e = estimate(c);
  const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
  return oj{{"mean", e.mean}, {"std_error", e.std_error}, {"min", *lo}, {"max", *hi}};
}

inline Check make_check(std::string name, double estimate, double tolerance, bool passed, std::string detail = {}) {
  return Check{std::move(name), estimate, 0.0, tolerance, passed, std::move(detail)};
}

inline double max_abs(const PathArray& a) {
  double m = 0.0;
  for (double v : a.raw()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace detail

/// Runs the stages needed for `stage`. CSV artifacts requested in the config
/// are written under `out_dir` when it is non-empty.
inline PipelineResult run_pipeline(const ScenarioConfig& cfg, Stage stage, const std::string& out_dir = {}) {
  using detail::oj;
  const bool do_correct = stage != Stage::Simulate;
  const bool do_hedge = stage == Stage::Hedge || stage == Stage::Report;
  const bool do_verify = stage == Stage::Verify || stage == Stage::Report;

  PipelineResult res;
  auto add = [&res](oj& section, Check c) {
    section["checks"].push_back(detail::to_json(c));
    res.checks.push_back(std::move(c));
  };
  auto artifact = [&](const std::string& file, bool enabled, auto&& writer) {
    if (out_dir.empty() || !enabled) return;
    std::ofstream os(std::filesystem::path(out_dir) / file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file);
    writer(os);
    res.artifacts.push_back(file);
  };

  oj& rep = res.report;
  rep["stage"] = stage_name(stage);
  rep["config"] = to_json(cfg);

  // ---- market
  const MarketModel model = cfg.market.model();
  const TimeGrid grid = cfg.grid();
  const ModelReport mrep = validate_model(model, grid, cfg.market.ellipticity_eps);
  const PathBatch batch = simulate(model, grid, cfg.n_paths, cfg.seed, {cfg.threads, cfg.market.ellipticity_eps});
  oj sim;
  sim["model"] = oj{{"min_eigenvalue", mrep.min_eigenvalue},
                    {"max_eigenvalue", mrep.max_eigenvalue},
                    {"min_rank", mrep.min_rank},
                    {"passed", mrep.passed}};
  sim["theta_norm_t0"] = std::sqrt(batch.coeff(0).theta_sq);
  sim["checks"] = oj::array();
  {
    double min_s = INFINITY, min_z = INFINITY;
    for (double v : batch.s_array().raw()) min_s = std::min(min_s, v);
    for (double v : batch.z_array().raw()) min_z = std::min(min_z, v);
    add(sim, detail::make_check("market.positivity", std::min(min_s, min_z), 0.0, min_s > 0.0 && min_z > 0.0,
                                "min over paths and times of S and Z"));
    for (auto c : z_martingale_checks(batch, spread_indices(grid.steps, cfg.martingale_times))) {
      c.name = "market." + c.name;
      add(sim, std::move(c));
    }
  }
  sim["terminal_z"] = detail::column_stats(batch.z_array(), grid.steps);
  rep["simulation"] = sim;
  artifact("paths.csv", cfg.output.paths_csv, [&](std::ostream& os) { write_paths_csv(os, batch); });
  if (!do_correct) {
    rep["checks_passed"] = res.passed();
    return res;
  }

  // ---- utility and correction
  const UtilityFamily fam = cfg.family();
  oj util;
  util["family"] = fam.label;
  util["checks"] = oj::array();
  {
    const InadaReport in = validate_inada(fam);
    util["inada"] = oj{{"u1_near_zero", in.u1_near_zero}, {"u1_near_inf", in.u1_near_inf}, {"passed", in.passed}};
    const IdentityReport id = utility_identities(fam, log_grid(1e-2, 1e2, 50), log_grid(1e-3, 1e3, 50));
    add(util, detail::make_check("utility.dual_relation", id.dual_error, 1e-10, id.dual_error <= 1e-10));
    add(util, detail::make_check("utility.fenchel_inequality", id.fenchel_violation, 1e-12,
                                 id.fenchel_violation <= 1e-12));
    add(util, detail::make_check("utility.inverse_round_trip", id.round_trip_error, 1e-10, id.round_trip_error <= 1e-10));
    add(util, detail::make_check("utility.prudence_form", id.prudence_error, 1e-10, id.prudence_error <= 1e-10));
    add(util, detail::make_check("utility.sign_rule", static_cast<double>(id.sign_mismatches), 0.0,
                                 id.sign_mismatches == 0, "sign F = sign(prudence - 2 risk aversion)"));
    if (fam.kind == UtilityFamily::Kind::Exponential) {
      const double a = fam.parameter;
      double err = 0.0;
      for (double z : log_grid(1e-3, 1e3, 50)) err = std::max(err, std::abs(f_from_inverse(fam, z) + 1.0 / (2.0 * a)));
      add(util, detail::make_check("utility.exp_correction_constant", err, 1e-12, err <= 1e-12,
                                   "F = -1/(2a); the commonly printed constant 1/a omits the factor -1/2"));
      util["erratum"] = oj{{"printed", "1/a"}, {"derived", "-1/(2a)"}, {"value", -1.0 / (2.0 * a)}};
    }
  }
  rep["utility"] = util;

  const CorrectionResult corr = correct(batch, fam, cfg.x0);
  oj cor;
  cor["x0"] = cfg.x0;
  cor["v_terminal"] = detail::column_stats(corr.v, grid.steps);
  cor["v_pos_terminal"] = detail::column_stats(corr.v_pos, grid.steps);
  cor["v_neg_terminal"] = detail::column_stats(corr.v_neg, grid.steps);
  cor["checks"] = oj::array();
  if (fam.kind == UtilityFamily::Kind::Log) {
    const double vmax = detail::max_abs(corr.v);
    add(cor, detail::make_check("correction.log_v_zero", vmax, 0.0, vmax == 0.0));
    double err = 0.0;
    for (std::size_t p = 0; p < batch.n_paths(); ++p)
      for (std::size_t k = 0; k < batch.points(); ++k)
        for (std::size_t i = 0; i < batch.assets(); ++i) {
          const double m = batch.coeff(k).merton[static_cast<Eigen::Index>(i)];
          const double frac = corr.pi_hat(p, k, i) * batch.s(p, k, i) / corr.target(p, k);
          if (m != 0.0) err = std::max(err, std::abs(frac - m) / std::abs(m));
        }
    add(cor, detail::make_check("correction.log_merton_proportion", err, 1e-12, err <= 1e-12));
  }
  if (fam.kind == UtilityFamily::Kind::Crra) {
    const PathArray cf = crra_correction_closed_form(batch, fam.parameter, cfg.x0);
    double err = 0.0;
    for (std::size_t p = 0; p < batch.n_paths(); ++p)
      for (std::size_t k = 1; k < batch.points(); ++k)
        err = std::max(err, std::abs(corr.v(p, k) - cf(p, k)) / std::abs(cf(p, k)));
    add(cor, detail::make_check("correction.crra_closed_form", err, 1e-12, err <= 1e-12));
  }
  {
    // Discretised consistency identity X^{pi_hat} + V = I(U'(x) Z) at T (informational).
    const WealthPath w = wealth_path(batch, corr.pi_hat, cfg.x0);
    std::vector<double> rel(batch.n_paths());
    for (std::size_t p = 0; p < rel.size(); ++p)
      rel[p] = std::abs(w.x(p, grid.steps) + corr.v(p, grid.steps) - corr.target(p, grid.steps)) /
               std::abs(corr.target(p, grid.steps));
    std::nth_element(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(rel.size() / 2), rel.end());
    cor["consistency_median_rel_error"] = rel[rel.size() / 2];
  }
  rep["correction"] = cor;
  artifact("correction.csv", cfg.output.correction_csv,
           [&](std::ostream& os) { write_correction_csv(os, batch, corr); });

  // ---- hedging
  if (do_hedge) {
    oj hed;
    hed["checks"] = oj::array();
    const CombinedStrategy cs = combined_strategy(cfg.x0, fam, batch, {cfg.basis_order, cfg.hedge_tol});
    const XStarResult& xs = cs.xstar;
    hed["x_star"] = xs.x_star;
    hed["premium"] = detail::to_json(xs.premium);
    hed["hedge_cost"] = cs.hedge.cost;
    hed["cost_estimate"] = detail::to_json(cs.hedge.cost_estimate);
    hed["solver_evaluations"] = xs.evaluations;
    hed["ridged_regressions"] = cs.hedge.ridged_regressions;
    hed["reconstruction_mae"] = cs.hedge.reconstruction_mae;
    hed["consistency_gap_terminal_mae"] = cs.mean_abs_gap_terminal;
    hed["consumption_violation_rate"] = cs.consumption_violation_rate;
    hed["intrinsic_risk_terminal"] = detail::column_stats(cs.hedge.m, grid.steps);
    {
      const double resid = std::abs(xs.x_star + xs.premium.mean - cfg.x0);
      const double tol = std::max(1e-6, 3.0 * xs.premium.std_error);
      Check c{"hedge.x_star_fixed_point", resid, xs.premium.std_error, tol, resid <= tol, {}};
      add(hed, std::move(c));
      if (xs.premium.mean == 0.0)
        add(hed, detail::make_check("hedge.x_star_equals_x", xs.x_star - cfg.x0, 0.0, xs.x_star == cfg.x0,
                                    "V+ vanishes identically"));
    }
    add(hed, detail::make_check("hedge.kw_orthogonality", cs.hedge.max_orthogonality, 1e-10,
                                cs.hedge.max_orthogonality <= 1e-10, "max |A delta|_inf"));
    add(hed, detail::make_check("hedge.kw_split", cs.hedge.max_split_residual, 1e-10,
                                cs.hedge.max_split_residual <= 1e-10, "max |A^T pi_bar + delta - beta|_inf"));
    if (batch.assets() == batch.brownian_dim()) {
      const double dmax = detail::max_abs(cs.hedge.delta);
      add(hed, detail::make_check("hedge.complete_market_delta", dmax, 1e-10, dmax <= 1e-10, "delta = 0 when d = n"));
    }
    for (auto c : vbar_martingale_checks(batch, cs.hedge.vbar, cs.correction.v_pos,
                                         spread_indices(grid.steps, cfg.martingale_times))) {
      c.name = "hedge." + c.name;
      add(hed, std::move(c));
    }
    rep["hedge"] = hed;
    artifact("hedge.csv", cfg.output.hedge_csv, [&](std::ostream& os) { write_hedge_csv(os, batch, cs.hedge); });
  }

  // ---- verification
  if (do_verify) {
    oj ver;
    ver["checks"] = oj::array();
    oj rules = oj::array();
    for (const auto& rule : cfg.stopping_rules) {
      const auto tau = realize_stop(batch, rule);
      const std::string name = label(rule);
      oj r;
      r["rule"] = name;
      r["fraction_stopped_early"] = fraction_before(tau, grid.steps);

      const McEstimate b = budget_check(batch, tau, fam, cfg.x0);
      r["budget"] = detail::to_json(b);
      add(ver, Check{"verify.budget " + name, b.mean, b.std_error, 3.0 * b.std_error,
                     std::abs(b.mean - cfg.x0) <= 3.0 * b.std_error || b.mean == cfg.x0, {}});
      r["budget_without_v"] = detail::to_json(budget_check(batch, tau, fam, cfg.x0, false));

      const YTauResult y = y_tau_constancy(batch, tau, fam, cfg.x0);
      r["y_tau"] = oj{{"root", y.root}, {"target", y.target}, {"std_error", y.std_error}, {"bracketed", y.bracketed}};
      add(ver, Check{"verify.y_tau " + name, y.root, y.std_error, y.tolerance, y.passed, y.detail});
      rules.push_back(r);
    }
    ver["rules"] = rules;

    RobustnessOptions ro;
    ro.epsilons = cfg.epsilons;
    const RobustnessReport rob = robustness_sweep(batch, cfg.stopping_rules, fam, cfg.x0, cfg.perturbations, ro);
    oj entries = oj::array();
    for (const auto& e : rob.entries) {
      entries.push_back(oj{{"rule", e.rule},
                           {"perturbation", e.perturbation},
                           {"epsilon", e.epsilon},
                           {"delta", e.delta.mean},
                           {"std_error", e.delta.std_error},
                           {"passed", e.passed}});
      add(ver, Check{"verify.robustness " + e.rule + " " + e.perturbation + " eps=" + detail::shortest(e.epsilon),
                     e.delta.mean, e.delta.std_error, 2.0 * e.delta.std_error, e.passed, {}});
    }
    ver["robustness"] = entries;
    // Strict negativity is enforced for log utility only; elsewhere it is reported.
    oj strict = oj::array();
    for (auto c : rob.strict) {
      c.name = "verify." + c.name;
      if (fam.kind == UtilityFamily::Kind::Log)
        add(ver, std::move(c));
      else
        strict.push_back(detail::to_json(c));
    }
    if (!strict.empty()) ver["strict_concavity_informational"] = strict;

    {
      const WealthPath w = wealth_path(batch, corr.pi_hat, cfg.x0);
      const std::size_t h = grid.steps / 2;
      const SupermartingaleReport sm = supermartingale_check(batch, w.x, {{0, h}, {h, grid.steps}});
      ver["supermartingale"] =
          oj{{"max_z", sm.max_z}, {"min_z", sm.min_z}, {"martingale", sm.martingale}, {"cells", sm.cells.size()}};
      add(ver, detail::make_check("verify.supermartingale pi_hat", sm.max_z, 3.0, sm.supermartingale,
                                  "max cell z-score of E[Z(t)(X(t)-X(u))]"));
    }
    rep["verification"] = ver;
  }

  rep["checks_passed"] = res.passed();
  rep["checks_failed"] = static_cast<std::size_t>(
      std::count_if(res.checks.begin(), res.checks.end(), [](const Check& c) { return !c.passed; }));
  return res;
}

}  // namespace ru
