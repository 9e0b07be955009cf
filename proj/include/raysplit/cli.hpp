#pragma once

// Subcommand dispatch for the command-line tool. Every run writes CSV output
// plus a JSON manifest into the output directory; identical config + seed
// give byte-identical files. Exit codes: 0 success, 2 validation error,
// 3 budget or tolerance failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "raysplit/config.hpp"
#include "raysplit/csvio.hpp"
#include "raysplit/disks.hpp"
#include "raysplit/flow.hpp"
#include "raysplit/parallel.hpp"
#include "raysplit/spectral1d.hpp"
#include "raysplit/transfer.hpp"

namespace raysplit {
namespace cli {

namespace fs = std::filesystem;

struct RunContext {
  ExperimentConfig cfg;
  ModelDomain model;
  fs::path out;
  std::uint64_t seed = 1;
  int threads = 1;
  bool budget_hit = false;
};

namespace detail {

inline Profile1D layer_window(const ModelDomain& m, int layer, double ramp) {
  return Profile1D::raised_cosine_window(m.cumulative[layer], m.cumulative[layer + 1], ramp);
}

inline Profile1D tapered_identity(const ModelDomain& m, double ramp) {
  Profile1D p;
  for (int i = 0; i < m.layer_count(); ++i) p += layer_window(m, i, ramp);
  return p;
}

inline Profile1D make_profile(const ModelDomain& m, const ExperimentConfig& cfg) {
  const std::string name = cfg.str("observables.name", "layer_taper");
  const double ramp = cfg.num("observables.ramp", 0.05);
  if (name == "const") return Profile1D::constant_on(0.0, m.total_length(), 1.0);
  if (name == "layer_taper") {
    const int layer = static_cast<int>(cfg.num("observables.layer", 1.0)) - 1;
    if (layer < 0 || layer >= m.layer_count()) throw ConfigError("observables.layer out of range");
    return layer_window(m, layer, ramp);
  }
  if (name == "cos_taper") {
    const double freq = cfg.num("observables.freq", 2.0);
    Profile1D prof;
    for (int i = 0; i < m.layer_count(); ++i)
      prof += layer_window(m, i, ramp)
                  .times(Profile1D::cosine_on(m.cumulative[i], m.cumulative[i + 1], 1.0, freq,
                                              0.0));
    return prof;
  }
  throw ConfigError("spectral subcommands need a 1D profile observable (const, "
                    "layer_taper or cos_taper), got '" + name + "'");
}

}  // namespace detail

// --- subcommands ------------------------------------------------------------

inline void cmd_trace(RunContext& ctx) {
  const double t = ctx.cfg.num("run.t", 3.0);
  PrunePolicy pol = ctx.cfg.policy();
  pol.record_events = true;
  LiouvilleSampler sampler(ctx.model);
  std::mt19937_64 rng(substream_seed(ctx.seed, 0));
  BranchTree tree = make_tree(ctx.model, sampler.sample(rng));
  evolve(ctx.model, tree, t, pol);
  ctx.budget_hit = tree.budget_exceeded;

  CsvWriter csv(ctx.out / "trace.csv",
                {"branch_id", "parent_id", "t", "region", "x0", "x1", "xi0", "xi1", "amp_re",
                 "amp_im", "theta", "kappa_digit", "event_kind"});
  for (const auto& e : tree.events) {
    csv.row({static_cast<long long>(e.branch_id), static_cast<long long>(e.parent_id), e.t,
             static_cast<long long>(e.region), e.x[0], e.x[1], e.xi[0], e.xi[1], e.amp.real(),
             e.amp.imag(), e.theta, std::string(1, e.kappa_digit),
             std::string(1, e.event_kind)});
  }
  nlohmann::json extra;
  extra["t"] = t;
  extra["branches"] = tree.branches.size();
  extra["lost_mass"] = tree.lost_mass;
  extra["budget_exceeded"] = tree.budget_exceeded;
  write_manifest(ctx.out / "manifest.json", "trace", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline void cmd_transfer(RunContext& ctx) {
  const double t = ctx.cfg.num("run.t", 3.0);
  const int n = ctx.cfg.samples();
  const PrunePolicy pol = ctx.cfg.policy();
  const double mtol = ctx.cfg.merge_tol();
  const Observable f = ctx.cfg.observable(ctx.model);
  LiouvilleSampler sampler(ctx.model);

  struct Row {
    double xc, xd, lost;
    bool budget;
  };
  std::vector<Row> rows(n);
  parallel_for(n, ctx.threads, [&](std::size_t i) {
    std::mt19937_64 rng(substream_seed(ctx.seed, i));
    const PhasePoint start = sampler.sample(rng);
    const XiResult rc = xi_classical(ctx.model, f, t, start, pol, mtol);
    const XiResult rd = xi_diagonal(ctx.model, f, t, start, pol, mtol);
    rows[i] = {rc.value, rd.value, rc.lost_mass, rc.budget_exceeded || rd.budget_exceeded};
  });

  CsvWriter csv(ctx.out / "transfer.csv",
                {"sample", "t", "xi_classical", "xi_diagonal", "lost_mass"});
  double lost_total = 0.0;
  for (int i = 0; i < n; ++i) {
    csv.row({static_cast<long long>(i), t, rows[i].xc, rows[i].xd, rows[i].lost});
    lost_total += rows[i].lost;
    ctx.budget_hit = ctx.budget_hit || rows[i].budget;
  }
  nlohmann::json extra;
  extra["t"] = t;
  extra["observable"] = f.name;
  extra["lost_mass_mean"] = lost_total / n;
  write_manifest(ctx.out / "manifest.json", "transfer", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline void cmd_ergodicity(RunContext& ctx) {
  std::vector<double> T_list =
      ctx.cfg.has("run.t_list") ? ctx.cfg.num_list("run.t_list")
                                : std::vector<double>{20.0, 80.0, 320.0};
  ErgodicityOptions opt;
  opt.seed = ctx.seed;
  opt.n_t = static_cast<int>(ctx.cfg.num("run.n_t", 64.0));
  opt.n_paths = static_cast<int>(ctx.cfg.num("run.n_paths", 16.0));
  opt.threads = ctx.threads;
  opt.policy = ctx.cfg.policy();
  const Observable f = ctx.cfg.observable(ctx.model);
  LiouvilleSampler sampler(ctx.model);
  const auto rows = ergodicity_scan(ctx.model, f, T_list, ctx.cfg.samples(), sampler, opt);

  CsvWriter csv(ctx.out / "ergodicity.csv",
                {"T", "n_samples", "l1_dev", "q25", "q50", "q75", "mc_stderr",
                 "lost_mass_mean"});
  for (const auto& r : rows)
    csv.row({r.T, static_cast<long long>(r.n_samples), r.l1_dev, r.q25, r.q50, r.q75,
             r.mc_stderr, r.lost_mass_mean});
  // the plain time-average diagnostic over the same starts (the Cesaro
  // statement is the weaker notion; neither implies the other here)
  CsvWriter pcsv(ctx.out / "ergodicity_plain.csv",
                 {"T", "n_samples", "plain_l1_dev", "plain_q50"});
  for (const auto& r : rows)
    pcsv.row({r.T, static_cast<long long>(r.n_samples), r.plain_l1_dev, r.plain_q50});
  nlohmann::json extra;
  extra["observable"] = f.name;
  write_manifest(ctx.out / "manifest.json", "ergodicity", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline void cmd_semigroup(RunContext& ctx) {
  const double s = ctx.cfg.num("run.s", 0.5);
  const double t = ctx.cfg.num("run.t", 0.7);
  const Observable f = ctx.cfg.observable(ctx.model);
  LiouvilleSampler sampler(ctx.model);
  const auto res = semigroup_check(ctx.model, f, s, t, ctx.cfg.samples(), sampler, ctx.seed,
                                   ctx.cfg.policy(), ctx.cfg.merge_tol());
  CsvWriter csv(ctx.out / "semigroup.csv", {"s", "t", "variant", "residual", "stderr"});
  csv.row({s, t, std::string("classical"), res.classical_residual, res.classical_stderr});
  csv.row({s, t, std::string("diagonal"), res.diagonal_residual, res.diagonal_stderr});
  nlohmann::json extra;
  extra["lost_mass_bound"] = res.lost_mass_bound;
  extra["observable"] = f.name;
  write_manifest(ctx.out / "manifest.json", "semigroup", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline void cmd_poincare(RunContext& ctx) {
  if (ctx.model.variant != ModelVariant::GluedDisks)
    throw ConfigError("poincare needs a glued_disks model");
  const int steps = static_cast<int>(ctx.cfg.num("run.steps", 2000.0));
  std::mt19937_64 rng(substream_seed(ctx.seed, 0));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  disks::SectionPoint pt{kTwoPi * uni(rng), 1.9 * uni(rng) - 0.95, disks::Side::Plus};
  disks::Side side = disks::Side::Plus;

  CsvWriter csv(ctx.out / "section_orbit.csv", {"step", "side", "s", "u", "amp_re", "amp_im"});
  cplx amp{1.0, 0.0};
  for (int k = 0; k < steps; ++k) {
    csv.row({static_cast<long long>(k), std::string(side == disks::Side::Plus ? "+" : "-"),
             pt.s, pt.u, amp.real(), amp.imag()});
    const auto kids = disks::full_section_step(ctx.model, pt, side);
    double pick = uni(rng);
    std::size_t chosen = kids.size() - 1;
    for (std::size_t c = 0; c < kids.size(); ++c) {
      const double w = std::norm(kids[c].second);
      if (pick < w) {
        chosen = c;
        break;
      }
      pick -= w;
    }
    amp = kids[chosen].second;
    pt = kids[chosen].first;
    side = pt.side;
  }

  // periodic-point scan for the configured word (signed powers, e.g. 1,-1
  // means P+ then P-^{-1}); default word P- P+
  std::vector<disks::WordFactor> word;
  std::vector<double> powers =
      ctx.cfg.has("run.word") ? ctx.cfg.num_list("run.word") : std::vector<double>{-1.0, 1.0};
  // convention: positive entries are powers of P+, negative of P-
  for (double p : powers) {
    if (p == 0.0) throw ConfigError("run.word entries must be nonzero");
    if (p > 0.0)
      word.push_back({disks::Side::Plus, static_cast<int>(p)});
    else
      word.push_back({disks::Side::Minus, static_cast<int>(-p)});
  }
  const int grid = static_cast<int>(ctx.cfg.num("run.grid", 48.0));
  const auto pts = disks::periodic_point_scan(ctx.model, word, grid, grid);
  CsvWriter pcsv(ctx.out / "periodic_points.csv", {"s", "u", "residual"});
  for (const auto& p : pts) pcsv.row({p.s, p.u, p.residual});

  const auto rep = disks::genericity_check(ctx.model);
  nlohmann::json extra;
  extra["steps"] = steps;
  extra["periodic_candidates"] = pts.size();
  extra["chi_prime_eq_one_samples"] = rep.chi_prime_eq_one;
  extra["chi_second_eq_one_samples"] = rep.chi_second_eq_one;
  write_manifest(ctx.out / "manifest.json", "poincare", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline spectral::SpectralData solve_from_config(const RunContext& ctx) {
  const auto prob = spectral::SecularProblem::from_model(ctx.model);
  double lambda_max;
  if (ctx.cfg.has("run.lambda_max")) {
    lambda_max = ctx.cfg.num("run.lambda_max");
  } else {
    const double n_max = ctx.cfg.num("run.n_max", 2000.0);
    const double om = (n_max + 2.0) * kPi / prob.optical_length();
    lambda_max = om * om;
  }
  return spectral::solve_spectrum(prob, lambda_max);
}

inline void cmd_spectrum(RunContext& ctx) {
  const auto data = solve_from_config(ctx);
  CsvWriter csv(ctx.out / "spectrum.csv", {"j", "lambda", "sqrt_lambda"});
  for (std::size_t j = 0; j < data.size(); ++j)
    csv.row({static_cast<long long>(j + 1), data.lambda[j], data.omega[j]});
  nlohmann::json extra;
  extra["count"] = data.size();
  extra["optical_length"] = data.prob.optical_length();
  write_manifest(ctx.out / "manifest.json", "spectrum", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline void cmd_weyl(RunContext& ctx) {
  const auto data = solve_from_config(ctx);
  CsvWriter csv(ctx.out / "weyl.csv", {"lambda", "count", "prediction", "relative_error"});
  const std::size_t chunks = 32;
  std::size_t last_pos = 0;
  for (std::size_t c = 1; c <= chunks; ++c) {
    const std::size_t pos = data.size() * c / chunks;
    if (pos == 0 || pos == last_pos) continue;
    last_pos = pos;
    const double lam = data.lambda[pos - 1] * (1.0 + 1e-12);
    const auto wc = spectral::weyl_count(data, lam);
    csv.row({lam, static_cast<long long>(wc.count), wc.prediction, wc.relative_error});
  }
  const double slope =
      spectral::weyl_slope(data, data.lambda.back() / 4.0, data.lambda.back());
  nlohmann::json extra;
  extra["slope"] = slope;
  extra["slope_target"] = data.prob.optical_length() / kPi;
  write_manifest(ctx.out / "manifest.json", "weyl", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline void cmd_localweyl(RunContext& ctx) {
  const auto data = solve_from_config(ctx);
  const Profile1D prof = detail::make_profile(ctx.model, ctx.cfg);
  CsvWriter csv(ctx.out / "localweyl.csv", {"N", "average", "target", "abs_error"});
  for (int N : {250, 500, 1000, 2000}) {
    if (N > static_cast<int>(data.size())) break;
    const auto r = spectral::local_weyl_average(data, prof, N);
    csv.row({static_cast<long long>(N), r.average, r.target, std::abs(r.average - r.target)});
  }
  write_manifest(ctx.out / "manifest.json", "localweyl", ctx.cfg.raw_text(), ctx.seed, {});
}

inline void cmd_qe(RunContext& ctx) {
  const auto data = solve_from_config(ctx);
  const Profile1D prof = detail::make_profile(ctx.model, ctx.cfg);
  std::vector<int> Ns;
  for (int N = 100; N <= static_cast<int>(data.size()); N += 100) Ns.push_back(N);
  const auto curve = spectral::qe_variance(data, prof, Ns);
  CsvWriter csv(ctx.out / "qe_variance.csv", {"N", "variance"});
  for (const auto& [N, v] : curve) csv.row({static_cast<long long>(N), v});
  write_manifest(ctx.out / "manifest.json", "qe", ctx.cfg.raw_text(), ctx.seed, {});
}

inline void cmd_averaging(RunContext& ctx) {
  const auto data = solve_from_config(ctx);
  const double t = ctx.cfg.num("run.t", 0.7);
  spectral::AveragingOptions opt;
  opt.j_lo = static_cast<int>(ctx.cfg.num("run.j_lo", 199.0));
  opt.j_hi = static_cast<int>(ctx.cfg.num("run.j_hi", 1200.0));
  opt.band = static_cast<int>(ctx.cfg.num("run.band", 192.0));
  opt.tail_tolerance = ctx.cfg.num("run.tail_tol", 1.0);

  const double ramp = ctx.cfg.num("observables.ramp", 0.05);
  const Profile1D a = detail::make_profile(ctx.model, ctx.cfg);
  const Profile1D b = detail::tapered_identity(ctx.model, ramp);
  Profile1D c;
  for (int i = 0; i < ctx.model.layer_count(); ++i) {
    const double lo = ctx.model.cumulative[i], hi = ctx.model.cumulative[i + 1];
    c += Profile1D::raised_cosine_window(lo + 0.3 * (hi - lo), hi, ramp);
  }

  const auto r = spectral::averaging_check(data, ctx.model, a, b, c, t, opt);
  CsvWriter csv(ctx.out / "averaging.csv",
                {"t", "quantum", "classical", "tail_bound", "quantum_direct_t0",
                 "classical_refine"});
  csv.row({t, r.quantum, r.classical, r.tail_bound, r.quantum_direct_t0, r.classical_refine});
  nlohmann::json extra;
  extra["quantum_imag"] = r.quantum_imag;
  write_manifest(ctx.out / "manifest.json", "averaging", ctx.cfg.raw_text(), ctx.seed, extra);
}

inline void cmd_recombine(RunContext& ctx) {
  const double t = ctx.cfg.num("run.t", 4.0 * kPi + 0.1);
  const int n = ctx.cfg.samples();
  PrunePolicy pol = ctx.cfg.policy();
  const double mtol = ctx.cfg.merge_tol();
  LiouvilleSampler sampler(ctx.model);

  struct Row {
    long long branches, groups, recombining, substitution, max_group;
    double wc, wd, lost;
    bool budget;
  };
  std::vector<Row> rows(n);
  parallel_for(n, ctx.threads, [&](std::size_t i) {
    std::mt19937_64 rng(substream_seed(ctx.seed, i));
    BranchTree tree = make_tree(ctx.model, sampler.sample(rng));
    evolve(ctx.model, tree, t, pol);
    const auto groups = endpoint_set(ctx.model, tree, mtol);
    Row r{static_cast<long long>(tree.branches.size()), static_cast<long long>(groups.size()),
          0, 0, 0, 0.0, 0.0, tree.lost_mass, tree.budget_exceeded};
    for (const auto& g : groups) {
      if (g.members.size() >= 2) ++r.recombining;
      if (g.members.size() >= 2 && g.mixed_event_counts) ++r.substitution;
      r.max_group = std::max<long long>(r.max_group, g.members.size());
      r.wc += g.w_c;
      r.wd += g.w_d;
    }
    rows[i] = r;
  });

  CsvWriter csv(ctx.out / "recombine.csv",
                {"sample", "branches", "groups", "recombining_groups", "substitution_groups",
                 "max_group_size", "sum_wc", "sum_wd", "lost_mass"});
  long long with_subst = 0;
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[i];
    csv.row({static_cast<long long>(i), r.branches, r.groups, r.recombining, r.substitution,
             r.max_group, r.wc, r.wd, r.lost});
    if (r.substitution > 0) ++with_subst;
    ctx.budget_hit = ctx.budget_hit || r.budget;
  }
  nlohmann::json extra;
  extra["t"] = t;
  extra["starts_with_substitution_recombination"] = with_subst;
  write_manifest(ctx.out / "manifest.json", "recombine", ctx.cfg.raw_text(), ctx.seed, extra);
}

// --- driver -----------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"ray-splitting billiard simulation and verification toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  std::optional<int> threads_override;
  app.add_option("--config", config_path, "experiment config file")->required();
  app.add_option("--seed", seed_override, "override run.seed");
  app.add_option("--out", out_override, "override run.out");
  app.add_option("--threads", threads_override, "override run.threads");

  std::map<std::string, std::optional<double>> num_over;
  auto add_num = [&](CLI::App* sub, const std::string& flag, const std::string& key) {
    sub->add_option_function<double>(
        flag, [&num_over, key](double v) { num_over[key] = v; });
  };

  std::vector<std::string> names{"trace",    "transfer", "ergodicity", "semigroup",
                                 "poincare", "spectrum", "weyl",       "localweyl",
                                 "qe",       "averaging", "recombine"};
  std::map<std::string, CLI::App*> subs;
  for (const auto& nm : names) subs[nm] = app.add_subcommand(nm);
  add_num(subs["trace"], "--t", "run.t");
  add_num(subs["transfer"], "--t", "run.t");
  add_num(subs["transfer"], "--samples", "run.samples");
  add_num(subs["ergodicity"], "--samples", "run.samples");
  add_num(subs["semigroup"], "--s", "run.s");
  add_num(subs["semigroup"], "--t", "run.t");
  add_num(subs["semigroup"], "--samples", "run.samples");
  add_num(subs["spectrum"], "--lambda-max", "run.lambda_max");
  add_num(subs["weyl"], "--lambda-max", "run.lambda_max");
  add_num(subs["localweyl"], "--n-max", "run.n_max");
  add_num(subs["qe"], "--n-max", "run.n_max");
  add_num(subs["averaging"], "--t", "run.t");
  add_num(subs["recombine"], "--t", "run.t");
  add_num(subs["recombine"], "--samples", "run.samples");
  add_num(subs["poincare"], "--steps", "run.steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  }

  try {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "cannot read config file " << config_path << "\n";
      return 2;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    // fold CLI overrides into the effective config text so the manifest
    // captures exactly what ran
    std::string overrides;
    for (const auto& [key, val] : num_over) {
      if (!val) continue;
      const auto dot = key.find('.');
      char line[128];
      std::snprintf(line, sizeof(line), "[%s]\n%s = %.17g\n", key.substr(0, dot).c_str(),
                    key.substr(dot + 1).c_str(), *val);
      overrides += line;
    }
    if (seed_override) overrides += "[run]\nseed = " + std::to_string(*seed_override) + "\n";
    if (threads_override)
      overrides += "[run]\nthreads = " + std::to_string(*threads_override) + "\n";
    if (!overrides.empty()) text += "\n# command-line overrides\n" + overrides;

    RunContext ctx{ExperimentConfig::parse(text), ModelDomain::hemispheres(1.0, 1.0), {}, 1, 1,
                   false};
    ctx.model = ctx.cfg.model();
    ctx.seed = ctx.cfg.seed();
    ctx.threads = ctx.cfg.threads();
    // precedence: --out flag, RAYSPLIT_OUT, then the config value (the output
    // directory is the only environment-configurable setting)
    const char* env_out = std::getenv("RAYSPLIT_OUT");
    ctx.out = out_override ? fs::path(*out_override)
                           : (env_out ? fs::path(env_out) : fs::path(ctx.cfg.out_dir()));
    fs::create_directories(ctx.out);

    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "trace") cmd_trace(ctx);
    else if (sub == "transfer") cmd_transfer(ctx);
    else if (sub == "ergodicity") cmd_ergodicity(ctx);
    else if (sub == "semigroup") cmd_semigroup(ctx);
    else if (sub == "poincare") cmd_poincare(ctx);
    else if (sub == "spectrum") cmd_spectrum(ctx);
    else if (sub == "weyl") cmd_weyl(ctx);
    else if (sub == "localweyl") cmd_localweyl(ctx);
    else if (sub == "qe") cmd_qe(ctx);
    else if (sub == "averaging") cmd_averaging(ctx);
    else if (sub == "recombine") cmd_recombine(ctx);

    if (ctx.budget_hit) {
      std::cerr << "budget exceeded on at least one sample; see manifest\n";
      return 3;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const TruncationTailTooLarge& e) {
    std::cerr << "tolerance failure: " << e.what() << "\n";
    return 3;
  } catch (const QuadratureNotConverged& e) {
    std::cerr << "tolerance failure: " << e.what() << "\n";
    return 3;
  } catch (const RootBracketFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cli
}  // namespace raysplit
