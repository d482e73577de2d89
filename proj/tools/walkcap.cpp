#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "walkcap/capacity.hpp"
#include "walkcap/corrector.hpp"
#include "walkcap/crossterms.hpp"
#include "walkcap/deviation.hpp"
#include "walkcap/errors.hpp"
#include "walkcap/experiment.hpp"
#include "walkcap/folding.hpp"
#include "walkcap/green.hpp"
#include "walkcap/lattice.hpp"

using namespace walkcap;
using json = nlohmann::json;

namespace {

constexpr int kOk = 0, kUsage = 2, kNumeric = 3, kPartial = 4;

Point parse_point(const std::string& s) {
  std::vector<std::int64_t> c;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    try {
      c.push_back(std::stoll(tok));
    } catch (const std::exception&) {
      throw UsageError("bad coordinate '" + tok + "' in " + s);
    }
  }
  if (c.size() < 3 || c.size() > static_cast<std::size_t>(kMaxDim)) throw UsageError("point needs 3..8 coordinates");
  Point p(static_cast<int>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) p[static_cast<int>(i)] = c[i];
  return p;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw UsageError("time range must look like k:l");
  const std::size_t k = std::stoull(s.substr(0, colon)), l = std::stoull(s.substr(colon + 1));
  if (k > l) throw UsageError("time range " + s + " is reversed");
  return {k, l};
}

void emit_header(const std::string& command, std::uint64_t seed, int d, std::size_t n, const json& params) {
  json h = {{"type", "header"}, {"command", command}, {"version", kVersion},
            {"seed", seed},      {"d", d},             {"n", n},
            {"params", params}};
  std::cout << h.dump() << '\n';
}

void emit(json j) {
  if (!j.contains("type")) j["type"] = "record";
  std::cout << j.dump() << '\n';
}

json point_json(const Point& p) {
  json a = json::array();
  for (int i = 0; i < p.d; ++i) a.push_back(p[i]);
  return a;
}

struct Check {
  std::string name;
  bool pass;
  double error;
};

int selftest() {
  std::vector<Check> checks;
  auto check = [&](const std::string& name, double err, double tol) { checks.push_back({name, err <= tol, err}); };
  const int d = 5;
  const GreenKernel& K = shared_kernel(d);
  const Point o = Point::origin(d), e1 = Point::unit(d, 0);
  const double g0 = green_quadrature(o).value, g1 = green_quadrature(e1).value;

  check("kernel matches quadrature at 0 and e1", std::max(std::abs(K(o) - g0), std::abs(K(e1) - g1)), 1e-12);
  check("cap of a point", std::abs(capacity(PointSet(d, {o})) - 1 / g0), 1e-9);
  check("cap of an edge", std::abs(capacity(PointSet(d, {o, e1})) - 2 / (g0 + g1)), 1e-9);
  check("truncated green G_2(e1) = 1/10", std::abs(green_truncated(e1, 2) - 0.1), 0);

  double harm = 0;
  for (const Point& x : canonical_l1_ball(d, 6))
    if (!x.is_origin()) harm = std::max(harm, std::abs(shared_green_cache(d).harmonic_residual(x)));
  check("harmonicity off the origin", harm, 1e-9);

  double phi = 0;
  for (const Point& x : canonical_l1_ball(d, 4)) {
    const double want = x.is_origin() ? 2 * K(x) - 1 : 2 * K(x);
    phi = std::max(phi, std::abs(phi_T(x, 1) - want));
  }
  check("phi_1 closed form", phi, 1e-9);

  double dec = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Walk w = simulate_walk(80, derive_seed(7, s), d);
    const PointSet A = range_of(w, 0, 50), B = range_of(w, 30, 80);
    const double lhs = capacity(A) + capacity(B) - capacity(set_union(A, B));
    dec = std::max(dec, std::abs(lhs - chi_C(A, B)));
    const auto rep = chi_variants(A, B);
    dec = std::max(dec, std::abs(rep.chiAB + rep.chiBA - rep.epsilon - rep.chiC));
  }
  check("two-set decomposition", dec, 1e-8);

  double dy = 0;
  for (std::uint64_t s = 0; s < 3; ++s) dy = std::max(dy, std::abs(dyadic_decompose(simulate_walk(256, s, d), 3).residual));
  check("dyadic decomposition", dy, 1e-6);

  {
    const Walk w = simulate_walk(200, 11, d);
    const PointSet R = range_of(w, 0, 200);
    auto sol = equilibrium(PointSet(d, {R[0]}));
    for (std::size_t i = 1; i < R.size(); ++i) extend_in_place(sol, R[i]);
    const double one = capacity(R);
    check("incremental extend vs one-shot", std::abs(sol.cap - one) / one, 1e-6);
  }

  check("killed box L=2 rate", std::abs(box_survival_power(2, d).lambda - 0.5), 1e-10);
  check("killed box L=9 rate", std::abs(box_survival_power(9, d).lambda - std::cos(M_PI / 10)), 1e-10);
  {
    const auto a = survival_curve(60, 5, o), b = survival_transfer(60, 5, o);
    double rel = 0;
    for (std::size_t k = 0; k < a.size(); ++k) rel = std::max(rel, std::abs(a[k] - b[k]) / b[k]);
    check("survival split vs transfer", rel, 1e-10);
  }
  {
    double diff = 0;
    for (std::size_t n = 0; n <= 3; ++n) diff = std::max(diff, std::abs(cn_exact(n, d).cn - cn_bruteforce(n, d).cn));
    check("upward exhaustive vs brute force", diff, 1e-12);
  }

  bool ok = true;
  for (const auto& c : checks) {
    std::printf("%s  %-36s  %.3e\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.error);
    ok = ok && c.pass;
  }
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"walkcap: capacity of random walk ranges in Z^d"};
  app.require_subcommand(1);
  std::function<int()> action;

  int d = 5;
  std::size_t n = 0, T = 10;
  std::uint64_t seed = 1;
  double zeta = 0, C0 = 2;

  // green
  std::string xs;
  std::size_t dpN = 0;
  auto* g = app.add_subcommand("green", "Green function at a lattice point");
  g->add_option("x", xs, "comma separated coordinates")->required();
  g->add_option("--dp", dpN, "also run the step DP with this many steps");
  g->add_option("--T", T, "truncation for G_T and phi_T");
  g->callback([&] {
    action = [&] {
      const Point x = parse_point(xs);
      const auto q = green_quadrature(x);
      emit_header("green", 0, x.d, 0, {{"x", point_json(x)}, {"T", T}});
      json r = {{"G", q.value}, {"abserr", q.abserr}, {"kernel", shared_kernel(x.d)(x)},
                {"G_T", green_truncated(x, T)}, {"phi_T", phi_T(x, T)}};
      if (dpN) {
        const auto e = green_dp(x, dpN);
        r["dp"] = {{"partial", e.partial}, {"tail", e.tail}, {"value", e.value}};
      }
      emit(r);
      return kOk;
    };
  });

  // capacity
  std::string setPath;
  std::size_t mcWalks = 0;
  double mcRadius = 0;
  auto* c = app.add_subcommand("capacity", "Cap of a point set or of a walk range");
  c->add_option("--set", setPath, "point set file, one point per line");
  c->add_option("--n", n, "walk length when no set is given");
  c->add_option("--d", d);
  c->add_option("--seed", seed);
  c->add_option("--mc", mcWalks, "Monte Carlo escape walks per point");
  c->add_option("--radius", mcRadius, "escape radius for --mc");
  c->callback([&] {
    action = [&] {
      const PointSet A = setPath.empty() ? range_of(simulate_walk(n, seed, d), 0, n) : read_point_set(setPath);
      emit_header("capacity", seed, A.d(), setPath.empty() ? n : 0, {{"set", setPath}, {"size", A.size()}});
      const auto sol = equilibrium(A);
      emit({{"cap", sol.cap}, {"size", A.size()}, {"residual", sol.residual}, {"method", "direct"}});
      if (mcWalks) {
        const double radius = mcRadius > 0 ? mcRadius : 4 * (A.diameter() + 2);
        const auto mc = capacity_mc(A, mcWalks, radius, seed);
        emit({{"cap", mc.estimate}, {"stderr", mc.stdError}, {"bias_bound", mc.biasBound}, {"radius", radius},
              {"method", "monte_carlo"}});
      }
      return kOk;
    };
  });

  // crossterm
  std::string aSpec, bSpec;
  auto* x = app.add_subcommand("crossterm", "cross terms of two sets (files, or time ranges k:l of one walk)");
  x->add_option("--a", aSpec)->required();
  x->add_option("--b", bSpec)->required();
  x->add_option("--n", n, "walk length when ranges are given");
  x->add_option("--d", d);
  x->add_option("--seed", seed);
  x->callback([&] {
    action = [&] {
      PointSet A, B;
      if (aSpec.find(':') != std::string::npos) {
        const Walk w = simulate_walk(n, seed, d);
        const auto [ka, la] = parse_range(aSpec);
        const auto [kb, lb] = parse_range(bSpec);
        if (la > n || lb > n) throw UsageError("time range beyond n");
        A = range_of(w, ka, la);
        B = range_of(w, kb, lb);
      } else {
        A = read_point_set(aSpec);
        B = read_point_set(bSpec);
      }
      emit_header("crossterm", seed, A.d(), n, {{"a", aSpec}, {"b", bSpec}});
      const auto r = chi_variants(A, B);
      emit({{"chi_C", r.chiC},       {"chi_AB", r.chiAB},         {"chi_BA", r.chiBA},
            {"chi_bar", r.chiBar},   {"chi_tilde", r.chiTilde},   {"gamma", r.gammaAB},
            {"chi_zero", r.chiZero}, {"epsilon", r.epsilon},      {"cap_A", r.capA},
            {"cap_B", r.capB},       {"cap_union", r.capUnion},   {"cap_intersection", r.capIntersection}});
      return kOk;
    };
  });

  // corrector
  std::size_t inner = 0;
  bool perStep = false;
  auto* k = app.add_subcommand("corrector", "corrector xi_n(T), chi_n and optionally xi_n^*");
  k->add_option("--n", n)->required();
  k->add_option("--T", T);
  k->add_option("--d", d);
  k->add_option("--seed", seed);
  k->add_option("--inner", inner, "inner continuations for xi_n^* (0 to skip)");
  k->add_flag("--per-step", perStep, "emit the per-step terms");
  k->callback([&] {
    action = [&] {
      const Walk w = simulate_walk(n, seed, d);
      emit_header("corrector", seed, d, n, {{"T", T}, {"inner", inner}});
      CorrectorOptions opt;
      opt.maxN = std::max(opt.maxN, n);
      const auto tr = xi_n(w, T, opt);
      if (perStep)
        for (std::size_t s = 0; s < tr.perStep.size(); ++s) emit({{"k", s}, {"term", tr.perStep[s]}});
      json r = {{"xi", tr.total}, {"chi_n", chi_n(w, T)}, {"block_average_cap", block_average_capacity(w, T)},
                {"cap", capacity(range_of(w, 0, n))}};
      if (inner) {
        const auto est = xi_star_mc(w, T, inner, derive_seed(seed, 1));
        r["xi_star"] = est.estimate;
        r["xi_star_stderr"] = est.stdError;
      }
      emit(r);
      return kOk;
    };
  });

  // fold
  double delta = 0.25, confineL = 0;
  int I = 3;
  bool allowD6 = false;
  auto* f = app.add_subcommand("fold", "multiscale folding profile of a walk");
  f->add_option("--n", n)->required();
  f->add_option("--zeta", zeta)->required();
  f->add_option("--d", d);
  f->add_option("--seed", seed);
  f->add_option("--c0,--C0", C0);
  f->add_option("--delta", delta);
  f->add_option("--I", I);
  f->add_option("--confine", confineL, "keep the walk in a box of this side for zeta steps (conditioned sampler)");
  f->add_flag("--allow-d6", allowD6);
  f->callback([&] {
    action = [&] {
      const auto lad = ladder(d, n, zeta, C0, LadderVariant::Auto, allowD6);
      emit_header("fold", seed, d, n, {{"zeta", zeta}, {"C0", C0}, {"delta", delta}, {"I", I}, {"confine", confineL}});
      for (const auto& wmsg : lad.warnings) emit({{"type", "warning"}, {"message", wmsg}});
      Walk w;
      if (confineL > 0) {
        auto res = confine_sample(n, static_cast<std::int64_t>(confineL), seed, d, ConfineSampler::Conditioned, 1,
                                  static_cast<std::size_t>(zeta));
        w = *res.walk;
      } else {
        w = simulate_walk(n, seed, d);
      }
      const auto prof = fold_profile(w, lad);
      for (std::size_t q = 0; q < prof.index.size(); ++q) {
        const auto& lv = lad.level(prof.index[q]);
        emit({{"i", lv.i}, {"rho", lv.rho}, {"r", lv.r}, {"threshold", lv.threshold}, {"L", lv.L},
              {"raw", prof.rawLevel[q]}, {"count", prof.perLevel[q]}});
      }
      emit({{"residual", prof.residual}, {"fires", detector_fires(prof, lad, delta, I)}});
      return kOk;
    };
  });

  // confine
  std::int64_t L = 0;
  std::size_t count = 1, maxAttempts = 1000000;
  std::string sampler = "rejection";
  auto* cf = app.add_subcommand("confine", "walks kept inside a box");
  cf->add_option("--n", n)->required();
  cf->add_option("--L", L, "box side; taken from the strategy plan for --zeta when absent");
  cf->add_option("--zeta", zeta);
  cf->add_option("--d", d);
  cf->add_option("--seed", seed);
  cf->add_option("--count", count);
  cf->add_option("--max-attempts", maxAttempts);
  cf->add_option("--sampler", sampler)->check(CLI::IsMember({"rejection", "conditioned"}));
  cf->callback([&] {
    action = [&] {
      if (L <= 0) {
        if (!(zeta > 0)) throw UsageError("confine needs --L or --zeta");
        L = plan_strategy(d, n, zeta).box_side();
      }
      emit_header("confine", seed, d, n, {{"L", L}, {"count", count}, {"sampler", sampler}});
      const std::vector<double> surv = survival_curve(n, L, Point::origin(d));
      emit({{"type", "survival"}, {"probability", surv.back()}, {"rate", box_survival_rate(L, d)}});
      int code = kOk;
      for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t s = derive_seed(seed, i);
        const auto res = confine_sample(n, L, s, d,
                                        sampler == "conditioned" ? ConfineSampler::Conditioned : ConfineSampler::Rejection,
                                        maxAttempts);
        if (!res.walk) {
          emit({{"index", i}, {"seed", s}, {"ok", false}, {"attempts", res.attempts}});
          code = kPartial;
          continue;
        }
        emit({{"index", i}, {"seed", s}, {"ok", true}, {"cap", capacity(range_of(*res.walk, 0, n))},
              {"attempts", res.attempts}, {"approximate", res.approximate}});
      }
      return code;
    };
  });

  // deviate
  std::size_t samples = 100, meanSamples = 0;
  auto* dv = app.add_subcommand("deviate", "frequency of Cap(R_n) - E Cap(R_n) <= -zeta");
  dv->add_option("--n", n)->required();
  dv->add_option("--zeta", zeta)->required();
  dv->add_option("--samples", samples);
  dv->add_option("--mean-samples", meanSamples, "independent block for the centering mean (default: samples)");
  dv->add_option("--d", d);
  dv->add_option("--seed", seed);
  dv->callback([&] {
    action = [&] {
      emit_header("deviate", seed, d, n, {{"zeta", zeta}, {"samples", samples}, {"mean_samples", meanSamples}});
      const auto e = deviation_prob_mc(n, zeta, samples, d, seed, meanSamples);
      emit({{"estimate", e.estimate}, {"stderr", e.stdError}, {"lo", e.lo}, {"hi", e.hi}, {"events", e.events},
            {"samples", e.samples}, {"mean", e.mean}, {"mean_stderr", e.meanStdError}, {"one_sided", e.oneSided}});
      return kOk;
    };
  });

  // polymer
  std::vector<double> us{0, 0.5, 1, 2};
  auto* pm = app.add_subcommand("polymer", "polymer partition function Z_n(u)");
  pm->add_option("--n", n)->required();
  pm->add_option("--u", us, "one or more values of u");
  pm->add_option("--samples", samples);
  pm->add_option("--mean-samples", meanSamples);
  pm->add_option("--d", d);
  pm->add_option("--seed", seed);
  pm->callback([&] {
    action = [&] {
      emit_header("polymer", seed, d, n, {{"u", us}, {"samples", samples}, {"mean_samples", meanSamples}});
      const auto caps = free_capacities(n, d, seed, samples);
      const std::size_t ms = meanSamples ? meanSamples : samples;
      const auto meanCaps = free_capacities(n, d, derive_seed(seed, 0x6d65616e626c6b31ULL), ms);
      double mean = 0;
      for (double v : meanCaps) mean += v;
      mean /= static_cast<double>(ms);
      for (double u : us) {
        if (u < 0) throw UsageError("u must be non-negative");
        const auto z = polymer_Z_from(caps, mean, n, u, d);
        emit({{"u", u}, {"Z", z.estimate}, {"stderr", z.stdError}, {"mean", z.mean}, {"samples", z.samples}});
      }
      return kOk;
    };
  });

  // upward
  std::string method = "exact";
  std::size_t width = 50;
  bool all = false;
  auto* up = app.add_subcommand("upward", "c_n = max Cap over nearest-neighbour paths of n steps");
  up->add_option("--n", n)->required();
  up->add_option("--d", d);
  up->add_option("--method", method)->check(CLI::IsMember({"exact", "brute", "beam"}));
  up->add_option("--width", width);
  up->add_flag("--all", all, "every length from 0 to n");
  up->callback([&] {
    action = [&] {
      emit_header("upward", 0, d, n, {{"method", method}, {"width", width}});
      for (std::size_t m = all ? 0 : n; m <= n; ++m) {
        UpwardRecord r = method == "exact"   ? cn_exact(m, d)
                         : method == "brute" ? cn_bruteforce(m, d)
                                             : cn_beam(m, d, width);
        emit({{"n", r.n}, {"cn", r.cn}, {"per_step", r.n ? r.cn / static_cast<double>(r.n) : r.cn},
              {"method", r.method}, {"moves", r.moves}, {"evaluated", r.evaluated}});
      }
      return kOk;
    };
  });

  // run
  std::string configPath, output;
  std::vector<std::string> overrides;
  std::size_t workers = 0;
  auto* rn = app.add_subcommand("run", "seeded experiment from a key=value config");
  rn->add_option("--config", configPath);
  rn->add_option("--output", output);
  rn->add_option("--workers", workers);
  rn->add_option("overrides", overrides, "key=value pairs applied after the config file");
  rn->callback([&] {
    action = [&] {
      ExperimentConfig cfg = configPath.empty() ? ExperimentConfig{} : load_config(configPath);
      apply_overrides(cfg, overrides);
      if (!output.empty()) cfg.output = output;
      if (workers) cfg.workers = workers;
      const auto rec = run(cfg);
      if (cfg.output.empty()) {
        std::cout << rec.header << '\n';
        for (const auto& r : rec.rows) std::cout << row_json(r) << '\n';
      }
      std::cerr << "rows " << rec.rows.size() << "  mean " << format_double(rec.summary.mean) << "  stderr "
                << format_double(rec.summary.stdError) << (rec.note.empty() ? "" : "  (" + rec.note + ")") << '\n';
      return rec.complete ? kOk : kPartial;
    };
  });

  // summarize
  std::vector<std::string> inputs;
  std::string csvPath;
  auto* sm = app.add_subcommand("summarize", "pool several run outputs");
  sm->add_option("inputs", inputs)->required();
  sm->add_option("--csv", csvPath, "also write the CSV table here");
  sm->callback([&] {
    action = [&] {
      const auto rep = summarize(inputs);
      std::cout << rep.to_json() << '\n';
      if (!csvPath.empty()) {
        std::ofstream out(csvPath);
        if (!out) throw UsageError("cannot write " + csvPath);
        out << rep.to_csv();
      }
      for (const auto& p : rep.problems) std::cerr << "truncated: " << p << '\n';
      return rep.problems.empty() ? kOk : kPartial;
    };
  });

  app.add_subcommand("selftest", "exact identity checks")->callback([&] { action = selftest; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
}
