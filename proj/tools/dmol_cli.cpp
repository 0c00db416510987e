// Command-line front end: forward solves, convergence studies, measurement
// synthesis, and coefficient inversion, all driven by JSON config files.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "dmol/config.hpp"
#include "dmol/forward.hpp"
#include "dmol/inverse.hpp"

using namespace dmol;

namespace {

json tensor_to_json(const AnisoTensor& a) {
  return json::array({a.a11, a.a22, a.a33, a.a12, a.a13, a.a23});
}

json material_to_json(const PiecewiseMaterial& mat) {
  json sectors = json::array();
  for (const auto& s : mat.sectors)
    sectors.push_back({{"start", s.start},
                       {"end", s.end},
                       {"tensor", tensor_to_json(s.tensor)}});
  return sectors;
}

int run_forward(const std::string& cfg_path, const std::string& out_path) {
  RunConfig cfg = load_run_config(cfg_path);
  ForwardProblem pb = config_forward_problem(cfg);
  ModalSolution sol = solve_forward(pb);

  json out;
  out["M"] = cfg.M;
  out["order"] = cfg.order;
  out["trace_residual"] = sol.trace_residual;
  json modes = json::array();
  for (double g : sol.modes.real_gammas)
    modes.push_back({{"gamma_re", g}, {"gamma_im", 0.0}});
  for (const auto& g : sol.modes.pair_gammas)
    modes.push_back({{"gamma_re", g.real()}, {"gamma_im", g.imag()}});
  out["modes"] = modes;
  // displacement samples on a coarse polar grid, for plotting
  json samples = json::array();
  double lo = cfg.domain.boundary.range_start(),
         hi = cfg.domain.boundary.range_end();
  for (int i = 0; i <= 24; ++i) {
    double rho = -6.0 + 6.0 * i / 24;
    for (int j = 0; j < 96; ++j) {
      double phi = lo + (hi - lo) * (j + 0.5) / 96;
      Eigen::Vector2d u = sol.evaluate(rho, phi);
      auto [x, y] = map_to_cartesian(cfg.domain.boundary, rho, phi);
      samples.push_back({x, y, u(0), u(1)});
    }
  }
  out["samples"] = samples;
  write_text_file(out_path, out.dump(2) + "\n");
  std::printf("forward: M=%d order=%d modes=%d trace_residual=%s\n", cfg.M,
              cfg.order, sol.modes.real_count() + sol.modes.pair_count(),
              full_precision(sol.trace_residual).c_str());
  return 0;
}

int run_convergence(const std::string& cfg_path, const std::string& out_path) {
  RunConfig cfg = load_run_config(cfg_path);
  if (cfg.M_list.empty())
    throw ConfigError("config: convergence run needs M_list");
  ForwardProblem pb = config_forward_problem(cfg);

  std::string csv = "M,gamma3,gamma3_error,h1_error\n";
  ModalSolution ref;
  bool have_ref = cfg.gamma3_reference > 0.0;
  bool exact_ref = cfg.dirichlet_crack_exact;
  double gamma_ref = cfg.gamma3_reference;
  ReferenceField exact_field;
  if (exact_ref) {
    exact_field = exact_crack_solution(cfg.materials[0]).as_reference();
  } else if (have_ref) {
    // reference field: quadratic elements on the finest requested mesh x4
    ForwardProblem rp = pb;
    rp.M = cfg.M_list.back() * 4;
    rp.order = 2;
    rp.max_trace_residual = 2e-3;
    ref = solve_forward(rp);
  }
  StripQuadrature quad;
  quad.rho_min = -12.0;
  for (int M : cfg.M_list) {
    ForwardProblem p = pb;
    p.M = M;
    ModalSolution sol = solve_forward(p);
    double g3 = 0.0, ge = 0.0, h1 = 0.0;
    if (have_ref) {
      g3 = eigenvalue_cluster_mean(sol, gamma_ref);
      ge = std::abs(g3 - gamma_ref);
      h1 = exact_ref ? h1_relative_error(sol, exact_field, quad)
                     : h1_relative_error(sol, ref, quad);
    }
    csv += std::to_string(M) + "," + full_precision(g3) + "," +
           full_precision(ge) + "," + full_precision(h1) + "\n";
    std::printf("M=%4d gamma3=%s err=%s h1=%s\n", M, full_precision(g3).c_str(),
                full_precision(ge).c_str(), full_precision(h1).c_str());
  }
  write_text_file(out_path, csv);
  return 0;
}

int run_synthesize(const std::string& cfg_path, const std::string& out_path) {
  RunConfig cfg = load_run_config(cfg_path);
  ForwardProblem pb = config_forward_problem(cfg);
  pb.material = config_truth_material(cfg);
  pb.extra_mesh_nodes = pb.material.boundaries();
  ModalSolution sol = solve_forward(pb);
  QuadGrid grid =
      QuadGrid::make(cfg.domain.boundary, cfg.grid_rho_min, cfg.grid_rho_panels,
                     cfg.grid_rho_gauss, cfg.grid_phi_intervals,
                     cfg.grid_phi_gauss);
  MeasurementField z = synthesize_measurements(sol, grid, cfg.delta, cfg.seed);
  write_text_file(out_path,
                  measurement_to_json(z, material_hash(pb.material)).dump() + "\n");
  std::printf("synthesize: delta=%s seed=%llu grid=%dx%d -> %s\n",
              full_precision(cfg.delta).c_str(),
              static_cast<unsigned long long>(cfg.seed), grid.n_rho(),
              grid.n_phi(), out_path.c_str());
  return 0;
}

int run_invert(const std::string& cfg_path, const std::string& meas_path,
               const std::string& out_path) {
  RunConfig cfg = load_run_config(cfg_path);
  if (!cfg.has_inverse)
    throw ConfigError("config: invert run needs an 'inverse' block");

  std::ifstream in(meas_path);
  if (!in) throw ConfigError("cannot open measurement file '" + meas_path + "'");
  json mj;
  try {
    in >> mj;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("measurement file: parse error: ") + e.what());
  }
  MeasurementField z = measurement_from_json(mj, cfg.domain.boundary);

  InversionProblem ip;
  ip.domain = cfg.domain;
  ip.dirichlet = config_dirichlet(cfg);
  ip.body_force = cfg.body_force;

  // truth on the inversion grid, for the error column (when provided)
  PiecewiseMaterial truth = config_truth_material(cfg);
  PiecewiseMaterial truth_m = cfg.inverse.init;
  for (auto& s : truth_m.sectors)
    s.tensor = truth.tensor_at(0.5 * (s.start + s.end));

  InverseState st = run_inversion(cfg.inverse, ip, z, &truth_m);

  json out;
  out["iterations"] = st.k;
  out["final_material"] = material_to_json(st.a_h);
  json hist = json::array();
  for (const auto& r : st.history)
    hist.push_back({{"k", r.k},
                    {"J", r.J},
                    {"J0", r.J0},
                    {"tv", r.tv},
                    {"grad_inf", r.grad_inf},
                    {"l1_rel_error", r.l1_rel_error}});
  out["history"] = hist;
  write_text_file(out_path, out.dump(2) + "\n");
  const auto& last = st.history.back();
  std::printf("invert: iterations=%d J=%s l1_rel_error=%s\n", st.k,
              full_precision(last.J).c_str(),
              full_precision(last.l1_rel_error).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-analytical elasticity solver and coefficient inversion"};
  app.require_subcommand(1);

  std::string cfg_path, out_path = "out.json", meas_path;

  auto* fwd = app.add_subcommand("forward", "solve one forward problem");
  fwd->add_option("-c,--config", cfg_path, "JSON config")->required();
  fwd->add_option("-o,--output", out_path, "output JSON path");

  auto* conv = app.add_subcommand("convergence", "mesh refinement study");
  conv->add_option("-c,--config", cfg_path, "JSON config")->required();
  conv->add_option("-o,--output", out_path, "output CSV path");

  auto* synth = app.add_subcommand("synthesize", "generate noisy measurements");
  synth->add_option("-c,--config", cfg_path, "JSON config")->required();
  synth->add_option("-o,--output", out_path, "measurement JSON path");

  auto* inv = app.add_subcommand("invert", "reconstruct coefficients");
  inv->add_option("-c,--config", cfg_path, "JSON config")->required();
  inv->add_option("-m,--measurement", meas_path, "measurement JSON")->required();
  inv->add_option("-o,--output", out_path, "output JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fwd->parsed()) return run_forward(cfg_path, out_path);
    if (conv->parsed()) return run_convergence(cfg_path, out_path);
    if (synth->parsed()) return run_synthesize(cfg_path, out_path);
    if (inv->parsed()) return run_invert(cfg_path, meas_path, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
