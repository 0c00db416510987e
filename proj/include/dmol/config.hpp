#pragma once

// JSON-backed run configuration and artifact writers for the command-line
// front end. A single config file drives every experiment so that artifacts
// are reproducible from checked-in inputs.

#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmol/forward.hpp"
#include "dmol/inverse.hpp"

namespace dmol {

using nlohmann::json;

struct RunConfig {
  DomainSpec domain;
  std::vector<AnisoTensor> materials;  // one per interface sector
  Eigen::Vector2d dirichlet_constant{1.0, 1.0};
  bool dirichlet_crack_exact = false;  // use the exact slit-tip field as data
  BodyForce body_force;
  int M = 64;
  int order = 1;
  double max_trace_residual = 1e-8;
  std::vector<int> M_list;  // for convergence runs
  double gamma3_reference = 0.0;

  // inverse block
  InverseConfig inverse;
  bool has_inverse = false;
  std::vector<AnisoTensor> truth_materials;  // defaults to `materials`
  double delta = 0.0;
  std::uint64_t seed = 1;
  // measurement grid
  double grid_rho_min = -12.0;
  int grid_rho_panels = 48, grid_rho_gauss = 3;
  int grid_phi_intervals = 256, grid_phi_gauss = 2;
};

namespace detail {

inline ConfigError missing(const std::string& path) {
  return ConfigError("config: missing or invalid field '" + path + "'");
}

inline AnisoTensor tensor_from_json(const json& j, const std::string& path) {
  // Either the six coefficients [a11, a22, a33, a12, a13, a23] or an object.
  if (j.is_array()) {
    if (j.size() != 6) throw missing(path);
    return AnisoTensor{j[0], j[1], j[2], j[3], j[4], j[5]};
  }
  if (j.is_object()) {
    auto g = [&](const char* k) -> double {
      if (!j.contains(k)) throw missing(path + "." + k);
      return j[k];
    };
    return AnisoTensor{g("a11"), g("a22"), g("a33"),
                       g("a12"), g("a13"), g("a23")};
  }
  throw missing(path);
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  if (!j.contains("shape") || !j["shape"].is_string())
    throw detail::missing("shape");
  cfg.domain.boundary = preset_shape(j["shape"].get<std::string>());
  if (!j.contains("interfaces") || !j["interfaces"].is_array())
    throw detail::missing("interfaces");
  for (const auto& v : j["interfaces"])
    cfg.domain.interfaces.push_back(v.get<double>());
  cfg.domain.validate();

  if (!j.contains("materials") || !j["materials"].is_array() ||
      j["materials"].empty())
    throw detail::missing("materials");
  int idx = 0;
  for (const auto& mj : j["materials"])
    cfg.materials.push_back(
        detail::tensor_from_json(mj, "materials[" + std::to_string(idx++) + "]"));
  if (cfg.materials.size() != cfg.domain.interfaces.size())
    throw ConfigError("config: materials count (" +
                      std::to_string(cfg.materials.size()) +
                      ") must match interfaces count (" +
                      std::to_string(cfg.domain.interfaces.size()) + ")");

  if (j.contains("dirichlet")) {
    const json& d = j["dirichlet"];
    if (d.is_string() && d.get<std::string>() == "crack_exact")
      cfg.dirichlet_crack_exact = true;
    else if (d.is_array() && d.size() == 2)
      cfg.dirichlet_constant = Eigen::Vector2d(d[0], d[1]);
    else
      throw detail::missing("dirichlet");
  }

  if (j.contains("body_force")) {
    const json& b = j["body_force"];
    if (b.is_string()) {
      std::string s = b.get<std::string>();
      if (s == "none")
        cfg.body_force = BodyForce::none();
      else if (s == "radial_unit")
        cfg.body_force = BodyForce::radial_unit();
      else
        throw detail::missing("body_force");
    } else if (b.is_array() && b.size() == 2) {
      cfg.body_force = BodyForce::constant(
          Eigen::Vector2d(b[0].get<double>(), b[1].get<double>()));
    } else {
      throw detail::missing("body_force");
    }
  }

  cfg.M = j.value("M", 64);
  cfg.order = j.value("order", 1);
  cfg.max_trace_residual = j.value("max_trace_residual", 1e-8);
  if (cfg.order != 1 && cfg.order != 2)
    throw ConfigError("config: order must be 1 or 2");
  if (j.contains("M_list"))
    for (const auto& v : j["M_list"]) cfg.M_list.push_back(v.get<int>());
  cfg.gamma3_reference = j.value("gamma3_reference", 0.0);
  if (j.contains("truth_materials")) {
    int ti = 0;
    for (const auto& mj : j["truth_materials"])
      cfg.truth_materials.push_back(detail::tensor_from_json(
          mj, "truth_materials[" + std::to_string(ti++) + "]"));
    if (cfg.truth_materials.size() != cfg.domain.interfaces.size())
      throw ConfigError(
          "config: truth_materials count must match interfaces count");
  }
  cfg.delta = j.value("delta", 0.0);
  cfg.seed = j.value("seed", std::uint64_t{1});

  if (j.contains("grid")) {
    const json& g = j["grid"];
    cfg.grid_rho_min = g.value("rho_min", -12.0);
    cfg.grid_rho_panels = g.value("rho_panels", 48);
    cfg.grid_rho_gauss = g.value("rho_gauss", 3);
    cfg.grid_phi_intervals = g.value("phi_intervals", 256);
    cfg.grid_phi_gauss = g.value("phi_gauss", 2);
  }

  if (j.contains("inverse")) {
    const json& iv = j["inverse"];
    cfg.has_inverse = true;
    InverseConfig& ic = cfg.inverse;
    ic.m = iv.value("m", 16);
    ic.eta = iv.value("eta", 1e-7);
    ic.tol = iv.value("tol", 1e-5);
    ic.max_iter = iv.value("max_iter", 2000);
    ic.spd_floor = iv.value("spd_floor", 1e-6);
    ic.forward_M = iv.value("forward_M", 128);
    ic.forward_order = iv.value("forward_order", 1);
    ic.adam.beta1 = iv.value("beta1", 0.9);
    ic.adam.beta2 = iv.value("beta2", 0.999);
    ic.adam.tau0 = iv.value("tau0", 0.0);
    ic.adam.decay_iters = iv.value("decay_iters", 50.0);
    ic.adam.decay_factor = iv.value("decay_factor", 1.0);
    if (!iv.contains("init"))
      throw detail::missing("inverse.init");
    AnisoTensor init = detail::tensor_from_json(iv["init"], "inverse.init");
    ic.init = PiecewiseMaterial::uniform_sectors(
        cfg.domain.boundary.range_start(), cfg.domain.boundary.range_end(),
        ic.m, init);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: JSON parse error in '" + path + "': " + e.what());
  }
  return parse_run_config(j);
}

inline PiecewiseMaterial config_material(const RunConfig& cfg) {
  return PiecewiseMaterial::over_domain(cfg.domain, cfg.materials);
}

inline PiecewiseMaterial config_truth_material(const RunConfig& cfg) {
  const auto& ts = cfg.truth_materials.empty() ? cfg.materials
                                               : cfg.truth_materials;
  return PiecewiseMaterial::over_domain(cfg.domain, ts);
}

inline std::function<Eigen::Vector2d(double)> config_dirichlet(
    const RunConfig& cfg) {
  if (cfg.dirichlet_crack_exact) {
    if (cfg.materials.size() != 1)
      throw ConfigError("config: crack_exact data needs a single material");
    ExactCrackSolution ex = exact_crack_solution(cfg.materials[0]);
    BoundaryShape shape = cfg.domain.boundary;
    return [ex, shape](double phi) {
      auto [x, y] = map_to_cartesian(shape, 0.0, phi);
      return ex.value(x, y);
    };
  }
  Eigen::Vector2d g = cfg.dirichlet_constant;
  return [g](double) { return g; };
}

inline ForwardProblem config_forward_problem(const RunConfig& cfg) {
  ForwardProblem pb;
  pb.domain = cfg.domain;
  pb.material = config_material(cfg);
  pb.dirichlet = config_dirichlet(cfg);
  pb.body_force = cfg.body_force;
  pb.M = cfg.M;
  pb.order = cfg.order;
  pb.max_trace_residual = cfg.max_trace_residual;
  return pb;
}

// --- numeric formatting: 17 significant digits for all artifacts ---

inline std::string full_precision(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(16) << x;
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  out << body;
}

// --- measurement container: versioned JSON with provenance ---

inline std::uint64_t material_hash(const PiecewiseMaterial& mat) {
  // FNV-1a over the exact coefficient bytes.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& s : mat.sectors) {
    mix(s.start);
    mix(s.tensor.a11);
    mix(s.tensor.a22);
    mix(s.tensor.a33);
    mix(s.tensor.a12);
    mix(s.tensor.a13);
    mix(s.tensor.a23);
  }
  return h;
}

inline json measurement_to_json(const MeasurementField& z,
                                std::uint64_t truth_hash) {
  json j;
  j["format"] = "dmol-measurement";
  j["version"] = 1;
  j["delta"] = z.delta;
  j["seed"] = z.seed;
  j["truth_material_hash"] = truth_hash;
  j["grid"] = {{"rho_min", z.grid.rho_min},
               {"rho_panels", z.grid.rho_panels},
               {"rho_gauss", z.grid.rho_gauss},
               {"phi_intervals", z.grid.phi_intervals},
               {"phi_gauss", z.grid.phi_gauss}};
  auto dump = [](const Eigen::MatrixXd& m) {
    std::vector<double> v(m.data(), m.data() + m.size());
    return v;
  };
  j["rows"] = z.z1.rows();
  j["cols"] = z.z1.cols();
  j["z1"] = dump(z.z1);
  j["z2"] = dump(z.z2);
  j["g1x"] = dump(z.g1x);
  j["g1y"] = dump(z.g1y);
  j["g2x"] = dump(z.g2x);
  j["g2y"] = dump(z.g2y);
  return j;
}

inline MeasurementField measurement_from_json(const json& j,
                                              const BoundaryShape& shape) {
  if (j.value("format", "") != "dmol-measurement" || j.value("version", 0) != 1)
    throw ConfigError("measurement file: unknown format or version");
  MeasurementField z;
  const json& g = j.at("grid");
  z.grid = QuadGrid::make(shape, g.at("rho_min"), g.at("rho_panels"),
                          g.at("rho_gauss"), g.at("phi_intervals"),
                          g.at("phi_gauss"));
  z.delta = j.at("delta");
  z.seed = j.at("seed");
  int r = j.at("rows"), c = j.at("cols");
  auto load = [&](const char* k) {
    std::vector<double> v = j.at(k).get<std::vector<double>>();
    if (static_cast<int>(v.size()) != r * c)
      throw ConfigError(std::string("measurement file: bad size for ") + k);
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), r, c).eval();
  };
  z.z1 = load("z1");
  z.z2 = load("z2");
  z.g1x = load("g1x");
  z.g1y = load("g1y");
  z.g2x = load("g2x");
  z.g2y = load("g2y");
  return z;
}

}  // namespace dmol
