#pragma once

// Pipeline driver: one stage per invocation, JSON configuration with schema
// validation, file outputs plus a resolved-config echo.

#include "json.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qstrong/ati.hpp"
#include "qstrong/errors.hpp"
#include "qstrong/hhg.hpp"
#include "qstrong/io.hpp"
#include "qstrong/qspec.hpp"
#include "qstrong/quantum_state.hpp"
#include "qstrong/tomography.hpp"

namespace qstrong::cli {

using nlohmann::json;

enum class Kind { real, integer, boolean, string, complex, int_list, complex_list, coeff_list, path };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::real: return "real";
    case Kind::integer: return "integer";
    case Kind::boolean: return "boolean";
    case Kind::string: return "string";
    case Kind::complex: return "complex [re, im]";
    case Kind::int_list: return "list of integers";
    case Kind::complex_list: return "list of [re, im]";
    case Kind::coeff_list: return "list of [A_re, A_im, B_re, B_im]";
    case Kind::path: return "path";
  }
  return "?";
}

struct Param {
  std::string name;
  Kind kind;
  json def;  // null: optional, unset by default
  std::string unit;
  std::string help;
  std::vector<std::string> choices = {};
};

struct Stage {
  std::string name;
  std::string summary;
  bool randomized;
  std::vector<Param> params;
};

namespace impl {

inline json cpx(double re, double im) { return json::array({re, im}); }

inline std::vector<Param> laser_params(const std::string& envelope = "sin2") {
  return {
      {"E0", Kind::real, 0.053, "a.u.", "peak field amplitude"},
      {"omega", Kind::real, 0.057, "a.u.", "carrier angular frequency"},
      {"Ip", Kind::real, 0.5, "a.u.", "ionization potential"},
      {"n_cycles", Kind::real, 12.0, "cycles", "pulse window (integer for sin2)"},
      {"envelope", Kind::string, envelope, "", "pulse envelope", {"sin2", "gaussian", "flat"}},
      {"fwhm_cycles", Kind::real, 4.0, "cycles", "gaussian envelope FWHM"},
      {"g", Kind::real, 0.1, "a.u.", "field-mode coupling constant"},
      {"n_atoms", Kind::integer, 1, "", "number of emitters N"},
      {"alpha_L", Kind::complex, cpx(28.0, 0.0), "", "initial coherent amplitude of the driving mode"},
  };
}

inline std::vector<Param> grid_params(double x_min, double x_max, double p_min, double p_max, int n) {
  return {
      {"x_min", Kind::real, x_min, "quadrature", "grid lower x"},
      {"x_max", Kind::real, x_max, "quadrature", "grid upper x"},
      {"p_min", Kind::real, p_min, "quadrature", "grid lower p"},
      {"p_max", Kind::real, p_max, "quadrature", "grid upper p"},
      {"nx", Kind::integer, n, "", "grid points along x"},
      {"np", Kind::integer, n, "", "grid points along p"},
  };
}

inline std::vector<Param> cat_params() {
  return {
      {"abs_alpha", Kind::real, 1.4, "", "|alpha| of the driving mode after attenuation"},
      {"abs_delta_alpha", Kind::real, 0.5, "", "|delta_alpha| coherent shift magnitude"},
      {"relative_phase", Kind::real, pi, "rad", "arg(delta_alpha) - arg(alpha), pi is antiparallel"},
  };
}

inline std::vector<Param> dipole_numerics() {
  return {
      {"points_per_cycle", Kind::integer, 256, "", "dipole samples per optical cycle (>= 200 for the shift)"},
      {"epsilon", Kind::real, 1e-4, "a.u.", "regularization of the spreading factor"},
      {"horizon_cycles", Kind::real, 1.0, "cycles", "longest excursion time kept"},
      {"charge", Kind::real, -1.0, "e", "particle charge (-1 electron, +1 as printed)"},
  };
}

inline std::vector<Param> join(std::initializer_list<std::vector<Param>> parts) {
  std::vector<Param> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

} // namespace impl

inline const std::vector<Stage>& stages() {
  using impl::join;
  static const std::vector<Stage> s = {
      {"dipole", "SFA induced dipole d_H(t) over the pulse (optionally saddle points)", false,
       join({impl::laser_params(), impl::dipole_numerics(),
             {{"saddle_orders", Kind::int_list, json::array(), "", "harmonic orders whose saddle points are exported"}}})},
      {"shift", "coherent shift delta_alpha(t), harmonic amplitudes and quadrature trace", false,
       join({impl::laser_params(), impl::dipole_numerics(),
             {{"dipole_file", Kind::path, nullptr, "", "t_au,d_au CSV; computed when absent"},
              {"orders", Kind::int_list, json::array(), "", "harmonic orders (empty: 2 .. cutoff)"}}})},
      {"spectrum", "harmonic spectrum N^2 w^4 |d(w)|^2", false,
       join({impl::laser_params(), impl::dipole_numerics(),
             {{"dipole_file", Kind::path, nullptr, "", "t_au,d_au CSV; computed when absent"},
              {"max_order", Kind::real, 40.0, "harmonic order", "upper end of the frequency grid"},
              {"n_omega", Kind::integer, 2000, "", "frequency samples"}}})},
      {"photon-stats", "photon statistics: conditioned cat P(n) or cycle-averaged absorption P~_n", false,
       join({{{"source", Kind::string, "cat", "", "which distribution", {"cat", "sfa"}},
              {"n_max", Kind::integer, 60, "", "largest photon number reported"}},
             impl::cat_params(), impl::laser_params(), impl::dipole_numerics(),
             {{"cycle_start", Kind::real, nullptr, "a.u.", "start of the averaging cycle (default: central cycle)"}}})},
      {"cat", "Wigner function of the conditioned cat (or kitten limit)", false,
       join({impl::cat_params(), {{"kitten", Kind::boolean, false, "", "use the displaced one-photon limit"}},
             impl::grid_params(-6.0, 6.0, -6.0, 6.0, 121)})},
      {"ati-single", "single-ionization ATI Wigner function", false,
       join({{{"n_halfcycles", Kind::integer, 8, "", "number of ionizing half-cycles"},
              {"delta", Kind::complex, impl::cpx(0.5, 0.0), "", "per-half-cycle coherent shift, |delta| < 0.95"},
              {"v", Kind::real, 0.0, "a.u.", "photoelectron drift momentum"},
              {"coeffs", Kind::coeff_list, nullptr, "", "explicit (A_j, B_j); computed from a flat field when absent"}},
             impl::laser_params("flat"), impl::grid_params(-5.0, 11.0, -8.0, 8.0, 161)})},
      {"ati-total", "momentum-integrated ATI Wigner function", false,
       join({{{"delta_alpha", Kind::complex, impl::cpx(0.1, 0.0), "", "coherent shift of the ionized component"},
              {"weights", Kind::complex_list, json::array({impl::cpx(1, 0), impl::cpx(1, 0), impl::cpx(1, 0), impl::cpx(1, 0)}),
               "", "w1..w4 of the xG/pG mixture"}},
             impl::grid_params(-6.0, 6.0, -6.0, 6.0, 121)})},
      {"tomo-sim", "homodyne samples from the conditioned cat", true,
       join({impl::cat_params(),
             {{"n_phases", Kind::integer, 20, "", "equally spaced phases in [0, pi)"},
              {"shots_per_phase", Kind::integer, 2000, "", "samples per phase"},
              {"table_points", Kind::integer, 8001, "", "inverse-CDF table size"}}})},
      {"tomo-fbp", "filtered back-projection Wigner reconstruction", false,
       join({{{"dataset_file", Kind::path, "dataset.csv", "", "phi_rad,x CSV"},
              {"kc", Kind::real, tomo::default_kc, "1/quadrature", "kernel cutoff k_c"},
              {"line_step", Kind::real, 0.01, "quadrature", "tabulation step of the per-phase kernel sums"},
              {"compare_to_cat", Kind::boolean, false, "", "report errors against the analytic cat below"}},
             impl::cat_params(), impl::grid_params(-5.0, 5.0, -5.0, 5.0, 101)})},
      {"tomo-mle", "maximum-likelihood density matrix", false,
       {{"dataset_file", Kind::path, "dataset.csv", "", "phi_rad,x CSV"},
        {"n_max", Kind::integer, 25, "", "Fock cutoff"},
        {"max_iterations", Kind::integer, 3000, "", "iteration limit"},
        {"tolerance", Kind::real, 1e-8, "", "stop when the mean log-likelihood gains less"},
        {"bin_width", Kind::real, 0.02, "quadrature", "sample binning per phase"},
        {"dilution", Kind::real, 1.0, "", "initial dilution step"}}},
      {"qs", "shot selection along the anti-correlation diagonal and absorption histogram", false,
       {{"shots_file", Kind::path, nullptr, "", "shot CSV; synthetic shots are generated when absent (needs a seed)"},
        {"normalize_energy", Kind::boolean, true, "", "divide signals by i_0 / median(i_0)"},
        {"energy_gate", Kind::real, nullptr, "relative", "keep shots with |i_0/median - 1| <= gate"},
        {"half_width_sigmas", Kind::real, 1.0, "residual sigma", "selection band half-width"},
        {"bin_width", Kind::real, 0.05, "photons", "histogram bin width"},
        {"reference_level", Kind::real, 20.0, "arb.", "i_out with no absorption"},
        {"gain", Kind::real, 1.0, "photons per unit i_out", "detector calibration"},
        {"spacing_guess", Kind::real, 1.0, "photons", "comb spacing initial guess"},
        {"n_peaks", Kind::integer, 9, "", "peaks in the comb fit"},
        {"subtract_background", Kind::boolean, true, "", "fit and remove the broad background"},
        {"n_shots", Kind::integer, 4000, "", "generator: number of shots"},
        {"signal_fraction", Kind::real, 0.5, "", "generator: correlated fraction"},
        {"continuum_fraction", Kind::real, 0.2, "", "generator: broad share of the correlated shots"},
        {"n_atoms", Kind::integer, 1, "", "generator: emitters N (yield ~ N^2)"},
        {"yield_per_atom2", Kind::real, 1.0, "", "generator: Y / N^2"},
        {"shift_per_sqrt_yield", Kind::real, 2.0, "", "generator: |delta_alpha| / sqrt(Y)"},
        {"comb_spacing", Kind::real, 1.0, "arb.", "generator: i_out drop per photon"},
        {"peak_width", Kind::real, 0.12, "arb.", "generator: i_out noise"},
        {"hh_gain", Kind::real, 1.0, "", "generator: i_hh per unit drop per unit yield"},
        {"hh_noise", Kind::real, 0.1, "arb.", "generator: i_hh noise"},
        {"continuum_width", Kind::real, 2.0, "arb.", "generator: broad correlated spread"},
        {"background_width", Kind::real, 5.0, "arb.", "generator: uncorrelated spread"},
        {"energy_jitter", Kind::real, 0.01, "relative", "generator: shot-to-shot energy noise"}}},
      {"pipeline", "tomo-sim -> tomo-fbp (-> tomo-mle) round trip on the conditioned cat", true,
       join({impl::cat_params(),
             {{"n_phases", Kind::integer, 20, "", "equally spaced phases in [0, pi)"},
              {"shots_per_phase", Kind::integer, 2000, "", "samples per phase"},
              {"kc", Kind::real, tomo::default_kc, "1/quadrature", "kernel cutoff k_c"},
              {"run_mle", Kind::boolean, true, "", "also reconstruct the density matrix"},
              {"n_max", Kind::integer, 25, "", "Fock cutoff of the ML step"},
              {"max_iterations", Kind::integer, 3000, "", "ML iteration limit"}},
             impl::grid_params(-5.0, 5.0, -5.0, 5.0, 101)})},
  };
  return s;
}

inline const Stage& find_stage(const std::string& name) {
  for (const auto& s : stages())
    if (s.name == name) return s;
  std::string known;
  for (const auto& s : stages()) known += (known.empty() ? "" : "|") + s.name;
  throw ValidationError("unknown stage '" + name + "' (expected " + known + ")");
}

inline std::string describe(const std::string& stage) {
  const Stage& s = find_stage(stage);
  std::ostringstream os;
  os << "stage " << s.name << ": " << s.summary << "\n";
  os << "seed: " << (s.randomized ? "required" : "not used") << "\n";
  os << "params:\n";
  for (const auto& p : s.params) {
    os << "  " << p.name << "  (" << kind_name(p.kind) << (p.unit.empty() ? "" : ", " + p.unit) << ")  default "
       << (p.def.is_null() ? std::string("unset") : p.def.dump());
    if (!p.choices.empty()) {
      os << "  one of";
      for (const auto& c : p.choices) os << " " << c;
    }
    os << "  " << p.help << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// config resolution

struct RunConfig {
  std::string stage;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "out";
  json params = json::object();  // fully resolved

  json to_json() const {
    json j{{"stage", stage}, {"output_dir", output_dir}, {"params", params}};
    if (seed) j["seed"] = *seed;
    return j;
  }
};

namespace impl {

inline bool is_complex(const json& v) { return v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(); }

inline void check_kind(const Param& p, const json& v, const std::string& stage) {
  const std::string where = stage + "." + p.name;
  auto fail = [&](const std::string& what) { throw ValidationError(where + ": expected " + what); };
  switch (p.kind) {
    case Kind::real:
      if (!v.is_number()) fail("a number");
      if (!std::isfinite(v.get<double>())) fail("a finite number");
      break;
    case Kind::integer:
      if (!v.is_number_integer()) fail("an integer");
      break;
    case Kind::boolean:
      if (!v.is_boolean()) fail("true or false");
      break;
    case Kind::string:
    case Kind::path:
      if (!v.is_string()) fail("a string");
      if (!p.choices.empty() && std::find(p.choices.begin(), p.choices.end(), v.get<std::string>()) == p.choices.end())
        fail("one of the listed choices");
      break;
    case Kind::complex:
      if (!is_complex(v)) fail("[re, im]");
      break;
    case Kind::int_list:
      if (!v.is_array()) fail("a list of integers");
      for (const auto& e : v)
        if (!e.is_number_integer()) fail("a list of integers");
      break;
    case Kind::complex_list:
      if (!v.is_array()) fail("a list of [re, im]");
      for (const auto& e : v)
        if (!is_complex(e)) fail("a list of [re, im]");
      break;
    case Kind::coeff_list:
      if (!v.is_array()) fail("a list of [A_re, A_im, B_re, B_im]");
      for (const auto& e : v)
        if (!e.is_array() || e.size() != 4 || !std::all_of(e.begin(), e.end(), [](const json& q) { return q.is_number(); }))
          fail("a list of [A_re, A_im, B_re, B_im]");
      break;
  }
}

} // namespace impl

/// Validates a raw config document and fills defaults. Command-line values
/// (stage, seed, out) take precedence over the document.
inline RunConfig resolve_config(const json& doc, const std::optional<std::string>& stage_flag,
                                const std::optional<std::uint64_t>& seed_flag, const std::optional<std::string>& out_flag) {
  if (!doc.is_object()) throw ValidationError("config: top level must be an object");
  for (const auto& [k, v] : doc.items())
    if (k != "stage" && k != "seed" && k != "output_dir" && k != "params") throw ValidationError("config: unknown key '" + k + "'");
  RunConfig rc;
  if (stage_flag) rc.stage = *stage_flag;
  else if (doc.contains("stage") && doc["stage"].is_string()) rc.stage = doc["stage"].get<std::string>();
  else throw ValidationError("config: no stage given (use --stage or a \"stage\" key)");
  const Stage& st = find_stage(rc.stage);

  if (seed_flag) rc.seed = seed_flag;
  else if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw ValidationError("config: seed must be a non-negative integer");
    rc.seed = doc["seed"].get<std::uint64_t>();
  }
  if (st.randomized && !rc.seed) throw ValidationError(rc.stage + ": randomized stage requires an explicit seed (--seed or \"seed\")");

  if (out_flag) rc.output_dir = *out_flag;
  else if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) throw ValidationError("config: output_dir must be a string");
    rc.output_dir = doc["output_dir"].get<std::string>();
  }

  const json given = doc.contains("params") ? doc["params"] : json::object();
  if (!given.is_object()) throw ValidationError("config: params must be an object");
  for (const auto& [k, v] : given.items()) {
    auto it = std::find_if(st.params.begin(), st.params.end(), [&](const Param& p) { return p.name == k; });
    if (it == st.params.end()) throw ValidationError(rc.stage + ": unknown parameter '" + k + "'");
  }
  for (const auto& p : st.params) {
    if (given.contains(p.name) && !given[p.name].is_null()) {
      impl::check_kind(p, given[p.name], rc.stage);
      rc.params[p.name] = given[p.name];
    } else {
      rc.params[p.name] = p.def;
    }
  }
  return rc;
}

// ---------------------------------------------------------------------------
// stage execution

namespace impl {

struct Ctx {
  const RunConfig& rc;
  std::filesystem::path dir;
  json summary = json::object();

  const json& at(const std::string& k) const { return rc.params.at(k); }
  double real(const std::string& k) const { return at(k).get<double>(); }
  long integer(const std::string& k) const { return at(k).get<long>(); }
  bool flag(const std::string& k) const { return at(k).get<bool>(); }
  std::string str(const std::string& k) const { return at(k).get<std::string>(); }
  bool has(const std::string& k) const { return !at(k).is_null(); }
  cplx complex(const std::string& k) const { return {at(k)[0].get<double>(), at(k)[1].get<double>()}; }
  unsigned count(const std::string& k, long lo, long hi = 100000000) const {
    const long v = integer(k);
    detail::require(v >= lo && v <= hi, rc.stage + "." + k + " must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<unsigned>(v);
  }
  std::string path(const std::string& file) const { return (dir / file).string(); }
  /// Input paths are taken relative to the working directory.
  std::string input(const std::string& k) const { return str(k); }
  void write(const std::string& file, const std::string& text) const { io::write_file(path(file), text); }
};

inline LaserParams laser(const Ctx& c) {
  LaserParams p;
  p.E0 = c.real("E0");
  p.omega = c.real("omega");
  p.Ip = c.real("Ip");
  p.n_cycles = c.real("n_cycles");
  p.envelope = envelope_from_string(c.str("envelope"));
  p.fwhm_cycles = c.real("fwhm_cycles");
  p.g = c.real("g");
  p.n_atoms = c.count("n_atoms", 1);
  p.alpha_L = c.complex("alpha_L");
  p.validate();
  return p;
}

inline sfa::DipoleOptions dipole_options(const Ctx& c) {
  sfa::DipoleOptions o;
  o.epsilon = c.real("epsilon");
  o.horizon_cycles = c.real("horizon_cycles");
  o.charge = c.real("charge");
  detail::require(o.epsilon > 0.0, c.rc.stage + ".epsilon must be > 0");
  detail::require(o.horizon_cycles > 0.0, c.rc.stage + ".horizon_cycles must be > 0");
  detail::require(o.charge == 1.0 || o.charge == -1.0, c.rc.stage + ".charge must be +1 or -1");
  return o;
}

inline DipoleSeries compute_dipole(const Ctx& c, const LaserParams& p) {
  const auto sup = pulse_support(p);
  const unsigned ppc = c.count("points_per_cycle", 16, 100000);
  const double cycles = (sup.end - sup.begin) / p.period();
  const auto n = static_cast<std::size_t>(std::ceil(cycles * ppc)) + 1;
  const auto t = num::linspace(sup.begin, sup.end, n);
  return sfa::sfa_dipole_series(p, t, dipole_options(c));
}

inline DipoleSeries dipole_input(const Ctx& c, const LaserParams& p) {
  return c.has("dipole_file") ? sfa::load_dipole_series(c.input("dipole_file")) : compute_dipole(c, p);
}

inline GridAxes grid(const Ctx& c) {
  GridAxes ax;
  ax.x_min = c.real("x_min");
  ax.x_max = c.real("x_max");
  ax.p_min = c.real("p_min");
  ax.p_max = c.real("p_max");
  ax.nx = c.count("nx", 2, 20001);
  ax.np = c.count("np", 2, 20001);
  ax.validate();
  return ax;
}

inline hhg::CatStateParams cat(const Ctx& c) {
  const double a = c.real("abs_alpha"), d = c.real("abs_delta_alpha");
  detail::require(a >= 0.0, c.rc.stage + ".abs_alpha must be >= 0");
  detail::require(d > 0.0, c.rc.stage + ".abs_delta_alpha must be > 0");
  return hhg::cat_from_magnitudes(a, d, c.real("relative_phase"));
}

inline std::vector<int> orders(const Ctx& c, const std::string& k) {
  std::vector<int> v;
  for (const auto& e : c.at(k)) v.push_back(e.get<int>());
  return v;
}

inline json wigner_summary(const WignerGrid& g) {
  return {{"integral", integrate_wigner(g)},
          {"min", g.values.minCoeff()},
          {"max", g.values.maxCoeff()},
          {"negativity_volume", negativity_volume(g)}};
}

inline void run_dipole(Ctx& c) {
  const LaserParams p = laser(c);
  const auto dip = compute_dipole(c, p);
  sfa::save_dipole_series(c.path("dipole.csv"), dip);
  c.summary["samples"] = dip.t.size();
  c.summary["cutoff_order"] = sfa::cutoff_order(p);
  c.summary["ponderomotive"] = ponderomotive(p.E0, p.omega);
  const auto qs = orders(c, "saddle_orders");
  if (!qs.empty()) {
    std::vector<sfa::SaddleSolution> all;
    double worst = 0.0;
    for (int q : qs) {
      const auto sols = sfa::solve_saddle_points(q, p);
      for (const auto& s : sols) {
        for (const cplx& r : sfa::saddle_residuals(s, p)) worst = std::max(worst, std::abs(r));
        all.push_back(s);
      }
    }
    c.write("saddles.csv", sfa::saddle_csv(all));
    c.summary["saddle_count"] = all.size();
    c.summary["saddle_max_residual"] = worst;
  }
}

inline void run_shift(Ctx& c) {
  const LaserParams p = laser(c);
  const auto dip = dipole_input(c, p);
  const auto tr = hhg::coherent_shift_trace(dip, p, orders(c, "orders"));
  c.write("shift_trace.csv", hhg::shift_trace_csv(tr));
  std::ostringstream q;
  q << "t_au,x,p\n";
  for (const auto& pt : hhg::quadrature_trace(tr, p)) q << io::fmt(pt.t) << ',' << io::fmt(pt.x) << ',' << io::fmt(pt.p) << '\n';
  c.write("quadrature_trace.csv", q.str());
  std::ostringstream h;
  h << "q,photon_number\n";
  json nq = json::object();
  for (const auto& [order, v] : tr.beta_q) {
    const double n = hhg::harmonic_photon_number(order, tr);
    h << order << ',' << io::fmt(n) << '\n';
    nq[std::to_string(order)] = n;
  }
  c.write("harmonic_photons.csv", h.str());
  c.summary["final_delta_alpha"] = cpx(tr.delta_alpha.back().real(), tr.delta_alpha.back().imag());
  c.summary["final_amplitude"] = tr.amplitude.back();
  c.summary["harmonic_photons"] = nq;
}

inline void run_spectrum(Ctx& c) {
  const LaserParams p = laser(c);
  const auto dip = dipole_input(c, p);
  const double qmax = c.real("max_order");
  detail::require(qmax > 0.0, "spectrum.max_order must be > 0");
  const unsigned n = c.count("n_omega", 2, 1000000);
  std::vector<double> w(n);
  for (unsigned i = 0; i < n; ++i) w[i] = qmax * p.omega * static_cast<double>(i + 1) / static_cast<double>(n);
  const auto s = hhg::hhg_spectrum(dip, w, p);
  c.write("spectrum.csv", hhg::spectrum_csv(s));
  c.summary["points"] = s.size();
}

inline void run_photon_stats(Ctx& c) {
  const unsigned n_max = c.count("n_max", 1, 5000);
  std::ostringstream os;
  if (c.str("source") == "cat") {
    const auto k = cat(c);
    const auto P = hhg::cat_photon_distribution(k, n_max);
    os << "n,probability\n";
    for (unsigned n = 0; n <= n_max; ++n) os << n << ',' << io::fmt(P[n]) << '\n';
    const auto terms = k.superposition().terms;
    const auto fock = fock_expand_superposition(terms, n_max);
    c.summary["epsilon_abs"] = std::abs(k.epsilon);
    c.summary["mean_photon_closed_form"] = k.mean_photon_number();
    c.summary["mean_photon_fock"] = mean_photon_number(fock);
  } else {
    const LaserParams p = laser(c);
    const auto dip = compute_dipole(c, p);
    const auto tr = hhg::coherent_shift_trace(dip, p, {2});
    const double start = c.has("cycle_start") ? c.real("cycle_start") : p.center() - 0.5 * p.period();
    const auto ca = hhg::cycle_averaged_absorption(tr, p, start, n_max);
    os << "n,probability\n";
    for (unsigned n = 0; n <= n_max; ++n) os << n << ',' << io::fmt(ca.p[n]) << '\n';
    c.summary["cycle_start"] = start;
    c.summary["n_cutoff"] = ca.n_cutoff ? json(*ca.n_cutoff) : json(nullptr);
  }
  c.write("photon_distribution.csv", os.str());
}

inline void run_cat(Ctx& c) {
  const auto k = cat(c);
  const GridAxes ax = grid(c);
  const WignerGrid g = c.flag("kitten") ? hhg::kitten_wigner(k.alpha, ax) : hhg::cat_wigner(k, ax);
  save_wigner(c.path("wigner.csv"), g);
  c.summary = wigner_summary(g);
  c.summary["center_value"] = c.flag("kitten") ? hhg::kitten_wigner_value(k.alpha, k.alpha)
                                               : hhg::cat_wigner_value(k, k.alpha);
  c.summary["epsilon_abs"] = std::abs(k.epsilon);
  c.summary["mean_photon"] = k.mean_photon_number();
}

inline void run_ati_single(Ctx& c) {
  ati::AtiSingleConfig cfg;
  cfg.n_halfcycles = c.count("n_halfcycles", 1, 1000);
  cfg.delta = c.complex("delta");
  cfg.v = c.real("v");
  detail::require(std::abs(cfg.delta) < ati::max_delta, "ati-single: |delta| must be < 0.95 (got " + io::fmt(std::abs(cfg.delta)) + ")");
  if (c.has("coeffs")) {
    for (const auto& e : c.at("coeffs"))
      cfg.coeffs.emplace_back(cplx(e[0].get<double>(), e[1].get<double>()), cplx(e[2].get<double>(), e[3].get<double>()));
  } else {
    cfg = ati::make_single_config(cfg.n_halfcycles, cfg.delta, cfg.v, laser(c));
  }
  cfg.validate();
  const WignerGrid g = ati::ati_single_wigner(cfg, grid(c));
  save_wigner(c.path("wigner.csv"), g);
  std::ostringstream os;
  os << "j,A_re,A_im,B_re,B_im\n";
  for (std::size_t j = 0; j < cfg.coeffs.size(); ++j)
    os << j << ',' << io::fmt(cfg.coeffs[j].first.real()) << ',' << io::fmt(cfg.coeffs[j].first.imag()) << ','
       << io::fmt(cfg.coeffs[j].second.real()) << ',' << io::fmt(cfg.coeffs[j].second.imag()) << '\n';
  c.write("coefficients.csv", os.str());
  c.summary = wigner_summary(g);
}

inline void run_ati_total(Ctx& c) {
  ati::AtiTotalConfig cfg;
  cfg.delta_alpha = c.complex("delta_alpha");
  const auto& w = c.at("weights");
  detail::require(w.size() == 4, "ati-total.weights needs exactly four entries");
  for (std::size_t i = 0; i < 4; ++i) cfg.weights[i] = cplx(w[i][0].get<double>(), w[i][1].get<double>());
  cfg.validate();
  const WignerGrid g = ati::ati_total_wigner(cfg, grid(c));
  save_wigner(c.path("wigner.csv"), g);
  c.summary = wigner_summary(g);
}

inline tomo::QuadratureDataset simulate(const Ctx& c) {
  const unsigned np = c.count("n_phases", 1, 10000);
  const unsigned shots = c.count("shots_per_phase", 1, 100000000);
  return tomo::sample_homodyne(cat(c), tomo::phase_grid(np), shots, *c.rc.seed);
}

inline void run_tomo_sim(Ctx& c) {
  const unsigned np = c.count("n_phases", 1, 10000);
  const unsigned shots = c.count("shots_per_phase", 1, 100000000);
  const unsigned table = c.count("table_points", 101, 10000001);
  const auto d = tomo::sample_homodyne(cat(c), tomo::phase_grid(np), shots, *c.rc.seed, table);
  tomo::save_dataset(c.path("dataset.csv"), d);
  c.summary["samples"] = d.size();
  c.summary["phases"] = np;
}

/// Errors of an FBP grid against the analytic cat, plus the reconstruction at
/// the cat centre beta = alpha (evaluated directly, not read off the grid).
inline json fbp_report(const WignerGrid& g, const tomo::QuadratureDataset& d, double kc, const hhg::CatStateParams& k,
                       const GridAxes& ax) {
  const auto e = tomo::wigner_error_estimate(g, hhg::cat_wigner(k, ax));
  const double xc = std::sqrt(2.0) * k.alpha.real(), pc = std::sqrt(2.0) * k.alpha.imag();
  GridAxes at{xc, xc + 0.01, pc, pc + 0.01, 2, 2};
  const double centre = tomo::reconstruct_wigner_fbp(d, kc, at).at(0, 0);
  const double ref = hhg::cat_wigner_value(k, k.alpha);
  return {{"rmse", e.rmse},
          {"max_abs_error", e.max_abs},
          {"center_reconstructed", centre},
          {"center_reference", ref},
          {"center_error", centre - ref}};
}

inline void run_tomo_fbp(Ctx& c) {
  const auto d = tomo::load_dataset(c.input("dataset_file"));
  const GridAxes ax = grid(c);
  const double line_step = c.real("line_step");
  detail::require(line_step > 0.0, "tomo-fbp.line_step must be > 0");
  const WignerGrid g = tomo::reconstruct_wigner_fbp(d, c.real("kc"), ax, line_step);
  save_wigner(c.path("wigner.csv"), g);
  c.summary = wigner_summary(g);
  if (c.flag("compare_to_cat")) c.summary["error"] = fbp_report(g, d, c.real("kc"), cat(c), ax);
}

inline json mle_run(Ctx& c, const tomo::QuadratureDataset& d, const tomo::MleOptions& opt) {
  const unsigned n_max = c.count("n_max", 1, 150);
  const unsigned iters = c.count("max_iterations", 1, 10000000);
  const auto r = tomo::reconstruct_density_matrix(d, n_max, iters, opt);
  c.write("density_matrix.csv", density_matrix_csv(r.rho));
  return {{"mean_photon", tomo::mean_photon_from_rho(r.rho)},
          {"iterations", r.iterations},
          {"log_likelihood", r.log_likelihood.empty() ? 0.0 : r.log_likelihood.back()}};
}

inline void run_tomo_mle(Ctx& c) {
  const auto d = tomo::load_dataset(c.input("dataset_file"));
  tomo::MleOptions opt;
  opt.tolerance = c.real("tolerance");
  opt.bin_width = c.real("bin_width");
  opt.dilution = c.real("dilution");
  c.summary = mle_run(c, d, opt);
}

inline void run_qs(Ctx& c) {
  std::vector<qs::ShotRecord> shots;
  std::optional<qs::SyntheticShots> syn;
  if (c.has("shots_file")) {
    shots = qs::load_shots(c.input("shots_file"));
  } else {
    if (!c.rc.seed) throw ValidationError("qs: synthetic shots (no shots_file) require an explicit seed");
    qs::GeneratorParams g;
    g.n_shots = c.count("n_shots", 1, 100000000);
    g.signal_fraction = c.real("signal_fraction");
    g.continuum_fraction = c.real("continuum_fraction");
    g.n_atoms = c.count("n_atoms", 1);
    g.yield_per_atom2 = c.real("yield_per_atom2");
    g.shift_per_sqrt_yield = c.real("shift_per_sqrt_yield");
    g.comb_spacing = c.real("comb_spacing");
    g.peak_width = c.real("peak_width");
    g.reference_level = c.real("reference_level");
    g.hh_gain = c.real("hh_gain");
    g.hh_noise = c.real("hh_noise");
    g.continuum_width = c.real("continuum_width");
    g.background_width = c.real("background_width");
    g.energy_jitter = c.real("energy_jitter");
    syn = qs::synthesize_shots(g, *c.rc.seed);
    shots = syn->shots;
    qs::save_shots(c.path("shots.csv"), shots);
  }
  if (c.has("energy_gate")) shots = qs::energy_gate(shots, c.real("energy_gate"));
  if (c.flag("normalize_energy")) shots = qs::energy_normalize(shots);
  const auto band = qs::fit_anticorrelation_band(shots, c.real("half_width_sigmas"));
  const auto sel = qs::select_shots(shots, band);
  const auto chosen = qs::subset(shots, sel.selected);
  const auto hist = qs::absorption_histogram(chosen, c.real("bin_width"), c.real("reference_level"), c.real("gain"));
  c.write("histogram.csv", qs::histogram_csv(hist));
  json report{{"shots", shots.size()},
              {"selected", sel.selected.size()},
              {"rejected", sel.rejected.size()},
              {"band", {{"slope", band.slope}, {"intercept", band.intercept}, {"half_width", band.half_width}}}};
  if (syn) {
    std::size_t tp = 0, signal = 0;
    for (std::size_t i = 0; i < syn->kind.size(); ++i) signal += syn->kind[i] != qs::ShotKind::uncorrelated;
    // energy_gate may drop shots; truth labels follow the shot ids
    for (auto i : sel.selected) tp += syn->kind[shots[i].id] != qs::ShotKind::uncorrelated;
    report["precision"] = static_cast<double>(tp) / static_cast<double>(sel.selected.size());
    report["recall"] = static_cast<double>(tp) / static_cast<double>(std::max<std::size_t>(signal, 1));
  }
  std::ostringstream ids;
  ids << "id\n";
  for (auto i : sel.selected) ids << shots[i].id << '\n';
  c.write("selected_ids.csv", ids.str());

  const unsigned n_peaks = c.count("n_peaks", 1, 1000);
  const auto fit = qs::fit_gaussian_comb(hist, c.real("spacing_guess"), n_peaks);
  std::ostringstream fc;
  fc << "peak,center,amplitude,width\n";
  for (std::size_t j = 0; j < fit.centers.size(); ++j)
    fc << j << ',' << io::fmt(fit.centers[j]) << ',' << io::fmt(fit.amplitudes[j]) << ',' << io::fmt(fit.widths[j]) << '\n';
  c.write("comb_fit.csv", fc.str());
  report["comb_spacing"] = fit.spacing;
  report["comb_rss"] = fit.rss;
  if (c.flag("subtract_background")) {
    const auto bg = qs::estimate_background(hist, fit);
    c.write("histogram_subtracted.csv", qs::histogram_csv(qs::subtract_background(hist, fit)));
    report["background"] = {{"amplitude", bg.amplitude}, {"mean", bg.mean}, {"width", bg.width}};
  }
  c.write("selection_report.json", report.dump(2) + "\n");
  c.summary = report;
}

inline void run_pipeline(Ctx& c) {
  const auto d = simulate(c);
  tomo::save_dataset(c.path("dataset.csv"), d);
  const GridAxes ax = grid(c);
  const auto k = cat(c);
  const WignerGrid g = tomo::reconstruct_wigner_fbp(d, c.real("kc"), ax);
  save_wigner(c.path("wigner_fbp.csv"), g);
  c.summary["fbp"] = fbp_report(g, d, c.real("kc"), k, ax);
  c.summary["mean_photon_reference"] = k.mean_photon_number();
  if (c.flag("run_mle")) c.summary["mle"] = mle_run(c, d, {});
}

} // namespace impl

/// Runs one stage, writing outputs, summary.json and resolved_config.json to
/// rc.output_dir. Returns the summary.
inline json run(const RunConfig& rc) {
  std::error_code ec;
  std::filesystem::create_directories(rc.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + rc.output_dir + "': " + ec.message());
  impl::Ctx c{rc, rc.output_dir};
  static const std::map<std::string, std::function<void(impl::Ctx&)>> table = {
      {"dipole", impl::run_dipole},         {"shift", impl::run_shift},
      {"spectrum", impl::run_spectrum},     {"photon-stats", impl::run_photon_stats},
      {"cat", impl::run_cat},               {"ati-single", impl::run_ati_single},
      {"ati-total", impl::run_ati_total},   {"tomo-sim", impl::run_tomo_sim},
      {"tomo-fbp", impl::run_tomo_fbp},     {"tomo-mle", impl::run_tomo_mle},
      {"qs", impl::run_qs},                 {"pipeline", impl::run_pipeline},
  };
  io::write_file(c.path("resolved_config.json"), rc.to_json().dump(2) + "\n");
  table.at(rc.stage)(c);
  io::write_file(c.path("summary.json"), c.summary.dump(2) + "\n");
  return c.summary;
}

inline json read_config(const std::string& path) {
  const std::string text = io::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line number
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ParseError(path, line, "invalid JSON");
  }
}

inline std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

inline const char* category_name(Error::Category c) {
  switch (c) {
    case Error::Category::validation: return "validation";
    case Error::Category::convergence: return "convergence";
    case Error::Category::io: return "io";
  }
  return "?";
}

/// Command-line entry point. Errors are reported as one line
/// "error code=<n> category=<name> reason=<text>" on `err`.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"qstrong: strong-field quantum optics pipeline"};
  app.set_version_flag("--version", "1.0.0");
  std::string config_path, stage_flag, out_flag;
  std::uint64_t seed_flag = 0;
  auto* o_config = app.add_option("--config", config_path, "JSON run configuration");
  auto* o_seed = app.add_option("--seed", seed_flag, "RNG seed (required by randomized stages)");
  auto* o_out = app.add_option("--out", out_flag, "output directory");
  auto* o_stage = app.add_option("--stage", stage_flag, "stage name (overrides the config)");
  auto* describe_cmd = app.add_subcommand("describe", "print the parameter schema of a stage");
  std::string describe_stage;
  describe_cmd->add_option("stage", describe_stage, "stage name (omit to list stages)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "1.0.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error code=2 category=validation reason=" << one_line(e.what()) << "\n";
    return 2;
  }
  try {
    if (describe_cmd->parsed()) {
      if (describe_stage.empty()) {
        for (const auto& s : stages()) out << s.name << "  " << s.summary << "\n";
      } else {
        out << describe(describe_stage);
      }
      return 0;
    }
    if (!*o_config && !*o_stage) throw ValidationError("nothing to run: give --config and/or --stage");
    const json doc = *o_config ? read_config(config_path) : json::object();
    const RunConfig rc = resolve_config(doc, *o_stage ? std::optional<std::string>(stage_flag) : std::nullopt,
                                        *o_seed ? std::optional<std::uint64_t>(seed_flag) : std::nullopt,
                                        *o_out ? std::optional<std::string>(out_flag) : std::nullopt);
    const json summary = run(rc);
    out << summary.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error code=" << e.exit_code() << " category=" << category_name(e.category()) << " reason=" << one_line(e.what()) << "\n";
    return e.exit_code();
  } catch (const json::exception& e) {
    err << "error code=2 category=validation reason=" << one_line(e.what()) << "\n";
    return 2;
  }
}

} // namespace qstrong::cli
