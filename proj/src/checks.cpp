#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "mourre/cayley.hpp"
#include "mourre/lap.hpp"
#include "mourre/linalg.hpp"
#include "mourre/mourre.hpp"
#include "mourre/regularity.hpp"
#include "mourre/runner.hpp"

namespace mourre {

namespace {

const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

std::map<int, cplx> h_hat_from_json(const json& j) {
  std::map<int, cplx> h;
  for (const auto& e : j) h[e.at("l").get<int>()] += cplx(e.at("re").get<double>(), e.at("im").get<double>());
  return h;
}

LatticeOperator perturbation_operator(const std::string& name) {
  if (name == "planted_swap") {
    // e^{i pi P_psi}, psi = (e_{-1} - e_0)/sqrt 2: swaps e_{-1} and e_0
    DenseOperator block(2, 2);
    block << 0.0, 1.0, 1.0, 0.0;
    return local_unitary(block, -1, "planted_swap");
  }
  if (name == "pi_p0") {
    DenseOperator block(1, 1);
    block << -1.0;
    return local_unitary(block, 0, "pi_p0");
  }
  throw ConfigError("unknown perturbation '" + name + "' (none, planted_swap, pi_p0)");
}

}  // namespace

// ---------------------------------------------------------------------------

json model_defaults(const std::string& kind) {
  if (kind == "shift") return {{"model", kind}, {"K", 128}, {"perturbation", "none"}};
  if (kind == "dilation")
    return {{"model", kind}, {"t", 0.1}, {"dy", 0.05}, {"K", 64}, {"perturbation", "none"}};
  if (kind == "cocycle")
    return {{"model", kind},
            {"m", 1},
            {"h_hat", json::array({{{"l", 1}, {"re", 0.0}, {"im", -1.0 / (4.0 * kPi)}}})},
            {"theta", kGolden},
            {"K", 64},
            {"fft_size", 4096},
            {"perturbation", "none"}};
  if (kind == "free_evolution") return {{"model", kind}, {"T", 1.0}, {"Xi", 8.0}, {"M", 256}};
  throw ConfigError("unknown model '" + kind + "' (shift, dilation, cocycle, free_evolution)");
}

ModelInstance build_model(const json& spec) {
  ModelInstance m;
  m.kind = spec.at("model").get<std::string>();
  m.params = spec;
  if (m.kind == "free_evolution") {
    m.free_evolution = build_free_evolution(spec.at("T").get<double>(), spec.at("Xi").get<double>(),
                                            spec.at("M").get<int>());
    m.K = spec.at("M").get<int>();
    return m;
  }
  m.K = spec.at("K").get<int>();
  if (m.kind == "shift") {
    ShiftModel s = build_shift();
    m.base = s.U.as_lattice();
    m.A = s.A;
    m.exact_form = 1.0;
  } else if (m.kind == "dilation") {
    const double t = spec.at("t").get<double>();
    DilationModel d = build_dilation(t, spec.at("dy").get<double>(), m.K);
    m.base = d.U.as_lattice();
    m.A = d.A;
    m.exact_form = 2.0 * t;
  } else {
    CocycleOptions o;
    o.fft_size = spec.at("fft_size").get<int>();
    m.cocycle = build_cocycle(spec.at("m").get<int>(), h_hat_from_json(spec.at("h_hat")),
                              spec.at("theta").get<double>(), m.K, o);
    m.base = m.cocycle->U.as_lattice();
    m.A = m.cocycle->P;
    bool flat = true;
    for (const auto& [l, c] : m.cocycle->h_hat) flat = flat && c == cplx(0.0);
    if (flat) m.exact_form = kTwoPi * m.cocycle->m;
  }
  m.perturbation = spec.at("perturbation").get<std::string>();
  if (m.perturbation != "none") {
    m.V = perturbation_operator(m.perturbation);
    m.lattice = m.V->compose(*m.base);
    m.exact_form.reset();
  } else {
    m.lattice = m.base;
  }
  return m;
}

Section ModelInstance::section() const {
  if (free_evolution) return Section{0, K};
  return Section::centered(K);
}

Realization& ModelInstance::realization() {
  if (!real_) {
    if (free_evolution)
      real_ = free_evolution->realize();
    else
      real_ = realize_lattice(*lattice, *A, section(), kPi, kind);
  }
  return *real_;
}

Realization& ModelInstance::base_realization() {
  if (!V) return realization();
  if (!base_real_) base_real_ = realize_lattice(*base, *A, section(), kPi, kind);
  return *base_real_;
}

// ---------------------------------------------------------------------------

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

// ---------------------------------------------------------------------------
// Parameter helpers

SpectralWindow window_param(const json& p, const char* key) {
  const json& w = p.at(key);
  if (!w.is_array() || w.size() != 2) throw PreconditionError(std::string(key) + " must be [lo, hi]");
  double lo = w[0].get<double>(), hi = w[1].get<double>();
  if (!(lo < hi) || hi - lo > kTwoPi) throw PreconditionError(std::string(key) + " needs lo < hi <= lo + 2 pi");
  return SpectralWindow::arc(lo, hi);
}

std::vector<double> doubles(const json& p, const char* key) {
  return p.at(key).get<std::vector<double>>();
}

std::vector<int> ints(const json& p, const char* key) { return p.at(key).get<std::vector<int>>(); }

cplx theta_param(const json& p, Realization& r) {
  if (p.at("theta_angle").is_null()) return largest_gap_base_point(r.spectrum().angles);
  return std::polar(1.0, p.at("theta_angle").get<double>());
}

const LatticeOperator& need_lattice(ModelInstance& m) {
  if (!m.lattice) throw PreconditionError("check needs a lattice model");
  return *m.lattice;
}

DenseOperator weight_from_dense(const DenseOperator& A, double s) {
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(0.5 * (A + A.adjoint()));
  Eigen::VectorXd w = es.eigenvalues();
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::pow(1.0 + w(i) * w(i), -s / 2.0);
  return es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

CheckOutcome outcome(bool pass, json payload, std::string csv = {}, std::string message = {}) {
  CheckOutcome o;
  o.status = pass ? CheckStatus::pass : CheckStatus::fail;
  o.payload = std::move(payload);
  o.csv = std::move(csv);
  o.message = std::move(message);
  return o;
}

std::string two_column_csv(const std::string& a, const std::string& b,
                           const std::vector<double>& x, const std::vector<double>& y) {
  CsvTable t({a, b});
  for (std::size_t i = 0; i < x.size(); ++i) t.add_row({format_number(x[i]), format_number(y[i])});
  return t.render("");
}

// ---------------------------------------------------------------------------
// Checks

CheckOutcome run_certify(CheckContext& c) {
  Realization& r = c.model.realization();
  MourreCertificate cert =
      certify_mourre(r, window_param(c.params, "window"), c.params.at("allowance_rank").get<int>());
  json p = to_json(cert, r.label);
  p["min_eig_after_allowance"] = cert.min_eig_after_allowance;
  bool pass = cert.pass;
  if (!c.params.at("expect_a").is_null()) {
    const double expect = c.params.at("expect_a").get<double>();
    p["expect_a"] = expect;
    pass = pass && std::abs(cert.a_estimate - expect) <= c.config.tolerance("certificate_residual") &&
           cert.residual <= c.config.tolerance("certificate_residual");
  }
  CsvTable t({"index", "eigenvalue"});
  for (std::size_t i = 0; i < cert.eigenvalues.size(); ++i)
    t.add_row({std::to_string(i), format_number(cert.eigenvalues[i])});
  CheckOutcome o = outcome(pass, p, t.render(""));
  if (cert.vacuous) {
    o.status = CheckStatus::flagged;
    o.message = cert.warnings.empty() ? "vacuous certificate" : cert.warnings.front();
  }
  return o;
}

CheckOutcome run_count(CheckContext& c) {
  Realization& r = c.model.realization();
  const LatticeOperator* lat = c.model.lattice ? &*c.model.lattice : nullptr;
  WindowCount w = count_window_eigenvalues(r, window_param(c.params, "window"), lat,
                                           c.config.tolerance("eigen_residual"));
  int spurious = static_cast<int>(std::count(w.spurious.begin(), w.spurious.end(), true));
  json p{{"count", w.count},
         {"spurious", spurious},
         {"open_boundary_artifact", w.open_boundary_artifact}};
  CsvTable t({"angle", "lattice_residual", "spurious"});
  for (std::size_t i = 0; i < w.angles.size(); ++i)
    t.add_row({format_number(w.angles[i]),
               i < w.lattice_residuals.size() ? format_number(w.lattice_residuals[i]) : "",
               i < w.spurious.size() ? (w.spurious[i] ? "true" : "false") : ""});
  CheckOutcome o = outcome(true, p, t.render(""));
  if (w.open_boundary_artifact) {
    o.status = CheckStatus::flagged;
    o.message = "every window eigenvalue is a section artifact";
  }
  return o;
}

CheckOutcome run_virial(CheckContext& c) {
  Realization& r = c.model.realization();
  const UnitaryEigen& eig = r.spectrum();
  const SpectralWindow win = window_param(c.params, "window");
  const double tol = c.config.tolerance("virial");
  const double eig_tol = c.config.tolerance("eigen_residual");
  int in_window = 0, tested = 0;
  double max_virial = 0.0, max_matrix = 0.0;
  CsvTable t({"angle", "eigen_residual", "virial"});
  for (Eigen::Index k = 0; k < eig.angles.size(); ++k) {
    if (!win.contains_angle(eig.angles(k))) continue;
    ++in_window;
    const Vec phi = eig.vectors.col(k);
    max_matrix = std::max(max_matrix, std::abs(virial_check(r.U, r.A, phi, 1.0).virial_value));
    double residual = 0.0;
    if (c.model.lattice) {
      LatticeVector lv = LatticeVector::from_section(r.section, phi);
      LatticeVector res = c.model.lattice->apply(lv);
      res.axpy(-eig.values(k), lv);
      residual = res.norm() / lv.norm();
      if (residual > eig_tol) continue;
    }
    ++tested;
    double v = std::abs(virial_check_form(r.U, r.form, phi, 1.0).virial_value);
    max_virial = std::max(max_virial, v);
    t.add_row({format_number(eig.angles(k)), format_number(residual), format_number(v)});
  }
  json p{{"window_eigenvalues", in_window},
         {"tested", tested},
         {"max_virial", max_virial},
         {"max_matrix_virial", max_matrix}};
  CheckOutcome o = outcome(max_virial <= tol && max_matrix <= tol, p, t.render(""));
  if (tested == 0 && o.status == CheckStatus::pass) {
    o.status = CheckStatus::flagged;
    o.message = "no eigenvector with lattice residual <= eigen_residual in the window";
  }
  return o;
}

CheckOutcome run_exponential(CheckContext& c) {
  ModelInstance& m = c.model;
  if (!m.V) throw PreconditionError("exponential_perturbation needs a model perturbation");
  const Section s = m.section();
  const DenseOperator Vs = m.V->section(s);
  const DenseOperator I = DenseOperator::Identity(s.size, s.size);
  // V = e^{iB} with B = pi P, P = (1 - V)/2 the projection onto ker(V + 1)
  const DenseOperator B = kPi * 0.5 * (I - Vs);
  const double tol = c.config.tolerance("series");
  ExponentialPerturbation e = exponential_perturbation(B, tol);
  int terms = 0;
  const DenseOperator As = m.realization().A;
  const DenseOperator series = e.commutator_with(As, &terms);
  const DenseOperator direct = commutator(*m.A, *m.V).section(s);
  const double scale = std::max(1.0, operator_norm(direct));
  const double series_residual = operator_norm(DenseOperator(series - direct)) / scale;
  const double exp_residual = operator_norm(DenseOperator(e.V - Vs));
  json p{{"rank_B", e.rank},
         {"rank_V_minus_1", perturbation_rank(Vs)},
         {"terms", terms},
         {"series_residual", series_residual},
         {"exp_residual", exp_residual},
         {"commutator_norm", operator_norm(direct)}};
  return outcome(series_residual <= tol * 10.0 && exp_residual <= 1e-12 * s.size, p);
}

CheckOutcome run_perturbed(CheckContext& c) {
  ModelInstance& m = c.model;
  if (!m.V) throw PreconditionError("perturbed_certificate needs a model perturbation");
  Realization& base = m.base_realization();
  Realization& pert = m.realization();
  const Section s = m.section();
  MourreCertificate base_cert = certify_mourre(base, window_param(c.params, "base_window"));
  PerturbedCertificate pc =
      perturbed_certificate(base, pert, m.V->section(s), commutator(*m.A, *m.V).section(s),
                            window_param(c.params, "inner_window"), base_cert);
  json p{{"base", to_json(base_cert, base.label)},
         {"perturbed", to_json(pc.certificate, pert.label)},
         {"v_rank", pc.v_rank},
         {"v_minus_one_norm", pc.v_minus_one_norm},
         {"commutator_V_norm", pc.commutator_V_norm},
         {"difference_norm", pc.difference_norm},
         {"difference_bound", pc.difference_bound}};
  CheckOutcome o = outcome(pc.certificate.pass && base_cert.pass, p);
  if (pc.certificate.vacuous) {
    o.status = CheckStatus::flagged;
    o.message = "perturbed certificate is vacuous";
  }
  return o;
}

CheckOutcome run_identity(CheckContext& c, bool b) {
  Realization& r = c.model.realization();
  const cplx theta = theta_param(c.params, r);
  IdentityReport rep = b ? verify_identity_b(r.U, r.A, theta, r.label)
                         : verify_identity_a(r.U, r.A, theta, r.label);
  const double n = static_cast<double>(r.U.rows());
  const double tol = b ? c.config.tolerance("identity_b") * rep.condition
                       : c.config.tolerance("identity_a") * n;
  json p = to_json(rep);
  p["tolerance"] = tol;
  p["pass"] = rep.residual <= tol;
  return outcome(rep.residual <= tol, p);
}

CheckOutcome run_transfer(CheckContext& c) {
  Realization& r = c.model.realization();
  const cplx theta = c.params.at("theta_angle").is_null()
                         ? cplx(1.0)
                         : std::polar(1.0, c.params.at("theta_angle").get<double>());
  CayleyOperator H = build_cayley(r.U, r.spectrum(), theta);
  const auto iv = doubles(c.params, "interval");
  if (iv.size() != 2 || !(iv[0] <= iv[1])) throw PreconditionError("interval must be [lo, hi]");
  const Interval I{iv[0], iv[1]};
  const double a = c.params.at("a").get<double>();
  TransferReport f = mourre_transfer_form(H, r.form, I, a);
  TransferReport mat = mourre_transfer(H, r.A, I, a);
  const double tol = c.config.tolerance("transfer");
  json p{{"lhs_min_eig", f.lhs_min_eig},
         {"bound", f.bound},
         {"rank", f.rank},
         {"vacuous", f.vacuous},
         {"matrix_commutator_min_eig", mat.lhs_min_eig},
         {"condition", H.condition}};
  CheckOutcome o = outcome(!f.vacuous && f.lhs_min_eig >= f.bound - tol, p);
  if (f.vacuous) {
    o.status = CheckStatus::flagged;
    o.message = "E(I) is empty on this section";
  }
  return o;
}

CheckOutcome run_delta(CheckContext& c) {
  Realization& r = c.model.realization();
  const int n = c.params.at("n_points").get<int>();
  const double rmax = c.params.at("r_max").get<double>();
  if (n < 1 || !(rmax > 0.0 && rmax < 1.0)) throw PreconditionError("need n_points >= 1, 0 < r_max < 1");
  const double tol = c.config.tolerance("delta");
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  std::vector<double> res(static_cast<std::size_t>(n)), mins(static_cast<std::size_t>(n));
  std::vector<cplx> zs(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    zs[static_cast<std::size_t>(k)] = std::polar(rmax * std::sqrt((k + 1.0) / n), golden_angle * k);
  parallel_for(n, c.jobs, [&](int k) {
    DeltaKernel d = delta_kernel(r.U, zs[static_cast<std::size_t>(k)]);
    res[static_cast<std::size_t>(k)] = d.factorization_residual;
    mins[static_cast<std::size_t>(k)] = d.min_eigenvalue;
  });
  CsvTable t({"re_z", "im_z", "factorization_residual", "min_eigenvalue"});
  for (int k = 0; k < n; ++k) {
    auto i = static_cast<std::size_t>(k);
    t.add_row({format_number(zs[i].real()), format_number(zs[i].imag()), format_number(res[i]),
               format_number(mins[i])});
  }
  const double max_res = *std::max_element(res.begin(), res.end());
  const double min_eig = *std::min_element(mins.begin(), mins.end());
  json p{{"points", n}, {"max_factorization_residual", max_res}, {"min_eigenvalue", min_eig}};
  return outcome(max_res <= tol && min_eig >= -tol, p, t.render(""));
}

RegularityProbe probe_for(ModelInstance& m, int K) {
  if (m.lattice) return RegularityProbe::lattice(*m.lattice, *m.A, K);
  Realization& r = m.realization();
  return RegularityProbe::dense(r.U, m.free_evolution->A, r.section, 2);
}

CheckOutcome run_integrand(CheckContext& c, bool c11) {
  const std::vector<double> t = doubles(c.params, "t_grid").empty()
                                    ? log_grid(c.params.at("t_min").get<double>(), c.params.at("n_t").get<int>())
                                    : doubles(c.params, "t_grid");
  RegularityProbe probe = probe_for(c.model, c.model.K);
  std::vector<double> f(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) f[i] = c11 ? probe.c11(t[i]) : probe.c1plus0(t[i]);
  json p{{"points", t.size()}, {"max", *std::max_element(f.begin(), f.end())}};
  bool pass = std::all_of(f.begin(), f.end(), [](double x) { return std::isfinite(x); });
  if (c.model.exact_form) {
    // U*[A,U] = c 1 with diagonal A: e^{-itA}Ue^{itA} = e^{ict}U
    const double cf = *c.model.exact_form;
    double err = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double exact = c11 ? 2.0 * (1.0 - std::cos(cf * t[i])) : 2.0 * cf * std::abs(std::sin(cf * t[i] / 2.0));
      err = std::max(err, std::abs(f[i] - exact));
    }
    p["closed_form_error"] = err;
    pass = pass && err <= 1e-10;
  }
  return outcome(pass, p, two_column_csv("t", c11 ? "c11" : "c1plus0", t, f));
}

CheckOutcome run_classify(CheckContext& c) {
  const std::vector<double> t = log_grid(c.params.at("t_min").get<double>(), c.params.at("n_t").get<int>());
  std::vector<int> Ks = ints(c.params, "K_schedule");
  if (!c.model.lattice) Ks = {c.model.K};
  ModelInstance& m = c.model;
  RegularityReport rep = classify([&m](int K) { return probe_for(m, K); }, t, Ks, {}, m.kind);
  json est = json::array();
  for (std::size_t k = 0; k < rep.section_sizes.size(); ++k)
    est.push_back({{"K", rep.section_sizes[k]},
                   {"c11", rep.c11_estimates[k].value},
                   {"c1plus0", rep.c1plus0_estimates[k].value}});
  json p{{"c11", rep.c11},
         {"c1plus0", rep.c1plus0},
         {"c11_flag", to_string(rep.c11_flag)},
         {"c1plus0_flag", to_string(rep.c1plus0_flag)},
         {"estimates", est}};
  CsvTable tab({"t", "c11", "c1plus0"});
  for (std::size_t i = 0; i < t.size(); ++i)
    tab.add_row({format_number(t[i]), format_number(rep.c11_integrand.back()[i]),
                 format_number(rep.c1plus0_integrand.back()[i])});
  CheckOutcome o = outcome(true, p, tab.render(""));
  if (rep.c11_flag != DivergenceFlag::converged || rep.c1plus0_flag != DivergenceFlag::converged) {
    o.status = CheckStatus::flagged;
    o.message = "c11 " + to_string(rep.c11_flag) + ", c1plus0 " + to_string(rep.c1plus0_flag);
  }
  return o;
}

CheckOutcome run_lap(CheckContext& c) {
  const LatticeOperator& U = need_lattice(c.model);
  const cplx theta = std::polar(1.0, c.params.at("theta_angle").get<double>());
  const std::vector<double> lambdas = doubles(c.params, "lambda");
  const std::vector<double> eps = doubles(c.params, "eps");
  const double s = c.params.at("s").get<double>();
  if (lambdas.empty() || eps.empty()) throw PreconditionError("empty LAP grid");
  for (std::size_t i = 1; i < eps.size(); ++i)
    if (!(eps[i] < eps[i - 1])) throw PreconditionError("eps grid must be decreasing");
  LapOptions opts;
  opts.rel_change = c.config.tolerance("lap_rel_change");
  opts.k_factor = c.params.at("k_factor").get<double>();
  opts.k_min = c.params.at("k_min").get<int>();
  opts.max_doublings = c.params.at("max_doublings").get<int>();
  const int ne = static_cast<int>(eps.size());
  const int cells = static_cast<int>(lambdas.size()) * ne;
  std::vector<LapSweep> parts(static_cast<std::size_t>(cells));
  parallel_for(cells, c.jobs, [&](int i) {
    parts[static_cast<std::size_t>(i)] = lap_sweep(
        U, *c.model.A, theta, {lambdas[static_cast<std::size_t>(i / ne)]}, s, {eps[static_cast<std::size_t>(i % ne)]}, opts);
  });
  LapSweep sw;
  sw.theta = theta;
  sw.s = s;
  sw.lambda_grid = lambdas;
  sw.eps_grid = eps;
  for (const LapSweep& part : parts) {
    sw.cells.push_back(part.cells.front());
    sw.sup_bound = std::max(sw.sup_bound, part.sup_bound);
    sw.unstabilized += part.unstabilized;
    sw.warnings.insert(sw.warnings.end(), part.warnings.begin(), part.warnings.end());
  }
  json slopes = json::array();
  bool pass = sw.unstabilized == 0;
  const json& lo = c.params.at("slope_min");
  const json& hi = c.params.at("slope_max");
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    double sl = last_decade_slope(sw, l);
    slopes.push_back(std::isfinite(sl) ? json(sl) : json(nullptr));
    double mag = std::abs(sl);
    if (!lo.is_null()) pass = pass && mag >= lo.get<double>();
    if (!hi.is_null()) pass = pass && mag <= hi.get<double>();
  }
  json final_norms = json::array();
  for (const LapCell& cell : sw.cells) final_norms.push_back(cell.norms.back());
  json p{{"sup_bound", sw.sup_bound},
         {"unstabilized", sw.unstabilized},
         {"last_decade_slope", slopes},
         {"final_norms", final_norms}};
  std::string csv = to_csv(sw, "");
  CheckOutcome o = outcome(pass, p, csv);
  if (!sw.warnings.empty()) o.message = sw.warnings.front();
  return o;
}

CheckOutcome run_smooth(CheckContext& c) {
  const LatticeOperator& U = need_lattice(c.model);
  const double s = c.params.at("s").get<double>();
  const std::vector<int> probes = ints(c.params, "probes");
  const int nmax_exp = c.params.at("log2_N").get<int>();
  if (nmax_exp < 1 || nmax_exp > 20) throw PreconditionError("log2_N must be in [1, 20]");
  std::vector<int> N;
  for (int k = 0; k <= nmax_exp; ++k) N.push_back((1 << k) - 1);
  const int k_lo = c.params.at("k_lo").get<int>(), k_hi = c.params.at("k_hi").get<int>();
  std::vector<SmoothnessReport> reps(probes.size());
  parallel_for(static_cast<int>(probes.size()), c.jobs, [&](int i) {
    reps[static_cast<std::size_t>(i)] = smooth_sum_with_fallback(
        U, *c.model.A, s, LatticeVector::delta(probes[static_cast<std::size_t>(i)]), N,
        Section::centered(c.model.K));
  });
  const std::string expect = c.params.at("expect").get<std::string>();
  bool pass = true;
  json per = json::array();
  CsvTable t({"probe", "k", "dyadic_tail"});
  for (std::size_t i = 0; i < probes.size(); ++i) {
    bool dec = dyadic_tails_decrease(reps[i], k_lo, k_hi);
    if (expect == "decrease") pass = pass && dec;
    if (expect == "grow") pass = pass && !dec;
    per.push_back({{"probe", probes[i]},
                   {"partial_sum", reps[i].partial_sums.back()},
                   {"tails_decrease", dec},
                   {"dyadic_tails", reps[i].dyadic_tails}});
    for (std::size_t k = 0; k < reps[i].dyadic_tails.size(); ++k)
      t.add_row({std::to_string(probes[i]), std::to_string(k), format_number(reps[i].dyadic_tails[k])});
  }
  json p{{"s", s}, {"N", N.back()}, {"probes", per}};
  return outcome(pass, p, t.render(""));
}

CheckOutcome run_sup_disk(CheckContext& c) {
  Realization& r = c.model.realization();
  const double s = c.params.at("s").get<double>();
  const DenseOperator B = weight_from_dense(r.A, s);
  std::vector<cplx> grid;
  const int na = c.params.at("n_angles").get<int>();
  for (double rad : doubles(c.params, "radii")) {
    if (rad == 0.0) {
      grid.push_back(0.0);
      continue;
    }
    for (int k = 0; k < na; ++k) grid.push_back(std::polar(rad, kTwoPi * k / na));
  }
  std::vector<Vec> probes;
  for (int site : ints(c.params, "probes")) {
    if (!r.section.contains(site)) throw PreconditionError("probe site outside the section");
    Vec e = Vec::Zero(r.section.size);
    e(r.section.index(site)) = 1.0;
    probes.push_back(e);
  }
  double sup = smooth_sup_disk(r.U, B, window_param(c.params, "window"), grid, probes);
  json p{{"sup", sup}, {"grid_points", grid.size()}, {"s", s}};
  return outcome(std::isfinite(sup), p);
}

CheckOutcome run_wiener(CheckContext& c) {
  const LatticeOperator& U = need_lattice(c.model);
  WienerDiagnostic w = wiener_diagnostic(U, LatticeVector::delta(c.params.at("probe").get<int>()),
                                         c.params.at("N").get<int>(), c.params.at("trim").get<double>());
  const int fit_max = c.params.at("fit_max_N").get<int>();
  double C = 0.0;
  for (std::size_t i = 0; i < w.N.size(); ++i)
    if (w.N[i] <= fit_max) C = std::max(C, w.N[i] * w.cesaro[i]);
  int violations = 0;
  for (std::size_t i = 0; i < w.N.size(); ++i)
    if (w.cesaro[i] > C / w.N[i] * (1.0 + 1e-12)) ++violations;
  json p{{"C", C},
         {"violations", violations},
         {"cesaro_final", w.cesaro.back()},
         {"coeff_decay_fit", std::isfinite(w.coeff_decay_fit) ? json(w.coeff_decay_fit) : json(nullptr)},
         {"max_support", w.max_support},
         {"trimmed_mass", w.trimmed_mass}};
  CsvTable t({"N", "cesaro", "N_times_cesaro"});
  for (std::size_t i = 0; i < w.N.size(); ++i)
    t.add_row({std::to_string(w.N[i]), format_number(w.cesaro[i]), format_number(w.N[i] * w.cesaro[i])});
  return outcome(violations == 0, p, t.render(""));
}

CheckOutcome run_averaged(CheckContext& c) {
  ModelInstance& m = c.model;
  const double tol = c.config.tolerance("lemma_a");
  const std::vector<int> ns = ints(c.params, "n");
  std::vector<double> res(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (m.lattice) {
      res[i] = lemma_a_residual(*m.lattice, *m.A, ns[i], c.params.at("K").is_null() ? m.K : c.params.at("K").get<int>());
    } else {
      Realization& r = m.realization();
      res[i] = lemma_a_residual(r.U, r.A, ns[i]);
    }
  }
  std::vector<double> nd(ns.begin(), ns.end());
  const double worst = res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
  json p{{"n", ns}, {"residual", res}, {"max_residual", worst}};
  return outcome(worst <= tol, p, two_column_csv("n", "residual", nd, res));
}

CheckOutcome run_ergodic(CheckContext& c) {
  if (!c.model.cocycle) throw PreconditionError("ergodic_average_bound needs the cocycle model");
  const CocycleModel& cm = *c.model.cocycle;
  const std::vector<int> ns = ints(c.params, "n");
  const int grid = c.params.at("grid_size").get<int>();
  std::vector<double> sups(ns.size()), grids(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    ErgodicBound b = ergodic_average_bound(cm.h_hat, cm.theta, ns[i], grid);
    sups[i] = b.sup;
    grids[i] = b.grid_sup;
  }
  json p{{"n", ns}, {"sup", sups}, {"grid_sup", grids}};
  auto order = smallest_averaging_order(cm.h_hat, cm.theta, 64, grid);
  p["smallest_order"] = order ? json(*order) : json(nullptr);
  bool pass = true;
  // a single harmonic l: |(1/n) sum_j e^{-2 pi i l j theta}| = |sin(pi n l theta)| / (n |sin(pi l theta)|)
  std::vector<std::pair<int, cplx>> nz;
  for (const auto& [l, h] : cm.h_hat)
    if (l > 0 && h != cplx(0.0)) nz.emplace_back(l, h);
  if (nz.size() == 1) {
    const auto [l, h] = nz.front();
    double err = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const double n = ns[i];
      double closed = 4.0 * kPi * l * std::abs(h) * std::abs(std::sin(kPi * n * l * cm.theta)) /
                      (n * std::abs(std::sin(kPi * l * cm.theta)));
      err = std::max(err, std::abs(sups[i] - closed));
    }
    p["closed_form_error"] = err;
    pass = err <= c.config.tolerance("ergodic_match");
  }
  std::vector<double> nd(ns.begin(), ns.end());
  return outcome(pass, p, two_column_csv("n", "sup", nd, sups));
}

CheckOutcome run_cocycle_constant(CheckContext& c) {
  if (!c.model.cocycle) throw PreconditionError("mourre_constant_cocycle needs the cocycle model");
  const int n = c.params.at("n").get<int>();
  const double margin = c.params.at("margin").get<double>();
  CocycleMourreConstant mc = mourre_constant_cocycle(*c.model.cocycle, n, c.model.K);
  json p{{"n", n},
         {"K", mc.K},
         {"min_eig", mc.min_eig},
         {"ergodic_bound", mc.ergodic_bound},
         {"lower_bound", mc.lower_bound},
         {"tolerance", mc.tolerance},
         {"target", kPi - margin}};
  const std::vector<int> sweep = ints(c.params, "n_sweep");
  std::vector<double> mins(sweep.size());
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    try {
      mins[i] = mourre_constant_cocycle(*c.model.cocycle, sweep[i], c.model.K).min_eig;
    } catch (const PreconditionError&) {
      mins[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (!sweep.empty()) {
    json arr = json::array();
    for (double v : mins) arr.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    p["n_sweep"] = sweep;
    p["min_eig_sweep"] = arr;
  }
  std::vector<double> nd(sweep.begin(), sweep.end());
  return outcome(mc.min_eig >= kPi - margin, p, two_column_csv("n", "min_eig", nd, mins));
}

CheckOutcome run_symbol(CheckContext& c) {
  if (!c.model.free_evolution) throw PreconditionError("commutator_symbol needs the free evolution model");
  FreeEvolutionError e = free_evolution_error(*c.model.free_evolution);
  const double max_error = c.params.at("max_error").get<double>();
  json p{{"max_relative_error", e.max_relative_error}, {"boundary_rows", e.boundary_rows}};
  std::vector<double> idx(static_cast<std::size_t>(e.row_error.size()));
  std::vector<double> err(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    idx[i] = static_cast<double>(i + static_cast<std::size_t>(e.boundary_rows));
    err[i] = e.row_error(static_cast<Eigen::Index>(i));
  }
  return outcome(e.max_relative_error <= max_error, p, two_column_csv("row", "relative_error", idx, err));
}

CheckOutcome run_form_identity(CheckContext& c) {
  if (!c.model.exact_form) throw PreconditionError("form_identity needs a model with U*[A,U] = c 1");
  Realization& r = c.model.realization();
  const double cf = *c.model.exact_form;
  const auto n = r.form.rows();
  double dev = (r.form - cf * DenseOperator::Identity(n, n)).cwiseAbs().maxCoeff();
  json p{{"c", cf}, {"max_entry_deviation", dev}, {"rows", n}};
  return outcome(dev == 0.0, p);
}

// ---------------------------------------------------------------------------

std::vector<CheckInfo> make_registry() {
  const std::vector<std::string> all{"shift", "dilation", "cocycle", "free_evolution"};
  const std::vector<std::string> lattice{"shift", "dilation", "cocycle"};
  const json log_t{{"t_min", 1e-4}, {"n_t", 64}};
  std::vector<CheckInfo> r;
  r.push_back({"certify_mourre", "E(Theta) U*[A,U] E(Theta) >= a E(Theta) + K with K compact", all,
               false,
               {{"window", {-3.0, 3.0}}, {"allowance_rank", 0}, {"expect_a", nullptr}},
               {"certificate_residual"}, run_certify});
  r.push_back({"count_window_eigenvalues",
               "a Mourre estimate on Theta leaves finitely many eigenvalues there, each of finite multiplicity",
               all, false, {{"window", {-3.0, 3.0}}}, {"eigen_residual"}, run_count});
  r.push_back({"virial_check", "<phi, U*[A,U] phi> = 0 for every eigenvector phi of U", all, false,
               {{"window", {-kPi, kPi}}}, {"virial", "eigen_residual"}, run_virial});
  r.push_back({"exponential_perturbation",
               "[A, e^{iB}] = sum_{k>=1} (i^k/k!) sum_{l<k} B^{k-1-l} [A,B] B^l", lattice, false,
               json::object(), {"series"}, run_exponential});
  r.push_back({"perturbed_certificate",
               "V - 1 and [A,V] compact: VU keeps a Mourre estimate on Theta' inside Theta", lattice,
               false, {{"base_window", {-3.0, 3.0}}, {"inner_window", {-2.5, 2.5}}}, {},
               run_perturbed});
  r.push_back({"verify_identity_a", "[A, (H_theta - i)^{-1}] = -(i conj(theta)/2) [A,U]", all, false,
               {{"theta_angle", nullptr}}, {"identity_a"},
               [](CheckContext& c) { return run_identity(c, false); }});
  r.push_back({"verify_identity_b",
               "[iH_theta, A] = 2 ((1 - conj(theta) U)^{-1})* U*[A,U] (1 - conj(theta) U)^{-1}", all,
               false, {{"theta_angle", nullptr}}, {"identity_b"},
               [](CheckContext& c) { return run_identity(c, true); }});
  r.push_back({"mourre_transfer", "E^H(I) [iH_theta, A] E^H(I) >= (a/2) E^H(I)", all, false,
               {{"theta_angle", 0.0}, {"interval", {-1.0, 1.0}}, {"a", 1.0}}, {"transfer"},
               run_transfer});
  r.push_back({"delta_kernel",
               "delta(U,z) = (1 - z U*)^{-1} - (1 - conj(z)^{-1} U*)^{-1} = (1 - |z|^2) G G*", all,
               true, {{"n_points", 20}, {"r_max", 0.95}}, {"delta"}, run_delta});
  json p11 = log_t;
  p11["t_grid"] = json::array();
  r.push_back({"c11_integrand", "||e^{-itA}Ue^{itA} + e^{itA}Ue^{-itA} - 2U||, U in C^{1,1}(A)", all,
               false, p11, {}, [](CheckContext& c) { return run_integrand(c, true); }});
  r.push_back({"c1plus0_integrand", "||e^{-itA}[A,U]e^{itA} - [A,U]||, U in C^{1+0}(A)", all, false,
               p11, {}, [](CheckContext& c) { return run_integrand(c, false); }});
  json pc = log_t;
  pc["K_schedule"] = {32, 64, 128};
  r.push_back({"classify", "C^2(A) in C^{1+0}(A) in C^{1,1}(A) in C^1(A): Dini-type integrals at t -> 0",
               all, false, pc, {}, run_classify});
  r.push_back({"lap_sweep",
               "<A>^{-s} (H_theta - lambda -+ i eps)^{-1} <A>^{-s} has weak* limits as eps -> 0",
               lattice, true,
               {{"theta_angle", 0.0},
                {"lambda", {0.0}},
                {"s", 0.6},
                {"eps", {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}},
                {"k_factor", 1.0},
                {"k_min", 32},
                {"max_doublings", 6},
                {"slope_min", nullptr},
                {"slope_max", nullptr}},
               {"lap_rel_change"}, run_lap});
  r.push_back({"smooth_sum", "sum_n ||<A>^{-s} U^n phi||^2 <= c ||phi||^2 for s > 1/2 (global U-smoothness)",
               lattice, true,
               {{"s", 0.6}, {"probes", {0}}, {"log2_N", 8}, {"k_lo", 3}, {"k_hi", 7}, {"expect", "decrease"}},
               {}, run_smooth});
  r.push_back({"smooth_sup_disk", "sup_{z in D} |<phi, B delta(U,z) E B* phi>| < infinity", all, false,
               {{"s", 0.6}, {"window", {-1.0, 1.0}}, {"radii", {0.0, 0.5, 0.9, 0.99}}, {"n_angles", 16}, {"probes", {0}}},
               {}, run_sup_disk});
  r.push_back({"wiener_diagnostic",
               "(1/N) sum_{n<=N} |<phi, U^n phi>|^2 -> sum of squared atoms of the spectral measure",
               lattice, false,
               {{"probe", 0}, {"N", 1 << 14}, {"trim", 1e-18}, {"fit_max_N", 512}}, {}, run_wiener});
  r.push_back({"averaged_conjugate",
               "[A_n, U] = (1/n) sum_j U^{-j} [A,U] U^j with A_n = (1/n) sum_j U^{-j} A U^j", all, false,
               {{"n", {1, 2, 5, 10}}, {"K", nullptr}}, {"lemma_a"}, run_averaged});
  r.push_back({"ergodic_average_bound",
               "sup_x |(1/n) sum_{j=1}^n h'(x - j theta)| < 1/2 for n large (unique ergodicity)",
               {"cocycle"}, false, {{"n", {1, 2, 3, 4, 5, 6, 7, 8}}, {"grid_size", 4096}},
               {"ergodic_match"}, run_ergodic});
  r.push_back({"mourre_constant_cocycle", "U*[P_n, U] >= pi", {"cocycle"}, false,
               {{"n", 3}, {"margin", 0.05}, {"n_sweep", json::array()}}, {}, run_cocycle_constant});
  r.push_back({"commutator_symbol", "U*[A,U] = 2T P^2 (P^2 + 1)^{-1}", {"free_evolution"}, false,
               {{"max_error", 1e-4}}, {}, run_symbol});
  r.push_back({"form_identity", "U*[A,U] = c 1 (shift: c = 1, dilation flow: c = 2t)", lattice, false,
               json::object(), {}, run_form_identity});
  return r;
}

}  // namespace

const std::vector<CheckInfo>& check_registry() {
  static const std::vector<CheckInfo> registry = make_registry();
  return registry;
}

const CheckInfo* find_check(const std::string& name) {
  for (const CheckInfo& c : check_registry())
    if (c.name == name) return &c;
  return nullptr;
}

}  // namespace mourre
