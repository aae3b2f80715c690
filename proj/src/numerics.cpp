#include "hyperscat/numerics.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_bessel.h>

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <thread>

namespace hyperscat {

namespace {

// GSL must not abort the process; statuses are checked at call sites.
const int g_gsl_handler_off = [] {
  gsl_set_error_handler_off();
  return 0;
}();

}  // namespace

complex eighth_root_phase(long k) {
  static const double r = std::sqrt(0.5);
  static const complex table[8] = {{1, 0}, {r, r}, {0, 1}, {-r, r},
                                   {-1, 0}, {-r, -r}, {0, -1}, {r, -r}};
  long m = k % 8;
  if (m < 0) m += 8;
  return table[m];
}

double sphere_area(int d) {
  if (d < 1) throw std::domain_error("sphere_area: d must be >= 1");
  // |S^{d-1}| = 2 pi^{d/2} / Gamma(d/2); d = 1 gives the two-point set, area 2.
  return 2.0 * std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d);
}

Quad1D gauss_legendre(int n) {
  if (n < 1) throw std::domain_error("gauss_legendre: n must be >= 1");
  gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(static_cast<size_t>(n));
  if (!t) throw std::runtime_error("gauss_legendre: table allocation failed");
  Quad1D q;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double xi, wi;
    gsl_integration_glfixed_point(-1.0, 1.0, static_cast<size_t>(i), &xi, &wi, t);
    q.x[i] = xi;
    q.w[i] = wi;
  }
  gsl_integration_glfixed_table_free(t);
  return q;
}

Quad1D gauss_legendre_ab(int n, double a, double b) {
  Quad1D q = gauss_legendre(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    q.x[i] = mid + half * q.x[i];
    q.w[i] *= half;
  }
  return q;
}

Quad1D gauss_jacobi(int n, double a, double b) {
  if (n < 1) throw std::domain_error("gauss_jacobi: n must be >= 1");
  if (a <= -1.0 || b <= -1.0) throw std::domain_error("gauss_jacobi: need a, b > -1");
  // Golub-Welsch on the monic three-term recurrence for weight (1-x)^a (1+x)^b.
  Eigen::VectorXd diag(n), sub(std::max(n - 1, 0));
  const double apb = a + b;
  diag[0] = (b - a) / (apb + 2.0);
  for (int k = 1; k < n; ++k) {
    const double t = 2.0 * k + apb;
    diag[k] = (b * b - a * a) / (t * (t + 2.0));
  }
  for (int k = 1; k < n; ++k) {
    const double t = 2.0 * k + apb;
    double beta;
    if (k == 1)
      beta = 4.0 * (a + 1.0) * (b + 1.0) / ((apb + 2.0) * (apb + 2.0) * (apb + 3.0));
    else
      beta = 4.0 * k * (k + a) * (k + b) * (k + apb) / (t * t * (t + 1.0) * (t - 1.0));
    sub[k - 1] = std::sqrt(beta);
  }
  const double mu0 =
      std::pow(2.0, apb + 1.0) *
      std::exp(std::lgamma(a + 1.0) + std::lgamma(b + 1.0) - std::lgamma(apb + 2.0));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("gauss_jacobi: tridiagonal eigensolve failed");

  Quad1D q;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < n; ++i) {
    q.x[i] = es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    q.w[i] = mu0 * v0 * v0;
  }
  return q;
}

double legendre_p(int l, double x) {
  if (l < 0) throw std::domain_error("legendre_p: l must be >= 0");
  if (l == 0) return 1.0;
  double pm1 = 1.0, p = x;
  for (int k = 2; k <= l; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p - (k - 1.0) * pm1) / k;
    pm1 = p;
    p = pk;
  }
  return p;
}

double jacobi_p(int n, double a, double b, double x) {
  if (n < 0) throw std::domain_error("jacobi_p: n must be >= 0");
  if (n == 0) return 1.0;
  double pm1 = 1.0;
  double p = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
  for (int k = 2; k <= n; ++k) {
    const double t = 2.0 * k + a + b;
    const double c1 = 2.0 * k * (k + a + b) * (t - 2.0);
    const double c2 = (t - 1.0) * (t * (t - 2.0) * x + a * a - b * b);
    const double c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * t;
    const double pk = (c2 * p - c3 * pm1) / c1;
    pm1 = p;
    p = pk;
  }
  return p;
}

double assoc_legendre_norm(int l, int m, double x) {
  if (m < 0 || m > l) throw std::domain_error("assoc_legendre_norm: need 0 <= m <= l");
  const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
  // Seed \bar P_m^m, then two-term upward recurrence in l.
  double pmm = 1.0 / std::sqrt(4.0 * pi);
  for (int k = 1; k <= m; ++k) pmm *= std::sqrt((2.0 * k + 1.0) / (2.0 * k)) * s;
  if (l == m) return pmm;
  double plm1 = pmm;
  double pl = std::sqrt(2.0 * m + 3.0) * x * pmm;
  for (int k = m + 2; k <= l; ++k) {
    const double f1 = std::sqrt((4.0 * k * k - 1.0) / (static_cast<double>(k) * k - m * m));
    const double f2 =
        std::sqrt(((k - 1.0) * (k - 1.0) - m * m) / (4.0 * (k - 1.0) * (k - 1.0) - 1.0));
    const double pk = f1 * (x * pl - f2 * plm1);
    plm1 = pl;
    pl = pk;
  }
  return pl;
}

double bessel_jnu(double nu, double x) {
  gsl_sf_result r;
  int status = gsl_sf_bessel_Jnu_e(nu, x, &r);
  if (status != 0 && status != GSL_EUNDRFLW)
    throw std::runtime_error("bessel_jnu failed: " + std::string(gsl_strerror(status)));
  return r.val;
}

double bessel_ynu(double nu, double x) {
  gsl_sf_result r;
  int status = gsl_sf_bessel_Ynu_e(nu, x, &r);
  if (status != 0 && status != GSL_EUNDRFLW)
    throw std::runtime_error("bessel_ynu failed: " + std::string(gsl_strerror(status)));
  return r.val;
}

complex hankel1(double nu, double x) { return {bessel_jnu(nu, x), bessel_ynu(nu, x)}; }
complex hankel2(double nu, double x) { return {bessel_jnu(nu, x), -bessel_ynu(nu, x)}; }

namespace {

struct GslFn {
  const std::function<double(double)>* f;
};

double gsl_fn_thunk(double x, void* p) { return (*static_cast<GslFn*>(p)->f)(x); }

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double epsabs, double epsrel) {
  constexpr size_t limit = 4000;
  std::unique_ptr<gsl_integration_workspace, void (*)(gsl_integration_workspace*)> ws(
      gsl_integration_workspace_alloc(limit), gsl_integration_workspace_free);
  GslFn wrap{&f};
  gsl_function gf;
  gf.function = &gsl_fn_thunk;
  gf.params = &wrap;
  double result = 0.0, abserr = 0.0;
  int status = gsl_integration_qags(&gf, a, b, epsabs, epsrel, limit, ws.get(), &result, &abserr);
  if (status != 0) {
    // Tolerate benign roundoff reports as long as the error estimate is sane.
    const double gate = std::max(epsabs, epsrel * std::abs(result)) * 100.0 + 1e-300;
    if (abserr > gate)
      throw accuracy_error("integrate_adaptive: requested tolerance not reached", abserr);
  }
  return result;
}

complex integrate_adaptive_c(const std::function<complex(double)>& f, double a, double b,
                             double epsabs, double epsrel) {
  const double re = integrate_adaptive([&f](double x) { return f(x).real(); }, a, b, epsabs, epsrel);
  const double im = integrate_adaptive([&f](double x) { return f(x).imag(); }, a, b, epsabs, epsrel);
  return {re, im};
}

complex richardson_extrapolate(const std::vector<double>& eps, const std::vector<complex>& v) {
  if (eps.size() != v.size() || eps.size() < 3)
    throw std::invalid_argument("richardson_extrapolate: need >= 3 samples");
  const std::size_t n = eps.size();
  // Quadratic fit through the last three (eps, v) pairs, evaluated at eps = 0.
  const double e0 = eps[n - 3], e1 = eps[n - 2], e2 = eps[n - 1];
  const complex v0 = v[n - 3], v1 = v[n - 2], v2 = v[n - 1];
  const double d01 = e0 - e1, d02 = e0 - e2, d12 = e1 - e2;
  return v0 * (e1 * e2) / (d01 * d02) - v1 * (e0 * e2) / (d01 * d12) +
         v2 * (e0 * e1) / (d02 * d12);
}

std::vector<double> ChebInterp::nodes(int n, double lo, double hi) {
  if (n < 1) throw std::invalid_argument("ChebInterp::nodes: n must be >= 1");
  if (!(hi > lo)) throw std::invalid_argument("ChebInterp::nodes: need hi > lo");
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  std::vector<double> x(static_cast<std::size_t>(n));
  // cos(pi (k + 1/2) / n) decreases with k; negate so the list increases.
  for (int k = 0; k < n; ++k) x[k] = mid - half * std::cos(pi * (k + 0.5) / n);
  return x;
}

ChebInterp ChebInterp::fit(const Eigen::MatrixXd& samples, double lo, double hi) {
  const int n = static_cast<int>(samples.rows());
  if (n < 1) throw std::invalid_argument("ChebInterp::fit: need >= 1 sample row");
  if (!(hi > lo)) throw std::invalid_argument("ChebInterp::fit: need hi > lo");
  // nodes() maps k to t_k = -cos(theta_k) = cos(pi - theta_k), theta_k = pi (k+1/2)/n,
  // so T_j(t_k) = cos(j (pi - theta_k)) and the discrete orthogonality reads
  // a_j = (2 - delta_{j0}) / n * sum_k f(x_k) T_j(t_k).
  Eigen::MatrixXd design(n, n);
  for (int j = 0; j < n; ++j) {
    const double scale = (j == 0 ? 1.0 : 2.0) / n;
    for (int k = 0; k < n; ++k)
      design(j, k) = scale * std::cos(j * (pi - pi * (k + 0.5) / n));
  }
  ChebInterp interp;
  interp.lo = lo;
  interp.hi = hi;
  interp.coeffs = design * samples;
  return interp;
}

Eigen::VectorXd ChebInterp::eval(double x) const {
  const int n = static_cast<int>(coeffs.rows());
  if (n == 0) throw std::logic_error("ChebInterp::eval: empty interpolant");
  const double t = (2.0 * x - lo - hi) / (hi - lo);
  // Clenshaw downward recurrence for sum_k a_k T_k(t), columns in parallel.
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(coeffs.cols());
  Eigen::VectorXd b2 = b1;
  for (int k = n - 1; k >= 1; --k) {
    Eigen::VectorXd b0 = coeffs.row(k).transpose() + 2.0 * t * b1 - b2;
    b2.swap(b1);
    b1.swap(b0);
  }
  return coeffs.row(0).transpose() + t * b1 - b2;
}

int thread_cap() {
  if (const char* env = std::getenv("HYPERSCAT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const int nt = std::min<std::size_t>(static_cast<std::size_t>(thread_cap()), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::atomic<std::size_t>* counter = new std::atomic<std::size_t>(0);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&body, counter, n] {
      for (;;) {
        const std::size_t i = counter->fetch_add(1);
        if (i >= n) break;
        body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
  delete counter;
}

}  // namespace hyperscat
