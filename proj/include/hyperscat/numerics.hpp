#pragma once

// Shared numerical utilities: orthogonal-polynomial recurrences, Gauss rules,
// adaptive quadrature wrappers, Bessel functions, and boundary-side bookkeeping
// for distributional limits 1/(x - x0 ± i0).

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyperscat {

using complex = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846264338327950288;

/// Raised when an adaptive scheme cannot reach the requested tolerance.
struct accuracy_error : std::runtime_error {
  double achieved;
  accuracy_error(const std::string& what, double achieved_estimate)
      : std::runtime_error(what), achieved(achieved_estimate) {}
};

/// Side of the real axis a boundary value is taken from; a denominator
/// 1/(x - x0 - i0) carries minus_i0, i.e. the pole sits at x0 + i0.
enum class Boundary { plus_i0, minus_i0 };

inline int boundary_sign(Boundary b) { return b == Boundary::plus_i0 ? +1 : -1; }
inline Boundary flip(Boundary b) {
  return b == Boundary::plus_i0 ? Boundary::minus_i0 : Boundary::plus_i0;
}

/// e^{i pi k / 4} from the exact eighth-roots-of-unity table (k any integer).
complex eighth_root_phase(long k);

/// Surface area of the unit sphere S^{d-1} embedded in R^d.
double sphere_area(int d);

/// One-dimensional quadrature rule: sum w[i] f(x[i]).
struct Quad1D {
  std::vector<double> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

/// Gauss-Legendre rule on [-1, 1].
Quad1D gauss_legendre(int n);

/// Gauss-Legendre rule mapped to [a, b].
Quad1D gauss_legendre_ab(int n, double a, double b);

/// Gauss-Jacobi rule for weight (1-x)^a (1+x)^b on [-1, 1] (Golub-Welsch).
Quad1D gauss_jacobi(int n, double a, double b);

double legendre_p(int l, double x);
double jacobi_p(int n, double a, double b, double x);

/// Associated Legendre \bar P_l^m = sqrt((2l+1)(l-m)!/(4 pi (l+m)!)) P_l^m
/// without the Condon-Shortley phase, so int_{-1}^{1} (\bar P_l^m)^2 dx
/// = 1/(2 pi) for every m; requires 0 <= m <= l.
double assoc_legendre_norm(int l, int m, double x);

double bessel_jnu(double nu, double x);
double bessel_ynu(double nu, double x);
complex hankel1(double nu, double x);
complex hankel2(double nu, double x);

/// Adaptive quadrature (integrable endpoint singularities allowed).
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double epsabs = 1e-12, double epsrel = 1e-10);
complex integrate_adaptive_c(const std::function<complex(double)>& f, double a, double b,
                             double epsabs = 1e-12, double epsrel = 1e-10);

/// Richardson extrapolation eps -> 0 assuming v(eps) = v0 + c1 eps + c2 eps^2,
/// using the last three points of the schedule.
complex richardson_extrapolate(const std::vector<double>& eps, const std::vector<complex>& v);

/// Chebyshev interpolant on [lo, hi] for a family of smooth functions sampled
/// together: column j of the sample matrix is an independent function, and
/// eval(x) returns the vector of all column values at x (Clenshaw recurrence).
/// Exact through polynomial degree n-1 when fitted from n nodes.
struct ChebInterp {
  double lo = -1.0;
  double hi = 1.0;
  Eigen::MatrixXd coeffs;  // row k holds the degree-k coefficient of each column

  /// The n Chebyshev-Gauss abscissae of [lo, hi], in increasing order.
  static std::vector<double> nodes(int n, double lo, double hi);

  /// Fits from samples(k, j) = f_j(nodes(n, lo, hi)[k]) with n = samples.rows().
  static ChebInterp fit(const Eigen::MatrixXd& samples, double lo, double hi);

  Eigen::VectorXd eval(double x) const;
};

/// Thread cap from HYPERSCAT_THREADS (default: hardware concurrency).
int thread_cap();

/// Deterministic chunked parallel loop: body(i) writes only slot i state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hyperscat
