#pragma once
// Singular-integral engine: the regularizations that turn formally singular
// kernel averages into absolutely convergent quadratures.
//
// Four mechanisms, each exposed on its own and combined by the sphere-average
// dispatcher F_pm:
//   * log-subtraction       \int_{-1}^{1} B(u)/(u - zeta -+ i0) du
//                           integrated by parts so only the integrable
//                           ln(u - zeta) remains under the integral;
//   * endpoint-weighted     \int_0^1 sqrt(v(1-v)) B(v)/(v - z - i0) dv by
//     pole                  Gauss-Jacobi nodes that respect the endpoint
//                           weight plus subtraction of the closed-form
//                           weight moment W(z);
//   * delta reduction       a momentum delta pinning part of a d-sphere
//                           average onto an internal subsphere, with the
//                           exact phase-space prefactor;
//   * principal value +     the radial on-shell pole 1/(P'^2 - P^2 - i0)
//     residue               against outgoing/incoming wave factors.
//
// Conventions: a real energy passed to a kernel means the +i0 boundary (see
// tmatrix.hpp); boundary sides of the 1-d poles are explicit parameters.

#include <functional>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "hyperscat/numerics.hpp"
#include "hyperscat/oscillatory.hpp"
#include "hyperscat/tmatrix.hpp"

namespace hyperscat::singular {

using oscillatory::AngularFn;
/// Smooth numerator profile of a 1-d singular integral.
using CFn = std::function<complex(double)>;

/// Thrown when a kernel's declared taxonomy cannot account for the observed
/// behavior (quadrature refinement diverges on a smooth-tagged kernel).
struct taxonomy_error : std::logic_error {
    using std::logic_error::logic_error;
};

enum class Regularization { log_subtraction, endpoint_weighted, pv_plus_residue, delta_reduction };

/// Finite-difference bound on the second derivative of a swept result;
/// produced only when a parameter sweep was requested.
struct SmoothnessCertificate {
    double lo = 0.0;     ///< swept shell-radius window
    double hi = 0.0;
    int samples = 0;
    double second_derivative_bound = 0.0;  ///< max |central second difference|
};

struct SingularIntegralResult {
    complex value{0.0, 0.0};
    double error_estimate = 0.0;
    Regularization regularization = Regularization::log_subtraction;
    bool below_threshold = false;  ///< delta reduction hit an empty shell
    std::optional<SmoothnessCertificate> smoothness_certificate;
};

/// \int_{-1}^{1} B(u) / (u - zeta -+ i0) du for continuously differentiable B:
///   ln(1 - zeta) B(1) - ln(-1 - zeta) B(-1) - \int_{-1}^{1} ln(u - zeta) B'(u) du
/// with every logarithm on the same boundary side as the denominator.  The
/// side tag only matters while zeta sits on the real axis; off the axis the
/// principal logarithm applies.  B' is taken by second-order finite
/// differences unless supplied.  Throws std::domain_error when the pole is
/// pinned at an endpoint (zeta = +-1).
complex cauchy_log_subtraction(const CFn& B, complex zeta, Boundary side,
                               const CFn* Bprime = nullptr);

/// Closed-form weight moment W(z) = \int_0^1 sqrt(v(1-v))/(v - z -+ i0) dv
///   = pi (1/2 - z + z sqrt(1 - 1/z)),   principal branch, cut on (0,1);
/// on the cut W = pi(1/2 - z) +- i pi sqrt(z(1-z)) (upper sign: minus_i0).
complex endpoint_weight_moment(complex z, Boundary side = Boundary::minus_i0);

/// \int_0^1 sqrt(v) sqrt(1-v) B(v) / (v - z - i0) dv by an n-point
/// Gauss-Jacobi rule on the subtracted integrand plus B(v*) W(z), the
/// subtraction point v* = clamp(Re z, 0, 1).  Passing plus_i0 flips the
/// denominator to v - z + i0.  Accurate for z real (tagged) or away from
/// the interval; the endpoint weight makes the result smooth in z.
complex endpoint_weighted_pole(const CFn& B, complex z, Boundary side = Boundary::minus_i0,
                               int n = 48);

/// Reduction of a d-sphere average against a momentum delta:
///   \int_{S^{d-1}} dPhat' tc(|P'| Phat'_int) G(Phat') delta(|P'| Phat'_ext - p_ext)
///   = (P'^2 - p^2)^{(dm-2)/2} / |P'|^{d-2}
///     x \int_{S^{dm-1}} dkhat tc(sqrt(P'^2 - p^2) khat) G((sqrt(P'^2-p^2) khat, p_ext)/|P'|)
/// with dm = d - dim(p_ext) the internal dimension.  An empty shell
/// (P'^2 <= p^2) returns 0 with the below_threshold flag set.
SingularIntegralResult delta_reduce_Dm(const std::function<complex(const Eigen::VectorXd&)>& tc,
                                       const AngularFn& G, const Eigen::VectorXd& p_ext,
                                       double Pprime, int d, int level = 8);

enum class WaveSign { plus, minus };

struct FpmOptions {
    int angular_level = 6;   ///< resolution of direction averages (S^2, azimuth)
    int u_nodes = 48;        ///< Chebyshev nodes for the moving-pole profile
    int v_nodes = 48;        ///< Gauss-Jacobi nodes in the hyperangle variable
    bool certificate = false;            ///< sweep |P'| and report an FD2 bound
    double certificate_halfwidth = 0.05; ///< relative window half-width
    int certificate_samples = 5;         ///< odd, >= 3
};

/// Sphere average of an evaluatable kernel against a weight G:
///   F^{+-}(|P'|, P; G) = \int_{S^{d-1}} dPhat' T(|P'| Phat', P, P^2 + i0) G(+-Phat').
/// Dispatch by model kind: smooth kernels go to plain product quadrature with
/// a refinement-divergence check (taxonomy_error when it fails to settle);
/// delta-connected kernels to delta_reduce_Dm; form-factor poles to
/// endpoint_weighted_pole in v = sin^2(alpha); composed two-cluster kernels
/// split the pair propagator into pole + smooth parts and route the moving
/// denominator through cauchy_log_subtraction in u = <phat'_a, phat_b>.
SingularIntegralResult F_pm(const tmatrix::TKernel& T, const Eigen::VectorXd& P, double Pprime,
                            const AngularFn& G, WaveSign sign, FpmOptions opts = {});

/// Values of a family of angular weights at a batch of unit vectors: rows of
/// the argument are directions, column j of the result belongs to weight j.
using AngularBatchFn = std::function<Eigen::MatrixXcd(const Eigen::MatrixXd&)>;

/// F_pm for `count` angular weights sharing one set of kernel evaluations per
/// quadrature level (smooth kernels; structured kernels fall back to the
/// per-weight path).  Certificate sweeps are skipped; convergence of the
/// level refinement is still checked per weight.
std::vector<SingularIntegralResult> F_pm_batch(const tmatrix::TKernel& T,
                                               const Eigen::VectorXd& P, double Pprime,
                                               const AngularBatchFn& G, int count,
                                               WaveSign sign, FpmOptions opts = {});

enum class RadialMode { exact, asymptotic };

/// Radial on-shell pole integral against spherical-wave factors,
///   I^{+-} = \int_0^inf r^{d-1} dr Q_d^{+-}(r, |X|) N_d(r) F(r) / (r^2 - P^2 - i0),
/// exact mode: principal-value subtraction plus the i pi residue at r = P.
/// Asymptotic mode (large |X|): the contour around the pole gives
///   I^+ ~ i pi P^{d-2} Q_d^+(P, |X|) N_d(P) F(P),
/// while the (-) wave encloses no pole and the asymptotic value is 0.
/// r_max = 0 picks max(6P, 12); a not-yet-decayed integrand there raises
/// accuracy_error.
SingularIntegralResult radial_pole_integral(const CFn& F, double P, double xmag, int d,
                                            WaveSign sign, RadialMode mode, double r_max = 0.0);

}  // namespace hyperscat::singular
