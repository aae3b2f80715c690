#pragma once
// Two-body transition operators and evaluatable many-body kernel models.
//
// Units: the free Hamiltonian is -Laplacian in mass-weighted Jacobi
// coordinates, so the two-body relative energy is E = k^2 and a bound state
// sits at z = -lambda^2 < 0.  Kernels follow the resolvent convention
// R0(z) = (H0 - z)^{-1}, for which the Lippmann-Schwinger equation reads
// t(z) = V - V R0(z) t(z).  Momentum kernels carry the normalization
// V(k', k) = (2pi)^{-3} \int V(x) e^{-i<k'-k, x>} dx, and partial waves use
// the eigen-coefficient convention
//   K(k', k) = sum_{lm} K_l(|k'|, |k|) Y_lm(khat') conj(Y_lm(khat)),
// in which the on-shell sphere S-matrix eigenvalue is S_l = 1 - i pi k t_l.

#include <complex>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hyperscat/jacobi.hpp"
#include "hyperscat/numerics.hpp"
#include "hyperscat/partitions.hpp"

namespace hyperscat::tmatrix {

// ---------------------------------------------------------------------------
// Separable rank-1 model: V(k', k) = coupling * g(k') g(k) with the
// monopole form factor g(k) = 1 / (k^2 + beta^2).  Everything is closed form:
//   bubble  I(z) = <g| R0(z) |g> = pi^2 / (beta (beta + w)^2),  w = sqrt(-z),
//   tau(z)  = coupling / (1 + coupling * I(z)),
//   t(k',k,z) = g(k') tau(z) g(k).
// A bound state at z = -lambda^2 exists iff coupling < -beta^3/pi^2; the
// residue of t there factorizes as phi(k') phi(k) with phi = c g and
// c^2 = 1 / I'(-lambda^2).
// ---------------------------------------------------------------------------
class SeparableModel {
public:
    SeparableModel(double coupling, double beta);

    /// Model whose tau(z) has its pole exactly at z = -lambda_a^2:
    /// coupling = -beta (beta + lambda_a)^2 / pi^2.
    static SeparableModel with_bound_state(double beta, double lambda_a);

    double coupling() const { return coupling_; }
    double beta() const { return beta_; }

    double g(double k) const { return 1.0 / (k * k + beta_ * beta_); }

    /// Bubble integral I(z); z must not lie exactly on the positive real
    /// axis (throws std::invalid_argument -- pass a Boundary side instead).
    complex bubble(complex z) const;
    complex bubble(double energy, Boundary side) const;

    complex tau(complex z) const;
    complex tau(double energy, Boundary side) const;

    complex t(double kp, double k, complex z) const;
    complex t(double kp, double k, double energy, Boundary side) const;

    bool has_bound_state() const;
    /// lambda_a > 0 with tau pole at z = -lambda_a^2 (throws if unbound).
    double bound_lambda() const;
    /// c > 0 with residue_{z=-lambda^2} t = c^2 g(k') g(k).
    double form_factor_norm() const;
    /// phi(k) = c g(k); identically zero when no bound state exists.
    double phi(double k) const;

    /// Smooth remainder tau(z) - c^2/(z + lambda^2); equals tau when
    /// unbound.  Finite at z = -lambda^2 (evaluated by a small Cauchy
    /// circle mean when the cancellation would lose all digits).
    complex tau_hat(complex z) const;

private:
    double coupling_;
    double beta_;
};

// ---------------------------------------------------------------------------
// Local central model V(|x|) with its 3-d Fourier transform supplied in
// closed form (needed on the unbounded momentum mesh of the LS solver).
// ---------------------------------------------------------------------------
struct LocalCentralModel {
    std::function<double(double)> v_r;     ///< V(r)
    std::function<double(double)> vtilde;  ///< \int V(x) e^{-i<q,x>} d^3x
    double r_decay = 10.0;                 ///< V negligible beyond this radius

    /// V(r) = v0 exp(-(r/range)^2);  vtilde(q) = v0 pi^{3/2} range^3
    /// exp(-q^2 range^2 / 4).
    static LocalCentralModel gaussian(double v0, double range);
};

/// Partial-wave kernel V_l(p, q) in the eigen-coefficient convention; the
/// radial LS equation is T_l(p',p) = V_l - \int_0^inf q^2 dq V_l(p',q)
/// T_l(q,p) / (q^2 - z).
using PartialWavePotential = std::function<double(double, double)>;

/// V_l(p,q) = (1/4pi^2) \int_{-1}^{1} P_l(u) vtilde(sqrt(p^2+q^2-2pqu)) du.
PartialWavePotential partial_wave_potential(const LocalCentralModel& model, int l);
/// 4 pi coupling g(p) g(q) for l = 0, identically zero otherwise.
PartialWavePotential partial_wave_potential(const SeparableModel& model, int l);

struct LSOptions {
    int mesh_size = 96;          ///< Gauss-Legendre points on the tangent mesh
    double mesh_scale = 0.0;     ///< 0 -> max(2, 1.5 k0)
    double unitarity_tol = 1e-8;
};

struct LSSolution {
    int l = 0;
    double k0 = 0.0;                ///< on-shell momentum sqrt(E)
    complex t_onshell;              ///< T_l(k0, k0, E + i0)
    complex s_value;                ///< 1 - i pi k0 t_onshell
    double delta = 0.0;             ///< arg(s_value)/2 in (-pi/2, pi/2]
    double unitarity_residual = 0.0;///< |Im t + (pi k0/2)|t|^2|
    std::vector<double> mesh;       ///< quadrature momenta (k0 appended last)
    Eigen::VectorXcd half_shell;    ///< T_l(mesh_i, k0)
    Eigen::MatrixXcd full;          ///< T_l(mesh_i, mesh_j) at z = E + i0
};

/// Solve the partial-wave LS equation at z = E + i0 by Nystrom quadrature
/// with principal-value subtraction on a tangent-mapped Gauss-Legendre mesh.
/// Throws accuracy_error when the half-shell unitarity residual exceeds
/// opts.unitarity_tol.
LSSolution ls_solve_twobody(const PartialWavePotential& vl, int l, double energy,
                            LSOptions opts = {});

/// Phase shift from the coordinate-space phase equation
///   delta'(r) = -(1/k) V(r) [cos(delta) jhat_l(kr) + sin(delta) nhat_l(kr)]^2
/// integrated from delta(0) = 0 to r_max (default model.r_decay); the
/// Riccati-Bessel pair is jhat_l(x) = x j_l(x), nhat_l(x) = -x y_l(x).
double variable_phase_delta(const LocalCentralModel& model, int l, double energy,
                            double r_max = 0.0);

// ---------------------------------------------------------------------------
// Two-body S-matrix kernel on the momentum sphere at fixed |k|:
//   S(khat', khat) = delta(khat' - khat) + C(<khat', khat>),
//   C = -(|k| / 2 pi i) f,   f = -2 pi^2 t.
// ---------------------------------------------------------------------------
class SKernel {
public:
    SKernel(double k, std::vector<complex> tl);

    double k() const { return k_; }
    int lmax() const { return static_cast<int>(tl_.size()) - 1; }

    /// Eigenvalue S_l = 1 - i pi k t_l (exactly 1 beyond lmax).
    complex partial_wave(int l) const;
    double phase_shift(int l) const { return 0.5 * std::arg(partial_wave(l)); }
    /// Smooth part C(u), u = <khat', khat>.
    complex smooth(double u) const;

private:
    double k_;
    std::vector<complex> tl_;
};

SKernel twobody_s_kernel(double k, const SeparableModel& model);
SKernel twobody_s_kernel(double k, const LocalCentralModel& model, int lmax = 8,
                         LSOptions opts = {});

// ---------------------------------------------------------------------------
// Evaluatable many-body kernel models.
//
// All evaluators take momenta in the Jacobi frame of the "left" two-cluster
// chain: P = (k_a, p_a) with the internal pair momentum first.  A real z is
// interpreted as the scattering boundary value z + i0.
// ---------------------------------------------------------------------------
enum class KernelTag { smooth, pole_left, pole_right, double_pole, delta_connected };

/// T(P', P) = amplitude * exp(-width * (P'^2 + P^2)); no singular structure.
struct GaussianKernelSpec {
    int d = 6;
    double amplitude = 1.0;
    double width = 1.0;
};

/// Composed two-cluster kernel t_a R0 t_b for three particles (a != b):
///   t_a(k'_a, k_a(p_b, p'_a), z - p'^2_a) t_b(k_b(p'_a, p_b), k_b, z - p^2_b)
///   -------------------------------------------------------------------------
///              |s_ba|^3 [ k_b^2(p'_a, p_b) + p_b^2 - z ]
/// with the exchange points k_a(p_b,p_a) = -p_b/s + (c/s) p_a and
/// k_b(p_a,p_b) = p_a/s - (c/s) p_b, (c, s) the mass rotation a -> b.
struct Composed3Spec {
    jacobi::MassSet masses;
    partitions::Partition part_a;  ///< left two-cluster partition
    partitions::Partition part_b;  ///< right two-cluster partition, != part_a
    SeparableModel pair_a;
    SeparableModel pair_b;
};

/// T(P', P, z) = phi(|k'_a|) / (z + lambda^2 - p'^2_a) * smooth(P', P).
struct FormFactorPoleSpec {
    SeparableModel pair;  ///< must have a bound state (supplies phi, lambda)
    GaussianKernelSpec smooth;
};

/// Two-cluster kernel t_a(k'_a, k_a, z - p_a^2) delta(p'_a - p_a); the
/// evaluator is only defined on the delta support (throws off it) and the
/// singular-integral engine consumes the delta analytically.
struct DeltaConnectedSpec {
    SeparableModel pair;
    int external_dim = 3;
};

using ModelSpec =
    std::variant<GaussianKernelSpec, Composed3Spec, FormFactorPoleSpec, DeltaConnectedSpec>;

/// Mass-rotation geometry of a composed two-cluster kernel.
struct Composed3Geometry {
    jacobi::RotationCoeffs ba;  ///< k_b = c k_a + s p_a,  p_b = -s k_a + c p_a

    Eigen::Vector3d to_b_internal(const Eigen::Vector3d& k_a, const Eigen::Vector3d& p_a) const {
        return ba.c * k_a + ba.s * p_a;
    }
    Eigen::Vector3d to_b_external(const Eigen::Vector3d& k_a, const Eigen::Vector3d& p_a) const {
        return -ba.s * k_a + ba.c * p_a;
    }
    Eigen::Vector3d k_cross_a(const Eigen::Vector3d& p_b, const Eigen::Vector3d& pp_a) const {
        return jacobi::momentum_exchange_point(p_b, pp_a, ba);
    }
    Eigen::Vector3d k_cross_b(const Eigen::Vector3d& pp_a, const Eigen::Vector3d& p_b) const {
        return jacobi::momentum_exchange_point(pp_a, p_b, {ba.c, -ba.s});
    }
    /// k_b^2(p'_a, p_b) + p_b^2 - z  (without the |s|^3 factor).
    complex moving_denominator(const Eigen::Vector3d& pp_a, const Eigen::Vector3d& p_b,
                               complex z) const {
        return complex(k_cross_b(pp_a, p_b).squaredNorm() + p_b.squaredNorm(), 0.0) - z;
    }
};

class TKernel {
public:
    TKernel(int d, std::set<KernelTag> taxonomy, ModelSpec spec,
            std::function<complex(const Eigen::VectorXd&, const Eigen::VectorXd&, complex)> eval,
            std::optional<Composed3Geometry> geometry = std::nullopt);

    int d() const { return d_; }
    const std::set<KernelTag>& taxonomy() const { return taxonomy_; }
    bool tagged(KernelTag tag) const { return taxonomy_.count(tag) > 0; }

    complex eval(const Eigen::VectorXd& pprime, const Eigen::VectorXd& p, complex z) const;

    const GaussianKernelSpec* gaussian() const { return std::get_if<GaussianKernelSpec>(&spec_); }
    const Composed3Spec* composed3() const { return std::get_if<Composed3Spec>(&spec_); }
    const FormFactorPoleSpec* form_factor_pole() const {
        return std::get_if<FormFactorPoleSpec>(&spec_);
    }
    const DeltaConnectedSpec* delta_connected() const {
        return std::get_if<DeltaConnectedSpec>(&spec_);
    }
    /// Present only for composed two-cluster kernels.
    const Composed3Geometry& geometry() const;

private:
    int d_;
    std::set<KernelTag> taxonomy_;
    ModelSpec spec_;
    std::function<complex(const Eigen::VectorXd&, const Eigen::VectorXd&, complex)> eval_;
    std::optional<Composed3Geometry> geometry_;
};

/// Build an evaluatable kernel from a model spec; taxonomy tags are derived
/// from the spec (bound-state content decides which pole tags appear).
TKernel model_NBody_kernel(const ModelSpec& spec);

/// tau evaluated at z with the +i0 convention for real z.
complex tau_plus(const SeparableModel& model, complex z);
/// tau_hat evaluated at z with the +i0 convention for real z.
complex tau_hat_plus(const SeparableModel& model, complex z);

}  // namespace hyperscat::tmatrix
