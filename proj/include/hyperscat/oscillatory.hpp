#pragma once

// Sphere-averaged plane waves: exact evaluation of
//     J(|X|, P; G) = (2pi)^{-d/2} \int_{S^{d-1}} dXhat e^{i<P,X>} G(Xhat)
// by reduction to a one-dimensional oscillatory integral, and its large-|X|
// stationary-phase form as a superposition of incoming/outgoing spherical
// waves.  Also the generic large-|x| form of d-dimensional pole integrals
// \int dq e^{i<x,q>} f(q) / (q^2 - p^2 -+ i0).

#include <Eigen/Dense>

#include <functional>

#include "hyperscat/harmonics.hpp"
#include "hyperscat/numerics.hpp"

namespace hyperscat::oscillatory {

using AngularFn = std::function<complex(const Eigen::VectorXd&)>;

/// Spherical-wave factors in R^d at momentum magnitude p:
///   Q^{+-}(x) = exp{+- i p x -+ i pi (d-3)/4} / x^{(d-1)/2},
///   N_d       = i (2 pi)^{-1/2} p^{-(d-1)/2}.
/// The quarter-turn phases come from the exact eighth-roots table.
class SphericalWaveFactors {
public:
    SphericalWaveFactors(int d, double pmag);
    int dim() const { return d_; }
    double pmag() const { return p_; }
    complex Qplus(double xmag) const;
    complex Qminus(double xmag) const;
    complex Nd() const;

private:
    int d_;
    double p_;
};

/// Exact sphere average of the plane wave against G, by splitting the sphere
/// direction into the component along Phat and a transverse S^{d-2} factor:
/// the transverse average h(u) is smooth, and the remaining
/// \int_{-1}^{1} du (1-u^2)^{(d-3)/2} e^{i kappa u} h(u), kappa = |P||X|,
/// is handled by Gauss-Jacobi rules sized to the oscillation with
/// level-doubling until two consecutive levels agree to `tol` (relative).
/// The transverse rule resolves G at the resolution of `quad`.
/// Throws accuracy_error when doubling stalls above tol.
complex J_exact(const Eigen::VectorXd& X, const Eigen::VectorXd& P, const AngularFn& G,
                const harmonics::SphereQuadrature& quad, double tol = 1e-8);

/// Stationary-phase form N_d [Q^- G(-Phat) - Q^+ G(Phat)].
/// Throws for |P| = 0, where the large parameter |P||X| degenerates.
complex J_asymptotic(double xmag, const Eigen::VectorXd& P, const AngularFn& G);

/// Large-|x| form of \int dq e^{i<x,q>} f(q) / (q^2 - p^2 - sign*i0):
///   pi (2pi)^{(d-1)/2} p^{(d-3)/2} f(sign p xhat)
///     * exp{sign (i p |x| - i pi (d-3)/4)} / |x|^{(d-1)/2}.
/// sign = +1 pairs with the -i0 boundary (outgoing), -1 with +i0 (incoming).
complex pole_integral_asymptotic(const Eigen::VectorXd& x, double p, const AngularFn& f, int sign);

}  // namespace hyperscat::oscillatory
