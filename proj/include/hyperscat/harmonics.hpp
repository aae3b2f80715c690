#pragma once

// Hyperspherical harmonics on S^{d-1} built over a canonical binary
// coordinate tree, product quadrature rules over the same tree, and
// projection of functions on the sphere onto the harmonic basis.
//
// Tree convention: a d-dimensional node with d > 3 splits into a left
// (internal, first d-3 components, carrying cos(alpha)) subtree and a right
// (external, last 3 components, carrying sin(alpha)) leaf; d <= 3 is a leaf.
// This mirrors the nested internal/external grouping of stacked Jacobi
// vectors, where coarser partitions peel 3-vectors off the tail.
//
// The basis is real-orthonormal: for d = 3 these are the real spherical
// harmonics (cos/sin azimuthal combinations, no Condon-Shortley phase).

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "hyperscat/numerics.hpp"

namespace hyperscat::harmonics {

/// Index [K] of one hyperspherical harmonic: principal degree K (eigenvalue
/// -K(K+d-2) of the Laplace-Beltrami operator) plus the integer subindices
/// down the canonical tree, flattened in preorder:
///   - branching node of degree k: (k, n) with k = l_left + l_right + 2n,
///     followed by the left subtree (degree l_left), then the right;
///   - 3-dim leaf: (l, m) with -l <= m <= l  (m > 0 cosine, m < 0 sine);
///   - 2-dim leaf: (m) with |m| = degree     (same sign convention);
///   - 1-dim leaf: (l) with l in {0, 1}      (constant / sign harmonic).
class HarmonicIndex {
public:
    HarmonicIndex(int d, std::vector<int> subindices);

    int dim() const { return d_; }
    int degree() const { return K_; }
    const std::vector<int>& subindices() const { return sub_; }
    std::string str() const;

    bool operator==(const HarmonicIndex& o) const { return d_ == o.d_ && sub_ == o.sub_; }
    bool operator<(const HarmonicIndex& o) const;

private:
    int d_ = 0;
    int K_ = 0;
    std::vector<int> sub_;
};

/// All admissible indices with degree K <= kmax, ordered by (K, subindices).
std::vector<HarmonicIndex> enumerate_harmonics(int d, int kmax);

/// Number of independent harmonics of degree exactly K on S^{d-1}:
/// C(K+d-1, d-1) - C(K+d-3, d-1).
long harmonic_dimension(int d, int K);

/// Value of the (real) harmonic at a unit vector.
double evaluate_harmonic(const HarmonicIndex& idx, const Eigen::VectorXd& xhat);

/// Nodes (rows) and weights of a positive quadrature rule on S^{d-1}.
/// Exact (to roundoff) for spherical polynomials of ambient degree
/// <= exact_degree, hence for products of pairs of harmonics with
/// K <= exact_degree / 2.
struct SphereQuadrature {
    Eigen::MatrixXd nodes;
    Eigen::VectorXd weights;
    int exact_degree = 0;
    Eigen::Index size() const { return weights.size(); }
};

/// Product rule over the canonical tree: Gauss-Jacobi in each hyperangle,
/// Gauss-Legendre in each polar cosine, trapezoidal in each azimuth.
/// exact_degree = 2*level + 1.  Supported for 3 <= d <= 9.
SphereQuadrature build_quadrature(int d, int level);

/// Memoized build_quadrature keyed by (d, level).  The returned reference
/// stays valid for the lifetime of the program; safe to call concurrently.
const SphereQuadrature& shared_quadrature(int d, int level);

/// Coefficients <Y_[K], f> for every index in the basis.
Eigen::VectorXcd project(const std::function<complex(const Eigen::VectorXd&)>& f,
                         const std::vector<HarmonicIndex>& basis, const SphereQuadrature& quad);

/// Matrix Y with Y(i, j) = Y_basis[j](node_i), shared workhorse for
/// projections and potential matrix elements.
Eigen::MatrixXd evaluation_matrix(const std::vector<HarmonicIndex>& basis,
                                  const SphereQuadrature& quad);

}  // namespace hyperscat::harmonics
