#pragma once

// Mass-weighted Jacobi coordinate maps per partition chain, orthogonal
// transforms between chains, and hyperspherical (rho, direction) conversion.
//
// Normalization: each Jacobi vector carries the (2 M M' / (M + M'))^{1/2}
// weight of the merging subsystem pair, so the free Hamiltonian of relative
// motion is exactly -Laplacian on R^d, d = 3(N-1), with no mass factors.

#include <Eigen/Dense>

#include "hyperscat/partitions.hpp"

namespace hyperscat::jacobi {

/// Particle masses in any consistent unit.
class MassSet {
public:
    explicit MassSet(std::vector<double> masses);
    int n() const { return static_cast<int>(masses_.size()); }
    /// Mass of particle j, 1-based to match partition elements.
    double mass(int j) const { return masses_.at(static_cast<size_t>(j - 1)); }
    const std::vector<double>& masses() const { return masses_; }
    bool operator==(const MassSet& o) const { return masses_ == o.masses_; }

private:
    std::vector<double> masses_;
};

/// Half-open component range [begin, end) into a stacked d-vector.
struct IndexRange {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
};

/// Linear map from particle positions (stacked r_1..r_N, 3N components) to
/// stacked Jacobi vectors (d components).  Jacobi vectors are stacked
/// innermost-first: slot 0 is the first pair merged off the fully split
/// partition, the last slot joins the final two clusters.  Hence the
/// components internal to the chain partition with l blocks are the prefix
/// of length 3(N-l) and the external ones are the suffix of length 3(l-1).
class JacobiSystem {
public:
    JacobiSystem(MassSet masses, partitions::PartitionChain chain, Eigen::MatrixXd map);

    int n() const { return masses_.n(); }
    int dim() const { return 3 * (n() - 1); }
    const MassSet& masses() const { return masses_; }
    const partitions::PartitionChain& chain() const { return chain_; }
    /// The d x 3N transform matrix.
    const Eigen::MatrixXd& map() const { return map_; }

    /// Components of x_{a_l} (internal to the l-block chain partition).
    IndexRange internal_range(int l) const;
    /// Components of y_{a_l} (external to the l-block chain partition).
    IndexRange external_range(int l) const;

    /// Stacked particle positions -> stacked Jacobi vectors.
    Eigen::VectorXd to_jacobi(const Eigen::VectorXd& r) const;
    /// Jacobi vectors -> the unique particle configuration with the
    /// mass-weighted centroid at the origin.
    Eigen::VectorXd from_jacobi(const Eigen::VectorXd& X) const;

private:
    MassSet masses_;
    partitions::PartitionChain chain_;
    Eigen::MatrixXd map_;
};

/// Assemble the Jacobi map for the given chain.  Sign gauge: in each merge
/// the block holding the smaller minimum element enters with + sign.
JacobiSystem build_jacobi(const MassSet& masses, const partitions::PartitionChain& chain);

/// Orthogonal d x d transform R with to.map = R * from.map on the
/// translation-invariant subspace.
Eigen::MatrixXd chain_rotation(const JacobiSystem& from, const JacobiSystem& to);

/// Mass-dependent coefficients of the three-body frame change
///     k_b = c k_a + s p_a,
///     p_b = -s k_a + c p_a,        c^2 + s^2 = 1.
struct RotationCoeffs {
    double c = 1;
    double s = 0;
};

/// Extract (c, s) for N = 3 from the 3x3-scalar block structure of the chain
/// rotation.  If the block-min gauge produced the reflection variant
/// [[c, s], [s, -c]] the second row is re-gauged (y_b -> -y_b) to the
/// rotation form above.  Throws if the blocks are not scalar multiples of
/// the identity (never happens for N = 3).
RotationCoeffs rotation_coeffs3(const JacobiSystem& from, const JacobiSystem& to);

/// Momentum of subsystem a reconstructed from spectator momenta:
///     k_a(p_b, p_a) = -p_b / s + (c / s) p_a.
/// Throws for s = 0 (coincident frames have no such exchange point).
Eigen::Vector3d momentum_exchange_point(const Eigen::Vector3d& p_b, const Eigen::Vector3d& p_a,
                                        const RotationCoeffs& ba);

/// Point on the ray |X| = rho in direction X / |X|.
struct HypersphericalState {
    double rho = 0;
    Eigen::VectorXd direction;
};

/// Splits X into hyperradius and unit direction; throws for X = 0.
HypersphericalState to_hyperspherical(const Eigen::VectorXd& X);
Eigen::VectorXd from_hyperspherical(const HypersphericalState& s);

/// Hyperangle alpha in [0, pi/2] of the split (head, tail) of a d-vector with
/// |head| = |X| cos(alpha) over the first internal_dim components and
/// |tail| = |X| sin(alpha) over the rest.
double hyperangle(const Eigen::VectorXd& X, int internal_dim);

}  // namespace hyperscat::jacobi
