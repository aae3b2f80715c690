#include "hyperscat/jacobi.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hyperscat::jacobi {

using partitions::Partition;
using partitions::PartitionChain;

MassSet::MassSet(std::vector<double> masses) : masses_(std::move(masses)) {
    if (masses_.size() < 2) throw std::invalid_argument("MassSet: need at least two particles");
    for (double m : masses_)
        if (!(m > 0)) throw std::invalid_argument("MassSet: masses must be positive");
}

JacobiSystem::JacobiSystem(MassSet masses, PartitionChain chain, Eigen::MatrixXd map)
    : masses_(std::move(masses)), chain_(std::move(chain)), map_(std::move(map)) {}

IndexRange JacobiSystem::internal_range(int l) const {
    if (l < 1 || l > n()) throw std::out_of_range("JacobiSystem::internal_range: bad block count");
    return {0, 3 * (n() - l)};
}

IndexRange JacobiSystem::external_range(int l) const {
    if (l < 1 || l > n()) throw std::out_of_range("JacobiSystem::external_range: bad block count");
    return {3 * (n() - l), 3 * (n() - 1)};
}

Eigen::VectorXd JacobiSystem::to_jacobi(const Eigen::VectorXd& r) const {
    if (r.size() != 3 * n()) throw std::invalid_argument("to_jacobi: expected 3N components");
    return map_ * r;
}

Eigen::VectorXd JacobiSystem::from_jacobi(const Eigen::VectorXd& X) const {
    if (X.size() != dim()) throw std::invalid_argument("from_jacobi: expected d components");
    Eigen::VectorXd r = Eigen::VectorXd::Zero(3 * n());
    // Pseudo-inverse in the mass metric g = diag(2 m_j I_3): r = g^{-1} A^T X.
    // Row sums of the map vanish, so the result has zero mass-weighted centroid.
    Eigen::VectorXd AtX = map_.transpose() * X;
    for (int j = 0; j < n(); ++j)
        r.segment(3 * j, 3) = AtX.segment(3 * j, 3) / (2.0 * masses_.mass(j + 1));
    return r;
}

namespace {

/// The two blocks of `fine` merging into one block of `coarse`; first has the
/// smaller minimum element.
std::pair<std::vector<int>, std::vector<int>> merged_pair(const Partition& fine, const Partition& coarse) {
    std::set<std::vector<int>> coarse_blocks(coarse.blocks().begin(), coarse.blocks().end());
    std::vector<std::vector<int>> extra;
    for (const auto& b : fine.blocks())
        if (!coarse_blocks.count(b)) extra.push_back(b);
    if (extra.size() != 2)
        throw std::invalid_argument("merged_pair: partitions not related by a single merge");
    if (extra[0].front() > extra[1].front()) std::swap(extra[0], extra[1]);
    return {extra[0], extra[1]};
}

}  // namespace

JacobiSystem build_jacobi(const MassSet& masses, const PartitionChain& chain) {
    const int n = masses.n();
    if (chain.n() != n) throw std::invalid_argument("build_jacobi: chain and masses disagree on N");
    const int d = 3 * (n - 1);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, 3 * n);

    auto block_mass = [&](const std::vector<int>& blk) {
        double M = 0;
        for (int j : blk) M += masses.mass(j);
        return M;
    };

    // Walk the merges from the fully split partition down to a single cluster;
    // slot i of the output holds the vector created by merge i.
    Partition cur = partitions::singletons(n);
    for (int slot = 0; slot < n - 1; ++slot) {
        const Partition next = (slot < n - 2) ? chain.links()[static_cast<size_t>(slot)]
                                              : partitions::one_block(n);
        auto [w1, w2] = merged_pair(cur, next);
        const double M1 = block_mass(w1), M2 = block_mass(w2);
        const double pref = std::sqrt(2.0 * M1 * M2 / (M1 + M2));
        for (int axis = 0; axis < 3; ++axis) {
            const int row = 3 * slot + axis;
            for (int j : w1) A(row, 3 * (j - 1) + axis) += pref * masses.mass(j) / M1;
            for (int j : w2) A(row, 3 * (j - 1) + axis) -= pref * masses.mass(j) / M2;
        }
        cur = next;
    }
    return JacobiSystem(masses, chain, std::move(A));
}

Eigen::MatrixXd chain_rotation(const JacobiSystem& from, const JacobiSystem& to) {
    if (!(from.masses() == to.masses()))
        throw std::invalid_argument("chain_rotation: systems have different masses");
    const int n = from.n();
    // R = B g^{-1} A^T; rows of A are orthonormal in the metric g^{-1} with
    // g = diag(2 m_j I_3), which makes R orthogonal.
    Eigen::MatrixXd At = from.map().transpose();
    for (int j = 0; j < n; ++j)
        At.middleRows(3 * j, 3) /= 2.0 * from.masses().mass(j + 1);
    return to.map() * At;
}

RotationCoeffs rotation_coeffs3(const JacobiSystem& from, const JacobiSystem& to) {
    if (from.n() != 3) throw std::invalid_argument("rotation_coeffs3: only defined for N = 3");
    Eigen::MatrixXd R = chain_rotation(from, to);
    auto scalar_of = [&](int bi, int bj) {
        Eigen::Matrix3d blk = R.block(3 * bi, 3 * bj, 3, 3);
        const double v = blk.trace() / 3.0;
        if ((blk - v * Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-10)
            throw std::runtime_error("rotation_coeffs3: block is not a scalar multiple of identity");
        return v;
    };
    const double c = scalar_of(0, 0), s = scalar_of(0, 1);
    const double r10 = scalar_of(1, 0), r11 = scalar_of(1, 1);
    // Reflection variant (det = c*r11 - s*r10 = -1): re-gauge y_b -> -y_b.
    const double det = c * r11 - s * r10;
    const double g10 = det < 0 ? -r10 : r10, g11 = det < 0 ? -r11 : r11;
    if (std::abs(g10 + s) > 1e-10 || std::abs(g11 - c) > 1e-10)
        throw std::runtime_error("rotation_coeffs3: transform lacks the expected 2x2 structure");
    return {c, s};
}

Eigen::Vector3d momentum_exchange_point(const Eigen::Vector3d& p_b, const Eigen::Vector3d& p_a,
                                        const RotationCoeffs& ba) {
    if (ba.s == 0)
        throw std::domain_error("momentum_exchange_point: s = 0, frames share the pair momentum");
    return -p_b / ba.s + (ba.c / ba.s) * p_a;
}

HypersphericalState to_hyperspherical(const Eigen::VectorXd& X) {
    const double rho = X.norm();
    if (rho == 0) throw std::domain_error("to_hyperspherical: direction undefined at X = 0");
    return {rho, X / rho};
}

Eigen::VectorXd from_hyperspherical(const HypersphericalState& s) {
    if (std::abs(s.direction.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("from_hyperspherical: direction must be a unit vector");
    return s.rho * s.direction;
}

double hyperangle(const Eigen::VectorXd& X, int internal_dim) {
    if (internal_dim <= 0 || internal_dim >= X.size())
        throw std::invalid_argument("hyperangle: split must lie strictly inside the vector");
    const double in = X.head(internal_dim).norm();
    const double out = X.tail(X.size() - internal_dim).norm();
    if (in == 0 && out == 0) throw std::domain_error("hyperangle: undefined at X = 0");
    return std::atan2(out, in);
}

}  // namespace hyperscat::jacobi
