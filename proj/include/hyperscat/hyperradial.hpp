#pragma once

// Coupled hyperradial scattering equations in the unit-sphere harmonic basis:
// channel bases, potential matrices, outward propagation of the regular
// solution family, S-matrix extraction against exact incoming/outgoing radial
// waves, and two independent cross-checks of the same S-matrix -- one from
// on-shell kernel averages, one from the large-|X| form of the full wave.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

#include "hyperscat/harmonics.hpp"
#include "hyperscat/jacobi.hpp"
#include "hyperscat/numerics.hpp"
#include "hyperscat/oscillatory.hpp"
#include "hyperscat/singular.hpp"
#include "hyperscat/tmatrix.hpp"

namespace hyperscat::hyperradial {

/// Every harmonic of degree K <= kmax on S^{d-1}, ordered by degree, plus a
/// quadrature rule exact for products of basis pairs (exact_degree >= 2*kmax).
struct ChannelBasis {
    int d = 0;
    int kmax = 0;
    int level = 0;  ///< quadrature level actually built
    std::vector<harmonics::HarmonicIndex> channels;

    /// level = 0 picks max(kmax, 4) so exactness always covers the basis.
    static ChannelBasis build(int d, int kmax, int level = 0);

    int size() const { return static_cast<int>(channels.size()); }
    int degree(int i) const { return channels[static_cast<std::size_t>(i)].degree(); }
    const harmonics::SphereQuadrature& quadrature() const;
};

/// One pair interaction of a three-body configuration: v acts on the
/// magnitude |c x + s y| of the pair's own mass-scaled separation vector,
/// with (x, y) the reference Jacobi pair and (c, s) the frame rotation.
struct PairTerm {
    jacobi::RotationCoeffs frame;
    std::function<double(double)> v;
};

/// Rotation coefficients of the pair frames (1,2), (2,3), (3,1) relative to
/// the reference chain that merges (1,2) first, in that order.
std::vector<jacobi::RotationCoeffs> pair_frames3(const jacobi::MassSet& masses);

/// Interaction on configuration space.  Four shapes: identically zero,
/// hypercentral v(|X|), a sum of three-body pair terms (d = 6), or a general
/// bounded function of X with a declared parity.
class PotentialModel {
public:
    static PotentialModel zero();
    static PotentialModel hypercentral(std::function<double(double)> v);
    static PotentialModel pairwise(std::vector<PairTerm> terms);
    static PotentialModel general(int d, std::function<double(const Eigen::VectorXd&)> v,
                                  bool parity_even);

    bool is_zero() const { return kind_ == Kind::zero; }
    bool is_hypercentral() const { return kind_ == Kind::hypercentral; }
    /// True when V(-X) = V(X), so odd and even channels decouple exactly.
    bool parity_even() const { return parity_even_; }
    /// Required ambient dimension; 0 = any.
    int d() const { return d_; }

    /// Hypercentral radial profile (only for is_hypercentral()).
    double radial(double rho) const;
    /// Pointwise value; valid for every kind.
    double at(const Eigen::VectorXd& X) const;
    /// Pair terms when the model is a pairwise sum, else nullptr.
    const std::vector<PairTerm>* pairwise_terms() const;

private:
    enum class Kind { zero, hypercentral, pairwise, general };
    PotentialModel() = default;
    Kind kind_ = Kind::zero;
    int d_ = 0;
    bool parity_even_ = true;
    std::function<double(double)> radial_;
    std::vector<PairTerm> terms_;
    std::function<double(const Eigen::VectorXd&)> general_;
};

struct PotentialMatrixOptions {
    double asymmetry_tol = 1e-10;  ///< Hermiticity residual gate (relative to max entry)
    int refine_levels = 0;         ///< > 0: re-integrate this much finer and compare
    double refine_tol = 1e-8;
};

/// Matrix elements \int dXhat Y_[K](Xhat) V(rho Xhat) Y_[K'](Xhat) over the
/// basis quadrature.  Throws accuracy_error when the raw matrix is
/// asymmetric beyond asymmetry_tol or a refinement probe moves an entry by
/// more than refine_tol: both flag a rule too coarse for the integrand.
Eigen::MatrixXd potential_matrix(const PotentialModel& V, const ChannelBasis& basis, double rho,
                                 const PotentialMatrixOptions& opts = {});

struct SolveOptions {
    double rho_min = 1e-3;  ///< start of the grid; power-series seeding below
    double step = 0.0;      ///< grid spacing; 0 = 0.01 decoupled, 0.05 coupled
    double rho_max = 40.0;
    int store_count = 48;   ///< approximate number of retained radial samples
    int table_points = 28;  ///< Chebyshev samples per table segment; 0 = direct evaluation
    std::vector<double> table_breaks;  ///< segment edges; empty = {0, 6, 16, rho_max}
    double table_tol = 1e-8;           ///< probe residual gate for the table
    bool use_parity_blocks = true;     ///< exploit V(-X) = V(X) decoupling
    int refine_check = 0;              ///< potential refinement probe depth
    /// Pairwise interactions concentrate on shrinking sphere sections as rho
    /// grows, which no fixed angular rule can follow; beyond this radius the
    /// matrix elements switch to the concentration limit
    ///   V(rho) -> rho^{-3} sum_p (\int v_p d^3r) T_p,
    /// with T_p the Gram matrix of the basis on the pair's zero-separation
    /// section.  0 = automatic from the measured pair ranges, < 0 = never.
    double tail_switch = 0.0;
};

/// Regular-solution family on a stored radial grid.  Column c of psi[i] is
/// the solution seeded in channel c, row r its component on channel r.
struct RadialSolution {
    int d = 0;
    int kmax = 0;
    double energy = 0.0;  ///< |P|^2 > 0
    std::vector<harmonics::HarmonicIndex> channels;
    Eigen::VectorXd rho_grid;           ///< increasing, positive
    std::vector<Eigen::MatrixXcd> psi;  ///< one (size x size) sample per grid node
    double potential_tail = 0.0;        ///< max |V_{KK'}(rho_max)|
    double table_residual = 0.0;        ///< worst probe deviation of the radial table
    double tail_start = 0.0;            ///< radius of the concentration-limit switch (0 = unused)
    double tail_mismatch = 0.0;         ///< quadrature-vs-limit gap at the switch, / max entry
};

/// Propagates the regular solution family outward (Numerov, fourth order)
/// from a two-term power-series seed at rho_min and stores
/// Psi = rho^{-(d-1)/2} u on the retained grid.  Throws accuracy_error on
/// non-finite propagation or a table that fails its probes.
RadialSolution solve_coupled(const PotentialModel& V, const ChannelBasis& basis, double energy,
                             const SolveOptions& opts = {});

struct MatchOptions {
    int window = 10;               ///< trailing stored nodes eligible for matching
    double condition_limit = 1e8;  ///< gate on the per-channel 2x2 wave systems
    double residual_limit = 1e-2;  ///< relative misfit gate at a third node
};

struct SMatrixBlock {
    Eigen::MatrixXcd values;
    double energy = 0.0;
    int kmax = 0;
    double rho_max = 0.0;  ///< 0 when extracted from a kernel rather than a grid
    double unitarity_defect = 0.0;    ///< max |(S S^adj - I)_{ij}|
    double symmetry_defect = 0.0;     ///< max |(S - S^T)_{ij}|
    double matching_condition = 0.0;  ///< worst 2x2 condition over channels (grid route)
    double matching_residual = 0.0;   ///< relative misfit at a check node (grid route)
};

/// Fits Psi(rho) = I(rho) A + O(rho) B at two stored nodes, where the exact
/// Hankel-type diagonal waves I, O reproduce the incoming/outgoing spherical
/// factors at large rho, and returns S = -B A^{-1} D, D = diag((-1)^K).
/// Throws accuracy_error when the wave systems are too ill-conditioned or
/// the fit fails to reproduce the solution at a third node.
SMatrixBlock match_extract_S(const RadialSolution& sol, const MatchOptions& opts = {});

struct SFromTOptions {
    int outer_level = 0;         ///< directions of the outgoing average; 0 = basis level
    singular::FpmOptions fpm{};  ///< inner shell averages (certificate ignored)
};

/// On-shell S-matrix directly from a momentum kernel:
///   S_{KN} = delta_{KN} - i pi |P|^{d-2} \int dPhat Y_[N](Phat) F^+(|P|, |P| Phat; Y_[K]).
SMatrixBlock s_from_tkernel(const tmatrix::TKernel& T, const ChannelBasis& basis, double pmag,
                            const SFromTOptions& opts = {});

struct WeakAsymptoticsOptions {
    double x_lo = 30.0;
    double x_hi = 120.0;
    int n_x = 6;             ///< sample radii, spaced by whole wave periods
    int window = 24;         ///< quarter-period samples for the incoming projection
    int fcache_nodes = 48;   ///< Chebyshev nodes of the shell-average cache
    int j_level = 8;         ///< transverse resolution of the plane-wave integral
    singular::FpmOptions fpm{};
};

struct WeakAsymptoticsReport {
    Eigen::VectorXd xmag;       ///< sample radii along the beam direction
    Eigen::VectorXd deviation;  ///< |direct - asymptotic| / |asymptotic|
    bool monotone = false;      ///< deviation decreases along the grid
    complex incoming_extracted; ///< phase-projected coefficient of the incoming wave
    complex incoming_predicted; ///< N_d G(-Phat)
    double incoming_rel_err = 0.0;
    complex s_of_g;             ///< outgoing amplitude G(Phat) - i pi |P|^{d-2} F^+
    double fcache_residual = 0.0;  ///< probe misfit of the shell-average cache
};

/// Reconstructs the full wave along the beam direction (plane-wave integral
/// minus the incoming/outgoing pole integrals of the kernel average) and
/// compares it against its leading large-|X| form; the incoming coefficient
/// is extracted by quarter-period phase projection and must match
/// N_d G(-Phat) independently of the kernel.
WeakAsymptoticsReport weak_asymptotics_check(const tmatrix::TKernel& T, const Eigen::VectorXd& P,
                                             const oscillatory::AngularFn& G,
                                             const WeakAsymptoticsOptions& opts = {});

/// Phases delta_i of the eigenvalues e^{2 i delta_i} of a (near-)unitary S,
/// each reduced to (-pi/2, pi/2], sorted descending.
Eigen::VectorXd eigenphases(const Eigen::MatrixXcd& S);

}  // namespace hyperscat::hyperradial
