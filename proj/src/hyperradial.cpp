#include "hyperscat/hyperradial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <utility>

namespace hyperscat::hyperradial {

using harmonics::SphereQuadrature;

// ---------------------------------------------------------------------------
// Channel basis
// ---------------------------------------------------------------------------
ChannelBasis ChannelBasis::build(int d, int kmax, int level) {
    if (kmax < 0) throw std::invalid_argument("channel basis: kmax must be >= 0");
    if (level == 0) level = std::max(kmax, 4);
    if (level < kmax) {
        throw std::invalid_argument(
            "channel basis: quadrature level under-resolves basis pair products");
    }
    ChannelBasis b;
    b.d = d;
    b.kmax = kmax;
    b.level = level;
    b.channels = harmonics::enumerate_harmonics(d, kmax);
    (void)b.quadrature();  // validate (d, level) eagerly
    return b;
}

const SphereQuadrature& ChannelBasis::quadrature() const {
    return harmonics::shared_quadrature(d, level);
}

// ---------------------------------------------------------------------------
// Potential models
// ---------------------------------------------------------------------------
PotentialModel PotentialModel::zero() { return {}; }

PotentialModel PotentialModel::hypercentral(std::function<double(double)> v) {
    PotentialModel m;
    m.kind_ = Kind::hypercentral;
    m.radial_ = std::move(v);
    return m;
}

PotentialModel PotentialModel::pairwise(std::vector<PairTerm> terms) {
    PotentialModel m;
    m.kind_ = Kind::pairwise;
    m.d_ = 6;
    m.terms_ = std::move(terms);
    return m;
}

PotentialModel PotentialModel::general(int d, std::function<double(const Eigen::VectorXd&)> v,
                                       bool parity_even) {
    PotentialModel m;
    m.kind_ = Kind::general;
    m.d_ = d;
    m.parity_even_ = parity_even;
    m.general_ = std::move(v);
    return m;
}

double PotentialModel::radial(double rho) const {
    if (kind_ != Kind::hypercentral)
        throw std::logic_error("potential model: radial profile only exists for hypercentral");
    return radial_(rho);
}

double PotentialModel::at(const Eigen::VectorXd& X) const {
    switch (kind_) {
        case Kind::zero:
            return 0.0;
        case Kind::hypercentral:
            return radial_(X.norm());
        case Kind::pairwise: {
            if (X.size() != 6)
                throw std::invalid_argument("potential model: pairwise terms need a 6-vector");
            double acc = 0.0;
            for (const auto& t : terms_) {
                acc += t.v((t.frame.c * X.head(3) + t.frame.s * X.tail(3)).norm());
            }
            return acc;
        }
        case Kind::general:
            if (d_ != 0 && X.size() != d_)
                throw std::invalid_argument("potential model: configuration dimension mismatch");
            return general_(X);
    }
    return 0.0;
}

const std::vector<PairTerm>* PotentialModel::pairwise_terms() const {
    return kind_ == Kind::pairwise ? &terms_ : nullptr;
}

std::vector<jacobi::RotationCoeffs> pair_frames3(const jacobi::MassSet& masses) {
    if (masses.n() != 3) throw std::invalid_argument("pair frames: exactly three particles");
    using partitions::Partition;
    using partitions::PartitionChain;
    auto chain_of = [](int i, int j) {
        const int k = 6 - i - j;
        return PartitionChain(3, {Partition(3, {{i, j}, {k}})});
    };
    const auto ref = jacobi::build_jacobi(masses, chain_of(1, 2));
    std::vector<jacobi::RotationCoeffs> out;
    const std::array<std::pair<int, int>, 3> pairs{{{1, 2}, {2, 3}, {3, 1}}};
    for (const auto& [i, j] : pairs) {
        out.push_back(jacobi::rotation_coeffs3(ref, jacobi::build_jacobi(masses, chain_of(i, j))));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Potential matrices
// ---------------------------------------------------------------------------
namespace {

// V(rho_s * xhat_i) for every node i and radius s; pairwise terms reuse the
// per-node frame magnitudes across all radii.
Eigen::MatrixXd node_values(const PotentialModel& V, const SphereQuadrature& quad,
                            const std::vector<double>& radii) {
    const Eigen::Index n = quad.size();
    const Eigen::Index S = static_cast<Eigen::Index>(radii.size());
    Eigen::MatrixXd vals(n, S);
    if (const auto* terms = V.pairwise_terms()) {
        Eigen::MatrixXd mags(n, static_cast<Eigen::Index>(terms->size()));
        for (std::size_t t = 0; t < terms->size(); ++t) {
            const auto& f = (*terms)[t].frame;
            mags.col(static_cast<Eigen::Index>(t)) =
                (f.c * quad.nodes.leftCols(3) + f.s * quad.nodes.rightCols(3)).rowwise().norm();
        }
        for (Eigen::Index s = 0; s < S; ++s) {
            for (Eigen::Index i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t t = 0; t < terms->size(); ++t) {
                    acc += (*terms)[t].v(radii[static_cast<std::size_t>(s)] *
                                         mags(i, static_cast<Eigen::Index>(t)));
                }
                vals(i, s) = acc;
            }
        }
    } else {
        Eigen::VectorXd X(quad.nodes.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index s = 0; s < S; ++s) {
                X = radii[static_cast<std::size_t>(s)] * quad.nodes.row(i).transpose();
                vals(i, s) = V.at(X);
            }
        }
    }
    return vals;
}

// M_s = Y^T diag(w .* vals_s) Y accumulated over node chunks so the full
// evaluation matrix never materializes.
std::vector<Eigen::MatrixXd> weighted_grams(const std::vector<harmonics::HarmonicIndex>& chans,
                                            const SphereQuadrature& quad,
                                            const Eigen::MatrixXd& vals) {
    const Eigen::Index m = static_cast<Eigen::Index>(chans.size());
    const Eigen::Index S = vals.cols();
    const Eigen::Index n = quad.size();
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(S), Eigen::MatrixXd::Zero(m, m));
    const Eigen::Index chunk = 8192;
    Eigen::MatrixXd Z;
    SphereQuadrature sub;
    sub.exact_degree = quad.exact_degree;
    for (Eigen::Index start = 0; start < n; start += chunk) {
        const Eigen::Index len = std::min(chunk, n - start);
        sub.nodes = quad.nodes.middleRows(start, len);
        sub.weights = quad.weights.segment(start, len);
        const Eigen::MatrixXd Y = harmonics::evaluation_matrix(chans, sub);
        for (Eigen::Index s = 0; s < S; ++s) {
            Z.noalias() =
                sub.weights.cwiseProduct(vals.col(s).segment(start, len)).asDiagonal() * Y;
            out[static_cast<std::size_t>(s)].noalias() += Y.transpose() * Z;
        }
    }
    return out;
}

Eigen::MatrixXd gram_at(const PotentialModel& V, const std::vector<harmonics::HarmonicIndex>& chans,
                        const SphereQuadrature& quad, double rho) {
    Eigen::MatrixXd M = weighted_grams(chans, quad, node_values(V, quad, {rho}))[0];
    return 0.5 * (M + M.transpose()).eval();
}

}  // namespace

Eigen::MatrixXd potential_matrix(const PotentialModel& V, const ChannelBasis& basis, double rho,
                                 const PotentialMatrixOptions& opts) {
    if (rho < 0.0) throw std::domain_error("potential matrix: rho must be >= 0");
    if (V.d() != 0 && V.d() != basis.d)
        throw std::invalid_argument("potential matrix: configuration dimension mismatch");
    const Eigen::Index m = basis.size();
    if (V.is_zero()) return Eigen::MatrixXd::Zero(m, m);
    if (V.is_hypercentral())
        return V.radial(rho) * Eigen::MatrixXd::Identity(m, m);

    Eigen::MatrixXd M = weighted_grams(basis.channels, basis.quadrature(),
                                       node_values(V, basis.quadrature(), {rho}))[0];
    const double scale = std::max(M.cwiseAbs().maxCoeff(), 1e-300);
    const double asym = (M - M.transpose()).cwiseAbs().maxCoeff() / scale;
    if (asym > opts.asymmetry_tol) {
        throw accuracy_error("potential matrix: quadrature left an asymmetric Gram matrix", asym);
    }
    M = 0.5 * (M + M.transpose()).eval();
    if (opts.refine_levels > 0) {
        const auto& fine = harmonics::shared_quadrature(basis.d, basis.level + opts.refine_levels);
        const Eigen::MatrixXd Mf = gram_at(V, basis.channels, fine, rho);
        const double drift = (Mf - M).cwiseAbs().maxCoeff() / std::max(scale, 1.0);
        if (drift > opts.refine_tol) {
            throw accuracy_error(
                "potential matrix: refinement probe moved entries; rule too coarse", drift);
        }
        return Mf;
    }
    return M;
}

// ---------------------------------------------------------------------------
// Radial tables and propagation
// ---------------------------------------------------------------------------
namespace {

inline Eigen::Index packed_size(Eigen::Index m) { return m * (m + 1) / 2; }

void pack_upper(const Eigen::MatrixXd& M, Eigen::VectorXd& out) {
    const Eigen::Index m = M.rows();
    out.resize(packed_size(m));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i; j < m; ++j) out(k++) = M(i, j);
}

void unpack_upper(const Eigen::VectorXd& v, Eigen::MatrixXd& M) {
    const Eigen::Index m = M.rows();
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i; j < m; ++j) {
            M(i, j) = v(k);
            M(j, i) = v(k);
            ++k;
        }
    }
}

// Per-segment Chebyshev interpolant of the packed potential matrix.
struct RadialTable {
    std::vector<double> edges;      // nseg + 1 ascending edges, edges.front() = 0
    std::vector<ChebInterp> seg;
    Eigen::Index m = 0;
    double residual = 0.0;

    void eval(double rho, Eigen::MatrixXd& M) const {
        const double r = std::clamp(rho, edges.front(), edges.back());
        std::size_t k = 0;
        while (k + 2 < edges.size() && r > edges[k + 1]) ++k;
        unpack_upper(seg[k].eval(r), M);
    }
};

RadialTable build_table(const PotentialModel& V, const std::vector<harmonics::HarmonicIndex>& chans,
                        const SphereQuadrature& quad, double rho_max, const SolveOptions& o) {
    RadialTable tab;
    tab.m = static_cast<Eigen::Index>(chans.size());
    tab.edges = {0.0};
    std::vector<double> breaks = o.table_breaks.empty() ? std::vector<double>{6.0, 16.0}
                                                        : o.table_breaks;
    std::sort(breaks.begin(), breaks.end());
    for (double b : breaks)
        if (b > 1e-12 && b < rho_max * (1.0 - 1e-12)) tab.edges.push_back(b);
    tab.edges.push_back(rho_max);
    tab.edges.erase(std::unique(tab.edges.begin(), tab.edges.end()), tab.edges.end());

    const std::size_t nseg = tab.edges.size() - 1;
    std::vector<int> counts(nseg);
    std::vector<double> radii;
    for (std::size_t k = 0; k < nseg; ++k) {
        // the outermost segment holds only decayed tails; everything else
        // gets the full sample budget
        counts[k] = (nseg > 1 && k == nseg - 1) ? std::max(12, o.table_points / 2)
                                                : std::max(8, o.table_points);
        const auto xs = ChebInterp::nodes(counts[k], tab.edges[k], tab.edges[k + 1]);
        radii.insert(radii.end(), xs.begin(), xs.end());
    }

    auto grams = weighted_grams(chans, quad, node_values(V, quad, radii));
    double gscale = 1e-300;
    for (auto& M : grams) {
        M = 0.5 * (M + M.transpose()).eval();
        gscale = std::max(gscale, M.cwiseAbs().maxCoeff());
    }

    Eigen::VectorXd packed;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < nseg; ++k) {
        Eigen::MatrixXd samples(counts[k], packed_size(tab.m));
        for (int r = 0; r < counts[k]; ++r) {
            pack_upper(grams[offset + static_cast<std::size_t>(r)], packed);
            samples.row(r) = packed.transpose();
        }
        tab.seg.push_back(ChebInterp::fit(samples, tab.edges[k], tab.edges[k + 1]));
        offset += static_cast<std::size_t>(counts[k]);
    }

    // one off-node probe per segment: direct rebuild against the interpolant
    Eigen::MatrixXd probe(tab.m, tab.m);
    for (std::size_t k = 0; k < nseg; ++k) {
        const double rp = tab.edges[k] + 0.6180339887498949 * (tab.edges[k + 1] - tab.edges[k]);
        tab.eval(rp, probe);
        const Eigen::MatrixXd direct = gram_at(V, chans, quad, rp);
        tab.residual =
            std::max(tab.residual, (probe - direct).cwiseAbs().maxCoeff() / std::max(gscale, 1.0));
    }
    if (tab.residual > o.table_tol) {
        throw accuracy_error("radial potential table fails its interpolation probes",
                             tab.residual);
    }
    return tab;
}

// Radial moments of one pair interaction, measured from the opaque profile:
// volume = \int v d^3r and r2 = sqrt(\int r^4 |v| / \int r^2 |v|), the length
// scale governing corrections to the concentration limit.
struct PairMoments {
    double volume = 0.0;
    double r2 = 0.0;
};

PairMoments pair_moments(const std::function<double(double)>& v) {
    double R = 1.0;
    double peak = 0.0;
    for (;;) {
        peak = std::max(peak, std::abs(v(R)) * R * R);
        if (std::abs(v(R)) * R * R < 1e-13 * (peak + 1e-300) || R >= 1024.0) break;
        R *= 2.0;
    }
    if (R >= 1024.0) {
        throw accuracy_error("pairwise tail: pair interaction does not decay", R);
    }
    PairMoments m;
    m.volume = 4.0 * pi * integrate_adaptive([&](double r) { return r * r * v(r); }, 0.0, R);
    const double a2 = integrate_adaptive([&](double r) { return r * r * std::abs(v(r)); }, 0.0, R);
    const double a4 =
        integrate_adaptive([&](double r) { return r * r * r * r * std::abs(v(r)); }, 0.0, R);
    m.r2 = std::sqrt(a4 / std::max(a2, 1e-300));
    return m;
}

// Large-rho limit of the pairwise potential matrix.  Writing the pair
// separation as z = c x + s y and its orthogonal complement t = -s x + c y,
// v(rho |z|) concentrates on the section z = 0 (a 2-sphere), and
//   \int_{S^5} v(rho m) Y_K Y_K' -> rho^{-3} (\int v d^3r)
//   \int_{S^2} Y_K(-s n, c n) Y_K'(-s n, c n) dn.
struct TailData {
    bool active = false;
    double start = 0.0;
    Eigen::MatrixXd T;  // divide by rho^3 on use
    double mismatch = 0.0;
};

TailData build_tail(const PotentialModel& V, const std::vector<harmonics::HarmonicIndex>& chans,
                    const SphereQuadrature& quad, double rho_max, const SolveOptions& o) {
    TailData tail;
    const auto* terms = V.pairwise_terms();
    if (terms == nullptr || o.tail_switch < 0.0) return tail;

    double r2max = 0.0;
    std::vector<double> volumes;
    for (const auto& t : *terms) {
        const PairMoments m = pair_moments(t.v);
        volumes.push_back(m.volume);
        r2max = std::max(r2max, m.r2);
    }
    tail.start = o.tail_switch > 0.0 ? o.tail_switch : 6.0 * r2max;
    if (!(tail.start < rho_max)) return tail;

    const Eigen::Index m = static_cast<Eigen::Index>(chans.size());
    int kmax = 0;
    for (const auto& c : chans) kmax = std::max(kmax, c.degree());
    const auto& s2 = harmonics::shared_quadrature(3, std::max(kmax, 1));
    tail.T = Eigen::MatrixXd::Zero(m, m);
    SphereQuadrature sec;
    sec.weights = s2.weights;
    sec.nodes.resize(s2.size(), 6);
    for (std::size_t p = 0; p < terms->size(); ++p) {
        const auto& f = (*terms)[p].frame;
        const double norm = std::hypot(f.c, f.s);
        const double c = f.c / norm, s = f.s / norm;
        for (Eigen::Index i = 0; i < s2.size(); ++i) {
            sec.nodes.row(i) << -s * s2.nodes.row(i), c * s2.nodes.row(i);
        }
        const Eigen::MatrixXd Y = harmonics::evaluation_matrix(chans, sec);
        tail.T.noalias() += volumes[p] * Y.transpose() * s2.weights.asDiagonal() * Y;
    }
    tail.active = true;

    // seam diagnostic: quadrature and limit should agree there, relative to
    // the overall potential scale
    const Eigen::MatrixXd at_seam = gram_at(V, chans, quad, tail.start);
    const Eigen::MatrixXd lim = tail.T / (tail.start * tail.start * tail.start);
    const double scale =
        std::max(gram_at(V, chans, quad, std::min(1.0, 0.5 * tail.start)).cwiseAbs().maxCoeff(),
                 1e-300);
    tail.mismatch = (at_seam - lim).cwiseAbs().maxCoeff() / scale;
    if (tail.mismatch > 0.05) {
        throw accuracy_error(
            "pairwise tail: quadrature and concentration limit disagree at the switch radius",
            tail.mismatch);
    }
    return tail;
}

struct PropagationResult {
    std::vector<Eigen::MatrixXd> u;  // one block matrix per retained grid index
};

// Fourth-order three-term recursion for u'' = W(rho) u on a uniform grid,
// W(rho) = V(rho) + diag((nu^2 - 1/4)/rho^2) - E, seeded by the two-term
// power series u_K ~ rho^{nu+1/2} (1 + a2 rho^2) of the regular family.
PropagationResult propagate_matrix(const std::function<void(double, Eigen::MatrixXd&)>& vfill,
                                   const Eigen::VectorXd& nu, double energy,
                                   const Eigen::VectorXd& grid, const std::vector<int>& keep) {
    const Eigen::Index m = nu.size();
    const int n = static_cast<int>(grid.size()) - 1;
    const double h = grid(1) - grid(0);
    const double c = h * h / 12.0;
    const Eigen::ArrayXd cent = nu.array().square() - 0.25;

    Eigen::MatrixXd W(m, m), A(m, m);
    auto fill_A = [&](int j) {
        vfill(grid(j), W);
        W.diagonal().array() += cent / (grid(j) * grid(j)) - energy;
        A = -c * W;
        A.diagonal().array() += 1.0;
    };

    // seed ratios u(rho0)/u(rho1) from the power series, with the quadratic
    // correction dropped wherever it is not a small perturbation
    vfill(grid(0), W);
    const Eigen::ArrayXd a2 = (W.diagonal().array() - energy) / (4.0 * (nu.array() + 1.0));
    Eigen::ArrayXd corr0 = 1.0 + a2 * grid(0) * grid(0);
    Eigen::ArrayXd corr1 = 1.0 + a2 * grid(1) * grid(1);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!(corr0(i) > 0.5) || !(corr1(i) > 0.5)) {
            corr0(i) = 1.0;
            corr1(i) = 1.0;
        }
    }
    const Eigen::VectorXd u0 =
        (Eigen::pow(grid(0) / grid(1), nu.array() + 0.5) * corr0 / corr1).matrix();

    PropagationResult res;
    res.u.resize(keep.size());
    std::size_t kslot = 0;
    auto maybe_store_direct = [&](int j, const Eigen::MatrixXd& uj) {
        if (kslot < keep.size() && keep[kslot] == j) res.u[kslot++] = uj;
    };

    fill_A(0);
    Eigen::MatrixXd Fprev = A * u0.asDiagonal();
    maybe_store_direct(0, Eigen::MatrixXd(u0.asDiagonal()));
    fill_A(1);
    Eigen::MatrixXd Fcur = A;  // u_1 = I
    Eigen::MatrixXd U(m, m), Fnext(m, m);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);

    for (int j = 1; j <= n; ++j) {
        // invariant: A = A_j, Fcur = F_j, Fprev = F_{j-1}
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
        if (kslot < keep.size() && keep[kslot] == j) res.u[kslot++] = lu.solve(Fcur);
        if (j == n) break;
        U.noalias() = 12.0 * lu.solve(eye);
        U.diagonal().array() -= 10.0;
        Fnext.noalias() = U * Fcur;
        Fnext -= Fprev;
        Fprev.swap(Fcur);
        Fcur.swap(Fnext);
        fill_A(j + 1);
        if ((j & 127) == 0 || j + 1 == n) {
            const double peak = Fcur.cwiseAbs().maxCoeff();
            if (!std::isfinite(peak)) {
                throw accuracy_error(
                    "outward propagation lost finiteness (stiff system or step too large)", peak);
            }
            if (peak > 1e250) {  // uniform rescale leaves every extracted ratio intact
                Fcur /= peak;
                Fprev /= peak;
                for (std::size_t s = 0; s < kslot; ++s) res.u[s] /= peak;
            }
        }
    }
    for (const auto& uj : res.u) {
        if (!uj.allFinite()) {
            throw accuracy_error(
                "outward propagation lost finiteness (stiff system or step too large)", 0.0);
        }
    }
    return res;
}

// Decoupled channels: the same recursion with diagonal algebra throughout.
PropagationResult propagate_scalar(const std::function<double(double)>& vrho,
                                   const Eigen::VectorXd& nu, double energy,
                                   const Eigen::VectorXd& grid, const std::vector<int>& keep) {
    const Eigen::Index m = nu.size();
    const int n = static_cast<int>(grid.size()) - 1;
    const double h = grid(1) - grid(0);
    const double c = h * h / 12.0;
    const Eigen::ArrayXd cent = nu.array().square() - 0.25;

    auto Avec = [&](int j) -> Eigen::ArrayXd {
        const double r = grid(j);
        return 1.0 - c * (vrho(r) - energy + cent / (r * r));
    };

    const double v0 = vrho(grid(0));
    const Eigen::ArrayXd a2 = (v0 - energy) / (4.0 * (nu.array() + 1.0));
    Eigen::ArrayXd corr0 = 1.0 + a2 * grid(0) * grid(0);
    Eigen::ArrayXd corr1 = 1.0 + a2 * grid(1) * grid(1);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!(corr0(i) > 0.5) || !(corr1(i) > 0.5)) {
            corr0(i) = 1.0;
            corr1(i) = 1.0;
        }
    }
    const Eigen::ArrayXd u0 = Eigen::pow(grid(0) / grid(1), nu.array() + 0.5) * corr0 / corr1;

    PropagationResult res;
    res.u.resize(keep.size());
    std::size_t kslot = 0;
    auto store = [&](int j, const Eigen::ArrayXd& uj) {
        if (kslot < keep.size() && keep[kslot] == j) {
            res.u[kslot] = Eigen::MatrixXd::Zero(m, m);
            res.u[kslot].diagonal() = uj.matrix();
            ++kslot;
        }
    };

    Eigen::ArrayXd A = Avec(0);
    Eigen::ArrayXd fprev = A * u0;
    store(0, u0);
    A = Avec(1);
    Eigen::ArrayXd fcur = A;
    Eigen::ArrayXd fnext(m);

    for (int j = 1; j <= n; ++j) {
        store(j, fcur / A);
        if (j == n) break;
        fnext = (12.0 / A - 10.0) * fcur - fprev;
        fprev.swap(fcur);
        fcur.swap(fnext);
        A = Avec(j + 1);
        if ((j & 1023) == 0 && !fcur.isFinite().all()) {
            throw accuracy_error(
                "outward propagation lost finiteness (stiff system or step too large)", 0.0);
        }
    }
    for (const auto& uj : res.u) {
        if (!uj.allFinite()) {
            throw accuracy_error(
                "outward propagation lost finiteness (stiff system or step too large)", 0.0);
        }
    }
    return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// solve_coupled
// ---------------------------------------------------------------------------
RadialSolution solve_coupled(const PotentialModel& V, const ChannelBasis& basis, double energy,
                             const SolveOptions& opts) {
    if (energy <= 0.0) throw std::domain_error("radial solve: energy must be positive");
    if (V.d() != 0 && V.d() != basis.d)
        throw std::invalid_argument("radial solve: configuration dimension mismatch");
    if (!(opts.rho_min > 0.0) || !(opts.rho_max > opts.rho_min))
        throw std::domain_error("radial solve: need 0 < rho_min < rho_max");
    const int m = basis.size();
    if (m == 0) throw std::invalid_argument("radial solve: empty channel basis");

    const bool scalar = V.is_zero() || V.is_hypercentral();
    const double h0 = opts.step > 0.0 ? opts.step : (scalar ? 0.01 : 0.05);
    const int n = std::max<int>(16, static_cast<int>(std::llround((opts.rho_max - opts.rho_min) / h0)));
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(n + 1, opts.rho_min, opts.rho_max);

    const int stride = std::max(1, n / std::max(2, opts.store_count - 1));
    std::vector<int> keep;
    for (int j = 0; j <= n; j += stride) keep.push_back(j);
    if (keep.back() != n) keep.push_back(n);

    Eigen::VectorXd nu(m);
    for (int i = 0; i < m; ++i) nu(i) = basis.degree(i) + 0.5 * basis.d - 1.0;

    RadialSolution sol;
    sol.d = basis.d;
    sol.kmax = basis.kmax;
    sol.energy = energy;
    sol.channels = basis.channels;
    sol.rho_grid.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i)
        sol.rho_grid(static_cast<Eigen::Index>(i)) = grid(keep[i]);
    sol.psi.assign(keep.size(), Eigen::MatrixXcd::Zero(m, m));

    const auto psi_factor = [&](std::size_t i) {
        return std::pow(sol.rho_grid(static_cast<Eigen::Index>(i)), -0.5 * (basis.d - 1));
    };

    if (scalar) {
        std::function<double(double)> vrho;
        if (V.is_zero()) {
            vrho = [](double) { return 0.0; };
        } else {
            vrho = [&V](double r) { return V.radial(r); };
        }
        auto res = propagate_scalar(vrho, nu, energy, grid, keep);
        for (std::size_t i = 0; i < keep.size(); ++i) {
            sol.psi[i] = (psi_factor(i) * res.u[i]).cast<complex>();
        }
        sol.potential_tail = V.is_zero() ? 0.0 : std::abs(V.radial(opts.rho_max));
        return sol;
    }

    // parity blocks: V(-X) = V(X) never couples even and odd degrees
    std::vector<std::vector<int>> blocks;
    if (V.parity_even() && opts.use_parity_blocks) {
        blocks.assign(2, {});
        for (int i = 0; i < m; ++i) blocks[static_cast<std::size_t>(basis.degree(i) % 2)].push_back(i);
        blocks.erase(std::remove_if(blocks.begin(), blocks.end(),
                                    [](const std::vector<int>& b) { return b.empty(); }),
                     blocks.end());
    } else {
        blocks.assign(1, {});
        for (int i = 0; i < m; ++i) blocks[0].push_back(i);
    }

    for (const auto& ids : blocks) {
        const Eigen::Index mb = static_cast<Eigen::Index>(ids.size());
        std::vector<harmonics::HarmonicIndex> chans;
        Eigen::VectorXd nub(mb);
        for (Eigen::Index i = 0; i < mb; ++i) {
            chans.push_back(basis.channels[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])]);
            nub(i) = nu(ids[static_cast<std::size_t>(i)]);
        }

        std::function<void(double, Eigen::MatrixXd&)> vfill;
        const TailData tail = build_tail(V, chans, basis.quadrature(), opts.rho_max, opts);
        const double quad_hi = tail.active ? tail.start : opts.rho_max;
        if (tail.active) {
            sol.tail_start = std::max(sol.tail_start, tail.start);
            sol.tail_mismatch = std::max(sol.tail_mismatch, tail.mismatch);
        }
        RadialTable table;
        if (opts.table_points > 0) {
            table = build_table(V, chans, basis.quadrature(), quad_hi, opts);
            sol.table_residual = std::max(sol.table_residual, table.residual);
            vfill = [&table, &tail](double r, Eigen::MatrixXd& W) {
                if (tail.active && r >= tail.start) {
                    W = tail.T / (r * r * r);
                } else {
                    table.eval(r, W);
                }
            };
        } else {
            vfill = [&V, &chans, &basis, &tail](double r, Eigen::MatrixXd& W) {
                if (tail.active && r >= tail.start) {
                    W = tail.T / (r * r * r);
                } else {
                    W = gram_at(V, chans, basis.quadrature(), r);
                }
            };
        }

        if (opts.refine_check > 0) {
            const double rp = 0.37 * opts.rho_max;
            const Eigen::MatrixXd base = gram_at(V, chans, basis.quadrature(), rp);
            const auto& fine =
                harmonics::shared_quadrature(basis.d, basis.level + opts.refine_check);
            const Eigen::MatrixXd probe = gram_at(V, chans, fine, rp);
            const double drift = (probe - base).cwiseAbs().maxCoeff() /
                                 std::max(base.cwiseAbs().maxCoeff(), 1.0);
            if (drift > opts.table_tol) {
                throw accuracy_error(
                    "radial solve: quadrature refinement moved the potential matrix", drift);
            }
        }

        Eigen::MatrixXd Wtail(mb, mb);
        vfill(opts.rho_max, Wtail);
        sol.potential_tail = std::max(sol.potential_tail, Wtail.cwiseAbs().maxCoeff());

        auto res = propagate_matrix(vfill, nub, energy, grid, keep);
        for (std::size_t i = 0; i < keep.size(); ++i) {
            const double fac = psi_factor(i);
            for (Eigen::Index r = 0; r < mb; ++r) {
                for (Eigen::Index c = 0; c < mb; ++c) {
                    sol.psi[i](ids[static_cast<std::size_t>(r)], ids[static_cast<std::size_t>(c)]) =
                        fac * res.u[i](r, c);
                }
            }
        }
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Matching against exact radial waves
// ---------------------------------------------------------------------------
namespace {

// Exact diagonal waves: o_K -> Q_d^+ and i_K -> Q_d^- as rho -> infinity,
// including the channel phase that makes the free S the identity.
struct WavePair {
    complex in, out;
};

WavePair radial_waves(int d, int K, double P, double rho) {
    const double nu = K + 0.5 * d - 1.0;
    const double pref = std::sqrt(0.5 * pi * P) * std::pow(rho, 1.0 - 0.5 * d);
    const complex phase = eighth_root_phase(2L * (K + 1));  // (+i)^{K+1}
    WavePair w;
    w.out = pref * phase * hankel1(nu, P * rho);
    w.in = pref * std::conj(phase) * hankel2(nu, P * rho);
    return w;
}

void fill_defects(SMatrixBlock& blk) {
    const Eigen::Index m = blk.values.rows();
    blk.unitarity_defect = (blk.values * blk.values.adjoint() - Eigen::MatrixXcd::Identity(m, m))
                               .cwiseAbs()
                               .maxCoeff();
    blk.symmetry_defect = (blk.values - blk.values.transpose()).cwiseAbs().maxCoeff();
}

}  // namespace

SMatrixBlock match_extract_S(const RadialSolution& sol, const MatchOptions& opts) {
    const Eigen::Index m = static_cast<Eigen::Index>(sol.channels.size());
    const Eigen::Index nn = sol.rho_grid.size();
    if (nn < 3) throw std::invalid_argument("matching: need at least three stored nodes");
    const double P = std::sqrt(sol.energy);

    // two trailing nodes with the best-conditioned wave systems: the 2x2
    // determinants scale with sin(P (rho_b - rho_a))
    const Eigen::Index w0 = std::max<Eigen::Index>(0, nn - std::max(3, opts.window));
    Eigen::Index ia = nn - 2, ib = nn - 1;
    double best = -1.0;
    for (Eigen::Index a = w0; a < nn; ++a) {
        for (Eigen::Index b = a + 1; b < nn; ++b) {
            const double s = std::abs(std::sin(P * (sol.rho_grid(b) - sol.rho_grid(a))));
            if (s > best) {
                best = s;
                ia = a;
                ib = b;
            }
        }
    }
    Eigen::Index ic = w0;
    while (ic == ia || ic == ib) ++ic;

    Eigen::MatrixXcd A(m, m), B(m, m);
    double cond = 0.0;
    const double ra = sol.rho_grid(ia), rb = sol.rho_grid(ib);
    for (Eigen::Index r = 0; r < m; ++r) {
        const int K = sol.channels[static_cast<std::size_t>(r)].degree();
        const WavePair wa = radial_waves(sol.d, K, P, ra);
        const WavePair wb = radial_waves(sol.d, K, P, rb);
        const complex det = wa.in * wb.out - wa.out * wb.in;
        const double fro2 = std::norm(wa.in) + std::norm(wa.out) + std::norm(wb.in) +
                            std::norm(wb.out);
        if (std::abs(det) < 1e-300 || fro2 / std::abs(det) > opts.condition_limit) {
            throw accuracy_error(
                "matching: wave system ill-conditioned (store more nodes or change rho_max)",
                fro2 / std::max(std::abs(det), 1e-300));
        }
        cond = std::max(cond, fro2 / std::abs(det));
        A.row(r) = (wb.out * sol.psi[static_cast<std::size_t>(ia)].row(r) -
                    wa.out * sol.psi[static_cast<std::size_t>(ib)].row(r)) /
                   det;
        B.row(r) = (wa.in * sol.psi[static_cast<std::size_t>(ib)].row(r) -
                    wb.in * sol.psi[static_cast<std::size_t>(ia)].row(r)) /
                   det;
    }

    // the fitted pair must reproduce the solution at an independent node
    double resid = 0.0, scale = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
        const WavePair wc =
            radial_waves(sol.d, sol.channels[static_cast<std::size_t>(r)].degree(), P,
                         sol.rho_grid(ic));
        const Eigen::RowVectorXcd model = wc.in * A.row(r) + wc.out * B.row(r);
        resid = std::max(resid,
                         (model - sol.psi[static_cast<std::size_t>(ic)].row(r)).cwiseAbs().maxCoeff());
        scale = std::max(scale, sol.psi[static_cast<std::size_t>(ic)].row(r).cwiseAbs().maxCoeff());
    }
    resid /= std::max(scale, 1e-300);
    if (resid > opts.residual_limit) {
        throw accuracy_error("matching: waves fail to reproduce the solution at a check node",
                             resid);
    }

    SMatrixBlock blk;
    blk.energy = sol.energy;
    blk.kmax = sol.kmax;
    blk.rho_max = sol.rho_grid(nn - 1);
    blk.matching_condition = cond;
    blk.matching_residual = resid;
    // S = -B A^{-1} D, D = diag((-1)^K)
    Eigen::MatrixXcd X = A.transpose().partialPivLu().solve(B.transpose()).transpose();
    for (Eigen::Index j = 0; j < m; ++j) {
        if (sol.channels[static_cast<std::size_t>(j)].degree() % 2 != 0) X.col(j) *= -1.0;
    }
    blk.values = -X;
    fill_defects(blk);
    return blk;
}

// ---------------------------------------------------------------------------
// S directly from an on-shell kernel
// ---------------------------------------------------------------------------
SMatrixBlock s_from_tkernel(const tmatrix::TKernel& T, const ChannelBasis& basis, double pmag,
                            const SFromTOptions& opts) {
    if (T.d() != basis.d) throw std::invalid_argument("kernel S: dimension mismatch");
    if (pmag <= 0.0) throw std::domain_error("kernel S: on-shell momentum must be positive");
    const Eigen::Index m = basis.size();
    const int level = opts.outer_level > 0 ? opts.outer_level : basis.level;
    const auto& oq = harmonics::shared_quadrature(basis.d, level);
    const Eigen::MatrixXd Yout = harmonics::evaluation_matrix(basis.channels, oq);

    // basis values at the inner shell nodes, cached per refinement level
    std::map<Eigen::Index, std::pair<Eigen::MatrixXd, Eigen::MatrixXcd>> cache;
    const singular::AngularBatchFn batch = [&](const Eigen::MatrixXd& pts) -> Eigen::MatrixXcd {
        auto it = cache.find(pts.rows());
        if (it == cache.end() || (it->second.first - pts).cwiseAbs().maxCoeff() != 0.0) {
            SphereQuadrature sub;
            sub.nodes = pts;
            sub.weights = Eigen::VectorXd::Zero(pts.rows());
            Eigen::MatrixXcd Y = harmonics::evaluation_matrix(basis.channels, sub).cast<complex>();
            it = cache.insert_or_assign(it == cache.end() ? cache.begin() : it, pts.rows(),
                                        std::make_pair(pts, std::move(Y)));
        }
        return it->second.second;
    };

    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(m, m);
    Eigen::VectorXd Pj(basis.d);
    for (Eigen::Index j = 0; j < oq.size(); ++j) {
        Pj = pmag * oq.nodes.row(j).transpose();
        const auto vals =
            singular::F_pm_batch(T, Pj, pmag, batch, static_cast<int>(m), singular::WaveSign::plus,
                                 opts.fpm);
        Eigen::VectorXcd fv(m);
        for (Eigen::Index k = 0; k < m; ++k) fv(k) = vals[static_cast<std::size_t>(k)].value;
        M.noalias() += (oq.weights(j) * fv) * Yout.row(j).cast<complex>();
    }

    SMatrixBlock blk;
    blk.energy = pmag * pmag;
    blk.kmax = basis.kmax;
    blk.values = Eigen::MatrixXcd::Identity(m, m) -
                 complex(0.0, pi) * std::pow(pmag, basis.d - 2) * M;
    fill_defects(blk);
    return blk;
}

// ---------------------------------------------------------------------------
// Large-|X| consistency of the reconstructed wave
// ---------------------------------------------------------------------------
WeakAsymptoticsReport weak_asymptotics_check(const tmatrix::TKernel& T, const Eigen::VectorXd& P,
                                             const oscillatory::AngularFn& G,
                                             const WeakAsymptoticsOptions& opts) {
    const int d = T.d();
    if (P.size() != d) throw std::invalid_argument("weak asymptotics: momentum dimension mismatch");
    const double pmag = P.norm();
    if (pmag <= 0.0) throw std::domain_error("weak asymptotics: |P| must be positive");
    if (opts.n_x < 2 || !(opts.x_hi > opts.x_lo) || opts.x_lo <= 0.0)
        throw std::invalid_argument("weak asymptotics: bad radial grid");
    const Eigen::VectorXd Phat = P / pmag;
    const oscillatory::SphericalWaveFactors wf(d, pmag);
    const double R = std::max(6.0 * pmag, 12.0);

    // Chebyshev cache of the shell averages F^{+-}(r); both drive the radial
    // pole integrals at every sample radius
    const int nc = std::max(8, opts.fcache_nodes);
    const auto rknots = ChebInterp::nodes(nc, 0.0, R);
    Eigen::MatrixXd samples(nc, 4);
    double fscale = 1e-300;
    auto fpm_at = [&](double r, singular::WaveSign s) {
        return singular::F_pm(T, P, std::max(r, 1e-12), G, s, opts.fpm).value;
    };
    for (int i = 0; i < nc; ++i) {
        const complex fp = fpm_at(rknots[static_cast<std::size_t>(i)], singular::WaveSign::plus);
        const complex fm = fpm_at(rknots[static_cast<std::size_t>(i)], singular::WaveSign::minus);
        samples.row(i) << fp.real(), fp.imag(), fm.real(), fm.imag();
        fscale = std::max({fscale, std::abs(fp), std::abs(fm)});
    }
    const ChebInterp fc = ChebInterp::fit(samples, 0.0, R);

    WeakAsymptoticsReport rep;
    for (int i = 0; i + 1 < nc && i < 2 * opts.fpm.certificate_samples + 5; i += 7) {
        const double rp = 0.5 * (rknots[static_cast<std::size_t>(i)] +
                                 rknots[static_cast<std::size_t>(i + 1)]);
        const Eigen::VectorXd v = fc.eval(rp);
        rep.fcache_residual = std::max(
            rep.fcache_residual,
            std::max(std::abs(complex(v(0), v(1)) - fpm_at(rp, singular::WaveSign::plus)),
                     std::abs(complex(v(2), v(3)) - fpm_at(rp, singular::WaveSign::minus))) /
                fscale);
    }

    const singular::CFn fplus = [&fc, R](double r) {
        const Eigen::VectorXd v = fc.eval(std::clamp(r, 0.0, R));
        return complex(v(0), v(1));
    };
    const singular::CFn fminus = [&fc, R](double r) {
        const Eigen::VectorXd v = fc.eval(std::clamp(r, 0.0, R));
        return complex(v(2), v(3));
    };

    const auto& jquad = harmonics::shared_quadrature(d, opts.j_level);
    auto direct = [&](double x) {
        const complex J = oscillatory::J_exact(x * Phat, P, G, jquad, 1e-8);
        const complex Im =
            singular::radial_pole_integral(fminus, pmag, x, d, singular::WaveSign::minus,
                                           singular::RadialMode::exact, R)
                .value;
        const complex Ip =
            singular::radial_pole_integral(fplus, pmag, x, d, singular::WaveSign::plus,
                                           singular::RadialMode::exact, R)
                .value;
        return J - (Im - Ip);
    };

    rep.s_of_g = G(Phat) - complex(0.0, pi) * std::pow(pmag, d - 2) *
                               singular::F_pm(T, P, pmag, G, singular::WaveSign::plus, opts.fpm)
                                   .value;
    auto asymptotic = [&](double x) {
        return wf.Nd() * (wf.Qminus(x) * G(-Phat) - wf.Qplus(x) * rep.s_of_g);
    };

    // whole-period spacing keeps the interference pattern fixed across radii,
    // so the deviation sequence is comparable point to point
    const double period = 2.0 * pi / pmag;
    const double step =
        std::ceil((opts.x_hi - opts.x_lo) / ((opts.n_x - 1) * period)) * period;
    rep.xmag.resize(opts.n_x);
    rep.deviation.resize(opts.n_x);
    for (int j = 0; j < opts.n_x; ++j) {
        const double x = opts.x_lo + j * step;
        rep.xmag(j) = x;
        const complex dv = direct(x), av = asymptotic(x);
        rep.deviation(j) = std::abs(dv - av) / std::max(std::abs(av), 1e-300);
    }
    rep.monotone = true;
    for (int j = 0; j + 1 < opts.n_x; ++j) {
        if (!(rep.deviation(j + 1) < rep.deviation(j))) rep.monotone = false;
    }

    // quarter-period projection: the outgoing term advances by i per sample
    // and cancels exactly over any multiple of four samples
    const int win = std::max(4, opts.window - opts.window % 4);
    const double quarter = 0.25 * pi / pmag;
    complex acc(0.0, 0.0);
    const double base = rep.xmag(opts.n_x - 1);
    for (int mI = 0; mI < win; ++mI) {
        const double x = base + mI * quarter;
        acc += direct(x) / wf.Qminus(x);
    }
    rep.incoming_extracted = acc / static_cast<double>(win);
    rep.incoming_predicted = wf.Nd() * G(-Phat);
    rep.incoming_rel_err = std::abs(rep.incoming_extracted - rep.incoming_predicted) /
                           std::max(std::abs(rep.incoming_predicted), 1e-300);
    return rep;
}

Eigen::VectorXd eigenphases(const Eigen::MatrixXcd& S) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(S, false);
    Eigen::VectorXd ph(S.rows());
    for (Eigen::Index i = 0; i < S.rows(); ++i) ph(i) = 0.5 * std::arg(es.eigenvalues()(i));
    std::sort(ph.data(), ph.data() + ph.size(), std::greater<double>());
    return ph;
}

}  // namespace hyperscat::hyperradial
