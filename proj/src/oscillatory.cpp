#include "hyperscat/oscillatory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace hyperscat::oscillatory {

SphericalWaveFactors::SphericalWaveFactors(int d, double pmag) : d_(d), p_(pmag) {
    if (d < 2) throw std::invalid_argument("SphericalWaveFactors: need d >= 2");
    if (!(pmag > 0)) throw std::domain_error("SphericalWaveFactors: need |P| > 0");
}

complex SphericalWaveFactors::Qplus(double xmag) const {
    return std::polar(1.0, p_ * xmag) * eighth_root_phase(-(d_ - 3)) /
           std::pow(xmag, (d_ - 1) / 2.0);
}

complex SphericalWaveFactors::Qminus(double xmag) const {
    return std::polar(1.0, -p_ * xmag) * eighth_root_phase(d_ - 3) / std::pow(xmag, (d_ - 1) / 2.0);
}

complex SphericalWaveFactors::Nd() const {
    return complex(0.0, 1.0) / std::sqrt(2 * pi) / std::pow(p_, (d_ - 1) / 2.0);
}

namespace {

/// Orthonormal frame with first column Phat: Householder reflection taking
/// e1 to Phat (symmetric, orthogonal).
Eigen::MatrixXd frame_along(const Eigen::VectorXd& phat) {
    const int d = static_cast<int>(phat.size());
    Eigen::VectorXd v = phat;
    v(0) -= 1.0;
    const double vn2 = v.squaredNorm();
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
    if (vn2 > 1e-28) H -= (2.0 / vn2) * v * v.transpose();
    return H;
}

/// Transverse S^{d-2} rule embedded in the hyperplane orthogonal to Phat.
struct TransverseRule {
    std::vector<Eigen::VectorXd> nodes;  // d-dim unit vectors orthogonal to Phat
    std::vector<double> weights;
};

TransverseRule transverse_rule(const Eigen::VectorXd& phat, int level) {
    const int d = static_cast<int>(phat.size());
    Eigen::MatrixXd H = frame_along(phat);
    TransverseRule out;
    if (d == 3) {
        const int m = std::max(8, 2 * level + 2);
        for (int j = 0; j < m; ++j) {
            const double phi = 2 * pi * (j + 0.5) / m;
            Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
            z(1) = std::cos(phi);
            z(2) = std::sin(phi);
            out.nodes.push_back(H * z);
            out.weights.push_back(2 * pi / m);
        }
        return out;
    }
    auto sub = harmonics::build_quadrature(d - 1, level);
    for (Eigen::Index i = 0; i < sub.size(); ++i) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
        z.tail(d - 1) = sub.nodes.row(i).transpose();
        out.nodes.push_back(H * z);
        out.weights.push_back(sub.weights(i));
    }
    return out;
}

}  // namespace

complex J_exact(const Eigen::VectorXd& X, const Eigen::VectorXd& P, const AngularFn& G,
                const harmonics::SphereQuadrature& quad, double tol) {
    const int d = static_cast<int>(X.size());
    if (P.size() != d) throw std::invalid_argument("J_exact: X and P dimensions differ");
    if (d < 3) throw std::domain_error("J_exact: supported for d >= 3");
    const double xmag = X.norm(), pmag = P.norm();
    const double kappa = xmag * pmag;
    const double norm = std::pow(2 * pi, -d / 2.0);

    if (kappa == 0.0) {
        complex s = 0;
        for (Eigen::Index i = 0; i < quad.size(); ++i)
            s += quad.weights(i) * G(quad.nodes.row(i).transpose());
        return norm * s;
    }

    const Eigen::VectorXd phat = P / pmag;
    const int glevel = std::max(4, (quad.exact_degree - 1) / 2);
    const TransverseRule tr = transverse_rule(phat, glevel);

    // h(u) = transverse average of G at polar offset u along Phat.
    auto havg = [&](double u) {
        const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
        complex acc = 0;
        for (std::size_t j = 0; j < tr.nodes.size(); ++j)
            acc += tr.weights[j] * G(u * phat + s * tr.nodes[j]);
        return acc;
    };

    const double jaco = (d - 3) / 2.0;
    int n = std::max<int>(24, static_cast<int>(kappa / 2) + 16);
    complex prev = 0;
    bool have_prev = false;
    double achieved = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 6; ++pass, n *= 2) {
        auto gj = gauss_jacobi(n, jaco, jaco);
        std::vector<complex> hv(gj.size());
        parallel_for(gj.size(), [&](std::size_t i) { hv[i] = havg(gj.x[i]); });
        complex val = 0;
        for (std::size_t i = 0; i < gj.size(); ++i)
            val += gj.w[i] * std::polar(1.0, kappa * gj.x[i]) * hv[i];
        val *= norm;
        if (have_prev) {
            achieved = std::abs(val - prev) / std::max(1.0, std::abs(val));
            if (achieved <= tol) return val;
        }
        prev = val;
        have_prev = true;
    }
    throw accuracy_error("J_exact: oscillatory refinement did not converge", achieved);
}

complex J_asymptotic(double xmag, const Eigen::VectorXd& P, const AngularFn& G) {
    const int d = static_cast<int>(P.size());
    const double pmag = P.norm();
    if (!(pmag > 0))
        throw std::domain_error("J_asymptotic: stationary phase needs |P| > 0");
    const Eigen::VectorXd phat = P / pmag;
    SphericalWaveFactors wf(d, pmag);
    return wf.Nd() * (wf.Qminus(xmag) * G(-phat) - wf.Qplus(xmag) * G(phat));
}

complex pole_integral_asymptotic(const Eigen::VectorXd& x, double p, const AngularFn& f, int sign) {
    if (sign != 1 && sign != -1)
        throw std::invalid_argument("pole_integral_asymptotic: sign must be +1 or -1");
    const int d = static_cast<int>(x.size());
    const double xmag = x.norm();
    if (!(xmag > 0)) throw std::domain_error("pole_integral_asymptotic: need |x| > 0");
    const Eigen::VectorXd xhat = x / xmag;
    const complex phase = std::polar(1.0, sign * p * xmag) * eighth_root_phase(-sign * (d - 3));
    return pi * std::pow(2 * pi, (d - 1) / 2.0) * std::pow(p, (d - 3) / 2.0) *
           f(sign * p * xhat) * phase / std::pow(xmag, (d - 1) / 2.0);
}

}  // namespace hyperscat::oscillatory
