#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "hyperscat/harmonics.hpp"
#include "hyperscat/numerics.hpp"
#include "hyperscat/oscillatory.hpp"
#include "hyperscat/singular.hpp"
#include "hyperscat/tmatrix.hpp"

using namespace hyperscat;
using namespace hyperscat::singular;
using tmatrix::SeparableModel;

namespace {

constexpr double kPi = 3.14159265358979323846;

complex iepsilon_limit(const std::function<complex(double)>& value_at, std::vector<double> eps) {
    std::vector<complex> vals;
    vals.reserve(eps.size());
    for (double e : eps) vals.push_back(value_at(e));
    return richardson_extrapolate(eps, vals);
}

// full Lagrange extrapolation of v(eps) to eps = 0 over all supplied points
complex extrapolate_to_zero(const std::vector<double>& eps, const std::vector<complex>& vals) {
    complex acc(0.0, 0.0);
    for (std::size_t i = 0; i < eps.size(); ++i) {
        double weight = 1.0;
        for (std::size_t j = 0; j < eps.size(); ++j) {
            if (j != i) weight *= eps[j] / (eps[j] - eps[i]);
        }
        acc += weight * vals[i];
    }
    return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// cauchy_log_subtraction
// ---------------------------------------------------------------------------
TEST_CASE("log-subtracted pole: frozen values, sides, and endpoint errors") {
    const CFn one = [](double) { return complex(1.0, 0.0); };
    const CFn lin = [](double u) { return complex(u, 0.0); };

    const complex vplus = cauchy_log_subtraction(one, complex(0.0, 0.0), Boundary::plus_i0);
    CHECK(std::abs(vplus - complex(0.0, -kPi)) < 1e-12);
    const complex vminus = cauchy_log_subtraction(one, complex(0.0, 0.0), Boundary::minus_i0);
    CHECK(std::abs(vminus - complex(0.0, kPi)) < 1e-12);

    // int u/(u - i0 sided) du = 2 on either side: the pole is odd-cancelling
    CHECK(std::abs(cauchy_log_subtraction(lin, complex(0.0, 0.0), Boundary::plus_i0) -
                   complex(2.0, 0.0)) < 1e-10);
    CHECK(std::abs(cauchy_log_subtraction(lin, complex(0.0, 0.0), Boundary::minus_i0) -
                   complex(2.0, 0.0)) < 1e-10);

    CHECK_THROWS_AS(
        (void)cauchy_log_subtraction(one, complex(1.0, 0.0), Boundary::plus_i0),
        std::domain_error);
    CHECK_THROWS_AS(
        (void)cauchy_log_subtraction(one, complex(-1.0, 0.0), Boundary::minus_i0),
        std::domain_error);
}

TEST_CASE("log-subtracted pole: off-interval value matches direct quadrature") {
    const CFn B = [](double u) { return complex(std::exp(0.3 * u), 0.0); };
    const complex val = cauchy_log_subtraction(B, complex(5.0, 0.0), Boundary::plus_i0);
    const complex direct = integrate_adaptive_c(
        [](double u) { return complex(std::exp(0.3 * u) / (u - 5.0), 0.0); }, -1.0, 1.0);
    CHECK(std::abs(val - direct) < 1e-10);
    CHECK(std::abs(val.imag()) < 1e-11);  // no pole crossed: value is real
}

TEST_CASE("log-subtracted pole: analytic derivative route agrees with differences") {
    const complex slope(0.2, 0.4);
    const CFn B = [slope](double u) { return std::exp(slope * u); };
    const CFn dB = [slope](double u) { return slope * std::exp(slope * u); };
    const complex zeta(0.3, 0.0);
    const complex with_d = cauchy_log_subtraction(B, zeta, Boundary::plus_i0, &dB);
    const complex with_fd = cauchy_log_subtraction(B, zeta, Boundary::plus_i0);
    CHECK(std::abs(with_d - with_fd) < 1e-9);
}

TEST_CASE("log-subtracted pole: Plemelj jump and i-epsilon limit") {
    const CFn B = [](double u) { return complex(std::exp(0.3 * u), 0.0); };
    const double zr = 0.37;
    const complex plus = cauchy_log_subtraction(B, complex(zr, 0.0), Boundary::plus_i0);
    const complex minus = cauchy_log_subtraction(B, complex(zr, 0.0), Boundary::minus_i0);
    const complex jump_expected = complex(0.0, -2.0 * kPi) * B(zr);
    CHECK(std::abs((plus - minus) - jump_expected) < 1e-8 * std::abs(jump_expected));

    auto value_at = [&](double eps) {
        auto f = [&](double u) { return B(u) / complex(u - zr, eps); };
        return integrate_adaptive_c(f, -1.0, zr, 1e-13, 1e-11) +
               integrate_adaptive_c(f, zr, 1.0, 1e-13, 1e-11);
    };
    const complex limit = iepsilon_limit(value_at, {1e-2, 1e-3, 1e-4});
    CHECK(std::abs(plus - limit) < 1e-4 * (1.0 + std::abs(plus)));
}

// ---------------------------------------------------------------------------
// endpoint_weight_moment / endpoint_weighted_pole
// ---------------------------------------------------------------------------
TEST_CASE("endpoint weight moment: closed form against quadrature") {
    CHECK(std::abs(endpoint_weight_moment(complex(-1.0, 0.0)) -
                   complex(kPi * (1.5 - std::sqrt(2.0)), 0.0)) < 1e-14);
    CHECK(std::abs(endpoint_weight_moment(complex(0.0, 0.0)) - complex(0.5 * kPi, 0.0)) < 1e-14);
    CHECK(std::abs(endpoint_weight_moment(complex(1.0, 0.0)) - complex(-0.5 * kPi, 0.0)) < 1e-14);

    const complex half_minus = endpoint_weight_moment(complex(0.5, 0.0), Boundary::minus_i0);
    CHECK(std::abs(half_minus.real()) < 1e-15);
    CHECK(half_minus.imag() == doctest::Approx(0.5 * kPi).epsilon(1e-14));
    const complex half_plus = endpoint_weight_moment(complex(0.5, 0.0), Boundary::plus_i0);
    CHECK(std::abs(half_plus - std::conj(half_minus)) < 1e-15);
    CHECK(half_plus.imag() == doctest::Approx(-0.5 * kPi).epsilon(1e-14));

    for (double x : {-0.7, 2.2}) {
        const complex w = endpoint_weight_moment(complex(x, 0.0));
        const double direct = integrate_adaptive(
            [x](double v) { return std::sqrt(v * (1.0 - v)) / (v - x); }, 0.0, 1.0);
        CHECK(std::abs(w - complex(direct, 0.0)) < 1e-10);
    }

    const complex zc(0.4, 0.2);
    const complex wc = endpoint_weight_moment(zc);
    const complex direct_c = integrate_adaptive_c(
        [zc](double v) { return std::sqrt(v * (1.0 - v)) / (complex(v, 0.0) - zc); }, 0.0, 1.0);
    CHECK(std::abs(wc - direct_c) < 1e-12);
    CHECK(std::abs(endpoint_weight_moment(std::conj(zc)) - std::conj(wc)) < 1e-14);

    // far-field decay W(z) ~ -pi/(8z)
    const complex wfar = endpoint_weight_moment(complex(1000.0, 0.0));
    CHECK(std::abs(wfar * (-8000.0 / kPi) - complex(1.0, 0.0)) < 1e-3);
}

TEST_CASE("endpoint-weighted pole: frozen values and convergence") {
    const CFn one = [](double) { return complex(1.0, 0.0); };
    CHECK(std::abs(endpoint_weighted_pole(one, complex(-1.0, 0.0)) -
                   complex(kPi * (1.5 - std::sqrt(2.0)), 0.0)) < 1e-13);
    const complex vhalf = endpoint_weighted_pole(one, complex(0.5, 0.0), Boundary::minus_i0);
    CHECK(std::abs(vhalf - complex(0.0, 0.5 * kPi)) < 1e-13);

    const CFn rat = [](double v) { return complex(1.0 / (1.3 - v), 0.0); };
    const complex vr = endpoint_weighted_pole(rat, complex(-1.0, 0.0));
    const double direct = integrate_adaptive(
        [](double v) { return std::sqrt(v * (1.0 - v)) / ((1.3 - v) * (v + 1.0)); }, 0.0, 1.0);
    CHECK(std::abs(vr - complex(direct, 0.0)) < 1e-11);

    CHECK(std::abs(endpoint_weighted_pole(rat, complex(-1.0, 0.0), Boundary::minus_i0, 24) - vr) <
          1e-10);
}

TEST_CASE("endpoint-weighted pole: Plemelj jump, i-epsilon limit, decay") {
    const CFn B = [](double v) { return complex(std::exp(0.7 * v), 0.0); };
    const double zr = 0.3;
    const complex minus = endpoint_weighted_pole(B, complex(zr, 0.0), Boundary::minus_i0);
    const complex plus = endpoint_weighted_pole(B, complex(zr, 0.0), Boundary::plus_i0);
    const complex jump_expected =
        complex(0.0, 2.0 * kPi) * std::sqrt(zr * (1.0 - zr)) * B(zr);
    CHECK(std::abs((minus - plus) - jump_expected) < 1e-8 * std::abs(jump_expected));

    auto value_at = [&](double eps) {
        auto f = [&](double v) {
            return std::sqrt(v * (1.0 - v)) * B(v) / complex(v - zr, -eps);
        };
        return integrate_adaptive_c(f, 0.0, zr, 1e-13, 1e-11) +
               integrate_adaptive_c(f, zr, 1.0, 1e-13, 1e-11);
    };
    const complex limit = iepsilon_limit(value_at, {1e-2, 1e-3, 1e-4});
    CHECK(std::abs(minus - limit) < 1e-4 * (1.0 + std::abs(minus)));

    const complex far = endpoint_weighted_pole(B, complex(1000.0, 0.0));
    const double bmom = integrate_adaptive(
        [&](double v) { return std::sqrt(v * (1.0 - v)) * std::exp(0.7 * v); }, 0.0, 1.0);
    CHECK(std::abs(far * (-1000.0) - complex(bmom, 0.0)) < 2e-3 * bmom);
}

// ---------------------------------------------------------------------------
// delta_reduce_Dm
// ---------------------------------------------------------------------------
TEST_CASE("delta reduction: exact prefactor on constant integrands") {
    auto tc1 = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };
    const AngularFn g1 = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };

    {
        Eigen::VectorXd p(3);
        p << 0.3, 0.0, -0.2;
        const double pp = 1.3;
        const auto r = delta_reduce_Dm(tc1, g1, p, pp, 6);
        const double gap2 = pp * pp - p.squaredNorm();
        const double expected = std::sqrt(gap2) / std::pow(pp, 4) * sphere_area(3);
        CHECK(r.value.real() == doctest::Approx(expected).epsilon(1e-13));
        CHECK(std::abs(r.value.imag()) < 1e-15);
        CHECK(r.regularization == Regularization::delta_reduction);
        CHECK_FALSE(r.below_threshold);
        CHECK(r.error_estimate < 1e-12 * expected);
    }
    {
        Eigen::VectorXd p(1);
        p << 0.4;
        const double pp = 1.1;
        const auto r = delta_reduce_Dm(tc1, g1, p, pp, 6);  // internal dimension 5
        const double gap2 = pp * pp - p.squaredNorm();
        const double expected = std::pow(gap2, 1.5) / std::pow(pp, 4) * sphere_area(5);
        CHECK(r.value.real() == doctest::Approx(expected).epsilon(1e-12));
    }
    {
        Eigen::VectorXd p(3);
        p << 0.2, -0.1, 0.15;
        const double pp = 0.9;
        const auto r = delta_reduce_Dm(tc1, g1, p, pp, 5);  // internal dimension 2
        const double expected = 2.0 * kPi / std::pow(pp, 3);
        CHECK(r.value.real() == doctest::Approx(expected).epsilon(1e-13));
    }
    {
        Eigen::VectorXd p(3);
        p << 0.2, -0.1, 0.15;
        const double pp = 0.9;
        const auto r = delta_reduce_Dm(tc1, g1, p, pp, 4);  // internal dimension 1
        const double gap2 = pp * pp - p.squaredNorm();
        const double expected = 2.0 / (std::sqrt(gap2) * pp * pp);
        CHECK(r.value.real() == doctest::Approx(expected).epsilon(1e-13));
        CHECK(r.error_estimate == 0.0);
    }
}

TEST_CASE("delta reduction: empty shell flags below threshold") {
    auto tc1 = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };
    const AngularFn g1 = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };
    Eigen::VectorXd p(3);
    p << 1.2, 0.0, 0.0;
    const auto r = delta_reduce_Dm(tc1, g1, p, 1.0, 6);
    CHECK(r.below_threshold);
    CHECK(r.value == complex(0.0, 0.0));
    CHECK(r.error_estimate == 0.0);
}

TEST_CASE("delta reduction: weight vanishing on the reduced shell gives zero") {
    auto tc = [](const Eigen::VectorXd& k) { return complex(std::exp(-k.squaredNorm()), 0.0); };
    Eigen::VectorXd p(3);
    p << 0.3, -0.1, 0.2;
    const double pp = 1.2;
    const AngularFn g = [pp](const Eigen::VectorXd& x) {
        return complex(x(3) * pp - 0.3, 0.0);  // zero exactly where the delta pins x(3)
    };
    const auto r = delta_reduce_Dm(tc, g, p, pp, 6);
    CHECK(r.value == complex(0.0, 0.0));
}

TEST_CASE("delta reduction: mollified-delta oracle") {
    // tc and G smooth and product-form so the mollified average splits into
    // independent sphere factors evaluated by their own quadratures.
    auto tc = [](const Eigen::VectorXd& k) {
        return complex(std::exp(-0.4 * k.squaredNorm()) * (1.0 + 0.3 * k(2)), 0.0);
    };
    const AngularFn G = [](const Eigen::VectorXd& x) {
        return complex(std::exp(0.25 * x(0) - 0.15 * x(4)), 0.0);
    };
    Eigen::VectorXd p(3);
    p << 0.25, -0.1, 0.3;
    const double pp = 1.2;

    const auto reduced = delta_reduce_Dm(tc, G, p, pp, 6, 10);

    // Gaussian mollifier of width w for the 3-d delta, integrated over S^5 in
    // hyperangle coordinates; head and tail sphere averages factorize.
    const auto kquad = harmonics::build_quadrature(3, 10);
    const auto pquad = harmonics::build_quadrature(3, 40);
    auto mollified = [&](double w) -> complex {
        auto integrand = [&](double v) -> complex {
            const double kf = pp * std::sqrt(1.0 - v);
            complex head(0.0, 0.0);
            for (Eigen::Index i = 0; i < kquad.size(); ++i) {
                const Eigen::Vector3d khat = kquad.nodes.row(i).transpose();
                Eigen::VectorXd karg = kf * khat;
                head += kquad.weights(i) * tc(karg) *
                        std::exp(0.25 * std::sqrt(1.0 - v) * khat(0));
            }
            const double pf = pp * std::sqrt(v);
            double tail = 0.0;
            for (Eigen::Index j = 0; j < pquad.size(); ++j) {
                const Eigen::Vector3d phat = pquad.nodes.row(j).transpose();
                const double moll = std::exp(-(pf * phat - p).squaredNorm() / (w * w)) /
                                    (std::pow(kPi, 1.5) * w * w * w);
                tail += pquad.weights(j) * moll * std::exp(-0.15 * std::sqrt(v) * phat(1));
            }
            return 0.5 * std::sqrt(v * (1.0 - v)) * head * tail;
        };
        return integrate_adaptive_c(integrand, 0.0, 1.0, 1e-12, 1e-9);
    };
    std::vector<double> w2s{0.08, 0.04, 0.02, 0.01};
    std::vector<complex> vals;
    for (double w2 : w2s) vals.push_back(mollified(std::sqrt(w2)));
    const complex extrap = extrapolate_to_zero(w2s, vals);
    CHECK(std::abs(reduced.value - extrap) < 1e-4 * std::abs(extrap));
}

TEST_CASE("delta reduction: domain errors") {
    auto tc1 = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };
    const AngularFn g1 = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };
    Eigen::VectorXd p(3);
    p << 0.1, 0.0, 0.0;
    CHECK_THROWS_AS((void)delta_reduce_Dm(tc1, g1, p, 0.0, 6), std::domain_error);
    CHECK_THROWS_AS((void)delta_reduce_Dm(tc1, g1, p, 1.0, 3), std::domain_error);
    Eigen::VectorXd empty(0);
    CHECK_THROWS_AS((void)delta_reduce_Dm(tc1, g1, empty, 1.0, 6), std::domain_error);
}

// ---------------------------------------------------------------------------
// F_pm: smooth route
// ---------------------------------------------------------------------------
TEST_CASE("sphere average: zero kernel integrates to zero") {
    const auto T = tmatrix::model_NBody_kernel(tmatrix::GaussianKernelSpec{6, 0.0, 0.3});
    Eigen::VectorXd P(6);
    P << 0.3, -0.2, 0.1, 0.4, 0.0, -0.1;
    const AngularFn G = [](const Eigen::VectorXd& x) { return complex(1.0 + x(0), 0.0); };
    const auto r = F_pm(T, P, 1.2, G, WaveSign::plus);
    CHECK(r.value == complex(0.0, 0.0));
    CHECK(r.error_estimate == 0.0);
}

TEST_CASE("sphere average: smooth kernel matches direct product quadrature") {
    const auto T = tmatrix::model_NBody_kernel(tmatrix::GaussianKernelSpec{6, 0.7, 0.3});
    Eigen::VectorXd P(6);
    P << 0.3, -0.2, 0.1, 0.4, 0.0, -0.1;
    const double pp = 1.2;
    const AngularFn G = [](const Eigen::VectorXd& x) {
        return std::exp(complex(0.2 * x(0) + 0.1 * x(3), 0.15 * x(1) - 0.05 * x(5)));
    };
    const auto r = F_pm(T, P, pp, G, WaveSign::plus);

    const auto quad = harmonics::build_quadrature(6, 16);
    const complex z(P.squaredNorm(), 0.0);
    complex direct(0.0, 0.0);
    for (Eigen::Index i = 0; i < quad.size(); ++i) {
        const Eigen::VectorXd xhat = quad.nodes.row(i).transpose();
        direct += quad.weights(i) * T.eval(pp * xhat, P, z) * G(xhat);
    }
    CHECK(std::abs(r.value - direct) < 1e-8 * std::abs(direct));

    // minus sign is the plus sign of the reflected weight
    const AngularFn Gr = [&G](const Eigen::VectorXd& x) { return G(-x); };
    const auto rm = F_pm(T, P, pp, G, WaveSign::minus);
    const auto rp = F_pm(T, P, pp, Gr, WaveSign::plus);
    CHECK(rm.value == rp.value);
}

TEST_CASE("sphere average: refinement divergence exposes a lying taxonomy") {
    // hand-built kernel tagged smooth whose profile is log-divergent on the shell
    auto bad_eval = [](const Eigen::VectorXd& ppv, const Eigen::VectorXd&, complex) {
        return complex(1.0 / std::abs(ppv(0) / ppv.norm()), 0.0);
    };
    const tmatrix::TKernel liar(6, {tmatrix::KernelTag::smooth},
                                tmatrix::GaussianKernelSpec{6, 1.0, 0.3}, bad_eval);
    Eigen::VectorXd P(6);
    P << 0.3, -0.2, 0.1, 0.4, 0.0, -0.1;
    const AngularFn G = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };
    CHECK_THROWS_AS((void)F_pm(liar, P, 1.2, G, WaveSign::plus), taxonomy_error);
}

// ---------------------------------------------------------------------------
// F_pm: delta-connected route
// ---------------------------------------------------------------------------
TEST_CASE("sphere average: delta-connected kernel reduces to the internal shell") {
    const SeparableModel pair = SeparableModel::with_bound_state(1.0, 0.5);
    const auto T = tmatrix::model_NBody_kernel(tmatrix::DeltaConnectedSpec{pair, 3});
    Eigen::VectorXd P(6);
    P << 0.4, 0.1, -0.3, 0.35, -0.15, 0.2;
    const double pp = 1.25;
    const AngularFn G = [](const Eigen::VectorXd& x) {
        return std::exp(complex(0.3 * x(1), 0.1 * x(4)));
    };
    const auto r = F_pm(T, P, pp, G, WaveSign::plus);
    CHECK(r.regularization == Regularization::delta_reduction);

    // assemble the reduced average directly at high order
    const Eigen::Vector3d pext = P.tail<3>();
    const double z = P.squaredNorm();
    const complex cfac =
        tmatrix::tau_plus(pair, complex(z - pext.squaredNorm(), 0.0)) * pair.g(P.head<3>().norm());
    const double gap2 = pp * pp - pext.squaredNorm();
    const double rint = std::sqrt(gap2);
    const auto quad = harmonics::build_quadrature(3, 14);
    complex shell(0.0, 0.0);
    for (Eigen::Index i = 0; i < quad.size(); ++i) {
        const Eigen::Vector3d khat = quad.nodes.row(i).transpose();
        Eigen::VectorXd xhat(6);
        xhat.head<3>() = (rint / pp) * khat;
        xhat.tail<3>() = pext / pp;
        shell += quad.weights(i) * pair.g(rint) * G(xhat);
    }
    const complex expected = cfac * std::sqrt(gap2) / std::pow(pp, 4) * shell;
    CHECK(std::abs(r.value - expected) < 1e-10 * std::abs(expected));

    // shrinking the shell below the external momentum empties it
    const auto under = F_pm(T, P, 0.4, G, WaveSign::plus);
    CHECK(under.below_threshold);
    CHECK(under.value == complex(0.0, 0.0));
}

// ---------------------------------------------------------------------------
// F_pm: form-factor pole route
// ---------------------------------------------------------------------------
TEST_CASE("sphere average: form-factor pole route against the i-epsilon oracle") {
    const SeparableModel pair = SeparableModel::with_bound_state(1.0, 0.6);
    const tmatrix::GaussianKernelSpec smooth{6, 0.8, 0.25};
    const auto T = tmatrix::model_NBody_kernel(tmatrix::FormFactorPoleSpec{pair, smooth});
    Eigen::VectorXd P(6);
    P << 0.5, -0.3, 0.2, 0.4, 0.6, -0.35;
    const double pp = 1.4;
    const double z = P.squaredNorm();
    const double lam = pair.bound_lambda();
    REQUIRE((z + lam * lam) / (pp * pp) < 1.0);  // the pole sits inside the shell

    // product-form weight: both sphere averages have closed forms
    const double ak = 0.2, apc = -0.1;
    const AngularFn G = [ak, apc](const Eigen::VectorXd& x) {
        return complex(std::exp(ak * x(0) + apc * x(4)), 0.0);
    };
    const auto r = F_pm(T, P, pp, G, WaveSign::plus);
    CHECK(r.regularization == Regularization::endpoint_weighted);

    auto sphere_exp = [](double a) {  // int_{S^2} e^{a khat . n} dkhat
        return std::abs(a) < 1e-8 ? 4.0 * kPi * (1.0 + a * a / 6.0)
                                  : 4.0 * kPi * std::sinh(a) / a;
    };
    const double fac = smooth.amplitude * std::exp(-smooth.width * (pp * pp + z));
    auto value_at = [&](double eps) {
        auto integrand = [&](double v) -> complex {
            const complex pole(z + lam * lam - pp * pp * v, eps);
            return 0.5 * std::sqrt(v * (1.0 - v)) * pair.phi(pp * std::sqrt(1.0 - v)) * fac *
                   sphere_exp(ak * std::sqrt(1.0 - v)) * sphere_exp(apc * std::sqrt(v)) / pole;
        };
        const double vsplit = (z + lam * lam) / (pp * pp);
        return integrate_adaptive_c(integrand, 0.0, vsplit, 1e-13, 1e-10) +
               integrate_adaptive_c(integrand, vsplit, 1.0, 1e-13, 1e-10);
    };
    const complex limit = iepsilon_limit(value_at, {1e-2, 1e-3, 1e-4});
    CHECK(std::abs(r.value - limit) < 1e-4 * std::abs(limit));

    // same route assembled in-test from the closed-form sphere factors
    const CFn B = [&](double v) {
        return complex(-(fac / (2.0 * pp * pp)) * pair.phi(pp * std::sqrt(1.0 - v)) *
                           sphere_exp(ak * std::sqrt(1.0 - v)) * sphere_exp(apc * std::sqrt(v)),
                       0.0);
    };
    const complex assembled =
        endpoint_weighted_pole(B, complex((z + lam * lam) / (pp * pp), 0.0), Boundary::minus_i0);
    CHECK(std::abs(r.value - assembled) < 1e-8 * std::abs(assembled));
}

// ---------------------------------------------------------------------------
// F_pm: composed two-cluster route
// ---------------------------------------------------------------------------
namespace {

struct ComposedFixture {
    jacobi::MassSet masses{{1.0, 1.0, 1.0}};
    partitions::Partition pa{3, {{1, 2}, {3}}};
    partitions::Partition pb{3, {{1, 3}, {2}}};
    SeparableModel pair_a;
    SeparableModel pair_b;
    tmatrix::TKernel T;
    Eigen::VectorXd P{6};
    double pp = 1.3;
    double gk = 0.25;   // head weight strength
    double gp = 0.35;   // tail weight strength
    Eigen::Vector3d n_tail{0.2, -0.4, 0.8};

    explicit ComposedFixture(SeparableModel a, SeparableModel b = SeparableModel::with_bound_state(0.9, 0.4))
        : pair_a(a),
          pair_b(b),
          T(tmatrix::model_NBody_kernel(tmatrix::Composed3Spec{masses, pa, pb, pair_a, pair_b})) {
        P << 0.45, -0.25, 0.3, 0.55, -0.2, 0.4;
        n_tail.normalize();
    }

    AngularFn weight() const {
        const double a0 = gk, a1 = gp;
        const Eigen::Vector3d n = n_tail;
        return [a0, a1, n](const Eigen::VectorXd& x) {
            return complex(std::exp(a0 * x(0) + a1 * x.tail<3>().dot(n)), 0.0);
        };
    }

    // brute-force i-epsilon sphere integral using closed-form angle averages
    complex brute_force(double eps) const {
        const auto& geom = T.geometry();
        const double c = geom.ba.c, s = geom.ba.s, s2 = s * s;
        const Eigen::Vector3d k_a = P.head<3>(), p_a = P.tail<3>();
        const Eigen::Vector3d k_b = geom.to_b_internal(k_a, p_a);
        const Eigen::Vector3d p_b = geom.to_b_external(k_a, p_a);
        const double pb = p_b.norm();
        const double z = P.squaredNorm();
        const complex zeps(z, eps);
        const complex cb =
            pair_b.tau(zeps - pb * pb) * pair_b.g(k_b.norm()) / std::pow(std::abs(s), 3);

        const Eigen::Vector3d e3 = p_b / pb;
        const Eigen::Vector3d e1 = e3.unitOrthogonal();
        const Eigen::Vector3d e2 = e3.cross(e1);
        const double mu = e3.dot(n_tail);
        const double rho = std::hypot(e1.dot(n_tail), e2.dot(n_tail));

        auto outer = [&](double v) -> complex {
            const double pmag = pp * std::sqrt(v), kmag = pp * std::sqrt(1.0 - v);
            const double ak = gk * std::sqrt(1.0 - v);
            const complex head =
                4.0 * kPi * (std::abs(ak) < 1e-8 ? 1.0 + ak * ak / 6.0 : std::sinh(ak) / ak);
            const double a = 2.0 * c * pmag * pb / s2;
            const double C = (pmag * pmag + c * c * pb * pb) / s2 + pb * pb - z;
            auto inner = [&](double u) -> complex {
                const double kxa =
                    std::sqrt((pb * pb + c * c * pmag * pmag - 2.0 * c * pb * pmag * u) / s2);
                const double kxb =
                    std::sqrt((pmag * pmag + c * c * pb * pb - 2.0 * c * pmag * pb * u) / s2);
                const double arg = gp * std::sqrt(v) * std::sqrt(std::max(0.0, 1.0 - u * u)) * rho;
                const complex azim = 2.0 * kPi * std::cyl_bessel_i(0.0, arg) *
                                     std::exp(gp * std::sqrt(v) * u * mu);
                return pair_a.g(kxa) * pair_b.g(kxb) * azim / complex(C - a * u, -eps);
            };
            const double u0 = std::clamp(C / a, -1.0, 1.0);
            complex iu = integrate_adaptive_c(inner, -1.0, u0, 1e-12, 1e-9);
            iu += integrate_adaptive_c(inner, u0, 1.0, 1e-12, 1e-9);
            return 0.5 * std::sqrt(v * (1.0 - v)) * pair_a.g(kmag) *
                   pair_a.tau(zeps - pmag * pmag) * head * iu;
        };
        const double vsplit =
            std::clamp((z + (pair_a.has_bound_state()
                                 ? pair_a.bound_lambda() * pair_a.bound_lambda()
                                 : 0.0)) /
                           (pp * pp),
                       0.1, 0.9);
        const complex val = integrate_adaptive_c(outer, 0.0, vsplit, 1e-12, 1e-8) +
                            integrate_adaptive_c(outer, vsplit, 1.0, 1e-12, 1e-8);
        return cb * val;
    }
};

}  // namespace

TEST_CASE("sphere average: composed route against the i-epsilon oracle (bound pair)") {
    ComposedFixture fx(SeparableModel::with_bound_state(1.1, 0.5));
    const double z = fx.P.squaredNorm();
    const double zv = (z + 0.25) / (fx.pp * fx.pp);
    REQUIRE(zv > 0.0);
    REQUIRE(zv < 1.0);  // the cluster-pole sits inside the hyperangle interval

    FpmOptions opts;
    const auto r = F_pm(fx.T, fx.P, fx.pp, fx.weight(), WaveSign::plus, opts);
    CHECK(std::isfinite(std::abs(r.value)));
    CHECK(r.regularization == Regularization::endpoint_weighted);

    std::vector<double> eps{0.08, 0.04, 0.02};
    std::vector<complex> vals;
    for (double e : eps) vals.push_back(fx.brute_force(e));
    const complex limit = richardson_extrapolate(eps, vals);
    CHECK(std::abs(r.value - limit) < 1e-4 * std::abs(limit));

    // deterministic across repeat evaluation (parallel loop is chunk-stable)
    const auto r2 = F_pm(fx.T, fx.P, fx.pp, fx.weight(), WaveSign::plus, opts);
    CHECK(r.value == r2.value);
    CHECK(r.error_estimate < 1e-3 * std::abs(r.value));
}

TEST_CASE("sphere average: composed route against the i-epsilon oracle (unbound pair)") {
    ComposedFixture fx(SeparableModel(-0.1, 1.1));
    REQUIRE_FALSE(fx.pair_a.has_bound_state());
    const auto r = F_pm(fx.T, fx.P, fx.pp, fx.weight(), WaveSign::plus);
    CHECK(r.regularization == Regularization::log_subtraction);

    std::vector<double> eps{0.08, 0.04, 0.02};
    std::vector<complex> vals;
    for (double e : eps) vals.push_back(fx.brute_force(e));
    const complex limit = richardson_extrapolate(eps, vals);
    CHECK(std::abs(r.value - limit) < 1e-4 * std::abs(limit));
}

TEST_CASE("sphere average: smoothness certificate across the shell") {
    ComposedFixture fx(SeparableModel::with_bound_state(1.1, 0.5));
    FpmOptions opts;
    opts.certificate = true;
    opts.certificate_halfwidth = 0.04;
    opts.certificate_samples = 5;
    const auto r = F_pm(fx.T, fx.P, fx.pp, fx.weight(), WaveSign::plus, opts);
    REQUIRE(r.smoothness_certificate.has_value());
    const auto& cert = *r.smoothness_certificate;
    CHECK(cert.samples == 5);
    CHECK(cert.lo == doctest::Approx(fx.pp * 0.96));
    CHECK(cert.hi == doctest::Approx(fx.pp * 1.04));
    CHECK(std::isfinite(cert.second_derivative_bound));
    CHECK(cert.second_derivative_bound > 0.0);
}

TEST_CASE("sphere average: domain errors") {
    const auto T = tmatrix::model_NBody_kernel(tmatrix::GaussianKernelSpec{6, 0.7, 0.3});
    const AngularFn G = [](const Eigen::VectorXd&) { return complex(1.0, 0.0); };
    Eigen::VectorXd P(6);
    P.setZero();
    P(0) = 1.0;
    CHECK_THROWS_AS((void)F_pm(T, P, 0.0, G, WaveSign::plus), std::domain_error);
    Eigen::VectorXd bad(4);
    bad.setZero();
    CHECK_THROWS_AS((void)F_pm(T, bad, 1.0, G, WaveSign::plus), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// radial_pole_integral
// ---------------------------------------------------------------------------
TEST_CASE("radial pole integral: zero profile and domain errors") {
    const CFn zero = [](double) { return complex(0.0, 0.0); };
    const auto r = radial_pole_integral(zero, 1.0, 50.0, 6, WaveSign::plus, RadialMode::exact);
    CHECK(r.value == complex(0.0, 0.0));
    CHECK(r.regularization == Regularization::pv_plus_residue);
    const auto ra = radial_pole_integral(zero, 1.0, 50.0, 6, WaveSign::plus, RadialMode::asymptotic);
    CHECK(ra.value == complex(0.0, 0.0));

    const CFn one = [](double) { return complex(1.0, 0.0); };
    CHECK_THROWS_AS(
        (void)radial_pole_integral(one, 0.0, 50.0, 6, WaveSign::plus, RadialMode::exact),
        std::domain_error);
    CHECK_THROWS_AS(
        (void)radial_pole_integral(one, 1.0, 50.0, 6, WaveSign::plus, RadialMode::exact),
        accuracy_error);  // constant profile never decays
}

TEST_CASE("radial pole integral: exact mode against the i-epsilon oracle") {
    const CFn F = [](double r) { return complex(std::exp(-0.4 * r * r) * (1.0 + 0.3 * r), 0.0); };
    const double P = 1.1, X = 9.0;
    const int d = 6;
    const auto r = radial_pole_integral(F, P, X, d, WaveSign::plus, RadialMode::exact);

    const double nu = 0.5 * (d - 1);
    const complex pref = complex(0.0, 1.0) / std::sqrt(2.0 * kPi) * std::pow(X, -nu) *
                         std::exp(complex(0.0, -kPi * (d - 3) / 4.0));
    auto value_at = [&](double eps) {
        auto f = [&](double rr) {
            return pref * std::pow(rr, nu) * std::exp(complex(0.0, rr * X)) * F(rr) /
                   complex(rr * rr - P * P, -eps);
        };
        return integrate_adaptive_c(f, 0.0, P, 1e-13, 1e-10) +
               integrate_adaptive_c(f, P, 12.0, 1e-13, 1e-10);
    };
    const complex limit = iepsilon_limit(value_at, {1e-2, 1e-3, 1e-4});
    CHECK(std::abs(r.value - limit) < 1e-5 * std::abs(limit));
}

TEST_CASE("radial pole integral: outgoing asymptotics approach the residue term") {
    const CFn F = [](double r) { return complex(std::exp(-0.5 * r * r), 0.0); };
    const double P = 1.2;
    const int d = 6;
    double prev_dev = 1e300;
    for (double X : {50.0, 100.0, 200.0}) {
        const auto ex = radial_pole_integral(F, P, X, d, WaveSign::plus, RadialMode::exact);
        const auto as = radial_pole_integral(F, P, X, d, WaveSign::plus, RadialMode::asymptotic);
        const double dev = std::abs(ex.value - as.value) / std::abs(as.value);
        if (X == 100.0) CHECK(dev < 0.02);
        CHECK(dev < 0.75 * prev_dev);
        prev_dev = dev;
    }
}

TEST_CASE("radial pole integral: incoming wave is asymptotically suppressed") {
    const CFn F = [](double r) { return complex(std::exp(-0.5 * r * r), 0.0); };
    const double P = 1.2;
    const int d = 6;
    std::vector<double> xs{20.0, 40.0, 60.0, 80.0, 100.0};
    std::vector<double> ratio;
    for (double X : xs) {
        const auto plus = radial_pole_integral(F, P, X, d, WaveSign::plus, RadialMode::exact);
        const auto minus = radial_pole_integral(F, P, X, d, WaveSign::minus, RadialMode::exact);
        ratio.push_back(std::abs(minus.value) / std::abs(plus.value));
    }
    for (std::size_t i = 0; i + 1 < ratio.size(); ++i) CHECK(ratio[i + 1] < ratio[i]);
    // least-squares decay rate of ln(ratio) in |X| must be decisively negative
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += std::log(ratio[i]);
        sxx += xs[i] * xs[i];
        sxy += xs[i] * std::log(ratio[i]);
    }
    const double n = static_cast<double>(xs.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope < -0.05);
    CHECK(ratio.front() < 5e-5);
    CHECK(ratio.back() < 2e-7);

    const auto asym =
        radial_pole_integral(F, P, 100.0, d, WaveSign::minus, RadialMode::asymptotic);
    CHECK(asym.value == complex(0.0, 0.0));
}

// ---------------------------------------------------------------------------
// F_pm_batch
// ---------------------------------------------------------------------------
TEST_CASE("sphere average batch: shared kernel sweep matches per-weight values") {
    const auto T = tmatrix::model_NBody_kernel(tmatrix::GaussianKernelSpec{6, 0.7, 0.3});
    Eigen::VectorXd P(6);
    P << 0.3, -0.2, 0.1, 0.4, 0.0, -0.1;
    const double pp = 1.2;

    std::vector<AngularFn> gs = {
        [](const Eigen::VectorXd&) { return complex(1.0, 0.0); },
        [](const Eigen::VectorXd& x) { return complex(x(0), x(3)); },
        [](const Eigen::VectorXd& x) { return std::exp(complex(0.2 * x(1), -0.1 * x(4))); },
    };
    const AngularBatchFn batch = [&gs](const Eigen::MatrixXd& pts) {
        Eigen::MatrixXcd out(pts.rows(), static_cast<Eigen::Index>(gs.size()));
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const Eigen::VectorXd x = pts.row(i).transpose();
            for (std::size_t j = 0; j < gs.size(); ++j)
                out(i, static_cast<Eigen::Index>(j)) = gs[j](x);
        }
        return out;
    };

    for (auto sign : {WaveSign::plus, WaveSign::minus}) {
        const auto rb = F_pm_batch(T, P, pp, batch, 3, sign);
        REQUIRE(rb.size() == 3);
        for (std::size_t j = 0; j < gs.size(); ++j) {
            const auto rs = F_pm(T, P, pp, gs[j], sign);
            // identical quadrature, different contraction order: roundoff only
            CHECK(std::abs(rb[j].value - rs.value) <= 1e-11 * (1.0 + std::abs(rs.value)));
        }
    }
}

TEST_CASE("sphere average batch: structured kernels fall back to the scalar path") {
    const SeparableModel pair = SeparableModel::with_bound_state(1.0, 0.5);
    const auto T = tmatrix::model_NBody_kernel(tmatrix::DeltaConnectedSpec{pair, 3});
    Eigen::VectorXd P(6);
    P << 0.25, -0.15, 0.05, 0.35, 0.1, -0.2;
    const AngularFn g = [](const Eigen::VectorXd& x) { return complex(1.0 + 0.3 * x(5), 0.0); };
    const AngularBatchFn batch = [&g](const Eigen::MatrixXd& pts) {
        Eigen::MatrixXcd out(pts.rows(), 1);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) out(i, 0) = g(pts.row(i).transpose());
        return out;
    };
    const auto rb = F_pm_batch(T, P, 1.1, batch, 1, WaveSign::plus);
    const auto rs = F_pm(T, P, 1.1, g, WaveSign::plus);
    REQUIRE(rb.size() == 1);
    CHECK(rb[0].value == rs.value);
    CHECK(rb[0].regularization == rs.regularization);
}

TEST_CASE("sphere average batch: shape mismatch and bad arguments are rejected") {
    const auto T = tmatrix::model_NBody_kernel(tmatrix::GaussianKernelSpec{6, 0.7, 0.3});
    Eigen::VectorXd P(6);
    P << 0.3, -0.2, 0.1, 0.4, 0.0, -0.1;
    const AngularBatchFn wrong_cols = [](const Eigen::MatrixXd& pts) {
        return Eigen::MatrixXcd::Ones(pts.rows(), 2).eval();
    };
    CHECK_THROWS_AS((void)F_pm_batch(T, P, 1.2, wrong_cols, 3, WaveSign::plus),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)F_pm_batch(T, P, -1.0, wrong_cols, 2, WaveSign::plus),
                    std::domain_error);
    CHECK(F_pm_batch(T, P, 1.2, wrong_cols, 0, WaveSign::plus).empty());
}
