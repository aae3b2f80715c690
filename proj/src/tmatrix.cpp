#include "hyperscat/tmatrix.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_odeiv2.h>
#include <gsl/gsl_sf_bessel.h>

#include <cmath>
#include <utility>

namespace hyperscat::tmatrix {

namespace {

// Principal sqrt(-z); the scattering cut z > 0 needs an explicit side.
complex w_of(complex z) {
    if (z.imag() == 0.0 && z.real() > 0.0) {
        throw std::invalid_argument(
            "separable model: z lies on the scattering cut; pass a Boundary side");
    }
    return std::sqrt(-z);
}

complex w_of(double energy, Boundary side) {
    if (energy <= 0.0) return std::sqrt(complex(-energy, 0.0));
    const double root = std::sqrt(energy);
    return side == Boundary::plus_i0 ? complex(0.0, -root) : complex(0.0, root);
}

template <typename Overload>
struct always_false : std::false_type {};

}  // namespace

// ---------------------------------------------------------------------------
// SeparableModel
// ---------------------------------------------------------------------------
SeparableModel::SeparableModel(double coupling, double beta) : coupling_(coupling), beta_(beta) {
    if (beta <= 0.0) throw std::domain_error("separable model: beta must be positive");
    if (coupling == 0.0) throw std::domain_error("separable model: coupling must be nonzero");
}

SeparableModel SeparableModel::with_bound_state(double beta, double lambda_a) {
    if (lambda_a <= 0.0) throw std::domain_error("separable model: lambda_a must be positive");
    const double s = beta + lambda_a;
    return SeparableModel(-beta * s * s / (pi * pi), beta);
}

complex SeparableModel::bubble(complex z) const {
    const complex w = w_of(z);
    const complex s = beta_ + w;
    return pi * pi / (beta_ * s * s);
}

complex SeparableModel::bubble(double energy, Boundary side) const {
    const complex w = w_of(energy, side);
    const complex s = beta_ + w;
    return pi * pi / (beta_ * s * s);
}

complex SeparableModel::tau(complex z) const {
    return coupling_ / (1.0 + coupling_ * bubble(z));
}

complex SeparableModel::tau(double energy, Boundary side) const {
    return coupling_ / (1.0 + coupling_ * bubble(energy, side));
}

complex SeparableModel::t(double kp, double k, complex z) const {
    return g(kp) * tau(z) * g(k);
}

complex SeparableModel::t(double kp, double k, double energy, Boundary side) const {
    return g(kp) * tau(energy, side) * g(k);
}

bool SeparableModel::has_bound_state() const {
    return coupling_ < -beta_ * beta_ * beta_ / (pi * pi);
}

double SeparableModel::bound_lambda() const {
    if (!has_bound_state()) throw std::logic_error("separable model: no bound state");
    return std::sqrt(-coupling_ * pi * pi / beta_) - beta_;
}

double SeparableModel::form_factor_norm() const {
    const double lam = bound_lambda();
    const double s = beta_ + lam;
    return std::sqrt(beta_ * lam * s * s * s) / pi;
}

double SeparableModel::phi(double k) const {
    return has_bound_state() ? form_factor_norm() * g(k) : 0.0;
}

complex SeparableModel::tau_hat(complex z) const {
    if (!has_bound_state()) return tau(z);
    if (z.imag() == 0.0 && z.real() > 0.0) {
        throw std::invalid_argument(
            "separable model: z lies on the scattering cut; pass a Boundary side");
    }
    const double lam = bound_lambda();
    const double c2 = form_factor_norm() * form_factor_norm();
    const complex z0(-lam * lam, 0.0);
    const complex delta = z - z0;
    const double scale = beta_ * beta_;
    if (std::abs(delta) >= 1e-5 * scale) return tau(z) - c2 / delta;
    // Within the cancellation zone use the mean-value property on a small
    // circle (the subtracted function is analytic at z0); the half-step
    // offset keeps every sample off the real axis.
    const double r = 1e-2 * scale;
    complex acc = 0.0;
    const int m = 8;
    for (int j = 0; j < m; ++j) {
        const complex zj = z + std::polar(r, (j + 0.5) * 2.0 * pi / m);
        acc += tau(zj) - c2 / (zj - z0);
    }
    return acc / static_cast<double>(m);
}

complex tau_plus(const SeparableModel& model, complex z) {
    if (z.imag() == 0.0) return model.tau(z.real(), Boundary::plus_i0);
    return model.tau(z);
}

complex tau_hat_plus(const SeparableModel& model, complex z) {
    if (z.imag() == 0.0 && z.real() > 0.0 && model.has_bound_state()) {
        const double lam = model.bound_lambda();
        const double c2 = model.form_factor_norm() * model.form_factor_norm();
        return model.tau(z.real(), Boundary::plus_i0) - c2 / (z.real() + lam * lam);
    }
    if (z.imag() == 0.0 && z.real() > 0.0) return model.tau(z.real(), Boundary::plus_i0);
    return model.tau_hat(z);
}

// ---------------------------------------------------------------------------
// LocalCentralModel
// ---------------------------------------------------------------------------
LocalCentralModel LocalCentralModel::gaussian(double v0, double range) {
    if (range <= 0.0) throw std::domain_error("gaussian model: range must be positive");
    LocalCentralModel m;
    m.v_r = [v0, range](double r) { return v0 * std::exp(-(r / range) * (r / range)); };
    m.vtilde = [v0, range](double q) {
        return v0 * std::pow(pi, 1.5) * range * range * range *
               std::exp(-0.25 * q * q * range * range);
    };
    m.r_decay = 8.0 * range;
    return m;
}

PartialWavePotential partial_wave_potential(const LocalCentralModel& model, int l) {
    if (l < 0) throw std::domain_error("partial wave index must be nonnegative");
    auto gl = gauss_legendre(64);
    auto vtilde = model.vtilde;
    return [gl, vtilde, l](double p, double q) {
        double acc = 0.0;
        for (std::size_t i = 0; i < gl.size(); ++i) {
            const double u = gl.x[i];
            const double m2 = std::max(0.0, p * p + q * q - 2.0 * p * q * u);
            acc += gl.w[i] * legendre_p(l, u) * vtilde(std::sqrt(m2));
        }
        return acc / (4.0 * pi * pi);
    };
}

PartialWavePotential partial_wave_potential(const SeparableModel& model, int l) {
    if (l < 0) throw std::domain_error("partial wave index must be nonnegative");
    if (l != 0) {
        return [](double, double) { return 0.0; };
    }
    return [model](double p, double q) {
        return 4.0 * pi * model.coupling() * model.g(p) * model.g(q);
    };
}

// ---------------------------------------------------------------------------
// Lippmann-Schwinger Nystrom solver
// ---------------------------------------------------------------------------
LSSolution ls_solve_twobody(const PartialWavePotential& vl, int l, double energy,
                            LSOptions opts) {
    if (energy <= 0.0) throw std::domain_error("ls_solve_twobody: energy must be positive");
    const double k0 = std::sqrt(energy);
    const double scale = opts.mesh_scale > 0.0 ? opts.mesh_scale : std::max(2.0, 1.5 * k0);
    const int n = opts.mesh_size;

    // Tangent map (0, inf) <- (-1, 1) so that the exact principal-value
    // identity  P \int_0^inf dq / (q^2 - k0^2) = 0  applies to the
    // subtraction constant.
    auto gl = gauss_legendre(n);
    std::vector<double> q(n), w(n);
    for (int j = 0; j < n; ++j) {
        const double t = 0.25 * pi * (gl.x[j] + 1.0);
        q[j] = scale * std::tan(t);
        const double c = std::cos(t);
        w[j] = gl.w[j] * scale * 0.25 * pi / (c * c);
    }

    std::vector<double> points = q;
    points.push_back(k0);
    const int m = n + 1;

    double sub = 0.0;
    for (int j = 0; j < n; ++j) sub += w[j] / (q[j] * q[j] - k0 * k0);

    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(m, m);
    Eigen::MatrixXcd b(m, m);
    for (int i = 0; i < m; ++i) {
        const double p = points[i];
        for (int j = 0; j < n; ++j) {
            a(i, j) = w[j] * q[j] * q[j] * vl(p, q[j]) / (q[j] * q[j] - k0 * k0);
        }
        a(i, n) = vl(p, k0) * (complex(-k0 * k0 * sub, 0.5 * pi * k0));
        a(i, i) += 1.0;
        for (int j = 0; j < m; ++j) b(i, j) = vl(p, points[j]);
    }

    LSSolution sol;
    sol.l = l;
    sol.k0 = k0;
    sol.mesh = points;
    sol.full = a.partialPivLu().solve(b);
    sol.half_shell = sol.full.col(n);
    sol.t_onshell = sol.full(n, n);
    sol.s_value = 1.0 - complex(0.0, pi * k0) * sol.t_onshell;
    sol.delta = 0.5 * std::arg(sol.s_value);
    sol.unitarity_residual =
        std::abs(sol.t_onshell.imag() + 0.5 * pi * k0 * std::norm(sol.t_onshell));
    if (!(sol.unitarity_residual <= opts.unitarity_tol)) {
        throw accuracy_error("ls_solve_twobody: unitarity residual above tolerance",
                             sol.unitarity_residual);
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Variable-phase oracle
// ---------------------------------------------------------------------------
namespace {

struct PhaseParams {
    double k;
    int l;
    const std::function<double(double)>* v;
};

int phase_rhs(double r, const double y[], double dydr[], void* params) {
    const auto* p = static_cast<const PhaseParams*>(params);
    const double x = p->k * r;
    const double jhat = x * gsl_sf_bessel_jl(p->l, x);
    const double nhat = -x * gsl_sf_bessel_yl(p->l, x);
    const double amp = std::cos(y[0]) * jhat + std::sin(y[0]) * nhat;
    dydr[0] = -(*p->v)(r)*amp * amp / p->k;
    return GSL_SUCCESS;
}

}  // namespace

double variable_phase_delta(const LocalCentralModel& model, int l, double energy,
                            double r_max) {
    if (energy <= 0.0) throw std::domain_error("variable_phase_delta: energy must be positive");
    if (r_max <= 0.0) r_max = model.r_decay;
    const double k = std::sqrt(energy);
    PhaseParams params{k, l, &model.v_r};
    gsl_odeiv2_system sys{phase_rhs, nullptr, 1, &params};
    gsl_odeiv2_driver* drv =
        gsl_odeiv2_driver_alloc_y_new(&sys, gsl_odeiv2_step_rk8pd, 1e-6, 1e-13, 1e-13);
    double r = 1e-3;  // sin(delta) = O(r^3): the irregular solution never enters
    double y[1] = {0.0};
    const int status = gsl_odeiv2_driver_apply(drv, &r, r_max, y);
    gsl_odeiv2_driver_free(drv);
    if (status != GSL_SUCCESS) {
        throw accuracy_error("variable_phase_delta: integration failed",
                             static_cast<double>(status));
    }
    return y[0];
}

// ---------------------------------------------------------------------------
// SKernel
// ---------------------------------------------------------------------------
SKernel::SKernel(double k, std::vector<complex> tl) : k_(k), tl_(std::move(tl)) {
    if (k <= 0.0) throw std::domain_error("s-kernel: |k| must be positive");
    if (tl_.empty()) throw std::domain_error("s-kernel: need at least the s-wave");
}

complex SKernel::partial_wave(int l) const {
    if (l < 0) throw std::domain_error("partial wave index must be nonnegative");
    if (l > lmax()) return 1.0;
    return 1.0 - complex(0.0, pi * k_) * tl_[static_cast<std::size_t>(l)];
}

complex SKernel::smooth(double u) const {
    complex acc = 0.0;
    for (int l = 0; l <= lmax(); ++l) {
        acc += complex(0.0, -0.25 * k_ * (2 * l + 1)) * tl_[static_cast<std::size_t>(l)] *
               legendre_p(l, u);
    }
    return acc;
}

SKernel twobody_s_kernel(double k, const SeparableModel& model) {
    if (k <= 0.0) throw std::domain_error("s-kernel: |k| must be positive");
    const complex t0 =
        4.0 * pi * model.g(k) * model.g(k) * model.tau(k * k, Boundary::plus_i0);
    return SKernel(k, {t0});
}

SKernel twobody_s_kernel(double k, const LocalCentralModel& model, int lmax, LSOptions opts) {
    if (k <= 0.0) throw std::domain_error("s-kernel: |k| must be positive");
    std::vector<complex> tl;
    tl.reserve(static_cast<std::size_t>(lmax) + 1);
    for (int l = 0; l <= lmax; ++l) {
        tl.push_back(ls_solve_twobody(partial_wave_potential(model, l), l, k * k, opts).t_onshell);
    }
    return SKernel(k, tl);
}

// ---------------------------------------------------------------------------
// Many-body kernel models
// ---------------------------------------------------------------------------
TKernel::TKernel(int d, std::set<KernelTag> taxonomy, ModelSpec spec,
                 std::function<complex(const Eigen::VectorXd&, const Eigen::VectorXd&, complex)>
                     eval,
                 std::optional<Composed3Geometry> geometry)
    : d_(d),
      taxonomy_(std::move(taxonomy)),
      spec_(std::move(spec)),
      eval_(std::move(eval)),
      geometry_(std::move(geometry)) {}

complex TKernel::eval(const Eigen::VectorXd& pprime, const Eigen::VectorXd& p, complex z) const {
    if (pprime.size() != d_ || p.size() != d_) {
        throw std::invalid_argument("t-kernel: momentum dimension mismatch");
    }
    return eval_(pprime, p, z);
}

const Composed3Geometry& TKernel::geometry() const {
    if (!geometry_) throw std::logic_error("t-kernel: no rotation geometry for this model");
    return *geometry_;
}

namespace {

TKernel make_gaussian_kernel(const GaussianKernelSpec& spec) {
    if (spec.d < 1) throw std::domain_error("gaussian kernel: dimension must be positive");
    auto eval = [spec](const Eigen::VectorXd& pp, const Eigen::VectorXd& p, complex) {
        return complex(spec.amplitude * std::exp(-spec.width * (pp.squaredNorm() + p.squaredNorm())),
                       0.0);
    };
    return TKernel(spec.d, {KernelTag::smooth}, spec, eval);
}

TKernel make_composed3_kernel(const Composed3Spec& spec) {
    if (spec.masses.n() != 3) {
        throw std::domain_error("composed kernel: exactly three particles required");
    }
    if (spec.part_a.n() != 3 || spec.part_b.n() != 3 || spec.part_a.num_blocks() != 2 ||
        spec.part_b.num_blocks() != 2) {
        throw std::domain_error("composed kernel: partitions must split 3 particles in two clusters");
    }
    if (spec.part_a == spec.part_b) {
        throw std::domain_error("composed kernel: the two partitions must differ");
    }
    const auto sys_a =
        jacobi::build_jacobi(spec.masses, partitions::PartitionChain(3, {spec.part_a}));
    const auto sys_b =
        jacobi::build_jacobi(spec.masses, partitions::PartitionChain(3, {spec.part_b}));
    Composed3Geometry geom{jacobi::rotation_coeffs3(sys_a, sys_b)};

    std::set<KernelTag> tags{KernelTag::smooth};
    if (spec.pair_a.has_bound_state()) tags.insert(KernelTag::pole_left);
    if (spec.pair_b.has_bound_state()) tags.insert(KernelTag::pole_right);
    if (spec.pair_a.has_bound_state() && spec.pair_b.has_bound_state()) {
        tags.insert(KernelTag::double_pole);
    }

    const SeparableModel ta = spec.pair_a;
    const SeparableModel tb = spec.pair_b;
    auto eval = [ta, tb, geom](const Eigen::VectorXd& pp, const Eigen::VectorXd& p, complex z) {
        const Eigen::Vector3d kp_a = pp.head<3>();
        const Eigen::Vector3d pp_a = pp.tail<3>();
        const Eigen::Vector3d k_a = p.head<3>();
        const Eigen::Vector3d p_a = p.tail<3>();
        const Eigen::Vector3d k_b = geom.to_b_internal(k_a, p_a);
        const Eigen::Vector3d p_b = geom.to_b_external(k_a, p_a);
        const Eigen::Vector3d kx_a = geom.k_cross_a(p_b, pp_a);
        const Eigen::Vector3d kx_b = geom.k_cross_b(pp_a, p_b);
        const double s3 = std::pow(std::abs(geom.ba.s), 3);
        const complex za = z - pp_a.squaredNorm();
        const complex zb = z - p_b.squaredNorm();
        const complex num = ta.g(kp_a.norm()) * tau_plus(ta, za) * ta.g(kx_a.norm()) *
                            tb.g(kx_b.norm()) * tau_plus(tb, zb) * tb.g(k_b.norm());
        const complex den = s3 * (complex(kx_b.squaredNorm() + p_b.squaredNorm(), 0.0) - z);
        return num / den;
    };
    return TKernel(6, tags, spec, eval, geom);
}

TKernel make_form_factor_pole_kernel(const FormFactorPoleSpec& spec) {
    if (!spec.pair.has_bound_state()) {
        throw std::domain_error("form-factor-pole kernel: the pair model must be bound");
    }
    if (spec.smooth.d != 6) {
        throw std::domain_error("form-factor-pole kernel: smooth factor must have d = 6");
    }
    const SeparableModel pair = spec.pair;
    const GaussianKernelSpec smooth = spec.smooth;
    const double lam2 = pair.bound_lambda() * pair.bound_lambda();
    auto eval = [pair, smooth, lam2](const Eigen::VectorXd& pp, const Eigen::VectorXd& p,
                                     complex z) {
        const double kp = pp.head<3>().norm();
        const double pp2 = pp.tail<3>().squaredNorm();
        const complex pole = z + lam2 - pp2;
        const double factor =
            smooth.amplitude * std::exp(-smooth.width * (pp.squaredNorm() + p.squaredNorm()));
        return pair.phi(kp) * factor / pole;
    };
    return TKernel(6, {KernelTag::pole_left}, spec, eval);
}

TKernel make_delta_connected_kernel(const DeltaConnectedSpec& spec) {
    if (spec.external_dim < 1) {
        throw std::domain_error("delta-connected kernel: external dimension must be positive");
    }
    const SeparableModel pair = spec.pair;
    const int e = spec.external_dim;
    auto eval = [pair, e](const Eigen::VectorXd& pp, const Eigen::VectorXd& p, complex z) {
        const Eigen::VectorXd pext = p.tail(e);
        if ((pp.tail(e) - pext).norm() > 1e-9 * (1.0 + pext.norm())) {
            throw std::invalid_argument(
                "delta-connected kernel: evaluated off its delta support");
        }
        const complex zred = z - pext.squaredNorm();
        return pair.g(pp.head(3).norm()) * tau_plus(pair, zred) * pair.g(p.head(3).norm());
    };
    return TKernel(3 + e, {KernelTag::delta_connected}, spec, eval);
}

}  // namespace

TKernel model_NBody_kernel(const ModelSpec& spec) {
    return std::visit(
        [](const auto& s) -> TKernel {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, GaussianKernelSpec>) {
                return make_gaussian_kernel(s);
            } else if constexpr (std::is_same_v<T, Composed3Spec>) {
                return make_composed3_kernel(s);
            } else if constexpr (std::is_same_v<T, FormFactorPoleSpec>) {
                return make_form_factor_pole_kernel(s);
            } else if constexpr (std::is_same_v<T, DeltaConnectedSpec>) {
                return make_delta_connected_kernel(s);
            } else {
                static_assert(always_false<T>::value, "unknown model spec");
            }
        },
        spec);
}

}  // namespace hyperscat::tmatrix
