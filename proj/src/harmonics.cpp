#include "hyperscat/harmonics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace hyperscat::harmonics {

namespace {

constexpr double tiny_norm = 1e-300;

int left_dim(int d) { return d - 3; }

/// Parse the preorder subindex list for a subtree of dimension d starting at
/// pos; returns the subtree degree and advances pos.  Throws on inadmissible
/// entries.
int parse_subtree(int d, const std::vector<int>& sub, std::size_t& pos) {
    auto need = [&](std::size_t k) {
        if (pos + k > sub.size())
            throw std::invalid_argument("HarmonicIndex: subindex list too short");
    };
    if (d == 1) {
        need(1);
        const int l = sub[pos++];
        if (l < 0 || l > 1)
            throw std::invalid_argument("HarmonicIndex: 1-dim leaf degree must be 0 or 1");
        return l;
    }
    if (d == 2) {
        need(1);
        return std::abs(sub[pos++]);
    }
    if (d == 3) {
        need(2);
        const int l = sub[pos++];
        const int m = sub[pos++];
        if (l < 0 || std::abs(m) > l)
            throw std::invalid_argument("HarmonicIndex: need l >= 0 and |m| <= l on a 3-dim leaf");
        return l;
    }
    need(2);
    const int k = sub[pos++];
    const int n = sub[pos++];
    if (k < 0 || n < 0) throw std::invalid_argument("HarmonicIndex: negative branch index");
    const int l1 = parse_subtree(left_dim(d), sub, pos);
    const int l2 = parse_subtree(3, sub, pos);
    if (k != l1 + l2 + 2 * n)
        throw std::invalid_argument("HarmonicIndex: branch degree must equal l1 + l2 + 2n");
    return k;
}

/// Normalization of the hyperangular coupler between subtrees of dimensions
/// (d1, d2) with degrees (l1, l2) and radial number n; makes
/// N (cos a)^{l1} (sin a)^{l2} P_n^{(l2+d2/2-1, l1+d1/2-1)}(cos 2a) a unit
/// vector under the weight (cos a)^{d1-1} (sin a)^{d2-1} da on [0, pi/2].
double coupler_norm(int d1, int d2, int l1, int l2, int n) {
    const double a = l2 + d2 / 2.0 - 1.0;
    const double b = l1 + d1 / 2.0 - 1.0;
    const double log_n2 = std::log(2.0) + std::log(2 * n + a + b + 1) + std::lgamma(n + 1.0) +
                          std::lgamma(n + a + b + 1) - std::lgamma(n + a + 1) - std::lgamma(n + b + 1);
    return std::exp(0.5 * log_n2);
}

struct SolidEval {
    double value;
    int degree;
};

/// Solid harmonic |x|^K Y(x/|x|): a polynomial in x, finite everywhere, equal
/// to Y on the unit sphere.
SolidEval eval_solid(int d, const std::vector<int>& sub, std::size_t& pos, const Eigen::VectorXd& x) {
    if (d == 1) {
        const int l = sub[pos++];
        return {l == 0 ? 1.0 / std::sqrt(2.0) : x[0] / std::sqrt(2.0), l};
    }
    if (d == 2) {
        const int m = sub[pos++];
        if (m == 0) return {1.0 / std::sqrt(2 * pi), 0};
        const double r = x.norm();
        if (r < tiny_norm) return {0.0, std::abs(m)};
        const double phi = std::atan2(x[1], x[0]);
        const double ang = m > 0 ? std::cos(m * phi) : std::sin(-m * phi);
        return {std::pow(r, std::abs(m)) * ang / std::sqrt(pi), std::abs(m)};
    }
    if (d == 3) {
        const int l = sub[pos++];
        const int m = sub[pos++];
        if (l == 0) return {1.0 / std::sqrt(4 * pi), 0};
        const double r = x.norm();
        if (r < tiny_norm) return {0.0, l};
        const double ct = std::clamp(x[2] / r, -1.0, 1.0);
        double v = std::pow(r, l);
        if (m == 0) {
            v *= assoc_legendre_norm(l, 0, ct);
        } else {
            const double phi = std::atan2(x[1], x[0]);
            const double ang = m > 0 ? std::cos(m * phi) : std::sin(-m * phi);
            v *= std::sqrt(2.0) * assoc_legendre_norm(l, std::abs(m), ct) * ang;
        }
        return {v, l};
    }
    const int k = sub[pos++];
    const int n = sub[pos++];
    const int d1 = left_dim(d), d2 = 3;
    const auto L = eval_solid(d1, sub, pos, x.head(d1));
    const auto R = eval_solid(d2, sub, pos, x.tail(d2));
    const double norm = coupler_norm(d1, d2, L.degree, R.degree, n);
    if (n == 0) return {norm * L.value * R.value, k};
    const double r1s = x.head(d1).squaredNorm(), r2s = x.tail(d2).squaredNorm();
    const double rs = r1s + r2s;
    if (rs < tiny_norm) return {0.0, k};
    const double a = R.degree + d2 / 2.0 - 1.0;
    const double b = L.degree + d1 / 2.0 - 1.0;
    const double u = (r1s - r2s) / rs;
    return {norm * std::pow(rs, n) * jacobi_p(n, a, b, u) * L.value * R.value, k};
}

/// All admissible subindex lists of a dim-d subtree with degree exactly K.
std::vector<std::vector<int>> gen_subtree(int d, int K) {
    std::vector<std::vector<int>> out;
    if (d == 1) {
        if (K <= 1) out.push_back({K});
        return out;
    }
    if (d == 2) {
        if (K == 0) {
            out.push_back({0});
        } else {
            out.push_back({K});
            out.push_back({-K});
        }
        return out;
    }
    if (d == 3) {
        for (int m = -K; m <= K; ++m) out.push_back({K, m});
        return out;
    }
    for (int n = 0; 2 * n <= K; ++n) {
        for (int l1 = 0; l1 <= K - 2 * n; ++l1) {
            const int l2 = K - 2 * n - l1;
            for (const auto& left : gen_subtree(left_dim(d), l1)) {
                for (const auto& right : gen_subtree(3, l2)) {
                    std::vector<int> s;
                    s.reserve(2 + left.size() + right.size());
                    s.push_back(K);
                    s.push_back(n);
                    s.insert(s.end(), left.begin(), left.end());
                    s.insert(s.end(), right.begin(), right.end());
                    out.push_back(std::move(s));
                }
            }
        }
    }
    return out;
}

struct Rule {
    Eigen::MatrixXd nodes;  // rows are points
    Eigen::VectorXd weights;
};

Rule leaf_rule(int d, int level) {
    if (d == 1) {
        Rule r;
        r.nodes = Eigen::MatrixXd(2, 1);
        r.nodes << 1.0, -1.0;
        r.weights = Eigen::VectorXd::Ones(2);
        return r;
    }
    const int m = 2 * level + 2;
    if (d == 2) {
        Rule r;
        r.nodes = Eigen::MatrixXd(m, 2);
        r.weights = Eigen::VectorXd::Constant(m, 2 * pi / m);
        for (int j = 0; j < m; ++j) {
            const double phi = 2 * pi * (j + 0.5) / m;
            r.nodes(j, 0) = std::cos(phi);
            r.nodes(j, 1) = std::sin(phi);
        }
        return r;
    }
    // d == 3: Gauss-Legendre in cos(theta) times uniform azimuth.
    auto gl = gauss_legendre(level + 1);
    Rule r;
    r.nodes = Eigen::MatrixXd(static_cast<Eigen::Index>(gl.size()) * m, 3);
    r.weights = Eigen::VectorXd(r.nodes.rows());
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < gl.size(); ++i) {
        const double t = gl.x[i];
        const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
        for (int j = 0; j < m; ++j, ++row) {
            const double phi = 2 * pi * (j + 0.5) / m;
            r.nodes(row, 0) = s * std::cos(phi);
            r.nodes(row, 1) = s * std::sin(phi);
            r.nodes(row, 2) = t;
            r.weights(row) = gl.w[i] * 2 * pi / m;
        }
    }
    return r;
}

Rule rule_of(int d, int level) {
    if (d <= 3) return leaf_rule(d, level);
    const int d1 = left_dim(d), d2 = 3;
    Rule left = rule_of(d1, level);
    Rule right = rule_of(d2, level);
    // Hyperangle factor in u = cos(2 alpha): Gauss-Jacobi with parameters
    // (d2/2 - 1, d1/2 - 1) scaled by 2^{-d/2}.
    auto gj = gauss_jacobi(level + 1, d2 / 2.0 - 1.0, d1 / 2.0 - 1.0);
    const double scale = std::pow(2.0, -d / 2.0);
    const Eigen::Index total = static_cast<Eigen::Index>(gj.size()) * left.nodes.rows() * right.nodes.rows();
    Rule r;
    r.nodes = Eigen::MatrixXd(total, d);
    r.weights = Eigen::VectorXd(total);
    Eigen::Index row = 0;
    for (std::size_t ia = 0; ia < gj.size(); ++ia) {
        const double alpha = 0.5 * std::acos(std::clamp(gj.x[ia], -1.0, 1.0));
        const double ca = std::cos(alpha), sa = std::sin(alpha);
        const double wa = scale * gj.w[ia];
        for (Eigen::Index il = 0; il < left.nodes.rows(); ++il) {
            for (Eigen::Index ir = 0; ir < right.nodes.rows(); ++ir, ++row) {
                r.nodes.block(row, 0, 1, d1) = ca * left.nodes.row(il);
                r.nodes.block(row, d1, 1, d2) = sa * right.nodes.row(ir);
                r.weights(row) = wa * left.weights(il) * right.weights(ir);
            }
        }
    }
    return r;
}

}  // namespace

HarmonicIndex::HarmonicIndex(int d, std::vector<int> subindices) : d_(d), sub_(std::move(subindices)) {
    if (d < 1) throw std::invalid_argument("HarmonicIndex: dimension must be positive");
    std::size_t pos = 0;
    K_ = parse_subtree(d, sub_, pos);
    if (pos != sub_.size()) throw std::invalid_argument("HarmonicIndex: trailing subindices");
}

std::string HarmonicIndex::str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < sub_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(sub_[i]);
    }
    return s + "]";
}

bool HarmonicIndex::operator<(const HarmonicIndex& o) const {
    if (d_ != o.d_) return d_ < o.d_;
    if (K_ != o.K_) return K_ < o.K_;
    return sub_ < o.sub_;
}

std::vector<HarmonicIndex> enumerate_harmonics(int d, int kmax) {
    if (kmax < 0) throw std::invalid_argument("enumerate_harmonics: kmax must be >= 0");
    std::vector<HarmonicIndex> out;
    for (int K = 0; K <= kmax; ++K)
        for (auto& s : gen_subtree(d, K)) out.emplace_back(d, std::move(s));
    std::sort(out.begin(), out.end());
    return out;
}

long harmonic_dimension(int d, int K) {
    if (d < 2 || K < 0) throw std::invalid_argument("harmonic_dimension: need d >= 2, K >= 0");
    auto binom = [](long n, long k) {
        if (k < 0 || k > n) return 0L;
        long double v = 1;
        for (long i = 1; i <= k; ++i) v = v * (n - k + i) / i;
        return static_cast<long>(std::llround(v));
    };
    return binom(K + d - 1, d - 1) - binom(K + d - 3, d - 1);
}

double evaluate_harmonic(const HarmonicIndex& idx, const Eigen::VectorXd& xhat) {
    if (xhat.size() != idx.dim())
        throw std::invalid_argument("evaluate_harmonic: dimension mismatch");
    if (std::abs(xhat.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("evaluate_harmonic: point must lie on the unit sphere");
    std::size_t pos = 0;
    return eval_solid(idx.dim(), idx.subindices(), pos, xhat).value;
}

SphereQuadrature build_quadrature(int d, int level) {
    if (d < 3 || d > 9) throw std::domain_error("build_quadrature: supported for 3 <= d <= 9");
    if (level < 1) throw std::invalid_argument("build_quadrature: level must be >= 1");
    Rule r = rule_of(d, level);
    return {std::move(r.nodes), std::move(r.weights), 2 * level + 1};
}

const SphereQuadrature& shared_quadrature(int d, int level) {
    static std::mutex mu;
    // unique_ptr keeps each rule at a stable address while the map grows.
    static std::map<std::pair<int, int>, std::unique_ptr<SphereQuadrature>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{d, level}];
    if (!slot) slot = std::make_unique<SphereQuadrature>(build_quadrature(d, level));
    return *slot;
}

Eigen::MatrixXd evaluation_matrix(const std::vector<HarmonicIndex>& basis, const SphereQuadrature& quad) {
    Eigen::MatrixXd Y(quad.size(), static_cast<Eigen::Index>(basis.size()));
    parallel_for(static_cast<std::size_t>(quad.size()), [&](std::size_t i) {
        const Eigen::VectorXd x = quad.nodes.row(static_cast<Eigen::Index>(i)).transpose();
        for (std::size_t j = 0; j < basis.size(); ++j) {
            std::size_t pos = 0;
            Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                eval_solid(basis[j].dim(), basis[j].subindices(), pos, x).value;
        }
    });
    return Y;
}

Eigen::VectorXcd project(const std::function<complex(const Eigen::VectorXd&)>& f,
                         const std::vector<HarmonicIndex>& basis, const SphereQuadrature& quad) {
    Eigen::VectorXcd fw(quad.size());
    for (Eigen::Index i = 0; i < quad.size(); ++i)
        fw(i) = quad.weights(i) * f(quad.nodes.row(i).transpose());
    Eigen::MatrixXd Y = evaluation_matrix(basis, quad);
    return Y.transpose() * fw;
}

}  // namespace hyperscat::harmonics
