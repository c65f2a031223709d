#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ovkrff/errors.hpp"

namespace ovkrff {

/// Relative tolerance used for all "numerically PSD" checks on float64.
inline constexpr double kPsdRelTol = 1e-8;

enum class KernelKind { Separable, CurlFree, DivFree, Sum };

inline std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::Separable: return "separable";
        case KernelKind::CurlFree: return "curl_free";
        case KernelKind::DivFree: return "div_free";
        case KernelKind::Sum: return "sum";
    }
    return "?";
}

/// Declarative description of a matrix-valued shift-invariant positive
/// definite function k, with K(x,t) = k(x-t).
///
/// The scalar generator is Gaussian throughout: separable kernels use
/// g(x) = exp(-||x||^2/sigma^2) and curl-/div-free kernels are built from
/// phi(x) = exp(-||x||^2/sigma^2). KernelSpec is immutable after
/// construction; all evaluation functions are pure.
class KernelSpec {
public:
    static KernelSpec Separable(int n, double sigma, Eigen::MatrixXd A) {
        validate_common(n, sigma);
        if (A.rows() == 0 || A.rows() != A.cols())
            throw ConfigError("separable kernel: A must be a nonempty square matrix");
        if ((A - A.transpose()).cwiseAbs().maxCoeff() > 0.0)
            throw ConfigError("separable kernel: A must be symmetric");
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
        if (lo < -kPsdRelTol * std::max(hi, 1.0))
            throw ConfigError("separable kernel: A is not positive semidefinite");
        KernelSpec s;
        s.kind_ = KernelKind::Separable;
        s.n_ = n;
        s.d_ = static_cast<int>(A.rows());
        s.sigma_ = sigma;
        s.A_ = std::move(A);
        return s;
    }

    static KernelSpec CurlFree(int n, double sigma) {
        validate_common(n, sigma);
        KernelSpec s;
        s.kind_ = KernelKind::CurlFree;
        s.n_ = n;
        s.d_ = n; // forced by the definition -grad grad^T phi
        s.sigma_ = sigma;
        return s;
    }

    static KernelSpec DivFree(int n, double sigma) {
        validate_common(n, sigma);
        KernelSpec s;
        s.kind_ = KernelKind::DivFree;
        s.n_ = n;
        s.d_ = n;
        s.sigma_ = sigma;
        return s;
    }

    static KernelSpec Sum(std::vector<KernelSpec> terms) {
        if (terms.empty()) throw ConfigError("sum kernel: needs at least one term");
        for (const auto& t : terms) {
            if (t.input_dim() != terms.front().input_dim() ||
                t.output_dim() != terms.front().output_dim())
                throw ConfigError("sum kernel: terms must share input and output dimensions");
        }
        KernelSpec s;
        s.kind_ = KernelKind::Sum;
        s.n_ = terms.front().input_dim();
        s.d_ = terms.front().output_dim();
        s.sigma_ = 0.0;
        s.terms_ = std::move(terms);
        return s;
    }

    [[nodiscard]] KernelKind kind() const { return kind_; }
    [[nodiscard]] int input_dim() const { return n_; }
    [[nodiscard]] int output_dim() const { return d_; }
    [[nodiscard]] double sigma() const { return sigma_; }
    /// The PSD coupling matrix A (Separable only).
    [[nodiscard]] const Eigen::MatrixXd& coupling() const { return A_; }
    [[nodiscard]] const std::vector<KernelSpec>& terms() const { return terms_; }

private:
    KernelSpec() = default;

    static void validate_common(int n, double sigma) {
        if (n < 1) throw ConfigError("kernel: input dimension must be >= 1");
        if (!(sigma > 0.0)) throw ConfigError("kernel: sigma must be positive");
    }

    KernelKind kind_ = KernelKind::Separable;
    int n_ = 0;
    int d_ = 0;
    double sigma_ = 1.0;
    Eigen::MatrixXd A_;
    std::vector<KernelSpec> terms_;
};

/// Block-structured Gram matrix: an m x m grid of d x d blocks stored dense.
struct BlockMatrix {
    Eigen::MatrixXd full; // d*m x d*m
    int block_dim = 0;    // d
    int num_points = 0;   // m

    [[nodiscard]] Eigen::Block<const Eigen::MatrixXd> block(int i, int j) const {
        return full.block(i * block_dim, j * block_dim, block_dim, block_dim);
    }
};

namespace detail {
inline void check_point(const KernelSpec& kernel, const Eigen::VectorXd& x,
                        const char* what) {
    if (x.size() != kernel.input_dim())
        throw DimensionError(std::string(what) + ": point has length " +
                             std::to_string(x.size()) + ", kernel expects " +
                             std::to_string(kernel.input_dim()));
}
} // namespace detail

/// Evaluates the positive definite function k at a displacement x.
///
/// Separable: k(x) = g(x) A. Curl-free: (2/s^2) e^{-||x||^2/s^2} [I - (2/s^2) x x^T].
/// Div-free: (2/s^2) e^{-||x||^2/s^2} [((n-1) - (2/s^2)||x||^2) I + (2/s^2) x x^T].
/// Sum: termwise sum.
inline Eigen::MatrixXd eval_pdf(const KernelSpec& kernel, const Eigen::VectorXd& x) {
    detail::check_point(kernel, x, "eval_pdf");
    const int n = kernel.input_dim();
    const int d = kernel.output_dim();
    switch (kernel.kind()) {
        case KernelKind::Separable: {
            const double g = std::exp(-x.squaredNorm() / (kernel.sigma() * kernel.sigma()));
            return g * kernel.coupling();
        }
        case KernelKind::CurlFree: {
            const double c = 2.0 / (kernel.sigma() * kernel.sigma());
            const double e = std::exp(-x.squaredNorm() / (kernel.sigma() * kernel.sigma()));
            Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
            m.noalias() -= c * x * x.transpose();
            return (c * e) * m;
        }
        case KernelKind::DivFree: {
            const double c = 2.0 / (kernel.sigma() * kernel.sigma());
            const double e = std::exp(-x.squaredNorm() / (kernel.sigma() * kernel.sigma()));
            Eigen::MatrixXd m =
                ((n - 1) - c * x.squaredNorm()) * Eigen::MatrixXd::Identity(n, n);
            m.noalias() += c * x * x.transpose();
            return (c * e) * m;
        }
        case KernelKind::Sum: {
            Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
            for (const auto& t : kernel.terms()) out += eval_pdf(t, x);
            return out;
        }
    }
    throw Error("eval_pdf: unreachable");
}

/// K(x,t) = k(x-t).
inline Eigen::MatrixXd eval_kernel(const KernelSpec& kernel, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& t) {
    detail::check_point(kernel, x, "eval_kernel");
    detail::check_point(kernel, t, "eval_kernel");
    return eval_pdf(kernel, x - t);
}

/// Block Gram matrix over a point set (one row of `points` per point).
/// Block (i,j) is K(x_i, x_j); blocks with j < i are filled from the
/// transpose identity K(x_j,x_i)^T so the full matrix is exactly symmetric.
inline BlockMatrix gram(const KernelSpec& kernel, const Eigen::MatrixXd& points) {
    if (points.rows() == 0) throw DimensionError("gram: empty point list");
    if (points.cols() != kernel.input_dim())
        throw DimensionError("gram: points have " + std::to_string(points.cols()) +
                             " columns, kernel expects " +
                             std::to_string(kernel.input_dim()));
    const int m = static_cast<int>(points.rows());
    const int d = kernel.output_dim();
    BlockMatrix G;
    G.block_dim = d;
    G.num_points = m;
    G.full.resize(d * m, d * m);
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            const Eigen::MatrixXd kij =
                eval_pdf(kernel, points.row(i).transpose() - points.row(j).transpose());
            G.full.block(i * d, j * d, d, d) = kij;
            if (j != i) G.full.block(j * d, i * d, d, d) = kij.transpose();
        }
    }
    return G;
}

namespace detail {
inline double trace_k0_raw(const KernelSpec& kernel) {
    switch (kernel.kind()) {
        case KernelKind::Separable: return kernel.coupling().trace();
        case KernelKind::CurlFree:
            return 2.0 * kernel.input_dim() / (kernel.sigma() * kernel.sigma());
        case KernelKind::DivFree:
            return 2.0 * kernel.input_dim() * (kernel.input_dim() - 1) /
                   (kernel.sigma() * kernel.sigma());
        case KernelKind::Sum: {
            double t = 0.0;
            for (const auto& term : kernel.terms()) t += trace_k0_raw(term);
            return t;
        }
    }
    return 0.0;
}
} // namespace detail

/// tr[k(0)]: tr(A) for separable, 2n/sigma^2 for curl-free,
/// 2n(n-1)/sigma^2 for div-free, termwise sum for sums.
inline double trace_at_zero(const KernelSpec& kernel) {
    const double t = detail::trace_k0_raw(kernel);
    if (!(t > 0.0))
        throw DegenerateKernelError(
            "trace_at_zero: tr[k(0)] = 0, kernel is degenerate (e.g. div-free in one "
            "dimension or a zero coupling matrix)");
    return t;
}

} // namespace ovkrff
