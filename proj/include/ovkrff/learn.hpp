#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <optional>
#include <utility>
#include <variant>

#include "ovkrff/errors.hpp"
#include "ovkrff/features.hpp"
#include "ovkrff/kernels.hpp"

namespace ovkrff {

/// Vector-valued (semi-supervised) least-squares problem
///
///   min_f (1/l) sum_i ||y_i - C f(x_i)||^2 + gamma_A ||f||^2 + gamma_I <f, M f>
///
/// over the RKHS of the kernel. The first `labeled` rows of X carry targets;
/// the rest are unlabeled and enter only through the M-coupling.
struct RegressionProblem {
    Eigen::MatrixXd X;    // (u+l) x n, first l rows labeled
    Eigen::MatrixXd Y;    // l x dimY
    Eigen::MatrixXd C;    // dimY x d output operator; empty means identity
    Eigen::MatrixXd Mreg; // d(u+l) x d(u+l) PSD regularization operator; empty means zero
    double gamma_A = 1e-9;
    double gamma_I = 0.0;
    int labeled = 0;

    [[nodiscard]] int num_points() const { return static_cast<int>(X.rows()); }
    [[nodiscard]] bool use_manifold_term() const {
        return gamma_I != 0.0 && Mreg.size() > 0;
    }
};

namespace detail {

inline void validate_problem(const RegressionProblem& p, int d) {
    if (!(p.gamma_A > 0.0))
        throw ConfigError("regression: gamma_A must be strictly positive");
    if (p.gamma_I < 0.0) throw ConfigError("regression: gamma_I must be nonnegative");
    if (p.labeled < 1 || p.labeled > p.num_points())
        throw ConfigError("regression: labeled count must be in [1, num_points]");
    if (p.Y.rows() != p.labeled)
        throw DimensionError("regression: targets must have one row per labeled point");
    const int dim_y = p.C.size() > 0 ? static_cast<int>(p.C.rows()) : d;
    if (p.C.size() > 0 && p.C.cols() != d)
        throw DimensionError("regression: C must have d columns");
    if (p.Y.cols() != dim_y)
        throw DimensionError("regression: target columns must match rows of C");
    if (p.use_manifold_term()) {
        const long need = static_cast<long>(d) * p.num_points();
        if (p.Mreg.rows() != need || p.Mreg.cols() != need)
            throw DimensionError("regression: Mreg must be d(u+l) square");
        if ((p.Mreg - p.Mreg.transpose()).cwiseAbs().maxCoeff() >
            1e-12 * std::max(1.0, p.Mreg.cwiseAbs().maxCoeff()))
            throw ConfigError("regression: Mreg must be symmetric");
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.Mreg,
                                                                Eigen::EigenvaluesOnly);
        const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
        if (es.eigenvalues().minCoeff() < -kPsdRelTol * std::max(hi, 1.0))
            throw ConfigError("regression: Mreg is not positive semidefinite");
    }
}

// Stacked right-hand side (I_{(u+l) x l} (x) C^*) y in R^{d(u+l)}.
inline Eigen::VectorXd stacked_rhs(const RegressionProblem& p, int d) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<long>(d) * p.num_points());
    for (int i = 0; i < p.labeled; ++i) {
        if (p.C.size() > 0)
            b.segment(static_cast<long>(i) * d, d) = p.C.transpose() * p.Y.row(i).transpose();
        else
            b.segment(static_cast<long>(i) * d, d) = p.Y.row(i).transpose();
    }
    return b;
}

// (J (x) C^*C) + l gamma_I M, the operator sandwiched between feature stacks.
inline Eigen::MatrixXd sandwich_operator(const RegressionProblem& p, int d) {
    const long md = static_cast<long>(d) * p.num_points();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(md, md);
    const Eigen::MatrixXd cc = p.C.size() > 0
                                   ? Eigen::MatrixXd(p.C.transpose() * p.C)
                                   : Eigen::MatrixXd::Identity(d, d);
    for (int i = 0; i < p.labeled; ++i)
        B.block(static_cast<long>(i) * d, static_cast<long>(i) * d, d, d) = cc;
    if (p.use_manifold_term()) B += (p.labeled * p.gamma_I) * p.Mreg;
    return B;
}

} // namespace detail

/// Fitted dual-form model: f(x) = sum_i K(x, x_i) a_i with a the solution of
///   (C*C J K[x] + l gamma_I M K[x] + l gamma_A I) a = C* y.
class DualModel {
public:
    DualModel(KernelSpec kernel, Eigen::MatrixXd X, Eigen::VectorXd a)
        : kernel_(std::move(kernel)), X_(std::move(X)), a_(std::move(a)) {}
    DualModel(FeatureMap fm, Eigen::MatrixXd X, Eigen::VectorXd a)
        : kernel_(std::move(fm)), X_(std::move(X)), a_(std::move(a)) {
        feature_cache_ = std::get<FeatureMap>(kernel_).feature_stack(X_);
    }

    [[nodiscard]] const Eigen::VectorXd& coefficients() const { return a_; }
    [[nodiscard]] const Eigen::MatrixXd& points() const { return X_; }
    [[nodiscard]] bool uses_feature_kernel() const {
        return std::holds_alternative<FeatureMap>(kernel_);
    }
    [[nodiscard]] const KernelSpec& exact_kernel() const {
        return std::get<KernelSpec>(kernel_);
    }
    [[nodiscard]] const FeatureMap& feature_map() const {
        return std::get<FeatureMap>(kernel_);
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::VectorXd& x) const {
        const int m = static_cast<int>(X_.rows());
        if (const auto* exact = std::get_if<KernelSpec>(&kernel_)) {
            detail::check_point(*exact, x, "predict");
            const int d = exact->output_dim();
            Eigen::VectorXd f = Eigen::VectorXd::Zero(d);
            for (int i = 0; i < m; ++i)
                f.noalias() += eval_pdf(*exact, x - X_.row(i).transpose()) *
                               a_.segment(static_cast<long>(i) * d, d);
            return f;
        }
        // Feature-map kernel: row of approximate kernel sections times a.
        const auto& fm = std::get<FeatureMap>(kernel_);
        const Eigen::MatrixXd sections = fm(x).transpose() * feature_cache_;
        return sections * a_;
    }

private:
    std::variant<KernelSpec, FeatureMap> kernel_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd a_;
    Eigen::MatrixXd feature_cache_; // Phi_D(x_1..x_m), feature kernels only
};

/// Fitted primal-form model: f(x) = Phi_D(x)^T h.
class PrimalModel {
public:
    PrimalModel(FeatureMap fm, Eigen::VectorXd h) : fm_(std::move(fm)), h_(std::move(h)) {
        if (h_.size() != fm_.out_dim())
            throw DimensionError("PrimalModel: h must have length 2*D*r");
    }

    [[nodiscard]] const Eigen::VectorXd& coefficients() const { return h_; }
    [[nodiscard]] const FeatureMap& feature_map() const { return fm_; }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::VectorXd& x) const {
        return fm_(x).transpose() * h_;
    }

private:
    FeatureMap fm_;
    Eigen::VectorXd h_;
};

namespace detail {

inline Eigen::VectorXd solve_dual_system(const Eigen::MatrixXd& K,
                                         const RegressionProblem& p, int d) {
    const long md = K.rows();
    const int l = p.labeled;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(md, md);
    const Eigen::MatrixXd cc = p.C.size() > 0
                                   ? Eigen::MatrixXd(p.C.transpose() * p.C)
                                   : Eigen::MatrixXd::Identity(d, d);
    // C*C J K[x]: apply C*C to the first l block rows of K.
    for (int i = 0; i < l; ++i)
        S.middleRows(static_cast<long>(i) * d, d) =
            cc * K.middleRows(static_cast<long>(i) * d, d);
    if (p.use_manifold_term()) S.noalias() += (l * p.gamma_I) * (p.Mreg * K);
    S.diagonal().array() += l * p.gamma_A;

    const Eigen::VectorXd b = stacked_rhs(p, d);
    const double bnorm = b.norm();
    if (bnorm == 0.0) return Eigen::VectorXd::Zero(md);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(S);
    Eigen::VectorXd a = lu.solve(b);
    const double resid = (S * a - b).norm();
    if (!(resid <= 1e-8 * bnorm))
        throw NumericalError("fit_dual: linear solve residual " + std::to_string(resid) +
                             " exceeds 1e-8 * ||rhs||");
    return a;
}

} // namespace detail

/// Exact-kernel dual fit.
inline DualModel fit_dual(const KernelSpec& kernel, const RegressionProblem& p) {
    detail::validate_problem(p, kernel.output_dim());
    const BlockMatrix K = gram(kernel, p.X);
    return {kernel, p.X, detail::solve_dual_system(K.full, p, kernel.output_dim())};
}

/// Dual fit against the approximate kernel K_D of a feature map.
inline DualModel fit_dual(const FeatureMap& fm, const RegressionProblem& p) {
    const int d = fm.output_dim();
    detail::validate_problem(p, d);
    const Eigen::MatrixXd F = fm.feature_stack(p.X);
    const Eigen::MatrixXd K = F.transpose() * F;
    return {fm, p.X, detail::solve_dual_system(K, p, d)};
}

/// Primal fit: solves the 2Dr x 2Dr system
///   (Phi(x) [(J (x) C*C) + l gamma_I M] Phi(x)^T + l gamma_A I) h = Phi(x) C* y.
/// Near-singular systems (condition above 1e12) are retried once with the
/// ridge boosted by 10x, with a warning.
inline PrimalModel fit_primal(const FeatureMap& fm, const RegressionProblem& p) {
    const int d = fm.output_dim();
    detail::validate_problem(p, d);
    const int F = fm.out_dim();
    const Eigen::MatrixXd Phi = fm.feature_stack(p.X);
    const Eigen::MatrixXd B = detail::sandwich_operator(p, d);
    Eigen::MatrixXd H = Phi * B * Phi.transpose();
    H.diagonal().array() += p.labeled * p.gamma_A;
    const Eigen::VectorXd rhs = Phi * detail::stacked_rhs(p, d);
    const double rnorm = rhs.norm();
    if (rnorm == 0.0) return {fm, Eigen::VectorXd::Zero(F)};

    double boost = 1.0;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() == Eigen::Success && llt.rcond() >= 1e-12) {
            const Eigen::VectorXd h = llt.solve(rhs);
            const double resid = (H * h - rhs).norm();
            if (resid <= 1e-8 * rnorm) return {fm, h};
        }
        if (attempt == 0) {
            boost = 9.0 * p.labeled * p.gamma_A;
            std::cerr << "ovkrff: fit_primal: system condition exceeds 1e12; "
                         "retrying with gamma_A * 10\n";
            H.diagonal().array() += boost;
        }
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(H);
    throw NumericalError("fit_primal: Cholesky solve failed (rcond ~ " +
                         std::to_string(llt.info() == Eigen::Success ? llt.rcond() : 0.0) +
                         ")");
}

inline Eigen::VectorXd predict_dual(const DualModel& m, const Eigen::VectorXd& x) {
    return m.predict(x);
}

inline Eigen::VectorXd predict_primal(const PrimalModel& m, const Eigen::VectorXd& x) {
    return m.predict(x);
}

/// h = sum_i Phi_D(x_i) a_i, the feature-space image of a dual coefficient
/// block vector. Satisfies a^T K_D[x] a = ||h||^2.
inline Eigen::VectorXd lift_dual_to_primal(const FeatureMap& fm, const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& a) {
    if (a.size() != static_cast<long>(fm.output_dim()) * X.rows())
        throw DimensionError("lift_dual_to_primal: coefficient length must be d * points");
    return fm.feature_stack(X) * a;
}

/// (degree - adjacency) (x) I_d from a symmetric nonnegative adjacency with
/// zero diagonal.
inline Eigen::MatrixXd graph_laplacian(const Eigen::MatrixXd& adjacency, int d) {
    const int m = static_cast<int>(adjacency.rows());
    if (adjacency.cols() != m) throw DimensionError("graph_laplacian: adjacency not square");
    if (d < 1) throw ConfigError("graph_laplacian: block dimension must be >= 1");
    if (m == 0) return Eigen::MatrixXd::Zero(0, 0);
    if ((adjacency - adjacency.transpose()).cwiseAbs().maxCoeff() > 0.0)
        throw ConfigError("graph_laplacian: adjacency must be symmetric");
    if (adjacency.minCoeff() < 0.0)
        throw ConfigError("graph_laplacian: weights must be nonnegative");
    if (adjacency.diagonal().cwiseAbs().maxCoeff() > 0.0)
        throw ConfigError("graph_laplacian: diagonal must be zero");
    const Eigen::VectorXd degree = adjacency.rowwise().sum();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<long>(m) * d,
                                              static_cast<long>(m) * d);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double v = (i == j ? degree[i] : 0.0) - adjacency(i, j);
            if (v != 0.0)
                L.block(static_cast<long>(i) * d, static_cast<long>(j) * d, d, d) =
                    v * Eigen::MatrixXd::Identity(d, d);
        }
    }
    return L;
}

} // namespace ovkrff
