#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "ovkrff/errors.hpp"
#include "ovkrff/kernels.hpp"
#include "ovkrff/parallel.hpp"
#include "ovkrff/spectral.hpp"

namespace ovkrff {

/// Random operator-valued Fourier feature map
///
///   Phi_D(x) = D^{-1/2} [cos(<w_1,x>) psi(w_1); sin(<w_1,x>) psi(w_1); ...]
///
/// with rows grouped cos-then-sin per frequency, so Phi_D(x) is a
/// (2*D*r) x d matrix and Phi_D(x)^T Phi_D(t) approximates K(x,t).
/// Concatenated (sum_concat) models stack one such map per term, each with
/// its own D frequencies from its own rho.
class FeatureMap {
public:
    FeatureMap(SpectralModel model, int D, std::uint64_t seed)
        : model_(std::move(model)), D_(D), seed_(seed) {
        if (D < 1) throw ConfigError("FeatureMap: D must be >= 1");
        frequencies_ = model_.sample_frequencies(D, seed);
        const long rows = frequencies_.rows();
        psis_.reserve(rows);
        if (model_.is_concat()) {
            for (std::size_t c = 0; c < model_.components().size(); ++c) {
                const auto& comp = model_.components()[c];
                for (int l = 0; l < D_; ++l)
                    psis_.push_back(comp.psi(
                        frequencies_.row(static_cast<long>(c) * D_ + l).transpose()));
            }
        } else {
            for (long l = 0; l < rows; ++l)
                psis_.push_back(model_.psi(frequencies_.row(l).transpose()));
        }
        out_dim_ = 0;
        for (const auto& p : psis_) out_dim_ += 2 * static_cast<int>(p.rows());
    }

    [[nodiscard]] const SpectralModel& model() const { return model_; }
    /// Sampled frequencies, one per row (component blocks stacked for
    /// concatenated models).
    [[nodiscard]] const Eigen::MatrixXd& frequencies() const { return frequencies_; }
    [[nodiscard]] int num_frequencies() const { return D_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    /// 2 * D * psi_rows.
    [[nodiscard]] int out_dim() const { return out_dim_; }
    [[nodiscard]] int input_dim() const { return model_.kernel().input_dim(); }
    [[nodiscard]] int output_dim() const { return model_.kernel().output_dim(); }

    /// Phi_D(x): (2*D*r) x d.
    [[nodiscard]] Eigen::MatrixXd operator()(const Eigen::VectorXd& x) const {
        detail::check_point(model_.kernel(), x, "apply_feature_map");
        Eigen::MatrixXd out(out_dim_, output_dim());
        const double scale = 1.0 / std::sqrt(static_cast<double>(D_));
        long row = 0;
        for (std::size_t l = 0; l < psis_.size(); ++l) {
            const double angle = frequencies_.row(static_cast<long>(l)).dot(x);
            const long r = psis_[l].rows();
            out.middleRows(row, r) = (scale * std::cos(angle)) * psis_[l];
            out.middleRows(row + r, r) = (scale * std::sin(angle)) * psis_[l];
            row += 2 * r;
        }
        return out;
    }

    /// K_D(x,t) = Phi_D(x)^T Phi_D(t).
    [[nodiscard]] Eigen::MatrixXd approx_kernel(const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& t) const {
        return (*this)(x).transpose() * (*this)(t);
    }

    /// Horizontal stack [Phi_D(x_1), ..., Phi_D(x_m)]: (2*D*r) x (d*m).
    [[nodiscard]] Eigen::MatrixXd feature_stack(const Eigen::MatrixXd& points) const {
        if (points.cols() != input_dim())
            throw DimensionError("feature_stack: points have wrong dimension");
        const int m = static_cast<int>(points.rows());
        const int d = output_dim();
        Eigen::MatrixXd out(out_dim_, static_cast<long>(d) * m);
        for (int i = 0; i < m; ++i)
            out.middleCols(static_cast<long>(i) * d, d) = (*this)(points.row(i).transpose());
        return out;
    }

private:
    SpectralModel model_;
    int D_;
    std::uint64_t seed_;
    Eigen::MatrixXd frequencies_;
    std::vector<Eigen::MatrixXd> psis_;
    int out_dim_ = 0;
};

inline FeatureMap assemble_feature_map(const SpectralModel& model, int D,
                                       std::uint64_t seed) {
    return FeatureMap(model, D, seed);
}

inline Eigen::MatrixXd apply_feature_map(const FeatureMap& fm, const Eigen::VectorXd& x) {
    return fm(x);
}

inline Eigen::MatrixXd approx_kernel(const FeatureMap& fm, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& t) {
    return fm.approx_kernel(x, t);
}

/// Relative Frobenius approximation error of K_D against K, aggregated
/// across independently seeded runs.
struct ErrorStats {
    double mean_rel = 0.0;   // mean over runs of the per-run pair average
    double std_rel = 0.0;    // sample std over runs
    double max_rel = 0.0;    // largest per-run pair average
    double sup_abs_hs = 0.0; // sup over runs and pairs of ||K_D - K||_F
    long num_pairs = 0;      // ordered pairs entering the relative average
    long num_zero_pairs = 0; // pairs with ||K(x,y)||_F = 0, excluded
    int runs = 0;
};

/// Per run: relative error ||K_D(x,y)-K(x,y)||_F / ||K(x,y)||_F averaged over
/// all ordered pairs x != y (zero-norm kernel pairs excluded and counted);
/// then mean/std across runs. sup_abs_hs additionally scans the diagonal.
inline ErrorStats approx_error_stats(const KernelSpec& kernel,
                                     const std::function<FeatureMap(std::uint64_t)>& fm_factory,
                                     const Eigen::MatrixXd& points,
                                     const std::vector<std::uint64_t>& seeds,
                                     int threads = 1) {
    if (points.rows() < 2)
        throw ConfigError("approx_error_stats: need at least two points");
    if (seeds.empty()) throw ConfigError("approx_error_stats: need at least one seed");
    const int m = static_cast<int>(points.rows());
    const int d = kernel.output_dim();
    const BlockMatrix exact = gram(kernel, points);

    std::vector<double> run_mean(seeds.size());
    std::vector<double> run_sup(seeds.size());
    long num_pairs = 0, num_zero = 0;
    {
        // Pair bookkeeping depends only on the exact kernel.
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                if (i == j) continue;
                if (exact.block(i, j).norm() > 0.0) ++num_pairs;
                else ++num_zero;
            }
        if (num_pairs == 0)
            throw ConfigError("approx_error_stats: all pairs have zero kernel norm");
    }

    detail::parallel_for_index(static_cast<long>(seeds.size()), threads, [&](long s) {
        const FeatureMap fm = fm_factory(seeds[static_cast<std::size_t>(s)]);
        const Eigen::MatrixXd F = fm.feature_stack(points);
        const Eigen::MatrixXd approx = F.transpose() * F;
        double acc = 0.0, sup = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                const double err =
                    (approx.block(i * d, j * d, d, d) - exact.block(i, j)).norm();
                sup = std::max(sup, err);
                if (i == j) continue;
                const double denom = exact.block(i, j).norm();
                if (denom > 0.0) acc += err / denom;
            }
        run_mean[static_cast<std::size_t>(s)] = acc / static_cast<double>(num_pairs);
        run_sup[static_cast<std::size_t>(s)] = sup;
    });

    ErrorStats st;
    st.runs = static_cast<int>(seeds.size());
    st.num_pairs = num_pairs;
    st.num_zero_pairs = num_zero;
    double mean = 0.0;
    for (double v : run_mean) mean += v;
    mean /= static_cast<double>(run_mean.size());
    double var = 0.0;
    for (double v : run_mean) var += (v - mean) * (v - mean);
    st.mean_rel = mean;
    st.std_rel = run_mean.size() > 1
                     ? std::sqrt(var / static_cast<double>(run_mean.size() - 1))
                     : 0.0;
    st.max_rel = *std::max_element(run_mean.begin(), run_mean.end());
    st.sup_abs_hs = *std::max_element(run_sup.begin(), run_sup.end());
    return st;
}

/// Inputs of the uniform convergence bound (finite quantities only).
struct BoundInputs {
    int n = 1;           // input dimension
    double hs_bound = 1; // M, a.s. bound on ||mu_tilde||_HS
    double variance = 1; // sigma^2(mu_tilde) = E ||mu_tilde||_HS^2
    double m1 = 1;       // \int ||w|| ||mu_tilde(w)||_HS drho
    double diam = 1;     // diameter of the compact set
    int D = 1;           // number of frequencies
    double eps = 1;      // deviation level
};

/// a(n) = 2^{(3n+1)/(n+1)} (n^{1/(n+1)} + n^{-n/(n+1)}).
inline double uniform_bound_prefactor(int n) {
    if (n < 1) throw ConfigError("uniform_bound_prefactor: n must be >= 1");
    const double nn = static_cast<double>(n);
    return std::pow(2.0, (3.0 * nn + 1.0) / (nn + 1.0)) *
           (std::pow(nn, 1.0 / (nn + 1.0)) + std::pow(nn, -nn / (nn + 1.0)));
}

/// Upper bound on P(sup_{x in Omega} ||k_D(x)-k(x)||_HS >= eps):
///   a(n) (m1 diam / eps)^{n/(n+1)} exp(-D eps / (4(n+1)M) * log[1 + M eps/(2 sigma^2)]).
/// Only defined for bounded factorizations (finite M).
inline double theorem5_bound(const BoundInputs& in) {
    if (!std::isfinite(in.hs_bound))
        throw NotApplicableError("theorem5_bound: not applicable: unbounded variant "
                                 "(M = inf)");
    if (in.n < 1 || in.D < 1 || !(in.hs_bound > 0) || !(in.variance > 0) ||
        !(in.m1 > 0) || !(in.diam > 0) || !(in.eps > 0))
        throw ConfigError("theorem5_bound: all inputs must be strictly positive");
    const double nn = static_cast<double>(in.n);
    const double exponent = -static_cast<double>(in.D) * in.eps /
                            (4.0 * (nn + 1.0) * in.hs_bound) *
                            std::log1p(in.hs_bound * in.eps / (2.0 * in.variance));
    return uniform_bound_prefactor(in.n) *
           std::pow(in.m1 * in.diam / in.eps, nn / (nn + 1.0)) * std::exp(exponent);
}

} // namespace ovkrff
