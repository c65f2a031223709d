#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ovkrff/errors.hpp"
#include "ovkrff/kernels.hpp"
#include "ovkrff/rng.hpp"

namespace ovkrff {

// A spectral model is a factorization mu(w) = mu_tilde(w) * rho(w) of the
// operator-valued spectral density of a kernel, together with a matrix
// factor psi(w) with psi(w)^T psi(w) = mu_tilde(w). The factorization is
// non-unique; each variant below is one named choice.
enum class SpectralVariant {
    SeparableSqrt,
    SeparableCholesky,
    CurlUnbounded,
    CurlBounded,
    DivUnbounded,
    DivBounded,
    TraceNormalized,
    SumTrace,
    SumConcat,
};

inline std::string to_string(SpectralVariant v) {
    switch (v) {
        case SpectralVariant::SeparableSqrt: return "separable_sqrt";
        case SpectralVariant::SeparableCholesky: return "separable_cholesky";
        case SpectralVariant::CurlUnbounded: return "curl_unbounded";
        case SpectralVariant::CurlBounded: return "curl_bounded";
        case SpectralVariant::DivUnbounded: return "div_unbounded";
        case SpectralVariant::DivBounded: return "div_bounded";
        case SpectralVariant::TraceNormalized: return "trace_normalized";
        case SpectralVariant::SumTrace: return "sum_trace";
        case SpectralVariant::SumConcat: return "sum_concat";
    }
    return "?";
}

/// Sampler description for the probability measure rho on R^n.
struct RhoSpec {
    enum class Family {
        Gaussian,       // N(0, tau2 * I_n)
        WeightedRadial, // density ~ ||w||^2 N(0, tau2 * I_n)
        Mixture,        // weighted mixture of the above
    };
    Family family = Family::Gaussian;
    double tau2 = 1.0;
    std::vector<double> weights; // Mixture only; sums to 1
    std::vector<RhoSpec> parts;  // Mixture only
};

namespace detail {

inline double gaussian_density(const Eigen::VectorXd& w, double tau2) {
    const int n = static_cast<int>(w.size());
    return std::pow(2.0 * M_PI * tau2, -0.5 * n) *
           std::exp(-w.squaredNorm() / (2.0 * tau2));
}

inline double rho_density(const RhoSpec& rho, const Eigen::VectorXd& w) {
    switch (rho.family) {
        case RhoSpec::Family::Gaussian: return gaussian_density(w, rho.tau2);
        case RhoSpec::Family::WeightedRadial:
            return w.squaredNorm() / (w.size() * rho.tau2) *
                   gaussian_density(w, rho.tau2);
        case RhoSpec::Family::Mixture: {
            double p = 0.0;
            for (std::size_t j = 0; j < rho.parts.size(); ++j)
                p += rho.weights[j] * rho_density(rho.parts[j], w);
            return p;
        }
    }
    return 0.0;
}

// Draws one frequency. All randomness is addressed by (key, slot); at most
// one mixture component is realized per draw, so branch slot reuse is fine.
// The mixture pick lives at a slot offset no normal draw can reach.
inline Eigen::VectorXd rho_sample(const RhoSpec& rho, int n, std::uint64_t key) {
    constexpr std::uint64_t kPickSlot = std::uint64_t{1} << 40;
    switch (rho.family) {
        case RhoSpec::Family::Gaussian: {
            Eigen::VectorXd w(n);
            const double tau = std::sqrt(rho.tau2);
            for (int j = 0; j < n; ++j) w[j] = tau * rng::normal_at(key, j);
            return w;
        }
        case RhoSpec::Family::WeightedRadial: {
            // Direction uniform on the sphere; radius tau*||g|| with g an
            // (n+2)-dimensional standard normal, so the radial density is
            // exactly ~ r^{n+1} exp(-r^2 / 2 tau2).
            Eigen::VectorXd dir(n);
            for (int j = 0; j < n; ++j) dir[j] = rng::normal_at(key, j);
            const double dn = dir.norm();
            if (dn > 0.0) dir /= dn;
            else dir = Eigen::VectorXd::Unit(n, 0);
            double r2 = 0.0;
            for (int j = 0; j < n + 2; ++j) {
                const double g = rng::normal_at(key, n + j);
                r2 += g * g;
            }
            return std::sqrt(rho.tau2 * r2) * dir;
        }
        case RhoSpec::Family::Mixture: {
            const double u = rng::uniform_at(key, kPickSlot);
            double acc = 0.0;
            for (std::size_t j = 0; j < rho.parts.size(); ++j) {
                acc += rho.weights[j];
                if (u < acc || j + 1 == rho.parts.size())
                    return rho_sample(rho.parts[j], n, key);
            }
            return rho_sample(rho.parts.back(), n, key);
        }
    }
    throw Error("rho_sample: unreachable");
}

/// Symmetric PSD square root; eigenvalues below 1e-12*||A|| clamp to zero.
inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& A) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double floor = 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) lam[i] = lam[i] > floor ? std::sqrt(lam[i]) : 0.0;
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

/// Closed-form density mu(w) of the operator-valued spectral measure, with
/// respect to the Lebesgue measure (Gaussian generators only):
/// separable A*rho0(w); curl-free w w^T rho0(w); div-free (||w||^2 I - w w^T) rho0(w).
inline Eigen::MatrixXd spectral_density(const KernelSpec& kernel, const Eigen::VectorXd& w) {
    detail::check_point(kernel, w, "spectral_density");
    const int n = kernel.input_dim();
    const double tau2 = 2.0 / (kernel.sigma() * kernel.sigma());
    switch (kernel.kind()) {
        case KernelKind::Separable:
            return detail::gaussian_density(w, tau2) * kernel.coupling();
        case KernelKind::CurlFree:
            return detail::gaussian_density(w, tau2) * (w * w.transpose());
        case KernelKind::DivFree: {
            Eigen::MatrixXd m = w.squaredNorm() * Eigen::MatrixXd::Identity(n, n);
            m.noalias() -= w * w.transpose();
            return detail::gaussian_density(w, tau2) * m;
        }
        case KernelKind::Sum: {
            Eigen::MatrixXd out =
                Eigen::MatrixXd::Zero(kernel.output_dim(), kernel.output_dim());
            for (const auto& t : kernel.terms()) out += spectral_density(t, w);
            return out;
        }
    }
    throw Error("spectral_density: unreachable");
}

/// Closed-form mu_tr(w) = tr[mu(w)].
inline double trace_spectral_density(const KernelSpec& kernel, const Eigen::VectorXd& w) {
    detail::check_point(kernel, w, "trace_spectral_density");
    const double tau2 = 2.0 / (kernel.sigma() * kernel.sigma());
    switch (kernel.kind()) {
        case KernelKind::Separable:
            return detail::gaussian_density(w, tau2) * kernel.coupling().trace();
        case KernelKind::CurlFree:
            return detail::gaussian_density(w, tau2) * w.squaredNorm();
        case KernelKind::DivFree:
            return detail::gaussian_density(w, tau2) * (kernel.input_dim() - 1) *
                   w.squaredNorm();
        case KernelKind::Sum: {
            double t = 0.0;
            for (const auto& term : kernel.terms()) t += trace_spectral_density(term, w);
            return t;
        }
    }
    throw Error("trace_spectral_density: unreachable");
}

class SpectralModel {
public:
    [[nodiscard]] const KernelSpec& kernel() const { return kernel_; }
    [[nodiscard]] SpectralVariant variant() const { return variant_; }
    [[nodiscard]] const RhoSpec& rho() const { return rho_; }
    /// Rows of psi(w); the feature map has 2*D*psi_rows rows.
    [[nodiscard]] int psi_rows() const { return r_; }
    /// Essential sup of ||mu_tilde(w)||_F; +inf for unbounded factorizations.
    [[nodiscard]] double hs_bound() const { return hs_bound_; }
    /// E_rho ||mu_tilde(w)||_F^2.
    [[nodiscard]] double variance() const { return variance_; }
    /// 0 when variance() is analytic, otherwise the Monte Carlo sample count.
    [[nodiscard]] long variance_samples() const { return variance_samples_; }
    [[nodiscard]] std::uint64_t variance_seed() const { return variance_seed_; }
    [[nodiscard]] double trace_k0() const { return trace_k0_; }
    /// Per-term models (SumConcat only; empty otherwise).
    [[nodiscard]] const std::vector<SpectralModel>& components() const { return components_; }

    [[nodiscard]] bool is_concat() const { return variant_ == SpectralVariant::SumConcat; }

    /// Density of rho at w.
    [[nodiscard]] double rho_density(const Eigen::VectorXd& w) const {
        detail::check_point(kernel_, w, "rho_density");
        if (is_concat())
            throw Error("rho_density: concatenated models sample per component");
        return detail::rho_density(rho_, w);
    }

    /// mu_tilde(w), a symmetric PSD d x d matrix. Points where the trace
    /// density vanishes map to the zero matrix.
    [[nodiscard]] Eigen::MatrixXd mu_tilde(const Eigen::VectorXd& w) const {
        detail::check_point(kernel_, w, "mu_tilde");
        const int n = kernel_.input_dim();
        const int d = kernel_.output_dim();
        const double sig2 = kernel_.sigma() * kernel_.sigma();
        switch (variant_) {
            case SpectralVariant::SeparableSqrt:
            case SpectralVariant::SeparableCholesky:
                return kernel_.coupling();
            case SpectralVariant::CurlUnbounded:
                return w * w.transpose();
            case SpectralVariant::CurlBounded:
                return bounded_weight2(w) * (w * w.transpose());
            case SpectralVariant::DivUnbounded:
            case SpectralVariant::DivBounded: {
                Eigen::MatrixXd m = w.squaredNorm() * Eigen::MatrixXd::Identity(n, n);
                m.noalias() -= w * w.transpose();
                if (variant_ == SpectralVariant::DivBounded) m *= bounded_weight2(w);
                return m;
            }
            case SpectralVariant::TraceNormalized: {
                if (kernel_.kind() == KernelKind::Separable) return kernel_.coupling();
                const double n2 = w.squaredNorm();
                if (n2 <= 0.0) return Eigen::MatrixXd::Zero(d, d);
                if (kernel_.kind() == KernelKind::CurlFree)
                    return (trace_k0_ / n2) * (w * w.transpose());
                // div-free: tr[k(0)] * mu/mu_tr = (2n/sig^2) (I - w w^T/||w||^2)
                Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n);
                p.noalias() -= (w * w.transpose()) / n2;
                return (2.0 * n / sig2) * p;
            }
            case SpectralVariant::SumTrace: {
                const double mtr = trace_spectral_density(kernel_, w);
                if (mtr <= 0.0) return Eigen::MatrixXd::Zero(d, d);
                return (trace_k0_ / mtr) * spectral_density(kernel_, w);
            }
            case SpectralVariant::SumConcat:
                throw Error("mu_tilde: no single factorization for a concatenated model; "
                            "query components()");
        }
        throw Error("mu_tilde: unreachable");
    }

    /// psi(w), an r x d matrix with psi(w)^T psi(w) = mu_tilde(w).
    [[nodiscard]] Eigen::MatrixXd psi(const Eigen::VectorXd& w) const {
        detail::check_point(kernel_, w, "psi");
        const int n = kernel_.input_dim();
        switch (variant_) {
            case SpectralVariant::SeparableSqrt:
            case SpectralVariant::SeparableCholesky:
                return psi_const_;
            case SpectralVariant::CurlUnbounded:
                return w.transpose();
            case SpectralVariant::CurlBounded:
                return bounded_weight(w) * w.transpose();
            case SpectralVariant::DivUnbounded:
            case SpectralVariant::DivBounded: {
                const double nw = w.norm();
                Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
                if (nw > 0.0) {
                    m = nw * Eigen::MatrixXd::Identity(n, n);
                    m.noalias() -= (w * w.transpose()) / nw;
                }
                if (variant_ == SpectralVariant::DivBounded) m *= bounded_weight(w);
                return m;
            }
            case SpectralVariant::TraceNormalized: {
                if (kernel_.kind() == KernelKind::Separable) return psi_const_;
                const double n2 = w.squaredNorm();
                if (n2 <= 0.0) return Eigen::MatrixXd::Zero(n, n);
                if (kernel_.kind() == KernelKind::CurlFree)
                    return std::sqrt(trace_k0_) / n2 * (w * w.transpose());
                // sqrt of c*(I-P) for a projection P is sqrt(c)*(I-P)
                const double c = 2.0 * n / (kernel_.sigma() * kernel_.sigma());
                Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n);
                p.noalias() -= (w * w.transpose()) / n2;
                return std::sqrt(c) * p;
            }
            case SpectralVariant::SumTrace:
                return detail::symmetric_sqrt(mu_tilde(w));
            case SpectralVariant::SumConcat:
                throw Error("psi: no single factorization for a concatenated model; "
                            "query components()");
        }
        throw Error("psi: unreachable");
    }

    /// D i.i.d. frequencies from rho, one per row; bit-identical for equal
    /// (model, D, seed) and prefix-stable in D. Concatenated models return
    /// the per-component blocks stacked (components.size()*D rows).
    [[nodiscard]] Eigen::MatrixXd sample_frequencies(int D, std::uint64_t seed) const {
        if (D < 1) throw ConfigError("sample_frequencies: D must be >= 1");
        const int n = kernel_.input_dim();
        if (is_concat()) {
            const auto m = static_cast<int>(components_.size());
            Eigen::MatrixXd out(m * D, n);
            const std::uint64_t base = rng::derive_stream(seed, kConcatDomain);
            for (int j = 0; j < m; ++j)
                out.middleRows(j * D, D) =
                    components_[j].sample_frequencies(D, rng::derive_stream(base, j));
            return out;
        }
        Eigen::MatrixXd out(D, n);
        const std::uint64_t base = rng::derive_stream(seed, kFreqDomain);
        for (int i = 0; i < D; ++i)
            out.row(i) = detail::rho_sample(rho_, n, rng::derive_stream(base, i)).transpose();
        return out;
    }

    friend SpectralModel build_spectral_model(const KernelSpec& kernel,
                                              SpectralVariant variant);

private:
    SpectralModel() = default;

    // exp(-sigma^2 ||w||^2 / 16) * 2^{n/4} and its square
    [[nodiscard]] double bounded_weight(const Eigen::VectorXd& w) const {
        const double sig2 = kernel_.sigma() * kernel_.sigma();
        return std::exp(-sig2 * w.squaredNorm() / 16.0) *
               std::pow(2.0, 0.25 * kernel_.input_dim());
    }
    [[nodiscard]] double bounded_weight2(const Eigen::VectorXd& w) const {
        const double sig2 = kernel_.sigma() * kernel_.sigma();
        return std::exp(-sig2 * w.squaredNorm() / 8.0) *
               std::pow(2.0, 0.5 * kernel_.input_dim());
    }

    static constexpr std::uint64_t kFreqDomain = 0x66726571;   // frequency draws
    static constexpr std::uint64_t kConcatDomain = 0x636f6e63; // per-term substreams

    KernelSpec kernel_ = KernelSpec::CurlFree(1, 1.0);
    SpectralVariant variant_ = SpectralVariant::CurlUnbounded;
    RhoSpec rho_;
    int r_ = 1;
    double hs_bound_ = std::numeric_limits<double>::infinity();
    double variance_ = 0.0;
    long variance_samples_ = 0;
    std::uint64_t variance_seed_ = 0;
    double trace_k0_ = 0.0;
    Eigen::MatrixXd psi_const_; // separable variants
    std::vector<SpectralModel> components_;
};

/// Monte Carlo estimate of m1 = E_rho[ ||w|| * ||mu_tilde(w)||_F ], the
/// integrability constant of the uniform convergence bound. Component sums
/// are used for concatenated models.
inline double monte_carlo_m1(const SpectralModel& model, long samples = 1000000,
                             std::uint64_t seed = 0x6d31) {
    if (model.is_concat()) {
        double s = 0.0;
        for (const auto& c : model.components()) s += monte_carlo_m1(c, samples, seed);
        return s;
    }
    const int n = model.kernel().input_dim();
    const std::uint64_t base = rng::derive_stream(seed, 0x6d636d31);
    double acc = 0.0;
    for (long i = 0; i < samples; ++i) {
        const Eigen::VectorXd w =
            detail::rho_sample(model.rho(), n, rng::derive_stream(base, static_cast<std::uint64_t>(i)));
        acc += w.norm() * model.mu_tilde(w).norm();
    }
    return acc / static_cast<double>(samples);
}

namespace detail {

inline double monte_carlo_variance(const RhoSpec& rho, const SpectralModel& model,
                                   long samples, std::uint64_t seed) {
    const int n = model.kernel().input_dim();
    const std::uint64_t base = rng::derive_stream(seed, 0x6d637632);
    double acc = 0.0;
    for (long i = 0; i < samples; ++i) {
        const Eigen::VectorXd w =
            rho_sample(rho, n, rng::derive_stream(base, static_cast<std::uint64_t>(i)));
        acc += model.mu_tilde(w).squaredNorm();
    }
    return acc / static_cast<double>(samples);
}

inline void require_kind(const KernelSpec& k, KernelKind kind, SpectralVariant v) {
    if (k.kind() != kind)
        throw ConfigError("build_spectral_model: variant " + to_string(v) +
                          " requires a " + to_string(kind) + " kernel, got " +
                          to_string(k.kind()));
}

inline SpectralVariant default_term_variant(const KernelSpec& term) {
    switch (term.kind()) {
        case KernelKind::Separable: return SpectralVariant::SeparableSqrt;
        case KernelKind::CurlFree: return SpectralVariant::CurlBounded;
        case KernelKind::DivFree: return SpectralVariant::DivBounded;
        case KernelKind::Sum: return SpectralVariant::SumConcat;
    }
    return SpectralVariant::SumConcat;
}

// Leaves of a (possibly nested) sum kernel.
inline void collect_leaves(const KernelSpec& k, std::vector<KernelSpec>& out) {
    if (k.kind() == KernelKind::Sum)
        for (const auto& t : k.terms()) collect_leaves(t, out);
    else
        out.push_back(k);
}

} // namespace detail

inline SpectralModel build_spectral_model(const KernelSpec& kernel,
                                          SpectralVariant variant) {
    using V = SpectralVariant;
    const int n = kernel.input_dim();
    const int d = kernel.output_dim();
    const double sig = kernel.sigma();
    const double sig2 = sig * sig;

    SpectralModel m;
    m.kernel_ = kernel;
    m.variant_ = variant;
    m.trace_k0_ = trace_at_zero(kernel);

    const double a_fro =
        kernel.kind() == KernelKind::Separable ? kernel.coupling().norm() : 0.0;
    const double tau2_0 = 2.0 / sig2; // rho_0 covariance scale for the Gaussian generator

    switch (variant) {
        case V::SeparableSqrt:
        case V::SeparableCholesky: {
            detail::require_kind(kernel, KernelKind::Separable, variant);
            m.rho_ = {RhoSpec::Family::Gaussian, tau2_0, {}, {}};
            m.r_ = d;
            m.hs_bound_ = a_fro;
            m.variance_ = a_fro * a_fro;
            if (variant == V::SeparableSqrt) {
                m.psi_const_ = detail::symmetric_sqrt(kernel.coupling());
            } else {
                const Eigen::LLT<Eigen::MatrixXd> llt(kernel.coupling());
                if (llt.info() != Eigen::Success)
                    throw ConfigError("build_spectral_model: Cholesky factorization "
                                      "requires a positive definite A");
                m.psi_const_ = Eigen::MatrixXd(llt.matrixL()).transpose();
            }
            break;
        }
        case V::CurlUnbounded:
        case V::CurlBounded: {
            detail::require_kind(kernel, KernelKind::CurlFree, variant);
            m.r_ = 1;
            if (variant == V::CurlUnbounded) {
                m.rho_ = {RhoSpec::Family::Gaussian, tau2_0, {}, {}};
                m.hs_bound_ = std::numeric_limits<double>::infinity();
                // E||w||^4 under N(0, tau2 I)
                m.variance_ = tau2_0 * tau2_0 * n * (n + 2);
            } else {
                m.rho_ = {RhoSpec::Family::Gaussian, 4.0 / sig2, {}, {}};
                m.hs_bound_ = std::pow(2.0, 0.5 * n) * (8.0 / sig2) * std::exp(-1.0);
                // 2^n E[||w||^4 exp(-sig^2||w||^2/4)] under N(0, 4/sig^2 I)
                m.variance_ = std::pow(2.0, n) * std::pow(3.0, -0.5 * n) * 16.0 * n *
                              (n + 2) / (9.0 * sig2 * sig2);
            }
            break;
        }
        case V::DivUnbounded:
        case V::DivBounded: {
            detail::require_kind(kernel, KernelKind::DivFree, variant);
            m.r_ = n;
            const double extra = static_cast<double>(n - 1);
            if (variant == V::DivUnbounded) {
                m.rho_ = {RhoSpec::Family::Gaussian, tau2_0, {}, {}};
                m.hs_bound_ = std::numeric_limits<double>::infinity();
                m.variance_ = extra * tau2_0 * tau2_0 * n * (n + 2);
            } else {
                m.rho_ = {RhoSpec::Family::Gaussian, 4.0 / sig2, {}, {}};
                m.hs_bound_ = std::sqrt(extra) * std::pow(2.0, 0.5 * n) * (8.0 / sig2) *
                              std::exp(-1.0);
                m.variance_ = extra * std::pow(2.0, n) * std::pow(3.0, -0.5 * n) * 16.0 *
                              n * (n + 2) / (9.0 * sig2 * sig2);
            }
            break;
        }
        case V::TraceNormalized: {
            if (kernel.kind() == KernelKind::Sum)
                throw ConfigError("build_spectral_model: use sum_trace for sum kernels");
            if (kernel.kind() == KernelKind::Separable) {
                // mu_tr = tr(A) rho_0, so the construction reduces to rho_0 with
                // mu_tilde = A.
                m.rho_ = {RhoSpec::Family::Gaussian, tau2_0, {}, {}};
                m.r_ = d;
                m.hs_bound_ = a_fro;
                m.variance_ = a_fro * a_fro;
                m.psi_const_ = detail::symmetric_sqrt(kernel.coupling());
            } else {
                // rho(w) = (sig^2 / 2n) ||w||^2 rho_0(w) for both curl and div.
                m.rho_ = {RhoSpec::Family::WeightedRadial, tau2_0, {}, {}};
                m.r_ = n;
                if (kernel.kind() == KernelKind::CurlFree) {
                    m.hs_bound_ = m.trace_k0_; // ||mu_tilde||_F = 2n/sig^2 exactly
                    m.variance_ = m.trace_k0_ * m.trace_k0_;
                } else {
                    m.hs_bound_ = m.trace_k0_ / std::sqrt(static_cast<double>(n - 1));
                    m.variance_ = m.trace_k0_ * m.trace_k0_ / (n - 1);
                }
            }
            break;
        }
        case V::SumTrace: {
            detail::require_kind(kernel, KernelKind::Sum, variant);
            std::vector<KernelSpec> leaves;
            detail::collect_leaves(kernel, leaves);
            RhoSpec mix;
            mix.family = RhoSpec::Family::Mixture;
            for (const auto& leaf : leaves) {
                const double w = detail::trace_k0_raw(leaf) / m.trace_k0_;
                if (w <= 0.0) continue; // trace-free leaf contributes no mass
                RhoSpec part;
                part.tau2 = 2.0 / (leaf.sigma() * leaf.sigma());
                part.family = leaf.kind() == KernelKind::Separable
                                  ? RhoSpec::Family::Gaussian
                                  : RhoSpec::Family::WeightedRadial;
                mix.weights.push_back(w);
                mix.parts.push_back(part);
            }
            if (mix.parts.empty())
                throw DegenerateKernelError("build_spectral_model: sum kernel has no "
                                            "trace-carrying terms");
            m.rho_ = std::move(mix);
            m.r_ = d;
            m.hs_bound_ = m.trace_k0_; // Frobenius <= trace for PSD matrices
            m.variance_samples_ = 1000000;
            m.variance_seed_ = 0x73756d74;
            m.variance_ = detail::monte_carlo_variance(m.rho_, m, m.variance_samples_,
                                                       m.variance_seed_);
            break;
        }
        case V::SumConcat: {
            detail::require_kind(kernel, KernelKind::Sum, variant);
            m.r_ = 0;
            m.hs_bound_ = 0.0;
            m.variance_ = 0.0;
            for (const auto& term : kernel.terms()) {
                SpectralModel c =
                    build_spectral_model(term, detail::default_term_variant(term));
                m.r_ += c.psi_rows();
                m.hs_bound_ += c.hs_bound();
                m.variance_ += c.variance(); // per-term sum; no joint factorization
                m.components_.push_back(std::move(c));
            }
            break;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Numerical verification of the trace spectral density.

/// Axis-aligned uniform grid, endpoints inclusive.
struct GridSpec {
    Eigen::VectorXd min;
    Eigen::VectorXd max;
    Eigen::VectorXi points;
};

/// mu_tr sampled at the dual frequencies of an x-space grid.
struct TraceDensity {
    std::vector<Eigen::VectorXd> freq_axes; // dual frequency axis per dimension
    std::vector<double> values;             // row-major over the dual grid
    double integral = 0.0;                  // trapezoid integral over the dual grid
};

/// Numerical inverse Fourier transform of x -> tr[k(x)]:
///   mu_tr(w) = (2 pi)^{-n} \int exp(i<w,x>) tr[k(x)] dx
/// approximated by trapezoid quadrature on the given grid and evaluated at
/// the grid's dual frequencies w_m = 2 pi m / (G dx). Limited to n <= 3.
inline TraceDensity trace_density_numeric(const KernelSpec& kernel, const GridSpec& grid) {
    const int n = kernel.input_dim();
    if (n > 3)
        throw ConfigError("trace_density_numeric: supported for n <= 3 only");
    if (grid.min.size() != n || grid.max.size() != n || grid.points.size() != n)
        throw DimensionError("trace_density_numeric: grid spec does not match kernel "
                             "dimension");
    for (int k = 0; k < n; ++k) {
        if (grid.points[k] < 8)
            throw ConfigError("trace_density_numeric: need at least 8 points per axis");
        if (!(grid.max[k] > grid.min[k]))
            throw ConfigError("trace_density_numeric: empty grid axis");
    }

    std::vector<Eigen::VectorXd> xaxes(n);
    std::vector<double> dx(n);
    std::vector<long> shape(n);
    long total = 1;
    for (int k = 0; k < n; ++k) {
        const int G = grid.points[k];
        xaxes[k] = Eigen::VectorXd::LinSpaced(G, grid.min[k], grid.max[k]);
        dx[k] = (grid.max[k] - grid.min[k]) / (G - 1);
        shape[k] = G;
        total *= G;
    }

    // tr[k(x)] over the grid, tracking the largest magnitude on the boundary.
    std::vector<double> f(total);
    double max_abs = 0.0, max_boundary = 0.0;
    {
        Eigen::VectorXd x(n);
        std::vector<long> idx(n, 0);
        for (long flat = 0; flat < total; ++flat) {
            bool boundary = false;
            for (int k = 0; k < n; ++k) {
                x[k] = xaxes[k][idx[k]];
                boundary = boundary || idx[k] == 0 || idx[k] == shape[k] - 1;
            }
            const double v = eval_pdf(kernel, x).trace();
            f[flat] = v;
            max_abs = std::max(max_abs, std::abs(v));
            if (boundary) max_boundary = std::max(max_boundary, std::abs(v));
            for (int k = n - 1; k >= 0; --k) {
                if (++idx[k] < shape[k]) break;
                idx[k] = 0;
            }
        }
    }
    if (max_abs <= 0.0)
        throw DegenerateKernelError("trace_density_numeric: tr[k] vanishes on the grid");
    if (max_boundary > 1e-10 * max_abs)
        throw ResolutionError("trace_density_numeric: tr[k] has not decayed below 1e-10 "
                              "of its peak at the grid boundary; widen the grid");

    TraceDensity out;
    std::vector<long> dual_shape(n);
    for (int k = 0; k < n; ++k) {
        const long G = shape[k];
        const long M = G / 2;
        const double dw = 2.0 * M_PI / (static_cast<double>(G) * dx[k]);
        Eigen::VectorXd axis(2 * M + 1);
        for (long j = -M; j <= M; ++j) axis[j + M] = static_cast<double>(j) * dw;
        out.freq_axes.push_back(axis);
        dual_shape[k] = 2 * M + 1;
    }

    // Separable transform, one axis at a time:
    //   T_k[a, b] = w_b dx exp(i w_a x_b), weights w trapezoid.
    std::vector<std::complex<double>> cur(f.begin(), f.end());
    std::vector<long> cur_shape = shape;
    for (int k = 0; k < n; ++k) {
        const long G = shape[k];
        const long Gd = dual_shape[k];
        Eigen::MatrixXcd T(Gd, G);
        for (long a = 0; a < Gd; ++a)
            for (long b = 0; b < G; ++b) {
                const double wgt = (b == 0 || b == G - 1) ? 0.5 : 1.0;
                const double phase = out.freq_axes[k][a] * xaxes[k][b];
                T(a, b) = wgt * dx[k] * std::complex<double>(std::cos(phase), std::sin(phase));
            }
        // Contract axis k: view cur as (outer, G, inner).
        long outer = 1, inner = 1;
        for (int q = 0; q < k; ++q) outer *= cur_shape[q];
        for (int q = k + 1; q < n; ++q) inner *= cur_shape[q];
        std::vector<std::complex<double>> next(static_cast<std::size_t>(outer * Gd * inner));
        for (long o = 0; o < outer; ++o)
            for (long a = 0; a < Gd; ++a)
                for (long i = 0; i < inner; ++i) {
                    std::complex<double> acc{0.0, 0.0};
                    const long base = o * G * inner + i;
                    for (long b = 0; b < G; ++b) acc += T(a, b) * cur[base + b * inner];
                    next[o * Gd * inner + a * inner + i] = acc;
                }
        cur.swap(next);
        cur_shape[k] = Gd;
    }

    const double scale = std::pow(2.0 * M_PI, -n);
    out.values.resize(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) out.values[i] = scale * cur[i].real();

    // Trapezoid integral over the dual grid.
    double integral = 0.0;
    {
        std::vector<long> idx(n, 0);
        for (std::size_t flat = 0; flat < out.values.size(); ++flat) {
            double w = 1.0;
            for (int k = 0; k < n; ++k) {
                const double dw = out.freq_axes[k][1] - out.freq_axes[k][0];
                w *= dw * ((idx[k] == 0 || idx[k] == dual_shape[k] - 1) ? 0.5 : 1.0);
            }
            integral += w * out.values[flat];
            for (int k = n - 1; k >= 0; --k) {
                if (++idx[k] < dual_shape[k]) break;
                idx[k] = 0;
            }
        }
    }
    out.integral = integral;
    return out;
}

} // namespace ovkrff
