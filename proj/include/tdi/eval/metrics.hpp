#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdi/loss/losses.hpp"
#include "tdi/nn/modules.hpp"

namespace tdi::eval {

// ---------------------------------------------------------------------------
// Feature extraction. The embedder is a fixed-seed frozen conv stack with a
// global-average-pooled 64-d output; any drop-in with the same interface can
// replace it for larger studies.

struct EmbedderConfig {
    int dim = 64;
    uint64_t seed = 0x656d626564ULL;

    bool operator==(const EmbedderConfig&) const = default;
};

struct FeatureSet {
    Eigen::MatrixXd rows; // n_samples x d
    std::string extractor_id;
    uint64_t config_hash = 0;
};

class Embedder {
public:
    Embedder() : Embedder(EmbedderConfig{}) {}

    explicit Embedder(const EmbedderConfig& cfg) : cfg_(cfg) {
        if (cfg.dim < 8) throw std::invalid_argument("embedder: dim must be >= 8");
        Rng rng(cfg.seed);
        int widths[3] = {cfg.dim / 4, cfg.dim / 2, cfg.dim};
        int in_c = 3;
        for (int i = 0; i < 3; ++i) {
            stages_.push_back(nn::make_conv<float>(in_c, widths[i], 3, 2, 1, 1, rng,
                                                   /*trainable=*/false));
            in_c = widths[i];
        }
    }

    const EmbedderConfig& config() const { return cfg_; }

    std::string id() const { return "frozen-conv-gap-d" + std::to_string(cfg_.dim); }

    uint64_t config_hash() const {
        uint64_t h = fnv1a(&cfg_.dim, sizeof(cfg_.dim));
        return fnv1a(&cfg_.seed, sizeof(cfg_.seed), h);
    }

    Eigen::VectorXd embed(const Image& img) const {
        nn::Var<float> x = nn::constant(nn::image_to_tensor<float>(img));
        for (const auto& s : stages_) x = nn::leaky_relu(s(x));
        const auto& t = x->val;
        Eigen::VectorXd out(cfg_.dim);
        const double inv = 1.0 / double(t.h * t.w);
        for (int c = 0; c < t.c; ++c) {
            double acc = 0;
            for (int y = 0; y < t.h; ++y)
                for (int xx = 0; xx < t.w; ++xx) acc += double(t.at(0, c, y, xx));
            out[c] = acc * inv;
        }
        return out;
    }

private:
    EmbedderConfig cfg_;
    std::vector<nn::Conv2dLayer<float>> stages_;
};

inline FeatureSet extract_features(const Embedder& emb, const std::vector<Image>& images) {
    if (images.empty()) throw std::invalid_argument("extract_features: empty image list");
    FeatureSet fs;
    fs.extractor_id = emb.id();
    fs.config_hash = emb.config_hash();
    fs.rows.resize(long(images.size()), emb.config().dim);
    for (size_t i = 0; i < images.size(); ++i) fs.rows.row(long(i)) = emb.embed(images[i]);
    if (!fs.rows.allFinite()) throw std::runtime_error("extract_features: non-finite features");
    return fs;
}

// ---------------------------------------------------------------------------
// Fréchet distance between Gaussian fits of two feature sets.

namespace detail {

inline void gaussian_fit(const Eigen::MatrixXd& rows, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const long n = rows.rows();
    mu = rows.colwise().mean();
    Eigen::MatrixXd centered = rows.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / double(n); // population covariance
}

// trace of the PSD square root via eigendecomposition; negative eigenvalues
// from numerical noise (tolerance 1e-10) are clamped at 0
inline double sqrt_trace(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    double tr = 0;
    for (long i = 0; i < sym.rows(); ++i) {
        double ev = es.eigenvalues()[i];
        if (ev < -1e-10) continue; // genuine negatives only appear as noise
        if (ev > 0) tr += std::sqrt(ev);
    }
    return tr;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

inline double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.rows.cols() != b.rows.cols())
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    if (a.rows.rows() < 2 || b.rows.rows() < 2)
        throw std::invalid_argument("frechet_distance: need >= 2 samples per set");

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    detail::gaussian_fit(a.rows, mu_a, cov_a);
    detail::gaussian_fit(b.rows, mu_b, cov_b);
    if (!mu_a.allFinite() || !mu_b.allFinite() || !cov_a.allFinite() || !cov_b.allFinite())
        throw std::runtime_error("frechet_distance: non-finite statistics");

    // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2), symmetric PSD form
    Eigen::MatrixXd ra = detail::psd_sqrt(cov_a);
    double cross = detail::sqrt_trace(ra * cov_b * ra);
    double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    return std::max(0.0, d);
}

// ---------------------------------------------------------------------------
// U-IDS: misclassification rate of a soft-margin linear classifier (C = 1)
// on standardized features. 0 = perfectly separable, 0.5 = indistinguishable.

inline double u_ids(const FeatureSet& a, const FeatureSet& b) {
    if (a.rows.cols() != b.rows.cols()) throw std::invalid_argument("u_ids: dimension mismatch");
    const long na = a.rows.rows(), nb = b.rows.rows();
    if (na < 1 || nb < 1) throw std::invalid_argument("u_ids: degenerate single-class input");
    const long n = na + nb, d = a.rows.cols();

    Eigen::MatrixXd x(n, d);
    x.topRows(na) = a.rows;
    x.bottomRows(nb) = b.rows;
    Eigen::VectorXd y(n);
    y.head(na).setConstant(1.0);
    y.tail(nb).setConstant(-1.0);

    // standardize per dimension over the pooled data
    Eigen::VectorXd mu = x.colwise().mean();
    x.rowwise() -= mu.transpose();
    for (long j = 0; j < d; ++j) {
        double sd = std::sqrt(x.col(j).squaredNorm() / double(n));
        if (sd > 1e-12) x.col(j) /= sd;
    }

    // hinge loss with L2 regularization lambda = 1/(C*n), C = 1;
    // deterministic full-batch subgradient descent
    const double C = 1.0;
    const double lambda = 1.0 / (C * double(n));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double bias = 0;
    const int iters = 500;
    for (int t = 0; t < iters; ++t) {
        Eigen::VectorXd margin = y.array() * (x * w).array() + y.array() * bias;
        Eigen::VectorXd gw = lambda * w;
        double gb = 0;
        for (long i = 0; i < n; ++i)
            if (margin[i] < 1.0) {
                gw -= (y[i] / double(n)) * x.row(i).transpose();
                gb -= y[i] / double(n);
            }
        double eta = 1.0 / (1.0 + 0.05 * t);
        w -= eta * gw;
        bias -= eta * gb;
    }

    Eigen::VectorXd score = x * w;
    long mis_a = 0, mis_b = 0;
    for (long i = 0; i < na; ++i)
        if (score[i] + bias <= 0) ++mis_a;
    for (long i = na; i < n; ++i)
        if (score[i] + bias > 0) ++mis_b;
    return 0.5 * (double(mis_a) / double(na) + double(mis_b) / double(nb));
}

// ---------------------------------------------------------------------------
// Full-reference metrics.

inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: size mismatch");
    double mse = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double diff = double(a.data[i]) - double(b.data[i]);
        mse += diff * diff;
    }
    mse /= double(a.data.size());
    if (mse <= 0) return 99.0; // identical-input sentinel, capped
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline const std::vector<double>& gaussian_window11() {
    static std::vector<double> w = [] {
        std::vector<double> v(11);
        const double sigma = 1.5;
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            double d = i - 5;
            v[size_t(i)] = std::exp(-d * d / (2 * sigma * sigma));
            sum += v[size_t(i)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return w;
}

} // namespace detail

// Mean SSIM over the three channels with the standard 11x11 Gaussian window
// (sigma 1.5), valid region only.
inline double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: size mismatch");
    if (a.height < 11 || a.width < 11) throw std::invalid_argument("ssim: image below window size");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto& win = detail::gaussian_window11();

    double total = 0;
    long count = 0;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y + 11 <= a.height; ++y)
            for (int x = 0; x + 11 <= a.width; ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        double wgt = win[size_t(i)] * win[size_t(j)];
                        double pa = a.at(y + i, x + j, ch), pb = b.at(y + i, x + j, ch);
                        ma += wgt * pa;
                        mb += wgt * pb;
                        va += wgt * pa * pa;
                        vb += wgt * pb * pb;
                        cov += wgt * pa * pb;
                    }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / double(count);
}

// Two-stage mean of squared frozen-feature differences.
template <class T>
double perceptual_distance(const nn::FeatureNet<T>& hrf, const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("perceptual_distance: size mismatch");
    return double(loss::feature_distance(hrf, nn::constant(nn::image_to_tensor<T>(a)),
                                         nn::constant(nn::image_to_tensor<T>(b)))
                      ->val.v[0]);
}

} // namespace tdi::eval
