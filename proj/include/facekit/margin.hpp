#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "facekit/errors.hpp"

namespace facekit::margin {

struct MarginConfig {
    double margin = 0.5;  // additive angular margin, radians
    double scale = 64.0;
    // Alternate stability branch: keep the raw cosine (instead of the
    // cos(theta) - m*sin(m) fallback) when theta + margin exceeds pi.
    bool easy_margin = false;

    void validate() const {
        if (margin < 0.0 || margin >= 3.14159265358979323846)
            throw ValidationError("margin: m outside [0, pi)");
        if (scale <= 0.0) throw ValidationError("margin: scale must be > 0");
    }
};

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

// Unit-norm tolerance; float dot products accumulate more rounding noise.
template <typename Scalar>
constexpr double norm_tolerance() {
    return std::is_same_v<Scalar, float> ? 1e-4 : 1e-6;
}

template <typename Scalar>
void check_inputs(const Mat<Scalar>& emb, const Mat<Scalar>& w,
                  const std::vector<int>& labels, const MarginConfig& cfg) {
    cfg.validate();
    if (emb.cols() != w.cols())
        throw ValidationError("margin: embedding/weight dimension mismatch");
    if (static_cast<Eigen::Index>(labels.size()) != emb.rows())
        throw ValidationError("margin: one label per embedding row required");
    for (int y : labels)
        if (y < 0 || y >= w.rows())
            throw ValidationError("margin: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(w.rows()) +
                                  ")");
    const double tol = norm_tolerance<Scalar>();
    for (Eigen::Index i = 0; i < emb.rows(); ++i)
        if (std::abs(static_cast<double>(emb.row(i).norm()) - 1.0) > tol)
            throw ValidationError("margin: embedding row " + std::to_string(i) +
                                  " is not unit-norm");
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        if (std::abs(static_cast<double>(w.row(i).norm()) - 1.0) > tol)
            throw ValidationError("margin: weight row " + std::to_string(i) +
                                  " is not unit-norm");
}

// Margin-shifted target logit (pre-scale) and its derivative w.r.t. the raw
// cosine. Cosine is clamped to +/-(1 - 1e-7) before the implicit arccos so
// the derivative stays finite.
template <typename Scalar>
std::pair<Scalar, Scalar> target_logit(Scalar cos_raw, const MarginConfig& cfg) {
    const Scalar kClamp = Scalar(1) - Scalar(1e-7);
    Scalar c = cos_raw;
    Scalar dc = Scalar(1);  // d(clamped)/d(raw)
    if (c > kClamp) {
        c = kClamp;
        dc = Scalar(0);
    } else if (c < -kClamp) {
        c = -kClamp;
        dc = Scalar(0);
    }
    const Scalar cos_m = Scalar(std::cos(cfg.margin));
    const Scalar sin_m = Scalar(std::sin(cfg.margin));
    const Scalar sin_t = std::sqrt(Scalar(1) - c * c);

    // theta + m <= pi  <=>  cos(theta) >= -cos(m)
    if (c >= -cos_m) {
        const Scalar phi = c * cos_m - sin_t * sin_m;
        const Scalar dphi = cos_m + c / sin_t * sin_m;
        return {phi, dphi * dc};
    }
    if (cfg.easy_margin) return {c, dc};
    return {c - Scalar(cfg.margin) * sin_m, dc};
}

}  // namespace detail

// Scaled-cosine logits with the additive angular margin applied to each
// sample's target class. Non-target entries are s*cos(theta) and do not
// depend on the margin at all.
template <typename Scalar>
Mat<Scalar> arcface_logits(const Mat<Scalar>& emb, const Mat<Scalar>& w,
                           const std::vector<int>& labels,
                           const MarginConfig& cfg) {
    detail::check_inputs(emb, w, labels, cfg);
    const Scalar s = Scalar(cfg.scale);
    Mat<Scalar> cos = emb * w.transpose();
    Mat<Scalar> logits = cos.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1)) * s;
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        logits(i, y) = s * detail::target_logit(cos(i, y), cfg).first;
    }
    return logits;
}

// Mean softmax cross-entropy over the margin logits. When grad_emb/grad_w
// are non-null they receive d(loss)/d(emb) and d(loss)/d(w); both are exact
// analytic gradients (verified against finite differences in the tests).
template <typename Scalar>
Scalar arcface_loss(const Mat<Scalar>& emb, const Mat<Scalar>& w,
                    const std::vector<int>& labels, const MarginConfig& cfg,
                    Mat<Scalar>* grad_emb = nullptr,
                    Mat<Scalar>* grad_w = nullptr) {
    detail::check_inputs(emb, w, labels, cfg);
    const Eigen::Index batch = emb.rows();
    const Scalar s = Scalar(cfg.scale);

    Mat<Scalar> cos = emb * w.transpose();
    Mat<Scalar> logits = cos.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1)) * s;
    std::vector<Scalar> dtarget(static_cast<std::size_t>(batch));
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        const auto [phi, dphi] = detail::target_logit(cos(i, y), cfg);
        logits(i, y) = s * phi;
        dtarget[static_cast<std::size_t>(i)] = dphi;
    }

    // Row-wise stable log-softmax.
    Scalar loss = Scalar(0);
    Mat<Scalar> dlogits;
    if (grad_emb || grad_w) dlogits.resize(batch, w.rows());
    for (Eigen::Index i = 0; i < batch; ++i) {
        const Scalar row_max = logits.row(i).maxCoeff();
        const Scalar sum_exp = (logits.row(i).array() - row_max).exp().sum();
        const Scalar lse = row_max + std::log(sum_exp);
        const int y = labels[static_cast<std::size_t>(i)];
        loss += lse - logits(i, y);
        if (grad_emb || grad_w) {
            dlogits.row(i) =
                ((logits.row(i).array() - lse).exp() / Scalar(batch)).matrix();
            dlogits(i, y) -= Scalar(1) / Scalar(batch);
        }
    }
    loss /= Scalar(batch);

    if (grad_emb || grad_w) {
        // d(logit)/d(cos): s off target, s * dphi on target; the [-1,1]
        // clamp contributes a zero subgradient outside its range.
        Mat<Scalar> dcos = dlogits * s;
        for (Eigen::Index i = 0; i < batch; ++i) {
            for (Eigen::Index j = 0; j < w.rows(); ++j)
                if (std::abs(cos(i, j)) > Scalar(1)) dcos(i, j) = Scalar(0);
            const int y = labels[static_cast<std::size_t>(i)];
            dcos(i, y) = dlogits(i, y) * s * dtarget[static_cast<std::size_t>(i)];
        }
        if (grad_emb) *grad_emb = dcos * w;
        if (grad_w) *grad_w = dcos.transpose() * emb;
    }
    return loss;
}

// L2-normalizes each row; rows with vanishing norm are rejected.
template <typename Scalar>
Mat<Scalar> normalize_rows(const Mat<Scalar>& m) {
    Mat<Scalar> out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const Scalar n = m.row(i).norm();
        if (n < std::numeric_limits<Scalar>::epsilon() * 100)
            throw ValidationError("normalize_rows: zero-norm row " +
                                  std::to_string(i));
        out.row(i) /= n;
    }
    return out;
}

}  // namespace facekit::margin
