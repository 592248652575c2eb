#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "tdi/core/image.hpp"
#include "tdi/nn/modules.hpp"

namespace tdi::loss {

using nn::Var;

enum class Phase { restorer, remover };

struct LossWeights {
    double lambda_ai = 7.0;
    double lambda_adv = 10.0;
    double lambda_pl = 30.0;
    double lambda_fm = 100.0;
    double lambda_gp = 0.001;
    Phase phase = Phase::remover;
};

struct LossBreakdown {
    double afterimage = 0;
    double adv_g = 0;
    double adv_d = 0;
    double hrfpl = 0;
    double fm = 0;
    double gp = 0;
    double total = 0;
};

// Sequential two-stage mean: mean over the elements of each map, then mean
// over maps.
template <class T>
Var<T> two_stage_mean(const std::vector<Var<T>>& maps) {
    if (maps.empty()) throw std::invalid_argument("two_stage_mean: empty map list");
    Var<T> acc = nn::scale(nn::mean_all(maps[0]), T(1) / T(maps.size()));
    for (size_t i = 1; i < maps.size(); ++i)
        acc = nn::add(acc, nn::scale(nn::mean_all(maps[i]), T(1) / T(maps.size())));
    return acc;
}

// Perceptual distance between two images through a frozen feature pyramid:
// two-stage mean of squared feature differences.
template <class T>
Var<T> feature_distance(const nn::FeatureNet<T>& hrf, const Var<T>& a, const Var<T>& b) {
    auto fa = hrf.forward(a);
    auto fb = hrf.forward(b);
    std::vector<Var<T>> sq;
    sq.reserve(fa.size());
    for (size_t i = 0; i < fa.size(); ++i) sq.push_back(nn::square(nn::sub(fa[i], fb[i])));
    return two_stage_mean(sq);
}

// Pushes remover outputs away from restorer outputs in feature space.
// Always <= 0; the restorer output is a constant guidance target.
template <class T>
Var<T> afterimage_loss(const nn::FeatureNet<T>& hrf, const Var<T>& out_remover,
                       const Var<T>& out_restorer) {
    return nn::scale(feature_distance(hrf, out_remover, nn::detach(out_restorer)), T(-1));
}

template <class T>
Var<T> hrf_perceptual_loss(const nn::FeatureNet<T>& hrf, const Var<T>& original,
                           const Var<T>& output) {
    return feature_distance(hrf, original, output);
}

// Non-saturating generator loss: mean over patches of -log sigmoid(logit).
template <class T>
Var<T> generator_adv_loss(const nn::Discriminator<T>& disc, const Var<T>& out_remover) {
    auto d = disc.forward(out_remover);
    return nn::mean_all(nn::softplus(nn::scale(d.logits, T(-1))));
}

namespace detail {

// nearest-neighbor downsample of the pixel mask to patch-logit resolution,
// replicated across the batch
template <class T>
nn::Tensor<T> mask_at_logit_res(const Mask& mask, int n, int h, int w) {
    nn::Tensor<T> t(n, 1, h, w);
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int sy = std::min(mask.height - 1, y * mask.height / h);
                int sx = std::min(mask.width - 1, x * mask.width / w);
                t.at(i, 0, y, x) = T(mask.at(sy, sx));
            }
    return t;
}

} // namespace detail

// Patch discriminator loss: real patches toward "real"; known-region patches
// of the composited remover output toward "real"; hole-region patches of the
// remover output, and of the restorer output when given, toward "fake".
// Callers pass detached generator outputs when only D is being trained.
template <class T>
Var<T> discriminator_loss(const nn::Discriminator<T>& disc, const Var<T>& real,
                          const Var<T>& out_remover, const Var<T>* out_restorer,
                          const Mask& mask) {
    auto d_real = disc.forward(real);
    auto d_fake = disc.forward(out_remover);
    if (!d_real.logits->val.same_shape(d_fake.logits->val))
        throw std::invalid_argument("discriminator_loss: logit map mismatch");
    const auto& l = d_fake.logits->val;
    nn::Tensor<T> md = detail::mask_at_logit_res<T>(mask, l.n, l.h, l.w);
    nn::Tensor<T> hole = md;
    for (auto& v : hole.v) v = T(1) - v;

    // -E[log D(I)]
    Var<T> loss = nn::mean_all(nn::softplus(nn::scale(d_real.logits, T(-1))));
    // known-region remover patches toward real: -log D(hat I) ⊙ m
    Var<T> fake_known = nn::mul_const(nn::softplus(nn::scale(d_fake.logits, T(-1))), md);
    // hole-region remover patches toward fake: -log(1 - D(hat I)) ⊙ (1-m)
    Var<T> fake_hole = nn::mul_const(nn::softplus(d_fake.logits), hole);
    Var<T> masked = nn::add(fake_known, fake_hole);
    if (out_restorer) {
        // hole-region restorer patches toward fake: -log(1 - D(hat I_rest)) ⊙ (1-m)
        auto d_rest = disc.forward(nn::detach(*out_restorer));
        masked = nn::add(masked, nn::mul_const(nn::softplus(d_rest.logits), hole));
    }
    return nn::add(loss, nn::mean_all(masked));
}

// (1/T) sum_i L2(D_i(I), D_i(hat I)) / N_i; real features are constants.
template <class T>
Var<T> feature_matching_loss(const nn::Discriminator<T>& disc, const Var<T>& real,
                             const Var<T>& output) {
    auto d_real = disc.forward(nn::detach(real));
    auto d_fake = disc.forward(output);
    std::vector<Var<T>> sq;
    sq.reserve(d_real.features.size());
    for (size_t i = 0; i < d_real.features.size(); ++i)
        sq.push_back(nn::square(nn::sub(nn::detach(d_real.features[i]), d_fake.features[i])));
    return two_stage_mean(sq); // per-layer mean divides by N_i, then 1/T
}

// Squared norm of the input gradient of the summed patch logits, averaged
// over the batch. Returns the value and the input gradient (the trainer uses
// the gradient for the penalty's parameter update).
template <class T>
struct GradientPenalty {
    T value;
    nn::Tensor<T> input_grad;
};

template <class T>
GradientPenalty<T> gradient_penalty(const std::function<Var<T>(const Var<T>&)>& logits_fn,
                                    const nn::Tensor<T>& real) {
    Var<T> x = nn::leaf(real, /*needs_grad=*/true);
    Var<T> s = nn::sum_all(logits_fn(x));
    nn::backward(s);
    x->ensure_grad();
    T total = T(0);
    for (T g : x->grad.v) total += g * g;
    return {total / T(real.n), x->grad};
}

template <class T>
GradientPenalty<T> gradient_penalty(const nn::Discriminator<T>& disc, const nn::Tensor<T>& real) {
    return gradient_penalty<T>([&disc](const Var<T>& x) { return disc.forward(x).logits; }, real);
}

struct LossTerms {
    std::optional<double> afterimage;
    double adv_g = 0;
    double adv_d = 0;
    double hrfpl = 0;
    double fm = 0;
    double gp = 0;
};

// Weighted total of the per-step objective. The discriminator term is
// reported but not part of the generator-side total.
inline LossBreakdown total_loss(const LossWeights& w, const LossTerms& terms) {
    if (w.phase == Phase::restorer && terms.afterimage.has_value())
        throw std::invalid_argument("total_loss: afterimage term is remover-phase only");
    LossBreakdown b;
    b.afterimage = terms.afterimage.value_or(0.0);
    b.adv_g = terms.adv_g;
    b.adv_d = terms.adv_d;
    b.hrfpl = terms.hrfpl;
    b.fm = terms.fm;
    b.gp = terms.gp;
    b.total = w.lambda_ai * b.afterimage + w.lambda_adv * b.adv_g + w.lambda_pl * b.hrfpl +
              w.lambda_fm * b.fm + w.lambda_gp * b.gp;
    return b;
}

} // namespace tdi::loss
