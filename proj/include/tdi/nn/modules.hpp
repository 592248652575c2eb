#pragma once

#include <string>
#include <vector>

#include "tdi/core/image.hpp"
#include "tdi/core/rng.hpp"
#include "tdi/nn/autodiff.hpp"

namespace tdi::nn {

template <class T>
struct NamedParam {
    std::string name;
    Var<T> var;
};

template <class T>
struct Conv2dLayer {
    Var<T> w, b;
    ConvSpec<T> spec;

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, spec); }
};

// He-style init; trainable unless frozen.
template <class T>
Conv2dLayer<T> make_conv(int in_c, int out_c, int k, int stride, int pad, int dil, Rng& rng,
                         bool trainable = true) {
    Tensor<T> w(out_c, in_c, k, k);
    T std_dev = std::sqrt(T(2) / T(in_c * k * k));
    for (auto& v : w.v) v = T(rng.normal()) * std_dev;
    Tensor<T> b(1, out_c, 1, 1, T(0));
    return {leaf(std::move(w), trainable), leaf(std::move(b), trainable),
            ConvSpec<T>{stride, pad, dil}};
}

template <class T>
void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
             const Conv2dLayer<T>& layer) {
    out.push_back({prefix + ".w", layer.w});
    out.push_back({prefix + ".b", layer.b});
}

// ---------------------------------------------------------------------------
// Generator: reduced Lama-style encoder / residual bottleneck / decoder with
// optional global spectral residual blocks.

struct GeneratorConfig {
    int base_width = 32;
    int n_down = 2;
    int n_blocks = 4;
    bool spectral_blocks = true;

    bool operator==(const GeneratorConfig&) const = default;
};

template <class T>
class Generator {
public:
    Generator() = default;

    Generator(const GeneratorConfig& cfg, uint64_t seed) : cfg_(cfg) {
        if (cfg.base_width < 8) throw std::invalid_argument("generator: base_width must be >= 8");
        if (cfg.n_blocks < 1) throw std::invalid_argument("generator: n_blocks must be >= 1");
        Rng rng(seed ^ 0x67656e65726174ULL);
        int w = cfg.base_width;
        stem_ = make_conv<T>(4, w, 3, 1, 1, 1, rng);
        for (int i = 0; i < cfg.n_down; ++i) {
            downs_.push_back(make_conv<T>(w, w * 2, 3, 2, 1, 1, rng));
            w *= 2;
        }
        for (int i = 0; i < cfg.n_blocks; ++i) {
            Block blk;
            if (cfg.spectral_blocks) {
                blk.local = make_conv<T>(w / 2, w / 2, 3, 1, 1, 1, rng);
                blk.freq = make_conv<T>(w, w, 1, 1, 0, 1, rng); // on re/im pairs of w/2 channels
            } else {
                blk.local = make_conv<T>(w, w, 3, 1, 1, 1, rng);
            }
            blk.merge = make_conv<T>(w, w, 3, 1, 1, 1, rng);
            blocks_.push_back(std::move(blk));
        }
        for (int i = 0; i < cfg.n_down; ++i) {
            ups_.push_back(make_conv<T>(w, w / 2, 3, 1, 1, 1, rng));
            w /= 2;
        }
        head_ = make_conv<T>(w, 3, 3, 1, 1, 1, rng);
    }

    const GeneratorConfig& config() const { return cfg_; }

    // masked: (N,3,H,W) = I ⊙ m; hole: (N,1,H,W) = 1 - m.
    // Output in [0,1] via sigmoid.
    Var<T> forward(const Var<T>& masked, const Var<T>& hole) const {
        const int H = masked->val.h, W = masked->val.w;
        const int align = 1 << cfg_.n_down;
        if (H % align != 0 || W % align != 0)
            throw std::invalid_argument("generator: spatial size must be a multiple of 2^n_down");
        Var<T> x = leaky_relu(stem_(concat_c(masked, hole)));
        for (const auto& d : downs_) x = leaky_relu(d(x));
        for (const auto& blk : blocks_) {
            Var<T> y;
            if (cfg_.spectral_blocks) {
                const int c = x->val.c;
                Var<T> xl = slice_c(x, 0, c / 2);
                Var<T> xg = slice_c(x, c / 2, c);
                Var<T> yl = blk.local(xl);
                Var<T> yg = idft2(leaky_relu(blk.freq(dft2(xg))));
                y = leaky_relu(concat_c(yl, yg));
            } else {
                y = leaky_relu(blk.local(x));
            }
            x = add(x, blk.merge(y));
        }
        for (const auto& u : ups_) x = leaky_relu(u(upsample2x(x)));
        return sigmoid(head_(x));
    }

    std::vector<NamedParam<T>> params() const {
        std::vector<NamedParam<T>> out;
        collect(out, "g.stem", stem_);
        for (size_t i = 0; i < downs_.size(); ++i)
            collect(out, "g.down" + std::to_string(i), downs_[i]);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            std::string p = "g.block" + std::to_string(i);
            collect(out, p + ".local", blocks_[i].local);
            if (cfg_.spectral_blocks) collect(out, p + ".freq", blocks_[i].freq);
            collect(out, p + ".merge", blocks_[i].merge);
        }
        for (size_t i = 0; i < ups_.size(); ++i) collect(out, "g.up" + std::to_string(i), ups_[i]);
        collect(out, "g.head", head_);
        return out;
    }

private:
    struct Block {
        Conv2dLayer<T> local;
        Conv2dLayer<T> freq;
        Conv2dLayer<T> merge;
    };

    GeneratorConfig cfg_;
    Conv2dLayer<T> stem_;
    std::vector<Conv2dLayer<T>> downs_;
    std::vector<Block> blocks_;
    std::vector<Conv2dLayer<T>> ups_;
    Conv2dLayer<T> head_;
};

// ---------------------------------------------------------------------------
// Patch discriminator exposing per-layer features for feature matching.

struct DiscriminatorConfig {
    int base_width = 32;
    int n_layers = 4;

    bool operator==(const DiscriminatorConfig&) const = default;
};

template <class T>
struct DiscriminatorOut {
    Var<T> logits;               // (N,1,h,w) patch logits
    std::vector<Var<T>> features; // T post-activation maps
};

template <class T>
class Discriminator {
public:
    Discriminator() = default;

    Discriminator(const DiscriminatorConfig& cfg, uint64_t seed) : cfg_(cfg) {
        if (cfg.n_layers < 3) throw std::invalid_argument("discriminator: n_layers must be >= 3");
        Rng rng(seed ^ 0x64697363ULL);
        int in_c = 3, w = cfg.base_width;
        for (int i = 0; i < cfg.n_layers; ++i) {
            // first three layers downsample; any further layers keep resolution
            int stride = i < 3 ? 2 : 1;
            layers_.push_back(make_conv<T>(in_c, w, 4, stride, 1, 1, rng));
            in_c = w;
            if (i < 2) w *= 2;
        }
        head_ = make_conv<T>(in_c, 1, 3, 1, 1, 1, rng);
    }

    const DiscriminatorConfig& config() const { return cfg_; }

    DiscriminatorOut<T> forward(const Var<T>& image) const {
        DiscriminatorOut<T> out;
        Var<T> x = image;
        for (const auto& l : layers_) {
            x = leaky_relu(l(x));
            out.features.push_back(x);
        }
        out.logits = head_(x);
        return out;
    }

    std::vector<NamedParam<T>> params() const {
        std::vector<NamedParam<T>> out;
        for (size_t i = 0; i < layers_.size(); ++i)
            collect(out, "d.layer" + std::to_string(i), layers_[i]);
        collect(out, "d.head", head_);
        return out;
    }

private:
    DiscriminatorConfig cfg_;
    std::vector<Conv2dLayer<T>> layers_;
    Conv2dLayer<T> head_;
};

// ---------------------------------------------------------------------------
// Frozen high-receptive-field feature pyramid (perceptual-loss backbone).
// Fixed-seed random dilated convolutions; never trained.

struct FeatureNetConfig {
    int base_width = 12;
    int n_stages = 3;
    uint64_t seed = 0x68726620ULL;

    bool operator==(const FeatureNetConfig&) const = default;
};

template <class T>
class FeatureNet {
public:
    FeatureNet() : FeatureNet(FeatureNetConfig{}) {}

    explicit FeatureNet(const FeatureNetConfig& cfg) : cfg_(cfg) {
        if (cfg.n_stages < 3) throw std::invalid_argument("feature net: n_stages must be >= 3");
        Rng rng(cfg.seed);
        int in_c = 3;
        for (int i = 0; i < cfg.n_stages; ++i) {
            int w = cfg.base_width * (i + 1);
            int dil = 1 << std::min(i, 3); // receptive field grows per stage
            stages_.push_back(make_conv<T>(in_c, w, 3, 2, dil, dil, rng, /*trainable=*/false));
            in_c = w;
        }
    }

    const FeatureNetConfig& config() const { return cfg_; }

    std::vector<Var<T>> forward(const Var<T>& image) const {
        std::vector<Var<T>> maps;
        Var<T> x = image;
        for (const auto& s : stages_) {
            x = leaky_relu(s(x));
            maps.push_back(x);
        }
        return maps;
    }

    std::vector<NamedParam<T>> params() const {
        std::vector<NamedParam<T>> out;
        for (size_t i = 0; i < stages_.size(); ++i)
            collect(out, "hrf.stage" + std::to_string(i), stages_[i]);
        return out;
    }

private:
    FeatureNetConfig cfg_;
    std::vector<Conv2dLayer<T>> stages_;
};

// ---------------------------------------------------------------------------
// helpers shared by trainer / evaluation

template <class T>
uint64_t param_checksum(const std::vector<NamedParam<T>>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        h = fnv1a(p.name.data(), p.name.size(), h);
        h = fnv1a(p.var->val.v.data(), p.var->val.v.size() * sizeof(T), h);
    }
    return h;
}

template <class T>
void zero_param_grads(const std::vector<NamedParam<T>>& params) {
    for (const auto& p : params) {
        p.var->ensure_grad();
        p.var->zero_grad();
    }
}

// Image <-> tensor bridges (single sample and batch assembly).
template <class T>
Tensor<T> image_to_tensor(const Image& img) {
    Tensor<T> t(1, 3, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = T(img.at(y, x, c));
    return t;
}

template <class T>
Image tensor_to_image(const Tensor<T>& t, int sample = 0) {
    Image img(t.h, t.w);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int c = 0; c < 3; ++c) {
                T v = t.at(sample, c, y, x);
                img.at(y, x, c) = float(std::clamp(double(v), 0.0, 1.0));
            }
    return img;
}

template <class T>
Tensor<T> mask_to_tensor(const Mask& m) {
    Tensor<T> t(1, 1, m.height, m.width);
    for (size_t i = 0; i < m.data.size(); ++i) t.v[i] = T(m.data[i]);
    return t;
}

} // namespace tdi::nn
