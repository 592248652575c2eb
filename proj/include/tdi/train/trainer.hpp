#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdi/core/manifest.hpp"
#include "tdi/curate/curation.hpp"
#include "tdi/loss/losses.hpp"
#include "tdi/nn/adam.hpp"
#include "tdi/nn/checkpoint.hpp"

namespace tdi::train {

enum class TrainPhase { restorer, remover, baseline };

inline const char* phase_name(TrainPhase p) {
    switch (p) {
        case TrainPhase::restorer: return "restorer";
        case TrainPhase::remover: return "remover";
        default: return "baseline";
    }
}

// empty curated dataset (CLI exit 3)
struct EmptySelection : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// missing or incompatible upstream artifact (CLI exit 4)
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    TrainPhase phase = TrainPhase::restorer;
    int epochs = 50;
    long step_limit = -1; // caps total steps when >= 0
    int batch_size = 1;
    double lr_discriminator = 0.001;
    double lr_generator = 0.00001;
    uint64_t seed = 0;
    uint16_t target_class = 1;
    std::filesystem::path manifest_path;
    std::filesystem::path mask_bank_path; // remover / baseline phases
    std::filesystem::path restorer_ckpt;  // remover phase
    std::filesystem::path checkpoint_dir;
    curate::CurationRule rule;
    loss::LossWeights weights;
    nn::GeneratorConfig gen_config;
    nn::DiscriminatorConfig disc_config;
    nn::FeatureNetConfig hrf_config;
    // ablation switches: the adversarial stack as a whole (D, adv, FM, GP),
    // the restorer-guided push-away term, and the restorer-aware extension of
    // the discriminator loss (restorer outputs scored as fake)
    bool use_adversarial = true;
    bool use_afterimage = true;
    bool use_restorer_fake = true;
    // linearly anneal both learning rates to zero over the run; stabilizes
    // the late phase of adversarial training, where a few full-rate steps
    // can throw a converged generator into a saturated collapse
    bool lr_decay = false;
};

struct TrainResult {
    std::filesystem::path checkpoint_path;
    std::filesystem::path log_path;
    long steps = 0;
    uint64_t generator_checksum = 0;
    uint64_t restorer_checksum_before = 0;
    uint64_t restorer_checksum_after = 0;
    uint64_t hrf_checksum_before = 0;
    uint64_t hrf_checksum_after = 0;
    loss::LossBreakdown final_losses;
};

namespace detail {

inline void validate(const TrainConfig& cfg) {
    if (cfg.lr_discriminator <= 0 || cfg.lr_generator <= 0)
        throw std::invalid_argument("train: learning rates must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.epochs < 1 && cfg.step_limit < 0)
        throw std::invalid_argument("train: need epochs >= 1 or a step limit");
    if (cfg.phase == TrainPhase::remover && cfg.use_afterimage && cfg.restorer_ckpt.empty())
        throw MissingArtifact("remover phase requires a restorer checkpoint");
}

template <class T>
struct PreparedScene {
    nn::Tensor<T> real;       // (1,3,H,W)
    InstanceMap inst;         // restorer-phase mask source
    std::vector<uint16_t> target_instances;
    std::string id;
};

template <class T>
std::vector<PreparedScene<T>> load_scenes(const DatasetManifest& m, uint16_t target_class,
                                          TrainPhase phase) {
    std::vector<PreparedScene<T>> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        SceneSample s = load_scene(m, e);
        PreparedScene<T> p;
        p.real = nn::image_to_tensor<T>(s.image);
        p.id = s.id;
        if (phase == TrainPhase::restorer) {
            p.inst = s.inst;
            for (const auto& [iid, cls] : s.inst.instance_class)
                if (cls == target_class) p.target_instances.push_back(iid);
        }
        out.push_back(std::move(p));
    }
    return out;
}

template <class T>
void mask_tensors(const Mask& mask, nn::Tensor<T>& m3, nn::Tensor<T>& hole) {
    const int H = mask.height, W = mask.width;
    m3 = nn::Tensor<T>(1, 3, H, W);
    hole = nn::Tensor<T>(1, 1, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            T m = T(mask.at(y, x));
            hole.at(0, 0, y, x) = T(1) - m;
            for (int c = 0; c < 3; ++c) m3.at(0, c, y, x) = m;
        }
}

// Parameter gradient of the gradient penalty via a central finite difference
// along the input-gradient direction; exact value comes from the analytic
// input gradient, only the second-order parameter coupling is approximated.
template <class T>
std::vector<nn::Tensor<T>> gp_param_grads(const nn::Discriminator<T>& disc,
                                          const nn::Tensor<T>& real,
                                          const nn::Tensor<T>& input_grad) {
    auto params = disc.params();
    T gnorm = T(0);
    for (T g : input_grad.v) gnorm += g * g;
    gnorm = std::sqrt(gnorm);
    std::vector<nn::Tensor<T>> out(params.size());
    for (size_t i = 0; i < params.size(); ++i)
        out[i] = nn::Tensor<T>(params[i].var->val.n, params[i].var->val.c, params[i].var->val.h,
                               params[i].var->val.w, T(0));
    if (gnorm < T(1e-12)) return out;
    const T delta = T(1e-3);
    const T eps = delta / gnorm;
    auto eval_side = [&](T sign, std::vector<nn::Tensor<T>>& dst) {
        nn::Tensor<T> x = real;
        for (size_t k = 0; k < x.size(); ++k) x.v[k] += sign * eps * input_grad.v[k];
        nn::zero_param_grads(params);
        nn::backward(nn::sum_all(disc.forward(nn::constant(std::move(x))).logits));
        for (size_t i = 0; i < params.size(); ++i) dst[i] = params[i].var->grad;
    };
    std::vector<nn::Tensor<T>> plus(params.size()), minus(params.size());
    eval_side(T(1), plus);
    eval_side(T(-1), minus);
    nn::zero_param_grads(params);
    const T scale = T(1) / (T(real.n) * T(2) * eps);
    for (size_t i = 0; i < params.size(); ++i)
        for (size_t k = 0; k < out[i].size(); ++k)
            out[i].v[k] = (plus[i].v[k] - minus[i].v[k]) * scale;
    return out;
}

} // namespace detail

// Composited inference: only mask-zero pixels are generated.
template <class T>
Image remove_objects(const nn::Generator<T>& gen, const Image& input, const Mask& mask) {
    if (input.height != mask.height || input.width != mask.width)
        throw std::invalid_argument("remove_objects: size mismatch");
    nn::Tensor<T> real = nn::image_to_tensor<T>(input);
    nn::Tensor<T> m3, hole;
    detail::mask_tensors(mask, m3, hole);
    nn::Tensor<T> masked = real;
    for (size_t i = 0; i < masked.size(); ++i) masked.v[i] *= m3.v[i];
    nn::Var<T> out = gen.forward(nn::constant(std::move(masked)), nn::constant(std::move(hole)));
    return composite(input, nn::tensor_to_image(out->val), mask);
}

template <class T>
Image remove_objects(const nn::Checkpoint<T>& ckpt, const SceneSample& sample, const Mask& mask) {
    return remove_objects(ckpt.generator, sample.image, mask);
}

// Single training engine behind the three phase entry points. One
// discriminator step then one generator step per batch; strictly sequential
// and bit-reproducible for a fixed seed.
template <class T>
TrainResult run_training(const TrainConfig& cfg) {
    detail::validate(cfg);

    DatasetManifest manifest = load_manifest(cfg.manifest_path);
    DatasetManifest selected;
    switch (cfg.phase) {
        case TrainPhase::restorer:
            selected = curate::select_restorer_images(manifest, cfg.target_class, cfg.rule);
            break;
        case TrainPhase::remover:
            selected = curate::select_remover_images(manifest, cfg.target_class);
            break;
        case TrainPhase::baseline: selected = manifest; break;
    }
    if (selected.entries.empty())
        throw EmptySelection(std::string("train: no images selected for phase ") +
                             phase_name(cfg.phase));

    curate::MaskBank bank;
    if (cfg.phase != TrainPhase::restorer) {
        if (cfg.mask_bank_path.empty())
            throw MissingArtifact("train: this phase requires a mask bank");
        bank = curate::load_mask_bank(cfg.mask_bank_path);
        if (bank.masks.empty()) throw MissingArtifact("train: mask bank is empty");
    }

    nn::Generator<T> gen(cfg.gen_config, cfg.seed);
    nn::Discriminator<T> disc(cfg.disc_config, cfg.seed);
    nn::FeatureNet<T> hrf(cfg.hrf_config);

    std::optional<nn::Checkpoint<T>> restorer;
    const bool guided = cfg.phase == TrainPhase::remover &&
                        (cfg.use_afterimage ||
                         (cfg.use_adversarial && cfg.use_restorer_fake));
    if (guided) {
        if (!std::filesystem::exists(cfg.restorer_ckpt))
            throw MissingArtifact("restorer checkpoint not found: " + cfg.restorer_ckpt.string());
        restorer = nn::load_checkpoint<T>(cfg.restorer_ckpt);
        if (restorer->meta.phase != "restorer")
            throw MissingArtifact("checkpoint is not a restorer: " + cfg.restorer_ckpt.string());
        for (auto& p : restorer->generator.params()) p.var->needs_grad = false;
    }

    TrainResult res;
    res.hrf_checksum_before = nn::param_checksum(hrf.params());
    if (restorer) res.restorer_checksum_before = nn::param_checksum(restorer->generator.params());

    auto scenes = detail::load_scenes<T>(selected, cfg.target_class, cfg.phase);
    const int H = scenes[0].real.h, W = scenes[0].real.w;

    nn::Adam<T> opt_g(gen.params(), T(cfg.lr_generator));
    nn::Adam<T> opt_d(disc.params(), T(cfg.lr_discriminator));
    auto d_params = disc.params();

    std::filesystem::create_directories(cfg.checkpoint_dir);
    res.log_path = cfg.checkpoint_dir / "train_log.tsv";
    std::ofstream log(res.log_path);
    log << "step\tepoch\tphase\tmask_kind\tlr_d\tlr_g\tafterimage\tadv_g\tadv_d\thrfpl\tfm\tgp\ttotal\n";

    const long n = long(scenes.size());
    const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    long total_steps = long(cfg.epochs) * steps_per_epoch;
    if (cfg.step_limit >= 0) total_steps = std::min(total_steps, cfg.step_limit);
    if (cfg.step_limit >= 0 && cfg.epochs < 1)
        total_steps = cfg.step_limit;

    long step = 0;
    std::vector<long> order(static_cast<size_t>(n));
    for (long epoch = 0; step < total_steps; ++epoch) {
        for (long i = 0; i < n; ++i) order[size_t(i)] = i;
        Rng shuf = Rng::derive(cfg.seed ^ 0x7368756666ULL, uint64_t(epoch));
        for (long i = n - 1; i > 0; --i)
            std::swap(order[size_t(i)], order[size_t(shuf.uniform_int(0, i))]);

        for (long b = 0; b < steps_per_epoch && step < total_steps; ++b, ++step) {
            double lr_scale = 1.0;
            if (cfg.lr_decay && total_steps > 0) {
                lr_scale = 1.0 - double(step) / double(total_steps);
                opt_g.set_learning_rate(T(cfg.lr_generator * lr_scale));
                opt_d.set_learning_rate(T(cfg.lr_discriminator * lr_scale));
            }
            struct SampleGraph {
                nn::Var<T> comp;               // composited generator output
                nn::Var<T> comp_rest;          // composited restorer guidance
                nn::Tensor<T> real;
                Mask mask;
                bool class_shaped = false;
                bool has_guidance = false;
            };
            std::vector<SampleGraph> batch;
            std::string kind = "-";

            for (int k = 0; k < cfg.batch_size; ++k) {
                const auto& scene = scenes[size_t(order[size_t((b * cfg.batch_size + k) % n)])];
                SampleGraph sg;
                sg.real = scene.real;
                uint64_t mseed = Rng::derive(cfg.seed, uint64_t(step) * 131 + uint64_t(k) + 1)
                                     .next_u64();
                if (cfg.phase == TrainPhase::restorer) {
                    sg.mask = curate::gen_restorer_mask(scene.inst, scene.target_instances,
                                                        cfg.rule, mseed)
                                  .mask;
                    kind = "instance";
                } else {
                    auto tm = curate::sample_training_mask(bank, H, cfg.rule, mseed);
                    sg.mask = std::move(tm.mask);
                    sg.class_shaped = tm.kind == curate::MaskKind::class_shaped;
                    kind = sg.class_shaped ? "class_shaped" : "irregular";
                }
                nn::Tensor<T> m3, hole;
                detail::mask_tensors(sg.mask, m3, hole);
                nn::Tensor<T> masked = sg.real;
                for (size_t i2 = 0; i2 < masked.size(); ++i2) masked.v[i2] *= m3.v[i2];
                nn::Var<T> vh = nn::constant(hole);
                nn::Var<T> out = gen.forward(nn::constant(masked), vh);
                sg.comp = nn::mask_mix(out, m3, sg.real);
                sg.has_guidance = guided && sg.class_shaped;
                if (sg.has_guidance) {
                    nn::Var<T> out_r =
                        restorer->generator.forward(nn::constant(std::move(masked)), vh);
                    sg.comp_rest = nn::constant(nn::mask_mix(out_r, m3, sg.real)->val);
                }
                batch.push_back(std::move(sg));
            }

            const T inv_b = T(1) / T(batch.size());
            loss::LossBreakdown avg;
            bool any_afterimage = false;

            if (cfg.use_adversarial) {
                opt_d.zero_grad();
                std::vector<nn::Tensor<T>> gp_grads;
                for (auto& sg : batch) {
                    auto gp = loss::gradient_penalty(disc, sg.real);
                    avg.gp += double(gp.value) * double(inv_b);
                    auto pg = detail::gp_param_grads(disc, sg.real, gp.input_grad);
                    if (gp_grads.empty())
                        gp_grads = std::move(pg);
                    else
                        for (size_t i2 = 0; i2 < pg.size(); ++i2)
                            for (size_t k2 = 0; k2 < pg[i2].size(); ++k2)
                                gp_grads[i2].v[k2] += pg[i2].v[k2];
                }
                for (auto& sg : batch) {
                    nn::Var<T> dl = loss::discriminator_loss(
                        disc, nn::constant(sg.real), nn::detach(sg.comp),
                        sg.has_guidance && cfg.use_restorer_fake ? &sg.comp_rest : nullptr,
                        sg.mask);
                    avg.adv_d += double(dl->val.v[0]) * double(inv_b);
                    nn::backward(nn::scale(dl, inv_b));
                }
                const T gp_w = T(cfg.weights.lambda_gp) * inv_b;
                for (size_t i2 = 0; i2 < d_params.size(); ++i2) {
                    d_params[i2].var->ensure_grad();
                    for (size_t k2 = 0; k2 < gp_grads[i2].size(); ++k2)
                        d_params[i2].var->grad.v[k2] += gp_w * gp_grads[i2].v[k2];
                }
                opt_d.step();
            }

            opt_g.zero_grad();
            if (cfg.use_adversarial) opt_d.zero_grad();
            for (auto& sg : batch) {
                nn::Var<T> total = nn::scale(
                    loss::hrf_perceptual_loss(hrf, nn::constant(sg.real), sg.comp),
                    T(cfg.weights.lambda_pl));
                avg.hrfpl += double(total->val.v[0]) / cfg.weights.lambda_pl * double(inv_b);
                if (cfg.use_adversarial) {
                    nn::Var<T> adv = loss::generator_adv_loss(disc, sg.comp);
                    avg.adv_g += double(adv->val.v[0]) * double(inv_b);
                    total = nn::add(total, nn::scale(adv, T(cfg.weights.lambda_adv)));
                    nn::Var<T> fm =
                        loss::feature_matching_loss(disc, nn::constant(sg.real), sg.comp);
                    avg.fm += double(fm->val.v[0]) * double(inv_b);
                    total = nn::add(total, nn::scale(fm, T(cfg.weights.lambda_fm)));
                }
                if (sg.has_guidance && cfg.use_afterimage) {
                    nn::Var<T> ai = loss::afterimage_loss(hrf, sg.comp, sg.comp_rest);
                    avg.afterimage += double(ai->val.v[0]) * double(inv_b);
                    total = nn::add(total, nn::scale(ai, T(cfg.weights.lambda_ai)));
                    any_afterimage = true;
                }
                nn::backward(nn::scale(total, inv_b));
            }
            opt_g.step();

            loss::LossWeights w = cfg.weights;
            w.phase = cfg.phase == TrainPhase::remover ? loss::Phase::remover
                                                       : loss::Phase::restorer;
            loss::LossTerms terms;
            if (any_afterimage) terms.afterimage = avg.afterimage;
            terms.adv_g = avg.adv_g;
            terms.adv_d = avg.adv_d;
            terms.hrfpl = avg.hrfpl;
            terms.fm = avg.fm;
            terms.gp = avg.gp;
            res.final_losses = loss::total_loss(w, terms);

            log << step << '\t' << epoch << '\t' << phase_name(cfg.phase) << '\t' << kind << '\t'
                << cfg.lr_discriminator * lr_scale << '\t' << cfg.lr_generator * lr_scale << '\t'
                << res.final_losses.afterimage << '\t' << res.final_losses.adv_g << '\t'
                << res.final_losses.adv_d << '\t' << res.final_losses.hrfpl << '\t'
                << res.final_losses.fm << '\t' << res.final_losses.gp << '\t'
                << res.final_losses.total << '\n';
        }
    }
    log.flush();

    res.steps = step;
    res.generator_checksum = nn::param_checksum(gen.params());
    res.hrf_checksum_after = nn::param_checksum(hrf.params());
    if (restorer) res.restorer_checksum_after = nn::param_checksum(restorer->generator.params());

    nn::CheckpointMeta meta;
    meta.phase = phase_name(cfg.phase);
    meta.step = step;
    meta.seed = cfg.seed;
    meta.gen_config = cfg.gen_config;
    meta.disc_config = cfg.disc_config;
    meta.extra = {{"target_class", cfg.target_class},
                  {"use_adversarial", cfg.use_adversarial},
                  {"use_afterimage", cfg.use_afterimage},
                  {"final_total", res.final_losses.total}};
    res.checkpoint_path = cfg.checkpoint_dir / "checkpoint.bin";
    nn::save_checkpoint(res.checkpoint_path, meta, gen.params(), disc.params());
    return res;
}

template <class T>
TrainResult train_restorer(TrainConfig cfg) {
    cfg.phase = TrainPhase::restorer;
    cfg.use_afterimage = false;
    return run_training<T>(cfg);
}

template <class T>
TrainResult train_remover(TrainConfig cfg) {
    cfg.phase = TrainPhase::remover;
    return run_training<T>(cfg);
}

template <class T>
TrainResult train_baseline(TrainConfig cfg) {
    cfg.phase = TrainPhase::baseline;
    cfg.use_afterimage = false;
    cfg.restorer_ckpt.clear();
    return run_training<T>(cfg);
}

} // namespace tdi::train
