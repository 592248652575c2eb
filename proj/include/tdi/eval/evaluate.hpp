#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdi/eval/metrics.hpp"
#include "tdi/train/trainer.hpp"

namespace tdi::eval {

// comparison set contains target-class pixels (CLI exit 5)
struct PurityViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalReport {
    std::map<std::string, double> metrics;
    std::map<std::string, long> counts; // per-metric sample counts
    std::string query_manifest;
    std::string comparison_manifest;
    std::string checkpoint_id;
    std::string extractor_id;
    std::string timestamp; // informational; excluded from determinism comparisons
    uint64_t config_hash = 0;

    bool same_results(const EvalReport& o) const {
        return metrics == o.metrics && counts == o.counts && query_manifest == o.query_manifest &&
               comparison_manifest == o.comparison_manifest &&
               checkpoint_id == o.checkpoint_id && extractor_id == o.extractor_id &&
               config_hash == o.config_hash;
    }
};

namespace detail {

// Class-wise removal: mask out every target-class pixel and inpaint.
template <class T>
std::vector<Image> removal_outputs(const nn::Generator<T>& gen, const DatasetManifest& m,
                                   uint16_t target_class) {
    std::vector<Image> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        SceneSample s = load_scene(m, e);
        Mask mask(s.seg.height, s.seg.width, 1);
        for (size_t i = 0; i < s.seg.data.size(); ++i)
            if (s.seg.data[i] == target_class) mask.data[i] = 0;
        out.push_back(train::remove_objects(gen, s.image, mask));
    }
    return out;
}

inline std::vector<Image> comparison_images(const DatasetManifest& m, uint16_t target_class) {
    std::vector<Image> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        SegmentationMap seg = load_seg_png(m.resolve(e.seg_path).string());
        if (class_pixel_count(seg, target_class) != 0)
            throw PurityViolation("comparison set entry contains target-class pixels: " + e.id);
        out.push_back(load_image_png(m.resolve(e.image_path).string()));
    }
    return out;
}

} // namespace detail

template <class T>
double fid_star(const nn::Generator<T>& gen, const DatasetManifest& query,
                const DatasetManifest& comparison, const Embedder& emb, uint16_t target_class) {
    FeatureSet fq = extract_features(emb, detail::removal_outputs(gen, query, target_class));
    FeatureSet fc = extract_features(emb, detail::comparison_images(comparison, target_class));
    return frechet_distance(fq, fc);
}

template <class T>
double u_ids_star(const nn::Generator<T>& gen, const DatasetManifest& query,
                  const DatasetManifest& comparison, const Embedder& emb, uint16_t target_class) {
    FeatureSet fq = extract_features(emb, detail::removal_outputs(gen, query, target_class));
    FeatureSet fc = extract_features(emb, detail::comparison_images(comparison, target_class));
    return u_ids(fq, fc);
}

struct EvalSettings {
    uint16_t target_class = 1;
    double coverage_lo = 0.05;
    double coverage_hi = 0.40;
    EmbedderConfig embedder;
    nn::FeatureNetConfig hrf;
};

template <class T>
EvalReport evaluate_run(const nn::Checkpoint<T>& ckpt,
                        const std::filesystem::path& test_manifest_path,
                        const std::filesystem::path& comparison_manifest_path,
                        const EvalSettings& settings = {}) {
    DatasetManifest test = load_manifest(test_manifest_path);
    DatasetManifest comparison = load_manifest(comparison_manifest_path);

    DatasetManifest filtered;
    filtered.class_table = test.class_table;
    filtered.split = test.split;
    filtered.base_dir = test.base_dir;
    for (const auto& e : test.entries) {
        SegmentationMap seg = load_seg_png(test.resolve(e.seg_path).string());
        double f = class_pixel_fraction(seg, settings.target_class);
        if (f >= settings.coverage_lo && f <= settings.coverage_hi) filtered.entries.push_back(e);
    }
    if (filtered.entries.empty())
        throw train::EmptySelection("evaluate: no test scenes in the coverage band");

    Embedder emb(settings.embedder);
    auto outputs = detail::removal_outputs(ckpt.generator, filtered, settings.target_class);
    auto comps = detail::comparison_images(comparison, settings.target_class);
    FeatureSet fq = extract_features(emb, outputs);
    FeatureSet fc = extract_features(emb, comps);

    EvalReport r;
    r.metrics["fid_star"] = frechet_distance(fq, fc);
    r.counts["fid_star"] = long(outputs.size());
    r.metrics["u_ids_star"] = u_ids(fq, fc);
    r.counts["u_ids_star"] = long(outputs.size());

    nn::FeatureNet<T> hrf(settings.hrf);
    double sum_psnr = 0, sum_ssim = 0, sum_percep = 0;
    long paired = 0;
    for (size_t i = 0; i < filtered.entries.size(); ++i) {
        const auto& e = filtered.entries[i];
        if (!e.gt_path) continue;
        Image gt = load_image_png(filtered.resolve(*e.gt_path).string());
        sum_psnr += psnr(outputs[i], gt);
        sum_ssim += ssim(outputs[i], gt);
        sum_percep += perceptual_distance(hrf, outputs[i], gt);
        ++paired;
    }
    if (paired > 0) {
        r.metrics["psnr"] = sum_psnr / double(paired);
        r.metrics["ssim"] = sum_ssim / double(paired);
        r.metrics["perceptual_distance"] = sum_percep / double(paired);
        r.counts["psnr"] = r.counts["ssim"] = r.counts["perceptual_distance"] = paired;
    }

    r.query_manifest = test_manifest_path.string();
    r.comparison_manifest = comparison_manifest_path.string();
    r.checkpoint_id = ckpt.meta.phase + "-step" + std::to_string(ckpt.meta.step) + "-seed" +
                      std::to_string(ckpt.meta.seed);
    r.extractor_id = emb.id();
    r.config_hash = emb.config_hash();
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    r.timestamp = buf;
    return r;
}

inline void save_report(const EvalReport& r, const std::filesystem::path& path) {
    nlohmann::json j;
    j["type"] = "tdi-eval-report";
    j["version"] = 1;
    j["metrics"] = r.metrics;
    j["counts"] = r.counts;
    j["query_manifest"] = r.query_manifest;
    j["comparison_manifest"] = r.comparison_manifest;
    j["checkpoint_id"] = r.checkpoint_id;
    j["extractor_id"] = r.extractor_id;
    j["timestamp"] = r.timestamp;
    j["config_hash"] = r.config_hash;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

inline EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report not found: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    if (!j.contains("type") || j["type"] != "tdi-eval-report")
        throw std::runtime_error("not an eval report: " + path.string());
    EvalReport r;
    r.metrics = j.at("metrics").get<std::map<std::string, double>>();
    r.counts = j.at("counts").get<std::map<std::string, long>>();
    r.query_manifest = j.at("query_manifest").get<std::string>();
    r.comparison_manifest = j.at("comparison_manifest").get<std::string>();
    r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
    r.extractor_id = j.at("extractor_id").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.config_hash = j.at("config_hash").get<uint64_t>();
    return r;
}

} // namespace tdi::eval
