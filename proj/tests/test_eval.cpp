#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "tdi/eval/evaluate.hpp"
#include "tdi/synth/world.hpp"

using namespace tdi;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path root;
    fs::path test_manifest;       // mixed scenes, train-split held-out analog
    fs::path comparison_manifest; // verified target-free
    fs::path impure_manifest;     // deliberately contains a target image
    DatasetManifest test_m, comparison_m;
    nn::Checkpoint<float> ckpt;

    Fixture() {
        root = fs::temp_directory_path() / "tdi_eval_fixture";
        fs::remove_all(root);
        synth::SynthConfig scfg;
        scfg.seed = 1234;
        DatasetManifest all = synth::generate_dataset(scfg, 90, root / "data", "test");
        test_m = all;
        test_manifest = root / "data" / "manifest.jsonl";

        comparison_m = curate::select_remover_images(all, scfg.target_class);
        REQUIRE(comparison_m.entries.size() >= 10);
        comparison_manifest = root / "data" / "comparison.jsonl";
        save_manifest(comparison_m, comparison_manifest);

        DatasetManifest impure = comparison_m;
        auto restorer_set = curate::select_restorer_images(all, scfg.target_class);
        REQUIRE(!restorer_set.entries.empty());
        impure.entries.push_back(restorer_set.entries[0]);
        impure_manifest = root / "data" / "impure.jsonl";
        save_manifest(impure, impure_manifest);

        ckpt.meta.phase = "remover";
        ckpt.meta.step = 0;
        ckpt.meta.seed = 5;
        ckpt.meta.gen_config = {.base_width = 8, .n_down = 2, .n_blocks = 1,
                                .spectral_blocks = true};
        ckpt.generator = nn::Generator<float>(ckpt.meta.gen_config, 5);
        ckpt.discriminator = nn::Discriminator<float>({.base_width = 8, .n_layers = 3}, 5);
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

} // namespace

TEST_CASE("fid_star degenerate self-comparison is ~0") {
    const auto& f = fixture();
    // a target-free query leaves every pixel known, so the removal outputs
    // are bit-exactly the comparison images themselves
    eval::Embedder emb;
    double v = eval::fid_star(f.ckpt.generator, f.comparison_m, f.comparison_m, emb, 1);
    CHECK(v < 1e-6);
}

TEST_CASE("comparison-set purity violations abort") {
    const auto& f = fixture();
    DatasetManifest impure = load_manifest(f.impure_manifest);
    eval::Embedder emb;
    CHECK_THROWS_AS(eval::fid_star(f.ckpt.generator, f.comparison_m, impure, emb, 1),
                    eval::PurityViolation);
    CHECK_THROWS_AS(
        eval::evaluate_run(f.ckpt, f.test_manifest, f.impure_manifest, eval::EvalSettings{}),
        eval::PurityViolation);
}

TEST_CASE("gt removals score no worse than an untrained generator") {
    const auto& f = fixture();
    eval::EvalSettings settings;

    // query scenes in the coverage band, scored as gt_removal images
    DatasetManifest filtered;
    filtered.class_table = f.test_m.class_table;
    filtered.base_dir = f.test_m.base_dir;
    std::vector<Image> gt_images, untrained_out;
    for (const auto& e : f.test_m.entries) {
        SceneSample s = load_scene(f.test_m, e);
        double frac = class_pixel_fraction(s.seg, 1);
        if (frac < settings.coverage_lo || frac > settings.coverage_hi) continue;
        REQUIRE(s.gt_removal.has_value());
        gt_images.push_back(*s.gt_removal);
        Mask mask(s.seg.height, s.seg.width, 1);
        for (size_t i = 0; i < s.seg.data.size(); ++i)
            if (s.seg.data[i] == 1) mask.data[i] = 0;
        untrained_out.push_back(train::remove_objects(f.ckpt.generator, s.image, mask));
    }
    REQUIRE(gt_images.size() >= 5);

    eval::Embedder emb;
    auto comp = eval::detail::comparison_images(f.comparison_m, 1);
    auto fc = eval::extract_features(emb, comp);
    double fid_gt = eval::frechet_distance(eval::extract_features(emb, gt_images), fc);
    double fid_untrained =
        eval::frechet_distance(eval::extract_features(emb, untrained_out), fc);
    INFO("fid gt " << fid_gt << " untrained " << fid_untrained);
    CHECK(fid_gt <= fid_untrained);
}

TEST_CASE("evaluate_run: coverage filter, paired metrics, report round trip") {
    const auto& f = fixture();
    eval::EvalReport r = eval::evaluate_run(f.ckpt, f.test_manifest, f.comparison_manifest);

    REQUIRE(r.metrics.count("fid_star"));
    REQUIRE(r.metrics.count("u_ids_star"));
    REQUIRE(r.metrics.count("psnr"));
    REQUIRE(r.metrics.count("ssim"));
    REQUIRE(r.metrics.count("perceptual_distance"));
    for (const auto& [name, value] : r.metrics) {
        INFO(name);
        CHECK(std::isfinite(value));
        CHECK(r.counts.at(name) >= 2);
    }
    CHECK(r.metrics["u_ids_star"] >= 0.0);
    CHECK(r.metrics["u_ids_star"] <= 0.52);
    CHECK(r.metrics["ssim"] <= 1.0);

    fs::path rp = f.root / "report.json";
    eval::save_report(r, rp);
    eval::EvalReport loaded = eval::load_report(rp);
    CHECK(loaded.same_results(r));
    CHECK(loaded.timestamp == r.timestamp);

    eval::EvalReport r2 = eval::evaluate_run(f.ckpt, f.test_manifest, f.comparison_manifest);
    CHECK(r2.same_results(r)); // timestamp may differ; results may not
}

TEST_CASE("evaluate_run rejects a test set with no scenes in the band") {
    const auto& f = fixture();
    // a manifest holding only target-free scenes has zero coverage everywhere
    CHECK_THROWS_AS(
        eval::evaluate_run(f.ckpt, f.comparison_manifest, f.comparison_manifest),
        train::EmptySelection);
}

TEST_CASE("coverage filter excludes an out-of-band scene") {
    const auto& f = fixture();
    // 50% target coverage: a synthetic scene built by hand
    fs::path dir = f.root / "bigscene";
    fs::create_directories(dir);
    Image img(64, 64);
    SegmentationMap seg(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            bool target = x < 32;
            seg.at(y, x) = target ? 1 : 0;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = target ? 0.9f : 0.1f;
        }
    save_image_png(img, (dir / "img.png").string());
    save_seg_png(seg, (dir / "seg.png").string());
    save_seg_png(seg, (dir / "inst.png").string());

    DatasetManifest m;
    m.split = "test";
    m.base_dir = dir;
    m.class_table = f.test_m.class_table;
    ManifestEntry e;
    e.id = "big0";
    e.image_path = "img.png";
    e.seg_path = "seg.png";
    e.inst_path = "inst.png";
    e.split = "test";
    e.source = "synthetic";
    m.entries.push_back(e);
    save_manifest(m, dir / "manifest.jsonl");

    CHECK_THROWS_AS(
        eval::evaluate_run(f.ckpt, dir / "manifest.jsonl", f.comparison_manifest),
        train::EmptySelection);
}
