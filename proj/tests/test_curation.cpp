#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "tdi/curate/curation.hpp"
#include "tdi/synth/world.hpp"

using namespace tdi;
using namespace tdi::curate;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("tdi_curation_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Synthetic manifest shared by the selection tests.
const DatasetManifest& mixed_manifest() {
    static DatasetManifest m = [] {
        synth::SynthConfig cfg;
        cfg.seed = 1234;
        cfg.object_count_min = 0;
        cfg.object_count_max = 4;
        return synth::generate_dataset(cfg, 200, temp_dir("mixed_data"));
    }();
    return m;
}

// Hand-built manifest with exact target fractions 0, 0.25 and 0.5.
DatasetManifest fraction_manifest(const fs::path& dir) {
    DatasetManifest m;
    m.split = "train";
    m.class_table[1] = "disc";
    m.base_dir = dir;
    const int S = 64;
    auto add = [&](const std::string& id, double frac) {
        SegmentationMap seg(S, S);
        size_t target = size_t(frac * S * S);
        for (size_t i = 0; i < target; ++i) seg.data[i] = 1;
        Image img(S, S, 0.5f);
        ManifestEntry e;
        e.id = id;
        e.image_path = id + "_img.png";
        e.seg_path = id + "_seg.png";
        e.inst_path = id + "_inst.png";
        e.split = "train";
        save_image_png(img, (dir / e.image_path).string());
        save_seg_png(seg, (dir / e.seg_path).string());
        save_seg_png(SegmentationMap(S, S), (dir / e.inst_path).string());
        m.entries.push_back(e);
    };
    add("zero", 0.0);
    add("quarter", 0.25);
    add("half", 0.5);
    return m;
}

} // namespace

TEST_CASE("restorer selection band is inclusive [0.05, 0.40]") {
    fs::path dir = temp_dir("fractions");
    DatasetManifest m = fraction_manifest(dir);
    DatasetManifest sel = select_restorer_images(m, 1);
    REQUIRE(sel.entries.size() == 1);
    CHECK(sel.entries[0].id == "quarter"); // 0% and 50% are out of band
}

TEST_CASE("restorer selection on synthetic data matches per-entry fractions") {
    const DatasetManifest& m = mixed_manifest();
    CurationRule rule;
    DatasetManifest sel = select_restorer_images(m, 1, rule);
    std::set<std::string> selected;
    for (const auto& e : sel.entries) selected.insert(e.id);
    for (const auto& e : m.entries) {
        SegmentationMap seg = load_seg_png(m.resolve(e.seg_path).string());
        double f = class_pixel_fraction(seg, 1);
        bool in_band = f >= rule.select_lo && f <= rule.select_hi;
        CHECK(selected.count(e.id) == size_t(in_band));
    }
}

TEST_CASE("remover selection is strictly target free") {
    const DatasetManifest& m = mixed_manifest();
    DatasetManifest sel = select_remover_images(m, 1);
    CHECK(!sel.entries.empty());
    for (const auto& e : sel.entries) {
        SegmentationMap seg = load_seg_png(m.resolve(e.seg_path).string());
        CHECK(class_pixel_count(seg, 1) == 0);
    }
    // single target pixel excludes an image
    fs::path dir = temp_dir("one_pixel");
    DatasetManifest one;
    one.class_table[1] = "disc";
    one.base_dir = dir;
    SegmentationMap seg(64, 64);
    seg.data[0] = 1;
    ManifestEntry e;
    e.id = "p";
    e.image_path = "p_img.png";
    e.seg_path = "p_seg.png";
    e.inst_path = "p_inst.png";
    save_image_png(Image(64, 64), (dir / e.image_path).string());
    save_seg_png(seg, (dir / e.seg_path).string());
    save_seg_png(SegmentationMap(64, 64), (dir / e.inst_path).string());
    one.entries.push_back(e);
    CHECK(select_remover_images(one, 1).entries.empty());

    DatasetManifest empty;
    empty.base_dir = dir;
    CHECK(select_remover_images(empty, 1).entries.empty());
}

TEST_CASE("restorer masks hit the occlusion band and stay on the instance") {
    Rng seeds(5);
    for (int trial = 0; trial < 50; ++trial) {
        InstanceMap inst(32, 32);
        // two blobs
        for (int y = 4; y < 14; ++y)
            for (int x = 4; x < 14; ++x) inst.at(y, x) = 1;
        for (int y = 18; y < 30; ++y)
            for (int x = 10; x < 25; ++x) inst.at(y, x) = 2;
        inst.instance_class[1] = 1;
        inst.instance_class[2] = 1;

        CurationRule rule;
        auto r = gen_restorer_mask(inst, {1, 2}, rule, seeds.next_u64());
        REQUIRE(r.covered.size() == 2);
        for (uint16_t iid : {uint16_t(1), uint16_t(2)}) {
            double occ = instance_occlusion(inst, iid, r.mask);
            CHECK(occ >= rule.restore_cover_lo);
            CHECK(occ <= rule.restore_cover_hi);
        }
        // zeros only on instance pixels
        for (size_t i = 0; i < r.mask.data.size(); ++i)
            if (r.mask.data[i] == 0) CHECK(inst.data[i] != 0);
    }
}

TEST_CASE("restorer mask occlusion for a 100 px instance is 40-60 px") {
    InstanceMap inst(16, 16);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) inst.at(y, x) = 1;
    inst.instance_class[1] = 1;
    auto r = gen_restorer_mask(inst, {1}, {}, 9001);
    size_t zeros = r.mask.zero_count();
    CHECK(zeros >= 40);
    CHECK(zeros <= 60);
}

TEST_CASE("restorer mask generation is deterministic and skips tiny instances") {
    InstanceMap inst(16, 16);
    for (int x = 0; x < 8; ++x) inst.at(2, x) = 1; // 8 px: ok
    inst.at(10, 10) = 2;                           // 1 px: skipped
    inst.instance_class[1] = 1;
    inst.instance_class[2] = 1;

    auto a = gen_restorer_mask(inst, {1, 2}, {}, 77);
    auto b = gen_restorer_mask(inst, {1, 2}, {}, 77);
    CHECK(a.mask.data == b.mask.data);
    CHECK(a.skipped == std::vector<uint16_t>{2});
    CHECK(a.covered == std::vector<uint16_t>{1});

    CHECK_THROWS_AS(gen_restorer_mask(inst, {}, {}, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_restorer_mask(inst, {9}, {}, 1), std::invalid_argument);
}

TEST_CASE("mask bank holes equal the full target-class region") {
    const DatasetManifest& m = mixed_manifest();
    MaskBank bank = build_mask_bank(m, 1);
    CHECK(!bank.masks.empty());
    size_t bank_i = 0;
    for (const auto& e : m.entries) {
        SegmentationMap seg = load_seg_png(m.resolve(e.seg_path).string());
        size_t target = class_pixel_count(seg, 1);
        if (target == 0) continue; // contributes no mask
        REQUIRE(bank_i < bank.masks.size());
        CHECK(bank.source_ids[bank_i] == e.id);
        const Mask& mask = bank.masks[bank_i];
        CHECK(mask.zero_count() == target);
        for (size_t i = 0; i < seg.data.size(); ++i)
            CHECK((mask.data[i] == 0) == (seg.data[i] == 1));
        ++bank_i;
    }
    CHECK(bank_i == bank.masks.size());
}

TEST_CASE("mask bank round trips through its directory format") {
    const DatasetManifest& m = mixed_manifest();
    MaskBank bank = build_mask_bank(m, 1);
    fs::path dir = temp_dir("bank");
    save_mask_bank(bank, dir);
    MaskBank back = load_mask_bank(dir);
    REQUIRE(back.masks.size() == bank.masks.size());
    CHECK(back.target_class == bank.target_class);
    CHECK(back.source_ids == bank.source_ids);
    for (size_t i = 0; i < bank.masks.size(); ++i) CHECK(back.masks[i].data == bank.masks[i].data);
}

TEST_CASE("sample_training_mask respects the mixing probability") {
    const DatasetManifest& m = mixed_manifest();
    MaskBank bank = build_mask_bank(m, 1);

    CurationRule always_bank;
    always_bank.irregular_mask_prob = 0.0;
    CurationRule always_irregular;
    always_irregular.irregular_mask_prob = 1.0;
    for (uint64_t s = 0; s < 20; ++s) {
        CHECK(sample_training_mask(bank, 64, always_bank, s).kind == MaskKind::class_shaped);
        CHECK(sample_training_mask(bank, 64, always_irregular, s).kind == MaskKind::irregular);
    }

    CurationRule mixed; // default 0.5
    int class_shaped = 0;
    const int draws = 10000;
    for (int s = 0; s < draws; ++s)
        if (sample_training_mask(bank, 64, mixed, uint64_t(s) + 1000).kind ==
            MaskKind::class_shaped)
            ++class_shaped;
    double frac = double(class_shaped) / draws;
    CHECK(frac >= 0.47);
    CHECK(frac <= 0.53);
}

TEST_CASE("irregular masks are binary, deterministic, and coverage bounded") {
    StrokeConfig cfg;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        Mask m = gen_irregular_mask(64, seed, cfg);
        double cov = mask_coverage(m);
        CHECK(cov >= cfg.cover_lo);
        CHECK(cov <= cfg.cover_hi);
    }
    Mask a = gen_irregular_mask(64, 31337);
    Mask b = gen_irregular_mask(64, 31337);
    CHECK(a.data == b.data);
    for (uint8_t v : a.data) CHECK((v == 0 || v == 1));
    CHECK_THROWS_AS(gen_irregular_mask(16, 1), std::invalid_argument);
}
