// tdi: synthetic-data generation, curation, training, evaluation, and the
// ablation matrix behind one command-line front end.
//
// Exit codes: 0 ok, 2 config error, 3 empty selection, 4 missing dependency
// artifact, 5 comparison-set purity violation.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "tdi/eval/evaluate.hpp"
#include "tdi/synth/world.hpp"
#include "tdi/train/trainer.hpp"

using namespace tdi;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitEmptySelection = 3;
constexpr int kExitMissingArtifact = 4;
constexpr int kExitPurity = 5;

// TDI_OUT_ROOT relocates relative output paths (CI sandboxing hook).
fs::path resolve_out(const fs::path& p) {
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("TDI_OUT_ROOT")) return fs::path(root) / p;
    return p;
}

struct RunConfig {
    uint64_t seed = 0;
    bool seed_set = false;
    uint16_t target_class = 1;
    fs::path train_manifest, test_manifest, comparison_manifest, mask_bank, out_dir;
    train::TrainConfig train;

    nlohmann::json to_json() const {
        return {{"seed", seed},
                {"target_class", target_class},
                {"train_manifest", train_manifest.string()},
                {"test_manifest", test_manifest.string()},
                {"comparison_manifest", comparison_manifest.string()},
                {"mask_bank", mask_bank.string()},
                {"out_dir", out_dir.string()},
                {"epochs", train.epochs},
                {"step_limit", train.step_limit},
                {"batch_size", train.batch_size},
                {"lr_discriminator", train.lr_discriminator},
                {"lr_generator", train.lr_generator},
                {"use_adversarial", train.use_adversarial},
                {"use_afterimage", train.use_afterimage},
                {"use_restorer_fake", train.use_restorer_fake},
                {"lr_decay", train.lr_decay},
                {"generator",
                 {{"base_width", train.gen_config.base_width},
                  {"n_down", train.gen_config.n_down},
                  {"n_blocks", train.gen_config.n_blocks},
                  {"spectral_blocks", train.gen_config.spectral_blocks}}},
                {"discriminator",
                 {{"base_width", train.disc_config.base_width},
                  {"n_layers", train.disc_config.n_layers}}},
                {"weights",
                 {{"lambda_ai", train.weights.lambda_ai},
                  {"lambda_adv", train.weights.lambda_adv},
                  {"lambda_pl", train.weights.lambda_pl},
                  {"lambda_fm", train.weights.lambda_fm},
                  {"lambda_gp", train.weights.lambda_gp}}}};
    }
};

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not found: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    RunConfig c;
    if (j.contains("seed")) {
        c.seed = j["seed"].get<uint64_t>();
        c.seed_set = true;
    }
    c.target_class = j.value("target_class", uint16_t(1));
    c.train_manifest = j.value("train_manifest", std::string());
    c.test_manifest = j.value("test_manifest", std::string());
    c.comparison_manifest = j.value("comparison_manifest", std::string());
    c.mask_bank = j.value("mask_bank", std::string());
    c.out_dir = j.value("out_dir", std::string());
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.step_limit = j.value("step_limit", c.train.step_limit);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.lr_discriminator = j.value("lr_discriminator", c.train.lr_discriminator);
    c.train.lr_generator = j.value("lr_generator", c.train.lr_generator);
    c.train.use_adversarial = j.value("use_adversarial", c.train.use_adversarial);
    c.train.use_afterimage = j.value("use_afterimage", c.train.use_afterimage);
    c.train.use_restorer_fake = j.value("use_restorer_fake", c.train.use_restorer_fake);
    c.train.lr_decay = j.value("lr_decay", c.train.lr_decay);
    if (j.contains("generator")) {
        const auto& g = j["generator"];
        c.train.gen_config.base_width = g.value("base_width", c.train.gen_config.base_width);
        c.train.gen_config.n_down = g.value("n_down", c.train.gen_config.n_down);
        c.train.gen_config.n_blocks = g.value("n_blocks", c.train.gen_config.n_blocks);
        c.train.gen_config.spectral_blocks =
            g.value("spectral_blocks", c.train.gen_config.spectral_blocks);
    }
    if (j.contains("discriminator")) {
        const auto& d = j["discriminator"];
        c.train.disc_config.base_width = d.value("base_width", c.train.disc_config.base_width);
        c.train.disc_config.n_layers = d.value("n_layers", c.train.disc_config.n_layers);
    }
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        c.train.weights.lambda_ai = w.value("lambda_ai", c.train.weights.lambda_ai);
        c.train.weights.lambda_adv = w.value("lambda_adv", c.train.weights.lambda_adv);
        c.train.weights.lambda_pl = w.value("lambda_pl", c.train.weights.lambda_pl);
        c.train.weights.lambda_fm = w.value("lambda_fm", c.train.weights.lambda_fm);
        c.train.weights.lambda_gp = w.value("lambda_gp", c.train.weights.lambda_gp);
    }
    return c;
}

void echo_config(const nlohmann::json& resolved, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "config.json");
    out << resolved.dump(2) << "\n";
}

train::TrainConfig make_train_config(const RunConfig& rc, train::TrainPhase phase,
                                     const fs::path& out_dir) {
    train::TrainConfig cfg = rc.train;
    cfg.phase = phase;
    cfg.seed = rc.seed;
    cfg.target_class = rc.target_class;
    cfg.manifest_path = rc.train_manifest;
    cfg.mask_bank_path = rc.mask_bank;
    cfg.checkpoint_dir = out_dir;
    return cfg;
}

void print_metric_table(const eval::EvalReport& r) {
    std::cout << "metric\tvalue\tn\n";
    for (const auto& [name, value] : r.metrics)
        std::cout << name << '\t' << value << '\t' << r.counts.at(name) << '\n';
}

struct AblationRow {
    std::string name;
    bool curation, restorer_fake, afterimage;
};

int run_ablation(RunConfig rc, const fs::path& out_root);

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"task-decoupled object removal pipeline"};
    app.require_subcommand(1);

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic paired dataset");
    std::string gen_out;
    int gen_n = 0;
    uint64_t gen_seed = 0;
    int gen_size = 64;
    std::string gen_split = "train";
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n", gen_n, "number of scenes")->required();
    gen->add_option("--seed", gen_seed, "generation seed")->required();
    gen->add_option("--size", gen_size, "image size");
    gen->add_option("--split", gen_split, "split tag");

    // curate
    auto* cur = app.add_subcommand("curate", "select curated subsets / build mask bank");
    std::string cur_manifest, cur_mode, cur_out;
    uint16_t cur_class = 1;
    cur->add_option("--manifest", cur_manifest, "input manifest")->required();
    cur->add_option("--class", cur_class, "target class id")->required();
    cur->add_option("--mode", cur_mode, "restorer | remover | bank")->required();
    cur->add_option("--out", cur_out, "output path")->required();

    // train
    auto* trn = app.add_subcommand("train", "train one model phase");
    std::string trn_phase, trn_config, trn_restorer, trn_out;
    uint64_t trn_seed = 0;
    bool trn_seed_set = false;
    trn->add_option("--phase", trn_phase, "restorer | remover | baseline")->required();
    trn->add_option("--config", trn_config, "run config JSON")->required();
    trn->add_option("--restorer-ckpt", trn_restorer, "frozen guidance checkpoint");
    trn->add_option("--out", trn_out, "output directory override");
    auto* trn_seed_opt = trn->add_option("--seed", trn_seed, "seed override");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "run metrics for a checkpoint");
    std::string ev_ckpt, ev_test, ev_comp, ev_out;
    uint16_t ev_class = 1;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--test-manifest", ev_test, "query scenes")->required();
    ev->add_option("--comparison-manifest", ev_comp, "target-free comparison scenes")->required();
    ev->add_option("--out", ev_out, "report path")->required();
    ev->add_option("--class", ev_class, "target class id");

    // ablate
    auto* ab = app.add_subcommand("ablate", "run the 4-row ablation matrix");
    std::string ab_config, ab_out;
    ab->add_option("--config", ab_config, "run config JSON")->required();
    ab->add_option("--out", ab_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*gen) {
            synth::SynthConfig cfg;
            cfg.seed = gen_seed;
            cfg.image_size = gen_size;
            fs::path out = resolve_out(gen_out);
            DatasetManifest m = synth::generate_dataset(cfg, gen_n, out, gen_split);
            echo_config({{"command", "gen-synth"},
                         {"n", gen_n},
                         {"seed", gen_seed},
                         {"size", gen_size},
                         {"split", gen_split}},
                        out);
            std::cout << (out / "manifest.jsonl").string() << "\n";
            return kExitOk;
        }

        if (*cur) {
            DatasetManifest m = load_manifest(cur_manifest);
            fs::path out = resolve_out(cur_out);
            if (cur_mode == "restorer" || cur_mode == "remover") {
                DatasetManifest sel = cur_mode == "restorer"
                                          ? curate::select_restorer_images(m, cur_class)
                                          : curate::select_remover_images(m, cur_class);
                std::cout << "selected " << sel.entries.size() << " rejected "
                          << m.entries.size() - sel.entries.size() << "\n";
                if (sel.entries.empty()) return kExitEmptySelection;
                // keep entry paths valid: write next to the source manifest
                fs::path dst = out;
                if (dst.is_relative()) dst = fs::path(cur_manifest).parent_path() / dst;
                save_manifest(sel, dst);
            } else if (cur_mode == "bank") {
                curate::MaskBank bank = curate::build_mask_bank(m, cur_class);
                std::cout << "selected " << bank.masks.size() << " rejected "
                          << m.entries.size() - bank.masks.size() << "\n";
                if (bank.masks.empty()) return kExitEmptySelection;
                curate::save_mask_bank(bank, out);
            } else {
                std::cerr << "unknown curation mode: " << cur_mode << "\n";
                return kExitConfig;
            }
            return kExitOk;
        }

        if (*trn) {
            RunConfig rc = load_run_config(trn_config);
            trn_seed_set = trn_seed_opt->count() > 0;
            if (trn_seed_set) {
                rc.seed = trn_seed;
                rc.seed_set = true;
            }
            if (!rc.seed_set) {
                std::cerr << "seed is mandatory (config key \"seed\" or --seed)\n";
                return kExitConfig;
            }
            train::TrainPhase phase;
            if (trn_phase == "restorer")
                phase = train::TrainPhase::restorer;
            else if (trn_phase == "remover")
                phase = train::TrainPhase::remover;
            else if (trn_phase == "baseline")
                phase = train::TrainPhase::baseline;
            else {
                std::cerr << "unknown phase: " << trn_phase << "\n";
                return kExitConfig;
            }
            fs::path out = resolve_out(trn_out.empty() ? rc.out_dir : fs::path(trn_out));
            if (out.empty()) {
                std::cerr << "no output directory (config key \"out_dir\" or --out)\n";
                return kExitConfig;
            }
            train::TrainConfig cfg = make_train_config(rc, phase, out);
            if (!trn_restorer.empty()) cfg.restorer_ckpt = trn_restorer;
            echo_config(rc.to_json(), out);

            train::TrainResult res;
            switch (phase) {
                case train::TrainPhase::restorer: res = train::train_restorer<float>(cfg); break;
                case train::TrainPhase::remover: res = train::train_remover<float>(cfg); break;
                case train::TrainPhase::baseline: res = train::train_baseline<float>(cfg); break;
            }
            std::cout << "checkpoint " << res.checkpoint_path.string() << "\n"
                      << "steps " << res.steps << "\n"
                      << "term\tvalue\n"
                      << "afterimage\t" << res.final_losses.afterimage << "\n"
                      << "adv_g\t" << res.final_losses.adv_g << "\n"
                      << "adv_d\t" << res.final_losses.adv_d << "\n"
                      << "hrfpl\t" << res.final_losses.hrfpl << "\n"
                      << "fm\t" << res.final_losses.fm << "\n"
                      << "gp\t" << res.final_losses.gp << "\n"
                      << "total\t" << res.final_losses.total << "\n";
            return kExitOk;
        }

        if (*ev) {
            if (!fs::exists(ev_ckpt))
                throw train::MissingArtifact("checkpoint not found: " + ev_ckpt);
            auto ckpt = nn::load_checkpoint<float>(ev_ckpt);
            eval::EvalSettings settings;
            settings.target_class = ev_class;
            eval::EvalReport r = eval::evaluate_run(ckpt, ev_test, ev_comp, settings);
            fs::path out = resolve_out(ev_out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            eval::save_report(r, out);
            print_metric_table(r);
            return kExitOk;
        }

        if (*ab) {
            RunConfig rc = load_run_config(ab_config);
            if (!rc.seed_set) {
                std::cerr << "seed is mandatory (config key \"seed\")\n";
                return kExitConfig;
            }
            return run_ablation(std::move(rc), resolve_out(ab_out));
        }
    } catch (const train::EmptySelection& e) {
        std::cerr << e.what() << "\n";
        return kExitEmptySelection;
    } catch (const train::MissingArtifact& e) {
        std::cerr << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const eval::PurityViolation& e) {
        std::cerr << e.what() << "\n";
        return kExitPurity;
    } catch (const ManifestError& e) {
        std::cerr << e.what() << "\n";
        return e.kind() == ManifestErrorKind::missing_file ? kExitMissingArtifact : kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}

namespace {

int run_ablation(RunConfig rc, const fs::path& out_root) {
    fs::create_directories(out_root);
    echo_config(rc.to_json(), out_root);

    // shared restorer for the afterimage rows
    fs::path restorer_dir = out_root / "restorer";
    train::TrainConfig rcfg = make_train_config(rc, train::TrainPhase::restorer, restorer_dir);
    echo_config(rc.to_json(), restorer_dir);
    train::TrainResult restorer = train::train_restorer<float>(rcfg);

    // all rows use the conventional adversarial stack; "adv" is the
    // restorer-aware discriminator extension (restorer outputs scored fake)
    const AblationRow rows[] = {
        {"baseline", false, false, false},
        {"curation", true, false, false},
        {"curation+afterimage", true, false, true},
        {"curation+adv+afterimage", true, true, true},
    };

    const std::string cfg_dump = rc.to_json().dump();
    const uint64_t config_hash = fnv1a(cfg_dump.data(), cfg_dump.size());
    struct RowResult {
        std::string name;
        bool ok = false;
        double fid = 0, uids = 0;
    };
    std::vector<RowResult> results;
    bool any_failed = false;

    for (const auto& row : rows) {
        RowResult rr;
        rr.name = row.name;
        fs::path dir = out_root / row.name;
        try {
            train::TrainPhase phase =
                row.curation ? train::TrainPhase::remover : train::TrainPhase::baseline;
            train::TrainConfig cfg = make_train_config(rc, phase, dir);
            cfg.use_restorer_fake = row.restorer_fake;
            cfg.use_afterimage = row.afterimage;
            if (row.afterimage || row.restorer_fake)
                cfg.restorer_ckpt = restorer.checkpoint_path;
            echo_config(rc.to_json(), dir);
            train::TrainResult res = train::run_training<float>(cfg);

            auto ckpt = nn::load_checkpoint<float>(res.checkpoint_path);
            eval::EvalSettings settings;
            settings.target_class = rc.target_class;
            eval::EvalReport report =
                eval::evaluate_run(ckpt, rc.test_manifest, rc.comparison_manifest, settings);
            eval::save_report(report, dir / "report.json");
            rr.fid = report.metrics.at("fid_star");
            rr.uids = report.metrics.at("u_ids_star");
            rr.ok = true;
        } catch (const std::exception& e) {
            std::cerr << row.name << " failed: " << e.what() << "\n";
            any_failed = true;
        }
        results.push_back(rr);
    }

    // comparison table with deltas against the baseline row
    const RowResult& base = results[0];
    std::ofstream table(out_root / "ablation.tsv");
    auto emit = [&](std::ostream& os) {
        os << "row\tseed\tconfig_hash\tstatus\tfid_star\tdelta_fid\tu_ids_star\tdelta_u_ids\n";
        for (const auto& rr : results) {
            os << rr.name << '\t' << rc.seed << '\t' << config_hash << '\t'
               << (rr.ok ? "ok" : "failed");
            if (rr.ok && base.ok) {
                double dfid = rr.fid - base.fid, duids = rr.uids - base.uids;
                os << '\t' << rr.fid << '\t' << (dfid <= 0 ? "(+)" : "(-)") << dfid << '\t'
                   << rr.uids << '\t' << (duids >= 0 ? "(+)" : "(-)") << duids;
            } else {
                os << "\t-\t-\t-\t-";
            }
            os << '\n';
        }
    };
    emit(table);
    emit(std::cout);
    return any_failed ? kExitMissingArtifact : kExitOk;
}

} // namespace
