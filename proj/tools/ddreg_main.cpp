// ddreg command-line front end: preprocessing, pair generation, training,
// transfer learning, registration, evaluation, and the gradient-check suite.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddreg/config.hpp"
#include "ddreg/ddvol_io.hpp"
#include "ddreg/eval.hpp"
#include "ddreg/gradcheck.hpp"
#include "ddreg/preprocess.hpp"
#include "ddreg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ddreg;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string profile = "paper";
    std::string out_override;
    std::int64_t seed_override = -1;
};

ExperimentConfig load_config(const CommonArgs& args) {
    if (args.config_path.empty()) throw ValidationError("--config is required for this command");
    ExperimentConfig cfg = ExperimentConfig::load(args.config_path, args.profile);
    if (!args.out_override.empty()) cfg.out_dir = args.out_override;
    if (args.seed_override >= 0) {
        cfg.train_seed = static_cast<std::uint64_t>(args.seed_override);
        cfg.augment.seed = static_cast<std::uint64_t>(args.seed_override);
    }
    return cfg;
}

std::string preprocessed_manifest_path(const ExperimentConfig& cfg) {
    return (fs::path(cfg.out_dir) / "preprocessed" / "manifest.json").string();
}

void write_text(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

// ---- preprocess ----

int cmd_preprocess(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    DatasetManifest manifest = DatasetManifest::load(cfg.manifest);
    fs::path dir = fs::path(cfg.out_dir) / "preprocessed";
    fs::create_directories(dir);

    DatasetManifest out_manifest;
    int index = 0;
    for (const auto& entry : manifest.entries) {
        Volume v = load_volume(entry.fixed);
        LabelMap l = entry.labels.empty()
                         ? LabelMap(v.grid, std::vector<std::uint8_t>(v.grid.voxel_count(), 0))
                         : load_labelmap(entry.labels);

        if (cfg.crop_to_mask && !l.empty_mask()) {
            auto [cropped, rec] = crop_to_mask(v, l, cfg.crop_margin_mm);
            v = std::move(cropped);
            l = apply_crop(l, rec);
        }
        v = resample_isotropic(v, cfg.target_spacing);
        l = resample_isotropic(l, cfg.target_spacing);
        v = resize(v, cfg.input_shape);
        l = resize(l, cfg.input_shape);
        v = normalize_intensity(v);

        std::string stem = "vol_" + std::to_string(index++);
        std::string vp = (dir / (stem + ".ddvol")).string();
        std::string lp = (dir / (stem + "_labels.ddvol")).string();
        save_ddvol(v, vp);
        save_ddvol(l, lp);
        out_manifest.entries.push_back({vp, lp, entry.split});
    }
    out_manifest.save(preprocessed_manifest_path(cfg));
    std::cout << "preprocessed " << out_manifest.entries.size() << " volumes -> " << dir << "\n";
    return 0;
}

// ---- gen-pairs ----

int cmd_gen_pairs(const CommonArgs& args, const std::string& manifest_override) {
    ExperimentConfig cfg = load_config(args);
    std::string mpath = manifest_override.empty() ? preprocessed_manifest_path(cfg) : manifest_override;
    DatasetManifest manifest = DatasetManifest::load(mpath);
    TrainingSet test = manifest.load_split("test");
    if (test.images.empty()) throw ValidationError("gen-pairs: manifest has no test volumes");

    fs::create_directories(cfg.pairs_dir);
    AugmentConfig acfg = cfg.augment;
    acfg.seed = cfg.eval_seed;

    json pairs = json::array();
    for (int j = 0; j < cfg.eval_pairs; ++j) {
        std::size_t vi = static_cast<std::size_t>(j) % test.images.size();
        AugmentSample s = generate_pair(test.images[vi], test.labels[vi], acfg, j);

        std::string base = (fs::path(cfg.pairs_dir) / ("pair_" + std::to_string(j))).string();
        save_ddvol(test.images[vi], base + "_fixed.ddvol");
        save_ddvol(test.labels[vi], base + "_fixed_labels.ddvol");
        save_ddvol(s.moving, base + "_moving.ddvol");
        save_ddvol(s.moving_labels, base + "_moving_labels.ddvol");
        write_text(base + "_params.json", s.params.to_json());
        pairs.push_back({{"fixed", base + "_fixed.ddvol"},
                         {"fixed_labels", base + "_fixed_labels.ddvol"},
                         {"moving", base + "_moving.ddvol"},
                         {"moving_labels", base + "_moving_labels.ddvol"},
                         {"params", base + "_params.json"}});
    }
    write_text((fs::path(cfg.pairs_dir) / "pairs.json").string(), pairs.dump(2) + "\n");
    std::cout << "generated " << cfg.eval_pairs << " evaluation pairs -> " << cfg.pairs_dir << "\n";
    return 0;
}

// ---- train / finetune ----

void write_train_outputs(const ExperimentConfig& cfg, const TrainResult& r, const std::string& tag) {
    fs::path dir = fs::path(cfg.out_dir) / tag;
    fs::create_directories(dir);
    json meta;
    meta["design"] = design_name(cfg.design);
    meta["best_epoch"] = r.log.best_epoch;
    meta["best_val_loss"] = r.log.best_val;
    save_checkpoint(r.best_params, (dir / "checkpoint_best.json").string(), meta.dump());
    save_checkpoint(r.final_params, (dir / "checkpoint_final.json").string(), meta.dump());
    write_text((dir / "runlog.csv").string(), r.log.to_csv());
    write_text((dir / "summary.json").string(), r.log.summary_json() + "\n");
    write_text((dir / "weights_history.csv").string(), r.weight_history.to_csv(r.weight_state));
    write_text((dir / "config.json").string(), cfg.to_json() + "\n");
    std::cout << "best epoch " << r.log.best_epoch << " val loss " << r.log.best_val << " -> " << dir
              << "\n";
}

int cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    DatasetManifest manifest = DatasetManifest::load(preprocessed_manifest_path(cfg));
    TrainingSet tr = manifest.load_split("train");
    TrainingSet val = manifest.load_split("val");
    TrainConfig tcfg = cfg.train_config();
    std::cout << "training design " << design_name(tcfg.design) << " on " << tr.images.size()
              << " volumes, " << count_parameters(init_unet_params(tcfg.net, 0)) << " net parameters\n";
    TrainResult r = train(tr, val, tcfg);
    write_train_outputs(cfg, r, "train_" + design_name(tcfg.design));
    return 0;
}

int cmd_finetune(const CommonArgs& args, const std::string& checkpoint, const std::string& mode,
                 int step1_epochs) {
    ExperimentConfig cfg = load_config(args);
    DatasetManifest manifest = DatasetManifest::load(preprocessed_manifest_path(cfg));
    TrainingSet tr = manifest.load_split("train");
    TrainingSet val = manifest.load_split("val");
    TrainConfig tcfg = cfg.train_config();
    ParameterStore ckpt = load_checkpoint(checkpoint);

    TrainResult r;
    if (mode == "full") {
        r = finetune_full(ckpt, tr, val, tcfg);
    } else if (mode == "two-step") {
        r = finetune_two_step(ckpt, tr, val, tcfg, step1_epochs);
    } else {
        throw ValidationError("finetune: --mode must be full or two-step");
    }
    write_train_outputs(cfg, r, "finetune_" + mode + "_" + design_name(tcfg.design));
    return 0;
}

// ---- register ----

int cmd_register(const CommonArgs& args, const std::string& checkpoint, const std::string& fixed_path,
                 const std::string& moving_path, const std::string& moving_labels_path,
                 const std::string& out_prefix) {
    ExperimentConfig cfg = load_config(args);
    ParameterStore params = load_checkpoint(checkpoint);
    Volume fixed = load_volume(fixed_path);
    Volume moving = load_volume(moving_path);
    if (!(fixed.grid == moving.grid)) throw ValidationError("register: fixed/moving grids differ");

    bool needs_resize = fixed.grid.shape != cfg.input_shape;
    Volume fixed_net = needs_resize ? resize(fixed, cfg.input_shape) : fixed;
    Volume moving_net = needs_resize ? resize(moving, cfg.input_shape) : moving;
    DisplacementField phi_net = unet_forward(fixed_net, moving_net, params, cfg.net);
    DisplacementField phi =
        (phi_net.grid == fixed.grid) ? phi_net : resample_field(phi_net, fixed.grid);

    save_ddvol(warp_trilinear(moving, phi), out_prefix + "_warped.ddvol");
    save_field(phi, out_prefix + "_field");
    if (!moving_labels_path.empty()) {
        LabelMap ml = load_labelmap(moving_labels_path);
        save_ddvol(warp_nearest(ml, phi), out_prefix + "_warped_labels.ddvol");
    }
    std::cout << "registered -> " << out_prefix << "_warped.ddvol\n";
    return 0;
}

// ---- evaluate ----

std::vector<EvalPair> load_pairs(const std::string& pairs_dir) {
    std::string mpath = (fs::path(pairs_dir) / "pairs.json").string();
    std::ifstream in(mpath);
    if (!in) throw ValidationError("evaluate: cannot open pair manifest " + mpath);
    json j;
    in >> j;
    std::vector<EvalPair> pairs;
    for (const auto& e : j) {
        EvalPair p;
        p.fixed = load_volume(e.at("fixed"));
        p.fixed_labels = load_labelmap(e.at("fixed_labels"));
        p.moving = load_volume(e.at("moving"));
        p.moving_labels = load_labelmap(e.at("moving_labels"));
        pairs.push_back(std::move(p));
    }
    return pairs;
}

json row_to_json(const MetricRow& row, const std::vector<PairMetrics>& per_pair) {
    auto stat = [](const Stat& s) {
        return json{{"mean", s.mean}, {"std", s.stddev}, {"n", s.count}};
    };
    json j;
    j["method"] = row.method;
    j["pairs"] = row.pairs;
    j["ssim"] = stat(row.ssim);
    j["ncc"] = stat(row.ncc);
    j["dsc"] = stat(row.dsc);
    j["hd"] = stat(row.hd);
    j["hd95"] = stat(row.hd95);
    j["tre"] = stat(row.tre);
    j["runtime"] = stat(row.runtime);
    j["per_pair"] = json::array();
    for (const auto& p : per_pair) {
        json e;
        auto put = [&](const char* k, const std::optional<double>& v) {
            if (v) e[k] = *v; else e[k] = nullptr;
        };
        put("ncc", p.ncc);
        put("ssim", p.ssim);
        put("dsc", p.dsc);
        put("hd", p.hd);
        put("hd95", p.hd95);
        put("tre", p.tre);
        e["runtime_s"] = p.runtime_s;
        e["labels_scored"] = p.labels_scored;
        e["labels_missing"] = p.labels_missing;
        j["per_pair"].push_back(std::move(e));
    }
    return j;
}

MetricRow row_from_json(const json& j) {
    MetricRow row;
    row.method = j.at("method");
    row.pairs = j.at("pairs");
    auto stat = [&](const char* k) {
        Stat s;
        s.mean = j.at(k).at("mean");
        s.stddev = j.at(k).at("std");
        s.count = j.at(k).at("n");
        return s;
    };
    row.ssim = stat("ssim");
    row.ncc = stat("ncc");
    row.dsc = stat("dsc");
    row.hd = stat("hd");
    row.hd95 = stat("hd95");
    row.tre = stat("tre");
    row.runtime = stat("runtime");
    return row;
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint, std::string method) {
    ExperimentConfig cfg = load_config(args);
    ParameterStore params = load_checkpoint(checkpoint);
    std::vector<EvalPair> pairs = load_pairs(cfg.pairs_dir);
    if (method.empty()) method = fs::path(checkpoint).parent_path().filename().string();

    std::vector<PairMetrics> per_pair;
    MetricRow row = evaluate_model(params, cfg.net, cfg.input_shape, pairs, method, &per_pair);
    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / ("row_" + method + ".json")).string(),
               row_to_json(row, per_pair).dump(2) + "\n");
    std::cout << report_table({row});
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_prefix) {
    std::vector<MetricRow> rows;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.path().filename().string().rfind("row_", 0) == 0 && e.path().extension() == ".json")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream in(f);
        json j;
        in >> j;
        rows.push_back(row_from_json(j));
    }
    if (rows.empty()) throw ValidationError("report: no row_*.json files in " + in_dir);
    std::string table = report_table(rows);
    std::string csv = report_csv(rows);
    if (!out_prefix.empty()) {
        write_text(out_prefix + ".txt", table);
        write_text(out_prefix + ".csv", csv);
    }
    std::cout << table;
    return 0;
}

int cmd_gradcheck(bool quick) {
    auto checks = run_gradcheck_suite(!quick);
    std::cout << format_gradcheck(checks);
    if (!gradcheck_all_passed(checks)) {
        std::cerr << "gradcheck: FAILURES detected\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ddreg: weakly-supervised deformable registration pipeline"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path, "experiment config JSON");
    app.add_option("--profile", common.profile, "config profile: paper | desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--seed", common.seed_override, "override training/augmentation seed");
    app.add_option("--out", common.out_override, "override output directory");

    auto* preprocess = app.add_subcommand("preprocess", "resample/crop/resize/normalize a manifest");

    std::string manifest_override;
    auto* gen_pairs = app.add_subcommand("gen-pairs", "materialize evaluation pairs with sidecars");
    gen_pairs->add_option("--manifest", manifest_override, "preprocessed manifest (defaults to out_dir)");

    auto* train_cmd = app.add_subcommand("train", "train a design from scratch");

    std::string ft_checkpoint, ft_mode = "full";
    int ft_step1 = -1;
    auto* finetune = app.add_subcommand("finetune", "transfer-learn from a checkpoint");
    finetune->add_option("--checkpoint", ft_checkpoint, "source checkpoint")->required();
    finetune->add_option("--mode", ft_mode, "full | two-step")
        ->check(CLI::IsMember({"full", "two-step"}));
    finetune->add_option("--step1-epochs", ft_step1, "phase-1 epochs for two-step");

    std::string reg_ckpt, reg_fixed, reg_moving, reg_labels, reg_out = "registered";
    auto* reg = app.add_subcommand("register", "register one pair");
    reg->add_option("--checkpoint", reg_ckpt)->required();
    reg->add_option("--fixed", reg_fixed)->required();
    reg->add_option("--moving", reg_moving)->required();
    reg->add_option("--moving-labels", reg_labels);
    reg->add_option("--out", reg_out, "output prefix");

    std::string eval_ckpt, eval_method;
    auto* evaluate = app.add_subcommand("evaluate", "run the metric suite on generated pairs");
    evaluate->add_option("--checkpoint", eval_ckpt)->required();
    evaluate->add_option("--method", eval_method, "row label (defaults to checkpoint dir name)");

    bool gc_quick = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification suite");
    gradcheck->add_flag("--quick", gc_quick, "skip the large end-to-end reference check");

    std::string report_in, report_out;
    auto* report = app.add_subcommand("report", "aggregate row_*.json into a table");
    report->add_option("--in", report_in, "directory with row_*.json")->required();
    report->add_option("--out", report_out, "output prefix for .txt/.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (preprocess->parsed()) return cmd_preprocess(common);
        if (gen_pairs->parsed()) return cmd_gen_pairs(common, manifest_override);
        if (train_cmd->parsed()) return cmd_train(common);
        if (finetune->parsed()) return cmd_finetune(common, ft_checkpoint, ft_mode, ft_step1);
        if (reg->parsed()) return cmd_register(common, reg_ckpt, reg_fixed, reg_moving, reg_labels, reg_out);
        if (evaluate->parsed()) return cmd_evaluate(common, eval_ckpt, eval_method);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_quick);
        if (report->parsed()) return cmd_report(report_in, report_out);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
