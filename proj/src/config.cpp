#include "ddreg/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace ddreg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& pointer, const std::string& what) {
    throw ValidationError("config: " + what + " at " + pointer);
}

void expect_keys(const json& obj, const std::string& pointer, const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(pointer, "expected an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) fail(pointer + "/" + key, "unknown key");
}

template <typename T>
void read(const json& obj, const std::string& pointer, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(pointer + "/" + key, "wrong type");
    }
}

void read_vec3i(const json& obj, const std::string& pointer, const char* key, std::array<int, 3>& out) {
    if (!obj.contains(key)) return;
    const auto& a = obj.at(key);
    if (!a.is_array() || a.size() != 3) fail(pointer + "/" + key, "expected 3 integers");
    for (int i = 0; i < 3; ++i) {
        if (!a[i].is_number_integer()) fail(pointer + "/" + key, "expected 3 integers");
        out[i] = a[i].get<int>();
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(const std::string& profile) {
    ExperimentConfig c;
    if (profile == "paper") {
        // module defaults already carry the reference values
    } else if (profile == "desk") {
        c.net.depth = 3;
        c.net.filters = {8, 16, 32};
        c.net.head_filters = 8;
        c.input_shape = {64, 64, 64};
        c.augment.control_grid = {4, 4, 4};
        c.augment.max_rigid_translation_mm = 10.0;
        c.augment.max_nonrigid_mm = 4.0;
        c.max_epochs = 200;
        c.eval_pairs = 8;
    } else {
        throw ValidationError("config: unknown profile '" + profile + "' (expected paper or desk)");
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path, const std::string& profile) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config: malformed JSON in " + path + ": " + e.what());
    }

    ExperimentConfig c = defaults(profile);
    expect_keys(j, "", {"data", "augment", "net", "train", "eval"});

    if (j.contains("data")) {
        const auto& d = j["data"];
        expect_keys(d, "/data",
                    {"manifest", "out_dir", "pairs_dir", "target_spacing", "crop_to_mask",
                     "crop_margin_mm"});
        read(d, "/data", "manifest", c.manifest);
        read(d, "/data", "out_dir", c.out_dir);
        read(d, "/data", "pairs_dir", c.pairs_dir);
        read(d, "/data", "target_spacing", c.target_spacing);
        read(d, "/data", "crop_to_mask", c.crop_to_mask);
        read(d, "/data", "crop_margin_mm", c.crop_margin_mm);
    }
    if (j.contains("augment")) {
        const auto& a = j["augment"];
        expect_keys(a, "/augment",
                    {"gamma_range", "brightness_frac", "max_rotation_deg", "max_rigid_translation_mm",
                     "max_nonrigid_mm", "control_grid", "tps_ridge", "seed"});
        if (a.contains("gamma_range")) {
            const auto& g = a["gamma_range"];
            if (!g.is_array() || g.size() != 2) fail("/augment/gamma_range", "expected [lo, hi]");
            c.augment.gamma_lo = g[0].get<double>();
            c.augment.gamma_hi = g[1].get<double>();
        }
        read(a, "/augment", "brightness_frac", c.augment.brightness_frac);
        read(a, "/augment", "max_rotation_deg", c.augment.max_rotation_deg);
        read(a, "/augment", "max_rigid_translation_mm", c.augment.max_rigid_translation_mm);
        read(a, "/augment", "max_nonrigid_mm", c.augment.max_nonrigid_mm);
        read_vec3i(a, "/augment", "control_grid", c.augment.control_grid);
        read(a, "/augment", "tps_ridge", c.augment.tps_ridge);
        read(a, "/augment", "seed", c.augment.seed);
    }
    if (j.contains("net")) {
        const auto& n = j["net"];
        expect_keys(n, "/net",
                    {"depth", "filters", "head_filters", "leaky_slope", "input_shape"});
        read(n, "/net", "depth", c.net.depth);
        read(n, "/net", "filters", c.net.filters);
        read(n, "/net", "head_filters", c.net.head_filters);
        read(n, "/net", "leaky_slope", c.net.leaky_slope);
        read_vec3i(n, "/net", "input_shape", c.input_shape);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        expect_keys(t, "/train",
                    {"design", "lr", "accumulation", "scheduler", "max_epochs", "seed",
                     "reg_init_weight", "val_pairs", "step1_fraction"});
        if (t.contains("design")) c.design = design_from_string(t.at("design").get<std::string>());
        read(t, "/train", "lr", c.lr);
        read(t, "/train", "accumulation", c.accumulation);
        read(t, "/train", "max_epochs", c.max_epochs);
        read(t, "/train", "seed", c.train_seed);
        read(t, "/train", "reg_init_weight", c.reg_init_weight);
        read(t, "/train", "val_pairs", c.val_pairs);
        read(t, "/train", "step1_fraction", c.step1_fraction);
        if (t.contains("scheduler")) {
            const auto& s = t["scheduler"];
            expect_keys(s, "/train/scheduler", {"factor", "patience", "min_delta_rel"});
            read(s, "/train/scheduler", "factor", c.scheduler.factor);
            read(s, "/train/scheduler", "patience", c.scheduler.patience);
            read(s, "/train/scheduler", "min_delta_rel", c.scheduler.min_delta_rel);
        }
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        expect_keys(e, "/eval", {"pairs", "seed"});
        read(e, "/eval", "pairs", c.eval_pairs);
        read(e, "/eval", "seed", c.eval_seed);
    }

    // paths resolve relative to the config file
    std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
    };
    resolve(c.manifest);
    resolve(c.out_dir);
    resolve(c.pairs_dir);
    if (c.pairs_dir.empty()) c.pairs_dir = (std::filesystem::path(c.out_dir) / "pairs").string();

    c.net.validate();
    c.net.validate_input_shape(c.input_shape);
    c.augment.validate();
    return c;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.design = design;
    t.lr = lr;
    t.accumulation = accumulation;
    t.scheduler = scheduler;
    t.max_epochs = max_epochs;
    t.seed = train_seed;
    t.augment = augment;
    t.net = net;
    t.reg_init_weight = reg_init_weight;
    t.val_pairs = val_pairs;
    t.step1_fraction = step1_fraction;
    return t;
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["data"] = {{"manifest", manifest},
                 {"out_dir", out_dir},
                 {"pairs_dir", pairs_dir},
                 {"target_spacing", target_spacing},
                 {"crop_to_mask", crop_to_mask},
                 {"crop_margin_mm", crop_margin_mm}};
    j["augment"] = {{"gamma_range", {augment.gamma_lo, augment.gamma_hi}},
                    {"brightness_frac", augment.brightness_frac},
                    {"max_rotation_deg", augment.max_rotation_deg},
                    {"max_rigid_translation_mm", augment.max_rigid_translation_mm},
                    {"max_nonrigid_mm", augment.max_nonrigid_mm},
                    {"control_grid", augment.control_grid},
                    {"tps_ridge", augment.tps_ridge},
                    {"seed", augment.seed}};
    j["net"] = {{"depth", net.depth},
                {"filters", net.filters},
                {"head_filters", net.head_filters},
                {"leaky_slope", net.leaky_slope},
                {"input_shape", input_shape}};
    j["train"] = {{"design", design_name(design)},
                  {"lr", lr},
                  {"accumulation", accumulation},
                  {"scheduler",
                   {{"factor", scheduler.factor},
                    {"patience", scheduler.patience},
                    {"min_delta_rel", scheduler.min_delta_rel}}},
                  {"max_epochs", max_epochs},
                  {"seed", train_seed},
                  {"reg_init_weight", reg_init_weight},
                  {"val_pairs", val_pairs},
                  {"step1_fraction", step1_fraction}};
    j["eval"] = {{"pairs", eval_pairs}, {"seed", eval_seed}};
    return j.dump(2);
}

}  // namespace ddreg
