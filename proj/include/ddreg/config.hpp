#pragma once

#include <string>

#include "ddreg/train.hpp"

namespace ddreg {

// Experiment configuration: one JSON document with sections
// {data, augment, net, train, eval}. Every default mirrors the reference
// values baked into the module defaults; the "desk" profile swaps in a small
// net and volume size so the full pipeline runs on a workstation. Unknown
// keys are rejected with a JSON pointer; relative paths resolve against the
// config file's directory.
struct ExperimentConfig {
    // data
    std::string manifest;
    std::string out_dir = "out";
    std::string pairs_dir;  // defaults to <out_dir>/pairs
    double target_spacing = 1.0;
    bool crop_to_mask = false;
    double crop_margin_mm = 0.0;

    // net
    NetConfig net;
    std::array<int, 3> input_shape{128, 128, 128};

    // augment
    AugmentConfig augment;

    // train
    Design design = Design::UW_NSD;
    double lr = 1e-3;
    int accumulation = 8;
    SchedulerConfig scheduler;
    int max_epochs = 100000;
    std::uint64_t train_seed = 1;
    double reg_init_weight = 5e-3;
    int val_pairs = 4;
    double step1_fraction = 0.25;

    // eval
    int eval_pairs = 8;
    std::uint64_t eval_seed = 99;

    static ExperimentConfig defaults(const std::string& profile);  // "paper" | "desk"
    static ExperimentConfig load(const std::string& path, const std::string& profile = "paper");

    TrainConfig train_config() const;
    std::string to_json() const;
};

}  // namespace ddreg
