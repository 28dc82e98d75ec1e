#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ddreg/augment.hpp"
#include "ddreg/net.hpp"
#include "ddreg/weighting.hpp"

namespace ddreg {

// The six ablation designs. BL/SG train with frozen weights; UW learns them.
enum class Design { BL_N, BL_NS, SG_ND, SG_NSD, UW_NSD, UW_NSDH };

Design design_from_string(const std::string& s);
std::string design_name(Design d);
std::vector<LossKind> design_losses(Design d);
bool design_weights_trainable(Design d);
bool design_uses_labels(Design d);

struct SchedulerConfig {
    double factor = 0.1;
    int patience = 10;          // epochs
    double min_delta_rel = 1e-4;
};

// Reduce-on-plateau: an epoch improves when its validation loss drops below
// the best seen by the relative margin; after `patience` consecutive
// non-improving epochs the rate is multiplied by `factor` and the stall
// count restarts.
class PlateauScheduler {
public:
    PlateauScheduler(const SchedulerConfig& cfg, double initial_lr)
        : cfg_(cfg), lr_(initial_lr) {}

    // Feed one epoch's validation loss; returns true when lr was reduced.
    bool observe(double val_loss);
    double lr() const { return lr_; }

private:
    SchedulerConfig cfg_;
    double lr_;
    double best_ = std::numeric_limits<double>::infinity();
    int stalled_ = 0;
};

struct TrainConfig {
    Design design = Design::UW_NSD;
    double lr = 1e-3;
    int accumulation = 8;
    SchedulerConfig scheduler;
    int max_epochs = 100;
    std::uint64_t seed = 1;          // parameter init + validation pair stream
    AugmentConfig augment;           // carries the sample stream seed
    NetConfig net;
    double reg_init_weight = 5e-3;
    int val_pairs = 4;
    double step1_fraction = 0.25;    // two-step finetune: phase-1 share of max_epochs
    bool precompute_pairs = false;   // reuse the first epoch's pairs (timing mode)

    void validate() const;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter Adam state; frozen parameters keep step 0 and zero moments.
struct AdamSlot {
    std::vector<double> m, v;
    std::int64_t step = 0;
};

// Standard bias-corrected update, in place.
void adam_step(std::vector<double>& value, const std::vector<double>& grad, AdamSlot& slot,
               const AdamConfig& cfg, double lr);

struct EpochLog {
    int epoch = 0;              // 1-based, monotone
    int phase = 0;              // 0 = scratch training, 1/2 = finetune phases
    double train_loss = 0;
    double val_loss = 0;
    double comp_ncc = 0, comp_ssim = 0, comp_dsc = 0, comp_hd = 0, comp_reg = 0;
    // softmax weights mapped onto fixed columns; absent terms stay 0
    double w_ncc = 0, w_ssim = 0, w_dsc = 0, w_hd = 0, w_reg = 0;
    double lr = 0;
    double seconds = 0;
    bool augment_on = true;
    bool is_best = false;
};

struct RunLog {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_val = 0;
    int phase_boundary_epoch = -1;  // two-step finetune only

    std::string to_csv() const;
    std::string summary_json() const;
};

// Fixed images with their segmentations, already preprocessed ([0,1],
// net-compatible shape).
struct TrainingSet {
    std::vector<Volume> images;
    std::vector<LabelMap> labels;
};

struct TrainResult {
    ParameterStore best_params;   // lowest validation loss
    ParameterStore final_params;
    WeightState weight_state;     // logits at the end of training
    RunLog log;
    WeightHistory weight_history;
};

// Weakly-supervised loop: per sample, synthesize a pair, predict the field,
// warp image and soft labels, combine the design's losses, and backprop;
// Adam steps on the mean gradient every `accumulation` samples. The plateau
// scheduler multiplies lr by `factor` after `patience` consecutive epochs
// without relative improvement `min_delta_rel` on the fixed validation pair
// set.
TrainResult train(const TrainingSet& train_set, const TrainingSet& val_set, const TrainConfig& cfg);

// Transfer learning at lr 1e-4: everything trainable.
TrainResult finetune_full(const ParameterStore& checkpoint, const TrainingSet& train_set,
                          const TrainingSet& val_set, TrainConfig cfg);

// Phase 1 freezes "enc." parameters for step1_epochs (< 0 picks
// round(step1_fraction * max_epochs)), phase 2 unfreezes everything.
TrainResult finetune_two_step(const ParameterStore& checkpoint, const TrainingSet& train_set,
                              const TrainingSet& val_set, TrainConfig cfg, int step1_epochs = -1);

struct OverheadReport {
    double seconds_augmented = 0;    // epoch 2 wall-clock, on-the-fly pairs
    double seconds_precomputed = 0;  // epoch 2 wall-clock, reused pairs
    double overhead_ratio = 0;       // (aug - pre) / pre
};

// Runs two short trainings differing only in pair generation and compares
// second-epoch wall-clock (the first epoch is warm-up).
OverheadReport measure_augmentation_overhead(const TrainingSet& train_set, const TrainingSet& val_set,
                                             TrainConfig cfg, int epochs = 3);

// ---- dataset manifests ----

struct DatasetEntry {
    std::string fixed;   // ddvol path
    std::string labels;  // ddvol path, may be empty
    std::string split;   // train | val | test
};

struct DatasetManifest {
    std::vector<DatasetEntry> entries;

    static DatasetManifest load(const std::string& path);  // paths resolved against the manifest dir
    void save(const std::string& path) const;
    TrainingSet load_split(const std::string& split) const;
};

}  // namespace ddreg
