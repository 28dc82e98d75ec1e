#include "ddreg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ddreg/ddvol_io.hpp"
#include "ddreg/graph_ops.hpp"
#include "ddreg/rng.hpp"

namespace ddreg {

Design design_from_string(const std::string& s) {
    if (s == "BL-N") return Design::BL_N;
    if (s == "BL-NS") return Design::BL_NS;
    if (s == "SG-ND") return Design::SG_ND;
    if (s == "SG-NSD") return Design::SG_NSD;
    if (s == "UW-NSD") return Design::UW_NSD;
    if (s == "UW-NSDH") return Design::UW_NSDH;
    throw ValidationError("unknown design '" + s + "'");
}

std::string design_name(Design d) {
    switch (d) {
        case Design::BL_N: return "BL-N";
        case Design::BL_NS: return "BL-NS";
        case Design::SG_ND: return "SG-ND";
        case Design::SG_NSD: return "SG-NSD";
        case Design::UW_NSD: return "UW-NSD";
        case Design::UW_NSDH: return "UW-NSDH";
    }
    return "?";
}

std::vector<LossKind> design_losses(Design d) {
    switch (d) {
        case Design::BL_N: return {LossKind::NCC};
        case Design::BL_NS: return {LossKind::NCC, LossKind::SSIM};
        case Design::SG_ND: return {LossKind::NCC, LossKind::DSC};
        case Design::SG_NSD: return {LossKind::NCC, LossKind::SSIM, LossKind::DSC};
        case Design::UW_NSD: return {LossKind::NCC, LossKind::SSIM, LossKind::DSC};
        case Design::UW_NSDH: return {LossKind::NCC, LossKind::SSIM, LossKind::DSC, LossKind::HD};
    }
    return {};
}

bool design_weights_trainable(Design d) {
    return d == Design::UW_NSD || d == Design::UW_NSDH;
}

bool design_uses_labels(Design d) {
    for (LossKind k : design_losses(d))
        if (k == LossKind::DSC || k == LossKind::HD) return true;
    return false;
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ValidationError("TrainConfig: lr must be > 0");
    if (accumulation < 1) throw ValidationError("TrainConfig: accumulation must be >= 1");
    if (max_epochs < 0) throw ValidationError("TrainConfig: max_epochs must be >= 0");
    if (!(scheduler.factor > 0 && scheduler.factor < 1))
        throw ValidationError("TrainConfig: scheduler factor must be in (0,1)");
    if (scheduler.patience < 1) throw ValidationError("TrainConfig: scheduler patience must be >= 1");
    if (!(reg_init_weight > 0 && reg_init_weight < 1))
        throw ValidationError("TrainConfig: reg_init_weight must be in (0,1)");
    if (val_pairs < 1) throw ValidationError("TrainConfig: need at least one validation pair");
    if (!(step1_fraction > 0 && step1_fraction < 1))
        throw ValidationError("TrainConfig: step1_fraction must be in (0,1)");
    augment.validate();
    net.validate();
}

bool PlateauScheduler::observe(double val_loss) {
    if (val_loss < best_ * (1.0 - cfg_.min_delta_rel)) {
        best_ = val_loss;
        stalled_ = 0;
        return false;
    }
    if (++stalled_ >= cfg_.patience) {
        lr_ *= cfg_.factor;
        stalled_ = 0;
        return true;
    }
    return false;
}

void adam_step(std::vector<double>& value, const std::vector<double>& grad, AdamSlot& slot,
               const AdamConfig& cfg, double lr) {
    if (grad.size() != value.size()) throw ShapeError("adam_step: grad/value size mismatch");
    if (slot.m.size() != value.size()) {
        slot.m.assign(value.size(), 0.0);
        slot.v.assign(value.size(), 0.0);
    }
    slot.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.step));
    for (std::size_t i = 0; i < value.size(); ++i) {
        slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * grad[i];
        slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        double mhat = slot.m[i] / bc1;
        double vhat = slot.v[i] / bc2;
        value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t VAL_STREAM = 1;
constexpr const char* LOGITS_NAME = "uw.logits";

struct SampleContext {
    const Volume* fixed = nullptr;
    const LabelMap* fixed_labels = nullptr;
    OneHotStack fixed_onehot;
    std::vector<Volume> dt_maps;
    std::vector<std::uint8_t> dt_labels;
};

SampleContext make_context(const Volume& fixed, const LabelMap& labels, bool need_onehot, bool need_dt) {
    SampleContext ctx;
    ctx.fixed = &fixed;
    ctx.fixed_labels = &labels;
    if (need_onehot) ctx.fixed_onehot = OneHotStack::from_labelmap(labels);
    if (need_dt) {
        // fixed masks never change during optimization, so one transform per
        // label per volume is enough
        for (std::uint8_t l : labels.labels) {
            ctx.dt_maps.push_back(distance_transform(labels, l));
            ctx.dt_labels.push_back(l);
        }
    }
    return ctx;
}

struct BuiltGraph {
    ad::NodePtr root;
    std::vector<double> term_values;  // design losses then regularizer
    std::vector<std::pair<Parameter*, ad::NodePtr>> leaves;
};

BuiltGraph build_loss_graph(const SampleContext& ctx, const AugmentSample& sample, ParameterStore& store,
                            const TrainConfig& cfg, bool with_grad) {
    BuiltGraph g;
    const Volume& fixed = *ctx.fixed;
    ad::NodePtr phi = unet_graph(fixed, sample.moving, store, cfg.net, g.leaves, with_grad);

    ad::NodePtr pred = ad::warp_volume_node(sample.moving, phi, fixed.grid);

    std::vector<LossKind> kinds = design_losses(cfg.design);
    bool needs_stack = design_uses_labels(cfg.design);
    ad::NodePtr warped_stack;
    if (needs_stack) {
        if (ctx.fixed_onehot.channels.empty())
            throw ValidationError("training design " + design_name(cfg.design) +
                                  " needs segmentations, but the fixed labels are empty");
        OneHotStack moving_onehot =
            OneHotStack::from_labelmap(sample.moving_labels, ctx.fixed_onehot.channel_labels);
        warped_stack = ad::warp_onehot_node(moving_onehot, phi);
    }

    std::vector<ad::NodePtr> terms;
    for (LossKind k : kinds) {
        switch (k) {
            case LossKind::NCC: terms.push_back(ad::ncc_loss_node(pred, fixed)); break;
            case LossKind::SSIM: terms.push_back(ad::ssim_loss_node(pred, fixed)); break;
            case LossKind::DSC: terms.push_back(ad::dice_loss_node(warped_stack, ctx.fixed_onehot)); break;
            case LossKind::HD:
                terms.push_back(ad::hd_loss_node(warped_stack, ctx.dt_maps, ctx.dt_labels,
                                                 ctx.fixed_onehot.channel_labels));
                break;
            case LossKind::REG: break;
        }
    }
    terms.push_back(ad::smoothness_node(phi, fixed.grid));

    Parameter& logits = store.get(LOGITS_NAME);
    ad::Shape ls{1, static_cast<int>(logits.value.size()), 1, 1, 1};
    ad::NodePtr logits_leaf = ad::leaf(ls, logits.value, with_grad && logits.trainable, LOGITS_NAME);
    g.leaves.push_back({&logits, logits_leaf});

    g.root = ad::combine_node(terms, logits_leaf);
    for (const auto& t : terms) g.term_values.push_back(t->value[0]);
    return g;
}

WeightState state_from_store(const ParameterStore& store, Design design) {
    WeightState s;
    s.loss_kinds = design_losses(design);
    s.n_regs = 1;
    s.logits = store.get(LOGITS_NAME).value;
    s.trainable = design_weights_trainable(design);
    return s;
}

struct Phase {
    int epochs = 0;
    bool freeze_encoder = false;
    int tag = 0;
};

void check_checkpoint_compatible(const ParameterStore& ckpt, const ParameterStore& expect) {
    std::vector<std::string> bad;
    for (const auto& p : expect.all()) {
        if (!ckpt.contains(p.name)) {
            bad.push_back(p.name + " (missing)");
        } else if (ckpt.get(p.name).shape != p.shape) {
            bad.push_back(p.name + " (shape mismatch)");
        }
    }
    for (const auto& p : ckpt.all())
        if (!expect.contains(p.name)) bad.push_back(p.name + " (unexpected)");
    if (!bad.empty()) {
        std::string msg = "checkpoint incompatible with configuration:";
        for (const auto& b : bad) msg += " " + b + ";";
        throw ValidationError(msg);
    }
}

ParameterStore expected_store(const TrainConfig& cfg) {
    ParameterStore store = init_unet_params(cfg.net, cfg.seed);
    WeightState ws = init_weights(design_losses(cfg.design), 1, cfg.reg_init_weight);
    Parameter& logits = store.add(LOGITS_NAME, {static_cast<int>(ws.logits.size())},
                                  design_weights_trainable(cfg.design));
    logits.value = ws.logits;
    return store;
}

TrainResult train_impl(const TrainingSet& tr, const TrainingSet& val, const TrainConfig& cfg,
                       const ParameterStore* init_from, const std::vector<Phase>& phases) {
    cfg.validate();
    if (tr.images.empty()) throw ValidationError("train: empty training set");
    if (val.images.empty()) throw ValidationError("train: empty validation set");
    if (tr.images.size() != tr.labels.size() || val.images.size() != val.labels.size())
        throw ValidationError("train: image/label count mismatch");
    for (const auto& v : tr.images) cfg.net.validate_input_shape(v.grid.shape);
    for (const auto& v : val.images) cfg.net.validate_input_shape(v.grid.shape);

    ParameterStore store = expected_store(cfg);
    if (init_from) {
        check_checkpoint_compatible(*init_from, store);
        for (const auto& p : init_from->all()) store.get(p.name).value = p.value;
    }
    store.set_all_trainable(true);
    store.get(LOGITS_NAME).trainable = design_weights_trainable(cfg.design);

    const bool needs_labels = design_uses_labels(cfg.design);
    const bool needs_dt =
        std::find(design_losses(cfg.design).begin(), design_losses(cfg.design).end(), LossKind::HD) !=
        design_losses(cfg.design).end();

    std::vector<SampleContext> train_ctx, val_ctx;
    for (std::size_t i = 0; i < tr.images.size(); ++i)
        train_ctx.push_back(make_context(tr.images[i], tr.labels[i], needs_labels, needs_dt));
    for (std::size_t i = 0; i < val.images.size(); ++i)
        val_ctx.push_back(make_context(val.images[i], val.labels[i], needs_labels, needs_dt));

    // Fixed validation pair set: same pairs every epoch so the plateau
    // scheduler sees a noise-free signal.
    struct ValPair {
        std::size_t volume;
        AugmentSample sample;
    };
    std::vector<ValPair> val_set;
    {
        AugmentConfig vcfg = cfg.augment;
        vcfg.seed = Rng::keyed(cfg.seed, 0, VAL_STREAM).next_u64();
        for (int j = 0; j < cfg.val_pairs; ++j) {
            std::size_t vi = static_cast<std::size_t>(j) % val.images.size();
            val_set.push_back({vi, generate_pair(val.images[vi], val.labels[vi], vcfg, j)});
        }
    }

    // Precomputed-pairs mode reuses the first epoch's samples (timing
    // comparison for the augmentation layer).
    std::vector<AugmentSample> precomputed;
    if (cfg.precompute_pairs)
        for (std::size_t i = 0; i < tr.images.size(); ++i)
            precomputed.push_back(generate_pair(tr.images[i], tr.labels[i], cfg.augment, i));

    std::vector<AdamSlot> slots(store.all().size());
    AdamConfig acfg;
    PlateauScheduler scheduler(cfg.scheduler, cfg.lr);

    TrainResult result;
    result.log.best_val = std::numeric_limits<double>::infinity();
    std::uint64_t sample_counter = 0;
    int accum_count = 0;
    int epoch_index = 0;
    std::size_t n_terms = design_losses(cfg.design).size() + 1;

    store.zero_grads();
    for (const auto& phase : phases) {
        store.set_trainable_prefix("enc.", !phase.freeze_encoder);
        for (int pe = 0; pe < phase.epochs; ++pe) {
            ++epoch_index;
            auto t0 = std::chrono::steady_clock::now();

            double train_loss_sum = 0;
            std::vector<double> term_sums(n_terms, 0.0);
            for (std::size_t i = 0; i < tr.images.size(); ++i) {
                const AugmentSample* sample;
                AugmentSample generated;
                if (cfg.precompute_pairs) {
                    sample = &precomputed[i];
                } else {
                    generated = generate_pair(tr.images[i], tr.labels[i], cfg.augment, sample_counter);
                    sample = &generated;
                }
                BuiltGraph g;
                try {
                    g = build_loss_graph(train_ctx[i], *sample, store, cfg, /*with_grad=*/true);
                } catch (const NumericError& e) {
                    throw NumericError("train: sample " + std::to_string(sample_counter) + ": " + e.what());
                }
                ad::backward(g.root);
                for (auto& [param, node] : g.leaves) {
                    if (node->grad.empty()) continue;
                    for (std::size_t j = 0; j < param->grad.size(); ++j) param->grad[j] += node->grad[j];
                }
                train_loss_sum += g.root->value[0];
                for (std::size_t t = 0; t < n_terms; ++t) term_sums[t] += g.term_values[t];

                ++sample_counter;
                if (++accum_count == cfg.accumulation) {
                    std::vector<double> mean_grad;
                    for (std::size_t p = 0; p < store.all().size(); ++p) {
                        Parameter& param = store.all()[p];
                        if (!param.trainable) continue;
                        mean_grad = param.grad;
                        for (auto& gv : mean_grad) gv /= cfg.accumulation;
                        adam_step(param.value, mean_grad, slots[p], acfg, scheduler.lr());
                    }
                    store.zero_grads();
                    accum_count = 0;
                }
            }
            auto t1 = std::chrono::steady_clock::now();

            double val_loss = 0;
            for (const auto& vp : val_set) {
                BuiltGraph g = build_loss_graph(val_ctx[vp.volume], vp.sample, store, cfg,
                                                /*with_grad=*/false);
                val_loss += g.root->value[0];
            }
            val_loss /= val_set.size();

            WeightState ws = state_from_store(store, cfg.design);
            record_weights(ws, epoch_index, result.weight_history);

            EpochLog log;
            log.epoch = epoch_index;
            log.phase = phase.tag;
            log.train_loss = train_loss_sum / tr.images.size();
            log.val_loss = val_loss;
            std::vector<LossKind> kinds = design_losses(cfg.design);
            for (std::size_t t = 0; t < kinds.size(); ++t) {
                double mean = term_sums[t] / tr.images.size();
                switch (kinds[t]) {
                    case LossKind::NCC: log.comp_ncc = mean; break;
                    case LossKind::SSIM: log.comp_ssim = mean; break;
                    case LossKind::DSC: log.comp_dsc = mean; break;
                    case LossKind::HD: log.comp_hd = mean; break;
                    case LossKind::REG: break;
                }
            }
            log.comp_reg = term_sums[n_terms - 1] / tr.images.size();
            std::vector<double> w = ws.weights();
            for (std::size_t t = 0; t < kinds.size(); ++t) {
                switch (kinds[t]) {
                    case LossKind::NCC: log.w_ncc = w[t]; break;
                    case LossKind::SSIM: log.w_ssim = w[t]; break;
                    case LossKind::DSC: log.w_dsc = w[t]; break;
                    case LossKind::HD: log.w_hd = w[t]; break;
                    case LossKind::REG: break;
                }
            }
            log.w_reg = w.back();
            log.lr = scheduler.lr();
            log.seconds = std::chrono::duration<double>(t1 - t0).count();
            log.augment_on = !cfg.precompute_pairs;

            if (val_loss < result.log.best_val) {
                result.log.best_val = val_loss;
                result.log.best_epoch = epoch_index;
                result.best_params = store;
                log.is_best = true;
            }

            scheduler.observe(val_loss);

            result.log.epochs.push_back(std::move(log));
        }
    }

    result.final_params = store;
    if (result.log.best_epoch < 0) result.best_params = store;  // zero-epoch run
    result.weight_state = state_from_store(store, cfg.design);
    return result;
}

}  // namespace

TrainResult train(const TrainingSet& train_set, const TrainingSet& val_set, const TrainConfig& cfg) {
    return train_impl(train_set, val_set, cfg, nullptr, {{cfg.max_epochs, false, 0}});
}

TrainResult finetune_full(const ParameterStore& checkpoint, const TrainingSet& train_set,
                          const TrainingSet& val_set, TrainConfig cfg) {
    cfg.lr = 1e-4;  // transfer-learning rate
    return train_impl(train_set, val_set, cfg, &checkpoint, {{cfg.max_epochs, false, 0}});
}

TrainResult finetune_two_step(const ParameterStore& checkpoint, const TrainingSet& train_set,
                              const TrainingSet& val_set, TrainConfig cfg, int step1_epochs) {
    cfg.lr = 1e-4;
    if (step1_epochs < 0)
        step1_epochs = static_cast<int>(std::llround(cfg.step1_fraction * cfg.max_epochs));
    step1_epochs = std::clamp(step1_epochs, 0, cfg.max_epochs);
    TrainResult r = train_impl(train_set, val_set, cfg, &checkpoint,
                               {{step1_epochs, true, 1}, {cfg.max_epochs - step1_epochs, false, 2}});
    r.log.phase_boundary_epoch = step1_epochs;
    return r;
}

OverheadReport measure_augmentation_overhead(const TrainingSet& train_set, const TrainingSet& val_set,
                                             TrainConfig cfg, int epochs) {
    if (epochs < 2) throw ValidationError("measure_augmentation_overhead: need >= 2 epochs");
    cfg.max_epochs = epochs;

    OverheadReport report;
    cfg.precompute_pairs = false;
    TrainResult with_aug = train(train_set, val_set, cfg);
    cfg.precompute_pairs = true;
    TrainResult without = train(train_set, val_set, cfg);

    // first epoch is warm-up; the second is the measurement
    report.seconds_augmented = with_aug.log.epochs[1].seconds;
    report.seconds_precomputed = without.log.epochs[1].seconds;
    report.overhead_ratio =
        (report.seconds_augmented - report.seconds_precomputed) / report.seconds_precomputed;
    return report;
}

// ---------------------------------------------------------------------------

std::string RunLog::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,phase,train_loss,val_loss,ncc,ssim,dsc,hd,reg,"
           "w_ncc,w_ssim,w_dsc,w_hd,lambda_reg,lr,seconds,augment,best\n";
    for (const auto& e : epochs) {
        out << e.epoch << "," << e.phase << "," << e.train_loss << "," << e.val_loss << "," << e.comp_ncc
            << "," << e.comp_ssim << "," << e.comp_dsc << "," << e.comp_hd << "," << e.comp_reg << ","
            << e.w_ncc << "," << e.w_ssim << "," << e.w_dsc << "," << e.w_hd << "," << e.w_reg << ","
            << e.lr << "," << e.seconds << "," << (e.augment_on ? 1 : 0) << "," << (e.is_best ? 1 : 0)
            << "\n";
    }
    return out.str();
}

std::string RunLog::summary_json() const {
    nlohmann::json j;
    j["epochs"] = epochs.size();
    j["best_epoch"] = best_epoch;
    j["best_val_loss"] = best_val;
    j["phase_boundary_epoch"] = phase_boundary_epoch;
    if (!epochs.empty()) {
        j["final_lr"] = epochs.back().lr;
        j["final_val_loss"] = epochs.back().val_loss;
    }
    return j.dump(2);
}

// ---------------------------------------------------------------------------

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest: malformed JSON in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw ValidationError("manifest: top level must be a JSON list");
    std::filesystem::path base = std::filesystem::path(path).parent_path();
    DatasetManifest m;
    for (const auto& e : j) {
        DatasetEntry entry;
        entry.fixed = e.at("fixed").get<std::string>();
        entry.labels = e.value("labels", "");
        entry.split = e.at("split").get<std::string>();
        if (entry.split != "train" && entry.split != "val" && entry.split != "test")
            throw ValidationError("manifest: split must be train|val|test, got '" + entry.split + "'");
        auto resolve = [&](std::string& p) {
            if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
        };
        resolve(entry.fixed);
        resolve(entry.labels);
        m.entries.push_back(std::move(entry));
    }
    return m;
}

void DatasetManifest::save(const std::string& path) const {
    // entries are written relative to the manifest so the directory moves as
    // a unit; load() resolves them back
    std::filesystem::path base = std::filesystem::absolute(path).parent_path();
    auto rel = [&](const std::string& p) -> std::string {
        if (p.empty()) return p;
        std::error_code ec;
        auto r = std::filesystem::relative(std::filesystem::absolute(p), base, ec);
        return ec ? p : r.string();
    };
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries)
        j.push_back({{"fixed", rel(e.fixed)}, {"labels", rel(e.labels)}, {"split", e.split}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("manifest: cannot write " + path);
    out << j.dump(2) << "\n";
}

TrainingSet DatasetManifest::load_split(const std::string& split) const {
    TrainingSet set;
    for (const auto& e : entries) {
        if (e.split != split) continue;
        Volume v = load_volume(e.fixed);
        LabelMap l;
        if (!e.labels.empty()) {
            l = load_labelmap(e.labels);
        } else {
            l = LabelMap(v.grid, std::vector<std::uint8_t>(v.grid.voxel_count(), 0));
        }
        set.images.push_back(std::move(v));
        set.labels.push_back(std::move(l));
    }
    return set;
}

}  // namespace ddreg
