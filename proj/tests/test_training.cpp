#include <doctest.h>

#include "ddreg/synth.hpp"
#include "ddreg/threading.hpp"
#include "ddreg/train.hpp"
#include "oracles.hpp"

using namespace ddreg;

namespace {

TrainingSet phantom_set(int count, std::uint64_t seed, int extent = 8,
                        PhantomKind kind = PhantomKind::Sphere) {
    TrainingSet set;
    for (int i = 0; i < count; ++i) {
        Phantom ph = make_phantom(kind, {extent, extent, extent}, 1.0, seed, i);
        set.images.push_back(std::move(ph.image));
        set.labels.push_back(std::move(ph.labels));
    }
    return set;
}

TrainConfig tiny_config(Design design, int epochs) {
    TrainConfig cfg;
    cfg.design = design;
    cfg.max_epochs = epochs;
    cfg.accumulation = 2;
    cfg.val_pairs = 2;
    cfg.seed = 21;
    cfg.net.depth = 2;
    cfg.net.filters = {2, 3};
    cfg.net.head_filters = 2;
    cfg.augment.control_grid = {3, 3, 3};
    cfg.augment.max_rotation_deg = 3;
    cfg.augment.max_rigid_translation_mm = 1.0;
    cfg.augment.max_nonrigid_mm = 0.5;
    cfg.augment.seed = 33;
    return cfg;
}

bool stores_equal(const ParameterStore& a, const ParameterStore& b) {
    if (a.all().size() != b.all().size()) return false;
    for (std::size_t i = 0; i < a.all().size(); ++i) {
        if (a.all()[i].name != b.all()[i].name) return false;
        if (a.all()[i].value != b.all()[i].value) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("adam: zero gradient leaves parameters unchanged but advances the step") {
    std::vector<double> x = {1.0, -2.0, 0.5};
    std::vector<double> g(3, 0.0);
    AdamSlot slot;
    AdamConfig cfg;
    adam_step(x, g, slot, cfg, 1e-3);
    CHECK(x == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(slot.step == 1);
}

TEST_CASE("adam: unit gradient on the first step moves by -lr") {
    std::vector<double> x = {0.0};
    AdamSlot slot;
    AdamConfig cfg;
    adam_step(x, {1.0}, slot, cfg, 0.01);
    CHECK(x[0] == doctest::Approx(-0.01).epsilon(1e-6));  // m_hat/sqrt(v_hat) = 1
}

TEST_CASE("adam matches the reference recurrence over random sequences") {
    Rng rng(5);
    std::vector<double> x = {0.3, -0.7, 1.1, 0.0};
    std::vector<double> xref = x;
    AdamSlot slot;
    AdamConfig cfg;
    oracle::AdamRef ref;
    for (int step = 0; step < 5; ++step) {
        std::vector<double> g(4);
        for (auto& v : g) v = rng.uniform(-2, 2);
        adam_step(x, g, slot, cfg, 3e-3);
        ref.step(xref, g, 3e-3);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(x[i] - xref[i]) <= 1e-12);
    }
}

TEST_CASE("plateau scheduler reduces by exactly the factor after patience stalls") {
    SchedulerConfig sc;
    sc.factor = 0.1;
    sc.patience = 3;
    sc.min_delta_rel = 1e-4;
    PlateauScheduler sched(sc, 1e-3);

    CHECK_FALSE(sched.observe(1.0));   // improvement (first value)
    CHECK_FALSE(sched.observe(0.5));   // improvement
    CHECK_FALSE(sched.observe(0.5));   // stall 1 (insufficient delta)
    CHECK_FALSE(sched.observe(0.49997));  // stall 2: relative delta < 1e-4
    CHECK(sched.observe(0.5));         // stall 3 -> reduce
    CHECK(sched.lr() == doctest::Approx(1e-4).epsilon(1e-12));
    // counter restarts after the reduction
    CHECK_FALSE(sched.observe(0.6));
    CHECK_FALSE(sched.observe(0.6));
    CHECK(sched.observe(0.6));
    CHECK(sched.lr() == doctest::Approx(1e-5).epsilon(1e-12));
    // improvements keep lr fixed: lr never increases
    CHECK_FALSE(sched.observe(0.3));
    CHECK(sched.lr() == doctest::Approx(1e-5).epsilon(1e-12));
}

TEST_CASE("identity augmentation with NCC starts at (near) zero loss") {
    TrainingSet tr = phantom_set(1, 3);
    TrainingSet val = phantom_set(1, 4);
    TrainConfig cfg = tiny_config(Design::BL_N, 1);
    cfg.accumulation = 1;
    cfg.augment.gamma_lo = cfg.augment.gamma_hi = 1.0;
    cfg.augment.brightness_frac = 0;
    cfg.augment.max_rotation_deg = 0;
    cfg.augment.max_rigid_translation_mm = 0;
    cfg.augment.max_nonrigid_mm = 0;
    TrainResult r = train(tr, val, cfg);
    // zero-init output conv => identity warp; moving == fixed => NCC term ~ 0
    CHECK(r.log.epochs[0].comp_ncc == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("accumulating 8 identical samples equals one step on one sample") {
    // identity augmentation makes every sample identical regardless of index
    TrainConfig base = tiny_config(Design::SG_ND, 1);
    base.augment.gamma_lo = base.augment.gamma_hi = 1.0;
    base.augment.brightness_frac = 0;
    base.augment.max_rotation_deg = 0;
    base.augment.max_rigid_translation_mm = 0;
    base.augment.max_nonrigid_mm = 0;

    Phantom ph = make_phantom(PhantomKind::Sphere, {8, 8, 8}, 1.0, 9, 0);
    TrainingSet val = phantom_set(1, 10);

    TrainingSet eight;
    for (int i = 0; i < 8; ++i) {
        eight.images.push_back(ph.image);
        eight.labels.push_back(ph.labels);
    }
    TrainConfig cfg8 = base;
    cfg8.accumulation = 8;
    TrainResult r8 = train(eight, val, cfg8);

    TrainingSet one;
    one.images.push_back(ph.image);
    one.labels.push_back(ph.labels);
    TrainConfig cfg1 = base;
    cfg1.accumulation = 1;
    TrainResult r1 = train(one, val, cfg1);

    CHECK(stores_equal(r8.final_params, r1.final_params));
}

TEST_CASE("training is bit-deterministic across runs and thread counts") {
    TrainingSet tr = phantom_set(2, 11);
    TrainingSet val = phantom_set(1, 12);
    TrainConfig cfg = tiny_config(Design::SG_ND, 2);

    int saved = thread_count();
    set_thread_count(1);
    TrainResult a = train(tr, val, cfg);
    TrainResult b = train(tr, val, cfg);
    set_thread_count(3);
    TrainResult c = train(tr, val, cfg);
    set_thread_count(saved);

    CHECK(stores_equal(a.final_params, b.final_params));
    CHECK(stores_equal(a.final_params, c.final_params));
    REQUIRE(a.log.epochs.size() == c.log.epochs.size());
    for (std::size_t e = 0; e < a.log.epochs.size(); ++e) {
        CHECK(a.log.epochs[e].train_loss == c.log.epochs[e].train_loss);
        CHECK(a.log.epochs[e].val_loss == c.log.epochs[e].val_loss);
    }
}

TEST_CASE("best checkpoint carries the minimum validation loss in the log") {
    TrainingSet tr = phantom_set(2, 13);
    TrainingSet val = phantom_set(1, 14);
    TrainConfig cfg = tiny_config(Design::BL_N, 4);
    TrainResult r = train(tr, val, cfg);
    double min_val = std::numeric_limits<double>::infinity();
    int min_epoch = -1;
    for (const auto& e : r.log.epochs)
        if (e.val_loss < min_val) {
            min_val = e.val_loss;
            min_epoch = e.epoch;
        }
    CHECK(r.log.best_val == min_val);
    CHECK(r.log.best_epoch == min_epoch);
    int best_flags = 0;
    for (const auto& e : r.log.epochs) best_flags += e.is_best ? 1 : 0;
    CHECK(best_flags >= 1);
}

TEST_CASE("UW designs move the loss weights, frozen designs do not") {
    TrainingSet tr = phantom_set(2, 15);
    TrainingSet val = phantom_set(1, 16);

    TrainConfig uw = tiny_config(Design::UW_NSD, 2);
    TrainResult r = train(tr, val, uw);
    const Parameter& logits = r.final_params.get("uw.logits");
    WeightState init = init_weights(design_losses(Design::UW_NSD), 1, uw.reg_init_weight);
    bool moved = false;
    for (std::size_t i = 0; i < logits.value.size(); ++i)
        if (logits.value[i] != init.logits[i]) moved = true;
    CHECK(moved);

    TrainConfig sg = tiny_config(Design::SG_NSD, 2);
    TrainResult r2 = train(tr, val, sg);
    const Parameter& frozen = r2.final_params.get("uw.logits");
    WeightState init2 = init_weights(design_losses(Design::SG_NSD), 1, sg.reg_init_weight);
    for (std::size_t i = 0; i < frozen.value.size(); ++i) CHECK(frozen.value[i] == init2.logits[i]);
}

TEST_CASE("finetune for zero epochs returns the checkpoint bit-identically") {
    TrainingSet tr = phantom_set(2, 17);
    TrainingSet val = phantom_set(1, 18);
    TrainConfig cfg = tiny_config(Design::SG_ND, 1);
    TrainResult source = train(tr, val, cfg);

    TrainConfig ft = cfg;
    ft.max_epochs = 0;
    TrainResult r = finetune_full(source.best_params, tr, val, ft);
    CHECK(stores_equal(r.final_params, source.best_params));
}

TEST_CASE("two-step finetune freezes the encoder through phase 1") {
    TrainingSet tr = phantom_set(2, 19);
    TrainingSet val = phantom_set(1, 20);
    TrainConfig cfg = tiny_config(Design::SG_ND, 2);
    TrainResult source = train(tr, val, cfg);

    TrainConfig ft = cfg;
    ft.max_epochs = 4;
    // phase 1 only: stop at the boundary and compare encoder tensors
    TrainResult phase1 = finetune_two_step(source.best_params, tr, val, ft, 4);
    for (const auto& p : phase1.final_params.all()) {
        if (p.name.rfind("enc.", 0) == 0) {
            CHECK(p.value == source.best_params.get(p.name).value);
        }
    }
    // decoder must actually have trained
    bool decoder_moved = false;
    for (const auto& p : phase1.final_params.all())
        if (p.name.rfind("dec.", 0) == 0 && p.value != source.best_params.get(p.name).value)
            decoder_moved = true;
    CHECK(decoder_moved);

    TrainResult both = finetune_two_step(source.best_params, tr, val, ft, 2);
    CHECK(both.log.phase_boundary_epoch == 2);
    REQUIRE(both.log.epochs.size() == 4);
    CHECK(both.log.epochs[0].phase == 1);
    CHECK(both.log.epochs[1].phase == 1);
    CHECK(both.log.epochs[2].phase == 2);
    CHECK(both.log.epochs[3].phase == 2);
}

TEST_CASE("finetune rejects incompatible checkpoints, naming the tensors") {
    TrainingSet tr = phantom_set(1, 21);
    TrainingSet val = phantom_set(1, 22);
    TrainConfig cfg = tiny_config(Design::SG_ND, 1);
    TrainResult source = train(tr, val, cfg);

    TrainConfig other = cfg;
    other.net.filters = {3, 3};
    try {
        finetune_full(source.best_params, tr, val, other);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("enc.0.conv.kernel") != std::string::npos);
    }
}

TEST_CASE("empty training or validation sets are rejected") {
    TrainingSet empty;
    TrainingSet val = phantom_set(1, 23);
    TrainConfig cfg = tiny_config(Design::BL_N, 1);
    CHECK_THROWS_AS(train(empty, val, cfg), ValidationError);
    CHECK_THROWS_AS(train(val, empty, cfg), ValidationError);
}

TEST_CASE("segmentation-guided designs demand labels") {
    TrainingSet tr = phantom_set(1, 24);
    // strip the labels
    tr.labels[0] = LabelMap(tr.images[0].grid,
                            std::vector<std::uint8_t>(tr.images[0].grid.voxel_count(), 0));
    TrainingSet val = phantom_set(1, 25);
    TrainConfig cfg = tiny_config(Design::SG_ND, 1);
    CHECK_THROWS_AS(train(tr, val, cfg), ValidationError);
}

TEST_CASE("runlog CSV has the documented layout") {
    TrainingSet tr = phantom_set(1, 26);
    TrainingSet val = phantom_set(1, 27);
    TrainConfig cfg = tiny_config(Design::UW_NSDH, 1);
    TrainResult r = train(tr, val, cfg);
    std::string csv = r.log.to_csv();
    CHECK(csv.find("epoch,phase,train_loss,val_loss,ncc,ssim,dsc,hd,reg,"
                   "w_ncc,w_ssim,w_dsc,w_hd,lambda_reg,lr,seconds,augment,best") == 0);
    CHECK(r.log.epochs[0].w_reg == doctest::Approx(5e-3).epsilon(1e-6));
}

TEST_CASE("augmentation overhead measurement produces a finite ratio") {
    TrainingSet tr = phantom_set(2, 28);
    TrainingSet val = phantom_set(1, 29);
    TrainConfig cfg = tiny_config(Design::BL_N, 2);
    OverheadReport rep = measure_augmentation_overhead(tr, val, cfg, 2);
    CHECK(std::isfinite(rep.overhead_ratio));
    CHECK(rep.seconds_augmented > 0);
    CHECK(rep.seconds_precomputed > 0);
}

TEST_SUITE_END();
