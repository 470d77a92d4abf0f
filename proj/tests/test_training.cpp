#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "tempbev/training.hpp"

using namespace tempbev;
using model::ModelConfig;
using train::Checkpoint;
using train::TrainConfig;

namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.N = 8;
    cfg.M = 16;
    cfg.sa_layers = 1;
    cfg.h_bev = 16;
    cfg.w_bev = 16;
    cfg.c_bev = 16;
    cfg.S = 2;
    cfg.f = 2;
    cfg.p = 4;
    cfg.refine_width = 8;
    cfg.refine_blocks = 1;
    cfg.validate();
    return cfg;
}

std::vector<world::TemporalSample> make_split(const ModelConfig& mcfg,
                                              std::uint64_t seed0, int n) {
    world::WorldConfig wc;
    std::vector<world::TemporalSample> out;
    for (int i = 0; i < n; ++i) {
        const auto scn = world::generate_scenario(wc, seed0 + static_cast<std::uint64_t>(i));
        out.push_back(world::make_sample(scn, wc.reference_index, mcfg.bev_spec(), mcfg.S,
                                         mcfg.f, mcfg.p));
    }
    return out;
}

TrainConfig quick_train(std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch = 2;
    tc.lr = 1e-3;
    tc.seed = seed;
    return tc;
}

const Tensor& param_named(const Checkpoint& ck, const std::string& name) {
    for (const auto& [n, t] : ck.params)
        if (n == name) return t;
    FAIL("checkpoint has no parameter " << name);
    static Tensor dummy;
    return dummy;
}

}  // namespace

TEST_CASE("segmentation loss: closed form and shape guard") {
    Tensor gt({2, 4, 4});
    for (int i = 0; i < 8; ++i) gt[i] = 1.0;  // 8 positive of 32 cells
    const ad::Var zero_logits = ad::constant(Tensor({2, 4, 4}));
    // at z = 0 both branches cost ln 2; positives weighted by pos_weight
    const double expect = (2.0 * 8 + 24) * std::log(2.0) / 32.0;
    CHECK(train::segmentation_loss(zero_logits, gt, 2.0)->val[0] ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(train::segmentation_loss(ad::constant(Tensor({2, 4, 5})), gt, 1.0),
                    std::invalid_argument);
}

TEST_CASE("positive-class weight is the counted ratio, capped") {
    const ModelConfig mcfg = tiny_model();
    const auto samples = make_split(mcfg, 300, 2);
    double pos = 0, neg = 0;
    for (const auto& s : samples) {
        const Tensor& g = s.grids_for(world::SegClass::vehicle);
        const std::int64_t plane = static_cast<std::int64_t>(mcfg.h_bev) * mcfg.w_bev;
        for (std::int64_t i = 0; i < mcfg.f * plane; ++i) (g[i] == 1.0 ? pos : neg) += 1;
    }
    REQUIRE(pos > 0);
    const double w =
        train::compute_pos_weight(samples, world::SegClass::vehicle, mcfg.f, 1e9);
    CHECK(w == doctest::Approx(neg / pos));
    CHECK(train::compute_pos_weight(samples, world::SegClass::vehicle, mcfg.f, 1.5) == 1.5);
}

TEST_CASE("segmentation training descends and is deterministic in the seed") {
    const ModelConfig mcfg = tiny_model();
    const auto train_set = make_split(mcfg, 400, 4);
    const auto val_set = make_split(mcfg, 500, 2);
    world::WorldConfig wc;

    std::ostringstream log;
    const Checkpoint a = train::train_segmentation(quick_train(1), mcfg, wc.rig, train_set,
                                                   val_set, "fp-test", &log);
    CHECK(a.kind == "segmentation");
    CHECK(a.config_fingerprint == "fp-test");
    REQUIRE(static_cast<int>(a.history.size()) == 3);
    CHECK(a.history.back().train_loss < a.history.front().train_loss);
    for (const auto& rec : a.history) {
        CHECK(std::isfinite(rec.train_loss));
        CHECK(rec.val_iou >= 0.0);
        CHECK(rec.val_iou <= 1.0);
    }
    CHECK(log.str().find("\"epoch\"") != std::string::npos);

    const Checkpoint b = train::train_segmentation(quick_train(1), mcfg, wc.rig, train_set,
                                                   val_set, "fp-test", nullptr);
    REQUIRE(b.params.size() == a.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        CHECK(b.params[i].first == a.params[i].first);
        CHECK(max_abs_diff(b.params[i].second, a.params[i].second) == 0.0);
    }
    for (std::size_t e = 0; e < a.history.size(); ++e)
        CHECK(b.history[e].train_loss == a.history[e].train_loss);

    // a different seed changes the outcome
    const Checkpoint c = train::train_segmentation(quick_train(2), mcfg, wc.rig, train_set,
                                                   val_set, "fp-test", nullptr);
    CHECK(max_abs_diff(param_named(c, "cam_fuse.w"), param_named(a, "cam_fuse.w")) > 0.0);
}

TEST_CASE("camera-only training never touches the point-cloud frontend") {
    const ModelConfig mcfg = tiny_model();
    world::WorldConfig wc;
    TrainConfig tc = quick_train(3);
    tc.epochs = 2;
    tc.active = {true, false, true};

    const auto set_a = make_split(mcfg, 600, 3);
    const auto set_b = make_split(mcfg, 700, 3);
    const auto val = make_split(mcfg, 800, 1);
    const Checkpoint a = train::train_segmentation(tc, mcfg, wc.rig, set_a, val, "fp", nullptr);
    const Checkpoint b = train::train_segmentation(tc, mcfg, wc.rig, set_b, val, "fp", nullptr);
    CHECK(a.active.label() == "C+T");
    // different data moves the camera path but the unused lidar path stays at
    // its deterministic initialization
    CHECK(max_abs_diff(param_named(a, "cam_fuse.w"), param_named(b, "cam_fuse.w")) > 0.0);
    CHECK(max_abs_diff(param_named(a, "pillar.point_fc.w"),
                       param_named(b, "pillar.point_fc.w")) == 0.0);
    CHECK(max_abs_diff(param_named(a, "pillar_fuse.w"), param_named(b, "pillar_fuse.w")) ==
          0.0);
}

TEST_CASE("checkpoints rebuild the exact model and catch mismatches") {
    const ModelConfig mcfg = tiny_model();
    world::WorldConfig wc;
    const auto train_set = make_split(mcfg, 900, 2);
    const auto val_set = make_split(mcfg, 950, 1);
    TrainConfig tc = quick_train(4);
    tc.epochs = 1;
    const Checkpoint ck =
        train::train_segmentation(tc, mcfg, wc.rig, train_set, val_set, "fp-ck", nullptr);

    const fs::path dir = fs::temp_directory_path() / "training_ck";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string path = (dir / "seg.tbtc").string();
    ck.save(path);
    const Checkpoint back = Checkpoint::load(path);
    CHECK(back.kind == ck.kind);
    CHECK(back.config_fingerprint == ck.config_fingerprint);
    CHECK(back.epoch == ck.epoch);
    CHECK(back.model_cfg.N == mcfg.N);
    CHECK(back.active.label() == ck.active.label());
    REQUIRE(back.history.size() == ck.history.size());
    CHECK(back.history.back().train_loss == ck.history.back().train_loss);
    REQUIRE(back.params.size() == ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i)
        CHECK(max_abs_diff(back.params[i].second, ck.params[i].second) == 0.0);

    // the rebuilt model reproduces the original's inference bit for bit
    nn::ParamStore ps1, ps2;
    const model::SegModel m1 = train::build_seg_model(ps1, ck);
    const model::SegModel m2 = train::build_seg_model(ps2, back);
    ad::NoGradGuard ng;
    const auto l1 = m1.forward(val_set[0]);
    const auto l2 = m2.forward(val_set[0]);
    REQUIRE(l1.size() == l2.size());
    for (std::size_t i = 0; i < l1.size(); ++i)
        CHECK(max_abs_diff(l1[i]->val, l2[i]->val) == 0.0);

    // tampered parameter names and shapes are rejected with a diagnostic
    Checkpoint renamed = back;
    renamed.params[0].first += "_tampered";
    nn::ParamStore ps3;
    CHECK_THROWS_AS(train::build_seg_model(ps3, renamed), std::runtime_error);
    Checkpoint reshaped = back;
    reshaped.params[0].second = Tensor({1, 1});
    nn::ParamStore ps4;
    try {
        train::build_seg_model(ps4, reshaped);
        FAIL("expected a shape mismatch error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(reshaped.params[0].first) != std::string::npos);
    }
    Checkpoint wrong_kind = back;
    wrong_kind.kind = "forecaster";
    nn::ParamStore ps5;
    CHECK_THROWS_AS(train::build_seg_model(ps5, wrong_kind), std::runtime_error);
}

TEST_CASE("forecaster training: frozen backbone, descent, determinism") {
    const ModelConfig mcfg = tiny_model();
    world::WorldConfig wc;
    const auto train_set = make_split(mcfg, 1000, 3);
    const auto val_set = make_split(mcfg, 1100, 1);
    TrainConfig tc = quick_train(5);
    tc.epochs = 1;
    const Checkpoint seg =
        train::train_segmentation(tc, mcfg, wc.rig, train_set, val_set, "fp-f", nullptr);

    // input channels: f vehicle probabilities plus the drivable map, which for
    // a vehicle-only model falls back to the ground-truth drivable grid
    nn::ParamStore ps;
    const model::SegModel seg_model = train::build_seg_model(ps, seg);
    const Tensor ch = train::forecaster_channels(seg_model, train_set[0]);
    REQUIRE(ch.shape() == std::vector<int>{mcfg.f + 1, mcfg.h_bev, mcfg.w_bev});
    const std::int64_t plane = static_cast<std::int64_t>(mcfg.h_bev) * mcfg.w_bev;
    for (std::int64_t i = 0; i < mcfg.f * plane; ++i) {
        CHECK(ch[i] > 0.0);
        CHECK(ch[i] < 1.0);
    }
    const Tensor& drv = train_set[0].grids_for(world::SegClass::drivable_area);
    for (std::int64_t i = 0; i < plane; ++i)
        CHECK(ch[mcfg.f * plane + i] == drv[i]);

    TrainConfig ftc = quick_train(6);
    ftc.epochs = 3;
    const Checkpoint fa = train::train_forecaster(ftc, seg, train_set, val_set, nullptr);
    CHECK(fa.kind == "forecaster");
    CHECK(fa.config_fingerprint == seg.config_fingerprint);
    REQUIRE(static_cast<int>(fa.history.size()) == 3);
    CHECK(fa.history.back().train_loss < fa.history.front().train_loss);

    const Checkpoint fb = train::train_forecaster(ftc, seg, train_set, val_set, nullptr);
    REQUIRE(fb.params.size() == fa.params.size());
    for (std::size_t i = 0; i < fa.params.size(); ++i)
        CHECK(max_abs_diff(fb.params[i].second, fa.params[i].second) == 0.0);

    // the trained head must load back and run
    nn::ParamStore psf;
    const model::Forecaster fc = train::build_forecaster(psf, fa);
    ad::NoGradGuard ng;
    const ad::Var out = fc.forward(ad::constant(ch));
    REQUIRE(out->val.shape() == std::vector<int>{mcfg.p, 3});
    CHECK(all_finite(out->val));
}

TEST_CASE("the ablation grid covers the six modality rows") {
    const auto rows = train::ablation_rows();
    REQUIRE(rows.size() == 6);
    std::vector<std::string> labels;
    for (const auto& m : rows) labels.push_back(m.label());
    CHECK(labels == std::vector<std::string>{"C", "L", "C+L", "C+T", "L+T", "C+L+T"});
}

TEST_CASE("training configuration is validated") {
    TrainConfig tc;
    tc.epochs = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.batch = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.lr = -1;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}
