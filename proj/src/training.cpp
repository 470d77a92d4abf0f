#include "tempbev/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "tempbev/runconfig.hpp"
#include "tempbev/serialize.hpp"

namespace tempbev::train {

using nlohmann::json;
using world::TemporalSample;

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs >= 1 required");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch >= 1 required");
    if (lr <= 0) throw std::invalid_argument("TrainConfig: lr must be positive");
}

ad::Var segmentation_loss(const ad::Var& logits, const Tensor& gt, double pos_weight) {
    if (logits->val.shape() != gt.shape())
        throw std::invalid_argument("segmentation_loss: logits " + logits->val.shape_str() +
                                    " vs gt " + gt.shape_str());
    return ad::bce_with_logits(logits, gt, pos_weight);
}

double compute_pos_weight(const std::vector<TemporalSample>& samples, world::SegClass cls,
                          int horizon_channels, double cap) {
    std::int64_t pos = 0, total = 0;
    for (const auto& s : samples) {
        const Tensor& g = s.grids_for(cls);
        const std::int64_t plane = static_cast<std::int64_t>(s.spec.h_bev) * s.spec.w_bev;
        const std::int64_t n = std::min<std::int64_t>(horizon_channels, g.shape()[0]) * plane;
        for (std::int64_t i = 0; i < n; ++i) pos += g[i] != 0 ? 1 : 0;
        total += n;
    }
    if (pos == 0) return cap;
    const double ratio = static_cast<double>(total - pos) / static_cast<double>(pos);
    return std::min(ratio, cap);
}

namespace {

// first f channels of the stored (f+1)-channel ground truth
Tensor horizon_target(const Tensor& grids, int f) {
    const int h = grids.shape()[1], w = grids.shape()[2];
    Tensor out({f, h, w});
    const std::int64_t n = static_cast<std::int64_t>(f) * h * w;
    for (std::int64_t i = 0; i < n; ++i) out[i] = grids[i];
    return out;
}

int class_index(const model::ModelConfig& cfg, world::SegClass cls) {
    for (std::size_t i = 0; i < cfg.classes.size(); ++i)
        if (cfg.classes[i] == cls) return static_cast<int>(i);
    return -1;
}

json modalities_json(const model::Modalities& m) {
    return json{{"camera", m.camera}, {"lidar", m.lidar}, {"temporal", m.temporal}};
}

model::Modalities modalities_from(const json& j) {
    model::Modalities m;
    m.camera = j.value("camera", true);
    m.lidar = j.value("lidar", true);
    m.temporal = j.value("temporal", true);
    return m;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    io::TensorFile tf;
    json meta;
    meta["kind"] = kind;
    meta["config_fingerprint"] = config_fingerprint;
    meta["epoch"] = epoch;
    meta["model"] = cfg::model_config_json(model_cfg);
    meta["modalities"] = modalities_json(active);
    meta["rig"] = cfg::rig_config_json(rig);
    json hist = json::array();
    for (const auto& r : history)
        hist.push_back({{"epoch", r.epoch}, {"loss", r.train_loss}, {"val_iou", r.val_iou}});
    meta["history"] = hist;
    const std::string dumped = meta.dump();
    Tensor mt({static_cast<int>(dumped.size())});
    for (std::size_t i = 0; i < dumped.size(); ++i)
        mt[static_cast<std::int64_t>(i)] = static_cast<unsigned char>(dumped[i]);
    tf.put("___meta", std::move(mt), io::DType::u8);
    for (const auto& [name, t] : params) tf.put(name, t);
    tf.save(path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    const io::TensorFile tf = io::TensorFile::load(path);
    if (!tf.has("___meta"))
        throw std::runtime_error("checkpoint " + path + ": missing metadata entry");
    const Tensor& mt = tf.get("___meta");
    std::string dumped(static_cast<std::size_t>(mt.numel()), '\0');
    for (std::int64_t i = 0; i < mt.numel(); ++i)
        dumped[static_cast<std::size_t>(i)] = static_cast<char>(static_cast<int>(mt[i]));
    json meta;
    try {
        meta = json::parse(dumped);
    } catch (const std::exception& e) {
        throw std::runtime_error("checkpoint " + path + ": malformed metadata: " + e.what());
    }
    Checkpoint ck;
    ck.kind = meta.value("kind", "segmentation");
    ck.config_fingerprint = meta.value("config_fingerprint", "");
    ck.epoch = meta.value("epoch", 0);
    ck.model_cfg = cfg::model_config_from_json(meta.at("model"));
    ck.active = modalities_from(meta.value("modalities", json::object()));
    ck.rig = cfg::rig_config_from_json(meta.at("rig"));
    for (const auto& r : meta.value("history", json::array())) {
        ck.history.push_back({r.value("epoch", 0), r.value("loss", 0.0),
                              r.value("val_iou", 0.0)});
    }
    for (const auto& [name, nt] : tf.entries())
        if (name != "___meta") ck.params.emplace_back(name, nt.tensor);
    return ck;
}

void restore_params(nn::ParamStore& ps, const Checkpoint& ck) {
    if (ps.size() != ck.params.size())
        throw std::runtime_error("checkpoint restore: parameter count mismatch (" +
                                 std::to_string(ck.params.size()) + " stored, " +
                                 std::to_string(ps.size()) + " expected)");
    for (const auto& [name, t] : ck.params) {
        if (!ps.has(name))
            throw std::runtime_error("checkpoint restore: unknown parameter '" + name + "'");
        ad::Var v = ps.get(name);
        if (v->val.shape() != t.shape())
            throw std::runtime_error("checkpoint restore: shape mismatch for '" + name +
                                     "': stored " + t.shape_str() + ", expected " +
                                     v->val.shape_str());
        v->val = t;
    }
}

model::SegModel build_seg_model(nn::ParamStore& ps, const Checkpoint& ck) {
    if (ck.kind != "segmentation")
        throw std::runtime_error("expected a segmentation checkpoint, got kind '" + ck.kind +
                                 "'");
    Rng rng(0);
    model::SegModel m = model::SegModel::create(ps, ck.model_cfg, ck.active,
                                                world::make_rig(ck.rig), rng);
    restore_params(ps, ck);
    return m;
}

model::Forecaster build_forecaster(nn::ParamStore& ps, const Checkpoint& ck) {
    if (ck.kind != "forecaster")
        throw std::runtime_error("expected a forecaster checkpoint, got kind '" + ck.kind +
                                 "'");
    Rng rng(0);
    model::Forecaster fc = model::Forecaster::create(ps, ck.model_cfg, rng);
    restore_params(ps, ck);
    return fc;
}

namespace {

std::vector<std::pair<std::string, Tensor>> snapshot(const nn::ParamStore& ps) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(ps.size());
    for (const auto& [name, v] : ps.items()) out.emplace_back(name, v->val);
    return out;
}

// in-place Fisher-Yates so sample order is a pure function of the seed
void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[static_cast<std::size_t>(rng.uniform_int(0, i))]);
}

void log_line(std::ostream* log, const json& j) {
    if (log) *log << j.dump() << "\n";
}

}  // namespace

Checkpoint train_segmentation(const TrainConfig& cfg, const model::ModelConfig& mcfg,
                              const world::RigConfig& rig,
                              const std::vector<TemporalSample>& train_set,
                              const std::vector<TemporalSample>& val_set,
                              const std::string& config_fingerprint, std::ostream* log) {
    cfg.validate();
    mcfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train_segmentation: empty dataset");

    Rng rng(cfg.seed);
    nn::ParamStore ps;
    model::SegModel seg =
        model::SegModel::create(ps, mcfg, cfg.active, world::make_rig(rig), rng);

    std::vector<double> pos_weight;
    for (world::SegClass cls : mcfg.classes)
        pos_weight.push_back(compute_pos_weight(train_set, cls, mcfg.f, cfg.pos_weight_cap));

    nn::AdamOptimizer opt(cfg.lr, 0.9, 0.999, 1e-8, cfg.clip_norm);
    const int vehicle_idx = std::max(class_index(mcfg, world::SegClass::vehicle), 0);

    Checkpoint ck;
    ck.kind = "segmentation";
    ck.config_fingerprint = config_fingerprint;
    ck.model_cfg = mcfg;
    ck.active = cfg.active;
    ck.rig = rig;

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng order_rng = rng.fork(17);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_indices(order, order_rng);
        double epoch_loss = 0;
        int batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t b1 =
                std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            ps.zero_grads();
            double batch_loss = 0;
            for (std::size_t bi = b0; bi < b1; ++bi) {
                const TemporalSample& s = train_set[static_cast<std::size_t>(order[bi])];
                const std::vector<ad::Var> logits = seg.forward(s);
                ad::Var loss;
                for (std::size_t ci = 0; ci < logits.size(); ++ci) {
                    const Tensor target =
                        horizon_target(s.grids_for(mcfg.classes[ci]), mcfg.f);
                    ad::Var l = segmentation_loss(logits[ci], target, pos_weight[ci]);
                    loss = loss ? ad::add(loss, l) : l;
                }
                loss = ad::scale(loss, inv / static_cast<double>(logits.size()));
                const double lv = loss->val[0];
                if (!std::isfinite(lv))
                    throw std::runtime_error(
                        "train_segmentation: loss is not finite at epoch " +
                        std::to_string(epoch) + " (diverged)");
                batch_loss += lv;
                ad::backward(loss);
            }
            opt.step(ps);
            epoch_loss += batch_loss;
            ++batches;
        }
        epoch_loss /= std::max(batches, 1);

        // global-count vehicle IoU on channel 0 of the validation split
        std::int64_t inter = 0, uni = 0;
        {
            ad::NoGradGuard ng;
            for (const auto& s : val_set) {
                const std::vector<ad::Var> logits = seg.forward(s);
                const Tensor& g = s.grids_for(mcfg.classes[static_cast<std::size_t>(vehicle_idx)]);
                const Tensor& lv = logits[static_cast<std::size_t>(vehicle_idx)]->val;
                const std::int64_t plane =
                    static_cast<std::int64_t>(mcfg.h_bev) * mcfg.w_bev;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const bool p = lv[i] >= 0;  // sigmoid(x) >= 0.5 <=> x >= 0
                    const bool t = g[i] != 0;
                    inter += p && t;
                    uni += p || t;
                }
            }
        }
        const double val_iou = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
        ck.history.push_back({epoch, epoch_loss, val_iou});
        ck.epoch = epoch;
        log_line(log, {{"phase", "segmentation"},
                       {"modalities", cfg.active.label()},
                       {"epoch", epoch},
                       {"loss", epoch_loss},
                       {"val_iou", val_iou}});
    }
    ck.params = snapshot(ps);
    return ck;
}

Tensor forecaster_channels(const model::SegModel& seg, const TemporalSample& s) {
    const model::ModelConfig& cfg = seg.config();
    ad::NoGradGuard ng;
    const std::vector<ad::Var> logits = seg.forward(s);
    const int vi = class_index(cfg, world::SegClass::vehicle);
    if (vi < 0) throw std::runtime_error("forecaster_channels: model has no vehicle head");
    const Tensor veh = model::sigmoid(logits[static_cast<std::size_t>(vi)]->val);
    const int di = class_index(cfg, world::SegClass::drivable_area);
    const std::int64_t plane = static_cast<std::int64_t>(cfg.h_bev) * cfg.w_bev;
    Tensor out({cfg.f + 1, cfg.h_bev, cfg.w_bev});
    for (std::int64_t i = 0; i < cfg.f * plane; ++i) out[i] = veh[i];
    if (di >= 0) {
        const Tensor dr = model::sigmoid(logits[static_cast<std::size_t>(di)]->val);
        for (std::int64_t i = 0; i < plane; ++i) out[cfg.f * plane + i] = dr[i];
    } else {
        const Tensor& dr = s.grids_for(world::SegClass::drivable_area);
        for (std::int64_t i = 0; i < plane; ++i) out[cfg.f * plane + i] = dr[i];
    }
    return out;
}

Checkpoint train_forecaster(const TrainConfig& cfg, const Checkpoint& frozen_seg,
                            const std::vector<TemporalSample>& train_set,
                            const std::vector<TemporalSample>& val_set, std::ostream* log) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train_forecaster: empty dataset");

    nn::ParamStore seg_ps;
    const model::SegModel seg = build_seg_model(seg_ps, frozen_seg);
    const model::ModelConfig& mcfg = frozen_seg.model_cfg;

    // the segmentation model is frozen: bake its outputs once
    std::vector<Tensor> train_in, val_in;
    train_in.reserve(train_set.size());
    val_in.reserve(val_set.size());
    for (const auto& s : train_set) train_in.push_back(forecaster_channels(seg, s));
    for (const auto& s : val_set) val_in.push_back(forecaster_channels(seg, s));

    Rng rng(cfg.seed);
    nn::ParamStore ps;
    model::Forecaster fc = model::Forecaster::create(ps, mcfg, rng);
    nn::AdamOptimizer opt(cfg.lr, 0.9, 0.999, 1e-8, cfg.clip_norm);

    Checkpoint ck;
    ck.kind = "forecaster";
    ck.config_fingerprint = frozen_seg.config_fingerprint;
    ck.model_cfg = mcfg;
    ck.active = frozen_seg.active;
    ck.rig = frozen_seg.rig;

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng order_rng = rng.fork(17);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_indices(order, order_rng);
        double epoch_loss = 0;
        int batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t b1 =
                std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            ps.zero_grads();
            double batch_loss = 0;
            for (std::size_t bi = b0; bi < b1; ++bi) {
                const int si = order[bi];
                const ad::Var pred = fc.forward(
                    ad::constant(train_in[static_cast<std::size_t>(si)]));
                ad::Var loss = model::trajectory_loss(
                    pred, train_set[static_cast<std::size_t>(si)].ego_future,
                    cfg.forecaster_yaw_lambda);
                loss = ad::scale(loss, inv);
                const double lv = loss->val[0];
                if (!std::isfinite(lv))
                    throw std::runtime_error(
                        "train_forecaster: loss is not finite at epoch " +
                        std::to_string(epoch) + " (diverged)");
                batch_loss += lv;
                ad::backward(loss);
            }
            opt.step(ps);
            epoch_loss += batch_loss;
            ++batches;
        }
        epoch_loss /= std::max(batches, 1);

        double val_ade = 0;
        {
            ad::NoGradGuard ng;
            for (std::size_t i = 0; i < val_set.size(); ++i) {
                const ad::Var pred = fc.forward(ad::constant(val_in[i]));
                val_ade += model::ade_fde(pred->val, val_set[i].ego_future).first;
            }
        }
        if (!val_set.empty()) val_ade /= static_cast<double>(val_set.size());
        ck.history.push_back({epoch, epoch_loss, val_ade});
        ck.epoch = epoch;
        log_line(log, {{"phase", "forecaster"},
                       {"epoch", epoch},
                       {"loss", epoch_loss},
                       {"val_ade", val_ade}});
    }
    ck.params = snapshot(ps);
    return ck;
}

std::vector<model::Modalities> ablation_rows() {
    return {{true, false, false}, {false, true, false}, {true, true, false},
            {true, false, true},  {false, true, true},  {true, true, true}};
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const model::ModelConfig& mcfg,
                                      const world::RigConfig& rig,
                                      const std::vector<TemporalSample>& train_set,
                                      const std::vector<TemporalSample>& val_set,
                                      const std::string& out_dir,
                                      const std::string& config_fingerprint,
                                      std::ostream* log) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw std::runtime_error("run_ablation: cannot create " + out_dir + ": " + ec.message());
    std::vector<AblationRow> rows;
    for (const model::Modalities& m : ablation_rows()) {
        TrainConfig cfg = base;
        cfg.active = m;
        const Checkpoint ck =
            train_segmentation(cfg, mcfg, rig, train_set, val_set, config_fingerprint, log);
        std::string fname = m.label();
        for (char& c : fname)
            if (c == '+') c = '_';
        const std::string path = (fs::path(out_dir) / ("ck_" + fname + ".tbtc")).string();
        ck.save(path);
        rows.push_back({m.label(), ck.history.back().val_iou, path});
    }
    return rows;
}

}  // namespace tempbev::train
