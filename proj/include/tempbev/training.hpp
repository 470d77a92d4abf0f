#pragma once

#include <iosfwd>

#include "tempbev/dataset.hpp"
#include "tempbev/forecaster.hpp"

namespace tempbev::train {

struct TrainConfig {
    int epochs = 20;
    int batch = 4;
    double lr = 3e-4;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
    model::Modalities active;
    double pos_weight_cap = 20.0;
    int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
    double forecaster_yaw_lambda = 0.5;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double val_iou = 0;  // vehicle channel 0 (segmentation) or val ADE (forecaster)
};

// Self-contained parameter snapshot: every named parameter tensor plus enough
// configuration to rebuild the module and verify artifact compatibility.
struct Checkpoint {
    std::string kind;  // "segmentation" or "forecaster"
    std::string config_fingerprint;
    int epoch = 0;
    model::ModelConfig model_cfg;
    model::Modalities active;
    world::RigConfig rig;
    std::vector<EpochRecord> history;
    std::vector<std::pair<std::string, Tensor>> params;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// copies checkpoint tensors into a freshly created parameter store; throws on
// any name/shape mismatch, naming the offending parameter
void restore_params(nn::ParamStore& ps, const Checkpoint& ck);

model::SegModel build_seg_model(nn::ParamStore& ps, const Checkpoint& ck);
model::Forecaster build_forecaster(nn::ParamStore& ps, const Checkpoint& ck);

// mean per-cell binary cross-entropy with positive-class weighting
ad::Var segmentation_loss(const ad::Var& logits, const Tensor& gt, double pos_weight);

// negative/positive cell ratio of the split for one class, capped
double compute_pos_weight(const std::vector<world::TemporalSample>& samples,
                          world::SegClass cls, int horizon_channels, double cap);

// Deterministic given cfg.seed. Logs one structured line per epoch to `log`
// when non-null. Aborts with a diagnostic if the loss goes non-finite.
Checkpoint train_segmentation(const TrainConfig& cfg, const model::ModelConfig& mcfg,
                              const world::RigConfig& rig,
                              const std::vector<world::TemporalSample>& train_set,
                              const std::vector<world::TemporalSample>& val_set,
                              const std::string& config_fingerprint,
                              std::ostream* log = nullptr);

// Trains the trajectory head on grids produced by the frozen segmentation
// model; the segmentation parameters are never touched.
Checkpoint train_forecaster(const TrainConfig& cfg, const Checkpoint& frozen_seg,
                            const std::vector<world::TemporalSample>& train_set,
                            const std::vector<world::TemporalSample>& val_set,
                            std::ostream* log = nullptr);

// builds the forecaster input channels for one sample from a frozen model:
// f vehicle probability maps plus the drivable map (predicted when the model
// has a drivable head, ground truth otherwise)
Tensor forecaster_channels(const model::SegModel& seg, const world::TemporalSample& s);

struct AblationRow {
    std::string label;
    double val_iou = 0;
    std::string checkpoint_path;
};

// the six modality rows: C, L, C+L, C+T, L+T, C+L+T
std::vector<model::Modalities> ablation_rows();

std::vector<AblationRow> run_ablation(const TrainConfig& base, const model::ModelConfig& mcfg,
                                      const world::RigConfig& rig,
                                      const std::vector<world::TemporalSample>& train_set,
                                      const std::vector<world::TemporalSample>& val_set,
                                      const std::string& out_dir,
                                      const std::string& config_fingerprint,
                                      std::ostream* log = nullptr);

}  // namespace tempbev::train
