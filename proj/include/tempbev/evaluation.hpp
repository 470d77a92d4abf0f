#pragma once

#include "json.hpp"
#include "tempbev/training.hpp"

namespace tempbev::eval {

// The three visibility filters, in report column order:
//   all      -> every agent (vis >= 0%)
//   visible  -> visible fraction >= 0.4
//   occluded -> visible fraction < 0.4 (fully hidden agents included)
enum class VisFilter { all, visible, occluded };

const char* filter_name(VisFilter f);
bool filter_passes(VisFilter f, double fraction);

// |pred AND gt| / |pred OR gt| over non-ignored cells; both-empty union -> 1.0
double iou(const Tensor& pred, const Tensor& gt, const Tensor* ignore = nullptr);

// Cells owned by agents failing the filter are excluded from both pred and
// gt. Every gt-positive cell must carry an owner with a visibility record.
Tensor filter_ignore_mask(const Tensor& gt,
                          const std::vector<world::VisibilityRecord>& vis,
                          const Tensor& ownership, VisFilter filter);

double visibility_filtered_iou(const Tensor& pred, const Tensor& gt,
                               const std::vector<world::VisibilityRecord>& vis,
                               const Tensor& ownership, VisFilter filter);

struct EvalReport {
    std::string config_fingerprint;
    std::string modalities;
    int samples = 0;
    std::vector<std::pair<std::string, double>> class_iou;  // channel 0, per class
    std::vector<double> vehicle_channel_iou;                // channels 0..f-1
    double vis_all = 0, vis_visible = 0, vis_occluded = 0;  // vehicle channel 0
    int empty_union_samples = 0;
    double ade = -1, fde = -1;  // set when a forecaster is evaluated
    std::vector<train::AblationRow> ablation;
};

// Deterministic reduction in sample order; global-count IoU aggregation.
EvalReport evaluate(const train::Checkpoint& ck,
                    const std::vector<world::TemporalSample>& samples, double threshold);

// fills report.ade / report.fde from a frozen segmentation + forecaster pair
void evaluate_forecaster(const train::Checkpoint& forecaster_ck,
                         const train::Checkpoint& seg_ck,
                         const std::vector<world::TemporalSample>& samples,
                         EvalReport& report);

std::string report_table(const EvalReport& r);
nlohmann::json report_json(const EvalReport& r);

}  // namespace tempbev::eval
