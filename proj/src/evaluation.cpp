#include "tempbev/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "tempbev/bev_decoder.hpp"

namespace tempbev::eval {

using world::TemporalSample;

const char* filter_name(VisFilter f) {
    switch (f) {
        case VisFilter::all: return "vis>=0%";
        case VisFilter::visible: return "vis>=40%";
        case VisFilter::occluded: return "0%<=vis<40%";
    }
    return "?";
}

bool filter_passes(VisFilter f, double fraction) {
    switch (f) {
        case VisFilter::all: return true;
        case VisFilter::visible: return fraction >= 0.4;
        case VisFilter::occluded: return fraction < 0.4;
    }
    return false;
}

double iou(const Tensor& pred, const Tensor& gt, const Tensor* ignore) {
    if (pred.shape() != gt.shape())
        throw std::invalid_argument("iou: shape mismatch " + pred.shape_str() + " vs " +
                                    gt.shape_str());
    if (ignore && ignore->shape() != gt.shape())
        throw std::invalid_argument("iou: ignore mask shape mismatch");
    std::int64_t inter = 0, uni = 0;
    for (std::int64_t i = 0; i < gt.numel(); ++i) {
        if (ignore && (*ignore)[i] != 0) continue;
        const bool p = pred[i] != 0, t = gt[i] != 0;
        inter += p && t;
        uni += p || t;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Tensor filter_ignore_mask(const Tensor& gt, const std::vector<world::VisibilityRecord>& vis,
                          const Tensor& ownership, VisFilter filter) {
    if (ownership.shape() != gt.shape())
        throw std::invalid_argument("filter_ignore_mask: ownership shape mismatch");
    std::map<int, double> fraction;
    for (const auto& r : vis) fraction[r.agent_id] = r.visible_fraction;
    Tensor mask = Tensor::zeros(gt.shape());
    for (std::int64_t i = 0; i < gt.numel(); ++i) {
        if (gt[i] == 0) continue;
        const int owner = static_cast<int>(ownership[i]);
        if (owner < 0)
            throw std::runtime_error(
                "filter_ignore_mask: gt-positive cell " + std::to_string(i) +
                " has no owning agent");
        const auto it = fraction.find(owner);
        if (it == fraction.end())
            throw std::runtime_error("filter_ignore_mask: agent " + std::to_string(owner) +
                                     " has no visibility record");
        if (!filter_passes(filter, it->second)) mask[i] = 1.0;
    }
    return mask;
}

double visibility_filtered_iou(const Tensor& pred, const Tensor& gt,
                               const std::vector<world::VisibilityRecord>& vis,
                               const Tensor& ownership, VisFilter filter) {
    const Tensor mask = filter_ignore_mask(gt, vis, ownership, filter);
    return iou(pred, gt, &mask);
}

namespace {

struct Accum {
    std::int64_t inter = 0, uni = 0;
    void add(bool p, bool t) {
        inter += p && t;
        uni += p || t;
    }
    double value() const { return uni == 0 ? 1.0 : static_cast<double>(inter) / uni; }
};

Tensor plane_of(const Tensor& t, int k) {
    const int h = t.shape()[1], w = t.shape()[2];
    Tensor out({h, w});
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < plane; ++i) out[i] = t[k * plane + i];
    return out;
}

}  // namespace

EvalReport evaluate(const train::Checkpoint& ck, const std::vector<TemporalSample>& samples,
                    double threshold) {
    const model::ModelConfig& mcfg = ck.model_cfg;
    nn::ParamStore ps;
    const model::SegModel seg = train::build_seg_model(ps, ck);

    EvalReport rep;
    rep.config_fingerprint = ck.config_fingerprint;
    rep.modalities = ck.active.label();
    rep.samples = static_cast<int>(samples.size());

    int vehicle_idx = -1;
    for (std::size_t i = 0; i < mcfg.classes.size(); ++i)
        if (mcfg.classes[i] == world::SegClass::vehicle) vehicle_idx = static_cast<int>(i);

    std::vector<Accum> per_class(mcfg.classes.size());
    std::vector<Accum> per_channel(static_cast<std::size_t>(mcfg.f));
    Accum vis_acc[3];
    const VisFilter filters[3] = {VisFilter::all, VisFilter::visible, VisFilter::occluded};

    ad::NoGradGuard ng;
    for (const auto& s : samples) {
        if (!(s.spec == mcfg.bev_spec()))
            throw std::runtime_error(
                "evaluate: dataset grid spec does not match the checkpoint's bev grid "
                "(field: h_bev/w_bev/bev_resolution)");
        if (s.f != mcfg.f)
            throw std::runtime_error("evaluate: dataset horizon f=" + std::to_string(s.f) +
                                     " does not match the checkpoint's f=" +
                                     std::to_string(mcfg.f) + " (field: f)");
        const std::vector<ad::Var> logits = seg.forward(s);
        const std::int64_t plane = static_cast<std::int64_t>(mcfg.h_bev) * mcfg.w_bev;

        for (std::size_t ci = 0; ci < mcfg.classes.size(); ++ci) {
            const Tensor& lv = logits[ci]->val;
            const Tensor& g = s.grids_for(mcfg.classes[ci]);
            for (std::int64_t i = 0; i < plane; ++i)
                per_class[ci].add(model::sigmoid(lv[i]) >= threshold, g[i] != 0);
        }

        if (vehicle_idx >= 0) {
            const Tensor& lv = logits[static_cast<std::size_t>(vehicle_idx)]->val;
            const Tensor& g = s.grids_for(world::SegClass::vehicle);
            for (int k = 0; k < mcfg.f; ++k)
                for (std::int64_t i = 0; i < plane; ++i)
                    per_channel[static_cast<std::size_t>(k)].add(
                        model::sigmoid(lv[k * plane + i]) >= threshold,
                        g[k * plane + i] != 0);

            const Tensor pred0 = model::to_binary(model::sigmoid(plane_of(lv, 0)), threshold);
            const Tensor gt0 = plane_of(g, 0);
            {
                std::int64_t uni = 0;
                for (std::int64_t i = 0; i < plane; ++i)
                    uni += pred0[i] != 0 || gt0[i] != 0;
                if (uni == 0) ++rep.empty_union_samples;
            }
            for (int fi = 0; fi < 3; ++fi) {
                const Tensor mask =
                    filter_ignore_mask(gt0, s.visibility, s.ownership, filters[fi]);
                for (std::int64_t i = 0; i < plane; ++i) {
                    if (mask[i] != 0) continue;
                    vis_acc[fi].add(pred0[i] != 0, gt0[i] != 0);
                }
            }
        }
    }

    for (std::size_t ci = 0; ci < mcfg.classes.size(); ++ci)
        rep.class_iou.emplace_back(world::seg_class_name(mcfg.classes[ci]),
                                   per_class[ci].value());
    if (vehicle_idx >= 0) {
        for (const Accum& a : per_channel) rep.vehicle_channel_iou.push_back(a.value());
        rep.vis_all = vis_acc[0].value();
        rep.vis_visible = vis_acc[1].value();
        rep.vis_occluded = vis_acc[2].value();
    }
    return rep;
}

void evaluate_forecaster(const train::Checkpoint& forecaster_ck,
                         const train::Checkpoint& seg_ck,
                         const std::vector<TemporalSample>& samples, EvalReport& report) {
    nn::ParamStore seg_ps, fc_ps;
    const model::SegModel seg = train::build_seg_model(seg_ps, seg_ck);
    const model::Forecaster fc = train::build_forecaster(fc_ps, forecaster_ck);
    double ade = 0, fde = 0;
    ad::NoGradGuard ng;
    for (const auto& s : samples) {
        const Tensor channels = train::forecaster_channels(seg, s);
        const ad::Var pred = fc.forward(ad::constant(channels));
        const auto [a, f] = model::ade_fde(pred->val, s.ego_future);
        ade += a;
        fde += f;
    }
    if (!samples.empty()) {
        ade /= static_cast<double>(samples.size());
        fde /= static_cast<double>(samples.size());
    }
    report.ade = ade;
    report.fde = fde;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

std::string report_table(const EvalReport& r) {
    std::ostringstream os;
    os << "evaluation report (config " << r.config_fingerprint << ", modalities "
       << r.modalities << ", " << r.samples << " samples)\n";
    os << "  class IoU (current frame):\n";
    for (const auto& [name, v] : r.class_iou) os << "    " << name << ": " << fmt(v) << "\n";
    if (!r.vehicle_channel_iou.empty()) {
        os << "  vehicle IoU by visibility filter:\n";
        os << "    " << filter_name(VisFilter::all) << ": " << fmt(r.vis_all) << "\n";
        os << "    " << filter_name(VisFilter::visible) << ": " << fmt(r.vis_visible) << "\n";
        os << "    " << filter_name(VisFilter::occluded) << ": " << fmt(r.vis_occluded)
           << "\n";
        os << "  vehicle IoU by horizon channel:";
        for (std::size_t k = 0; k < r.vehicle_channel_iou.size(); ++k)
            os << " t+" << k << "=" << fmt(r.vehicle_channel_iou[k]);
        os << "\n";
    }
    os << "  samples with empty pred/gt union: " << r.empty_union_samples << "\n";
    if (r.ade >= 0) os << "  trajectory ADE: " << fmt(r.ade) << "  FDE: " << fmt(r.fde) << "\n";
    if (!r.ablation.empty()) {
        os << "  ablation (validation vehicle IoU):\n";
        for (const auto& row : r.ablation)
            os << "    " << row.label << ": " << fmt(row.val_iou) << "\n";
    }
    return os.str();
}

nlohmann::json report_json(const EvalReport& r) {
    nlohmann::json j;
    j["config_fingerprint"] = r.config_fingerprint;
    j["modalities"] = r.modalities;
    j["samples"] = r.samples;
    nlohmann::json cls = nlohmann::json::object();
    for (const auto& [name, v] : r.class_iou) cls[name] = v;
    j["class_iou"] = cls;
    j["vehicle_channel_iou"] = r.vehicle_channel_iou;
    j["vis_filters"] = {{"all", r.vis_all},
                        {"visible", r.vis_visible},
                        {"occluded", r.vis_occluded}};
    j["empty_union_samples"] = r.empty_union_samples;
    if (r.ade >= 0) {
        j["ade"] = r.ade;
        j["fde"] = r.fde;
    }
    if (!r.ablation.empty()) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& row : r.ablation)
            rows.push_back({{"label", row.label},
                            {"val_iou", row.val_iou},
                            {"checkpoint", row.checkpoint_path}});
        j["ablation"] = rows;
    }
    return j;
}

}  // namespace tempbev::eval
