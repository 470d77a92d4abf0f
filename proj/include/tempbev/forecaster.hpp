#pragma once

#include "tempbev/bev_decoder.hpp"

namespace tempbev::model {

struct Trajectory {
    Tensor states;  // [p, 3] (x, y, yaw) in the ego frame at the reference time
    double dt = 0.5;
};

// wrap to (-pi, pi]
double wrap_angle(double a);

// Ego trajectory head. Consumes the f predicted vehicle occupancy grids plus
// the drivable-area grid as channels, runs a small 3-scale feature pyramid
// with a top-down merge, re-injects the raw drivable map as a skip channel,
// refines and pools globally. The pooled features are joined with per-channel
// occupancy moments (mass and center of mass): the grids are ego-centric at
// their own timestep, so the horizon-to-horizon drift of the static scene's
// center of mass carries the ego speed, which global pooling alone discards.
// A linear map on the joint features emits p*3.
class Forecaster {
public:
    static Forecaster create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng);

    // channels: [f+1, h_bev, w_bev] (f vehicle horizons then drivable) -> [p, 3]
    Var forward(const Var& channels) const;

    // convenience wrapper with shape checks and yaw wrapping
    Trajectory forecast(const std::vector<Tensor>& vehicle_grids,
                        const Tensor& drivable) const;

private:
    Tensor channel_moments(const Tensor& channels) const;

    ModelConfig cfg_;
    nn::Conv stem_, down1_, down2_;
    nn::Conv lat0_, lat1_, lat2_;  // 1x1 laterals
    nn::Conv post_;                // 1x1 after the pyramid merge
    nn::Conv skip_in_;             // 1x1 after drivable skip concat
    std::vector<nn::ResidualConvBlock> blocks_;
    nn::Linear head_;
};

// mean squared position error + lambda * mean(1 - cos(yaw delta))
Var trajectory_loss(const Var& pred_states, const Tensor& gt_states,
                    double lambda = 0.5);

// (mean, final) Euclidean position error over the p steps
std::pair<double, double> ade_fde(const Tensor& pred_states, const Tensor& gt_states);

}  // namespace tempbev::model
