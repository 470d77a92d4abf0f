#include "tempbev/forecaster.hpp"

#include <algorithm>
#include <cmath>

namespace tempbev::model {

double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2 * M_PI);
    if (a <= 0) a += 2 * M_PI;
    return a - M_PI;
}

Forecaster Forecaster::create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    if (cfg.h_bev % 4 != 0 || cfg.w_bev % 4 != 0)
        throw std::invalid_argument("Forecaster: BEV size must be divisible by 4");
    Forecaster fc;
    fc.cfg_ = cfg;
    const int w = cfg.refine_width;
    const int cin = cfg.f + 1;
    fc.stem_ = nn::Conv::create(ps, "fcast.stem", cin, w, 3, 1, 1, rng);
    fc.down1_ = nn::Conv::create(ps, "fcast.down1", w, w, 3, 2, 1, rng);
    fc.down2_ = nn::Conv::create(ps, "fcast.down2", w, w, 3, 2, 1, rng);
    fc.lat0_ = nn::Conv::create(ps, "fcast.lat0", w, w, 1, 1, 0, rng);
    fc.lat1_ = nn::Conv::create(ps, "fcast.lat1", w, w, 1, 1, 0, rng);
    fc.lat2_ = nn::Conv::create(ps, "fcast.lat2", w, w, 1, 1, 0, rng);
    fc.post_ = nn::Conv::create(ps, "fcast.post", w, w, 1, 1, 0, rng);
    fc.skip_in_ = nn::Conv::create(ps, "fcast.skip_in", w + 1, w, 1, 1, 0, rng);
    for (int b = 0; b < cfg.refine_blocks; ++b)
        fc.blocks_.push_back(
            nn::ResidualConvBlock::create(ps, "fcast.block" + std::to_string(b), w, rng));
    fc.head_ = nn::Linear::create(ps, "fcast.head", w + 3 * (cfg.f + 1), cfg.p * 3, rng);
    return fc;
}

// [1, 3*(f+1)] per-channel occupancy moments: mass, center of mass (x, y),
// with the center expressed in meters / 10. Pure function of the input.
Tensor Forecaster::channel_moments(const Tensor& channels) const {
    const geom::GridSpec spec = cfg_.bev_spec();
    const int nc = cfg_.f + 1;
    const std::int64_t plane = static_cast<std::int64_t>(cfg_.h_bev) * cfg_.w_bev;
    Tensor out({1, 3 * nc});
    for (int k = 0; k < nc; ++k) {
        double m0 = 0, mx = 0, my = 0;
        const double* p = channels.data() + k * plane;
        for (int i = 0; i < cfg_.h_bev; ++i) {
            for (int j = 0; j < cfg_.w_bev; ++j) {
                const double v = p[static_cast<std::int64_t>(i) * cfg_.w_bev + j];
                const auto [cx, cy] = spec.cell_center(i, j);
                m0 += v;
                mx += v * cx;
                my += v * cy;
            }
        }
        const double denom = std::max(m0, 1e-9);
        out[3 * k] = m0 / static_cast<double>(plane);
        out[3 * k + 1] = mx / denom / 10.0;
        out[3 * k + 2] = my / denom / 10.0;
    }
    return out;
}

Var Forecaster::forward(const Var& channels) const {
    const auto& sh = channels->val.shape();
    if (sh.size() != 3 || sh[0] != cfg_.f + 1 || sh[1] != cfg_.h_bev || sh[2] != cfg_.w_bev)
        throw std::invalid_argument("Forecaster: input shape " + channels->val.shape_str() +
                                    " does not match config");
    const Var c0 = ad::relu(stem_(channels));
    const Var c1 = ad::relu(down1_(c0));
    const Var c2 = ad::relu(down2_(c1));
    // top-down pyramid merge
    const Var p2 = lat2_(c2);
    const Var p1 = ad::add(lat1_(c1), ad::upsample2_nearest(p2));
    const Var p0 = ad::add(lat0_(c0), ad::upsample2_nearest(p1));
    Var x = ad::relu(post_(p0));
    // skip connection: re-append the raw drivable channel
    const Var drivable = ad::slice_rows(
        ad::reshape(channels, {cfg_.f + 1, cfg_.h_bev * cfg_.w_bev}), cfg_.f, cfg_.f + 1);
    x = ad::reshape(
        ad::concat_rows({ad::reshape(x, {cfg_.refine_width, cfg_.h_bev * cfg_.w_bev}),
                         drivable}),
        {cfg_.refine_width + 1, cfg_.h_bev, cfg_.w_bev});
    x = ad::relu(skip_in_(x));
    for (const auto& blk : blocks_) x = blk(x);
    const Var pooled = ad::channel_mean(x);  // [1, width]
    const Var joint =
        ad::concat_cols(pooled, ad::constant(channel_moments(channels->val)));
    return ad::reshape(head_(joint), {cfg_.p, 3});
}

Trajectory Forecaster::forecast(const std::vector<Tensor>& vehicle_grids,
                                const Tensor& drivable) const {
    if (static_cast<int>(vehicle_grids.size()) != cfg_.f)
        throw std::invalid_argument("forecast: expected " + std::to_string(cfg_.f) +
                                    " vehicle grids");
    const std::vector<int> want{cfg_.h_bev, cfg_.w_bev};
    Tensor stacked({cfg_.f + 1, cfg_.h_bev, cfg_.w_bev});
    const std::int64_t plane = static_cast<std::int64_t>(cfg_.h_bev) * cfg_.w_bev;
    for (int k = 0; k <= cfg_.f; ++k) {
        const Tensor& g = k < cfg_.f ? vehicle_grids[static_cast<std::size_t>(k)] : drivable;
        if (g.shape() != want)
            throw std::invalid_argument("forecast: grid " + std::to_string(k) + " shape " +
                                        g.shape_str() + " does not match the BEV spec");
        for (std::int64_t i = 0; i < plane; ++i) stacked[k * plane + i] = g[i];
    }
    ad::NoGradGuard ng;
    const Var out = forward(ad::constant(std::move(stacked)));
    Trajectory traj;
    traj.states = out->val;
    traj.dt = 0.5;
    for (int i = 0; i < cfg_.p; ++i) traj.states.at2(i, 2) = wrap_angle(traj.states.at2(i, 2));
    return traj;
}

Var trajectory_loss(const Var& pred_states, const Tensor& gt_states, double lambda) {
    const int p = pred_states->val.rows();
    if (gt_states.rows() != p || gt_states.cols() != 3 || pred_states->val.cols() != 3)
        throw std::invalid_argument("trajectory_loss: shape mismatch");
    const Var pos = ad::slice_cols(pred_states, 0, 2);
    Tensor gt_pos({p, 2}), gt_yaw({p, 1});
    for (int i = 0; i < p; ++i) {
        gt_pos.at2(i, 0) = gt_states.at2(i, 0);
        gt_pos.at2(i, 1) = gt_states.at2(i, 1);
        gt_yaw.at2(i, 0) = gt_states.at2(i, 2);
    }
    const Var dpos = ad::sub(pos, ad::constant(std::move(gt_pos)));
    const Var pos_term = ad::scale(ad::sum_all(ad::mul(dpos, dpos)), 1.0 / p);
    const Var dyaw = ad::sub(ad::slice_cols(pred_states, 2, 3), ad::constant(std::move(gt_yaw)));
    const Var yaw_term =
        ad::add_scalar(ad::scale(ad::mean_all(ad::cos_op(dyaw)), -1.0), 1.0);
    return ad::add(pos_term, ad::scale(yaw_term, lambda));
}

std::pair<double, double> ade_fde(const Tensor& pred_states, const Tensor& gt_states) {
    const int p = pred_states.rows();
    if (gt_states.rows() != p) throw std::invalid_argument("ade_fde: horizon mismatch");
    double sum = 0, last = 0;
    for (int i = 0; i < p; ++i) {
        const double dx = pred_states.at2(i, 0) - gt_states.at2(i, 0);
        const double dy = pred_states.at2(i, 1) - gt_states.at2(i, 1);
        last = std::hypot(dx, dy);
        sum += last;
    }
    return {p > 0 ? sum / p : 0.0, last};
}

}  // namespace tempbev::model
