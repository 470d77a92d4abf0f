#include "tempbev/bev_decoder.hpp"

#include <cmath>

namespace tempbev::model {

BevDecoder BevDecoder::create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    BevDecoder dec;
    dec.cfg_ = cfg;
    const int dd = cfg.d_dec > 0 ? cfg.d_dec : cfg.M;
    dec.query_ = ps.add(
        "dec.query",
        truncated_normal_tensor({cfg.h_bev * cfg.w_bev, cfg.c_bev}, 0.0, 0.02, -2.0, 2.0,
                                rng));
    // no feed-forward sub-block here: the refinement convs that follow supply
    // the per-cell nonlinearity at a fraction of the cost
    dec.cross_ = nn::AttentionBlock::create(ps, "dec.cross", cfg.c_bev, dd, cfg.M,
                                            cfg.heads, rng, /*residual_q=*/false,
                                            /*with_ff=*/false);
    for (std::size_t ci = 0; ci < cfg.classes.size(); ++ci) {
        const std::string pfx = "dec.head" + std::to_string(ci);
        Head h;
        h.in = nn::Conv::create(ps, pfx + ".in", dd, cfg.refine_width, 1, 1, 0, rng);
        for (int b = 0; b < cfg.refine_blocks; ++b)
            h.blocks.push_back(nn::ResidualConvBlock::create(
                ps, pfx + ".block" + std::to_string(b), cfg.refine_width, rng));
        h.out = nn::Conv::create(ps, pfx + ".out", cfg.refine_width, cfg.f, 1, 1, 0, rng);
        dec.heads_.push_back(std::move(h));
    }
    return dec;
}

Var BevDecoder::decode_features(const Var& latents) const {
    if (latents->val.rows() != cfg_.N || latents->val.cols() != cfg_.M)
        throw std::invalid_argument("decode_features: latents shape " +
                                    latents->val.shape_str() + " != [N, M]");
    const int dd = cfg_.d_dec > 0 ? cfg_.d_dec : cfg_.M;
    Var x = cross_(query_, latents);  // [h*w, d_dec]
    return ad::reshape(ad::transpose2d(x), {dd, cfg_.h_bev, cfg_.w_bev});
}

std::vector<Var> BevDecoder::decode(const Var& latents) const {
    const Var feat = decode_features(latents);
    std::vector<Var> out;
    out.reserve(heads_.size());
    for (const auto& h : heads_) {
        Var x = ad::relu(h.in(feat));
        for (const auto& blk : h.blocks) x = blk(x);
        out.push_back(h.out(x));
    }
    return out;
}

SegModel SegModel::create(nn::ParamStore& ps, const ModelConfig& cfg,
                          const Modalities& active,
                          const std::vector<geom::CameraModel>& rig, Rng& rng) {
    if (active.camera && static_cast<int>(rig.size()) != cfg.K)
        throw std::invalid_argument("SegModel: rig size != K");
    SegModel m;
    m.cfg_ = cfg;
    m.active_ = active;
    m.rig_ = rig;
    m.frontends_ = Frontends::create(ps, cfg, rng);
    m.encoder_ = LatentEncoder::create(ps, cfg, rng);
    m.decoder_ = BevDecoder::create(ps, cfg, rng);
    return m;
}

Var SegModel::encode(const world::TemporalSample& sample) const {
    if (sample.frames.empty()) throw std::invalid_argument("SegModel: sample has no frames");
    const int n = static_cast<int>(sample.frames.size());
    const int first = active_.temporal ? 0 : n - 1;
    const geom::Pose& ref = sample.frames.back().ego_pose;
    std::vector<Var> steps;
    for (int i = first; i < n; ++i) {
        const auto& frame = sample.frames[static_cast<std::size_t>(i)];
        const geom::Pose rel = geom::relative_pose(frame.ego_pose, ref);
        steps.push_back(
            frontends_.frame_tokens(frame, rig_, rel, i == n - 1, active_).tokens);
    }
    return encoder_.encode_sequence(steps);
}

std::vector<Var> SegModel::forward(const world::TemporalSample& sample) const {
    return decoder_.decode(encode(sample));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor sigmoid(const Tensor& logits) {
    Tensor out(logits.shape());
    for (std::int64_t i = 0; i < logits.numel(); ++i) out[i] = sigmoid(logits[i]);
    return out;
}

Tensor to_binary(const Tensor& probs, double threshold) {
    Tensor out(probs.shape());
    for (std::int64_t i = 0; i < probs.numel(); ++i)
        out[i] = probs[i] >= threshold ? 1.0 : 0.0;
    return out;
}

}  // namespace tempbev::model
