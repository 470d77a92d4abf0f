#include "tempbev/latent_encoder.hpp"

namespace tempbev::model {

LatentEncoder LatentEncoder::create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    LatentEncoder enc;
    enc.cfg_ = cfg;
    enc.latents_init_ = ps.add(
        "latents.init",
        truncated_normal_tensor({cfg.N, cfg.M}, 0.0, 0.02, -2.0, 2.0, rng));
    enc.cross_ = nn::AttentionBlock::create(ps, "enc.cross", cfg.M, cfg.M, cfg.c,
                                            cfg.heads, rng);
    for (int l = 0; l < cfg.sa_layers; ++l) {
        enc.self_.push_back(nn::AttentionBlock::create(
            ps, "enc.self" + std::to_string(l), cfg.M, cfg.M, cfg.M, cfg.heads, rng));
    }
    return enc;
}

Var LatentEncoder::encode_step(const Var& latents, const Var& tokens) const {
    if (!tokens || tokens->val.rows() == 0)
        throw std::invalid_argument("encode_step: empty token sequence");
    if (tokens->val.cols() != cfg_.c)
        throw std::invalid_argument("encode_step: token width " +
                                    std::to_string(tokens->val.cols()) + " != c");
    Var x = cross_(latents, tokens);
    for (const auto& sa : self_) x = sa(x, x);
    return x;
}

Var LatentEncoder::encode_sequence(const std::vector<Var>& step_tokens) const {
    if (step_tokens.empty())
        throw std::invalid_argument("encode_sequence: need >= 1 step");
    Var lat = latents_init_;
    for (const auto& tokens : step_tokens) lat = encode_step(lat, tokens);
    return lat;
}

}  // namespace tempbev::model
