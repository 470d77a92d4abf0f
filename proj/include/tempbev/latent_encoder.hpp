#pragma once

#include "tempbev/frontends.hpp"

namespace tempbev::model {

// Recurrent latent bottleneck: a learned [N, M] latent array is refined once
// per timestep by cross-attending into that step's token sequence, then
// through a stack of latent self-attention blocks. Temporal fusion is a left
// fold oldest -> newest so the reference step is absorbed last.
class LatentEncoder {
public:
    static LatentEncoder create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng);

    Var initial_latents() const { return latents_init_; }
    Var encode_step(const Var& latents, const Var& tokens) const;
    Var encode_sequence(const std::vector<Var>& step_tokens) const;

private:
    ModelConfig cfg_;
    Var latents_init_;  // [N, M]
    nn::AttentionBlock cross_;
    std::vector<nn::AttentionBlock> self_;
};

}  // namespace tempbev::model
