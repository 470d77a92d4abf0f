#pragma once

#include "tempbev/latent_encoder.hpp"

namespace tempbev::model {

// Decodes the latent array into per-class multi-horizon occupancy logits. A
// learned query grid [h_bev*w_bev, c_bev] cross-attends into the latents
// (projecting to width M, no query residual since widths differ), then each
// class gets a small convolutional refinement head emitting f channels: the
// occupancy logits for horizons T+0 .. T+f-1 in one shot.
class BevDecoder {
public:
    static BevDecoder create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng);

    Var decode_features(const Var& latents) const;  // -> [M, h_bev, w_bev]
    // per entry of cfg.classes: logits [f, h_bev, w_bev]
    std::vector<Var> decode(const Var& latents) const;

private:
    ModelConfig cfg_;
    Var query_;  // [h_bev*w_bev, c_bev]
    nn::AttentionBlock cross_;
    struct Head {
        nn::Conv in, out;  // 1x1 convs
        std::vector<nn::ResidualConvBlock> blocks;
    };
    std::vector<Head> heads_;
};

// Full pipeline: per-frame tokens -> recurrent latent encoding -> BEV decode.
// With temporal off only the reference frame is consumed.
class SegModel {
public:
    static SegModel create(nn::ParamStore& ps, const ModelConfig& cfg,
                           const Modalities& active,
                           const std::vector<geom::CameraModel>& rig, Rng& rng);

    std::vector<Var> forward(const world::TemporalSample& sample) const;
    Var encode(const world::TemporalSample& sample) const;  // latents [N, M]

    const ModelConfig& config() const { return cfg_; }
    const Modalities& modalities() const { return active_; }
    const Frontends& frontends() const { return frontends_; }
    const BevDecoder& decoder() const { return decoder_; }

private:
    ModelConfig cfg_;
    Modalities active_;
    std::vector<geom::CameraModel> rig_;
    Frontends frontends_;
    LatentEncoder encoder_;
    BevDecoder decoder_;
};

double sigmoid(double z);
Tensor sigmoid(const Tensor& logits);
// probability >= threshold -> 1 (boundary counts as positive)
Tensor to_binary(const Tensor& probs, double threshold = 0.5);

}  // namespace tempbev::model
