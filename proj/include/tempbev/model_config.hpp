#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tempbev/synthworld.hpp"

namespace tempbev::model {

struct Modalities {
    bool camera = true;
    bool lidar = true;
    bool temporal = true;

    std::string label() const {  // ablation row label, e.g. "C+L+T"
        std::string s;
        if (camera) s += "C";
        if (lidar) s += s.empty() ? "L" : "+L";
        if (temporal) s += s.empty() ? "T" : "+T";
        return s;
    }
};

struct ModelConfig {
    int K = 4;           // cameras
    int H = 16, W = 32;  // image size
    int d_f = 8;         // backbone downsample factor
    int c = 16;          // shared token feature channels
    int h_pillar = 16, w_pillar = 16;
    double pillar_resolution = 1.5;  // meters/cell of the pillar grid
    int d_max = 4096;                // point cap (seeded subsample beyond)
    int S = 3;                       // temporal steps
    int N = 16, M = 32;              // latent count / width
    int h_bev = 32, w_bev = 32;
    int c_bev = 32;
    double bev_resolution = 0.75;
    int f = 5;   // prediction horizon in grids
    int p = 10;  // trajectory steps
    int fourier_bands = 3;
    int sa_layers = 2;
    int heads = 4;
    int refine_width = 16;
    int refine_blocks = 1;
    int d_dec = 0;  // decoder per-cell readout width; 0 means "use M"
    std::vector<world::SegClass> classes = {world::SegClass::vehicle};

    int feat_h() const { return H / d_f; }
    int feat_w() const { return W / d_f; }
    int camera_tokens() const { return K * feat_h() * feat_w(); }
    int lidar_tokens() const { return h_pillar * w_pillar; }
    int token_count(const Modalities& m) const {
        return (m.camera ? camera_tokens() : 0) + (m.lidar ? lidar_tokens() : 0) + 6;
    }
    geom::GridSpec bev_spec() const { return {h_bev, w_bev, bev_resolution}; }
    geom::GridSpec pillar_spec() const { return {h_pillar, w_pillar, pillar_resolution}; }

    void validate() const {
        if (H % d_f != 0 || W % d_f != 0)
            throw std::invalid_argument("ModelConfig: image size not divisible by d_f");
        if (c % heads != 0 || M % heads != 0 || c_bev % heads != 0)
            throw std::invalid_argument("ModelConfig: widths must be divisible by heads");
        if (f < 1 || S < 1) throw std::invalid_argument("ModelConfig: f >= 1 and S >= 1 required");
        if (2 * 2 * fourier_bands + 2 > c)
            throw std::invalid_argument("ModelConfig: fourier bands too large for c");
        if (classes.empty()) throw std::invalid_argument("ModelConfig: need >= 1 class");
    }
};

}  // namespace tempbev::model
