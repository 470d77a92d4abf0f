#pragma once

#include "tempbev/model_config.hpp"
#include "tempbev/nn.hpp"

namespace tempbev::model {

using ad::Var;

enum class Modality { camera, lidar, ego };

struct TokenSequence {
    Var tokens;  // [T_tokens, c]
    std::vector<Modality> tags;
};

// Fourier feature encoding of values pre-scaled to roughly [-1, 1]:
// [v, sin(2^b pi v), cos(2^b pi v) for b in 0..bands-1] per input value.
std::vector<double> fourier_encode(const std::vector<double>& values, int bands);

// deterministic pillar-grid positional embedding, padded to c channels
Tensor fourier_pos_embedding(int h, int w, int bands, int c);

class Frontends {
public:
    static Frontends create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng);

    // images: [K, H, W, 3] -> [K*feat_h*feat_w, c], rows camera-major row-major
    Var camera_backbone(const Var& images) const;
    // geometric conditioning per feature cell: unit-depth ray endpoint + camera
    // forward axis, Fourier-encoded, through a 2-layer perceptron; rays are
    // expressed in the reference ego frame via to_reference
    Var camera_pos_embedding(const std::vector<geom::CameraModel>& rig,
                             const geom::Pose& to_reference = geom::Pose()) const;
    // points: [D, 4] ego frame -> [h_pillar*w_pillar, c]; empty pillars zero.
    // Points are moved into the reference ego frame before binning, so tokens
    // from past frames land on the cells they occupy at the reference time.
    Var pillarize(const Tensor& points, const geom::Pose& to_reference = geom::Pose()) const;
    // [6, c]: one token per DOF (yaw, pitch, roll, tx, ty, tz); exact zeros at
    // the reference step
    Var ego_embedding(const geom::Pose& rel, bool is_reference_step) const;

    TokenSequence assemble_tokens(const Var& e_cam, const Var& o_cam, const Var& e_pc,
                                  const Var& o_pc, const Var& ego_tokens,
                                  const Modalities& active) const;

    // convenience: full per-frame pipeline
    TokenSequence frame_tokens(const world::SampleFrame& frame,
                               const std::vector<geom::CameraModel>& rig,
                               const geom::Pose& rel_to_reference,
                               bool is_reference_step, const Modalities& active) const;

    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    std::vector<nn::Conv> backbone_;
    nn::Linear cam_pe1_, cam_pe2_;  // 2-layer perceptron for camera rays
    nn::Linear cam_fuse_;           // [2c -> c]
    nn::Linear point_lin_;          // [6 -> c] shared per-point map
    nn::Linear pillar_fuse_;        // [2c -> c]
    nn::Linear ego_lin_;            // [1+2*bands -> c] shared across DOFs
    Tensor pillar_pos_;             // cached fourier_pos_embedding
};

}  // namespace tempbev::model
