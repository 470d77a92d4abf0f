#include "tempbev/frontends.hpp"

#include <cmath>

namespace tempbev::model {

std::vector<double> fourier_encode(const std::vector<double>& values, int bands) {
    std::vector<double> out;
    out.reserve(values.size() * (1 + 2 * bands));
    for (double v : values) {
        out.push_back(v);
        double freq = M_PI;
        for (int b = 0; b < bands; ++b) {
            out.push_back(std::sin(freq * v));
            out.push_back(std::cos(freq * v));
            freq *= 2.0;
        }
    }
    return out;
}

Tensor fourier_pos_embedding(int h, int w, int bands, int c) {
    const int enc = 2 + 4 * bands;
    if (enc > c) throw std::invalid_argument("fourier_pos_embedding: bands too large for c");
    Tensor out({h * w, c});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double xi = h > 1 ? static_cast<double>(i) / (h - 1) : 0.0;
            const double yj = w > 1 ? static_cast<double>(j) / (w - 1) : 0.0;
            const auto e = fourier_encode({xi, yj}, bands);
            for (std::size_t k = 0; k < e.size(); ++k) out.at2(i * w + j, static_cast<int>(k)) = e[k];
        }
    }
    return out;
}

Frontends Frontends::create(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Frontends fe;
    fe.cfg_ = cfg;
    // strided conv stack; one stride-2 block per factor of 2 in d_f
    int blocks = 0;
    for (int d = cfg.d_f; d > 1; d /= 2) {
        if (d % 2 != 0) throw std::invalid_argument("Frontends: d_f must be a power of 2");
        ++blocks;
    }
    int cin = 3;
    for (int b = 0; b < blocks; ++b) {
        const int cout = b + 1 == blocks ? cfg.c : std::max(8, cfg.c / 2);
        fe.backbone_.push_back(
            nn::Conv::create(ps, "backbone.conv" + std::to_string(b), cin, cout, 3, 2, 1, rng));
        cin = cout;
    }
    const int ray_enc = 6 * (1 + 2 * cfg.fourier_bands);
    fe.cam_pe1_ = nn::Linear::create(ps, "cam_pe.fc1", ray_enc, cfg.c, rng);
    fe.cam_pe2_ = nn::Linear::create(ps, "cam_pe.fc2", cfg.c, cfg.c, rng);
    fe.cam_fuse_ = nn::Linear::create(ps, "cam_fuse", 2 * cfg.c, cfg.c, rng);
    fe.point_lin_ = nn::Linear::create(ps, "pillar.point_fc", 6, cfg.c, rng);
    fe.pillar_fuse_ = nn::Linear::create(ps, "pillar_fuse", 2 * cfg.c, cfg.c, rng);
    fe.ego_lin_ = nn::Linear::create(ps, "ego_fc", 1 + 2 * cfg.fourier_bands, cfg.c, rng);
    fe.pillar_pos_ = fourier_pos_embedding(cfg.h_pillar, cfg.w_pillar, cfg.fourier_bands, cfg.c);
    return fe;
}

Var Frontends::camera_backbone(const Var& images) const {
    const auto& sh = images->val.shape();
    if (sh.size() != 4 || sh[0] != cfg_.K || sh[1] != cfg_.H || sh[2] != cfg_.W || sh[3] != 3)
        throw std::invalid_argument("camera_backbone: images shape " + images->val.shape_str() +
                                    " does not match config");
    Var flat = ad::reshape(images, {cfg_.K, cfg_.H * cfg_.W * 3});
    std::vector<Var> per_cam;
    per_cam.reserve(static_cast<std::size_t>(cfg_.K));
    for (int k = 0; k < cfg_.K; ++k) {
        Var img = ad::reshape(ad::slice_rows(flat, k, k + 1), {cfg_.H * cfg_.W, 3});
        Var chw = ad::reshape(ad::transpose2d(img), {3, cfg_.H, cfg_.W});
        Var x = chw;
        for (const auto& conv : backbone_) x = ad::relu(conv(x));
        // [c, fh, fw] -> [fh*fw, c]
        per_cam.push_back(ad::transpose2d(ad::reshape(x, {cfg_.c, cfg_.feat_h() * cfg_.feat_w()})));
    }
    return ad::concat_rows(per_cam);
}

Var Frontends::camera_pos_embedding(const std::vector<geom::CameraModel>& rig,
                                    const geom::Pose& to_reference) const {
    if (static_cast<int>(rig.size()) != cfg_.K)
        throw std::invalid_argument("camera_pos_embedding: rig size != K");
    const int fh = cfg_.feat_h(), fw = cfg_.feat_w();
    const int enc = 6 * (1 + 2 * cfg_.fourier_bands);
    Tensor rays({cfg_.K * fh * fw, enc});
    for (int k = 0; k < cfg_.K; ++k) {
        const auto& cam = rig[static_cast<std::size_t>(k)];
        const geom::Vec3 fwd =
            to_reference.rotation() * (cam.extrinsic.rotation() * geom::Vec3(0, 0, 1));
        for (int i = 0; i < fh; ++i) {
            for (int j = 0; j < fw; ++j) {
                const double u = (j + 0.5) * cfg_.d_f;
                const double v = (i + 0.5) * cfg_.d_f;
                const geom::Vec3 end =
                    to_reference.apply(geom::pixel_to_ego(cam, u, v, 1.0));
                const auto e = fourier_encode(
                    {end.x(), end.y(), end.z(), fwd.x(), fwd.y(), fwd.z()},
                    cfg_.fourier_bands);
                const int row = (k * fh + i) * fw + j;
                for (std::size_t q = 0; q < e.size(); ++q)
                    rays.at2(row, static_cast<int>(q)) = e[q];
            }
        }
    }
    return cam_pe2_(ad::gelu(cam_pe1_(ad::constant(std::move(rays)))));
}

Var Frontends::pillarize(const Tensor& points, const geom::Pose& to_reference) const {
    const geom::GridSpec spec = cfg_.pillar_spec();
    int d = points.rows();
    std::vector<int> keep;
    if (d > cfg_.d_max) {
        // seeded subsample; indices kept sorted so ingestion order is stable
        Rng rng(0x9d2c5680u ^ static_cast<std::uint64_t>(d));
        std::vector<int> idx(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < cfg_.d_max; ++i) {
            const int j = rng.uniform_int(i, d - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        keep.assign(idx.begin(), idx.begin() + cfg_.d_max);
        std::sort(keep.begin(), keep.end());
        d = cfg_.d_max;
    } else {
        keep.resize(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) keep[static_cast<std::size_t>(i)] = i;
    }
    Tensor feats({std::max(d, 1), 6});
    std::vector<int> pillar_of(static_cast<std::size_t>(std::max(d, 1)), -1);
    const double half_res = spec.resolution / 2;
    for (int r = 0; r < d; ++r) {
        const int src = keep[static_cast<std::size_t>(r)];
        const geom::Vec3 p = to_reference.apply(
            {points.at2(src, 0), points.at2(src, 1), points.at2(src, 2)});
        const double x = p.x(), y = p.y(), z = p.z();
        const double inten = points.at2(src, 3);
        const auto cell = spec.ego_to_cell(x, y);
        if (!cell) continue;
        const auto [ci, cj] = *cell;
        pillar_of[static_cast<std::size_t>(r)] = ci * spec.w_bev + cj;
        const auto [cx, cy] = spec.cell_center(ci, cj);
        feats.at2(r, 0) = x / (spec.extent_x() / 2);
        feats.at2(r, 1) = y / (spec.extent_y() / 2);
        feats.at2(r, 2) = z / 3.0;
        feats.at2(r, 3) = inten;
        feats.at2(r, 4) = (x - cx) / half_res;
        feats.at2(r, 5) = (y - cy) / half_res;
    }
    Var per_point = ad::relu(point_lin_(ad::constant(std::move(feats))));
    return ad::pillar_max(per_point, pillar_of, cfg_.h_pillar * cfg_.w_pillar);
}

Var Frontends::ego_embedding(const geom::Pose& rel, bool is_reference_step) const {
    if (is_reference_step) return ad::constant(Tensor({6, cfg_.c}));
    const auto& r = rel.rotation();
    const double yaw = std::atan2(r(1, 0), r(0, 0));
    const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    const double roll = std::atan2(r(2, 1), r(2, 2));
    const geom::Vec3& t = rel.translation();
    const double dof[6] = {yaw / M_PI, pitch / M_PI, roll / M_PI,
                           t.x() / 10.0, t.y() / 10.0, t.z() / 10.0};
    const int enc = 1 + 2 * cfg_.fourier_bands;
    Tensor rows({6, enc});
    for (int i = 0; i < 6; ++i) {
        const auto e = fourier_encode({dof[i]}, cfg_.fourier_bands);
        for (std::size_t q = 0; q < e.size(); ++q) rows.at2(i, static_cast<int>(q)) = e[q];
    }
    return ego_lin_(ad::constant(std::move(rows)));
}

TokenSequence Frontends::assemble_tokens(const Var& e_cam, const Var& o_cam,
                                         const Var& e_pc, const Var& o_pc,
                                         const Var& ego_tokens,
                                         const Modalities& active) const {
    if (!active.camera && !active.lidar)
        throw std::invalid_argument("assemble_tokens: at least one of camera/lidar must be active");
    std::vector<Var> parts;
    TokenSequence seq;
    if (active.camera) {
        parts.push_back(cam_fuse_(ad::concat_cols(e_cam, o_cam)));
        seq.tags.insert(seq.tags.end(), static_cast<std::size_t>(cfg_.camera_tokens()),
                        Modality::camera);
    }
    if (active.lidar) {
        parts.push_back(pillar_fuse_(ad::concat_cols(e_pc, o_pc)));
        seq.tags.insert(seq.tags.end(), static_cast<std::size_t>(cfg_.lidar_tokens()),
                        Modality::lidar);
    }
    parts.push_back(ego_tokens);
    seq.tags.insert(seq.tags.end(), 6, Modality::ego);
    seq.tokens = ad::concat_rows(parts);
    return seq;
}

TokenSequence Frontends::frame_tokens(const world::SampleFrame& frame,
                                      const std::vector<geom::CameraModel>& rig,
                                      const geom::Pose& rel_to_reference,
                                      bool is_reference_step,
                                      const Modalities& active) const {
    Var e_cam, o_cam, e_pc, o_pc;
    if (active.camera) {
        e_cam = camera_backbone(ad::constant(frame.images));
        o_cam = camera_pos_embedding(rig, rel_to_reference);
    }
    if (active.lidar) {
        e_pc = pillarize(frame.points, rel_to_reference);
        o_pc = ad::constant(pillar_pos_);
    }
    Var ego = ego_embedding(rel_to_reference, is_reference_step);
    return assemble_tokens(e_cam, o_cam, e_pc, o_pc, ego, active);
}

}  // namespace tempbev::model
