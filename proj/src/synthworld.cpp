#include "tempbev/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tempbev/rng.hpp"

namespace tempbev::world {

using geom::Pose;
using geom::Vec3;
using Vec2 = Eigen::Vector2d;

const char* seg_class_name(SegClass c) {
    switch (c) {
        case SegClass::vehicle: return "vehicle";
        case SegClass::human: return "human";
        case SegClass::drivable_area: return "drivable_area";
        case SegClass::walkway: return "walkway";
    }
    return "?";
}

SegClass seg_class_from_name(const std::string& name) {
    if (name == "vehicle") return SegClass::vehicle;
    if (name == "human") return SegClass::human;
    if (name == "drivable_area") return SegClass::drivable_area;
    if (name == "walkway") return SegClass::walkway;
    throw std::invalid_argument("unknown class: " + name);
}

Pose Agent::pose_at(int t) const {
    const AgentState& st = track.at(static_cast<std::size_t>(t));
    return Pose::from_yaw(st.yaw, Vec3(st.x, st.y, 0.0));
}

bool Agent::footprint_contains(int t, double wx, double wy) const {
    const AgentState& st = track.at(static_cast<std::size_t>(t));
    const double c = std::cos(st.yaw), s = std::sin(st.yaw);
    const double dx = wx - st.x, dy = wy - st.y;
    const double lx = c * dx + s * dy;   // along length
    const double ly = -s * dx + c * dy;  // along width
    return std::abs(lx) <= length / 2 && std::abs(ly) <= width / 2;
}

const Agent& Scenario::agent_by_id(int id) const {
    for (const auto& a : agents)
        if (a.id == id) return a;
    throw std::out_of_range("no agent with id " + std::to_string(id));
}

int visibility_bin(double f) {
    if (f < 0.4) return 0;
    if (f < 0.6) return 1;
    if (f < 0.8) return 2;
    return 3;
}

namespace {

constexpr double kDeg = M_PI / 180.0;

// interpolated ego pose for intra-frame lidar sweeps
Pose interp_pose(const Agent& a, double t) {
    const int t0 = std::clamp(static_cast<int>(std::floor(t)), 0,
                              static_cast<int>(a.track.size()) - 1);
    const int t1 = std::min(t0 + 1, static_cast<int>(a.track.size()) - 1);
    const double u = t - t0;
    const AgentState& s0 = a.track[static_cast<std::size_t>(t0)];
    const AgentState& s1 = a.track[static_cast<std::size_t>(t1)];
    double dyaw = s1.yaw - s0.yaw;
    while (dyaw > M_PI) dyaw -= 2 * M_PI;
    while (dyaw <= -M_PI) dyaw += 2 * M_PI;
    return Pose::from_yaw(s0.yaw + u * dyaw, Vec3(s0.x + u * (s1.x - s0.x),
                                                  s0.y + u * (s1.y - s0.y), 0.0));
}

// slab test; box local frame: x along length, y along width, z in [0, height]
bool ray_box(const Agent& a, int t, const Vec3& o, const Vec3& d, double& t_hit) {
    const AgentState& st = a.track[static_cast<std::size_t>(t)];
    const double c = std::cos(st.yaw), s = std::sin(st.yaw);
    const Vec3 ol(c * (o.x() - st.x) + s * (o.y() - st.y),
                  -s * (o.x() - st.x) + c * (o.y() - st.y), o.z());
    const Vec3 dl(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
    const double lo[3] = {-a.length / 2, -a.width / 2, 0.0};
    const double hi[3] = {a.length / 2, a.width / 2, a.height};
    double tmin = 0.0, tmax = 1e30;
    for (int k = 0; k < 3; ++k) {
        if (std::abs(dl[k]) < 1e-12) {
            if (ol[k] < lo[k] || ol[k] > hi[k]) return false;
        } else {
            double t0 = (lo[k] - ol[k]) / dl[k];
            double t1 = (hi[k] - ol[k]) / dl[k];
            if (t0 > t1) std::swap(t0, t1);
            tmin = std::max(tmin, t0);
            tmax = std::min(tmax, t1);
            if (tmin > tmax) return false;
        }
    }
    if (tmin <= 1e-9) return false;  // origin inside or behind
    t_hit = tmin;
    return true;
}

// returns -2 no hit, -1 ground, >=0 index into subset's agent list
int intersect_scene(const Scenario& s, int t, const Vec3& o, const Vec3& d,
                    const std::vector<int>& agent_indices, double max_range,
                    double& t_hit) {
    int best = -2;
    double best_t = max_range;
    for (int idx : agent_indices) {
        double th;
        if (ray_box(s.agents[static_cast<std::size_t>(idx)], t, o, d, th) && th < best_t) {
            best_t = th;
            best = idx;
        }
    }
    if (d.z() < -1e-12) {
        const double tg = -o.z() / d.z();
        if (tg > 1e-9 && tg < best_t) {
            best_t = tg;
            best = -1;
        }
    }
    t_hit = best_t;
    return best;
}

bool point_in_poly(const std::vector<Vec2>& poly, double x, double y) {
    bool in = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y() > y) != (b.y() > y) &&
            x < (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()) + a.x())
            in = !in;
    }
    return in;
}

struct GroundMaterial {
    double r, g, b, intensity;
};

GroundMaterial ground_material(const Scenario& s, double wx, double wy) {
    if (point_in_poly(s.drivable_poly, wx, wy)) return {0.32, 0.32, 0.35, 0.30};
    for (const auto& poly : s.walkway_polys)
        if (point_in_poly(poly, wx, wy)) return {0.55, 0.50, 0.45, 0.45};
    return {0.22, 0.40, 0.22, 0.15};
}

void agent_color(const Agent& a, double& r, double& g, double& b, double& inten) {
    if (a.cls == AgentClass::vehicle) {
        // per-id hue shade so instances are tellable apart
        const double h = 0.15 * ((a.id * 2654435761u >> 8) % 7) / 7.0;
        r = 0.75 + h;
        g = 0.12 + h;
        b = 0.12;
        inten = 0.80;
    } else {
        r = 0.90;
        g = 0.70;
        b = 0.20;
        inten = 0.60;
    }
}

std::vector<int> all_agent_indices(const Scenario& s) {
    std::vector<int> v(s.agents.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
    return v;
}

// per-pixel first-hit agent index (-1 ground, -2 sky) over one camera
void render_labels(const Scenario& s, int t, const geom::CameraModel& cam,
                   const std::vector<int>& agent_indices, std::vector<int>& labels) {
    const Pose ego = s.ego.pose_at(t);
    const Vec3 cam_center_w = ego.apply(cam.extrinsic.translation());
    labels.assign(static_cast<std::size_t>(cam.height) * cam.width, -2);
    for (int v = 0; v < cam.height; ++v) {
        for (int u = 0; u < cam.width; ++u) {
            const Vec3 p_ego = geom::pixel_to_ego(cam, u + 0.5, v + 0.5, 1.0);
            Vec3 dir = ego.rotation() * (p_ego - cam.extrinsic.translation());
            dir.normalize();
            double th;
            labels[static_cast<std::size_t>(v) * cam.width + u] =
                intersect_scene(s, t, cam_center_w, dir, agent_indices, 200.0, th);
        }
    }
}

int count_pixels(const Scenario& s, int t, const std::vector<int>& agent_indices,
                 int wanted_idx) {
    int n = 0;
    std::vector<int> labels;
    for (const auto& cam : s.rig) {
        render_labels(s, t, cam, agent_indices, labels);
        for (int l : labels)
            if (l == wanted_idx) ++n;
    }
    return n;
}

}  // namespace

SampleFrame render_frame(const Scenario& s, int t) {
    if (t < 0 || t >= s.cfg.duration) throw std::out_of_range("render_frame: bad timestep");
    const auto idxs = all_agent_indices(s);
    const Pose ego = s.ego.pose_at(t);
    const int K = static_cast<int>(s.rig.size());
    const int H = s.cfg.rig.image_h, W = s.cfg.rig.image_w;
    SampleFrame frame;
    frame.timestamp = t * s.cfg.dt;
    frame.ego_pose = ego;
    frame.images = Tensor({K, H, W, 3});
    for (int k = 0; k < K; ++k) {
        const geom::CameraModel& cam = s.rig[static_cast<std::size_t>(k)];
        const Vec3 cam_center_w = ego.apply(cam.extrinsic.translation());
        for (int v = 0; v < H; ++v) {
            for (int u = 0; u < W; ++u) {
                const Vec3 p_ego = geom::pixel_to_ego(cam, u + 0.5, v + 0.5, 1.0);
                Vec3 dir = ego.rotation() * (p_ego - cam.extrinsic.translation());
                dir.normalize();
                double th;
                const int hit = intersect_scene(s, t, cam_center_w, dir, idxs, 200.0, th);
                double r, g, b;
                if (hit == -2) {
                    r = 0.55;
                    g = 0.70;
                    b = 0.90;
                } else {
                    double inten;
                    if (hit == -1) {
                        const Vec3 p = cam_center_w + th * dir;
                        const auto m = ground_material(s, p.x(), p.y());
                        r = m.r;
                        g = m.g;
                        b = m.b;
                    } else {
                        agent_color(s.agents[static_cast<std::size_t>(hit)], r, g, b, inten);
                    }
                    const double fade = 0.35 + 0.65 * std::exp(-th / 25.0);
                    r *= fade;
                    g *= fade;
                    b *= fade;
                }
                double* px = frame.images.data() +
                             ((static_cast<std::int64_t>(k) * H + v) * W + u) * 3;
                px[0] = std::clamp(r, 0.0, 1.0);
                px[1] = std::clamp(g, 0.0, 1.0);
                px[2] = std::clamp(b, 0.0, 1.0);
            }
        }
    }

    // lidar: first-hit ray casting, points motion-compensated into frame t
    std::vector<double> pts;
    const auto& lc = s.cfg.lidar;
    const Pose ego_inv = ego.inverse();
    for (int sweep = 0; sweep < lc.sweeps_per_frame; ++sweep) {
        const double ts = t - static_cast<double>(sweep) / lc.sweeps_per_frame;
        if (ts < 0) break;
        const Pose ego_s = interp_pose(s.ego, ts);
        const Vec3 mount_w = ego_s.apply(s.lidar_mount.translation());
        // a spinning sensor does not resample identical azimuths every frame;
        // drift the comb by a golden-ratio phase so consecutive scans interleave
        const double phase = std::fmod(ts * 0.6180339887498949, 1.0);
        for (int ring = 0; ring < static_cast<int>(lc.elevations_deg.size()); ++ring) {
            const double el = lc.elevations_deg[static_cast<std::size_t>(ring)] * kDeg;
            for (int az = 0; az < lc.azimuth_steps; ++az) {
                const double a = 2 * M_PI * (az + phase) / lc.azimuth_steps;
                const Vec3 dir_ego(std::cos(el) * std::cos(a), std::cos(el) * std::sin(a),
                                   std::sin(el));
                const Vec3 dir_w = ego_s.rotation() * dir_ego;
                double th;
                const int hit = intersect_scene(s, t, mount_w, dir_w, idxs, lc.max_range, th);
                if (hit == -2) continue;
                const Vec3 p_w = mount_w + th * dir_w;
                double inten;
                if (hit == -1) {
                    inten = ground_material(s, p_w.x(), p_w.y()).intensity;
                } else {
                    double r, g, b;
                    agent_color(s.agents[static_cast<std::size_t>(hit)], r, g, b, inten);
                }
                const Vec3 p_ego_t = ego_inv.apply(p_w);
                pts.push_back(p_ego_t.x());
                pts.push_back(p_ego_t.y());
                pts.push_back(p_ego_t.z());
                pts.push_back(inten);
            }
        }
    }
    const int D = static_cast<int>(pts.size() / 4);
    frame.points = Tensor({D, 4}, std::move(pts));
    return frame;
}

std::vector<VisibilityRecord> compute_visibility(const Scenario& s, int t) {
    if (t < 0 || t >= s.cfg.duration) throw std::out_of_range("compute_visibility: bad timestep");
    const auto all = all_agent_indices(s);
    std::vector<VisibilityRecord> out;
    out.reserve(s.agents.size());
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        const int idx = static_cast<int>(i);
        const int seen = count_pixels(s, t, all, idx);
        double frac = 0.0;
        if (seen > 0) {
            const std::vector<int> lone = {idx};
            const int alone = count_pixels(s, t, lone, idx);
            frac = alone > 0 ? std::min(1.0, static_cast<double>(seen) / alone) : 0.0;
        }
        out.push_back({s.agents[i].id, frac, visibility_bin(frac)});
    }
    return out;
}

Tensor ground_truth_bev(const Scenario& s, int t, const geom::GridSpec& spec,
                        SegClass cls) {
    spec.validate();
    const Pose ego = s.ego.pose_at(t);
    Tensor grid({spec.h_bev, spec.w_bev});
    for (int i = 0; i < spec.h_bev; ++i) {
        for (int j = 0; j < spec.w_bev; ++j) {
            const auto [ex, ey] = spec.cell_center(i, j);
            const Vec3 w = ego.apply(Vec3(ex, ey, 0.0));
            bool on = false;
            switch (cls) {
                case SegClass::vehicle:
                case SegClass::human: {
                    const AgentClass want =
                        cls == SegClass::vehicle ? AgentClass::vehicle : AgentClass::human;
                    for (const auto& a : s.agents)
                        if (a.cls == want && a.footprint_contains(t, w.x(), w.y())) {
                            on = true;
                            break;
                        }
                    break;
                }
                case SegClass::drivable_area:
                    on = point_in_poly(s.drivable_poly, w.x(), w.y());
                    break;
                case SegClass::walkway:
                    for (const auto& poly : s.walkway_polys)
                        if (point_in_poly(poly, w.x(), w.y())) {
                            on = true;
                            break;
                        }
                    break;
            }
            grid.at2(i, j) = on ? 1.0 : 0.0;
        }
    }
    return grid;
}

Tensor vehicle_ownership(const Scenario& s, int t, const geom::GridSpec& spec) {
    const Pose ego = s.ego.pose_at(t);
    Tensor own({spec.h_bev, spec.w_bev}, -1.0);
    for (int i = 0; i < spec.h_bev; ++i) {
        for (int j = 0; j < spec.w_bev; ++j) {
            const auto [ex, ey] = spec.cell_center(i, j);
            const Vec3 w = ego.apply(Vec3(ex, ey, 0.0));
            for (const auto& a : s.agents) {
                if (a.cls == AgentClass::vehicle && a.footprint_contains(t, w.x(), w.y())) {
                    own.at2(i, j) = a.id;
                    break;
                }
            }
        }
    }
    return own;
}

namespace {

// 2D OBB overlap via separating axes
bool footprints_overlap(const Agent& a, int ta, const Agent& b, int tb) {
    const AgentState& sa = a.track[static_cast<std::size_t>(ta)];
    const AgentState& sb = b.track[static_cast<std::size_t>(tb)];
    const Vec2 ca(sa.x, sa.y), cb(sb.x, sb.y);
    const Vec2 axes[4] = {{std::cos(sa.yaw), std::sin(sa.yaw)},
                          {-std::sin(sa.yaw), std::cos(sa.yaw)},
                          {std::cos(sb.yaw), std::sin(sb.yaw)},
                          {-std::sin(sb.yaw), std::cos(sb.yaw)}};
    const double ext_a[2] = {a.length / 2, a.width / 2};
    const double ext_b[2] = {b.length / 2, b.width / 2};
    const Vec2 ua = axes[0], va = axes[1], ub = axes[2], vb = axes[3];
    for (const Vec2& ax : axes) {
        const double ra = ext_a[0] * std::abs(ax.dot(ua)) + ext_a[1] * std::abs(ax.dot(va));
        const double rb = ext_b[0] * std::abs(ax.dot(ub)) + ext_b[1] * std::abs(ax.dot(vb));
        if (std::abs(ax.dot(cb - ca)) > ra + rb) return false;
    }
    return true;
}

bool any_overlap(const Scenario& s) {
    std::vector<const Agent*> all;
    all.push_back(&s.ego);
    for (const auto& a : s.agents) all.push_back(&a);
    for (int t = 0; t < s.cfg.duration; ++t)
        for (std::size_t i = 0; i < all.size(); ++i)
            for (std::size_t j = i + 1; j < all.size(); ++j)
                if (footprints_overlap(*all[i], t, *all[j], t)) return true;
    return false;
}

Agent make_constant_velocity(int id, AgentClass cls, double length, double width,
                             double height, double x0, double y0, double yaw,
                             double speed, int duration, double dt) {
    Agent a;
    a.id = id;
    a.cls = cls;
    a.length = length;
    a.width = width;
    a.height = height;
    a.track.resize(static_cast<std::size_t>(duration));
    for (int t = 0; t < duration; ++t) {
        a.track[static_cast<std::size_t>(t)] = {x0 + speed * t * dt * std::cos(yaw),
                                                y0 + speed * t * dt * std::sin(yaw), yaw,
                                                speed};
    }
    return a;
}

}  // namespace

std::vector<geom::CameraModel> make_rig(const RigConfig& rc) {
    std::vector<geom::CameraModel> rig;
    const double fx = (rc.image_w / 2.0) / std::tan(rc.hfov_deg * kDeg / 2.0);
    for (int k = 0; k < rc.n_cameras; ++k) {
        geom::CameraModel cam;
        cam.width = rc.image_w;
        cam.height = rc.image_h;
        cam.fx = fx;
        cam.fy = fx;
        cam.cx = rc.image_w / 2.0;
        cam.cy = rc.image_h / 2.0;
        // camera optical frame (z forward, x right, y down) -> ego frame,
        // yawed by k * 360/n
        const double yaw = 2 * M_PI * k / rc.n_cameras;
        geom::Mat3 r;
        r = Eigen::AngleAxisd(yaw, Vec3::UnitZ());
        geom::Mat3 opt;  // columns: optical x, y, z in ego axes (pre-yaw)
        opt << 0, 0, 1, -1, 0, 0, 0, -1, 0;
        cam.extrinsic = Pose(r * opt, Vec3(0, 0, rc.cam_height));
        cam.validate();
        rig.push_back(cam);
    }
    return rig;
}

namespace {

Scenario build_candidate(const WorldConfig& cfg, std::uint64_t seed, Rng& rng,
                         bool scripted_occlusion) {
    Scenario s;
    s.cfg = cfg;
    s.seed = seed;
    const double half_w = cfg.road_width / 2;
    s.drivable_poly = {{0, -half_w}, {cfg.road_length, -half_w},
                       {cfg.road_length, half_w}, {0, half_w}};
    s.walkway_polys = {{{0, half_w}, {cfg.road_length, half_w},
                        {cfg.road_length, half_w + cfg.walkway_width}, {0, half_w + cfg.walkway_width}},
                       {{0, -half_w - cfg.walkway_width}, {cfg.road_length, -half_w - cfg.walkway_width},
                        {cfg.road_length, -half_w}, {0, -half_w}}};
    s.rig = make_rig(cfg.rig);
    s.lidar_mount = Pose(geom::Mat3::Identity(), Vec3(0, 0, cfg.lidar.mount_height));

    const double ego_speed =
        cfg.ego_speeds[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cfg.ego_speeds.size()) - 1))];
    const double x0 = rng.uniform(40.0, cfg.road_length - 60.0);
    s.ego = make_constant_velocity(0, AgentClass::vehicle, 4.4, 1.9, 1.6, x0, -1.75, 0.0,
                                   ego_speed, cfg.duration, cfg.dt);

    const int t_ref = cfg.reference_index;
    const double xe = s.ego.track[static_cast<std::size_t>(t_ref)].x;
    int next_id = 1;

    std::vector<std::pair<double, double>> taken;  // (x, y) of parked footprints
    auto far_enough = [&taken](double x, double y) {
        for (auto [tx, ty] : taken)
            if (std::abs(ty - y) < 2.5 && std::abs(tx - x) < 6.0) return false;
        return true;
    };

    // Every scene has an oncoming truck whose center crosses the sight line
    // from the ego to a left-shoulder slot exactly at t_ref. In scripted
    // scenes a parked target sits in that slot, fully hidden at t_ref but in
    // clear view one frame earlier; otherwise the slot stays empty. Random
    // parked cars are kept out of the slot band, so whether a car is behind
    // the truck cannot be read off the current frame alone.
    const double dxt = rng.uniform(4.5, 10.5);
    if (scripted_occlusion) {
        Agent target = make_constant_velocity(next_id++, AgentClass::vehicle, 4.2, 1.9,
                                              1.5, xe + dxt, 5.8, M_PI, 0.0,
                                              cfg.duration, cfg.dt);
        s.occluded_agent_id = target.id;
        s.agents.push_back(target);
        taken.emplace_back(xe + dxt, 5.8);
        s.has_occlusion_event = true;
    }
    if (cfg.occlusion_fraction > 0.0) {
        const double frac = (1.75 + 1.75) / (5.8 + 1.75);  // lane / lateral gap
        const double x_truck = xe + frac * dxt;
        const double truck_speed = 12.0;  // m/s toward -x in its own lane
        Agent truck;
        truck.id = next_id++;
        truck.cls = AgentClass::vehicle;
        truck.length = 6.0;
        truck.width = 2.0;
        truck.height = 3.0;
        truck.track.resize(static_cast<std::size_t>(cfg.duration));
        for (int t = 0; t < cfg.duration; ++t) {
            const double xt_rel_step = (t - t_ref) * cfg.dt;
            truck.track[static_cast<std::size_t>(t)] = {x_truck - truck_speed * xt_rel_step,
                                                        1.75, M_PI, truck_speed};
        }
        s.agents.push_back(truck);
    }

    for (int i = 0; i < cfg.n_parked; ++i) {
        for (int attempt = 0; attempt < 40; ++attempt) {
            const double px = xe + rng.uniform(-10.0, 12.0);
            const double py = rng.uniform(0.0, 1.0) < 0.5 ? -5.8 : 5.8;
            // keep the slot band on the left shoulder free of random cars so
            // only the scripted target can occupy it
            if (py > 0 && px > xe + 0.0 && px < xe + 15.0) continue;
            if (!far_enough(px, py)) continue;
            s.agents.push_back(make_constant_velocity(next_id, AgentClass::vehicle,
                                                      rng.uniform(3.8, 4.6), 1.9, 1.5, px,
                                                      py, py > 0 ? M_PI : 0.0, 0.0,
                                                      cfg.duration, cfg.dt));
            ++next_id;
            taken.emplace_back(px, py);
            break;
        }
    }

    for (int i = 0; i < cfg.n_moving; ++i) {
        const double speed = rng.uniform(4.0, 7.0);
        const double mx = xe + 25.0 + 15.0 * i;
        s.agents.push_back(make_constant_velocity(next_id++, AgentClass::vehicle, 4.4,
                                                  1.9, 1.5, mx, 1.75, M_PI, speed,
                                                  cfg.duration, cfg.dt));
    }

    for (int i = 0; i < cfg.n_humans; ++i) {
        const double hx = xe + rng.uniform(-8.0, 10.0);
        const double hy = (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) *
                          (cfg.road_width / 2 + cfg.walkway_width / 2);
        const double speed = rng.uniform(0.0, 1.0) < 0.5 ? 0.0 : rng.uniform(0.5, 1.2);
        s.agents.push_back(make_constant_velocity(next_id++, AgentClass::human, 0.7, 0.7,
                                                  1.75, hx, hy, 0.0, speed, cfg.duration,
                                                  cfg.dt));
    }
    return s;
}

}  // namespace

Scenario generate_scenario(const WorldConfig& cfg, std::uint64_t seed) {
    if (cfg.duration < cfg.reference_index + 2)
        throw std::invalid_argument("generate_scenario: duration too short for reference index");
    if (cfg.rig.n_cameras < 1) throw std::invalid_argument("generate_scenario: need >= 1 camera");
    Rng rng(seed ^ 0x5bd1e995u);
    const bool scripted = rng.uniform(0.0, 1.0) < cfg.occlusion_fraction;
    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
        Scenario s = build_candidate(cfg, seed, rng, scripted);
        if (any_overlap(s)) continue;
        if (s.has_occlusion_event) {
            // the scripted target must actually be hidden at t_ref and seen before
            const int t_ref = cfg.reference_index;
            const auto vis_now = compute_visibility(s, t_ref);
            const auto vis_prev = compute_visibility(s, t_ref - 1);
            double f_now = 1.0, f_prev = 0.0;
            for (const auto& r : vis_now)
                if (r.agent_id == s.occluded_agent_id) f_now = r.visible_fraction;
            for (const auto& r : vis_prev)
                if (r.agent_id == s.occluded_agent_id) f_prev = r.visible_fraction;
            if (f_now > 0.05 || f_prev < 0.5) continue;
        }
        return s;
    }
    throw std::runtime_error("generate_scenario: no feasible layout after " +
                             std::to_string(cfg.max_retries) + " retries (seed " +
                             std::to_string(seed) + ")");
}

const Tensor& TemporalSample::grids_for(SegClass cls) const {
    for (std::size_t i = 0; i < gt_classes.size(); ++i)
        if (gt_classes[i] == cls) return gt_grids[i];
    throw std::out_of_range(std::string("sample has no grids for class ") +
                            seg_class_name(cls));
}

TemporalSample make_sample(const Scenario& s, int t_ref, const geom::GridSpec& spec,
                           int S, int f, int p) {
    if (t_ref - (S - 1) < 0 || t_ref + std::max(f, p) >= s.cfg.duration)
        throw std::out_of_range("make_sample: window does not fit scenario duration");
    TemporalSample ts;
    ts.spec = spec;
    ts.S = S;
    ts.f = f;
    ts.p = p;
    ts.dt = s.cfg.dt;
    ts.has_occlusion_event = s.has_occlusion_event;
    ts.occluded_agent_id = s.occluded_agent_id;
    ts.ego_speed = s.ego.track[static_cast<std::size_t>(t_ref)].speed;
    for (int h = S - 1; h >= 0; --h) ts.frames.push_back(render_frame(s, t_ref - h));
    ts.gt_classes = {SegClass::vehicle, SegClass::human, SegClass::drivable_area,
                     SegClass::walkway};
    for (SegClass cls : ts.gt_classes) {
        Tensor stack({f + 1, spec.h_bev, spec.w_bev});
        for (int k = 0; k <= f; ++k) {
            Tensor g = ground_truth_bev(s, t_ref + k, spec, cls);
            std::copy(g.data(), g.data() + g.numel(),
                      stack.data() + static_cast<std::int64_t>(k) * g.numel());
        }
        ts.gt_grids.push_back(std::move(stack));
    }
    ts.ownership = vehicle_ownership(s, t_ref, spec);
    ts.visibility = compute_visibility(s, t_ref);
    ts.ego_future = Tensor({p, 3});
    const geom::Pose ref = s.ego.pose_at(t_ref);
    for (int k = 1; k <= p; ++k) {
        const geom::Pose fut = s.ego.pose_at(t_ref + k);
        const Vec3 rel = ref.inverse().apply(fut.translation());
        double dyaw = fut.yaw() - ref.yaw();
        while (dyaw > M_PI) dyaw -= 2 * M_PI;
        while (dyaw <= -M_PI) dyaw += 2 * M_PI;
        ts.ego_future.at2(k - 1, 0) = rel.x();
        ts.ego_future.at2(k - 1, 1) = rel.y();
        ts.ego_future.at2(k - 1, 2) = dyaw;
    }
    return ts;
}

}  // namespace tempbev::world
