#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tempbev/geometry.hpp"
#include "tempbev/tensor.hpp"

namespace tempbev::world {

enum class AgentClass { vehicle, human };
enum class SegClass { vehicle, human, drivable_area, walkway };

const char* seg_class_name(SegClass c);
SegClass seg_class_from_name(const std::string& name);

struct AgentState {
    double x = 0, y = 0, yaw = 0, speed = 0;
};

struct Agent {
    int id = -1;
    double length = 0, width = 0, height = 0;
    AgentClass cls = AgentClass::vehicle;
    std::vector<AgentState> track;  // one state per timestep, fixed dt

    geom::Pose pose_at(int t) const;
    bool footprint_contains(int t, double wx, double wy) const;
};

struct RigConfig {
    int n_cameras = 4;      // evenly spaced yaw
    int image_h = 16;
    int image_w = 32;
    double hfov_deg = 90.0;
    double cam_height = 1.6;
};

struct LidarConfig {
    int azimuth_steps = 64;
    std::vector<double> elevations_deg = {-15.0, -8.0, -4.0, -1.0};
    double mount_height = 1.8;
    double max_range = 40.0;
    int sweeps_per_frame = 1;  // >1 concatenates motion-compensated casts
};

struct WorldConfig {
    int n_parked = 4;    // parked vehicles besides any scripted ones
    int n_humans = 1;
    int n_moving = 0;    // oncoming traffic
    int duration = 16;   // timesteps
    double dt = 0.5;     // 2 Hz
    double road_length = 160.0;
    double road_width = 14.0;
    double walkway_width = 2.5;
    double occlusion_fraction = 0.5;
    std::vector<double> ego_speeds = {0.0, 1.0, 2.0, 3.0};
    RigConfig rig;
    LidarConfig lidar;
    int reference_index = 2;  // the sample's reference timestep T
    int max_retries = 30;
};

struct Scenario {
    WorldConfig cfg;
    std::uint64_t seed = 0;
    Agent ego;
    std::vector<Agent> agents;  // non-ego
    std::vector<Eigen::Vector2d> drivable_poly;
    std::vector<std::vector<Eigen::Vector2d>> walkway_polys;
    std::vector<geom::CameraModel> rig;  // extrinsics in the ego frame
    geom::Pose lidar_mount;              // lidar frame -> ego frame
    bool has_occlusion_event = false;
    int occluded_agent_id = -1;

    const Agent& agent_by_id(int id) const;
};

struct SampleFrame {
    double timestamp = 0;
    Tensor images;  // [K, H, W, 3] in [0,1]
    Tensor points;  // [D, 4] (x, y, z, intensity), ego frame
    geom::Pose ego_pose;
};

struct VisibilityRecord {
    int agent_id = -1;
    double visible_fraction = 0;
    int bin = 0;
};

// half-open bins [0,.4) [.4,.6) [.6,.8) [.8,1]
int visibility_bin(double fraction);

// camera models (intrinsics + extrinsics) for an evenly spaced surround rig
std::vector<geom::CameraModel> make_rig(const RigConfig& rc);

// Scripted occlusion target (when requested) is verified against
// compute_visibility before the scenario is accepted.
Scenario generate_scenario(const WorldConfig& cfg, std::uint64_t seed);

SampleFrame render_frame(const Scenario& s, int t);
std::vector<VisibilityRecord> compute_visibility(const Scenario& s, int t);

// binary [h_bev, w_bev]: cell center inside a qualifying footprint/polygon
Tensor ground_truth_bev(const Scenario& s, int t, const geom::GridSpec& spec,
                        SegClass cls);
// agent id owning each vehicle-positive cell, -1 elsewhere
Tensor vehicle_ownership(const Scenario& s, int t, const geom::GridSpec& spec);

struct TemporalSample {
    geom::GridSpec spec;
    int S = 3, f = 5, p = 10;
    double dt = 0.5;
    std::vector<SampleFrame> frames;            // oldest..reference (S entries)
    std::vector<Tensor> gt_grids;               // per SegClass: [f+1, h, w]
    std::vector<SegClass> gt_classes;
    Tensor ownership;                           // [h, w] at reference time
    std::vector<VisibilityRecord> visibility;   // at reference time
    Tensor ego_future;                          // [p, 3] (x, y, yaw) in frame at T
    double ego_speed = 0;
    bool has_occlusion_event = false;
    int occluded_agent_id = -1;

    const Tensor& grids_for(SegClass cls) const;
};

TemporalSample make_sample(const Scenario& s, int t_ref, const geom::GridSpec& spec,
                           int S, int f, int p);

}  // namespace tempbev::world
