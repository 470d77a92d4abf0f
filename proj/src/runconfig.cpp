#include "tempbev/runconfig.hpp"

#include <cstdio>
#include <fstream>

namespace tempbev::cfg {

using nlohmann::json;

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (n_train < 1 || n_val < 0)
        throw std::invalid_argument("RunConfig: n_train >= 1 and n_val >= 0 required");
    if (threshold <= 0 || threshold >= 1)
        throw std::invalid_argument("RunConfig: threshold must lie in (0, 1)");
    if (world.duration < world.reference_index + 1 + model.p)
        throw std::invalid_argument(
            "RunConfig: world.duration too short for the trajectory horizon");
    if (world.rig.image_h != model.H || world.rig.image_w != model.W ||
        world.rig.n_cameras != model.K)
        throw std::invalid_argument(
            "RunConfig: rig image size / camera count must match the model config");
}

json rig_config_json(const world::RigConfig& rc) {
    return {{"n_cameras", rc.n_cameras}, {"image_h", rc.image_h}, {"image_w", rc.image_w},
            {"hfov_deg", rc.hfov_deg},   {"cam_height", rc.cam_height}};
}

world::RigConfig rig_config_from_json(const json& j) {
    world::RigConfig rc;
    rc.n_cameras = j.value("n_cameras", rc.n_cameras);
    rc.image_h = j.value("image_h", rc.image_h);
    rc.image_w = j.value("image_w", rc.image_w);
    rc.hfov_deg = j.value("hfov_deg", rc.hfov_deg);
    rc.cam_height = j.value("cam_height", rc.cam_height);
    return rc;
}

namespace {

json lidar_config_json(const world::LidarConfig& lc) {
    return {{"azimuth_steps", lc.azimuth_steps},
            {"elevations_deg", lc.elevations_deg},
            {"mount_height", lc.mount_height},
            {"max_range", lc.max_range},
            {"sweeps_per_frame", lc.sweeps_per_frame}};
}

world::LidarConfig lidar_config_from_json(const json& j) {
    world::LidarConfig lc;
    lc.azimuth_steps = j.value("azimuth_steps", lc.azimuth_steps);
    lc.elevations_deg = j.value("elevations_deg", lc.elevations_deg);
    lc.mount_height = j.value("mount_height", lc.mount_height);
    lc.max_range = j.value("max_range", lc.max_range);
    lc.sweeps_per_frame = j.value("sweeps_per_frame", lc.sweeps_per_frame);
    return lc;
}

}  // namespace

json world_config_json(const world::WorldConfig& wc) {
    return {{"n_parked", wc.n_parked},
            {"n_humans", wc.n_humans},
            {"n_moving", wc.n_moving},
            {"duration", wc.duration},
            {"dt", wc.dt},
            {"road_length", wc.road_length},
            {"road_width", wc.road_width},
            {"walkway_width", wc.walkway_width},
            {"occlusion_fraction", wc.occlusion_fraction},
            {"ego_speeds", wc.ego_speeds},
            {"reference_index", wc.reference_index},
            {"max_retries", wc.max_retries},
            {"rig", rig_config_json(wc.rig)},
            {"lidar", lidar_config_json(wc.lidar)}};
}

world::WorldConfig world_config_from_json(const json& j) {
    world::WorldConfig wc;
    wc.n_parked = j.value("n_parked", wc.n_parked);
    wc.n_humans = j.value("n_humans", wc.n_humans);
    wc.n_moving = j.value("n_moving", wc.n_moving);
    wc.duration = j.value("duration", wc.duration);
    wc.dt = j.value("dt", wc.dt);
    wc.road_length = j.value("road_length", wc.road_length);
    wc.road_width = j.value("road_width", wc.road_width);
    wc.walkway_width = j.value("walkway_width", wc.walkway_width);
    wc.occlusion_fraction = j.value("occlusion_fraction", wc.occlusion_fraction);
    wc.ego_speeds = j.value("ego_speeds", wc.ego_speeds);
    wc.reference_index = j.value("reference_index", wc.reference_index);
    wc.max_retries = j.value("max_retries", wc.max_retries);
    if (j.contains("rig")) wc.rig = rig_config_from_json(j.at("rig"));
    if (j.contains("lidar")) wc.lidar = lidar_config_from_json(j.at("lidar"));
    return wc;
}

json model_config_json(const model::ModelConfig& mc) {
    json classes = json::array();
    for (world::SegClass c : mc.classes) classes.push_back(world::seg_class_name(c));
    return {{"K", mc.K},
            {"H", mc.H},
            {"W", mc.W},
            {"d_f", mc.d_f},
            {"c", mc.c},
            {"h_pillar", mc.h_pillar},
            {"w_pillar", mc.w_pillar},
            {"pillar_resolution", mc.pillar_resolution},
            {"d_max", mc.d_max},
            {"S", mc.S},
            {"N", mc.N},
            {"M", mc.M},
            {"h_bev", mc.h_bev},
            {"w_bev", mc.w_bev},
            {"c_bev", mc.c_bev},
            {"bev_resolution", mc.bev_resolution},
            {"f", mc.f},
            {"p", mc.p},
            {"fourier_bands", mc.fourier_bands},
            {"sa_layers", mc.sa_layers},
            {"heads", mc.heads},
            {"refine_width", mc.refine_width},
            {"refine_blocks", mc.refine_blocks},
            {"d_dec", mc.d_dec},
            {"classes", classes}};
}

model::ModelConfig model_config_from_json(const json& j) {
    model::ModelConfig mc;
    mc.K = j.value("K", mc.K);
    mc.H = j.value("H", mc.H);
    mc.W = j.value("W", mc.W);
    mc.d_f = j.value("d_f", mc.d_f);
    mc.c = j.value("c", mc.c);
    mc.h_pillar = j.value("h_pillar", mc.h_pillar);
    mc.w_pillar = j.value("w_pillar", mc.w_pillar);
    mc.pillar_resolution = j.value("pillar_resolution", mc.pillar_resolution);
    mc.d_max = j.value("d_max", mc.d_max);
    mc.S = j.value("S", mc.S);
    mc.N = j.value("N", mc.N);
    mc.M = j.value("M", mc.M);
    mc.h_bev = j.value("h_bev", mc.h_bev);
    mc.w_bev = j.value("w_bev", mc.w_bev);
    mc.c_bev = j.value("c_bev", mc.c_bev);
    mc.bev_resolution = j.value("bev_resolution", mc.bev_resolution);
    mc.f = j.value("f", mc.f);
    mc.p = j.value("p", mc.p);
    mc.fourier_bands = j.value("fourier_bands", mc.fourier_bands);
    mc.sa_layers = j.value("sa_layers", mc.sa_layers);
    mc.heads = j.value("heads", mc.heads);
    mc.refine_width = j.value("refine_width", mc.refine_width);
    mc.refine_blocks = j.value("refine_blocks", mc.refine_blocks);
    mc.d_dec = j.value("d_dec", mc.d_dec);
    if (j.contains("classes")) {
        mc.classes.clear();
        for (const auto& name : j.at("classes"))
            mc.classes.push_back(world::seg_class_from_name(name.get<std::string>()));
    }
    return mc;
}

json train_config_json(const train::TrainConfig& tc) {
    return {{"epochs", tc.epochs},
            {"batch", tc.batch},
            {"lr", tc.lr},
            {"clip_norm", tc.clip_norm},
            {"seed", tc.seed},
            {"camera", tc.active.camera},
            {"lidar", tc.active.lidar},
            {"temporal", tc.active.temporal},
            {"pos_weight_cap", tc.pos_weight_cap},
            {"checkpoint_every", tc.checkpoint_every},
            {"forecaster_yaw_lambda", tc.forecaster_yaw_lambda}};
}

train::TrainConfig train_config_from_json(const json& j) {
    train::TrainConfig tc;
    tc.epochs = j.value("epochs", tc.epochs);
    tc.batch = j.value("batch", tc.batch);
    tc.lr = j.value("lr", tc.lr);
    tc.clip_norm = j.value("clip_norm", tc.clip_norm);
    tc.seed = j.value("seed", tc.seed);
    tc.active.camera = j.value("camera", tc.active.camera);
    tc.active.lidar = j.value("lidar", tc.active.lidar);
    tc.active.temporal = j.value("temporal", tc.active.temporal);
    tc.pos_weight_cap = j.value("pos_weight_cap", tc.pos_weight_cap);
    tc.checkpoint_every = j.value("checkpoint_every", tc.checkpoint_every);
    tc.forecaster_yaw_lambda = j.value("forecaster_yaw_lambda", tc.forecaster_yaw_lambda);
    return tc;
}

json run_config_json(const RunConfig& rc) {
    return {{"world", world_config_json(rc.world)},
            {"model", model_config_json(rc.model)},
            {"train", train_config_json(rc.train)},
            {"out_dir", rc.out_dir},
            {"seed", rc.seed},
            {"n_train", rc.n_train},
            {"n_val", rc.n_val},
            {"threshold", rc.threshold},
            {"min_vehicle_iou", rc.min_vehicle_iou}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig rc;
    if (j.contains("world")) rc.world = world_config_from_json(j.at("world"));
    if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
    rc.out_dir = j.value("out_dir", rc.out_dir);
    rc.seed = j.value("seed", rc.seed);
    rc.n_train = j.value("n_train", rc.n_train);
    rc.n_val = j.value("n_val", rc.n_val);
    rc.threshold = j.value("threshold", rc.threshold);
    rc.min_vehicle_iou = j.value("min_vehicle_iou", rc.min_vehicle_iou);
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("malformed config file " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

void save_run_config(const RunConfig& rc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file " + path);
    out << run_config_json(rc).dump(2) << "\n";
}

std::string fingerprint(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fingerprint(const RunConfig& rc) { return fingerprint(run_config_json(rc).dump()); }

}  // namespace tempbev::cfg
