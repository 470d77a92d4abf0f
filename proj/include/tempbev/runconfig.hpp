#pragma once

#include <string>

#include "json.hpp"
#include "tempbev/training.hpp"

namespace tempbev::cfg {

// One config file drives every command. Missing keys fall back to the
// defaults of the corresponding structs.
struct RunConfig {
    world::WorldConfig world;
    model::ModelConfig model;
    train::TrainConfig train;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int n_train = 512;
    int n_val = 128;
    double threshold = 0.5;       // probability binarization for evaluation
    double min_vehicle_iou = -1;  // eval exits nonzero below this; < 0 disables

    void validate() const;
};

nlohmann::json rig_config_json(const world::RigConfig& rc);
world::RigConfig rig_config_from_json(const nlohmann::json& j);
nlohmann::json world_config_json(const world::WorldConfig& wc);
world::WorldConfig world_config_from_json(const nlohmann::json& j);
nlohmann::json model_config_json(const model::ModelConfig& mc);
model::ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_json(const train::TrainConfig& tc);
train::TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_json(const RunConfig& rc);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& rc, const std::string& path);

// FNV-1a 64 over the canonical serialized form; stamps every artifact
std::string fingerprint(const std::string& text);
std::string fingerprint(const RunConfig& rc);

}  // namespace tempbev::cfg
