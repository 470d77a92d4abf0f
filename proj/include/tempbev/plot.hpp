#pragma once

#include <string>
#include <vector>

#include "tempbev/geometry.hpp"
#include "tempbev/tensor.hpp"

namespace tempbev::plot {

struct Image {
    int width = 0, height = 0;
    std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel

    static Image filled(int w, int h, unsigned char r, unsigned char g, unsigned char b);
    void set(int x, int y, unsigned char r, unsigned char g, unsigned char b);
};

// `comment` (e.g. the run-config fingerprint) is embedded as a tEXt chunk
void write_png(const Image& img, const std::string& path, const std::string& comment = "");

// Ground truth (green) and prediction (red heatmap) side by side, forward up.
Image bev_pair(const Tensor& gt, const Tensor& pred, int scale = 8);

// One composite of all f horizon channels, color-coded black -> purple with
// increasing time offset; later horizons draw on top.
Image multi_step(const Tensor& grids, int scale = 8);

// Predicted trajectory as dots with the ground-truth line, over the drivable
// area. States are (x, y, yaw) rows in the ego frame of the grid.
Image trajectory_overlay(const Tensor& drivable, const Tensor& pred_states,
                         const Tensor& gt_states, const geom::GridSpec& spec,
                         int scale = 8);

}  // namespace tempbev::plot
