#include "tempbev/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace tempbev::plot {

Image Image::filled(int w, int h, unsigned char r, unsigned char g, unsigned char b) {
    Image img;
    img.width = w;
    img.height = h;
    img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = r;
        img.rgb[i + 1] = g;
        img.rgb[i + 2] = b;
    }
    return img;
}

void Image::set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
}

void write_png(const Image& img, const std::string& path, const std::string& comment) {
    if (img.width <= 0 || img.height <= 0)
        throw std::invalid_argument("write_png: empty image");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("write_png: libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("write_png: libpng error writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (!comment.empty()) {
        png_text text{};
        text.compression = PNG_TEXT_COMPRESSION_NONE;
        char key[] = "comment";
        text.key = key;
        text.text = const_cast<char*>(comment.c_str());
        text.text_length = comment.size();
        png_set_text(png, info, &text, 1);
    }
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
            img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

namespace {

// grid cell -> image block origin; forward (+x, rows) up, left (+y, cols) left
std::pair<int, int> block_origin(int row, int col, int h, int w, int scale, int x_off) {
    const int y = (h - 1 - row) * scale;
    const int x = x_off + (w - 1 - col) * scale;
    return {x, y};
}

void fill_block(Image& img, int row, int col, int h, int w, int scale, int x_off,
                unsigned char r, unsigned char g, unsigned char b) {
    const auto [x0, y0] = block_origin(row, col, h, w, scale, x_off);
    for (int dy = 0; dy < scale; ++dy)
        for (int dx = 0; dx < scale; ++dx) img.set(x0 + dx, y0 + dy, r, g, b);
}

unsigned char clamp_byte(double v) {
    return static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

Image bev_pair(const Tensor& gt, const Tensor& pred, int scale) {
    if (gt.shape() != pred.shape() || gt.shape().size() != 2)
        throw std::invalid_argument("bev_pair: expected two equal 2D grids");
    const int h = gt.shape()[0], w = gt.shape()[1];
    const int gap = 2;
    Image img = Image::filled(2 * w * scale + gap, h * scale, 255, 255, 255);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double g = gt.at2(r, c);
            fill_block(img, r, c, h, w, scale, 0, clamp_byte(30 + 0 * g),
                       clamp_byte(30 + 200 * g), 30);
            const double p = std::clamp(pred.at2(r, c), 0.0, 1.0);
            fill_block(img, r, c, h, w, scale, w * scale + gap, clamp_byte(30 + 220 * p), 30,
                       30);
        }
    }
    return img;
}

Image multi_step(const Tensor& grids, int scale) {
    if (grids.shape().size() != 3)
        throw std::invalid_argument("multi_step: expected [f, h, w]");
    const int f = grids.shape()[0], h = grids.shape()[1], w = grids.shape()[2];
    Image img = Image::filled(w * scale, h * scale, 235, 235, 235);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int k = 0; k < f; ++k) {
        // black at t+0 shading toward purple at the farthest horizon
        const double u = f > 1 ? static_cast<double>(k) / (f - 1) : 1.0;
        const unsigned char cr = clamp_byte(10 + 150 * u);
        const unsigned char cg = 10;
        const unsigned char cb = clamp_byte(10 + 200 * u);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (grids[k * plane + static_cast<std::int64_t>(r) * w + c] >= 0.5)
                    fill_block(img, r, c, h, w, scale, 0, cr, cg, cb);
    }
    return img;
}

namespace {

void draw_dot(Image& img, const geom::GridSpec& spec, double x, double y, int scale,
              unsigned char r, unsigned char g, unsigned char b) {
    const auto cell = spec.ego_to_cell(x, y);
    if (!cell) return;
    const auto [px, py] =
        block_origin(cell->first, cell->second, spec.h_bev, spec.w_bev, scale, 0);
    for (int dy = -1; dy <= scale; ++dy)
        for (int dx = -1; dx <= scale; ++dx) img.set(px + dx, py + dy, r, g, b);
}

void draw_line(Image& img, const geom::GridSpec& spec, double x0, double y0, double x1,
               double y1, int scale, unsigned char r, unsigned char g, unsigned char b) {
    const int steps = 4 * scale * std::max(spec.h_bev, spec.w_bev);
    for (int i = 0; i <= steps; ++i) {
        const double u = static_cast<double>(i) / steps;
        const double x = x0 + u * (x1 - x0), y = y0 + u * (y1 - y0);
        const auto cell = spec.ego_to_cell(x, y);
        if (!cell) continue;
        const double fr = (spec.extent_x() / 2 + x) / spec.resolution - cell->first;
        const double fc = (spec.extent_y() / 2 + y) / spec.resolution - cell->second;
        const auto [px, py] =
            block_origin(cell->first, cell->second, spec.h_bev, spec.w_bev, scale, 0);
        img.set(px + static_cast<int>((1.0 - fc) * (scale - 1)),
                py + static_cast<int>((1.0 - fr) * (scale - 1)), r, g, b);
    }
}

}  // namespace

Image trajectory_overlay(const Tensor& drivable, const Tensor& pred_states,
                         const Tensor& gt_states, const geom::GridSpec& spec, int scale) {
    if (drivable.shape().size() != 2 || drivable.shape()[0] != spec.h_bev ||
        drivable.shape()[1] != spec.w_bev)
        throw std::invalid_argument("trajectory_overlay: drivable grid does not match spec");
    Image img = Image::filled(spec.w_bev * scale, spec.h_bev * scale, 240, 240, 240);
    for (int r = 0; r < spec.h_bev; ++r)
        for (int c = 0; c < spec.w_bev; ++c)
            if (drivable.at2(r, c) != 0)
                fill_block(img, r, c, spec.h_bev, spec.w_bev, scale, 0, 120, 120, 120);
    // ground truth as a green line from the ego origin through the p states
    double px = 0, py = 0;
    for (int i = 0; i < gt_states.rows(); ++i) {
        const double x = gt_states.at2(i, 0), y = gt_states.at2(i, 1);
        draw_line(img, spec, px, py, x, y, scale, 30, 200, 30);
        px = x;
        py = y;
    }
    // prediction as red dots
    for (int i = 0; i < pred_states.rows(); ++i)
        draw_dot(img, spec, pred_states.at2(i, 0), pred_states.at2(i, 1), scale, 220, 30, 30);
    return img;
}

}  // namespace tempbev::plot
