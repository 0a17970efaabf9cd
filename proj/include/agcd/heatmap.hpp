#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "agcd/tensor.hpp"

namespace agcd::heatmap {

struct RGBImage {
    std::size_t H = 0;
    std::size_t W = 0;
    std::vector<std::uint8_t> pixels;  // H*W*3, row-major RGB
};

struct ColormapSpec {
    struct Anchor {
        double pos;  // in [0,1], strictly increasing, first 0, last 1
        std::array<std::uint8_t, 3> rgb;
    };
    std::vector<Anchor> anchors;
    double lo = 0.0;
    double hi = 1.0;

    // Five-anchor diverging map: blue - light blue - grey - salmon - red.
    static ColormapSpec diverging(double lo, double hi);
    void validate() const;
};

// Nine-label 3x3 partition, row-major from "north-west" to "south-east".
extern const std::array<const char*, 9> kRegionLabels;

struct FieldDigest {
    std::string variable;
    std::string region;        // one of kRegionLabels, location of the argmax
    double max_value = 0.0;    // quantized to 1 decimal
    double min_value = 0.0;    // quantized to 1 decimal
    double gradient = 0.0;     // mean gradient magnitude, quantized to 1 decimal
};

// clamp((x - lo) / (hi - lo), 0, 1) then piecewise-linear anchor interpolation.
RGBImage render_field(const Tensor& field, const ColormapSpec& cmap);

// Binary P6: "P6\n<W> <H>\n255\n" then raw RGB bytes.
void write_ppm(const RGBImage& image, const std::string& path);
std::string ppm_bytes(const RGBImage& image);

// Argmax ties broken by smallest row-major index; values rounded half away
// from zero to 1 decimal.
FieldDigest field_digest(const Tensor& field, const std::string& variable);

// 3x3 partition cell of a grid position.
std::string region_label(std::size_t row, std::size_t col, std::size_t h, std::size_t w);

double quantize1(double x);

}  // namespace agcd::heatmap
