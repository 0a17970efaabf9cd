#include "agcd/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace agcd::heatmap {

const std::array<const char*, 9> kRegionLabels = {
    "north-west", "north", "north-east",
    "west",       "center", "east",
    "south-west", "south", "south-east"};

ColormapSpec ColormapSpec::diverging(double lo, double hi) {
    ColormapSpec c;
    c.lo = lo;
    c.hi = hi;
    c.anchors = {{0.00, {59, 76, 192}},
                 {0.25, {124, 159, 249}},
                 {0.50, {221, 221, 221}},
                 {0.75, {245, 156, 125}},
                 {1.00, {180, 4, 38}}};
    return c;
}

void ColormapSpec::validate() const {
    if (anchors.size() < 2) throw ConfigError("colormap needs at least two anchors");
    if (anchors.front().pos != 0.0 || anchors.back().pos != 1.0) {
        throw ConfigError("colormap anchors must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < anchors.size(); ++i) {
        if (anchors[i].pos <= anchors[i - 1].pos) {
            throw ConfigError("colormap anchor positions must be strictly increasing");
        }
    }
    if (!(lo < hi)) throw ConfigError("colormap bounds require lo < hi");
}

RGBImage render_field(const Tensor& field, const ColormapSpec& cmap) {
    cmap.validate();
    if (field.rank() != 2) throw ShapeError("render_field expects a 2-D field");
    if (!field.all_finite()) throw NumericError("render_field: non-finite value in field");
    RGBImage img;
    img.H = field.rows();
    img.W = field.cols();
    img.pixels.resize(img.H * img.W * 3);
    for (std::size_t i = 0; i < field.size(); ++i) {
        double t = (field.v[i] - cmap.lo) / (cmap.hi - cmap.lo);
        t = std::clamp(t, 0.0, 1.0);
        std::size_t seg = cmap.anchors.size() - 2;
        for (std::size_t a = 0; a + 1 < cmap.anchors.size(); ++a) {
            if (t <= cmap.anchors[a + 1].pos) {
                seg = a;
                break;
            }
        }
        const auto& a0 = cmap.anchors[seg];
        const auto& a1 = cmap.anchors[seg + 1];
        const double f = (t - a0.pos) / (a1.pos - a0.pos);
        for (int c = 0; c < 3; ++c) {
            const double val = static_cast<double>(a0.rgb[c]) +
                               f * (static_cast<double>(a1.rgb[c]) - static_cast<double>(a0.rgb[c]));
            img.pixels[i * 3 + static_cast<std::size_t>(c)] =
                static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 255.0)));
        }
    }
    return img;
}

std::string ppm_bytes(const RGBImage& image) {
    if (image.H == 0 || image.W == 0) throw ContractError("ppm: zero-dimension image");
    if (image.pixels.size() != image.H * image.W * 3) throw ContractError("ppm: pixel count mismatch");
    std::ostringstream os;
    os << "P6\n" << image.W << " " << image.H << "\n255\n";
    os.write(reinterpret_cast<const char*>(image.pixels.data()),
             static_cast<std::streamsize>(image.pixels.size()));
    return os.str();
}

void write_ppm(const RGBImage& image, const std::string& path) {
    const std::string bytes = ppm_bytes(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string region_label(std::size_t row, std::size_t col, std::size_t h, std::size_t w) {
    const std::size_t rb = std::min<std::size_t>(2, row * 3 / h);
    const std::size_t cb = std::min<std::size_t>(2, col * 3 / w);
    return kRegionLabels[rb * 3 + cb];
}

double quantize1(double x) {
    // round half away from zero, one decimal
    return std::round(x * 10.0) / 10.0;
}

FieldDigest field_digest(const Tensor& field, const std::string& variable) {
    if (field.rank() != 2) throw ShapeError("field_digest expects a 2-D field");
    if (!field.all_finite()) throw NumericError("field_digest: non-finite value in field");
    const std::size_t h = field.rows(), w = field.cols();
    std::size_t arg = 0;
    double mx = field.v[0], mn = field.v[0];
    for (std::size_t i = 1; i < field.size(); ++i) {
        if (field.v[i] > mx) {
            mx = field.v[i];
            arg = i;
        }
        mn = std::min(mn, field.v[i]);
    }
    double grad_sum = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t up = (i == 0) ? 0 : i - 1;
        const std::size_t dn = (i + 1 == h) ? h - 1 : i + 1;
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t lf = (j == 0) ? 0 : j - 1;
            const std::size_t rt = (j + 1 == w) ? w - 1 : j + 1;
            const double gy = (field(dn, j) - field(up, j)) / static_cast<double>(dn - up == 0 ? 1 : dn - up);
            const double gx = (field(i, rt) - field(i, lf)) / static_cast<double>(rt - lf == 0 ? 1 : rt - lf);
            grad_sum += std::sqrt(gx * gx + gy * gy);
        }
    }
    FieldDigest d;
    d.variable = variable;
    d.region = region_label(arg / w, arg % w, h, w);
    d.max_value = quantize1(mx);
    d.min_value = quantize1(mn);
    d.gradient = quantize1(grad_sum / static_cast<double>(h * w));
    return d;
}

}  // namespace agcd::heatmap
