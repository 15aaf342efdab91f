#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vitsom/errors.hpp"
#include "vitsom/som.hpp"
#include "vitsom/trainer.hpp"
#include "vitsom/vit.hpp"

namespace vitsom::exporter {

// Raw prototype dump: M*dim little-endian float64, plus a JSON sidecar with
// the grid geometry.
inline void dump_prototypes(const som::SomGrid& g, const std::string& bin_path,
                            const std::string& sidecar_path) {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw ExportError("cannot open '" + bin_path + "'");
    out.write(reinterpret_cast<const char*>(g.prototypes.data().data()),
              static_cast<std::streamsize>(g.prototypes.numel() * sizeof(double)));
    nlohmann::ordered_json side;
    side["height"] = g.height;
    side["width"] = g.width;
    side["dim"] = g.dim;
    side["metric"] = som::metric_name(g.metric);
    std::ofstream sc(sidecar_path);
    if (!sc) throw ExportError("cannot open '" + sidecar_path + "'");
    sc << side.dump(2) << "\n";
}

// Binary PGM (P5) writer; values in [lo, hi] map to 0..255.
inline void write_pgm(const std::string& path, const std::vector<double>& pixels,
                      std::size_t height, std::size_t width) {
    if (pixels.size() != height * width)
        throw ExportError("write_pgm: pixel count does not match dimensions");
    double lo = pixels[0], hi = pixels[0];
    for (double v : pixels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ExportError("cannot open '" + path + "'");
    out << "P5\n" << width << " " << height << "\n255\n";
    for (double v : pixels) {
        const int byte = static_cast<int>(255.0 * (v - lo) / span + 0.5);
        out.put(static_cast<char>(std::clamp(byte, 0, 255)));
    }
}

// Tiled image of prototypes pushed through the decoder (when the prototype
// dimensionality matches flatten(z_patches)) or reshaped directly when the
// prototype is itself an image.
inline void export_prototype_grid(const trainer::Model& m, const std::string& image_path) {
    const som::SomGrid& g = m.grid;
    const std::size_t M = g.units();
    const vit::VitConfig& cfg = m.vcfg;
    std::size_t tile = 0;
    std::vector<double> tiles;  // M * tile * tile, grayscale
    if (cfg.task == vit::Task::kClustering && g.dim == cfg.som_dim()) {
        tile = cfg.image_size;
        tiles.resize(M * tile * tile);
        const std::size_t chunk = 64;
        for (std::size_t start = 0; start < M; start += chunk) {
            const std::size_t len = std::min(chunk, M - start);
            Tensor z = Tensor::zeros({len, cfg.num_patches(), cfg.embed_dim});
            std::copy_n(g.prototypes.data().data() + start * g.dim, len * g.dim,
                        z.data().data());
            Tensor imgs = vit::decode(m.params, z);
            // Grayscale render: average channels.
            const std::size_t px = cfg.image_size * cfg.image_size;
            for (std::size_t i = 0; i < len; ++i)
                for (std::size_t p = 0; p < px; ++p) {
                    double v = 0.0;
                    for (std::size_t c = 0; c < cfg.channels; ++c)
                        v += imgs.data()[(i * cfg.channels + c) * px + p];
                    tiles[(start + i) * px + p] = v / static_cast<double>(cfg.channels);
                }
        }
    } else {
        // Raw-pixel prototypes (classic SOM): render directly if square.
        const auto side = static_cast<std::size_t>(std::lround(std::sqrt(double(g.dim))));
        if (side * side != g.dim)
            throw ExportError("prototype dim " + std::to_string(g.dim) +
                              " is neither flatten(z_patches) nor a square image");
        tile = side;
        tiles.assign(g.prototypes.data().begin(), g.prototypes.data().end());
    }
    // Tile into an H x W mosaic with 1px separators.
    const std::size_t sep = 1;
    const std::size_t out_h = g.height * tile + (g.height - 1) * sep;
    const std::size_t out_w = g.width * tile + (g.width - 1) * sep;
    std::vector<double> mosaic(out_h * out_w, 0.0);
    for (std::size_t r = 0; r < g.height; ++r)
        for (std::size_t c = 0; c < g.width; ++c) {
            const double* src = tiles.data() + (r * g.width + c) * tile * tile;
            for (std::size_t y = 0; y < tile; ++y)
                for (std::size_t x = 0; x < tile; ++x)
                    mosaic[(r * (tile + sep) + y) * out_w + c * (tile + sep) + x] =
                        src[y * tile + x];
        }
    write_pgm(image_path, mosaic, out_h, out_w);
}

}  // namespace vitsom::exporter
