#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vitsom/errors.hpp"
#include "vitsom/tensor.hpp"
#include "vitsom/vit.hpp"

namespace vitsom::data {

enum class Split { kTrain, kTest };

struct Dataset {
    std::string name;
    std::size_t channels = 1, height = 0, width = 0;
    std::vector<double> images;  // N*C*H*W, values in [0, 1]
    std::vector<int> labels;     // empty when unlabeled
    Split split = Split::kTrain;
    bool digits = true;  // orientation-sensitive labels: horizontal flip disabled

    std::size_t size() const {
        const std::size_t px = channels * height * width;
        return px == 0 ? 0 : images.size() / px;
    }
    std::size_t pixels_per_image() const { return channels * height * width; }

    // Copies sample images into a [B, C, H, W] tensor.
    Tensor gather(const std::vector<std::size_t>& idx) const {
        const std::size_t px = pixels_per_image();
        Tensor t = Tensor::zeros({idx.size(), channels, height, width});
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy_n(images.data() + idx[i] * px, px, t.data().data() + i * px);
        return t;
    }

    std::vector<int> gather_labels(const std::vector<std::size_t>& idx) const {
        std::vector<int> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels.at(idx[i]);
        return out;
    }

    Dataset subset(std::size_t n) const {
        Dataset d = *this;
        n = std::min(n, size());
        d.images.resize(n * pixels_per_image());
        if (!labels.empty()) d.labels.resize(n);
        return d;
    }
};

namespace detail_data {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("unexpected end of file in '" + path + "'");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return in;
}

}  // namespace detail_data

// IDX pair loader (big-endian, magic 0x00000803 images / 0x00000801 labels).
// Pixels are rescaled to [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        Split split = Split::kTrain) {
    auto img = detail_data::open_binary(images_path);
    const std::uint32_t magic_i = detail_data::read_be32(img, images_path);
    if (magic_i != 2051)
        throw DataError("'" + images_path + "': bad image magic " + std::to_string(magic_i) +
                        " (expected 2051)");
    const std::uint32_t n = detail_data::read_be32(img, images_path);
    const std::uint32_t rows = detail_data::read_be32(img, images_path);
    const std::uint32_t cols = detail_data::read_be32(img, images_path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(n) * rows * cols);
    img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(img.gcount()) != raw.size())
        throw DataError("'" + images_path + "': truncated image payload (expected " +
                        std::to_string(raw.size()) + " bytes)");

    auto lab = detail_data::open_binary(labels_path);
    const std::uint32_t magic_l = detail_data::read_be32(lab, labels_path);
    if (magic_l != 2049)
        throw DataError("'" + labels_path + "': bad label magic " + std::to_string(magic_l) +
                        " (expected 2049)");
    const std::uint32_t nl = detail_data::read_be32(lab, labels_path);
    if (nl != n)
        throw DataError("image/label count mismatch: " + std::to_string(n) + " vs " +
                        std::to_string(nl));
    std::vector<unsigned char> rawl(nl);
    lab.read(reinterpret_cast<char*>(rawl.data()), static_cast<std::streamsize>(rawl.size()));
    if (static_cast<std::size_t>(lab.gcount()) != rawl.size())
        throw DataError("'" + labels_path + "': truncated label payload");

    Dataset d;
    d.name = "idx";
    d.channels = 1;
    d.height = rows;
    d.width = cols;
    d.split = split;
    d.images.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) d.images[i] = raw[i] / 255.0;
    d.labels.assign(rawl.begin(), rawl.end());
    return d;
}

// USPS plain-binary bundle, produced by tools/usps_convert.py:
//   u32 N (little endian), N * 256 float64 pixels in [0,1], N bytes labels.
inline Dataset load_usps(const std::string& path, Split split = Split::kTrain) {
    auto in = detail_data::open_binary(path);
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    if (!in) throw DataError("'" + path + "': missing sample count");
    Dataset d;
    d.name = "usps";
    d.channels = 1;
    d.height = 16;
    d.width = 16;
    d.split = split;
    d.images.resize(static_cast<std::size_t>(n) * 256);
    in.read(reinterpret_cast<char*>(d.images.data()),
            static_cast<std::streamsize>(d.images.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != d.images.size() * sizeof(double))
        throw DataError("'" + path + "': truncated pixel payload");
    std::vector<unsigned char> rawl(n);
    in.read(reinterpret_cast<char*>(rawl.data()), n);
    if (static_cast<std::size_t>(in.gcount()) != rawl.size())
        throw DataError("'" + path + "': truncated label payload");
    d.labels.assign(rawl.begin(), rawl.end());
    for (double v : d.images)
        if (v < 0.0 || v > 1.0)
            throw DataError("'" + path + "': pixel value outside [0,1]");
    for (int l : d.labels)
        if (l < 0 || l > 9) throw DataError("'" + path + "': label outside [0,9]");
    return d;
}

// CIFAR-10 binary batches: 3073-byte records (1 label byte + 3072 pixels,
// channel-major R,G,B planes of 32x32).
inline Dataset load_cifar10(const std::vector<std::string>& batch_paths,
                            Split split = Split::kTrain) {
    Dataset d;
    d.name = "cifar10";
    d.channels = 3;
    d.height = 32;
    d.width = 32;
    d.split = split;
    d.digits = false;
    constexpr std::size_t kRecord = 3073;
    for (const std::string& path : batch_paths) {
        auto in = detail_data::open_binary(path);
        in.seekg(0, std::ios::end);
        const auto bytes = static_cast<std::size_t>(in.tellg());
        in.seekg(0);
        if (bytes == 0 || bytes % kRecord != 0)
            throw DataError("'" + path + "': size " + std::to_string(bytes) +
                            " is not a multiple of 3073-byte records");
        std::vector<unsigned char> raw(bytes);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
        const std::size_t n = bytes / kRecord;
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned char* rec = raw.data() + i * kRecord;
            const int label = rec[0];
            if (label > 9) throw DataError("'" + path + "': label byte " +
                                           std::to_string(label) + " out of range");
            d.labels.push_back(label);
            for (std::size_t j = 0; j < 3072; ++j) d.images.push_back(rec[1 + j] / 255.0);
        }
    }
    return d;
}

// Pad-4 random crop and optional horizontal flip, a fixed-parameter stand-in
// for the full MAE augmentation recipe. Clustering task: identity.
// allow_flip should be false for orientation-sensitive labels (digits).
inline std::vector<double> augment(const std::vector<double>& image, std::size_t channels,
                                   std::size_t height, std::size_t width, vit::Task task,
                                   bool allow_flip, std::mt19937_64& rng) {
    if (task == vit::Task::kClustering) return image;
    constexpr std::size_t kPad = 4;
    std::uniform_int_distribution<std::size_t> off(0, 2 * kPad);
    const std::size_t oy = off(rng), ox = off(rng);
    const bool flip = allow_flip && (rng() & 1u);
    std::vector<double> out(image.size(), 0.0);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                // Source coordinate in the zero-padded frame.
                const long sy = static_cast<long>(y + oy) - static_cast<long>(kPad);
                const long sx = static_cast<long>(x + ox) - static_cast<long>(kPad);
                double v = 0.0;
                if (sy >= 0 && sy < static_cast<long>(height) && sx >= 0 &&
                    sx < static_cast<long>(width))
                    v = image[(c * height + sy) * width + sx];
                const std::size_t dx = flip ? (width - 1 - x) : x;
                out[(c * height + y) * width + dx] = v;
            }
    return out;
}

// Deterministic shuffled batching; the index order for (seed, epoch) is a
// pure function of both.
struct BatchIterator {
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    bool drop_last = false;

    std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t epoch) const {
        if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
        if (batch_size > n)
            throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                              std::to_string(n));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + epoch + 1);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::vector<std::size_t>> batches;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t len = std::min(batch_size, n - start);
            if (len < batch_size && drop_last) break;
            batches.emplace_back(order.begin() + start, order.begin() + start + len);
        }
        return batches;
    }
};

// ---------------------------------------------------------------------------
// Procedural digit dataset. Renders 0-9 from a 5x7 glyph table with random
// rotation, scale, translation, stroke softness and noise. Used when no real
// IDX archive is available; same container semantics as MNIST (28x28, [0,1]).
// ---------------------------------------------------------------------------

namespace detail_data {

inline const std::array<std::array<const char*, 7>, 10>& glyphs() {
    static const std::array<std::array<const char*, 7>, 10> g = {{
        {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},  // 0
        {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},  // 1
        {"01110", "10001", "00001", "00110", "01000", "10000", "11111"},  // 2
        {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},  // 3
        {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},  // 4
        {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},  // 5
        {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},  // 6
        {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},  // 7
        {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},  // 8
        {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},  // 9
    }};
    return g;
}

// Bilinear sample of the 5x7 glyph at continuous coordinates in [0,1]^2.
inline double glyph_sample(int digit, double u, double v) {
    const auto& rows = glyphs()[static_cast<std::size_t>(digit)];
    const double gx = u * 4.0, gy = v * 6.0;
    const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
    const double fx = gx - x0, fy = gy - y0;
    auto at = [&](int x, int y) -> double {
        if (x < 0 || x > 4 || y < 0 || y > 6) return 0.0;
        return rows[static_cast<std::size_t>(y)][x] == '1' ? 1.0 : 0.0;
    };
    return at(x0, y0) * (1 - fx) * (1 - fy) + at(x0 + 1, y0) * fx * (1 - fy) +
           at(x0, y0 + 1) * (1 - fx) * fy + at(x0 + 1, y0 + 1) * fx * fy;
}

}  // namespace detail_data

struct SyntheticParams {
    double max_rotation = 0.45;   // radians, ~26 degrees
    double min_scale = 0.65, max_scale = 1.30;
    double max_shift = 5.0;       // pixels
    double noise = 0.18;
};

inline Dataset make_synthetic_digits(std::size_t n, std::uint64_t seed,
                                     SyntheticParams sp = {}, Split split = Split::kTrain) {
    constexpr std::size_t S = 28;
    Dataset d;
    d.name = "synthetic-digits";
    d.channels = 1;
    d.height = S;
    d.width = S;
    d.split = split;
    d.images.resize(n * S * S);
    d.labels.resize(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(rng() % 10);
        d.labels[i] = digit;
        const double theta = (2.0 * uni(rng) - 1.0) * sp.max_rotation;
        const double scl = sp.min_scale + uni(rng) * (sp.max_scale - sp.min_scale);
        const double tx = (2.0 * uni(rng) - 1.0) * sp.max_shift;
        const double ty = (2.0 * uni(rng) - 1.0) * sp.max_shift;
        const double intensity = 0.75 + 0.25 * uni(rng);
        const double ct = std::cos(theta), st = std::sin(theta);
        // Glyph box ~ 16x22 px centered in the 28x28 frame, before jitter.
        const double gw = 16.0 * scl, gh = 22.0 * scl;
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                // Inverse-rotate the pixel into glyph space.
                const double px = (static_cast<double>(x) - 13.5 - tx);
                const double py = (static_cast<double>(y) - 13.5 - ty);
                const double rx = ct * px + st * py;
                const double ry = -st * px + ct * py;
                const double u = rx / gw + 0.5, v = ry / gh + 0.5;
                double val = 0.0;
                if (u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0)
                    val = detail_data::glyph_sample(digit, u, v) * intensity;
                val += (2.0 * uni(rng) - 1.0) * sp.noise;
                d.images[(i * S + y) * S + x] = std::clamp(val, 0.0, 1.0);
            }
    }
    return d;
}

}  // namespace vitsom::data
