#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vitsom/ops.hpp"
#include "vitsom/tensor.hpp"

namespace vitsom::vit {

enum class Task { kClustering, kClassification };

inline std::string task_name(Task t) {
    return t == Task::kClustering ? "clustering" : "classification";
}

inline Task task_from_name(const std::string& s) {
    if (s == "clustering") return Task::kClustering;
    if (s == "classification") return Task::kClassification;
    throw ConfigError("unknown task '" + s + "'");
}

struct VitConfig {
    std::size_t image_size = 28;
    std::size_t patch_size = 4;
    std::size_t channels = 1;
    std::size_t embed_dim = 16;
    std::size_t mlp_dim = 64;
    std::size_t encoder_depth = 4;
    std::size_t decoder_depth = 2;
    std::size_t num_heads = 2;
    std::optional<std::size_t> num_classes;
    Task task = Task::kClustering;

    std::size_t patches_per_side() const { return image_size / patch_size; }
    std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
    std::size_t patch_dim() const { return channels * patch_size * patch_size; }
    // Dimensionality of flatten(z_patches), the SOM input.
    std::size_t som_dim() const { return num_patches() * embed_dim; }

    void validate() const {
        if (patch_size == 0 || image_size % patch_size != 0)
            throw ConfigError("image_size " + std::to_string(image_size) +
                              " not divisible by patch_size " + std::to_string(patch_size));
        if (num_heads == 0 || embed_dim % num_heads != 0)
            throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                              " not divisible by num_heads " + std::to_string(num_heads));
        if (task == Task::kClassification && !num_classes)
            throw ConfigError("classification task requires num_classes");
    }

    // Table-style presets. Clustering: 16/64/4/2, 2 heads.
    static VitConfig clustering(std::size_t image_size, std::size_t channels) {
        VitConfig c;
        c.image_size = image_size;
        c.channels = channels;
        c.task = Task::kClustering;
        return c;
    }

    // Classification: 192/768/12/-, 3 heads, linear class head, no decoder.
    static VitConfig classification(std::size_t image_size, std::size_t channels,
                                    std::size_t num_classes) {
        VitConfig c;
        c.image_size = image_size;
        c.channels = channels;
        c.embed_dim = 192;
        c.mlp_dim = 768;
        c.encoder_depth = 12;
        c.decoder_depth = 0;
        c.num_heads = 3;
        c.num_classes = num_classes;
        c.task = Task::kClassification;
        return c;
    }
};

struct BlockParams {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// All learnable weights. Initialization is seeded and layout-stable, so the
// parameter count and ordering are deterministic per config.
struct ModelParams {
    VitConfig cfg;
    Tensor patch_w, patch_b;  // [patch_dim, d], [d]
    Tensor cls_token;         // [1, d]
    Tensor pos_embed;         // [n+1, d]
    std::vector<BlockParams> encoder;
    Tensor enc_ln_g, enc_ln_b;
    // Decoder (clustering only).
    Tensor dec_pos;  // [n, d]
    std::vector<BlockParams> decoder;
    Tensor dec_ln_g, dec_ln_b;
    Tensor pixel_w, pixel_b;  // [d, patch_dim]
    // Classification head (classification only).
    Tensor head_w, head_b;  // [d, num_classes]

    static ModelParams init(const VitConfig& cfg, std::mt19937_64& rng) {
        cfg.validate();
        ModelParams p;
        p.cfg = cfg;
        const std::size_t d = cfg.embed_dim, n = cfg.num_patches(), pd = cfg.patch_dim();
        const double s_patch = 1.0 / std::sqrt(static_cast<double>(pd));
        const double s_d = 1.0 / std::sqrt(static_cast<double>(d));
        const double s_mlp = 1.0 / std::sqrt(static_cast<double>(cfg.mlp_dim));
        p.patch_w = Tensor::normal({pd, d}, 0.0, s_patch, rng, true);
        p.patch_b = Tensor::zeros({d}, true);
        p.cls_token = Tensor::normal({1, d}, 0.0, 0.02, rng, true);
        p.pos_embed = Tensor::normal({n + 1, d}, 0.0, 0.02, rng, true);
        auto make_block = [&]() {
            BlockParams b;
            b.ln1_g = Tensor::full({d}, 1.0);
            b.ln1_g.set_requires_grad(true);
            b.ln1_b = Tensor::zeros({d}, true);
            b.wq = Tensor::normal({d, d}, 0.0, s_d, rng, true);
            b.bq = Tensor::zeros({d}, true);
            b.wk = Tensor::normal({d, d}, 0.0, s_d, rng, true);
            b.bk = Tensor::zeros({d}, true);
            b.wv = Tensor::normal({d, d}, 0.0, s_d, rng, true);
            b.bv = Tensor::zeros({d}, true);
            b.wo = Tensor::normal({d, d}, 0.0, s_d, rng, true);
            b.bo = Tensor::zeros({d}, true);
            b.ln2_g = Tensor::full({d}, 1.0);
            b.ln2_g.set_requires_grad(true);
            b.ln2_b = Tensor::zeros({d}, true);
            b.mlp_w1 = Tensor::normal({d, cfg.mlp_dim}, 0.0, s_d, rng, true);
            b.mlp_b1 = Tensor::zeros({cfg.mlp_dim}, true);
            b.mlp_w2 = Tensor::normal({cfg.mlp_dim, d}, 0.0, s_mlp, rng, true);
            b.mlp_b2 = Tensor::zeros({d}, true);
            return b;
        };
        for (std::size_t i = 0; i < cfg.encoder_depth; ++i) p.encoder.push_back(make_block());
        p.enc_ln_g = Tensor::full({d}, 1.0);
        p.enc_ln_g.set_requires_grad(true);
        p.enc_ln_b = Tensor::zeros({d}, true);
        if (cfg.task == Task::kClustering) {
            p.dec_pos = Tensor::normal({n, d}, 0.0, 0.02, rng, true);
            for (std::size_t i = 0; i < cfg.decoder_depth; ++i) p.decoder.push_back(make_block());
            p.dec_ln_g = Tensor::full({d}, 1.0);
            p.dec_ln_g.set_requires_grad(true);
            p.dec_ln_b = Tensor::zeros({d}, true);
            p.pixel_w = Tensor::normal({d, pd}, 0.0, s_d, rng, true);
            p.pixel_b = Tensor::zeros({pd}, true);
        }
        if (cfg.task == Task::kClassification) {
            p.head_w = Tensor::normal({d, *cfg.num_classes}, 0.0, s_d, rng, true);
            p.head_b = Tensor::zeros({*cfg.num_classes}, true);
        }
        return p;
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> out;
        auto add = [&](const std::string& name, const Tensor& t) {
            if (t.numel() > 0) out.emplace_back(name, t);
        };
        add("patch_w", patch_w);
        add("patch_b", patch_b);
        add("cls_token", cls_token);
        add("pos_embed", pos_embed);
        auto add_block = [&](const std::string& prefix, const BlockParams& b) {
            add(prefix + ".ln1_g", b.ln1_g);
            add(prefix + ".ln1_b", b.ln1_b);
            add(prefix + ".wq", b.wq);
            add(prefix + ".bq", b.bq);
            add(prefix + ".wk", b.wk);
            add(prefix + ".bk", b.bk);
            add(prefix + ".wv", b.wv);
            add(prefix + ".bv", b.bv);
            add(prefix + ".wo", b.wo);
            add(prefix + ".bo", b.bo);
            add(prefix + ".ln2_g", b.ln2_g);
            add(prefix + ".ln2_b", b.ln2_b);
            add(prefix + ".mlp_w1", b.mlp_w1);
            add(prefix + ".mlp_b1", b.mlp_b1);
            add(prefix + ".mlp_w2", b.mlp_w2);
            add(prefix + ".mlp_b2", b.mlp_b2);
        };
        for (std::size_t i = 0; i < encoder.size(); ++i)
            add_block("enc." + std::to_string(i), encoder[i]);
        add("enc_ln_g", enc_ln_g);
        add("enc_ln_b", enc_ln_b);
        add("dec_pos", dec_pos);
        for (std::size_t i = 0; i < decoder.size(); ++i)
            add_block("dec." + std::to_string(i), decoder[i]);
        add("dec_ln_g", dec_ln_g);
        add("dec_ln_b", dec_ln_b);
        add("pixel_w", pixel_w);
        add("pixel_b", pixel_b);
        add("head_w", head_w);
        add("head_b", head_b);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : named_parameters()) n += t.numel();
        return n;
    }
};

// images [B, C, H, W] -> [B, num_patches, patch_dim]; patches row-major over
// the patch grid, each patch flattened channel-major.
inline Tensor patchify(const Tensor& images, std::size_t patch_size) {
    if (images.rank() != 4)
        throw DimensionError("patchify: expected [B,C,H,W], got " + shape_str(images.shape()));
    const std::size_t B = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
    if (patch_size == 0 || H % patch_size != 0 || W % patch_size != 0)
        throw ConfigError("patchify: image " + std::to_string(H) + "x" + std::to_string(W) +
                          " not divisible by patch size " + std::to_string(patch_size));
    const std::size_t ph = H / patch_size, pw = W / patch_size;
    const std::size_t n = ph * pw, pd = C * patch_size * patch_size;
    Tensor out = Tensor::zeros({B, n, pd});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t pr = 0; pr < ph; ++pr)
            for (std::size_t pc = 0; pc < pw; ++pc) {
                const std::size_t patch = pr * pw + pc;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t y = 0; y < patch_size; ++y)
                        for (std::size_t x = 0; x < patch_size; ++x) {
                            const std::size_t src =
                                ((b * C + c) * H + pr * patch_size + y) * W + pc * patch_size + x;
                            const std::size_t dst =
                                (b * n + patch) * pd + (c * patch_size + y) * patch_size + x;
                            out.data()[dst] = images.data()[src];
                        }
            }
    if (vitsom::detail::tracking({&images})) {
        out.set_requires_grad(true);
        Tensor ic = images, oc = out;
        Tape::active()->record([ic, oc, B, C, H, W, patch_size, ph, pw, n, pd]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& ig = ic.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t pr = 0; pr < ph; ++pr)
                    for (std::size_t pc2 = 0; pc2 < pw; ++pc2) {
                        const std::size_t patch = pr * pw + pc2;
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t y = 0; y < patch_size; ++y)
                                for (std::size_t x = 0; x < patch_size; ++x) {
                                    const std::size_t src = ((b * C + c) * H + pr * patch_size + y) * W +
                                                            pc2 * patch_size + x;
                                    const std::size_t dst = (b * n + patch) * pd +
                                                            (c * patch_size + y) * patch_size + x;
                                    ig[src] += g[dst];
                                }
                    }
        });
    }
    return out;
}

// Inverse of patchify: [B, n, patch_dim] -> [B, C, H, W].
inline Tensor unpatchify(const Tensor& patches, std::size_t patch_size, std::size_t channels,
                         std::size_t image_size) {
    const std::size_t B = patches.dim(0);
    const std::size_t pw = image_size / patch_size;
    const std::size_t pd = channels * patch_size * patch_size;
    if (patches.rank() != 3 || patches.dim(1) != pw * pw || patches.dim(2) != pd)
        throw DimensionError("unpatchify: bad patch tensor " + shape_str(patches.shape()));
    Tensor out = Tensor::zeros({B, channels, image_size, image_size});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t pr = 0; pr < pw; ++pr)
            for (std::size_t pc = 0; pc < pw; ++pc) {
                const std::size_t patch = pr * pw + pc;
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t y = 0; y < patch_size; ++y)
                        for (std::size_t x = 0; x < patch_size; ++x) {
                            const std::size_t dst = ((b * channels + c) * image_size +
                                                     pr * patch_size + y) *
                                                        image_size +
                                                    pc * patch_size + x;
                            const std::size_t src = (b * pw * pw + patch) * pd +
                                                    (c * patch_size + y) * patch_size + x;
                            out.data()[dst] = patches.data()[src];
                        }
            }
    if (vitsom::detail::tracking({&patches})) {
        out.set_requires_grad(true);
        Tensor pc2 = patches, oc = out;
        const std::size_t ps = patch_size, C = channels, S = image_size;
        Tape::active()->record([pc2, oc, B, C, S, ps, pw, pd]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& pg = pc2.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t pr = 0; pr < pw; ++pr)
                    for (std::size_t pcc = 0; pcc < pw; ++pcc) {
                        const std::size_t patch = pr * pw + pcc;
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t y = 0; y < ps; ++y)
                                for (std::size_t x = 0; x < ps; ++x) {
                                    const std::size_t dst =
                                        ((b * C + c) * S + pr * ps + y) * S + pcc * ps + x;
                                    const std::size_t src =
                                        (b * pw * pw + patch) * pd + (c * ps + y) * ps + x;
                                    pg[src] += g[dst];
                                }
                    }
        });
    }
    return out;
}

constexpr double kLayerNormEps = 1e-5;

// Multi-head self-attention over tokens [B, n, d] (rank-2 input is treated
// as a single-sample batch). Pre-norm residual wiring lives in the block.
inline Tensor attention(const Tensor& tokens_in, const BlockParams& b, std::size_t num_heads) {
    Tensor tokens = tokens_in;
    bool squeeze = false;
    if (tokens.rank() == 2) {
        tokens = ops::reshape(tokens, {1, tokens.dim(0), tokens.dim(1)});
        squeeze = true;
    }
    const std::size_t d = tokens.dim(2);
    if (d != b.wq.dim(0))
        throw DimensionError("attention: token dim " + std::to_string(d) + " vs weights " +
                             shape_str(b.wq.shape()));
    const std::size_t dh = d / num_heads;
    Tensor q = ops::add_bias(ops::matmul(tokens, b.wq), b.bq);
    Tensor k = ops::add_bias(ops::matmul(tokens, b.wk), b.bk);
    Tensor v = ops::add_bias(ops::matmul(tokens, b.wv), b.bv);
    std::vector<Tensor> head_outs;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < num_heads; ++h) {
        Tensor qh = ops::slice(q, 2, h * dh, dh);
        Tensor kh = ops::slice(k, 2, h * dh, dh);
        Tensor vh = ops::slice(v, 2, h * dh, dh);
        Tensor scores = ops::scale(ops::matmul(qh, ops::transpose_last2(kh)), inv_sqrt_dh);
        Tensor attn = ops::softmax(scores, 2);
        head_outs.push_back(ops::matmul(attn, vh));
    }
    Tensor merged = num_heads == 1 ? head_outs[0] : ops::concat(head_outs, 2);
    Tensor out = ops::add_bias(ops::matmul(merged, b.wo), b.bo);
    if (squeeze) out = ops::reshape(out, {out.dim(1), out.dim(2)});
    return out;
}

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
inline Tensor block_forward(const Tensor& x, const BlockParams& b, std::size_t num_heads) {
    Tensor a = attention(ops::layer_norm(x, b.ln1_g, b.ln1_b, kLayerNormEps), b, num_heads);
    Tensor h = ops::add(x, a);
    Tensor m = ops::layer_norm(h, b.ln2_g, b.ln2_b, kLayerNormEps);
    m = ops::add_bias(ops::matmul(m, b.mlp_w1), b.mlp_b1);
    m = ops::gelu(m);
    m = ops::add_bias(ops::matmul(m, b.mlp_w2), b.mlp_b2);
    return ops::add(h, m);
}

struct EncodeResult {
    Tensor z_cls;      // [B, d]
    Tensor z_patches;  // [B, n, d]
};

// Encoder path: patchify, project, prepend CLS, add positions, run blocks,
// final LN. z_patches excludes the CLS token.
inline EncodeResult encode(const ModelParams& p, const Tensor& images) {
    const VitConfig& cfg = p.cfg;
    if (images.rank() != 4 || images.dim(1) != cfg.channels || images.dim(2) != cfg.image_size ||
        images.dim(3) != cfg.image_size)
        throw DimensionError("encode: images " + shape_str(images.shape()) +
                             " do not match config (C=" + std::to_string(cfg.channels) +
                             ", S=" + std::to_string(cfg.image_size) + ")");
    const std::size_t B = images.dim(0), n = cfg.num_patches();
    Tensor patches = patchify(images, cfg.patch_size);
    Tensor tokens = ops::add_bias(ops::matmul(patches, p.patch_w), p.patch_b);
    Tensor cls = ops::tile_token(p.cls_token, B);
    tokens = ops::concat({cls, tokens}, 1);  // [B, n+1, d]
    tokens = ops::add_rows(tokens, p.pos_embed);
    for (const BlockParams& b : p.encoder) tokens = block_forward(tokens, b, cfg.num_heads);
    tokens = ops::layer_norm(tokens, p.enc_ln_g, p.enc_ln_b, kLayerNormEps);
    EncodeResult r;
    r.z_cls = ops::reshape(ops::slice(tokens, 1, 0, 1), {B, cfg.embed_dim});
    r.z_patches = ops::slice(tokens, 1, 1, n);
    return r;
}

// Reconstruction path (clustering task): decoder blocks over the patch
// tokens with fresh positions, then a linear pixel head, unpatchified.
inline Tensor decode(const ModelParams& p, const Tensor& z_patches) {
    const VitConfig& cfg = p.cfg;
    if (cfg.task != Task::kClustering || p.pixel_w.numel() == 0)
        throw ContractError("decode: model has no decoder (classification task)");
    Tensor t = ops::add_rows(z_patches, p.dec_pos);
    for (const BlockParams& b : p.decoder) t = block_forward(t, b, cfg.num_heads);
    t = ops::layer_norm(t, p.dec_ln_g, p.dec_ln_b, kLayerNormEps);
    t = ops::add_bias(ops::matmul(t, p.pixel_w), p.pixel_b);
    return unpatchify(t, cfg.patch_size, cfg.channels, cfg.image_size);
}

// Linear classification head over z_cls.
inline Tensor classify(const ModelParams& p, const Tensor& z_cls) {
    if (!p.cfg.num_classes)
        throw ConfigError("classify: config has no num_classes");
    if (p.head_w.numel() == 0)
        throw ContractError("classify: model has no classification head");
    return ops::add_bias(ops::matmul(z_cls, p.head_w), p.head_b);
}

}  // namespace vitsom::vit
