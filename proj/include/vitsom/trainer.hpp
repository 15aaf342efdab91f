#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vitsom/config.hpp"
#include "vitsom/data.hpp"
#include "vitsom/metrics.hpp"
#include "vitsom/objective.hpp"
#include "vitsom/optim.hpp"
#include "vitsom/som.hpp"
#include "vitsom/vit.hpp"

namespace vitsom::trainer {

using config::TrainConfig;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Dataset resolution
// ---------------------------------------------------------------------------

struct DatasetPair {
    data::Dataset train, test;
};

inline std::string join_path(const std::string& root, const std::string& leaf) {
    return (std::filesystem::path(root) / leaf).string();
}

// Loads the configured dataset. "synth" generates the procedural digit set
// (no files needed); all others read from data_root.
inline DatasetPair load_datasets(const TrainConfig& c) {
    DatasetPair p;
    if (c.dataset == "mnist" || c.dataset == "fashion_mnist") {
        p.train = data::load_idx(join_path(c.data_root, "train-images-idx3-ubyte"),
                                 join_path(c.data_root, "train-labels-idx1-ubyte"),
                                 data::Split::kTrain);
        p.test = data::load_idx(join_path(c.data_root, "t10k-images-idx3-ubyte"),
                                join_path(c.data_root, "t10k-labels-idx1-ubyte"),
                                data::Split::kTest);
        p.train.name = p.test.name = c.dataset;
        p.train.digits = p.test.digits = (c.dataset == "mnist");
    } else if (c.dataset == "usps") {
        p.train = data::load_usps(join_path(c.data_root, "usps_train.bin"), data::Split::kTrain);
        p.test = data::load_usps(join_path(c.data_root, "usps_test.bin"), data::Split::kTest);
    } else if (c.dataset == "cifar10") {
        std::vector<std::string> batches;
        for (int i = 1; i <= 5; ++i)
            batches.push_back(join_path(c.data_root, "data_batch_" + std::to_string(i) + ".bin"));
        p.train = data::load_cifar10(batches, data::Split::kTrain);
        p.test = data::load_cifar10({join_path(c.data_root, "test_batch.bin")}, data::Split::kTest);
    } else if (c.dataset == "synth") {
        const std::size_t n_train = c.subset ? c.subset : 10000;
        p.train = data::make_synthetic_digits(n_train, c.seed * 7919 + 1, {}, data::Split::kTrain);
        p.test = data::make_synthetic_digits(2000, c.seed * 7919 + 2, {}, data::Split::kTest);
    } else {
        throw ConfigError("unknown dataset '" + c.dataset + "'");
    }
    if (c.subset && c.dataset != "synth") p.train = p.train.subset(c.subset);
    return p;
}

inline vit::VitConfig build_vit_config(const TrainConfig& c, const data::Dataset& d) {
    vit::VitConfig v = c.task == vit::Task::kClustering
                           ? vit::VitConfig::clustering(d.height, d.channels)
                           : vit::VitConfig::classification(d.height, d.channels, 10);
    v.patch_size = c.patch_size;
    if (c.embed_dim) v.embed_dim = c.embed_dim;
    if (c.mlp_dim) v.mlp_dim = c.mlp_dim;
    if (c.encoder_depth) v.encoder_depth = c.encoder_depth;
    if (c.decoder_depth) v.decoder_depth = c.decoder_depth;
    if (c.num_heads) v.num_heads = c.num_heads;
    v.validate();
    return v;
}

// ---------------------------------------------------------------------------
// Model bundle: ViT parameters + SOM grid + schedules
// ---------------------------------------------------------------------------

struct Model {
    TrainConfig tc;
    vit::VitConfig vcfg;
    vit::ModelParams params;
    som::SomGrid grid;
    som::TemperatureSchedule temp;
    objective::GammaSchedule gamma;
    std::size_t step = 0;

    static Model build(const TrainConfig& tc, const data::Dataset& train_split) {
        Model m;
        m.tc = tc;
        m.vcfg = build_vit_config(tc, train_split);
        std::mt19937_64 rng(tc.seed);
        m.params = vit::ModelParams::init(m.vcfg, rng);
        m.grid = som::SomGrid::init(tc.som_height, tc.som_width, m.vcfg.som_dim(), tc.metric, rng);
        m.temp = som::TemperatureSchedule::for_map(tc.som_height, tc.som_width, tc.total_steps,
                                                   tc.t_min);
        m.gamma = objective::GammaSchedule(tc.resolved_gamma_final(), tc.warmup_steps());
        return m;
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        auto out = params.named_parameters();
        out.emplace_back("som.prototypes", grid.prototypes);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : named_parameters()) n += t.numel();
        return n;
    }
};

struct ForwardResult {
    Tensor l_nn, l_som, l_total;
    std::vector<std::size_t> bmu;
};

// Algorithm-1 forward pass: encode, task branch, SOM loss over
// flatten(z_patches), weighted sum.
inline ForwardResult forward(const Model& m, const Tensor& images, const std::vector<int>& labels,
                             std::size_t step) {
    ForwardResult r;
    auto enc = vit::encode(m.params, images);
    const std::size_t B = images.dim(0);
    Tensor z_som = ops::reshape(enc.z_patches, {B, m.vcfg.som_dim()});
    const double t = som::temperature(step, m.temp);
    r.l_som = som::som_loss(z_som, m.grid, t);
    {
        Tensor dist = som::pairwise_distance(z_som.detached_copy(), m.grid);
        r.bmu = som::find_bmu(dist);
    }
    if (m.vcfg.task == vit::Task::kClustering) {
        Tensor x_recon = vit::decode(m.params, enc.z_patches);
        r.l_nn = objective::task_loss(x_recon, images, {}, m.vcfg.task);
    } else {
        Tensor logits = vit::classify(m.params, enc.z_cls);
        r.l_nn = objective::task_loss(logits, {}, labels, m.vcfg.task);
    }
    r.l_total = objective::total_loss(r.l_nn, r.l_som, m.gamma.at(step));
    return r;
}

// ---------------------------------------------------------------------------
// Evaluation (no parameter mutation, no tape)
// ---------------------------------------------------------------------------

inline metrics::Record evaluate(const Model& m, const data::Dataset& d) {
    if ((m.vcfg.task == vit::Task::kClassification) && d.labels.empty())
        throw ContractError("evaluate: classification requires labels");
    metrics::Record r;
    r.step = m.step;
    const std::size_t chunk = 512;
    const std::size_t N = d.size();
    if (N == 0) throw ContractError("evaluate: empty dataset");
    std::vector<std::size_t> bmu_all;
    double qe_sum = 0.0;
    double topo_weighted = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < N; start += chunk) {
        std::vector<std::size_t> idx(std::min(chunk, N - start));
        std::iota(idx.begin(), idx.end(), start);
        Tensor images = d.gather(idx);
        auto enc = vit::encode(m.params, images);
        Tensor z = ops::reshape(enc.z_patches, {idx.size(), m.vcfg.som_dim()});
        Tensor dist = som::pairwise_distance(z, m.grid);
        auto bmu = som::find_bmu(dist);
        bmu_all.insert(bmu_all.end(), bmu.begin(), bmu.end());
        qe_sum += som::quantization_objective(z, m.grid);
        topo_weighted += metrics::topographic_error(z, m.grid) * static_cast<double>(idx.size());
        if (m.vcfg.task == vit::Task::kClassification) {
            Tensor logits = vit::classify(m.params, enc.z_cls);
            const auto lab = d.gather_labels(idx);
            const std::size_t C = logits.dim(1);
            for (std::size_t b = 0; b < idx.size(); ++b) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < C; ++c)
                    if (logits.data()[b * C + c] > logits.data()[b * C + best]) best = c;
                if (static_cast<int>(best) == lab[b]) ++hits;
            }
        }
    }
    r.quant_err = qe_sum / static_cast<double>(N);
    r.topo_err = topo_weighted / static_cast<double>(N);
    if (m.vcfg.task == vit::Task::kClassification)
        r.score = static_cast<double>(hits) / static_cast<double>(N);
    else
        r.score = metrics::purity(bmu_all, d.labels);
    r.temperature = som::temperature(m.step, m.temp);
    r.gamma = m.gamma.at(m.step);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header + raw little-endian float64 blobs per parameter
// ---------------------------------------------------------------------------

constexpr char kCheckpointMagic[9] = "VITSOMC1";

inline json config_to_json(const TrainConfig& c) {
    json j;
    j["task"] = vit::task_name(c.task);
    j["dataset"] = c.dataset;
    j["data_root"] = c.data_root;
    j["subset"] = c.subset;
    j["som_height"] = c.som_height;
    j["som_width"] = c.som_width;
    j["metric"] = som::metric_name(c.metric);
    j["t_min"] = c.t_min;
    j["total_steps"] = c.total_steps;
    j["batch_size"] = c.batch_size;
    j["lr_init"] = c.lr_init;
    j["lr_min"] = c.lr_min;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["weight_decay"] = c.weight_decay;
    j["gamma_final"] = c.gamma_final;
    j["warmup_fraction"] = c.warmup_fraction;
    j["seed"] = c.seed;
    j["eval_interval"] = c.eval_interval;
    j["augment"] = c.augment;
    j["patch_size"] = c.patch_size;
    j["embed_dim"] = c.embed_dim;
    j["mlp_dim"] = c.mlp_dim;
    j["encoder_depth"] = c.encoder_depth;
    j["decoder_depth"] = c.decoder_depth;
    j["num_heads"] = c.num_heads;
    return j;
}

inline TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.task = vit::task_from_name(j.at("task").get<std::string>());
    c.dataset = j.at("dataset").get<std::string>();
    c.data_root = j.at("data_root").get<std::string>();
    c.subset = j.at("subset").get<std::size_t>();
    c.som_height = j.at("som_height").get<std::size_t>();
    c.som_width = j.at("som_width").get<std::size_t>();
    c.metric = som::metric_from_name(j.at("metric").get<std::string>());
    c.t_min = j.at("t_min").get<double>();
    c.total_steps = j.at("total_steps").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr_init = j.at("lr_init").get<double>();
    c.lr_min = j.at("lr_min").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.gamma_final = j.at("gamma_final").get<double>();
    c.warmup_fraction = j.at("warmup_fraction").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_interval = j.at("eval_interval").get<std::size_t>();
    c.augment = j.at("augment").get<bool>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
    c.encoder_depth = j.at("encoder_depth").get<std::size_t>();
    c.decoder_depth = j.at("decoder_depth").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    return c;
}

namespace detail_ckpt {

inline void write_blob(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_blob(std::istream& in, std::vector<double>& v, const std::string& name) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != v.size() * sizeof(double))
        throw CheckpointError("checkpoint truncated while reading '" + name + "'");
}

}  // namespace detail_ckpt

// The optimizer is optional: evaluation/export-only checkpoints still carry
// the moments when saved from a training run.
inline void save_checkpoint(const std::string& path, const Model& m, const optim::AdamW* opt) {
    json header;
    header["config"] = config_to_json(m.tc);
    header["step"] = m.step;
    header["image_size"] = m.vcfg.image_size;
    header["channels"] = m.vcfg.channels;
    header["som"] = {{"height", m.grid.height},
                     {"width", m.grid.width},
                     {"dim", m.grid.dim},
                     {"metric", som::metric_name(m.grid.metric)}};
    header["opt_step"] = opt ? opt->step_count() : 0;
    header["has_optimizer"] = (opt != nullptr);
    json plist = json::array();
    for (const auto& [name, t] : m.named_parameters()) {
        json e;
        e["name"] = name;
        e["shape"] = t.shape();
        plist.push_back(e);
    }
    header["params"] = plist;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint '" + path + "' for writing");
    out.write(kCheckpointMagic, 8);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : m.named_parameters()) detail_ckpt::write_blob(out, t.data());
    if (opt)
        for (const auto& slot : opt->slots()) {
            detail_ckpt::write_blob(out, slot.m);
            detail_ckpt::write_blob(out, slot.v);
        }
    if (!out) throw CheckpointError("write failure on checkpoint '" + path + "'");
}

struct LoadedCheckpoint {
    Model model;
    optim::AdamW opt;
    bool has_optimizer = false;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw CheckpointError("'" + path + "' is not a vitsom checkpoint");
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (static_cast<std::size_t>(in.gcount()) != hlen)
        throw CheckpointError("'" + path + "': truncated header");
    json header;
    try {
        header = json::parse(hs);
    } catch (const std::exception& e) {
        throw CheckpointError("'" + path + "': corrupt header: " + e.what());
    }

    LoadedCheckpoint lc;
    lc.model.tc = config_from_json(header.at("config"));
    // Rebuild configuration-dependent structure, then overwrite every blob.
    data::Dataset shape_probe;
    shape_probe.channels = header.at("channels").get<std::size_t>();
    shape_probe.height = shape_probe.width = header.at("image_size").get<std::size_t>();
    lc.model = Model::build(lc.model.tc, shape_probe);
    lc.model.step = header.at("step").get<std::size_t>();

    auto named = lc.model.named_parameters();
    const auto& plist = header.at("params");
    if (plist.size() != named.size())
        throw CheckpointError("'" + path + "': parameter list mismatch (" +
                              std::to_string(plist.size()) + " vs " +
                              std::to_string(named.size()) + ")");
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& e = plist.at(i);
        if (e.at("name").get<std::string>() != named[i].first)
            throw CheckpointError("'" + path + "': parameter order mismatch at '" +
                                  named[i].first + "'");
        const auto shp = e.at("shape").get<Shape>();
        if (shp != named[i].second.shape())
            throw CheckpointError("'" + path + "': shape mismatch for '" + named[i].first + "'");
        detail_ckpt::read_blob(in, named[i].second.data(), named[i].first);
    }
    lc.has_optimizer = header.value("has_optimizer", false);
    lc.opt = optim::AdamW(lc.model.tc.beta1, lc.model.tc.beta2);
    for (auto& [name, t] : named) lc.opt.register_param(name, t);
    lc.opt.set_step_count(header.at("opt_step").get<std::size_t>());
    if (lc.has_optimizer)
        for (auto& slot : lc.opt.slots()) {
            detail_ckpt::read_blob(in, slot.m, slot.name + ".m");
            detail_ckpt::read_blob(in, slot.v, slot.name + ".v");
        }
    return lc;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOutcome {
    Model model;
    metrics::Record final_eval;
    std::string log_path, checkpoint_path;
};

// Runs the full optimization: AdamW over ViT parameters and SOM prototypes
// jointly, cosine-annealed lr, temperature and gamma schedules driven by the
// optimizer step counter. Writes log.csv and checkpoint.bin to out_dir.
inline TrainOutcome train(const TrainConfig& tc, const std::string& out_dir,
                          bool verbose = false) {
    tc.validate();
    std::filesystem::create_directories(out_dir);
    DatasetPair ds = load_datasets(tc);
    Model m = Model::build(tc, ds.train);

    optim::AdamW opt(tc.beta1, tc.beta2);
    for (auto& [name, t] : m.named_parameters()) opt.register_param(name, t);

    metrics::CsvLog log(join_path(out_dir, "log.csv"));
    const std::string ckpt_path = join_path(out_dir, "checkpoint.bin");

    data::BatchIterator iter{tc.batch_size, tc.seed, false};
    const std::size_t px = ds.train.pixels_per_image();
    metrics::Record last_eval;

    std::size_t step = 0, epoch = 0;
    bool aborted = false;
    while (step < tc.total_steps && !aborted) {
        for (const auto& batch_idx : iter.epoch_batches(ds.train.size(), epoch)) {
            if (step >= tc.total_steps) break;
            Tensor images = ds.train.gather(batch_idx);
            if (tc.task == vit::Task::kClassification && tc.augment) {
                std::mt19937_64 arng(tc.seed ^ (0xA5A5A5A5ull + step));
                for (std::size_t i = 0; i < batch_idx.size(); ++i) {
                    std::vector<double> img(images.data().begin() + i * px,
                                            images.data().begin() + (i + 1) * px);
                    auto aug = data::augment(img, ds.train.channels, ds.train.height,
                                             ds.train.width, tc.task, !ds.train.digits, arng);
                    std::copy(aug.begin(), aug.end(), images.data().begin() + i * px);
                }
            }
            std::vector<int> labels =
                ds.train.labels.empty() ? std::vector<int>{} : ds.train.gather_labels(batch_idx);

            Tape tape;
            ForwardResult fr;
            {
                TapeScope scope(tape);
                fr = forward(m, images, labels, step);
                if (!std::isfinite(fr.l_total.item())) {
                    // Last-good checkpoint stays on disk.
                    throw NumericError("training aborted: non-finite loss at step " +
                                       std::to_string(step));
                }
                opt.zero_grad();
                tape.backward(fr.l_total);
            }
            const double lr = optim::cosine_lr(step, tc.total_steps, tc.lr_init, tc.lr_min);
            opt.step(lr, tc.weight_decay);
            ++step;
            m.step = step;

            metrics::Record row;
            row.step = step;
            row.l_nn = fr.l_nn.item();
            row.l_som = fr.l_som.item();
            row.l_total = fr.l_total.item();
            row.temperature = som::temperature(step, m.temp);
            row.gamma = m.gamma.at(step);
            row.lr = lr;
            const bool do_eval =
                (tc.eval_interval && step % tc.eval_interval == 0) || step == tc.total_steps;
            if (do_eval) {
                last_eval = evaluate(m, ds.test);
                row.score = last_eval.score;
                row.quant_err = last_eval.quant_err;
                row.topo_err = last_eval.topo_err;
                save_checkpoint(ckpt_path, m, &opt);
                if (verbose)
                    std::cerr << "[vitsom] step " << step << " l_total=" << row.l_total
                              << " score=" << row.score << " qe=" << row.quant_err
                              << " te=" << row.topo_err << "\n";
            } else {
                row.score = row.quant_err = row.topo_err =
                    std::numeric_limits<double>::quiet_NaN();
            }
            log.append(row);
        }
        ++epoch;
    }

    TrainOutcome out;
    out.model = std::move(m);
    out.final_eval = last_eval;
    out.log_path = join_path(out_dir, "log.csv");
    out.checkpoint_path = ckpt_path;
    return out;
}

// ---------------------------------------------------------------------------
// Classic sequential SOM baseline on raw pixels (Euclidean metric)
// ---------------------------------------------------------------------------

struct ClassicSomConfig {
    std::size_t height = 24, width = 24;
    std::size_t iterations = 60000;
    double alpha_init = 0.5, alpha_min = 0.01;
    double t_min = 0.5;
    std::uint64_t seed = 0;
};

inline som::SomGrid classic_som_train(const data::Dataset& train, const ClassicSomConfig& c) {
    std::mt19937_64 rng(c.seed);
    som::SomGrid grid = som::SomGrid::init(c.height, c.width, train.pixels_per_image(),
                                           som::Metric::kEuclidean, rng, false);
    som::TemperatureSchedule temp(static_cast<double>(std::max(c.height, c.width)) / 2.0, c.t_min,
                                  c.iterations);
    const std::size_t n = train.size(), px = train.pixels_per_image();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> z(px);
    for (std::size_t k = 0; k < c.iterations; ++k) {
        const std::size_t i = pick(rng);
        std::copy_n(train.images.data() + i * px, px, z.data());
        const double alpha =
            c.alpha_init * std::pow(c.alpha_min / c.alpha_init,
                                    static_cast<double>(k) / static_cast<double>(c.iterations));
        som::classic_update(z, grid, alpha, som::temperature(k, temp));
    }
    return grid;
}

// Evaluates a raw-pixel SOM: BMU purity on the given split plus quantization
// error under the grid's own metric.
inline metrics::Record evaluate_classic_som(const som::SomGrid& grid, const data::Dataset& d) {
    const std::size_t N = d.size(), px = d.pixels_per_image();
    metrics::Record r;
    std::vector<std::size_t> bmu_all;
    double qe = 0.0, topo = 0.0;
    const std::size_t chunk = 1024;
    for (std::size_t start = 0; start < N; start += chunk) {
        const std::size_t len = std::min(chunk, N - start);
        Tensor z = Tensor::zeros({len, px});
        std::copy_n(d.images.data() + start * px, len * px, z.data().data());
        Tensor dist = som::pairwise_distance(z, grid);
        auto bmu = som::find_bmu(dist);
        bmu_all.insert(bmu_all.end(), bmu.begin(), bmu.end());
        qe += som::quantization_objective(z, grid);
        topo += metrics::topographic_error(z, grid) * static_cast<double>(len);
    }
    r.score = metrics::purity(bmu_all, d.labels);
    r.quant_err = qe / static_cast<double>(N);
    r.topo_err = topo / static_cast<double>(N);
    return r;
}

}  // namespace vitsom::trainer
