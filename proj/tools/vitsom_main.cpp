// vitsom: train / eval / export-prototypes / verify / bench-bmu front end.
//
// Exit codes: 0 ok, 1 verification failure, 2 config error, 3 data error,
// 4 numeric error, 5 checkpoint error, 6 export error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vitsom/config.hpp"
#include "vitsom/export.hpp"
#include "vitsom/trainer.hpp"
#include "vitsom/verify.hpp"

namespace {

using vitsom::config::TrainConfig;
using json = nlohmann::ordered_json;

std::string now_iso8601() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// FNV-1a over the resolved config text.
std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Every run writes its manifest before any heavy work starts.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_path, const std::string& config_text) {
    std::filesystem::create_directories(out_dir);
    json m;
    m["command"] = command;
    m["config_path"] = config_path;
    m["output_dir"] = out_dir;
    m["config_hash"] = fnv1a_hex(config_text);
    m["started_at"] = now_iso8601();
    std::ofstream out(out_dir + "/manifest.json");
    out << m.dump(2) << "\n";
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw vitsom::ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_train(const std::string& config_path, const std::string& out_dir,
              const std::string& data_root, long seed_override) {
    const std::string text = slurp(config_path);
    std::istringstream is(text);
    TrainConfig c = vitsom::config::parse_config_text(is);
    if (!data_root.empty()) c.data_root = data_root;
    if (c.data_root.empty())
        if (const char* env = std::getenv("VITSOM_DATA_ROOT")) c.data_root = env;
    if (seed_override >= 0) c.seed = static_cast<std::uint64_t>(seed_override);
    write_manifest(out_dir, "train", config_path, text);
    auto outcome = vitsom::trainer::train(c, out_dir, /*verbose=*/true);
    std::cout << "final score " << outcome.final_eval.score << ", quantization error "
              << outcome.final_eval.quant_err << ", topographic error "
              << outcome.final_eval.topo_err << "\n"
              << "log: " << outcome.log_path << "\ncheckpoint: " << outcome.checkpoint_path
              << "\n";
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& dataset,
             const std::string& data_root, bool as_json) {
    auto lc = vitsom::trainer::load_checkpoint(ckpt_path);
    if (!dataset.empty() && dataset != lc.model.tc.dataset) {
        // Cross-dataset evaluation is only sane within the same geometry.
        vitsom::config::TrainConfig probe = lc.model.tc;
        probe.dataset = dataset;
        auto ds = vitsom::trainer::load_datasets(probe);
        if (ds.test.height != lc.model.vcfg.image_size ||
            ds.test.channels != lc.model.vcfg.channels)
            throw vitsom::ConfigError("dataset '" + dataset + "' does not match checkpoint task");
        lc.model.tc.dataset = dataset;
    }
    if (!data_root.empty()) lc.model.tc.data_root = data_root;
    if (lc.model.tc.data_root.empty())
        if (const char* env = std::getenv("VITSOM_DATA_ROOT")) lc.model.tc.data_root = env;
    auto ds = vitsom::trainer::load_datasets(lc.model.tc);
    auto rec = vitsom::trainer::evaluate(lc.model, ds.test);
    const bool clustering = lc.model.vcfg.task == vitsom::vit::Task::kClustering;
    if (as_json) {
        json j;
        j["step"] = lc.model.step;
        j[clustering ? "purity" : "accuracy"] = rec.score;
        j["quant_err"] = rec.quant_err;
        j["topo_err"] = rec.topo_err;
        std::cout << j.dump() << "\n";
    } else {
        std::cout << "metric               value\n"
                  << "-------------------  ----------\n";
        std::cout << (clustering ? "purity               " : "accuracy             ")
                  << rec.score << "\n";
        std::cout << "quantization error   " << rec.quant_err << "\n";
        std::cout << "topographic error    " << rec.topo_err << "\n";
        std::cout << "RESULT score=" << rec.score << " quant_err=" << rec.quant_err
                  << " topo_err=" << rec.topo_err << "\n";
    }
    return 0;
}

int run_export(const std::string& ckpt_path, const std::string& out_image) {
    auto lc = vitsom::trainer::load_checkpoint(ckpt_path);
    const std::string stem =
        (std::filesystem::path(out_image).parent_path() /
         std::filesystem::path(out_image).stem())
            .string();
    vitsom::exporter::export_prototype_grid(lc.model, out_image);
    vitsom::exporter::dump_prototypes(lc.model.grid, stem + ".bin", stem + ".json");
    std::cout << "wrote " << out_image << ", " << stem << ".bin, " << stem << ".json\n";
    return 0;
}

int run_verify(const std::string& suite, bool inject_failure, std::uint64_t seed) {
    std::vector<vitsom::verify::CheckResult> results;
    const std::size_t trials = 10;
    if (suite.empty() || suite == "grad")
        results.push_back(vitsom::verify::check_op_gradients(trials, seed));
    if (suite.empty() || suite == "som") {
        results.push_back(vitsom::verify::check_bmu_oracle(200, seed + 1));
        results.push_back(vitsom::verify::check_batch_sequential(200, seed + 2));
    }
    if (suite.empty() || suite == "schedules")
        results.push_back(vitsom::verify::check_schedules());
    if (results.empty()) {
        std::cerr << "unknown suite '" << suite << "' (grad, som, schedules)\n";
        return 2;
    }
    if (inject_failure)
        results.push_back({"injected", false, "tolerance violation injected via --inject-failure"});
    bool all_ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.suite;
        if (!r.passed) std::cout << "  [" << r.detail << "]";
        std::cout << "\n";
        all_ok = all_ok && r.passed;
    }
    return all_ok ? 0 : 1;
}

int run_bench_bmu(std::size_t map_side, std::size_t dim, std::size_t batch) {
    using clock = std::chrono::steady_clock;
    std::mt19937_64 rng(0);
    vitsom::som::SomGrid g =
        vitsom::som::SomGrid::init(map_side, map_side, dim, vitsom::som::Metric::kEuclidean, rng,
                                   false);
    vitsom::Tensor z = vitsom::Tensor::uniform({batch, dim}, 0.0, 1.0, rng);
    const auto t0 = clock::now();
    auto batch_bmu = vitsom::som::find_bmu(vitsom::som::pairwise_distance(z, g));
    const auto t1 = clock::now();
    auto seq_bmu = vitsom::verify::naive_bmu(z.data(), batch, g.prototypes.data(), g.units(), dim,
                                             g.metric);
    const auto t2 = clock::now();
    if (batch_bmu != seq_bmu) {
        std::cerr << "FAIL: batch and sequential BMU indices disagree\n";
        return 1;
    }
    const double batch_s = std::chrono::duration<double>(t1 - t0).count();
    const double seq_s = std::chrono::duration<double>(t2 - t1).count();
    std::cout << "map " << map_side << "x" << map_side << ", dim " << dim << ", batch " << batch
              << "\n"
              << "batch search:      " << batch_s << " s  (" << batch / std::max(batch_s, 1e-12)
              << " samples/s)\n"
              << "sequential search: " << seq_s << " s  (" << batch / std::max(seq_s, 1e-12)
              << " samples/s)\n"
              << "speedup: " << seq_s / std::max(batch_s, 1e-12) << "x\n"
              << "correctness: identical BMU indices\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ViT-SOM: tiny vision transformer with SOM-regularized latents"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", ckpt_path, dataset, data_root, suite, out_image;
    long seed = -1;
    bool as_json = false, inject_failure = false;
    std::size_t map_side = 24, dim = 784, batch = 256;

    auto* train = app.add_subcommand("train", "train from a config file");
    train->add_option("--config", config_path, "key=value config file")->required();
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--dataset-root", data_root, "dataset root (or VITSOM_DATA_ROOT)");
    train->add_option("--seed", seed, "override config seed");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--dataset", dataset, "dataset override");
    eval->add_option("--dataset-root", data_root, "dataset root (or VITSOM_DATA_ROOT)");
    eval->add_flag("--json", as_json, "single-line JSON record");

    auto* expo = app.add_subcommand("export-prototypes", "render the prototype grid");
    expo->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    expo->add_option("--out", out_image, "output image (PGM)")->required();

    auto* verify = app.add_subcommand("verify", "run the oracle suites");
    verify->add_option("--suite", suite, "grad | som | schedules (default: all)");
    verify->add_option("--seed", seed, "seed for randomized checks");
    verify->add_flag("--inject-failure", inject_failure, "test mode: force one failure");

    auto* bench = app.add_subcommand("bench-bmu", "batch vs sequential BMU benchmark");
    bench->add_option("--map-size", map_side, "map side length");
    bench->add_option("--dim", dim, "prototype dimensionality");
    bench->add_option("--batch", batch, "batch size");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return run_train(config_path, out_dir, data_root, seed);
        if (eval->parsed()) return run_eval(ckpt_path, dataset, data_root, as_json);
        if (expo->parsed()) return run_export(ckpt_path, out_image);
        if (verify->parsed())
            return run_verify(suite, inject_failure, seed < 0 ? 12345u : std::uint64_t(seed));
        if (bench->parsed()) return run_bench_bmu(map_side, dim, batch);
    } catch (const vitsom::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const vitsom::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const vitsom::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const vitsom::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 5;
    } catch (const vitsom::ExportError& e) {
        std::cerr << "export error: " << e.what() << "\n";
        return 6;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
