#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vitsom/som.hpp"
#include "vitsom/tensor.hpp"

namespace vitsom::metrics {

// Purity: each cluster votes its majority label; (1/N) sum of majority
// counts. Cluster ids are SOM unit indices; empty clusters contribute 0.
inline double purity(const std::vector<std::size_t>& assignments, const std::vector<int>& labels) {
    if (assignments.empty() || assignments.size() != labels.size())
        throw ContractError("purity: assignments and labels must be nonempty and aligned");
    std::map<std::size_t, std::map<int, std::size_t>> contingency;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        contingency[assignments[i]][labels[i]]++;
    std::size_t majority_total = 0;
    for (const auto& [cluster, counts] : contingency) {
        std::size_t best = 0;
        for (const auto& [label, c] : counts) best = std::max(best, c);
        majority_total += best;
    }
    return static_cast<double>(majority_total) / static_cast<double>(assignments.size());
}

// Fraction of samples whose first and second BMUs are not 8-neighborhood
// adjacent on the lattice.
inline double topographic_error(const Tensor& z_batch, const som::SomGrid& grid) {
    if (grid.units() < 2) throw ContractError("topographic_error: need at least 2 units");
    if (z_batch.dim(0) == 0) throw ContractError("topographic_error: empty batch");
    Tensor dist = som::pairwise_distance(z_batch, grid);
    const std::size_t B = dist.dim(0), M = dist.dim(1);
    std::size_t errors = 0;
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t best = 0, second = 1;
        if (dist.data()[b * M + 1] < dist.data()[b * M]) std::swap(best, second);
        for (std::size_t m = 2; m < M; ++m) {
            const double d = dist.data()[b * M + m];
            if (d < dist.data()[b * M + best]) {
                second = best;
                best = m;
            } else if (d < dist.data()[b * M + second]) {
                second = m;
            }
        }
        const long dr = static_cast<long>(best / grid.width) - static_cast<long>(second / grid.width);
        const long dc = static_cast<long>(best % grid.width) - static_cast<long>(second % grid.width);
        if (std::abs(dr) > 1 || std::abs(dc) > 1) ++errors;
    }
    return static_cast<double>(errors) / static_cast<double>(B);
}

// Argmax match rate; ties break to the lowest class index.
inline double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw ContractError("accuracy: logits/labels misaligned");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    std::size_t hits = 0;
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (logits.data()[b * C + c] > logits.data()[b * C + best]) best = c;
        if (static_cast<int>(best) == labels[b]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

// One evaluation record; score is purity (clustering) or accuracy
// (classification).
struct Record {
    std::size_t step = 0;
    double l_nn = 0.0, l_som = 0.0, l_total = 0.0;
    double score = 0.0;
    double quant_err = 0.0, topo_err = 0.0;
    double temperature = 0.0, gamma = 0.0, lr = 0.0;
};

class CsvLog {
public:
    CsvLog() = default;
    explicit CsvLog(const std::string& path) { open(path); }

    void open(const std::string& path) {
        out_.open(path);
        if (!out_) throw DataError("cannot open metric log '" + path + "'");
        out_ << "step,l_nn,l_som,l_total,score,quant_err,topo_err,temperature,gamma,lr\n";
    }

    void append(const Record& r) {
        out_.precision(17);
        out_ << r.step << ',' << r.l_nn << ',' << r.l_som << ',' << r.l_total << ',' << r.score
             << ',' << r.quant_err << ',' << r.topo_err << ',' << r.temperature << ',' << r.gamma
             << ',' << r.lr << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

}  // namespace vitsom::metrics
