#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "decfd/adam.hpp"
#include "decfd/checkpoint.hpp"
#include "decfd/model.hpp"
#include "decfd/ntm.hpp"

namespace decfd {

struct EpochStats {
    std::size_t epoch = 0;  // 1-based training epoch
    double mean_cfd = 0.0;
    double mean_ntm = 0.0;
    double gamma = 0.0;  // schedule value after the epoch's last step
    std::optional<metrics::Scores> val;

    std::string csv_row() const;
    static const char* csv_header();
};

/// Joint training driver. One warm pass (epoch -1, loss masked to the topic
/// model term) initializes the prototypes, then full epochs optimize
/// L_CFD + lambda_ntm * L_NTM. Gamma warms up per optimizer step. All
/// randomness derives from (seed, epoch, step), so identical configs give
/// bit-identical trajectories and resuming is exact.
class Trainer {
public:
    Trainer(const RunConfig& cfg, corpus::Vocab vocab);

    // the optimizer holds pointers into the owned model
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    void warm_pass(const corpus::LabeledDataset& train);
    bool warmed() const { return warmed_; }

    EpochStats run_epoch(const corpus::LabeledDataset& train,
                         const corpus::LabeledDataset* val);

    /// Run exactly n optimizer steps (shuffled batches, cycling epochs as
    /// needed) and return each step's batch-mean total loss.
    std::vector<double> run_steps(const corpus::LabeledDataset& train, std::size_t n);

    std::size_t optimizer_steps() const { return step_; }
    std::size_t epochs_done() const { return epoch_; }
    double gamma_now() const;

    Model& model() { return model_; }
    const Model& model() const { return model_; }

    void save(const std::filesystem::path& path);
    /// Fill params, optimizer state, prototypes and counters from a
    /// checkpoint written by save(). Shapes must match the config.
    void restore(const std::filesystem::path& path);

private:
    struct BatchStats {
        double cfd = 0.0;
        double ntm = 0.0;
        double total = 0.0;
    };

    BatchStats step_batch(const corpus::LabeledDataset& ds,
                          const std::vector<std::size_t>& batch, bool warm);
    std::vector<std::vector<std::size_t>> make_batches(std::size_t n_docs,
                                                       std::uint64_t shuffle_stream);
    std::size_t label_index(int label) const;

    Model model_;
    nn::Adam adam_;
    ntm::GammaSchedule gamma_;
    std::size_t step_ = 0;
    std::size_t epoch_ = 0;
    bool warmed_ = false;
};

}  // namespace decfd
