#pragma once

// Training loop, evaluation and embedding export.
//
// Every random draw of a run derives from the run seed:
//   model init {1}, epoch shuffle {2, epoch}, views of a sample {3, epoch, index},
//   K-means on instance embeddings {4}.
// Resuming therefore needs only the seed and the progress counters.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtcc/checkpoint.hpp"
#include "vtcc/config.hpp"
#include "vtcc/dataset.hpp"
#include "vtcc/metrics.hpp"
#include "vtcc/model.hpp"
#include "vtcc/optim.hpp"

namespace vtcc {

struct StepStats {
    int64_t step = 0;  // global index of this step
    int epoch = 0;
    int64_t batch = 0;
    // Terms the projector mode does not train are reported as 0.
    double instance_loss = 0.0;
    double cluster_loss = 0.0;
    double total_loss = 0.0;
    double entropy_a = 0.0;  // assignment entropy of each view
    double entropy_b = 0.0;
    double grad_norm = 0.0;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    int64_t steps = 0;
    double instance_loss = 0.0;  // means over the epoch's steps
    double cluster_loss = 0.0;
    double total_loss = 0.0;
    double entropy = 0.0;
    double seconds = 0.0;
};

struct TrainProgress {
    int epoch = 0;      // epochs completed
    int64_t batch = 0;  // batches completed within the current epoch
    int64_t step = 0;   // steps completed overall
};

struct ParamGradNorm {
    std::string name;
    double norm = 0.0;  // NaN or inf when the gradient is not finite
};

// A step produced a non-finite loss or gradient. No update was applied.
class DivergenceError : public std::runtime_error {
   public:
    DivergenceError(const std::string& what, StepStats stats, std::vector<ParamGradNorm> grads)
        : std::runtime_error(what), stats(stats), grad_norms(std::move(grads)) {}
    StepStats stats;
    std::vector<ParamGradNorm> grad_norms;
};

// Per-sample outputs of a deterministic eval-mode pass.
struct Embeddings {
    int64_t n = 0;
    int clusters = 0;
    int dim = 0;                      // instance embedding width
    std::vector<float> probabilities;  // n×K
    std::vector<float> instance;       // n×dim, the instance projector output
    std::vector<int> assignments;
    std::vector<int> labels;  // copied from the dataset, -1 when unlabeled
};

struct EvalReport {
    MetricsReport metrics;
    double mass_entropy = 0.0;  // entropy of the mean assignment over the dataset
    std::vector<int> assignments;
};

// Resize to the model side, normalize, stack. No other augmentation.
Tensor<float> eval_batch(const Dataset& data, int64_t begin, int64_t end, const TrainConfig& config);

// Cluster assignments come from argmax of the cluster projector, or from
// K-means on L2-normalized instance embeddings when only the instance
// projector is trained. In that mode the probability columns hold the
// one-hot K-means assignment.
Embeddings infer(VtccModel<float>& model, const Dataset& data, const TrainConfig& config);
// Entropy of the column means of an n×K probability matrix.
double mass_entropy(const Embeddings& emb);
// ContractError if any record is unlabeled.
EvalReport evaluate(VtccModel<float>& model, const Dataset& data, const TrainConfig& config);

// TSV: header, then per sample index, label (when the data is labeled), K
// probabilities and the instance embedding, floats at 9 significant digits.
void export_embeddings(const Embeddings& emb, const std::filesystem::path& path);
// Parses a file written by export_embeddings.
Embeddings import_embeddings(const std::filesystem::path& path);

// Checkpoint records of model state: "param.<name>" and "buffer.<name>".
void append_model_records(VtccModel<float>& model, CheckpointFile& file);
// Requires a record of matching shape for every parameter and buffer.
void restore_model(const CheckpointFile& file, VtccModel<float>& model);

struct LoadedModel {
    TrainConfig config;
    VtccModel<float> model;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

struct RunReport {
    TrainConfig config;
    std::vector<EpochStats> epochs;
    TrainProgress progress;
    bool resumed = false;
    bool has_metrics = false;
    EvalReport final_eval;  // metrics only when has_metrics
    std::vector<std::string> checkpoints;
    std::string assignments_path;  // index and final cluster of every record
    double seconds = 0.0;

    std::string to_json() const;
};

class Trainer {
   public:
    Trainer(TrainConfig config, Dataset data);
    // Restores model, optimizer, and progress. The stored config is used, with
    // the epoch budget and output directory taken from `overrides` when given.
    static Trainer resume(const std::filesystem::path& checkpoint, Dataset data, const TrainConfig* overrides = nullptr);

    Trainer(Trainer&&) noexcept = default;

    // One optimization step on the next batch. DivergenceError leaves the
    // model, its BN statistics, and the optimizer as they were.
    StepStats step();
    // Runs the remaining batches of the current epoch.
    EpochStats run_epoch();
    // Runs until config.epochs, writing checkpoints and run_report.json under
    // out_dir. On divergence writes last_good.ckpt and diagnostics.json, then
    // rethrows.
    RunReport train(std::ostream* log = nullptr);

    int64_t batches_per_epoch() const;
    // Sample indices of batch `batch` of epoch `epoch` (0-based).
    std::vector<int64_t> batch_indices(int epoch, int64_t batch) const;
    const TrainProgress& progress() const { return progress_; }
    const TrainConfig& config() const { return config_; }
    const Dataset& data() const { return data_; }
    VtccModel<float>& model() { return model_; }
    const AdamState<float>& optimizer() const { return adam_; }

    CheckpointFile checkpoint();
    void save(const std::filesystem::path& path);
    EvalReport evaluate_now();
    Embeddings infer_now();

   private:
    Trainer(TrainConfig config, Dataset data, VtccModel<float> model);
    std::vector<std::pair<std::string, Tensor<float>>> trainable();

    TrainConfig config_;
    Dataset data_;
    VtccModel<float> model_;
    AdamState<float> adam_;
    TrainProgress progress_;
    bool resumed_ = false;
};

}  // namespace vtcc
