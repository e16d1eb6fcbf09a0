#pragma once

// Run configuration and its key=value text form:
//
//   # comment
//   model.embed_dim = 64
//   train.batch_size = 64
//
// Keys carry a section prefix; later lines override earlier ones. The text
// produced by to_text() parses back to an identical config.

#include <cstdint>
#include <string>
#include <vector>

#include "vtcc/augment.hpp"
#include "vtcc/dataset.hpp"
#include "vtcc/losses.hpp"
#include "vtcc/model_config.hpp"

namespace vtcc {

struct OptimizerConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Which projectors are trained, as in the projector ablation. With the
// instance projector only, clusters come from K-means on instance embeddings.
enum class ProjectorMode { kBoth, kInstanceOnly, kClusterOnly };

std::string to_string(ProjectorMode mode);
ProjectorMode parse_projector_mode(const std::string& text);

struct TrainConfig {
    ModelConfig model = ModelConfig::desk();
    LossConfig loss;
    OptimizerConfig optim;
    AugmentationSpec augment;  // output_side follows model.image_side
    DataSourceConfig data;
    ProjectorMode projectors = ProjectorMode::kBoth;
    int batch_size = 64;
    int epochs = 200;
    uint64_t seed = 0;
    int checkpoint_every = 50;  // epochs; 0 keeps only the final checkpoint
    int eval_every = 0;         // epochs; 0 evaluates only at the end
    int eval_batch_size = 256;
    std::string out_dir = "runs/default";

    // Shipped profiles: 32x32 desk scale and the 224x224 ViT-Small setting.
    static TrainConfig desk();
    static TrainConfig large();

    void validate() const;  // ConfigError
    std::string to_text() const;
};

// Applies one "key=value" assignment; ConfigError names the key on failure.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);
// Parses lines on top of `base` (the desk profile by default).
TrainConfig parse_config_text(const std::string& text, TrainConfig base = TrainConfig::desk());
TrainConfig load_config_file(const std::string& path, TrainConfig base = TrainConfig::desk());
std::vector<std::string> config_keys();

}  // namespace vtcc
