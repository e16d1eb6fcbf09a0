#include "vtcc/model_config.hpp"

#include <algorithm>

namespace vtcc {

std::vector<int> StemConfig::channel_schedule() const {
    if (!channels.empty()) return channels;
    std::vector<int> out;
    for (int i = 0; i < conv_blocks; ++i) out.push_back(std::max(8, embed_dim >> (conv_blocks - 1 - i)));
    return out;
}

int StemConfig::downsample() const { return kind == StemKind::kPatchify ? patch_size : (1 << conv_blocks); }

int ModelConfig::patch_tokens() const {
    const int grid = image_side / stem.downsample();
    return grid * grid;
}

int ModelConfig::sequence_length() const {
    return patch_tokens() + (encoder.pool == Pooling::kClsToken ? 1 : 0);
}

void ModelConfig::validate() const {
    const int d = stem.embed_dim;
    if (d < 2) throw ConfigError("embed_dim must be >= 2");
    if (encoder.heads < 1 || d % encoder.heads != 0) {
        throw ConfigError("embed_dim " + std::to_string(d) + " is not divisible by heads " + std::to_string(encoder.heads));
    }
    if (encoder.depth < 0) throw ConfigError("depth must be >= 0");
    if (encoder.mlp_ratio <= 0) throw ConfigError("mlp_ratio must be > 0");
    if (stem.in_channels < 1) throw ConfigError("in_channels must be >= 1");
    if (stem.kind == StemKind::kPatchify && stem.patch_size < 1) throw ConfigError("patch_size must be >= 1");
    if (stem.kind == StemKind::kConvolutional) {
        if (stem.conv_blocks < 1) throw ConfigError("conv_blocks must be >= 1");
        if (static_cast<int>(stem.channel_schedule().size()) != stem.conv_blocks) {
            throw ConfigError("channel schedule length must equal conv_blocks");
        }
    }
    if (image_side < 1 || image_side % stem.downsample() != 0) {
        throw ConfigError("image side " + std::to_string(image_side) + " is not divisible by stem reduction " +
                          std::to_string(stem.downsample()));
    }
    if (projector.clusters < 2) throw ConfigError("cluster count K must be >= 2");
    if (projector.hidden_dim < 1 || projector.instance_out_dim < 1) throw ConfigError("projector dims must be >= 1");
}

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.image_side = 32;
    c.stem.kind = StemKind::kConvolutional;
    c.stem.conv_blocks = 2;
    c.stem.patch_size = 4;
    c.stem.embed_dim = 64;
    c.encoder.depth = 2;
    c.encoder.heads = 4;
    c.projector.hidden_dim = 64;
    c.projector.instance_out_dim = 32;
    c.projector.clusters = 4;
    return c;
}

ModelConfig ModelConfig::micro() {
    ModelConfig c;
    c.image_side = 8;
    c.stem.conv_blocks = 1;
    c.stem.patch_size = 2;
    c.stem.embed_dim = 8;
    c.encoder.depth = 1;
    c.encoder.heads = 2;
    c.projector.hidden_dim = 8;
    c.projector.instance_out_dim = 4;
    c.projector.clusters = 3;
    return c;
}

namespace {

ModelConfig vit_preset(int d, int depth, int heads, int clusters) {
    ModelConfig c;
    c.image_side = 224;
    c.stem.kind = StemKind::kConvolutional;
    c.stem.conv_blocks = 4;
    c.stem.patch_size = 16;
    c.stem.embed_dim = d;
    c.encoder.depth = depth;
    c.encoder.heads = heads;
    c.projector.hidden_dim = d;
    c.projector.instance_out_dim = 128;
    c.projector.clusters = clusters;
    return c;
}

}  // namespace

ModelConfig ModelConfig::vit_tiny(int clusters) { return vit_preset(192, 4, 12, clusters); }
ModelConfig ModelConfig::vit_small(int clusters) { return vit_preset(384, 8, 12, clusters); }
ModelConfig ModelConfig::vit_base(int clusters) { return vit_preset(768, 12, 12, clusters); }

std::string to_string(StemKind kind) { return kind == StemKind::kPatchify ? "patchify" : "convolutional"; }

std::string to_string(PosEncoding kind) {
    switch (kind) {
        case PosEncoding::kLearnable: return "learnable";
        case PosEncoding::kSinusoidal: return "sinusoidal";
        case PosEncoding::kNone: return "none";
    }
    return "learnable";
}

std::string to_string(Pooling kind) { return kind == Pooling::kMean ? "mean" : "cls"; }

StemKind parse_stem_kind(const std::string& text) {
    if (text == "patchify") return StemKind::kPatchify;
    if (text == "convolutional" || text == "conv") return StemKind::kConvolutional;
    throw ConfigError("unknown stem kind '" + text + "'");
}

PosEncoding parse_pos_encoding(const std::string& text) {
    if (text == "learnable") return PosEncoding::kLearnable;
    if (text == "sinusoidal") return PosEncoding::kSinusoidal;
    if (text == "none") return PosEncoding::kNone;
    throw ConfigError("unknown positional encoding '" + text + "'");
}

Pooling parse_pooling(const std::string& text) {
    if (text == "mean") return Pooling::kMean;
    if (text == "cls") return Pooling::kClsToken;
    throw ConfigError("unknown pooling '" + text + "'");
}

}  // namespace vtcc
