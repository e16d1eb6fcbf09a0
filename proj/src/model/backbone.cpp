#include "vtcc/backbone.hpp"

#include <cmath>

#include "vtcc/ops.hpp"

namespace vtcc {

template <typename T>
Stem<T> Stem<T>::create(const StemConfig& config, SeededRng& rng) {
    Stem stem;
    stem.config = config;
    if (config.kind == StemKind::kPatchify) {
        stem.proj = Conv2d<T>::create(config.in_channels, config.embed_dim, config.patch_size, config.patch_size, 0,
                                      true, rng);
        return stem;
    }
    int64_t in = config.in_channels;
    for (int out : config.channel_schedule()) {
        // BatchNorm follows, so a conv bias would only be cancelled by the batch mean.
        stem.convs.push_back(Conv2d<T>::create(in, out, 3, 2, 1, false, rng));
        stem.norms.push_back(BatchNorm<T>::create(out));
        in = out;
    }
    stem.proj = Conv2d<T>::create(in, config.embed_dim, 1, 1, 0, true, rng);
    return stem;
}

template <typename T>
Tensor<T> Stem<T>::operator()(const Tensor<T>& images, NormMode mode) {
    if (images.rank() != 4 || images.dim(1) != config.in_channels || images.dim(2) != images.dim(3)) {
        throw ShapeError("stem expects [N x " + std::to_string(config.in_channels) + " x S x S], got " +
                         shape_str(images.shape()));
    }
    const int64_t side = images.dim(2);
    if (side % config.downsample() != 0) {
        throw ShapeError("image side " + std::to_string(side) + " is not divisible by stem reduction " +
                         std::to_string(config.downsample()));
    }
    Tensor<T> x = images;
    for (size_t i = 0; i < convs.size(); ++i) x = relu(norms[i](convs[i](x), mode));
    x = proj(x);
    const int64_t n = x.dim(0), d = x.dim(1), tokens = x.dim(2) * x.dim(3);
    return transpose(reshape(x, {n, d, tokens}));
}

template <typename T>
void Stem<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    for (size_t i = 0; i < convs.size(); ++i) {
        convs[i].visit(prefix + ".convs." + std::to_string(i), v);
        norms[i].visit(prefix + ".norms." + std::to_string(i), v);
    }
    proj.visit(prefix + ".proj", v);
}

template <typename T>
Attention<T> Attention<T>::create(int64_t dim, int heads, SeededRng& rng) {
    if (heads < 1 || dim % heads != 0) {
        throw ConfigError("embed_dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
    }
    Attention attn;
    attn.qkv = Linear<T>::create(dim, 3 * dim, false, rng);
    attn.out = Linear<T>::create(dim, dim, true, rng);
    attn.heads = heads;
    return attn;
}

template <typename T>
void Attention<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    qkv.visit(prefix + ".qkv", v);
    out.visit(prefix + ".out", v);
}

template <typename T>
EncoderBlock<T> EncoderBlock<T>::create(int64_t dim, int heads, double mlp_ratio, SeededRng& rng) {
    const auto hidden = static_cast<int64_t>(std::llround(static_cast<double>(dim) * mlp_ratio));
    EncoderBlock block;
    block.ln1 = LayerNorm<T>::create(dim);
    block.attn = Attention<T>::create(dim, heads, rng);
    block.ln2 = LayerNorm<T>::create(dim);
    block.fc1 = Linear<T>::create(dim, hidden, true, rng);
    block.fc2 = Linear<T>::create(hidden, dim, true, rng);
    return block;
}

template <typename T>
void EncoderBlock<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    ln1.visit(prefix + ".ln1", v);
    attn.visit(prefix + ".attn", v);
    ln2.visit(prefix + ".ln2", v);
    fc1.visit(prefix + ".fc1", v);
    fc2.visit(prefix + ".fc2", v);
}

template <typename T>
Tensor<T> sinusoidal_table(int64_t length, int64_t dim) {
    std::vector<T> values(static_cast<size_t>(length * dim));
    for (int64_t pos = 0; pos < length; ++pos) {
        for (int64_t j = 0; 2 * j < dim; ++j) {
            const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * j / static_cast<double>(dim));
            values[pos * dim + 2 * j] = static_cast<T>(std::sin(angle));
            if (2 * j + 1 < dim) values[pos * dim + 2 * j + 1] = static_cast<T>(std::cos(angle));
        }
    }
    return Tensor<T>::from_vector({length, dim}, std::move(values));
}

template <typename T>
Tensor<T> add_positional_encoding(const Tensor<T>& tokens, const Tensor<T>& table) {
    if (tokens.rank() != 3 || table.rank() != 2 || table.dim(1) != tokens.dim(2)) {
        throw ShapeError("positional encoding: tokens " + shape_str(tokens.shape()) + " vs table " +
                         shape_str(table.shape()));
    }
    const int64_t length = tokens.dim(1);
    if (table.dim(0) < length) {
        throw ShapeError("sequence length " + std::to_string(length) + " exceeds positional table length " +
                         std::to_string(table.dim(0)));
    }
    return add(tokens, table.dim(0) == length ? table : slice(table, 0, 0, length));
}

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& tokens, const Attention<T>& attn) {
    if (tokens.rank() != 3) throw ShapeError("attention expects [N x L x d], got " + shape_str(tokens.shape()));
    const int64_t n = tokens.dim(0), len = tokens.dim(1), d = tokens.dim(2);
    const int64_t h = attn.heads, dh = d / h;
    // [N×L×3d] -> [3×N×H×L×dh]
    const Tensor<T> qkv = permute(reshape(attn.qkv(tokens), {n, len, 3, h, dh}), {2, 0, 3, 1, 4});
    auto part = [&](int64_t i) { return reshape(slice(qkv, 0, i, i + 1), {n, h, len, dh}); };
    const Tensor<T> q = part(0), k = part(1), v = part(2);
    const Tensor<T> scores = mul_scalar(bmm(q, transpose(k)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    const Tensor<T> mixed = bmm(softmax(scores, -1), v);  // [N×H×L×dh]
    return attn.out(reshape(permute(mixed, {0, 2, 1, 3}), {n, len, d}));
}

template <typename T>
Tensor<T> encoder_block(const Tensor<T>& tokens, const EncoderBlock<T>& block) {
    const Tensor<T> x = add(tokens, multi_head_self_attention(block.ln1(tokens), block.attn));
    return add(x, block.fc2(gelu(block.fc1(block.ln2(x)))));
}

template <typename T>
Tensor<T> pool_tokens(const Tensor<T>& tokens, Pooling pool) {
    if (tokens.rank() != 3) throw ShapeError("pooling expects [N x L x d], got " + shape_str(tokens.shape()));
    if (pool == Pooling::kClsToken) return reshape(slice(tokens, 1, 0, 1), {tokens.dim(0), tokens.dim(2)});
    return mean(tokens, 1, false);
}

template <typename T>
Backbone<T> Backbone<T>::create(const ModelConfig& config, SeededRng& rng) {
    config.validate();
    Backbone bb;
    bb.config = config;
    const int64_t d = config.embed_dim();
    bb.stem = Stem<T>::create(config.stem, rng);
    if (config.encoder.pool == Pooling::kClsToken) bb.cls_token = truncated_normal_tensor<T>({d}, rng);
    const int64_t length = config.sequence_length();
    switch (config.encoder.pos_encoding) {
        case PosEncoding::kLearnable: bb.pos_table = Tensor<T>::zeros({length, d}, true); break;
        case PosEncoding::kSinusoidal: bb.pos_table = sinusoidal_table<T>(length, d); break;
        case PosEncoding::kNone: break;
    }
    for (int i = 0; i < config.encoder.depth; ++i) {
        bb.blocks.push_back(EncoderBlock<T>::create(d, config.encoder.heads, config.encoder.mlp_ratio, rng));
    }
    // Every head starts with a bias-free linear layer and BatchNorm, which removes
    // any offset shared by the whole batch, so the final norm carries no offset.
    bb.final_norm = LayerNorm<T>::create(d, false);
    return bb;
}

template <typename T>
Tensor<T> Backbone<T>::encode(const Tensor<T>& images, NormMode mode) {
    Tensor<T> x = stem(images, mode);
    if (cls_token.defined()) {
        const Tensor<T> cls = add(Tensor<T>::zeros({x.dim(0), 1, x.dim(2)}), cls_token);
        const std::vector<Tensor<T>> parts{cls, x};
        x = concat<T>(parts, 1);
    }
    if (pos_table.defined()) x = add_positional_encoding(x, pos_table);
    for (const auto& block : blocks) x = encoder_block(x, block);
    return final_norm(x);
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& images, NormMode mode) {
    return pool_tokens(encode(images, mode), config.encoder.pool);
}

template <typename T>
void Backbone<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    stem.visit(prefix + ".stem", v);
    if (cls_token.defined()) v.param(prefix + ".cls_token", cls_token);
    if (pos_table.defined() && pos_table.requires_grad()) v.param(prefix + ".pos_embed", pos_table);
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".blocks." + std::to_string(i), v);
    final_norm.visit(prefix + ".norm", v);
}

#define VTCC_INSTANTIATE_BACKBONE(T)                                                                    \
    template struct Stem<T>;                                                                           \
    template struct Attention<T>;                                                                      \
    template struct EncoderBlock<T>;                                                                   \
    template struct Backbone<T>;                                                                       \
    template Tensor<T> sinusoidal_table<T>(int64_t, int64_t);                                          \
    template Tensor<T> add_positional_encoding<T>(const Tensor<T>&, const Tensor<T>&);                 \
    template Tensor<T> multi_head_self_attention<T>(const Tensor<T>&, const Attention<T>&);            \
    template Tensor<T> encoder_block<T>(const Tensor<T>&, const EncoderBlock<T>&);                     \
    template Tensor<T> pool_tokens<T>(const Tensor<T>&, Pooling);

VTCC_INSTANTIATE_BACKBONE(float)
VTCC_INSTANTIATE_BACKBONE(double)

}  // namespace vtcc
