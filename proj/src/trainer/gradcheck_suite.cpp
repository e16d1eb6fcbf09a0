#include "vtcc/gradcheck_suite.hpp"

#include <chrono>
#include <memory>

#include "vtcc/backbone.hpp"
#include "vtcc/losses.hpp"
#include "vtcc/model.hpp"
#include "vtcc/ops.hpp"
#include "vtcc/rng.hpp"

namespace vtcc {

std::vector<TensorD> randomize_for_gradcheck(const std::function<void(ParamVisitor<double>&)>& visit, uint64_t seed,
                                             double scale) {
    std::vector<TensorD> leaves;
    ParamVisitor<double> v;
    v.param = [&](const std::string& name, TensorD& t) {
        const uint64_t s = SeededRng::derive(seed, {leaves.size()});
        if (name.ends_with(".gamma")) {
            t = random_tensor(t.shape(), s, 0.5, 1.5);
        } else if (name.ends_with(".beta")) {
            t = random_tensor(t.shape(), s, -0.25, 0.25);
        } else {
            t = random_tensor(t.shape(), s, -scale, scale);
        }
        leaves.push_back(t);
    };
    visit(v);
    return leaves;
}

bool GradCheckSuiteReport::passed() const {
    for (const auto& r : results) {
        if (!r.passed()) return false;
    }
    return !results.empty();
}

namespace {

using Fn = std::function<TensorD()>;

struct Suite {
    uint64_t seed;
    double op_tolerance;
    GradCheckSuiteReport report;
    uint64_t next = 0;

    uint64_t draw() { return SeededRng::derive(seed, {next++}); }
    TensorD input(Shape shape, double lo = -2.0, double hi = 2.0) { return random_tensor(std::move(shape), draw(), lo, hi); }

    // Tensor-valued ops are reduced through a fixed random projection.
    void op(const std::string& name, std::vector<TensorD> inputs, const std::function<TensorD()>& f) {
        auto proj = std::make_shared<RandomProjection>(draw());
        GradCheckOptions options;
        options.tolerance = op_tolerance;
        report.results.push_back(check_gradients(name, std::move(inputs), [f, proj] { return (*proj)(f()); }, options));
    }
};

}  // namespace

GradCheckSuiteReport run_gradcheck_suite(uint64_t seed, double op_tolerance, double model_tolerance) {
    const auto start = std::chrono::steady_clock::now();
    Suite s{seed, op_tolerance, {}};

    {
        const auto a = s.input({3, 4}), b = s.input({3, 4}), row = s.input({4}), pos = s.input({3, 4}, 0.5, 2.0);
        s.op("add", {a, b}, [=] { return add(a, b); });
        s.op("add broadcast", {a, row}, [=] { return add(a, row); });
        s.op("sub", {a, b}, [=] { return sub(a, b); });
        s.op("mul", {a, row}, [=] { return mul(a, row); });
        s.op("div", {a, pos}, [=] { return div(a, pos); });
        s.op("neg", {a}, [=] { return neg(a); });
        s.op("add_scalar", {a}, [=] { return add_scalar(a, 0.7); });
        s.op("mul_scalar", {a}, [=] { return mul_scalar(a, -1.3); });
        s.op("exp", {a}, [=] { return exp(a); });
        s.op("log", {pos}, [=] { return log(pos); });
        s.op("sqrt", {pos}, [=] { return sqrt(pos); });
        s.op("square", {a}, [=] { return square(a); });
        s.op("sum", {a}, [=] { return sum(a); });
        s.op("sum axis", {a}, [=] { return sum(a, 0, false); });
        s.op("mean", {a}, [=] { return mean(a); });
        s.op("mean axis", {a}, [=] { return mean(a, 1, true); });
        s.op("logsumexp", {a}, [=] { return logsumexp(a, 1, false); });
        s.op("l2_norm", {a}, [=] { return l2_norm(a, 1, true); });
        s.op("relu", {a}, [=] { return relu(a); });
        s.op("gelu", {a}, [=] { return gelu(a); });
        s.op("softmax", {a}, [=] { return softmax(a, 1); });
        s.op("softmax axis 0", {a}, [=] { return softmax(a, 0); });
    }
    {
        const auto x = s.input({2, 3, 4}), y = s.input({2, 3, 4});
        s.op("reshape", {x}, [=] { return reshape(x, {6, 4}); });
        s.op("permute", {x}, [=] { return permute(x, {2, 0, 1}); });
        s.op("transpose", {x}, [=] { return transpose(x, 0, 2); });
        s.op("concat", {x, y}, [=] {
            const std::vector<TensorD> parts{x, y};
            return concat<double>(parts, 1);
        });
        s.op("slice", {x}, [=] { return slice(x, 2, 1, 3); });
    }
    {
        const auto a = s.input({3, 5}), b = s.input({5, 4});
        s.op("matmul", {a, b}, [=] { return matmul(a, b); });
        const auto p = s.input({2, 3, 5}), q = s.input({2, 5, 4});
        s.op("bmm", {p, q}, [=] { return bmm(p, q); });
    }
    {
        const auto x = s.input({2, 3, 6, 6}), w = s.input({4, 3, 3, 3}, -1.0, 1.0), b = s.input({4});
        s.op("conv2d stride 2", {x, w, b}, [=] { return conv2d(x, w, b, 2, 1); });
        const auto wp = s.input({4, 3, 2, 2}, -1.0, 1.0);
        s.op("conv2d patchify", {x, wp, b}, [=] { return conv2d(x, wp, b, 2, 0); });
    }
    {
        const auto x = s.input({4, 3, 2, 2}), gamma = s.input({3}, 0.5, 1.5), beta = s.input({3}, -0.5, 0.5);
        s.op("batch_norm 4d", {x, gamma, beta}, [=] {
            auto stats = BatchNormStats<double>::fresh(3);
            return batch_norm(x, gamma, beta, stats, NormMode::kTrain);
        });
        const auto f = s.input({5, 3});
        s.op("batch_norm 2d", {f, gamma, beta}, [=] {
            auto stats = BatchNormStats<double>::fresh(3);
            return batch_norm(f, gamma, beta, stats, NormMode::kTrain);
        });
        const auto t = s.input({2, 3, 4}), g = s.input({4}, 0.5, 1.5), o = s.input({4}, -0.5, 0.5);
        s.op("layer_norm", {t, g, o}, [=] { return layer_norm(t, g, o); });
    }
    {
        SeededRng rng(s.draw());
        auto attn = Attention<double>::create(8, 2, rng);
        auto block = EncoderBlock<double>::create(8, 2, 4.0, rng);
        const auto tokens = s.input({2, 5, 8});
        std::vector<TensorD> inputs{tokens};
        for (auto& t : randomize_for_gradcheck([&](auto& v) { attn.visit("attn", v); }, s.draw())) inputs.push_back(t);
        s.op("self-attention", inputs, [&attn, tokens] { return multi_head_self_attention(tokens, attn); });
        inputs = {tokens};
        for (auto& t : randomize_for_gradcheck([&](auto& v) { block.visit("block", v); }, s.draw())) inputs.push_back(t);
        s.op("encoder block", inputs, [&block, tokens] { return encoder_block(tokens, block); });
    }
    {
        const LossConfig cfg;
        const auto za = s.input({4, 6}), zb = s.input({4, 6});
        s.op("instance loss", {za, zb}, [=] { return instance_contrastive_loss(za, zb, cfg); });
        const auto la = s.input({4, 3}), lb = s.input({4, 3});
        s.op("assignment entropy", {la}, [=] { return assignment_entropy(softmax(la, 1)).entropy; });
        s.op("cluster loss", {la, lb}, [=] {
            return cluster_contrastive_loss(softmax(la, 1), softmax(lb, 1), cfg);
        });
    }

    {
        // End to end: both views through the micro model into L_total.
        auto model = VtccModel<double>::create(ModelConfig::micro(), kMicroModelSeed);
        const auto xa = random_tensor({4, 3, 8, 8}, kMicroModelSeed + 1);
        const auto xb = random_tensor({4, 3, 8, 8}, kMicroModelSeed + 2);
        std::vector<TensorD> inputs{xa, xb};
        for (auto& t : randomize_for_gradcheck([&](auto& v) { model.visit(v); }, kMicroParamSeed)) inputs.push_back(t);
        const LossConfig cfg;
        GradCheckOptions options;
        options.tolerance = model_tolerance;
        s.report.results.push_back(check_gradients(
            "micro L_total", inputs,
            [&] {
                const auto a = model.forward(xa, NormMode::kTrain), b = model.forward(xb, NormMode::kTrain);
                return total_loss(instance_contrastive_loss(a.z, b.z, cfg), cluster_contrastive_loss(a.y, b.y, cfg));
            },
            options));
    }

    s.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s.report;
}

}  // namespace vtcc
