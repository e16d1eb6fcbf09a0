#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "test_helpers.hpp"
#include "vtcc/augment.hpp"
#include "vtcc/losses.hpp"
#include "vtcc/parallel.hpp"
#include "vtcc/trainer.hpp"

using namespace vtcc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("vtcc_test_trainer_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Desk model on 64 synthetic records, 4 batches of 16 per epoch.
TrainConfig small_config(const std::string& name) {
    TrainConfig c = TrainConfig::desk();
    c.data.synthetic.per_class = 16;
    c.batch_size = 16;
    c.epochs = 3;
    c.checkpoint_every = 0;
    c.seed = 5;
    c.out_dir = scratch_dir(name).string();
    return c;
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool same_stats(const StepStats& a, const StepStats& b) {
    return a.step == b.step && a.epoch == b.epoch && a.batch == b.batch && a.instance_loss == b.instance_loss &&
           a.cluster_loss == b.cluster_loss && a.total_loss == b.total_loss && a.entropy_a == b.entropy_a &&
           a.entropy_b == b.entropy_b && a.grad_norm == b.grad_norm;
}

std::vector<StepStats> run_steps(Trainer& t, int n) {
    std::vector<StepStats> out;
    for (int i = 0; i < n; ++i) out.push_back(t.step());
    return out;
}

std::vector<std::vector<float>> parameter_values(VtccModel<float>& m, const std::string& prefix = "") {
    std::vector<std::vector<float>> out;
    for (auto& [name, p] : m.named_parameters()) {
        if (name.rfind(prefix, 0) == 0) out.emplace_back(p.data().begin(), p.data().end());
    }
    return out;
}

// K classes of constant images, so every record of a class has the same embedding.
Dataset constant_dataset(int classes, int per_class) {
    Dataset d;
    d.channels = 1;
    d.side = 32;
    for (int i = 0; i < classes * per_class; ++i) {
        const int label = i % classes;
        const auto v = static_cast<uint8_t>(40 + 80 * label);
        d.pixels.insert(d.pixels.end(), d.record_bytes(), v);
        d.labels.push_back(label);
    }
    return d;
}

}  // namespace

TEST_CASE("batches follow a seeded shuffle and drop the partial batch") {
    TrainConfig c = small_config("batches");
    c.data.synthetic.per_class = 17;  // 68 records, 4 full batches
    Trainer t(c, load_dataset(c.data));
    CHECK(t.batches_per_epoch() == 4);
    std::vector<int64_t> seen;
    for (int64_t b = 0; b < 4; ++b) {
        const auto idx = t.batch_indices(0, b);
        CHECK(idx.size() == 16);
        seen.insert(seen.end(), idx.begin(), idx.end());
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
    CHECK(seen.size() == 64);
    CHECK(t.batch_indices(0, 0) == t.batch_indices(0, 0));
    CHECK(t.batch_indices(0, 0) != t.batch_indices(1, 0));

    c.batch_size = 100;
    CHECK_THROWS_AS(Trainer(c, load_dataset(c.data)), ConfigError);
}

TEST_CASE("two desk epochs on the synthetic set") {
    TrainConfig c = TrainConfig::desk();
    c.out_dir = scratch_dir("two_epochs").string();
    Trainer t(c, load_dataset(c.data));
    const EpochStats e1 = t.run_epoch();
    const EpochStats e2 = t.run_epoch();
    CHECK(e1.steps == 8);
    CHECK(e2.steps == 8);
    for (const auto& e : {e1, e2}) {
        CHECK(std::isfinite(e.total_loss));
        CHECK(std::isfinite(e.instance_loss));
        CHECK(std::isfinite(e.cluster_loss));
    }
    CHECK(e2.total_loss < e1.total_loss);
    CHECK(t.progress().epoch == 2);
    CHECK(t.progress().step == 16);
}

TEST_CASE("zeroed cluster head output layer gives uniform assignments") {
    TrainConfig c = small_config("uniform");
    Trainer t(c, load_dataset(c.data));
    auto& fc2 = t.model().cluster_head().fc2;
    for (auto* p : {&fc2.weight, &fc2.bias}) std::fill(p->mutable_data().begin(), p->mutable_data().end(), 0.0f);
    const StepStats s = t.step();
    const double log_k = std::log(4.0);
    CHECK(std::abs(s.entropy_a - log_k) < 1e-6);
    CHECK(std::abs(s.entropy_b - log_k) < 1e-6);
}

TEST_CASE("both views share one parameter set") {
    TrainConfig c = small_config("sharing");
    auto model = VtccModel<float>::create(c.model, 1);
    const Dataset data = load_dataset(c.data);
    std::vector<Image> a, b;
    for (int64_t i = 0; i < 8; ++i) {
        auto [va, vb] = generate_view_pair(data.image(i), c.augment, static_cast<uint64_t>(i));
        a.push_back(va);
        b.push_back(vb);
    }
    const auto out_a = model.forward(stack_images(a), NormMode::kTrain);
    const auto out_b = model.forward(stack_images(b), NormMode::kTrain);
    const auto loss = total_loss(instance_contrastive_loss(out_a.z, out_b.z, c.loss),
                                 cluster_contrastive_loss(out_a.y, out_b.y, c.loss));

    std::set<const Node<float>*> params;
    for (auto& p : model.parameters()) params.insert(p.node());
    CHECK(params.size() == model.parameters().size());

    const auto tape = Tape<float>::record(loss);
    std::set<const Node<float>*> leaves;
    std::map<const Node<float>*, int> uses;
    for (const Node<float>* n : tape.nodes()) {
        if (n->is_leaf() && n->requires_grad) leaves.insert(n);
        for (const auto& in : n->inputs) ++uses[in.get()];
    }
    // The only trainable leaves reachable from the loss are the model's own
    // parameters, and each one feeds the graph of both views.
    CHECK(leaves == params);
    for (const Node<float>* p : params) CHECK(uses[p] >= 2);
}

TEST_CASE("ten steps are bit-identical across runs") {
    set_thread_count(1);
    TrainConfig c = small_config("determinism");
    const Dataset data = load_dataset(c.data);
    Trainer a(c, data), b(c, data);
    const auto sa = run_steps(a, 10);
    const auto sb = run_steps(b, 10);
    for (size_t i = 0; i < sa.size(); ++i) CHECK(same_stats(sa[i], sb[i]));
    CHECK(serialize_checkpoint(a.checkpoint()) == serialize_checkpoint(b.checkpoint()));

    c.seed = 6;
    Trainer other(c, data);
    CHECK(other.step().total_loss != sa[0].total_loss);
}

TEST_CASE("checkpoint round trip reproduces forward outputs") {
    TrainConfig c = small_config("roundtrip");
    const Dataset data = load_dataset(c.data);
    Trainer t(c, data);
    run_steps(t, 3);
    const fs::path path = fs::path(c.out_dir) / "t.ckpt";
    t.save(path);
    LoadedModel loaded = load_model(path);
    CHECK(loaded.config.to_text() == t.config().to_text());

    const Tensor<float> x = eval_batch(data, 0, 16, c);
    for (NormMode mode : {NormMode::kEval, NormMode::kTrain}) {
        NoGradGuard no_grad;
        const auto before = t.model().forward(x, mode);
        const auto after = loaded.model.forward(x, mode);
        CHECK(same_bits(before.h.data(), after.h.data()));
        CHECK(same_bits(before.z.data(), after.z.data()));
        CHECK(same_bits(before.y.data(), after.y.data()));
    }

    SUBCASE("corrupted byte") {
        std::string bytes = file_bytes(path);
        bytes[bytes.size() / 2] ^= 0x04;
        std::ofstream(path, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        try {
            load_model(path);
            FAIL("corrupted checkpoint loaded");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::kIntegrity);
        }
    }
    SUBCASE("geometry mismatch") {
        CheckpointFile f = t.checkpoint();
        f.config_text += "model.embed_dim=32\n";
        write_checkpoint(f, path);
        CHECK_THROWS_AS(load_model(path), CheckpointError);
    }
}

TEST_CASE("resume continues an uninterrupted run step for step") {
    set_thread_count(1);
    TrainConfig c = small_config("resume");
    const Dataset data = load_dataset(c.data);

    Trainer whole(c, data);
    const auto expected = run_steps(whole, 10);

    for (int split : {4, 6}) {  // an epoch boundary and mid-epoch
        Trainer first(c, data);
        auto got = run_steps(first, split);
        const fs::path path = fs::path(c.out_dir) / ("split" + std::to_string(split) + ".ckpt");
        first.save(path);
        Trainer rest = Trainer::resume(path, data);
        CHECK(rest.progress().step == split);
        const auto tail = run_steps(rest, 10 - split);
        got.insert(got.end(), tail.begin(), tail.end());
        REQUIRE(got.size() == expected.size());
        for (size_t i = 0; i < got.size(); ++i) CHECK_MESSAGE(same_stats(got[i], expected[i]), "step " << i);
        CHECK(serialize_checkpoint(rest.checkpoint()) == serialize_checkpoint(whole.checkpoint()));
    }
}

TEST_CASE("resumed train() matches an uninterrupted train()") {
    set_thread_count(1);
    TrainConfig c = small_config("resume_train");
    c.epochs = 2;
    const Dataset data = load_dataset(c.data);
    Trainer whole(c, data);
    const RunReport full = whole.train();
    const std::string expected = file_bytes(fs::path(c.out_dir) / "final.ckpt");
    CHECK(full.epochs.size() == 2);

    Trainer part(c, data);
    run_steps(part, 5);
    const fs::path mid = fs::path(c.out_dir) / "mid.ckpt";
    part.save(mid);
    Trainer rest = Trainer::resume(mid, data, &c);
    const RunReport resumed = rest.train();
    CHECK(resumed.resumed);
    CHECK(resumed.epochs.size() == 1);
    CHECK(file_bytes(fs::path(c.out_dir) / "final.ckpt") == expected);
}

TEST_CASE("labels never reach training") {
    set_thread_count(1);
    TrainConfig c = small_config("firewall");
    c.epochs = 1;
    const Dataset labeled = load_dataset(c.data);
    Trainer a(c, labeled);
    Trainer b(c, labeled.without_labels());
    a.train();
    b.train();
    CHECK(serialize_checkpoint(a.checkpoint()) == serialize_checkpoint(b.checkpoint()));
}

TEST_CASE("train writes reports, checkpoints and assignments") {
    TrainConfig c = small_config("reports");
    c.epochs = 2;
    c.checkpoint_every = 1;
    Trainer t(c, load_dataset(c.data));
    std::ostringstream log;
    const RunReport r = t.train(&log);
    const fs::path out(c.out_dir);
    CHECK(fs::exists(out / "epoch_0001.ckpt"));
    CHECK(fs::exists(out / "final.ckpt"));
    CHECK_FALSE(fs::exists(out / "epoch_0002.ckpt"));
    CHECK(r.checkpoints.size() == 2);
    CHECK(r.has_metrics);
    CHECK(r.final_eval.metrics.n == 64);

    std::ifstream in(out / "run_report.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["epochs"].size() == 2);
    CHECK(j["epochs_completed"] == 2);
    CHECK(j["steps"] == 8);
    CHECK(j["final"]["cluster_sizes"].size() == 4);
    for (const auto& e : j["epochs"]) CHECK(std::isfinite(e["total_loss"].get<double>()));

    std::ifstream assignments(r.assignments_path);
    std::string line;
    int lines = 0;
    while (std::getline(assignments, line)) ++lines;
    CHECK(lines == 65);
    CHECK(log.str().find("epoch 2/2") != std::string::npos);
}

TEST_CASE("divergence aborts with the last good state and diagnostics") {
    TrainConfig c = small_config("divergence");
    const Dataset data = load_dataset(c.data);

    SUBCASE("step leaves state untouched") {
        Trainer t(c, data);
        run_steps(t, 2);
        const std::string before = serialize_checkpoint(t.checkpoint());
        auto w = t.model().parameters()[0];
        const float saved = w.mutable_data()[0];
        w.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
        try {
            t.step();
            FAIL("step succeeded");
        } catch (const DivergenceError& e) {
            CHECK(e.stats.step == 2);
            const bool finite = std::isfinite(e.stats.total_loss) && std::isfinite(e.stats.grad_norm);
            CHECK_FALSE(finite);
            CHECK(e.grad_norms.size() == t.model().parameters().size());
        }
        w.mutable_data()[0] = saved;
        CHECK(serialize_checkpoint(t.checkpoint()) == before);
    }
    SUBCASE("train writes last_good.ckpt and diagnostics.json") {
        Trainer t(c, data);
        auto& w = t.model().cluster_head().fc2.weight;
        w.mutable_data()[0] = std::numeric_limits<float>::infinity();
        CHECK_THROWS_AS(t.train(), DivergenceError);
        const fs::path out(c.out_dir);
        CHECK(fs::exists(out / "last_good.ckpt"));
        CHECK_NOTHROW(read_checkpoint(out / "last_good.ckpt"));
        std::ifstream in(out / "diagnostics.json");
        const auto j = nlohmann::json::parse(in);
        CHECK(j["step"] == 0);
        CHECK(j.contains("instance_loss"));
        CHECK(j.contains("cluster_loss"));
        CHECK(j["grad_norms"].size() == t.model().parameters().size());
    }
}

TEST_CASE("evaluation") {
    TrainConfig c = small_config("evaluation");
    const Dataset data = load_dataset(c.data);
    Trainer t(c, data);
    run_steps(t, 4);

    SUBCASE("deterministic") {
        const EvalReport a = t.evaluate_now();
        const EvalReport b = t.evaluate_now();
        CHECK(a.assignments == b.assignments);
        CHECK(a.metrics.nmi == b.metrics.nmi);
        CHECK(a.metrics.acc == b.metrics.acc);
        CHECK(a.metrics.ari == b.metrics.ari);
        CHECK(a.metrics.cluster_sizes == b.metrics.cluster_sizes);
        CHECK(a.mass_entropy == b.mass_entropy);
        CHECK(std::accumulate(a.metrics.cluster_sizes.begin(), a.metrics.cluster_sizes.end(), int64_t{0}) == 64);
    }
    SUBCASE("unlabeled data is a contract error") {
        CHECK_THROWS_AS(evaluate(t.model(), data.without_labels(), c), ContractError);
        CHECK_NOTHROW(infer(t.model(), data.without_labels(), c));
    }
    SUBCASE("eval batches are resized and normalized only") {
        const Tensor<float> x = eval_batch(data, 3, 5, c);
        CHECK(x.shape() == Shape{2, 3, 32, 32});
        const Image img = data.image(3);
        CHECK(x.data()[0] == doctest::Approx(img.data[0] * 2.0f - 1.0f));
        CHECK(x.data()[1024] == x.data()[0]);
    }
}

TEST_CASE("an oracle cluster head scores 1 on every metric") {
    TrainConfig c = small_config("oracle");
    c.batch_size = 6;
    c.model.projector.clusters = 3;
    Trainer t(c, constant_dataset(3, 4));
    auto& model = t.model();

    // Class embeddings of the backbone, then a cluster head computing
    // h·h_c − |h_c|²/2 + M, whose argmax is the nearest class embedding.
    const auto h = model.forward(eval_batch(t.data(), 0, 3, c), NormMode::kEval).h;
    const int64_t d = h.dim(1);
    auto& head = model.cluster_head();
    const int64_t hidden = head.fc1.weight.dim(0);
    auto fill = [](Tensor<float>& p, float v) { std::fill(p.mutable_data().begin(), p.mutable_data().end(), v); };
    for (auto* p : {&head.fc0.weight, &head.fc1.weight, &head.fc2.weight, &head.fc2.bias, &head.bn0.beta, &head.bn1.beta}) fill(*p, 0.0f);
    fill(head.bn0.gamma, 1.0f);
    fill(head.bn1.gamma, 1.0f);
    for (auto* bn : {&head.bn0, &head.bn1}) {
        std::fill(bn->stats.running_mean.begin(), bn->stats.running_mean.end(), 0.0f);
        std::fill(bn->stats.running_var.begin(), bn->stats.running_var.end(), 1.0f);
    }
    for (int cls = 0; cls < 3; ++cls) {
        float sq = 0;
        for (int64_t j = 0; j < d; ++j) {
            const float v = h.data()[cls * d + j];
            head.fc0.weight.mutable_data()[j * hidden + cls] = v;
            sq += v * v;
        }
        head.bn0.beta.mutable_data()[cls] = 1000.0f - 0.5f * sq;
        head.fc1.weight.mutable_data()[cls * hidden + cls] = 1.0f;
        head.fc2.weight.mutable_data()[cls * 3 + cls] = 1.0f;
    }
    const fs::path path = fs::path(c.out_dir) / "oracle.ckpt";
    t.save(path);

    LoadedModel loaded = load_model(path);
    const EvalReport r = evaluate(loaded.model, t.data(), loaded.config);
    CHECK(r.metrics.nmi == 1.0);
    CHECK(r.metrics.acc == 1.0);
    CHECK(r.metrics.ari == 1.0);
    CHECK(r.metrics.cluster_sizes == std::vector<int64_t>{4, 4, 4});
}

TEST_CASE("embedding export") {
    TrainConfig c = small_config("export");
    const Dataset data = load_dataset(c.data);
    Trainer t(c, data);
    run_steps(t, 4);
    const fs::path path = fs::path(c.out_dir) / "emb.tsv";

    for (ProjectorMode mode : {ProjectorMode::kBoth, ProjectorMode::kInstanceOnly}) {
        TrainConfig mc = c;
        mc.projectors = mode;
        const Embeddings emb = infer(t.model(), data, mc);
        export_embeddings(emb, path);

        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header.rfind("index\tlabel\tp0\tp1\tp2\tp3\tz0\t", 0) == 0);
        int lines = 1;
        std::string row;
        while (std::getline(in, row)) {
            ++lines;
            CHECK(std::count(row.begin(), row.end(), '\t') == 1 + 4 + 32);
        }
        CHECK(lines == 65);

        const Embeddings back = import_embeddings(path);
        CHECK(back.n == 64);
        CHECK(back.dim == 32);
        CHECK(back.labels == data.labels);
        for (int64_t i = 0; i < back.n; ++i) {
            double sum = 0;
            for (int j = 0; j < 4; ++j) sum += back.probabilities[i * 4 + j];
            CHECK(std::abs(sum - 1.0) < 1e-5);
        }
        CHECK(back.assignments == evaluate(t.model(), data, mc).assignments);
        // Nine significant digits reproduce every float exactly.
        CHECK(same_bits(back.instance, emb.instance));
    }

    const Embeddings unlabeled = infer(t.model(), data.without_labels(), c);
    export_embeddings(unlabeled, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("index\tp0", 0) == 0);
    CHECK(import_embeddings(path).assignments == unlabeled.assignments);
}

TEST_CASE("projector ablation modes") {
    const Dataset data = load_dataset(small_config("ablation").data);
    for (ProjectorMode mode : {ProjectorMode::kBoth, ProjectorMode::kInstanceOnly, ProjectorMode::kClusterOnly}) {
        CAPTURE(to_string(mode));
        TrainConfig c = small_config("ablation_" + to_string(mode));
        c.projectors = mode;
        c.epochs = 1;
        Trainer t(c, data);
        const auto inst = parameter_values(t.model(), "instance_head.");
        const auto clu = parameter_values(t.model(), "cluster_head.");
        const auto backbone = parameter_values(t.model(), "backbone.");
        const RunReport r = t.train();
        CHECK(r.has_metrics);
        CHECK(r.final_eval.metrics.n == 64);
        CHECK(r.final_eval.metrics.cluster_sizes.size() == 4);
        CHECK(std::isfinite(r.final_eval.metrics.nmi));
        CHECK(std::isfinite(r.final_eval.metrics.acc));
        CHECK(std::isfinite(r.final_eval.metrics.ari));
        CHECK((parameter_values(t.model(), "instance_head.") == inst) == (mode == ProjectorMode::kClusterOnly));
        CHECK((parameter_values(t.model(), "cluster_head.") == clu) == (mode == ProjectorMode::kInstanceOnly));
        CHECK(parameter_values(t.model(), "backbone.") != backbone);
        if (mode == ProjectorMode::kInstanceOnly) CHECK(r.epochs[0].cluster_loss == 0.0);
        if (mode == ProjectorMode::kClusterOnly) CHECK(r.epochs[0].instance_loss == 0.0);

        // Resume restores the mode's optimizer state.
        const fs::path path = fs::path(c.out_dir) / "final.ckpt";
        Trainer again = Trainer::resume(path, data);
        CHECK(serialize_checkpoint(again.checkpoint()) == serialize_checkpoint(t.checkpoint()));
    }
}

TEST_CASE("losses stay finite over random desk steps") {
    // Property: fresh seeds, fresh data draws, a handful of steps each.
    for (uint64_t seed = 0; seed < 20; ++seed) {
        TrainConfig c = small_config("finite");
        c.seed = seed;
        c.data.synthetic.seed = 100 + seed;
        c.batch_size = 8;
        Trainer t(c, load_dataset(c.data));
        for (int i = 0; i < 3; ++i) {
            const StepStats s = t.step();
            CHECK(std::isfinite(s.total_loss));
            CHECK(std::isfinite(s.grad_norm));
        }
    }
}
