// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Arguments select a subset, e.g. `acceptance 2 3`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vtcc/gradcheck_suite.hpp"
#include "vtcc/losses.hpp"
#include "vtcc/metrics.hpp"
#include "vtcc/nn_ops.hpp"
#include "vtcc/parallel.hpp"
#include "vtcc/trainer.hpp"

using namespace vtcc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "vtcc_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

void note(const std::string& line) { std::cerr << "  .. " << line << std::endl; }

oracle::Matrix rows_of(const TensorD& t) {
    oracle::Matrix m(static_cast<size_t>(t.dim(0)), std::vector<double>(static_cast<size_t>(t.dim(1))));
    for (int64_t i = 0; i < t.dim(0); ++i)
        for (int64_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at({i, j});
    return m;
}

TensorD random_probabilities(int64_t n, int64_t k, uint64_t seed) {
    NoGradGuard guard;
    return softmax(random_tensor({n, k}, seed, -3.0, 3.0, false), 1).detach();
}

std::vector<int> random_labels(int n, int k, SeededRng& rng) {
    std::vector<int> v(static_cast<size_t>(n));
    for (int& x : v) x = static_cast<int>(rng.uniform_int(0, k - 1));
    return v;
}

int distinct(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_bits(const std::vector<float>& a, std::span<const float> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool same_stats(const StepStats& a, const StepStats& b) {
    const double x[] = {a.instance_loss, a.cluster_loss, a.total_loss, a.entropy_a, a.entropy_b, a.grad_norm};
    const double y[] = {b.instance_loss, b.cluster_loss, b.total_loss, b.entropy_a, b.entropy_b, b.grad_norm};
    return a.step == b.step && a.epoch == b.epoch && a.batch == b.batch && std::memcmp(x, y, sizeof x) == 0;
}

std::vector<std::vector<float>> parameter_values(VtccModel<float>& m) {
    std::vector<std::vector<float>> out;
    for (auto& [name, p] : m.named_parameters()) out.emplace_back(p.data().begin(), p.data().end());
    for (auto& [name, b] : m.named_buffers()) out.push_back(*b);
    return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    const GradCheckSuiteReport report = run_gradcheck_suite();
    double worst_op = 0, end_to_end = 0;
    std::string failures;
    for (const auto& r : report.results) {
        if (r.tolerance > 1e-5) {
            end_to_end = std::max(end_to_end, r.max_rel_error);
        } else {
            worst_op = std::max(worst_op, r.max_rel_error);
        }
        if (!r.passed()) failures += " " + r.name;
    }
    Outcome o;
    o.passed = report.passed() && report.seconds <= 120.0;
    o.detail = fmt("%zu checks, worst op rel err %.2e, L_total rel err %.2e, %.1fs", report.results.size(), worst_op,
                   end_to_end, report.seconds);
    if (!failures.empty()) o.detail += "; failed:" + failures;
    return o;
}

Outcome loss_oracles() {
    SeededRng rng(2024);
    double worst_ins = 0, worst_clu = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t n = rng.uniform_int(2, 8), k = rng.uniform_int(2, 5), dim = rng.uniform_int(1, 16);
        LossConfig cfg;
        cfg.tau_instance = rng.uniform(0.1, 2.0);
        cfg.tau_cluster = rng.uniform(0.2, 2.0);
        cfg.entropy_weight = trial % 4 == 3 ? 0.0 : 1.0;

        const auto za = random_tensor({n, dim}, 10000 + trial), zb = random_tensor({n, dim}, 20000 + trial);
        const double ins = oracle::pair_loop_info_nce(rows_of(za), rows_of(zb), cfg.tau_instance);
        worst_ins = std::max(worst_ins, std::abs(instance_contrastive_loss(za, zb, cfg).item() - ins));

        const auto ya = random_probabilities(n, k, 30000 + trial), yb = random_probabilities(n, k, 40000 + trial);
        const auto ra = rows_of(ya), rb = rows_of(yb);
        double clu = oracle::pair_loop_info_nce(oracle::transpose(ra), oracle::transpose(rb), cfg.tau_cluster);
        if (cfg.entropy_weight != 0) clu -= oracle::mass_entropy(ra) + oracle::mass_entropy(rb);
        worst_clu = std::max(worst_clu, std::abs(cluster_contrastive_loss(ya, yb, cfg).item() - clu));
    }

    const LossConfig defaults;
    const auto same = TensorD::from_vector({2, 4}, {0.5, -1, 2, 3, 0.5, -1, 2, 3});
    const double log3_err = std::abs(instance_contrastive_loss(same, same, defaults).item() - std::log(3.0));

    const auto onehot = TensorD::from_vector({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
    const double e = std::exp(1.0);
    const double expected = -std::log(e / (e + 2)) - 2 * std::log(2.0);
    const double ortho_err = std::abs(cluster_contrastive_loss(onehot, onehot, defaults).item() - expected);

    Outcome o;
    o.passed = worst_ins < 1e-10 && worst_clu < 1e-10 && log3_err < 1e-9 && ortho_err < 1e-6;
    o.detail = fmt("100 fixtures: L_ins max err %.1e, L_clu max err %.1e; log 3 err %.1e; orthogonal K=2 err %.1e",
                   worst_ins, worst_clu, log3_err, ortho_err);
    return o;
}

Outcome metric_oracles() {
    SeededRng rng(77);
    int acc_mismatch = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 40));
        const int kp = 1 + trial % 6, kt = 1 + (trial / 6) % 6;
        const auto p = random_labels(n, kp, rng), q = random_labels(n, kt, rng);
        acc_mismatch += clustering_accuracy(p, q) != oracle::exhaustive_accuracy(p, q);
    }

    double worst_nmi = 0, worst_ari = 0;
    for (int checked = 0; checked < 50;) {
        const int n = static_cast<int>(rng.uniform_int(3, 40));
        const auto p = random_labels(n, static_cast<int>(rng.uniform_int(2, 6)), rng);
        const auto q = random_labels(n, static_cast<int>(rng.uniform_int(2, 6)), rng);
        if (distinct(p) < 2 || distinct(q) < 2) continue;
        worst_nmi = std::max(worst_nmi, std::abs(nmi(p, q) - oracle::hand_nmi(p, q)));
        worst_ari = std::max(worst_ari, std::abs(ari(p, q) - oracle::pair_loop_ari(p, q)));
        ++checked;
    }

    int identity_failures = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto labels = random_labels(30, 2 + trial % 5, rng);
        if (distinct(labels) < 2) continue;
        const std::vector<int> constant(labels.size(), 0);
        identity_failures += nmi(labels, labels) != 1.0;
        identity_failures += ari(labels, labels) != 1.0;
        identity_failures += clustering_accuracy(labels, labels) != 1.0;
        identity_failures += nmi(constant, labels) != 0.0;
        identity_failures += ari(constant, labels) != 0.0;
    }

    Outcome o;
    o.passed = acc_mismatch == 0 && worst_nmi < 1e-10 && worst_ari < 1e-10 && identity_failures == 0;
    o.detail = fmt("ACC mismatches %d/100, NMI max err %.1e, ARI max err %.1e over 50, identity failures %d",
                   acc_mismatch, worst_nmi, worst_ari, identity_failures);
    return o;
}

// Full desk runs shared by criteria 4 and 5.
struct DeskRun {
    uint64_t seed = 0;
    double entropy_weight = 1.0;
    EvalReport eval;
    double seconds = 0;
    bool diverged = false;
    double largest_share = 0;
};

const std::vector<uint64_t> kDeskSeeds{1, 2, 3};

DeskRun desk_run(uint64_t seed, double entropy_weight) {
    static std::map<std::pair<uint64_t, double>, DeskRun> cache;
    const auto key = std::make_pair(seed, entropy_weight);
    if (auto it = cache.find(key); it != cache.end()) return it->second;

    TrainConfig config = TrainConfig::desk();
    config.seed = seed;
    config.loss.entropy_weight = entropy_weight;
    config.checkpoint_every = 0;
    config.out_dir = (work_dir() / fmt("desk_w%g_s%llu", entropy_weight, static_cast<unsigned long long>(seed))).string();
    fs::create_directories(config.out_dir);

    DeskRun run;
    run.seed = seed;
    run.entropy_weight = entropy_weight;
    const auto start = std::chrono::steady_clock::now();
    try {
        std::ofstream log(fs::path(config.out_dir) / "train.log");
        Trainer trainer(config, load_dataset(config.data));
        const RunReport report = trainer.train(&log);
        run.eval = report.final_eval;
    } catch (const DivergenceError& e) {
        run.diverged = true;
        note(std::string("diverged: ") + e.what());
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& sizes = run.eval.metrics.cluster_sizes;
    if (!sizes.empty() && run.eval.metrics.n > 0) {
        run.largest_share =
            static_cast<double>(*std::max_element(sizes.begin(), sizes.end())) / static_cast<double>(run.eval.metrics.n);
    }
    note(fmt("desk seed %llu entropy_weight %g: nmi %.4f acc %.4f ari %.4f mass entropy %.4f largest cluster %.3f (%.0fs)",
             static_cast<unsigned long long>(seed), entropy_weight, run.eval.metrics.nmi, run.eval.metrics.acc,
             run.eval.metrics.ari, run.eval.mass_entropy, run.largest_share, run.seconds));
    cache[key] = run;
    return run;
}

Outcome entropy_guard() {
    const double k = TrainConfig::desk().model.projector.clusters;
    const double floor = 0.5 * std::log(k);
    bool guarded = true;
    std::string with, without;
    for (uint64_t seed : kDeskSeeds) {
        const DeskRun r = desk_run(seed, 1.0);
        guarded = guarded && !r.diverged && r.eval.mass_entropy >= floor;
        with += fmt(" %.3f", r.eval.mass_entropy);
    }
    // One collapsed seed settles the second half.
    bool collapsed = false;
    for (uint64_t seed : kDeskSeeds) {
        const DeskRun r = desk_run(seed, 0.0);
        without += fmt(" %.3f", r.largest_share);
        if (!r.diverged && r.largest_share >= 0.6) {
            collapsed = true;
            break;
        }
    }
    Outcome o;
    o.passed = guarded && collapsed;
    o.detail = fmt("mass entropy with term [%s ] vs floor %.3f; largest cluster share without term [%s ] vs 0.600",
                   with.c_str(), floor, without.c_str());
    return o;
}

Outcome end_to_end() {
    std::vector<double> nmis, accs;
    bool finished = true, in_time = true;
    for (uint64_t seed : kDeskSeeds) {
        const DeskRun r = desk_run(seed, 1.0);
        finished = finished && !r.diverged;
        in_time = in_time && r.seconds <= 45 * 60;
        nmis.push_back(r.eval.metrics.nmi);
        accs.push_back(r.eval.metrics.acc);
    }
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    Outcome o;
    o.passed = finished && in_time && median(nmis) >= 0.70 && median(accs) >= 0.75;
    o.detail = fmt("200 epochs x 3 seeds: median NMI %.4f (>= 0.70), median ACC %.4f (>= 0.75)", median(nmis),
                   median(accs));
    return o;
}

bool complete_report(const MetricsReport& m, int64_t n, int clusters) {
    int64_t total = 0;
    for (int64_t s : m.cluster_sizes) total += s;
    const auto in = [](double x, double lo, double hi) { return std::isfinite(x) && x >= lo && x <= hi; };
    return m.n == n && total == n && static_cast<int>(m.cluster_sizes.size()) == clusters && in(m.nmi, 0, 1) &&
           in(m.acc, 0, 1) && in(m.ari, -1, 1);
}

Outcome stems_and_ablations() {
    // Matched stems: patch size equals the convolutional downsampling factor.
    int token_mismatches = 0, pairs = 0;
    for (auto [side, blocks] : {std::pair{32, 1}, {32, 2}, {32, 3}, {64, 2}, {224, 4}}) {
        StemConfig conv;
        conv.kind = StemKind::kConvolutional;
        conv.conv_blocks = blocks;
        conv.embed_dim = 16;
        StemConfig patch = conv;
        patch.kind = StemKind::kPatchify;
        patch.patch_size = conv.downsample();
        SeededRng rng(5);
        auto a = Stem<float>::create(conv, rng);
        auto b = Stem<float>::create(patch, rng);
        const auto images = TensorF::zeros({1, 3, side, side});
        NoGradGuard guard;
        token_mismatches += a(images, NormMode::kEval).dim(1) != b(images, NormMode::kEval).dim(1);
        ++pairs;
    }

    const Dataset data = load_dataset(TrainConfig::desk().data);
    std::string stems;
    bool stems_ok = true;
    for (StemKind kind : {StemKind::kConvolutional, StemKind::kPatchify}) {
        TrainConfig config = TrainConfig::desk();
        config.model.stem.kind = kind;
        config.model.stem.patch_size = config.model.stem.downsample();
        config.epochs = 20;
        config.seed = 21;
        config.checkpoint_every = 0;
        config.out_dir = (work_dir() / ("stem_" + to_string(kind))).string();
        try {
            const RunReport report = Trainer(config, data).train();
            const double last = report.epochs.back().total_loss;
            stems_ok = stems_ok && std::isfinite(last) && static_cast<int>(report.epochs.size()) == 20;
            stems += fmt(" %s loss %.3f->%.3f nmi %.3f;", to_string(kind).c_str(), report.epochs.front().total_loss,
                         last, report.final_eval.metrics.nmi);
        } catch (const DivergenceError& e) {
            stems_ok = false;
            stems += " " + to_string(kind) + " diverged;";
        }
    }

    std::string modes;
    bool modes_ok = true;
    for (ProjectorMode mode : {ProjectorMode::kInstanceOnly, ProjectorMode::kClusterOnly, ProjectorMode::kBoth}) {
        TrainConfig config = TrainConfig::desk();
        config.projectors = mode;
        config.epochs = 5;
        config.seed = 22;
        config.checkpoint_every = 0;
        config.out_dir = (work_dir() / ("mode_" + to_string(mode))).string();
        try {
            const RunReport report = Trainer(config, data).train();
            const bool ok = report.has_metrics &&
                            complete_report(report.final_eval.metrics, data.size(), config.model.projector.clusters);
            modes_ok = modes_ok && ok;
            modes += fmt(" %s nmi %.3f%s;", to_string(mode).c_str(), report.final_eval.metrics.nmi,
                         ok ? "" : " incomplete");
        } catch (const std::exception& e) {
            modes_ok = false;
            modes += " " + to_string(mode) + " failed: " + e.what() + ";";
        }
    }

    Outcome o;
    o.passed = token_mismatches == 0 && stems_ok && modes_ok;
    o.detail = fmt("token count mismatches %d/%d; 20 epochs:%s ablations:%s", token_mismatches, pairs, stems.c_str(),
                   modes.c_str());
    return o;
}

Outcome determinism_and_persistence() {
    const Dataset data = load_dataset(TrainConfig::desk().data);
    TrainConfig config = TrainConfig::desk();
    config.seed = 31;
    config.checkpoint_every = 0;
    config.out_dir = (work_dir() / "determinism").string();
    fs::create_directories(config.out_dir);

    // Two independent runs of 10 steps.
    Trainer first(config, data), second(config, data);
    bool repeatable = true;
    for (int i = 0; i < 10; ++i) repeatable = repeatable && same_stats(first.step(), second.step());
    const auto first_params = parameter_values(first.model());
    const auto second_params = parameter_values(second.model());
    for (size_t i = 0; i < first_params.size(); ++i) repeatable = repeatable && same_bits(first_params[i], second_params[i]);

    // Checkpoint round trip.
    const fs::path ckpt = fs::path(config.out_dir) / "step10.ckpt";
    first.save(ckpt);
    LoadedModel loaded = load_model(ckpt);
    bool round_trip = true;
    const auto batch = eval_batch(data, 0, 64, config);
    for (NormMode mode : {NormMode::kEval, NormMode::kTrain}) {
        NoGradGuard guard;
        const auto a = first.model().forward(batch, mode);
        const auto b = loaded.model.forward(batch, mode);
        for (const auto& [x, y] : {std::pair{a.h, b.h}, {a.z, b.z}, {a.y, b.y}}) {
            round_trip = round_trip && same_bits(std::vector<float>(x.data().begin(), x.data().end()), y.data());
        }
    }

    // Interrupted at step 5, resumed, compared across an epoch boundary.
    const int total = static_cast<int>(first.batches_per_epoch()) + 4;
    Trainer straight(config, data), head(config, data);
    std::vector<StepStats> expected;
    for (int i = 0; i < total; ++i) expected.push_back(straight.step());
    for (int i = 0; i < 5; ++i) head.step();
    const fs::path split = fs::path(config.out_dir) / "split.ckpt";
    head.save(split);
    Trainer tail = Trainer::resume(split, data);
    bool resumed = true;
    for (int i = 5; i < total; ++i) resumed = resumed && same_stats(tail.step(), expected[static_cast<size_t>(i)]);
    const auto straight_params = parameter_values(straight.model());
    const auto tail_params = parameter_values(tail.model());
    for (size_t i = 0; i < straight_params.size(); ++i) resumed = resumed && same_bits(straight_params[i], tail_params[i]);
    const auto& ma = straight.optimizer(), &mb = tail.optimizer();
    resumed = resumed && ma.step_count == mb.step_count && ma.m.size() == mb.m.size();
    for (size_t i = 0; resumed && i < ma.m.size(); ++i) {
        resumed = same_bits(std::vector<float>(ma.m[i].begin(), ma.m[i].end()), mb.m[i]) &&
                  same_bits(std::vector<float>(ma.v[i].begin(), ma.v[i].end()), mb.v[i]);
    }

    Outcome o;
    o.passed = thread_count() == 1 && repeatable && round_trip && resumed;
    o.detail = fmt("threads %d; 10-step repeat %s; round trip %s; resume at 5 of %d steps %s", thread_count(),
                   repeatable ? "bit-identical" : "DIFFERS", round_trip ? "bit-exact" : "DIFFERS", total,
                   resumed ? "identical" : "DIFFERS");
    return o;
}

Outcome unsupervised_firewall() {
    const Dataset labeled = load_dataset(TrainConfig::desk().data);
    TrainConfig config = TrainConfig::desk();
    config.seed = 41;
    config.epochs = 3;
    config.checkpoint_every = 0;
    config.out_dir = (work_dir() / "firewall").string();

    Trainer(config, labeled).train();
    const std::string with_labels = slurp(fs::path(config.out_dir) / "final.ckpt");
    fs::remove(fs::path(config.out_dir) / "final.ckpt");
    Trainer(config, labeled.without_labels()).train();
    const std::string stripped = slurp(fs::path(config.out_dir) / "final.ckpt");

    Outcome o;
    o.passed = !with_labels.empty() && with_labels == stripped;
    o.detail = fmt("3 epochs, final checkpoints of %zu bytes %s", with_labels.size(),
                   o.passed ? "bit-identical" : "DIFFER");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"loss-oracle equivalence", loss_oracles},
        {"metric-oracle equivalence", metric_oracles},
        {"entropy guard", entropy_guard},
        {"end-to-end desk clustering", end_to_end},
        {"stem parity and ablation plumbing", stems_and_ablations},
        {"determinism and persistence", determinism_and_persistence},
        {"unsupervised firewall", unsupervised_firewall},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << "criterion " << id << " " << (o.passed ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
                  << o.detail << fmt(" [%.0fs]", seconds) << std::endl;
        failed += !o.passed;
    }
    return failed == 0 ? 0 : 1;
}
