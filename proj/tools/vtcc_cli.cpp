// vtcc: data generation, training, evaluation, embedding export and gradient
// checks from the command line.
//
//   vtcc gen-data --out data.bin [--classes 4 --per-class 128 --side 32 --seed 7]
//   vtcc train --config configs/desk.cfg --seed 1 --out runs/1
//   vtcc eval --ckpt runs/1/final.ckpt --data data.bin
//   vtcc embed --ckpt runs/1/final.ckpt --data data.bin --out emb.tsv
//   vtcc gradcheck
//
// Failures print one line "error: <kind>: <message>" to stderr.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vtcc/checkpoint.hpp"
#include "vtcc/config.hpp"
#include "vtcc/dataset.hpp"
#include "vtcc/gradcheck_suite.hpp"
#include "vtcc/parallel.hpp"
#include "vtcc/trainer.hpp"

namespace fs = std::filesystem;
using namespace vtcc;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A directory is read as one subdirectory per class, a file as binary records,
// and the word "synthetic" regenerates the configured procedural set.
DataSourceConfig data_source(const std::string& arg, DataSourceConfig base) {
    if (arg.empty()) return base;
    if (arg == "synthetic") {
        base.kind = DatasetKind::kSynthetic;
        return base;
    }
    base.kind = fs::is_directory(arg) ? DatasetKind::kImageDir : DatasetKind::kBinaryRecords;
    base.path = arg;
    return base;
}

void apply_overrides(TrainConfig& config, const std::vector<std::string>& settings) {
    for (const auto& s : settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
    }
}

int run_gen_data(const std::string& config_path, const std::vector<std::string>& settings, const std::string& out,
                 std::optional<uint64_t> seed) {
    TrainConfig config = config_path.empty() ? TrainConfig::desk() : load_config_file(config_path);
    apply_overrides(config, settings);
    if (seed) config.data.synthetic.seed = *seed;
    config.data.synthetic.validate();
    const Dataset data = generate_synthetic(config.data.synthetic);
    write_binary_records(data, out);
    std::cout << "records=" << data.size() << "\nclasses=" << data.num_classes() << "\nside=" << data.side
              << "\nout=" << out << '\n';
    return 0;
}

int run_train(const std::string& config_path, const std::vector<std::string>& settings, std::optional<uint64_t> seed,
              const std::string& out, std::optional<int> epochs, const std::string& data_arg,
              const std::string& resume, bool quiet) {
    TrainConfig config = config_path.empty() ? TrainConfig::desk() : load_config_file(config_path);
    apply_overrides(config, settings);
    if (seed) config.seed = *seed;
    if (!out.empty()) config.out_dir = out;
    if (epochs) config.epochs = *epochs;
    config.data = data_source(data_arg, config.data);
    config.validate();
    Dataset data = load_dataset(config.data);
    std::optional<Trainer> trainer;
    if (resume.empty()) {
        trainer.emplace(config, std::move(data));
    } else {
        trainer.emplace(Trainer::resume(resume, std::move(data), &config));
    }
    const RunReport report = trainer->train(quiet ? nullptr : &std::cerr);
    std::cout << "epochs=" << report.progress.epoch << "\nsteps=" << report.progress.step << '\n';
    if (report.has_metrics) {
        std::cout << "nmi=" << report.final_eval.metrics.nmi << "\nacc=" << report.final_eval.metrics.acc
                  << "\nari=" << report.final_eval.metrics.ari << '\n';
    }
    std::cout << "checkpoint=" << report.checkpoints.back() << '\n';
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_arg) {
    LoadedModel loaded = load_model(ckpt);
    const Dataset data = load_dataset(data_source(data_arg, loaded.config.data));
    const EvalReport r = evaluate(loaded.model, data, loaded.config);
    std::printf("nmi=%.6f\nacc=%.6f\nari=%.6f\n", r.metrics.nmi, r.metrics.acc, r.metrics.ari);
    std::printf("mass_entropy=%.6f\nclusters=", r.mass_entropy);
    for (size_t i = 0; i < r.metrics.cluster_sizes.size(); ++i) {
        std::printf("%s%lld", i ? "," : "", static_cast<long long>(r.metrics.cluster_sizes[i]));
    }
    std::printf("\n");
    return 0;
}

int run_embed(const std::string& ckpt, const std::string& data_arg, const std::string& out) {
    LoadedModel loaded = load_model(ckpt);
    const Dataset data = load_dataset(data_source(data_arg, loaded.config.data));
    const Embeddings emb = infer(loaded.model, data, loaded.config);
    export_embeddings(emb, out);
    std::cout << "rows=" << emb.n << "\nout=" << out << '\n';
    return 0;
}

int run_gradcheck(uint64_t seed) {
    const GradCheckSuiteReport report = run_gradcheck_suite(seed);
    for (const auto& r : report.results) {
        std::printf("%-4s %-32s rel_err=%.3e tol=%.0e n=%lld\n", r.passed() ? "ok" : "FAIL", r.name.c_str(),
                    r.max_rel_error, r.tolerance, static_cast<long long>(r.elements));
    }
    std::printf("passed=%d\nseconds=%.2f\n", report.passed() ? 1 : 0, report.seconds);
    return report.passed() ? 0 : kExitFailure;
}

int fail(const std::string& kind, const std::string& message) {
    std::string line = message;
    for (char& c : line) {
        if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << kind << ": " << line << '\n';
    return kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Contrastive clustering with a convolutional-stem ViT"};
    app.require_subcommand(1);

    std::string config_path, out, data_arg, ckpt, resume;
    std::vector<std::string> settings;
    std::optional<uint64_t> seed;
    std::optional<int> epochs;
    uint64_t gradcheck_seed = 0;
    bool quiet = false;

    auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset as binary records");
    gen->add_option("--config", config_path, "Config file (data.* keys)")->check(CLI::ExistingFile);
    gen->add_option("--set", settings, "key=value override, repeatable");
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--out", out, "Output file")->required();

    auto* train = app.add_subcommand("train", "Train a model");
    train->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
    train->add_option("--set", settings, "key=value override, repeatable");
    train->add_option("--seed", seed, "Run seed");
    train->add_option("--out", out, "Output directory");
    train->add_option("--epochs", epochs, "Epoch budget");
    train->add_option("--data", data_arg, "Binary records file, image directory or 'synthetic'");
    train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
    train->add_flag("--quiet", quiet, "No per-epoch log");

    auto* eval = app.add_subcommand("eval", "Cluster a labeled dataset and print NMI, ACC and ARI");
    eval->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data_arg, "Dataset (default: the checkpoint's)");

    auto* embed = app.add_subcommand("embed", "Export cluster probabilities and instance embeddings as TSV");
    embed->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    embed->add_option("--data", data_arg, "Dataset (default: the checkpoint's)");
    embed->add_option("--out", out, "Output TSV")->required();

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference checks of every op and the micro model");
    grad->add_option("--seed", gradcheck_seed, "Input draw seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n\n";
        const CLI::App* failed = &app;
        for (auto* sub : app.get_subcommands()) failed = sub;
        std::cerr << failed->help();
        return kExitUsage;
    }

    try {
        if (*gen) return run_gen_data(config_path, settings, out, seed);
        if (*train) return run_train(config_path, settings, seed, out, epochs, data_arg, resume, quiet);
        if (*eval) return run_eval(ckpt, data_arg);
        if (*embed) return run_embed(ckpt, data_arg, out);
        if (*grad) return run_gradcheck(gradcheck_seed);
    } catch (const UsageError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        return fail("config", e.what());
    } catch (const CheckpointError& e) {
        return fail(e.kind == CheckpointError::Kind::kIntegrity ? "integrity" : "checkpoint", e.what());
    } catch (const DatasetError& e) {
        return fail("data", e.what());
    } catch (const ContractError& e) {
        return fail("contract", e.what());
    } catch (const DivergenceError& e) {
        return fail("diverged", e.what());
    } catch (const std::exception& e) {
        return fail("runtime", e.what());
    }
    return kExitUsage;
}
