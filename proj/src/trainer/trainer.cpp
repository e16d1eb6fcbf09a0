#include "vtcc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "vtcc/augment.hpp"
#include "vtcc/losses.hpp"
#include "vtcc/ops.hpp"
#include "vtcc/parallel.hpp"
#include "vtcc/rng.hpp"

namespace vtcc {

namespace {

using Clock = std::chrono::steady_clock;
using CkKind = CheckpointError::Kind;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<uint32_t> dims_of(const Shape& shape) {
    std::vector<uint32_t> dims;
    for (int64_t d : shape) dims.push_back(static_cast<uint32_t>(d));
    return dims;
}

template <typename Span>
void copy_record(const CheckpointRecord& r, const std::vector<uint32_t>& dims, Span out) {
    if (r.dims != dims || r.values.size() != out.size()) {
        throw CheckpointError(CkKind::kFormat, "record " + r.name + " does not match the model geometry");
    }
    std::copy(r.values.begin(), r.values.end(), out.begin());
}

Image eval_image(const Dataset& data, int64_t index, const TrainConfig& config) {
    const Image img = resize(to_rgb(data.image(index)), config.model.image_side);
    return normalize(img, config.augment.norm_mean, config.augment.norm_std);
}

void check_geometry(const Dataset& data, const TrainConfig& config) {
    if (data.size() == 0) throw DatasetError("empty dataset");
    if (data.channels != 1 && data.channels != 3) {
        throw DatasetError("geometry mismatch: records have " + std::to_string(data.channels) +
                           " channels, expected 1 or 3");
    }
    if (config.model.stem.in_channels != 3) {
        throw ConfigError("model.in_channels must be 3 (images are expanded to RGB)");
    }
}

double entropy_of(std::span<const double> mass) {
    double h = 0.0;
    for (double p : mass) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

}  // namespace

Tensor<float> eval_batch(const Dataset& data, int64_t begin, int64_t end, const TrainConfig& config) {
    std::vector<Image> images(static_cast<size_t>(end - begin));
    parallel_for(end - begin, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) images[static_cast<size_t>(i)] = eval_image(data, begin + i, config);
    });
    return stack_images(images);
}

Embeddings infer(VtccModel<float>& model, const Dataset& data, const TrainConfig& config) {
    check_geometry(data, config);
    NoGradGuard no_grad;
    Embeddings emb;
    emb.n = data.size();
    emb.clusters = config.model.projector.clusters;
    emb.dim = config.model.projector.instance_out_dim;
    emb.labels = data.labels;
    const int64_t chunk = std::max(1, config.eval_batch_size);
    for (int64_t begin = 0; begin < emb.n; begin += chunk) {
        const int64_t end = std::min(emb.n, begin + chunk);
        const auto out = model.forward(eval_batch(data, begin, end, config), NormMode::kEval);
        emb.probabilities.insert(emb.probabilities.end(), out.y.data().begin(), out.y.data().end());
        emb.instance.insert(emb.instance.end(), out.z.data().begin(), out.z.data().end());
    }
    const int k = emb.clusters;
    if (config.projectors == ProjectorMode::kInstanceOnly) {
        std::vector<double> points(emb.instance.begin(), emb.instance.end());
        for (int64_t i = 0; i < emb.n; ++i) {
            double norm = 0.0;
            for (int j = 0; j < emb.dim; ++j) norm += points[i * emb.dim + j] * points[i * emb.dim + j];
            norm = std::max(std::sqrt(norm), 1e-12);
            for (int j = 0; j < emb.dim; ++j) points[i * emb.dim + j] /= norm;
        }
        emb.assignments = kmeans(points, emb.n, emb.dim, k, SeededRng::derive(config.seed, {4})).labels;
        std::fill(emb.probabilities.begin(), emb.probabilities.end(), 0.0f);
        for (int64_t i = 0; i < emb.n; ++i) emb.probabilities[i * k + emb.assignments[i]] = 1.0f;
    } else {
        emb.assignments.resize(static_cast<size_t>(emb.n));
        for (int64_t i = 0; i < emb.n; ++i) {
            const float* row = emb.probabilities.data() + i * k;
            emb.assignments[i] = static_cast<int>(std::max_element(row, row + k) - row);
        }
    }
    return emb;
}

double mass_entropy(const Embeddings& emb) {
    std::vector<double> mass(static_cast<size_t>(emb.clusters), 0.0);
    for (int64_t i = 0; i < emb.n; ++i) {
        for (int j = 0; j < emb.clusters; ++j) mass[j] += emb.probabilities[i * emb.clusters + j];
    }
    for (double& m : mass) m /= static_cast<double>(emb.n);
    return entropy_of(mass);
}

EvalReport evaluate(VtccModel<float>& model, const Dataset& data, const TrainConfig& config) {
    if (!data.has_labels()) throw ContractError("evaluation needs a labeled dataset");
    const Embeddings emb = infer(model, data, config);
    EvalReport report;
    report.metrics = evaluate_clustering(emb.assignments, data.labels, emb.clusters);
    report.mass_entropy = mass_entropy(emb);
    report.assignments = emb.assignments;
    return report;
}

void export_embeddings(const Embeddings& emb, const std::filesystem::path& path) {
    const bool labeled = std::all_of(emb.labels.begin(), emb.labels.end(), [](int l) { return l >= 0; }) &&
                         static_cast<int64_t>(emb.labels.size()) == emb.n;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "index";
    if (labeled) out << "\tlabel";
    for (int j = 0; j < emb.clusters; ++j) out << "\tp" << j;
    for (int j = 0; j < emb.dim; ++j) out << "\tz" << j;
    out << '\n';
    char buf[32];
    for (int64_t i = 0; i < emb.n; ++i) {
        out << i;
        if (labeled) out << '\t' << emb.labels[i];
        for (int j = 0; j < emb.clusters; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", emb.probabilities[i * emb.clusters + j]);
            out << '\t' << buf;
        }
        for (int j = 0; j < emb.dim; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", emb.instance[i * emb.dim + j]);
            out << '\t' << buf;
        }
        out << '\n';
    }
    if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

Embeddings import_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
    Embeddings emb;
    bool labeled = false;
    {
        std::istringstream header(line);
        std::string col;
        while (std::getline(header, col, '\t')) {
            if (col == "label") labeled = true;
            if (!col.empty() && col[0] == 'p') ++emb.clusters;
            if (!col.empty() && col[0] == 'z') ++emb.dim;
        }
    }
    if (emb.clusters == 0) throw std::runtime_error(path.string() + ": no probability columns");
    while (std::getline(in, line)) {
        std::istringstream row(line);
        int64_t index;
        row >> index;
        int label = -1;
        if (labeled) row >> label;
        emb.labels.push_back(label);
        int best = 0;
        for (int j = 0; j < emb.clusters; ++j) {
            float p;
            row >> p;
            emb.probabilities.push_back(p);
            if (p > emb.probabilities[emb.n * emb.clusters + best]) best = j;
        }
        for (int j = 0; j < emb.dim; ++j) {
            float z;
            row >> z;
            emb.instance.push_back(z);
        }
        if (!row) throw std::runtime_error(path.string() + ": malformed row " + std::to_string(emb.n));
        emb.assignments.push_back(best);
        ++emb.n;
    }
    return emb;
}

void append_model_records(VtccModel<float>& model, CheckpointFile& file) {
    for (auto& [name, p] : model.named_parameters()) {
        file.records.push_back({"param." + name, dims_of(p.shape()), {p.data().begin(), p.data().end()}});
    }
    for (auto& [name, buf] : model.named_buffers()) {
        file.records.push_back({"buffer." + name, {static_cast<uint32_t>(buf->size())}, *buf});
    }
}

void restore_model(const CheckpointFile& file, VtccModel<float>& model) {
    for (auto& [name, p] : model.named_parameters()) {
        copy_record(file.require("param." + name), dims_of(p.shape()), p.mutable_data());
    }
    for (auto& [name, buf] : model.named_buffers()) {
        copy_record(file.require("buffer." + name), {static_cast<uint32_t>(buf->size())}, std::span<float>(*buf));
    }
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
    const CheckpointFile file = read_checkpoint(checkpoint);
    TrainConfig config = parse_config_text(file.config_text);
    auto model = VtccModel<float>::create(config.model, SeededRng::derive(config.seed, {1}));
    restore_model(file, model);
    return {std::move(config), std::move(model)};
}

std::string RunReport::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = config.seed;
    j["projectors"] = to_string(config.projectors);
    j["epochs_planned"] = config.epochs;
    j["epochs_completed"] = progress.epoch;
    j["steps"] = progress.step;
    j["resumed"] = resumed;
    j["seconds"] = seconds;
    auto& hist = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
        hist.push_back({{"epoch", e.epoch},
                        {"steps", e.steps},
                        {"instance_loss", e.instance_loss},
                        {"cluster_loss", e.cluster_loss},
                        {"total_loss", e.total_loss},
                        {"entropy", e.entropy},
                        {"seconds", e.seconds}});
    }
    if (has_metrics) {
        j["final"] = {{"nmi", final_eval.metrics.nmi},
                      {"acc", final_eval.metrics.acc},
                      {"ari", final_eval.metrics.ari},
                      {"mass_entropy", final_eval.mass_entropy},
                      {"cluster_sizes", final_eval.metrics.cluster_sizes},
                      {"n", final_eval.metrics.n}};
    }
    j["checkpoints"] = checkpoints;
    j["assignments"] = assignments_path;
    j["config"] = config.to_text();
    return j.dump(2);
}

Trainer::Trainer(TrainConfig config, Dataset data)
    : Trainer(config, std::move(data), VtccModel<float>::create(config.model, SeededRng::derive(config.seed, {1}))) {}

Trainer::Trainer(TrainConfig config, Dataset data, VtccModel<float> model)
    : config_(std::move(config)), data_(std::move(data)), model_(std::move(model)) {
    config_.augment.output_side = config_.model.image_side;
    config_.validate();
    check_geometry(data_, config_);
    if (data_.size() < config_.batch_size) {
        throw ConfigError("train.batch_size " + std::to_string(config_.batch_size) + " exceeds the dataset size " +
                          std::to_string(data_.size()));
    }
    adam_.lr = static_cast<float>(config_.optim.lr);
    adam_.beta1 = static_cast<float>(config_.optim.beta1);
    adam_.beta2 = static_cast<float>(config_.optim.beta2);
    adam_.eps = static_cast<float>(config_.optim.eps);
    adam_.validate();
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, Dataset data, const TrainConfig* overrides) {
    const CheckpointFile file = read_checkpoint(checkpoint);
    TrainConfig config = parse_config_text(file.config_text);
    if (overrides) {
        config.epochs = overrides->epochs;
        config.out_dir = overrides->out_dir;
        config.checkpoint_every = overrides->checkpoint_every;
        config.eval_every = overrides->eval_every;
    }
    auto model = VtccModel<float>::create(config.model, SeededRng::derive(config.seed, {1}));
    restore_model(file, model);
    Trainer t(std::move(config), std::move(data), std::move(model));
    const auto progress = file.require("meta.progress").as_words();
    if (progress.size() != 3) throw CheckpointError(CkKind::kFormat, "meta.progress holds 3 counters");
    t.progress_ = {static_cast<int>(progress[0]), static_cast<int64_t>(progress[1]), static_cast<int64_t>(progress[2])};
    if (t.progress_.batch >= t.batches_per_epoch()) {
        throw CheckpointError(CkKind::kFormat, "checkpoint batch counter exceeds the batches per epoch");
    }
    t.adam_.step_count = static_cast<int64_t>(file.require("optim.step_count").as_words().at(0));
    if (t.adam_.step_count > 0) {
        for (auto& [name, p] : t.trainable()) {
            t.adam_.m.emplace_back(p.data().size());
            t.adam_.v.emplace_back(p.data().size());
            copy_record(file.require("optim.m." + name), dims_of(p.shape()), std::span<float>(t.adam_.m.back()));
            copy_record(file.require("optim.v." + name), dims_of(p.shape()), std::span<float>(t.adam_.v.back()));
        }
    }
    t.resumed_ = true;
    return t;
}

std::vector<std::pair<std::string, Tensor<float>>> Trainer::trainable() {
    auto all = model_.named_parameters();
    const char* skip = config_.projectors == ProjectorMode::kInstanceOnly  ? "cluster_head."
                       : config_.projectors == ProjectorMode::kClusterOnly ? "instance_head."
                                                                            : nullptr;
    if (!skip) return all;
    std::vector<std::pair<std::string, Tensor<float>>> out;
    for (auto& np : all) {
        if (np.first.rfind(skip, 0) != 0) out.push_back(std::move(np));
    }
    return out;
}

int64_t Trainer::batches_per_epoch() const { return data_.size() / config_.batch_size; }

std::vector<int64_t> Trainer::batch_indices(int epoch, int64_t batch) const {
    std::vector<int64_t> order(static_cast<size_t>(data_.size()));
    std::iota(order.begin(), order.end(), int64_t{0});
    SeededRng rng(SeededRng::derive(config_.seed, {2, static_cast<uint64_t>(epoch)}));
    rng.shuffle(order.begin(), order.end());
    const auto first = order.begin() + batch * config_.batch_size;
    return {first, first + config_.batch_size};
}

StepStats Trainer::step() {
    StepStats stats;
    stats.step = progress_.step;
    stats.epoch = progress_.epoch;
    stats.batch = progress_.batch;
    const auto indices = batch_indices(progress_.epoch, progress_.batch);
    const auto n = static_cast<int64_t>(indices.size());

    std::vector<Image> view_a(indices.size()), view_b(indices.size());
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const auto idx = static_cast<uint64_t>(indices[i]);
            const uint64_t seed = SeededRng::derive(config_.seed, {3, static_cast<uint64_t>(progress_.epoch), idx});
            std::tie(view_a[i], view_b[i]) = generate_view_pair(data_.image(indices[i]), config_.augment, seed);
        }
    });

    std::vector<std::vector<float>> saved_buffers;
    for (auto& [name, buf] : model_.named_buffers()) saved_buffers.push_back(*buf);
    auto restore_buffers = [&] {
        size_t i = 0;
        for (auto& [name, buf] : model_.named_buffers()) *buf = saved_buffers[i++];
    };

    auto params = trainable();
    for (auto& [name, p] : params) p.node()->grad.clear();

    const auto out_a = model_.forward(stack_images(view_a), NormMode::kTrain);
    const auto out_b = model_.forward(stack_images(view_b), NormMode::kTrain);
    const ProjectorMode mode = config_.projectors;
    const std::string where = " at step " + std::to_string(stats.step);
    Tensor<float> loss;
    std::string failure;
    try {
        Tensor<float> l_ins, l_clu;
        if (mode != ProjectorMode::kClusterOnly) {
            l_ins = instance_contrastive_loss(out_a.z, out_b.z, config_.loss);
            stats.instance_loss = l_ins.item();
        }
        auto parts = cluster_loss_parts(out_a.y, out_b.y, config_.loss);
        stats.entropy_a = parts.entropy_a.item();
        stats.entropy_b = parts.entropy_b.item();
        if (mode != ProjectorMode::kInstanceOnly) {
            l_clu = parts.total;
            stats.cluster_loss = l_clu.item();
        }
        if (mode == ProjectorMode::kBoth) {
            try {
                loss = total_loss(l_ins, l_clu);
            } catch (const DiagnosticsError& e) {
                failure = e.what();
                loss = l_ins + l_clu;
            }
        } else {
            loss = mode == ProjectorMode::kInstanceOnly ? l_ins : l_clu;
        }
    } catch (const NumericError& e) {
        restore_buffers();
        stats.total_loss = std::numeric_limits<double>::quiet_NaN();
        // No graph to differentiate: every gradient norm is unknown.
        std::vector<ParamGradNorm> norms;
        for (auto& [name, p] : params) norms.push_back({name, std::numeric_limits<double>::quiet_NaN()});
        throw DivergenceError(std::string(e.what()) + where, stats, std::move(norms));
    }
    stats.total_loss = loss.item();
    if (failure.empty() && !std::isfinite(stats.total_loss)) failure = "non-finite loss";

    // Gradients are still computed for a bad loss so the diagnostics carry them.
    backward(loss);

    std::vector<ParamGradNorm> norms;
    double total = 0.0;
    bool finite = true;
    std::vector<Tensor<float>> tensors;
    for (auto& [name, p] : params) {
        if (!p.has_grad()) p.zero_grad();
        double sq = 0.0;
        for (float g : p.grad()) sq += static_cast<double>(g) * g;
        norms.push_back({name, std::sqrt(sq)});
        finite = finite && std::isfinite(sq);
        total += sq;
        tensors.push_back(p);
    }
    stats.grad_norm = std::sqrt(total);
    if (failure.empty() && !finite) failure = "non-finite gradient";
    if (!failure.empty()) {
        restore_buffers();
        throw DivergenceError(failure + where, stats, std::move(norms));
    }
    adam_step<float>(tensors, adam_);

    ++progress_.step;
    if (++progress_.batch == batches_per_epoch()) {
        ++progress_.epoch;
        progress_.batch = 0;
    }
    return stats;
}

EpochStats Trainer::run_epoch() {
    const auto start = Clock::now();
    EpochStats e;
    e.epoch = progress_.epoch + 1;
    while (progress_.epoch + 1 == e.epoch) {
        const StepStats s = step();
        ++e.steps;
        e.instance_loss += s.instance_loss;
        e.cluster_loss += s.cluster_loss;
        e.total_loss += s.total_loss;
        e.entropy += 0.5 * (s.entropy_a + s.entropy_b);
    }
    const double steps = static_cast<double>(e.steps);
    e.instance_loss /= steps;
    e.cluster_loss /= steps;
    e.total_loss /= steps;
    e.entropy /= steps;
    e.seconds = seconds_since(start);
    return e;
}

CheckpointFile Trainer::checkpoint() {
    CheckpointFile file;
    file.config_text = config_.to_text();
    append_model_records(model_, file);
    file.records.push_back(CheckpointRecord::words("optim.step_count", {static_cast<uint64_t>(adam_.step_count)}));
    if (!adam_.m.empty()) {
        size_t i = 0;
        for (auto& [name, p] : trainable()) {
            file.records.push_back({"optim.m." + name, dims_of(p.shape()), adam_.m[i]});
            file.records.push_back({"optim.v." + name, dims_of(p.shape()), adam_.v[i]});
            ++i;
        }
    }
    file.records.push_back(CheckpointRecord::words(
        "meta.progress", {static_cast<uint64_t>(progress_.epoch), static_cast<uint64_t>(progress_.batch),
                          static_cast<uint64_t>(progress_.step)}));
    file.records.push_back(CheckpointRecord::words("rng.seed", {config_.seed}));
    return file;
}

void Trainer::save(const std::filesystem::path& path) { write_checkpoint(checkpoint(), path); }

EvalReport Trainer::evaluate_now() { return evaluate(model_, data_, config_); }

Embeddings Trainer::infer_now() { return infer(model_, data_, config_); }

RunReport Trainer::train(std::ostream* log) {
    const auto start = Clock::now();
    const std::filesystem::path out(config_.out_dir);
    std::filesystem::create_directories(out);
    RunReport report;
    report.config = config_;
    report.resumed = resumed_;
    auto save_as = [&](const std::string& name) {
        save(out / name);
        report.checkpoints.push_back((out / name).string());
    };
    while (progress_.epoch < config_.epochs) {
        EpochStats e;
        try {
            e = run_epoch();
        } catch (const DivergenceError& err) {
            save(out / "last_good.ckpt");
            nlohmann::ordered_json d;
            d["error"] = err.what();
            d["step"] = err.stats.step;
            d["epoch"] = err.stats.epoch;
            d["batch"] = err.stats.batch;
            auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
            d["instance_loss"] = finite_or_null(err.stats.instance_loss);
            d["cluster_loss"] = finite_or_null(err.stats.cluster_loss);
            d["total_loss"] = finite_or_null(err.stats.total_loss);
            d["grad_norm"] = finite_or_null(err.stats.grad_norm);
            auto& grads = d["grad_norms"] = nlohmann::ordered_json::object();
            for (const auto& g : err.grad_norms) grads[g.name] = finite_or_null(g.norm);
            d["last_good_checkpoint"] = (out / "last_good.ckpt").string();
            std::ofstream(out / "diagnostics.json") << d.dump(2) << '\n';
            if (log) *log << "diverged: " << err.what() << "; state saved to " << (out / "last_good.ckpt").string() << '\n';
            throw;
        }
        report.epochs.push_back(e);
        if (log) {
            *log << "epoch " << e.epoch << "/" << config_.epochs << " loss=" << e.total_loss
                 << " ins=" << e.instance_loss << " clu=" << e.cluster_loss << " H=" << e.entropy << " ("
                 << e.seconds << "s)\n";
        }
        const bool last = progress_.epoch == config_.epochs;
        if (config_.checkpoint_every > 0 && e.epoch % config_.checkpoint_every == 0 && !last) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04d.ckpt", e.epoch);
            save_as(name);
        }
        if (config_.eval_every > 0 && e.epoch % config_.eval_every == 0 && !last && data_.has_labels() && log) {
            const EvalReport r = evaluate_now();
            *log << "eval epoch " << e.epoch << " nmi=" << r.metrics.nmi << " acc=" << r.metrics.acc
                 << " ari=" << r.metrics.ari << '\n';
        }
    }
    save_as("final.ckpt");
    report.progress = progress_;
    std::vector<int> assignments;
    if (data_.has_labels()) {
        report.final_eval = evaluate_now();
        report.has_metrics = true;
        assignments = report.final_eval.assignments;
        if (log) {
            *log << "final nmi=" << report.final_eval.metrics.nmi << " acc=" << report.final_eval.metrics.acc
                 << " ari=" << report.final_eval.metrics.ari << '\n';
        }
    } else {
        assignments = infer_now().assignments;
    }
    report.assignments_path = (out / "assignments.tsv").string();
    {
        std::ofstream a(report.assignments_path);
        a << "index\tcluster\n";
        for (size_t i = 0; i < assignments.size(); ++i) a << i << '\t' << assignments[i] << '\n';
    }
    report.seconds = seconds_since(start);
    std::ofstream(out / "run_report.json") << report.to_json() << '\n';
    return report;
}

}  // namespace vtcc
