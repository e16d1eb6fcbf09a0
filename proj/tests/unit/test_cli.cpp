#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "vtcc_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run vtcc(const std::string& args, const std::string& env = "VTCC_THREADS=1") {
    const fs::path err = scratch() / "stderr.txt";
    const std::string cmd = env + " " + VTCC_CLI_PATH + " " + args + " 2>" + err.string();
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf;
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

// The small run used by most cases: 64 records, batch 16, 2 epochs.
const fs::path& config_file() {
    static const fs::path path = [] {
        const fs::path p = scratch() / "small.cfg";
        std::ofstream(p) << "# small run\ndata.per_class=16\ntrain.batch_size=16\ntrain.epochs=2\n"
                            "train.checkpoint_every=1\n";
        return p;
    }();
    return path;
}

const fs::path& data_file() {
    static const fs::path path = [] {
        const fs::path p = scratch() / "data.bin";
        const Run r = vtcc("gen-data --config " + config_file().string() + " --out " + p.string());
        REQUIRE(r.code == 0);
        return p;
    }();
    return path;
}

const fs::path& trained_run() {
    static const fs::path dir = [] {
        const fs::path d = scratch() / "runs" / "1";
        const Run r = vtcc("train --config " + config_file().string() + " --seed 1 --out " + d.string() +
                           " --data " + data_file().string());
        INFO(r.err);
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
    for (const std::string args : {"train --bogus", "frobnicate", "", "eval --data x.bin"}) {
        CAPTURE(args);
        const Run r = vtcc(args);
        CHECK(r.code == 2);
        CHECK(r.err.rfind("error: usage: ", 0) == 0);
        CHECK(r.err.find("Usage:") != std::string::npos);
    }
    const Run bad_set = vtcc("train --set epochs");
    CHECK(bad_set.code == 2);
}

TEST_CASE("help exits 0") {
    const Run r = vtcc("--help");
    CHECK(r.code == 0);
    CHECK(r.out.find("gen-data") != std::string::npos);
    CHECK(r.out.find("gradcheck") != std::string::npos);
}

TEST_CASE("gen-data") {
    const Run r = vtcc("gen-data --config " + config_file().string() + " --out " + (scratch() / "g.bin").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("records=64\n") != std::string::npos);
    const Run again = vtcc("gen-data --config " + config_file().string() + " --out " + (scratch() / "g2.bin").string());
    CHECK(slurp(scratch() / "g.bin") == slurp(scratch() / "g2.bin"));
    const Run full = vtcc("gen-data --out " + (scratch() / "full.bin").string());
    CHECK(full.out.find("records=512\n") != std::string::npos);
}

TEST_CASE("train writes report and checkpoints") {
    const fs::path dir = trained_run();
    CHECK(fs::exists(dir / "final.ckpt"));
    CHECK(fs::exists(dir / "epoch_0001.ckpt"));
    CHECK(fs::exists(dir / "run_report.json"));
    CHECK(fs::exists(dir / "assignments.tsv"));
}

TEST_CASE("eval prints one metric per line") {
    const Run r = vtcc("eval --ckpt " + (trained_run() / "final.ckpt").string() + " --data " + data_file().string());
    REQUIRE(r.code == 0);
    const auto out = lines(r.out);
    REQUIRE(out.size() >= 3);
    CHECK(out[0].rfind("nmi=", 0) == 0);
    CHECK(out[1].rfind("acc=", 0) == 0);
    CHECK(out[2].rfind("ari=", 0) == 0);
    for (int i = 0; i < 3; ++i) CHECK_NOTHROW(std::stod(out[i].substr(4)));
    const Run again = vtcc("eval --ckpt " + (trained_run() / "final.ckpt").string() + " --data " + data_file().string());
    CHECK(again.out == r.out);
}

TEST_CASE("embed") {
    const fs::path tsv = scratch() / "emb.tsv";
    const Run r = vtcc("embed --ckpt " + (trained_run() / "final.ckpt").string() + " --data " + data_file().string() +
                       " --out " + tsv.string());
    REQUIRE(r.code == 0);
    CHECK(lines(slurp(tsv)).size() == 65);
}

TEST_CASE("resume from a periodic checkpoint reproduces the final checkpoint") {
    const std::string first = slurp(trained_run() / "final.ckpt");
    // Same output directory and config text, so the files must match byte for byte.
    const Run r = vtcc("train --config " + config_file().string() + " --seed 1 --out " + trained_run().string() +
                       " --data " + data_file().string() + " --quiet --resume " +
                       (trained_run() / "epoch_0001.ckpt").string());
    REQUIRE(r.code == 0);
    CHECK(slurp(trained_run() / "final.ckpt") == first);
}

TEST_CASE("results do not depend on the thread count") {
    const fs::path dir = scratch() / "runs" / "threads";
    const Run r = vtcc("train --config " + config_file().string() + " --seed 1 --out " + dir.string() + " --data " +
                           data_file().string() + " --quiet",
                       "VTCC_THREADS=3");
    REQUIRE(r.code == 0);
    const std::string a = slurp(dir / "final.ckpt");
    const std::string b = slurp(trained_run() / "final.ckpt");
    // The config text embeds the output directory; compare the records after it.
    const auto tail = [](const std::string& s) { return s.substr(s.find("param.")); };
    CHECK(tail(a) == tail(b));
}

TEST_CASE("failures print one machine-parsable line") {
    auto one_line = [](const Run& r, const std::string& prefix) {
        CHECK(r.code == 1);
        CHECK(r.err.rfind(prefix, 0) == 0);
        CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    };
    SUBCASE("corrupted checkpoint") {
        std::string bytes = slurp(trained_run() / "final.ckpt");
        bytes[bytes.size() / 2] ^= 0x20;
        const fs::path bad = scratch() / "bad.ckpt";
        std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        one_line(vtcc("eval --ckpt " + bad.string() + " --data " + data_file().string()), "error: integrity: ");
    }
    SUBCASE("bad config key") {
        const fs::path cfg = scratch() / "bad.cfg";
        std::ofstream(cfg) << "train.epochs=1\nmodel.widht=3\n";
        one_line(vtcc("train --config " + cfg.string()), "error: config: line 2: unknown config key");
    }
    SUBCASE("bad override") { one_line(vtcc("train --set train.epochs=0 --quiet"), "error: config: "); }
    SUBCASE("missing data") {
        one_line(vtcc("train --data " + (scratch() / "absent.bin").string() + " --quiet"), "error: data: ");
    }
    SUBCASE("unlabeled evaluation data") {
        std::string bytes = slurp(data_file());
        // Rewrite every label to the unlabeled marker.
        const size_t record = 2 + 32 * 32;
        for (size_t off = 20; off < bytes.size(); off += record) bytes[off] = bytes[off + 1] = static_cast<char>(0xFF);
        const fs::path unlabeled = scratch() / "unlabeled.bin";
        std::ofstream(unlabeled, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        one_line(vtcc("eval --ckpt " + (trained_run() / "final.ckpt").string() + " --data " + unlabeled.string()),
                 "error: contract: ");
    }
}

TEST_CASE("gradcheck subcommand") {
    const Run r = vtcc("gradcheck");
    CHECK(r.code == 0);
    CHECK(r.out.find("passed=1\n") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
}
