#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vtcc/config.hpp"

using namespace vtcc;

TEST_CASE("desk profile") {
    const TrainConfig c = TrainConfig::desk();
    CHECK(c.model.image_side == 32);
    CHECK(c.model.embed_dim() == 64);
    CHECK(c.model.encoder.depth == 2);
    CHECK(c.model.encoder.heads == 4);
    CHECK(c.model.stem.kind == StemKind::kConvolutional);
    CHECK(c.model.stem.conv_blocks == 2);
    CHECK(c.model.projector.instance_out_dim == 32);
    CHECK(c.model.projector.clusters == 4);
    CHECK(c.batch_size == 64);
    CHECK(c.epochs == 200);
    CHECK(c.optim.lr == 3e-4);
    CHECK(c.loss.tau_instance == 0.5);
    CHECK(c.loss.tau_cluster == 1.0);
    CHECK(c.loss.entropy_weight == 1.0);
    CHECK(c.augment.output_side == 32);
    CHECK(c.projectors == ProjectorMode::kBoth);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("large profile") {
    const TrainConfig c = TrainConfig::large();
    CHECK(c.model.image_side == 224);
    CHECK(c.model.embed_dim() == 384);
    CHECK(c.model.encoder.depth == 8);
    CHECK(c.model.encoder.heads == 12);
    CHECK(c.model.projector.instance_out_dim == 128);
    CHECK(c.batch_size == 128);
    CHECK(c.epochs == 1000);
    CHECK(c.optim.lr == 3e-4);
    CHECK(c.augment.output_side == 224);
    CHECK(c.data.kind == DatasetKind::kImageDir);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("text form round trips exactly") {
    TrainConfig c = TrainConfig::desk();
    c.optim.lr = 1.0 / 3.0;
    c.loss.tau_instance = 0.1 + 0.2;
    c.seed = 18446744073709551615ull;
    c.projectors = ProjectorMode::kInstanceOnly;
    c.augment.norm_mean = {0.485f, 0.456f, 0.406f};
    c.augment.norm_std = {0.229f, 0.224f, 0.225f};
    c.data.kind = DatasetKind::kBinaryRecords;
    c.data.path = "some/data.bin";
    c.model.stem.kind = StemKind::kPatchify;
    c.model.encoder.pos_encoding = PosEncoding::kSinusoidal;
    c.model.encoder.pool = Pooling::kClsToken;
    const std::string text = c.to_text();
    const TrainConfig back = parse_config_text(text);
    CHECK(back.to_text() == text);
    CHECK(back.optim.lr == c.optim.lr);
    CHECK(back.loss.tau_instance == c.loss.tau_instance);
    CHECK(back.seed == c.seed);
    CHECK(back.projectors == ProjectorMode::kInstanceOnly);
    CHECK(back.augment.norm_mean == c.augment.norm_mean);
    CHECK(back.model.stem.kind == StemKind::kPatchify);
    CHECK(back.data.path == "some/data.bin");
    CHECK(TrainConfig::large().to_text() == parse_config_text(TrainConfig::large().to_text()).to_text());
}

TEST_CASE("every key appears in the text form") {
    const std::string text = TrainConfig::desk().to_text();
    for (const auto& key : config_keys()) CHECK(text.find(key + "=") != std::string::npos);
}

TEST_CASE("parsing") {
    SUBCASE("comments, blanks and later lines win") {
        const TrainConfig c = parse_config_text(
            "# desk run\n\n  train.batch_size = 32  # smaller\ntrain.batch_size=16\nloss.entropy_weight=0\n");
        CHECK(c.batch_size == 16);
        CHECK(c.loss.entropy_weight == 0.0);
        CHECK(c.epochs == 200);
    }
    SUBCASE("image side carries the augmentation output side") {
        const TrainConfig c = parse_config_text("model.image_side=64\n");
        CHECK(c.augment.output_side == 64);
    }
    SUBCASE("base profile") {
        const TrainConfig c = parse_config_text("train.epochs=3\n", TrainConfig::large());
        CHECK(c.epochs == 3);
        CHECK(c.model.embed_dim() == 384);
    }
    SUBCASE("errors name the line and key") {
        CHECK_THROWS_WITH_AS(parse_config_text("train.epochs=2\nmodel.depht=3\n"),
                             doctest::Contains("line 2: unknown config key 'model.depht'"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config_text("optim.lr=fast\n"), doctest::Contains("optim.lr"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config_text("train.epochs\n"), doctest::Contains("line 1"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("train.projectors=neither\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("model.stem=hexagonal\n"), ConfigError);
    }
    SUBCASE("file") {
        const auto path = std::filesystem::temp_directory_path() / "vtcc_test_config.cfg";
        std::ofstream(path) << "train.seed=9\n";
        CHECK(load_config_file(path.string()).seed == 9);
        CHECK_THROWS_AS(load_config_file("/nonexistent/x.cfg"), ConfigError);
    }
}

TEST_CASE("invariants") {
    auto invalid = [](const std::string& line) {
        TrainConfig c = parse_config_text(line);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    invalid("train.batch_size=1");
    invalid("model.clusters=1");
    invalid("train.epochs=0");
    invalid("optim.lr=0");
    invalid("loss.tau_instance=0");
    invalid("model.heads=3");
    invalid("data.kind=binary_records");
    invalid("augment.flip_prob=1.5");
    TrainConfig ok = parse_config_text("train.batch_size=2\nmodel.clusters=2\ntrain.epochs=1\n");
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("projector modes") {
    for (auto m : {ProjectorMode::kBoth, ProjectorMode::kInstanceOnly, ProjectorMode::kClusterOnly}) {
        CHECK(parse_projector_mode(to_string(m)) == m);
    }
}

TEST_CASE("shipped config files match the profiles") {
    const std::string root = VTCC_SOURCE_DIR;
    TrainConfig desk = TrainConfig::desk();
    desk.out_dir = "runs/desk";
    CHECK(load_config_file(root + "/configs/desk.cfg").to_text() == desk.to_text());
    CHECK(load_config_file(root + "/configs/large.cfg").to_text() == TrainConfig::large().to_text());
}
