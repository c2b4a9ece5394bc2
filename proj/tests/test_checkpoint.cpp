#include <fstream>
#include <iterator>

#include "doctest.h"
#include "helpers.hpp"
#include "sgf/checkpoint.hpp"

using namespace sgf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ErrorCode load_error(const fs::path& p, std::optional<SegmentationScheme> scheme = std::nullopt) {
    try {
        (void)restore_model(load_checkpoint(p, scheme));
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Invariant;
}

}  // namespace

TEST_CASE("save, load and forward is the identity") {
    const auto dir = testing::scratch_dir("checkpoint_roundtrip");
    Rng rng(1);
    EnsembleModel model = build_model(Architecture::Proposed, parse_scheme("v5"), Profile::desk(), rng);
    // Move the running statistics off their defaults.
    Tape<float> warm;
    model.forward(warm, warm.constant(testing::random_tensor_f(rng, {2, 64, 64, 3}, 0.0, 1.0)), Mode::Train, false);
    TrainConfig cfg;
    cfg.seed = 42;
    cfg.epochs = 7;
    const Rng::State saved_state = rng.state();
    save_checkpoint(dir / "m.sgf", model, cfg, 3, saved_state);

    const Checkpoint ck = load_checkpoint(dir / "m.sgf", parse_scheme("v5"));
    CHECK(ck.format_version == kCheckpointVersion);
    CHECK(ck.config == cfg);
    CHECK(ck.epoch == 3);
    CHECK(ck.rng_state == saved_state);
    CHECK(ck.scheme == parse_scheme("v5"));
    CHECK(ck.arch == Architecture::Proposed);
    CHECK(ck.profile.name == "desk");
    const EnsembleModel restored = restore_model(ck);
    CHECK(restored.parameters() == model.parameters());
    CHECK(restored.parameters().trainable("BatchNorm_1.gamma"));
    CHECK_FALSE(restored.parameters().trainable("BatchNorm_1.running_var"));

    const TensorF images = testing::random_tensor_f(rng, {3, 64, 64, 3}, 0.0, 1.0);
    const auto a = model.predict(images), b = restored.predict(images);
    double max_delta = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t h = 0; h < a[i].per_voter.size(); ++h)
            max_delta = std::max(max_delta, std::abs(a[i].per_voter[h].prob_real - b[i].per_voter[h].prob_real));
    CHECK(max_delta == 0.0);

    // Saving the restored model reproduces the file byte for byte.
    save_checkpoint(dir / "again.sgf", restored, cfg, 3, saved_state);
    CHECK(slurp(dir / "m.sgf") == slurp(dir / "again.sgf"));
}

TEST_CASE("file layout: magic, little-endian header length, JSON directory") {
    const auto dir = testing::scratch_dir("checkpoint_layout");
    Rng rng(2);
    EnsembleModel model = build_model(Architecture::MesonetSeg, parse_scheme("ori"), Profile::desk(), rng);
    save_checkpoint(dir / "m.sgf", model, TrainConfig{}, 0, rng.state());
    const std::string bytes = slurp(dir / "m.sgf");
    CHECK(bytes.substr(0, 4) == "SGF1");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
    const std::string header = bytes.substr(12, len);
    CHECK(header.find("\"format_version\":1") != std::string::npos);
    CHECK(header.find("\"byte_offset\"") != std::string::npos);
    CHECK(header.find("\"scheme\":\"ori\"") != std::string::npos);
    CHECK(bytes.size() == 12 + len + 4 * model.parameters().scalar_count());
}

TEST_CASE("checkpoint errors are distinct") {
    const auto dir = testing::scratch_dir("checkpoint_errors");
    Rng rng(3);
    EnsembleModel model = build_model(Architecture::MesonetSeg, parse_scheme("v5"), Profile::desk(), rng);
    save_checkpoint(dir / "good.sgf", model, TrainConfig{}, 1, rng.state());
    const std::string good = slurp(dir / "good.sgf");

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    dump(dir / "magic.sgf", bad_magic);
    CHECK(load_error(dir / "magic.sgf") == ErrorCode::MalformedCheckpoint);

    std::string bad_header = good;
    bad_header[12] = '#';
    dump(dir / "header.sgf", bad_header);
    CHECK(load_error(dir / "header.sgf") == ErrorCode::MalformedCheckpoint);

    dump(dir / "truncated.sgf", good.substr(0, good.size() - 10));
    CHECK(load_error(dir / "truncated.sgf") == ErrorCode::TruncatedCheckpoint);
    dump(dir / "short.sgf", good.substr(0, 40));
    CHECK(load_error(dir / "short.sgf") == ErrorCode::TruncatedCheckpoint);

    std::string version = good;
    const auto pos = version.find("\"format_version\":1");
    REQUIRE(pos != std::string::npos);
    version[pos + 17] = '7';
    dump(dir / "version.sgf", version);
    CHECK(load_error(dir / "version.sgf") == ErrorCode::VersionMismatch);

    CHECK(load_error(dir / "good.sgf", parse_scheme("v3_h")) == ErrorCode::SchemeMismatch);
    CHECK(load_error(dir / "missing.sgf") == ErrorCode::Io);

    // A tensor whose declared shape disagrees with the architecture.
    std::string reshaped = good;
    const auto at = reshaped.find("\"FullyConnected_1.bias\":{\"shape\":[2]");
    REQUIRE(at != std::string::npos);
    // Same byte count, different layout: [2] -> [1,2] is not what the head needs.
    const std::string from = "\"FullyConnected_1.bias\":{\"shape\":[2]";
    const std::string to = "\"FullyConnected_1.bias\":{\"shape\":[1,2]";
    reshaped.replace(at, from.size(), to);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(reshaped[4 + i])) << (8 * i);
    len += to.size() - from.size();
    for (int i = 0; i < 8; ++i) reshaped[4 + i] = static_cast<char>((len >> (8 * i)) & 0xff);
    dump(dir / "shape.sgf", reshaped);
    CHECK(load_error(dir / "shape.sgf") == ErrorCode::ShapeMismatch);
}
