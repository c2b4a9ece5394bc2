#include "sgf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

namespace sgf {

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'S', 'G', 'F', '1'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f32_le(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
    require(s.size() == 16 && s.find_first_not_of("0123456789abcdef") == std::string::npos,
            ErrorCode::MalformedCheckpoint, "checkpoint: bad rng state word '" + s + "'");
    return std::stoull(s, nullptr, 16);
}

[[noreturn]] void malformed(const std::string& what) {
    fail(ErrorCode::MalformedCheckpoint, "malformed checkpoint: " + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EnsembleModel& model,
                     const TrainConfig& cfg, std::size_t epoch, const Rng::State& rng_state) {
    json directory = json::object();
    std::string payload;
    for (const auto& [name, tensor] : model.parameters().values()) {
        const std::size_t offset = payload.size();
        for (float v : tensor.data()) put_f32_le(payload, v);
        directory[name] = {{"shape", tensor.shape()},
                           {"dtype", "f32"},
                           {"byte_offset", offset},
                           {"byte_len", payload.size() - offset}};
    }
    json rng = json::array();
    for (auto word : rng_state) rng.push_back(hex64(word));
    const json header = {{"format_version", kCheckpointVersion},
                         {"tensors", directory},
                         {"config", json::parse(cfg.to_json())},
                         {"scheme", model.scheme().name()},
                         {"arch", std::string(to_string(model.architecture()))},
                         {"profile", model.profile().name},
                         {"shared_heads", model.shared_heads()},
                         {"epoch", epoch},
                         {"rng_state", rng}};
    const std::string text = header.dump();

    std::string bytes(kMagic, 4);
    put_u64_le(bytes, text.size());
    bytes += text;
    bytes += payload;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::Io, "cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorCode::Io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<SegmentationScheme> expected_scheme) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::Io, "cannot open checkpoint " + path.string());
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) malformed("bad magic bytes");
    if (bytes.size() < 12)
        fail(ErrorCode::TruncatedCheckpoint, "truncated checkpoint: missing header length");
    const std::uint64_t header_len = get_u64_le(bytes.data() + 4);
    if (header_len > bytes.size() - 12)
        fail(ErrorCode::TruncatedCheckpoint, "truncated checkpoint: header runs past end of file");
    const std::size_t payload_start = 12 + static_cast<std::size_t>(header_len);

    json header;
    try {
        header = json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    } catch (const json::parse_error& e) {
        malformed(std::string("header is not valid JSON (") + e.what() + ")");
    }
    if (!header.is_object() || !header.contains("format_version") ||
        !header["format_version"].is_number_unsigned())
        malformed("header has no format_version");
    const auto version = header["format_version"].get<std::uint64_t>();
    if (version != kCheckpointVersion)
        fail(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                             " is not supported (expected " +
                                             std::to_string(kCheckpointVersion) + ")");

    Checkpoint ck;
    try {
        ck.scheme = parse_scheme(header.at("scheme").get<std::string>());
        ck.arch = parse_architecture(header.at("arch").get<std::string>());
        ck.profile = parse_profile(header.at("profile").get<std::string>());
        ck.shared_heads = header.at("shared_heads").get<bool>();
        ck.epoch = header.at("epoch").get<std::size_t>();
        ck.config = TrainConfig::from_json(header.at("config").dump());
        const auto& rng = header.at("rng_state");
        if (!rng.is_array() || rng.size() != 4) malformed("rng_state must hold 4 words");
        for (std::size_t i = 0; i < 4; ++i) ck.rng_state[i] = parse_hex64(rng[i].get<std::string>());

        const auto& tensors = header.at("tensors");
        if (!tensors.is_object()) malformed("tensor directory must be an object");
        const std::size_t payload_len = bytes.size() - payload_start;
        for (const auto& [name, entry] : tensors.items()) {
            if (entry.at("dtype").get<std::string>() != "f32") malformed(name + ": dtype must be f32");
            const Shape shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("byte_offset").get<std::size_t>();
            const auto len = entry.at("byte_len").get<std::size_t>();
            if (len != numel(shape) * 4) malformed(name + ": byte_len does not match shape");
            if (offset > payload_len || len > payload_len - offset)
                fail(ErrorCode::TruncatedCheckpoint,
                     "truncated checkpoint: payload for " + name + " runs past end of file");
            TensorF t(shape);
            const unsigned char* src = bytes.data() + payload_start + offset;
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f32_le(src + 4 * i);
            ck.parameters.add(name, std::move(t), true);
        }
    } catch (const json::exception& e) {
        malformed(std::string("bad header field (") + e.what() + ")");
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownName || e.code() == ErrorCode::MalformedData ||
            e.code() == ErrorCode::InvalidArgument)
            malformed(e.what());
        throw;
    }

    if (expected_scheme && !(*expected_scheme == ck.scheme))
        fail(ErrorCode::SchemeMismatch, "scheme mismatch: checkpoint was trained with " +
                                            ck.scheme.name() + ", requested " + expected_scheme->name());
    return ck;
}

EnsembleModel restore_model(const Checkpoint& checkpoint) {
    Rng scratch(0);
    EnsembleModel model = build_model(checkpoint.arch, checkpoint.scheme, checkpoint.profile, scratch,
                                      checkpoint.shared_heads);
    auto& params = model.parameters();
    for (const auto& [name, value] : params.values())
        require(checkpoint.parameters.contains(name), ErrorCode::ShapeMismatch,
                "checkpoint has no tensor " + name + " required by the architecture");
    for (const auto& [name, value] : checkpoint.parameters.values()) {
        require(params.contains(name), ErrorCode::ShapeMismatch,
                "checkpoint tensor " + name + " is not part of the architecture");
        TensorF& dst = params.at(name);
        require(dst.shape() == value.shape(), ErrorCode::ShapeMismatch,
                "checkpoint tensor " + name + " has shape " + to_string(value.shape()) +
                    ", architecture expects " + to_string(dst.shape()));
        dst = value;
    }
    return model;
}

}  // namespace sgf
