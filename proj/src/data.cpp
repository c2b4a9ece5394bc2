#include "sgf/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sgf {

using json = nlohmann::json;

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    fail(ErrorCode::UnknownName, "unknown split '" + std::string(name) + "'; valid: train, val, test");
}

std::vector<ManifestEntry> Manifest::split(Split which) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == which) out.push_back(e);
    return out;
}

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open manifest " + path.string());
    const fs::path base = path.parent_path();
    Manifest manifest;
    std::set<fs::path> seen;
    std::string line;
    std::size_t line_no = 0;
    auto where = [&] { return path.string() + ":" + std::to_string(line_no) + ": "; };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(ErrorCode::MalformedData, where() + "not valid JSON (" + e.what() + ")");
        }
        require(obj.is_object() && obj.contains("path") && obj["path"].is_string() &&
                    obj.contains("label") && obj.contains("split") && obj["split"].is_string(),
                ErrorCode::MalformedData, where() + "expected {\"path\", \"label\", \"split\"}");
        const auto& lab = obj["label"];
        require(lab.is_number_integer() && (lab.get<int>() == 0 || lab.get<int>() == 1),
                ErrorCode::MalformedData, where() + "label must be 0 or 1, got " + lab.dump());
        ManifestEntry entry;
        entry.label = lab.get<int>();
        try {
            entry.split = parse_split(obj["split"].get<std::string>());
        } catch (const Error&) {
            fail(ErrorCode::MalformedData,
                 where() + "split must be train, val or test, got " + obj["split"].dump());
        }
        fs::path p = obj["path"].get<std::string>();
        if (p.is_relative()) p = base / p;
        p = p.lexically_normal();
        require(seen.insert(p).second, ErrorCode::DuplicateEntry,
                where() + "duplicate path " + p.string());
        require(fs::exists(p), ErrorCode::Io, where() + "image not found: " + p.string());
        entry.path = std::move(p);
        manifest.entries.push_back(std::move(entry));
    }
    if (manifest.entries.empty()) manifest.warnings.push_back("manifest " + path.string() + " is empty");
    return manifest;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::Io, "cannot write manifest " + path.string());
    for (const auto& e : entries) {
        json obj = {{"path", e.path.generic_string()},
                    {"label", e.label},
                    {"split", std::string(to_string(e.split))}};
        out << obj.dump() << '\n';
    }
    require(out.good(), ErrorCode::Io, "failed writing manifest " + path.string());
}

// ---------------------------------------------------------------------------
// Images

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::Io, "cannot open image " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TensorF decode_netpbm(const std::vector<unsigned char>& bytes, const fs::path& path) {
    const bool color = bytes[1] == '6';
    std::size_t pos = 2;
    auto next_token = [&]() -> std::size_t {
        // Whitespace and '#' comments separate header fields.
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t value = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos++] - '0');
            ++digits;
        }
        require(digits > 0 && digits < 10, ErrorCode::MalformedData,
                "bad netpbm header in " + path.string());
        return value;
    };
    const std::size_t w = next_token(), h = next_token(), maxval = next_token();
    require(w > 0 && h > 0 && maxval > 0 && maxval < 65536, ErrorCode::MalformedData,
            "bad netpbm dimensions in " + path.string());
    ++pos;  // single whitespace before the raster
    const std::size_t channels = color ? 3 : 1;
    const std::size_t bps = maxval < 256 ? 1 : 2;
    const std::size_t need = w * h * channels * bps;
    require(pos + need <= bytes.size(), ErrorCode::MalformedData,
            "truncated image " + path.string());
    TensorF out(Shape{h, w, 3});
    const float max_value = static_cast<float>(maxval);
    for (std::size_t i = 0; i < w * h; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t src = (i * channels + (color ? c : 0)) * bps + pos;
            const std::size_t v = bps == 1 ? bytes[src] : (bytes[src] << 8) | bytes[src + 1];
            require(v <= maxval, ErrorCode::MalformedData, "sample above maxval in " + path.string());
            out[i * 3 + c] = static_cast<float>(v) / max_value;
        }
    return out;
}

TensorF decode_png(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        fail(ErrorCode::MalformedData, "cannot decode PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::MalformedData, "truncated or corrupt PNG " + path.string() + ": " + msg);
    }
    TensorF out(Shape{image.height, image.width, 3});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(buffer[i]) / 255.0f;
    return out;
}

std::vector<unsigned char> quantize(const TensorF& image) {
    require(image.rank() == 3 && image.dim(2) == 3, ErrorCode::ShapeMismatch,
            "expected an [h, w, 3] image, got " + to_string(image.shape()));
    std::vector<unsigned char> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const float v = std::clamp(image[i], 0.0f, 1.0f);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    return bytes;
}

}  // namespace

TensorF decode_image(const fs::path& path) {
    const auto bytes = read_file(path);
    require(bytes.size() >= 8 || (bytes.size() >= 2 && bytes[0] == 'P'),
            ErrorCode::MalformedData, "file too short to be an image: " + path.string());
    if (bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5')) return decode_netpbm(bytes, path);
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(path);
    fail(ErrorCode::UnsupportedFormat,
         "unsupported image format (expected PNG or binary PPM/PGM): " + path.string());
}

void write_ppm(const fs::path& path, const TensorF& image) {
    const auto bytes = quantize(image);
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::Io, "cannot write " + path.string());
    out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorCode::Io, "failed writing " + path.string());
}

void write_png(const fs::path& path, const TensorF& image) {
    const auto bytes = quantize(image);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.dim(1));
    img.height = static_cast<png_uint_32>(image.dim(0));
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr))
        fail(ErrorCode::Io, "cannot write PNG " + path.string() + ": " + img.message);
}

TensorF resize_bilinear(const TensorF& image, std::size_t side) {
    require(image.rank() == 3, ErrorCode::ShapeMismatch,
            "resize_bilinear: expected [h, w, c], got " + to_string(image.shape()));
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    require(h >= 2 && w >= 2 && side >= 1, ErrorCode::InvalidArgument,
            "resize_bilinear: source must be at least 2x2");
    if (h == side && w == side) return image;
    TensorF out(Shape{side, side, c});
    const double sy = static_cast<double>(h) / static_cast<double>(side);
    const double sx = static_cast<double>(w) / static_cast<double>(side);
    for (std::size_t y = 0; y < side; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < side; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - static_cast<double>(x0);
            for (std::size_t q = 0; q < c; ++q) {
                const double a = image[(y0 * w + x0) * c + q], b = image[(y0 * w + x1) * c + q];
                const double d = image[(y1 * w + x0) * c + q], e = image[(y1 * w + x1) * c + q];
                const double top = a + (b - a) * tx;
                const double bottom = d + (e - d) * tx;
                out[(y * side + x) * c + q] = static_cast<float>(top + (bottom - top) * ty);
            }
        }
    }
    return out;
}

std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries, std::size_t side) {
    std::vector<Sample> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        TensorF img = decode_image(e.path);
        if (img.dim(0) != side || img.dim(1) != side) img = resize_bilinear(img, side);
        for (float v : img.data())
            require(v >= 0.0f && v <= 1.0f, ErrorCode::MalformedData,
                    "pixel value outside [0, 1] in " + e.path.string());
        out.push_back({std::move(img), e.label, e.path.string()});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic splice-tamper data

void SynthConfig::validate() const {
    require(count_per_class >= 1, ErrorCode::InvalidArgument, "synth: count must be at least 1");
    require(size >= 8, ErrorCode::InvalidArgument, "synth: image size must be at least 8");
    require(patch_min > 0.0 && patch_min <= patch_max && patch_max < 1.0,
            ErrorCode::InvalidArgument, "synth: patch fractions must satisfy 0 < min <= max < 1");
    require(static_cast<double>(size) * patch_min >= 2.0 * static_cast<double>(feather) + 1.0,
            ErrorCode::InvalidArgument, "synth: patch too small for the feather width");
    require(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0,
            ErrorCode::InvalidArgument, "synth: split fractions must leave a training share");
    require(format == "ppm" || format == "png", ErrorCode::InvalidArgument,
            "synth: format must be ppm or png");
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t cls, std::uint64_t index) {
    std::uint64_t x = seed;
    std::uint64_t a = splitmix64(x);
    x = a ^ (cls * 0x9e3779b97f4a7c15ULL) ^ ((index + 1) * 0xd1b54a32d192ed03ULL);
    return splitmix64(x);
}

/// Sum of four oriented low-frequency sinusoids around a random base color,
/// plus Gaussian pixel noise, clamped to [0, 1].
TensorF real_field(Rng& rng, const SynthConfig& cfg) {
    const std::size_t s = cfg.size;
    double base[3];
    for (auto& b : base) b = rng.uniform(0.35, 0.65);
    struct Wave {
        double fx, fy, phase, amp[3];
    } waves[4];
    for (auto& wv : waves) {
        const double freq = rng.uniform(0.5, 3.0);
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        wv.fx = freq * std::cos(theta);
        wv.fy = freq * std::sin(theta);
        wv.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (auto& a : wv.amp) a = rng.uniform(0.03, 0.12);
    }
    TensorF img(Shape{s, s, 3});
    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(s);
            const double v = static_cast<double>(y) / static_cast<double>(s);
            for (std::size_t c = 0; c < 3; ++c) {
                double val = base[c];
                for (const auto& wv : waves)
                    val += wv.amp[c] * std::sin(2.0 * std::numbers::pi * (wv.fx * u + wv.fy * v) + wv.phase);
                img[(y * s + x) * 3 + c] = static_cast<float>(val);
            }
        }
    for (auto& p : img.data())
        p = static_cast<float>(std::clamp(p + cfg.noise_sigma * rng.normal(), 0.0, 1.0));
    return img;
}

TensorF quantized(TensorF img) {
    for (auto& p : img.data()) p = static_cast<float>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    return img;
}

TensorF box_blur(const TensorF& patch, std::size_t radius) {
    if (radius == 0) return patch;
    const std::size_t h = patch.dim(0), w = patch.dim(1);
    TensorF out(patch.shape());
    const auto r = static_cast<std::ptrdiff_t>(radius);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                int n = 0;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
                        const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) ||
                            xx >= static_cast<std::ptrdiff_t>(w))
                            continue;
                        acc += patch[(static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * 3 + c];
                        ++n;
                    }
                out[(y * w + x) * 3 + c] = static_cast<float>(acc / n);
            }
    return out;
}

SynthImage make_fake(Rng& rng, const SynthConfig& cfg) {
    const std::size_t s = cfg.size;
    TensorF host = real_field(rng, cfg);
    const TensorF donor = real_field(rng, cfg);

    auto side = [&] {
        const double f = rng.uniform(cfg.patch_min, cfg.patch_max);
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(f * static_cast<double>(s))),
                                       2 * cfg.feather + 1, s - 1);
    };
    const std::size_t ph = side(), pw = side();
    // The pasted region sits around the image center, as a swapped face
    // does in an aligned crop; the jitter keeps it on every quadrant.
    auto place = [&](std::size_t len) {
        const double jitter = static_cast<double>(std::min(ph, pw)) / 4.0;
        const double center = static_cast<double>(s) / 2.0 + rng.uniform(-jitter, jitter);
        const double start = std::round(center - static_cast<double>(len) / 2.0);
        return static_cast<std::size_t>(std::clamp(start, 0.0, static_cast<double>(s - len)));
    };
    const std::size_t r0 = place(ph), c0 = place(pw);
    const std::size_t sr = rng.below(s - ph + 1), sc = rng.below(s - pw + 1);

    TensorF patch(Shape{ph, pw, 3});
    for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                patch[(y * pw + x) * 3 + c] = donor[((sr + y) * s + sc + x) * 3 + c];
    patch = box_blur(patch, cfg.blur_radius);

    const double ramp = static_cast<double>(cfg.feather + 1);
    for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x) {
            const std::size_t edge = std::min({y, x, ph - 1 - y, pw - 1 - x});
            const double alpha = std::min(1.0, static_cast<double>(edge + 1) / ramp);
            for (std::size_t c = 0; c < 3; ++c) {
                float& dst = host[((r0 + y) * s + c0 + x) * 3 + c];
                dst = static_cast<float>(alpha * patch[(y * pw + x) * 3 + c] + (1.0 - alpha) * dst);
            }
        }
    SynthImage out;
    out.image = quantized(std::move(host));
    out.label = 0;
    out.patch = {r0, ph, c0, pw, false};
    return out;
}

std::string image_name(int label, std::size_t index, const std::string& ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05zu.%s", label == 1 ? "real" : "fake", index, ext.c_str());
    return buf;
}

}  // namespace

std::vector<SynthImage> synthesize(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.count_per_class;
    const auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(n) * cfg.val_fraction));
    const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * cfg.test_fraction));
    require(n_val + n_test < n || (n_val + n_test == n && n == 0), ErrorCode::InvalidArgument,
            "synth: split fractions leave no training images");
    const std::size_t n_train = n - n_val - n_test;
    auto split_of = [&](std::size_t i) {
        if (i < n_train) return Split::Train;
        if (i < n_train + n_val) return Split::Val;
        return Split::Test;
    };

    std::vector<SynthImage> out;
    out.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng real_rng(stream_seed(cfg.seed, 1, i));
        SynthImage real;
        real.image = quantized(real_field(real_rng, cfg));
        real.label = 1;
        real.split = split_of(i);
        real.name = image_name(1, i, cfg.format);
        out.push_back(std::move(real));

        Rng fake_rng(stream_seed(cfg.seed, 0, i));
        SynthImage fake = make_fake(fake_rng, cfg);
        fake.split = split_of(i);
        fake.name = image_name(0, i, cfg.format);
        out.push_back(std::move(fake));
    }
    return out;
}

Manifest generate_synthetic_dataset(const SynthConfig& cfg, const fs::path& dir) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorCode::Io,
            "cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));

    const auto images = synthesize(cfg);
    std::vector<ManifestEntry> relative;
    Manifest manifest;
    for (const auto& img : images) {
        const fs::path file = dir / img.name;
        if (cfg.format == "png")
            write_png(file, img.image);
        else
            write_ppm(file, img.image);
        relative.push_back({img.name, img.label, img.split});
        manifest.entries.push_back({file, img.label, img.split});
    }
    write_manifest(dir / "manifest.jsonl", relative);

    const json echo = {{"count_per_class", cfg.count_per_class},
                       {"size", cfg.size},
                       {"seed", cfg.seed},
                       {"patch_min", cfg.patch_min},
                       {"patch_max", cfg.patch_max},
                       {"feather", cfg.feather},
                       {"blur_radius", cfg.blur_radius},
                       {"noise_sigma", cfg.noise_sigma},
                       {"val_fraction", cfg.val_fraction},
                       {"test_fraction", cfg.test_fraction},
                       {"format", cfg.format}};
    std::ofstream out(dir / "synth_config.json");
    require(out.good(), ErrorCode::Io, "cannot write synth_config.json in " + dir.string());
    out << echo.dump(2) << '\n';
    return manifest;
}

std::vector<Sample> to_samples(const std::vector<SynthImage>& images, Split split) {
    std::vector<Sample> out;
    for (const auto& img : images)
        if (img.split == split) out.push_back({img.image, img.label, img.name});
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> batch_iter(std::size_t sample_count, std::size_t batch_size,
                                                 std::uint64_t seed, std::size_t epoch) {
    require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_iter: batch size must be positive");
    std::vector<std::size_t> order(sample_count);
    for (std::size_t i = 0; i < sample_count; ++i) order[i] = i;
    Rng rng(seed ^ static_cast<std::uint64_t>(epoch));
    for (std::size_t i = sample_count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < sample_count; start += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch_size, sample_count)));
    return batches;
}

TensorF stack_images(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
    require(!indices.empty(), ErrorCode::InvalidArgument, "stack_images: empty batch");
    const Shape& s = samples.at(indices.front()).image.shape();
    const std::size_t per = numel(s);
    TensorF out(Shape{indices.size(), s[0], s[1], s[2]});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& img = samples.at(indices[b]).image;
        require(img.shape() == s, ErrorCode::ShapeMismatch, "stack_images: mixed image shapes");
        std::copy(img.ptr(), img.ptr() + per, out.ptr() + b * per);
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<Sample>& samples,
                               const std::vector<std::size_t>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(samples.at(i).label);
    return out;
}

}  // namespace sgf
