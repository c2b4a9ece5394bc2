#include "sgf/model.hpp"

#include <iomanip>
#include <sstream>

namespace sgf {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Input: return "Input";
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::SeparableConv2D: return "SeparableConv2D";
        case LayerKind::BatchNorm: return "BatchNorm";
        case LayerKind::Activation: return "Activation";
        case LayerKind::MaxPool: return "MaxPooling";
        case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::Dense: return "FullyConnected";
        case LayerKind::Segment: return "Segment";
        case LayerKind::ResidualAdd: return "ResidualAdd";
    }
    return "?";
}

std::string_view to_string(Activation act) {
    switch (act) {
        case Activation::None: return "";
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leakyrelu";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Shape inference

std::size_t ModelSpec::index_of(const std::string& layer_name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == layer_name) return i;
    fail(ErrorCode::InvalidArgument, "model '" + name + "' has no layer '" + layer_name + "'");
}

const LayerSpec& ModelSpec::layer(const std::string& layer_name) const {
    return layers[index_of(layer_name)];
}

namespace {

Shape infer_one(const LayerSpec& l, const std::vector<Shape>& in, const Shape& model_input) {
    auto need_image = [&](const Shape& s) {
        require(s.size() == 3, ErrorCode::ShapeMismatch,
                l.name + ": expected an [h, w, c] input, got " + to_string(s));
    };
    switch (l.kind) {
        case LayerKind::Input: return model_input;
        case LayerKind::Conv2D:
        case LayerKind::SeparableConv2D:
            need_image(in[0]);
            require(l.kernel % 2 == 1 && l.units > 0, ErrorCode::InvalidArgument,
                    l.name + ": kernel must be odd and units positive");
            return {in[0][0], in[0][1], l.units};
        case LayerKind::BatchNorm:
        case LayerKind::Activation: return in[0];
        case LayerKind::MaxPool: {
            need_image(in[0]);
            const std::size_t k = l.kernel;
            require(k >= 1, ErrorCode::InvalidArgument, l.name + ": pooling window must be positive");
            if (l.rounding == PoolRounding::Exact)
                require(in[0][0] % k == 0 && in[0][1] % k == 0, ErrorCode::ShapeMismatch,
                        l.name + ": " + to_string(in[0]) + " not divisible by " + std::to_string(k));
            require(in[0][0] / k > 0 && in[0][1] / k > 0, ErrorCode::ShapeMismatch,
                    l.name + ": window larger than input");
            return {in[0][0] / k, in[0][1] / k, in[0][2]};
        }
        case LayerKind::GlobalAvgPool: need_image(in[0]); return {in[0][2]};
        case LayerKind::Flatten: return {numel(in[0])};
        case LayerKind::Dense:
            require(in[0].size() == 1, ErrorCode::ShapeMismatch,
                    l.name + ": dense input must be a vector, got " + to_string(in[0]));
            return {l.units};
        case LayerKind::Segment: {
            need_image(in[0]);
            const Block& b = l.block;
            require(b.row_len > 0 && b.col_len > 0 && b.row_start + b.row_len <= in[0][0] &&
                        b.col_start + b.col_len <= in[0][1],
                    ErrorCode::ShapeMismatch, l.name + ": block outside " + to_string(in[0]));
            return {b.row_len, b.col_len, in[0][2]};
        }
        case LayerKind::ResidualAdd: {
            require(in.size() == 2, ErrorCode::InvalidArgument, l.name + ": needs two inputs");
            need_image(in[0]);
            need_image(in[1]);
            require(in[0][0] == in[1][0] && in[0][1] == in[1][1], ErrorCode::ShapeMismatch,
                    l.name + ": spatial dims differ");
            if (!l.projection)
                require(in[0][2] == in[1][2], ErrorCode::ShapeMismatch,
                        l.name + ": channels differ without projection");
            return in[1];
        }
    }
    fail(ErrorCode::Invariant, "unhandled layer kind");
}

std::vector<Shape> input_shapes(const ModelSpec& spec, const LayerSpec& l) {
    std::vector<Shape> out;
    for (const auto& name : l.inputs) out.push_back(spec.layer(name).output_shape);
    return out;
}

}  // namespace

void ModelSpec::infer_shapes() {
    require(!layers.empty() && layers.front().kind == LayerKind::Input, ErrorCode::InvalidArgument,
            "model '" + name + "' must start with an Input layer");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        std::vector<Shape> in;
        for (const auto& src : l.inputs) {
            const std::size_t j = index_of(src);
            require(j < i, ErrorCode::InvalidArgument,
                    l.name + ": input '" + src + "' is not defined before it");
            in.push_back(layers[j].output_shape);
        }
        if (l.kind != LayerKind::Input)
            require(!in.empty(), ErrorCode::InvalidArgument, l.name + ": no inputs");
        l.output_shape = infer_one(l, in, input_shape);
    }
    for (const auto& h : heads) index_of(h);
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<ParamInfo> layer_parameters(const LayerSpec& l, const std::vector<Shape>& in) {
    const std::string& key = l.key();
    std::vector<ParamInfo> out;
    switch (l.kind) {
        case LayerKind::Conv2D: {
            const std::size_t ci = in[0][2];
            out.push_back({key + ".kernel", {l.kernel, l.kernel, ci, l.units}, true,
                           l.kernel * l.kernel * ci});
            if (l.use_bias) out.push_back({key + ".bias", {l.units}, true, 0});
            break;
        }
        case LayerKind::SeparableConv2D: {
            const std::size_t ci = in[0][2];
            out.push_back({key + ".pointwise", {1, 1, ci, l.units}, true, ci});
            out.push_back({key + ".depthwise", {l.kernel, l.kernel, l.units}, true,
                           l.kernel * l.kernel});
            if (l.use_bias) out.push_back({key + ".bias", {l.units}, true, 0});
            break;
        }
        case LayerKind::BatchNorm: {
            const std::size_t c = in[0].back();
            out.push_back({key + ".gamma", {c}, true, 0, 1.0f});
            out.push_back({key + ".beta", {c}, true, 0, 0.0f});
            out.push_back({key + ".running_mean", {c}, false, 0, 0.0f});
            out.push_back({key + ".running_var", {c}, false, 0, 1.0f});
            break;
        }
        case LayerKind::Dense: {
            const std::size_t din = in[0][0];
            out.push_back({key + ".weights", {din, l.units}, true, din});
            out.push_back({key + ".bias", {l.units}, true, 0});
            break;
        }
        case LayerKind::ResidualAdd:
            if (l.projection) {
                const std::size_t cx = in[0][2], cy = in[1][2];
                out.push_back({key + ".projection", {1, 1, cx, cy}, true, cx});
            }
            break;
        default: break;
    }
    return out;
}

std::size_t conv2d_param_count(std::size_t c_in, std::size_t c_out, std::size_t k) {
    return k * k * c_in * c_out + c_out;
}

std::size_t separable_param_count(std::size_t c_in, std::size_t c_out, std::size_t k) {
    return c_in * c_out + k * k * c_out + c_out;
}

ModelSummary model_summary(ModelSpec spec) {
    ModelSummary summary;
    if (spec.layers.empty()) return summary;
    spec.infer_shapes();
    std::set<std::string> seen;
    for (const auto& l : spec.layers) {
        LayerSummary row{l.name, std::string(to_string(l.kind)), l.output_shape, 0, 0};
        for (const auto& p : layer_parameters(l, input_shapes(spec, l))) {
            if (!seen.insert(p.name).second) continue;
            (p.trainable ? row.trainable : row.non_trainable) += numel(p.shape);
        }
        summary.trainable += row.trainable;
        summary.non_trainable += row.non_trainable;
        summary.rows.push_back(std::move(row));
    }
    return summary;
}

std::string ModelSummary::to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(28) << "Layer" << std::setw(18) << "Type" << std::setw(20)
       << "Output shape" << std::right << std::setw(12) << "Params" << '\n';
    for (const auto& r : rows) {
        std::string shape;
        for (std::size_t i = 0; i < r.output_shape.size(); ++i)
            shape += (i ? " x " : "") + std::to_string(r.output_shape[i]);
        os << std::left << std::setw(28) << r.name << std::setw(18) << r.kind << std::setw(20)
           << shape << std::right << std::setw(12) << r.params() << '\n';
    }
    os << "Trainable params: " << trainable << "\nNon-trainable params: " << non_trainable
       << "\nTotal params: " << total() << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Builders

Profile parse_profile(std::string_view name) {
    if (name == "full") return Profile::full();
    if (name == "desk") return Profile::desk();
    fail(ErrorCode::UnknownName, "unknown profile '" + std::string(name) + "'; valid: full, desk");
}

Architecture parse_architecture(std::string_view name) {
    if (name == "proposed") return Architecture::Proposed;
    if (name == "mesonet") return Architecture::Mesonet;
    if (name == "mesonet-seg") return Architecture::MesonetSeg;
    fail(ErrorCode::UnknownName, "unknown architecture '" + std::string(name) +
                                     "'; valid: proposed, mesonet, mesonet-seg");
}

std::string_view to_string(Architecture arch) {
    switch (arch) {
        case Architecture::Proposed: return "proposed";
        case Architecture::Mesonet: return "mesonet";
        case Architecture::MesonetSeg: return "mesonet-seg";
    }
    return "?";
}

namespace {

struct SpecBuilder {
    ModelSpec spec;

    const std::string& add(LayerSpec l) {
        spec.layers.push_back(std::move(l));
        return spec.layers.back().name;
    }
    std::string input(Shape shape) {
        spec.input_shape = shape;
        return add({.name = "Input", .kind = LayerKind::Input});
    }
    std::string conv(std::string name, std::string from, std::size_t units, std::size_t k,
                     Activation act = Activation::None) {
        return add({.name = std::move(name), .kind = LayerKind::Conv2D, .inputs = {std::move(from)},
                    .units = units, .kernel = k, .activation = act});
    }
    std::string sep(std::string name, std::string from, std::size_t units, std::size_t k,
                    Activation act = Activation::None, std::string key = {}) {
        return add({.name = std::move(name), .kind = LayerKind::SeparableConv2D,
                    .inputs = {std::move(from)}, .units = units, .kernel = k, .activation = act,
                    .param_key = std::move(key)});
    }
    std::string bn(std::string name, std::string from, std::string key = {}) {
        return add({.name = std::move(name), .kind = LayerKind::BatchNorm,
                    .inputs = {std::move(from)}, .param_key = std::move(key)});
    }
    std::string act(std::string name, std::string from, Activation a) {
        return add({.name = std::move(name), .kind = LayerKind::Activation,
                    .inputs = {std::move(from)}, .activation = a});
    }
    std::string pool(std::string name, std::string from, std::size_t k,
                     PoolRounding rounding = PoolRounding::Exact) {
        return add({.name = std::move(name), .kind = LayerKind::MaxPool, .inputs = {std::move(from)},
                    .kernel = k, .rounding = rounding});
    }
    std::string dense(std::string name, std::string from, std::size_t units, Activation a,
                      std::string key = {}) {
        return add({.name = std::move(name), .kind = LayerKind::Dense, .inputs = {std::move(from)},
                    .units = units, .activation = a, .param_key = std::move(key)});
    }
};

std::string keyed(const std::string& shared_prefix, const std::string& suffix) {
    return shared_prefix.empty() ? std::string{} : shared_prefix + suffix;
}

/// Residual stage: sep -> bn -> relu -> sep -> bn, plus a 1x1-projected skip.
std::string smodel_stage(SpecBuilder& b, const std::string& from, const std::string& prefix,
                         const std::string& shared, std::size_t width) {
    const auto s1 = b.sep(prefix + "sep1", from, width, 3, Activation::None, keyed(shared, "sep1"));
    const auto n1 = b.bn(prefix + "bn1", s1, keyed(shared, "bn1"));
    const auto r1 = b.act(prefix + "relu1", n1, Activation::Relu);
    const auto s2 = b.sep(prefix + "sep2", r1, width, 3, Activation::None, keyed(shared, "sep2"));
    const auto n2 = b.bn(prefix + "bn2", s2, keyed(shared, "bn2"));
    const auto add = b.add({.name = prefix + "add", .kind = LayerKind::ResidualAdd,
                            .inputs = {from, n2}, .projection = true,
                            .param_key = keyed(shared, "add")});
    return b.act(prefix + "relu2", add, Activation::Relu);
}

/// SModel head appended after `from`; returns the softmax layer name.
std::string append_smodel(SpecBuilder& b, const std::string& from, const std::string& prefix,
                          const std::string& shared, std::size_t channels) {
    const auto st1 = smodel_stage(b, from, prefix + "stage1_", keyed(shared, "stage1_"), channels);
    const auto pooled = b.pool(prefix + "pool", st1, 2, PoolRounding::Floor);
    const auto st2 =
        smodel_stage(b, pooled, prefix + "stage2_", keyed(shared, "stage2_"), 2 * channels);
    const auto gap = b.add({.name = prefix + "gap", .kind = LayerKind::GlobalAvgPool, .inputs = {st2}});
    return b.dense(prefix + "softmax", gap, 2, Activation::Softmax, keyed(shared, "softmax"));
}

void append_extractor(SpecBuilder& b, const Profile& profile) {
    std::string prev = b.input({profile.input_side, profile.input_side, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        const auto idx = std::to_string(i + 1);
        prev = b.conv("Conv2D_" + idx, prev, profile.extractor_channels[i], 3);
        prev = b.bn("BatchNorm_" + idx, prev);
        prev = b.act("ReLU_" + idx, prev, Activation::Relu);
        prev = b.pool("MaxPooling_" + idx, prev, 2);
    }
}

std::string append_mesonet_front(SpecBuilder& b, const Profile& profile) {
    std::string prev = b.input({profile.input_side, profile.input_side, 3});
    const std::size_t widths[4] = {8, 8, 16, 16};
    const std::size_t kernels[4] = {3, 5, 5, 5};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto idx = std::to_string(i + 1);
        prev = b.conv("Conv2D_" + idx, prev, widths[i], kernels[i], Activation::Relu);
        prev = b.bn("BatchNorm_" + idx, prev);
        if (i < 3) prev = b.pool("MaxPooling_" + idx, prev, 2);
    }
    return prev;
}

}  // namespace

ModelSpec build_feature_extractor(const Profile& profile) {
    SpecBuilder b;
    b.spec.name = "feature_extractor";
    append_extractor(b, profile);
    b.spec.heads = {b.spec.layers.back().name};
    b.spec.infer_shapes();
    return std::move(b.spec);
}

ModelSpec build_smodel(std::size_t input_channels, std::size_t rows, std::size_t cols) {
    require(rows >= kSModelMinSide && cols >= kSModelMinSide, ErrorCode::ShapeMismatch,
            "SModel needs blocks of at least " + std::to_string(kSModelMinSide) + "x" +
                std::to_string(kSModelMinSide) + ", got " + std::to_string(rows) + "x" +
                std::to_string(cols));
    SpecBuilder b;
    b.spec.name = "smodel";
    const auto in = b.input({rows, cols, input_channels});
    b.spec.heads = {append_smodel(b, in, "", "", input_channels)};
    b.spec.infer_shapes();
    return std::move(b.spec);
}

ModelSpec build_mesonet(const Profile& profile) {
    SpecBuilder b;
    b.spec.name = "mesonet";
    auto prev = append_mesonet_front(b, profile);
    prev = b.pool("MaxPooling_4", prev, 4);
    prev = b.add({.name = "Flatten_1", .kind = LayerKind::Flatten, .inputs = {prev}});
    prev = b.dense("FullyConnected_1", prev, 1024, Activation::Relu);
    prev = b.dense("FullyConnected_2", prev, 16, Activation::LeakyRelu);
    prev = b.dense("FullyConnected_3", prev, 2, Activation::Softmax);
    b.spec.heads = {prev};
    b.spec.infer_shapes();
    return std::move(b.spec);
}

ModelSpec build_segmented_mesonet(const SegmentationScheme& scheme, const Profile& profile) {
    SpecBuilder b;
    b.spec.name = "mesonet-seg";
    const auto latent = append_mesonet_front(b, profile);
    const std::size_t side = profile.input_side / 8;
    const BlockPlan plan = plan_blocks(scheme, side, side);
    const std::size_t n = plan.voter_count();
    // Layers are grouped by type: all segments, then all convs, and so on.
    for (std::size_t i = 0; i < n; ++i)
        b.add({.name = "Segmentlayer_" + std::to_string(i + 1), .kind = LayerKind::Segment,
               .inputs = {latent}, .block = plan.blocks[i]});
    for (std::size_t i = 0; i < n; ++i)
        b.sep("SeparableConv2D_" + std::to_string(i + 1), "Segmentlayer_" + std::to_string(i + 1),
              256, 5, Activation::Relu);
    for (std::size_t i = 0; i < n; ++i)
        b.bn("BatchNorm_" + std::to_string(i + 5), "SeparableConv2D_" + std::to_string(i + 1));
    for (std::size_t i = 0; i < n; ++i)
        b.add({.name = "GlobalAvgPool_" + std::to_string(i + 1), .kind = LayerKind::GlobalAvgPool,
               .inputs = {"BatchNorm_" + std::to_string(i + 5)}});
    for (std::size_t i = 0; i < n; ++i) {
        const auto name = "FullyConnected_" + std::to_string(i + 1);
        b.dense(name, "GlobalAvgPool_" + std::to_string(i + 1), 2, Activation::Softmax);
        b.spec.heads.push_back(name);
    }
    b.spec.infer_shapes();
    return std::move(b.spec);
}

namespace {

ModelSpec build_proposed_spec(const SegmentationScheme& scheme, const Profile& profile,
                              bool shared_heads) {
    SpecBuilder b;
    b.spec.name = "proposed";
    append_extractor(b, profile);
    const std::string latent = b.spec.layers.back().name;
    const std::size_t side = profile.latent_side();
    const BlockPlan plan = plan_blocks(scheme, side, side);
    for (std::size_t i = 0; i < plan.voter_count(); ++i) {
        const auto& blk = plan.blocks[i];
        require(blk.row_len >= kSModelMinSide && blk.col_len >= kSModelMinSide,
                ErrorCode::ShapeMismatch,
                "scheme " + scheme.name() + " yields a " + std::to_string(blk.row_len) + "x" +
                    std::to_string(blk.col_len) + " block on a " + std::to_string(side) + "x" +
                    std::to_string(side) + " latent; SModel needs at least " +
                    std::to_string(kSModelMinSide) + "x" + std::to_string(kSModelMinSide));
        const auto idx = std::to_string(i + 1);
        const auto seg = b.add({.name = "Segment_" + idx, .kind = LayerKind::Segment,
                                .inputs = {latent}, .block = blk});
        b.spec.heads.push_back(append_smodel(b, seg, "s" + idx + "_", shared_heads ? "smodel_" : "",
                                             profile.latent_channels()));
    }
    b.spec.infer_shapes();
    return std::move(b.spec);
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter store and forward pass

void ParameterStore::add(const std::string& name, TensorF value, bool is_trainable) {
    values_[name] = std::move(value);
    if (is_trainable)
        frozen_.erase(name);
    else
        frozen_.insert(name);
}

TensorF& ParameterStore::at(const std::string& name) {
    auto it = values_.find(name);
    require(it != values_.end(), ErrorCode::InvalidArgument, "no parameter '" + name + "'");
    return it->second;
}

const TensorF& ParameterStore::at(const std::string& name) const {
    auto it = values_.find(name);
    require(it != values_.end(), ErrorCode::InvalidArgument, "no parameter '" + name + "'");
    return it->second;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : values_) n += t.size();
    return n;
}

ParameterStore initialize_parameters(const ModelSpec& spec, Rng& rng) {
    ParameterStore store;
    for (const auto& l : spec.layers) {
        for (const auto& p : layer_parameters(l, input_shapes(spec, l))) {
            if (store.contains(p.name)) continue;
            if (p.fan_in > 0)
                store.add(p.name, he_normal_init<float>(rng, p.shape, p.fan_in), p.trainable);
            else
                store.add(p.name, TensorF(p.shape, p.fill), p.trainable);
        }
    }
    return store;
}

namespace {

VarId apply_activation(Tape<float>& tape, VarId x, Activation act) {
    switch (act) {
        case Activation::None: return x;
        case Activation::Relu: return relu(tape, x);
        case Activation::LeakyRelu: return leaky_relu(tape, x);
        case Activation::Softmax: return softmax(tape, x);
    }
    return x;
}

}  // namespace

ForwardResult forward(const ModelSpec& spec, ParameterStore& params, Tape<float>& tape,
                      VarId input, Mode mode, bool track_grad) {
    ForwardResult result;
    auto bind = [&](const std::string& name) {
        auto it = result.parameters.find(name);
        if (it != result.parameters.end()) return it->second;
        const TensorF& value = params.at(name);
        const VarId id = track_grad && params.trainable(name) ? tape.variable(value)
                                                              : tape.constant(value);
        result.parameters.emplace(name, id);
        return id;
    };

    const auto& in_shape = tape.value(input).shape();
    require(in_shape.size() == spec.input_shape.size() + 1 &&
                Shape(in_shape.begin() + 1, in_shape.end()) == spec.input_shape,
            ErrorCode::ShapeMismatch,
            spec.name + ": expected a batch of " + to_string(spec.input_shape) + ", got " +
                to_string(in_shape));

    std::vector<VarId> out(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::string& key = l.key();
        auto src = [&](std::size_t k) { return out[spec.index_of(l.inputs[k])]; };
        VarId y{};
        switch (l.kind) {
            case LayerKind::Input: y = input; break;
            case LayerKind::Conv2D:
                y = conv2d(tape, src(0), bind(key + ".kernel"),
                           l.use_bias ? std::optional<VarId>(bind(key + ".bias")) : std::nullopt);
                y = apply_activation(tape, y, l.activation);
                break;
            case LayerKind::SeparableConv2D:
                y = separable_conv2d(
                    tape, src(0), bind(key + ".pointwise"), bind(key + ".depthwise"),
                    l.use_bias ? std::optional<VarId>(bind(key + ".bias")) : std::nullopt);
                y = apply_activation(tape, y, l.activation);
                break;
            case LayerKind::BatchNorm: {
                // Infer mode only reads the running buffers.
                BatchNormRunning<float> running{&params.at(key + ".running_mean"),
                                                &params.at(key + ".running_var")};
                y = batchnorm(tape, src(0), bind(key + ".gamma"), bind(key + ".beta"), running, mode);
                break;
            }
            case LayerKind::Activation: y = apply_activation(tape, src(0), l.activation); break;
            case LayerKind::MaxPool: y = maxpool(tape, src(0), l.kernel, l.rounding); break;
            case LayerKind::GlobalAvgPool: y = global_avg_pool(tape, src(0)); break;
            case LayerKind::Flatten: y = flatten(tape, src(0)); break;
            case LayerKind::Dense:
                y = dense(tape, src(0), bind(key + ".weights"), bind(key + ".bias"));
                y = apply_activation(tape, y, l.activation);
                break;
            case LayerKind::Segment: {
                const auto& s = tape.value(src(0)).shape();
                const Block& b = l.block;
                if (b.row_start == 0 && b.col_start == 0 && b.row_len == s[1] && b.col_len == s[2])
                    y = src(0);
                else
                    y = crop(tape, src(0), b.row_start, b.row_len, b.col_start, b.col_len);
                break;
            }
            case LayerKind::ResidualAdd:
                y = residual_add(tape, src(0), src(1),
                                 l.projection ? std::optional<VarId>(bind(key + ".projection"))
                                              : std::nullopt);
                break;
        }
        out[i] = y;
    }
    for (const auto& h : spec.heads) result.heads.push_back(out[spec.index_of(h)]);
    return result;
}

// ---------------------------------------------------------------------------

EnsembleModel::EnsembleModel(Architecture arch, SegmentationScheme scheme, Profile profile,
                             bool shared_heads, ModelSpec spec, ParameterStore params)
    : arch_(arch),
      scheme_(scheme),
      profile_(std::move(profile)),
      shared_heads_(shared_heads),
      spec_(std::move(spec)),
      params_(std::move(params)) {
    const std::size_t side = arch_ == Architecture::Proposed ? profile_.latent_side()
                                                             : profile_.input_side / 8;
    plan_ = plan_blocks(scheme_, side, side);
    require(spec_.heads.size() == plan_.voter_count(), ErrorCode::Invariant,
            "model has " + std::to_string(spec_.heads.size()) + " heads but the plan has " +
                std::to_string(plan_.voter_count()) + " voters");
}

ForwardResult EnsembleModel::forward(Tape<float>& tape, VarId images, Mode mode, bool track_grad) {
    return sgf::forward(spec_, params_, tape, images, mode, track_grad);
}

std::vector<VoteResult> EnsembleModel::predict(const TensorF& images) const {
    TensorF batch = images.rank() == 3
                        ? images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)})
                        : images;
    require(batch.rank() == 4, ErrorCode::ShapeMismatch,
            "predict: expected [n, h, w, 3], got " + to_string(images.shape()));
    Tape<float> tape;
    const VarId in = tape.constant(std::move(batch));
    // Infer mode never writes to the parameter store.
    auto& params = const_cast<ParameterStore&>(params_);
    const auto fwd = sgf::forward(spec_, params, tape, in, Mode::Infer, false);
    const std::size_t n = tape.value(in).dim(0);
    std::vector<VoteResult> results;
    results.reserve(n);
    std::vector<Vote> votes(fwd.heads.size());
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t h = 0; h < fwd.heads.size(); ++h) {
            const auto& probs = tape.value(fwd.heads[h]);
            const double p_real = probs[s * 2 + 1];
            votes[h] = {label_from_prob(p_real), p_real};
        }
        results.push_back(hard_vote(votes));
    }
    return results;
}

EnsembleModel build_model(Architecture arch, const SegmentationScheme& scheme,
                          const Profile& profile, Rng& rng, bool shared_heads) {
    ModelSpec spec;
    switch (arch) {
        case Architecture::Proposed: spec = build_proposed_spec(scheme, profile, shared_heads); break;
        case Architecture::Mesonet:
            require(scheme.kind == SchemeKind::Ori, ErrorCode::InvalidArgument,
                    "the mesonet baseline has no segmentation; use mesonet-seg for scheme " +
                        scheme.name());
            spec = build_mesonet(profile);
            break;
        case Architecture::MesonetSeg: spec = build_segmented_mesonet(scheme, profile); break;
    }
    ParameterStore params = initialize_parameters(spec, rng);
    return EnsembleModel(arch, scheme, profile, shared_heads, std::move(spec), std::move(params));
}

EnsembleModel build_ensemble(const SegmentationScheme& scheme, const Profile& profile, Rng& rng,
                             bool shared_heads) {
    return build_model(Architecture::Proposed, scheme, profile, rng, shared_heads);
}

VoteResult forward_ensemble(const EnsembleModel& model, const TensorF& image) {
    const Shape expected{model.profile().input_side, model.profile().input_side, 3};
    require(image.shape() == expected, ErrorCode::ShapeMismatch,
            "forward_ensemble: expected image " + to_string(expected) + ", got " +
                to_string(image.shape()));
    return model.predict(image).front();
}

}  // namespace sgf
