#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgf/ops.hpp"
#include "sgf/segmentation.hpp"

namespace sgf {

enum class LayerKind {
    Input,
    Conv2D,
    SeparableConv2D,
    BatchNorm,
    Activation,
    MaxPool,
    GlobalAvgPool,
    Flatten,
    Dense,
    Segment,
    ResidualAdd,
};

enum class Activation { None, Relu, LeakyRelu, Softmax };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);

/// One row of a layer table. `inputs` names the previous layer(s), so a
/// ModelSpec is a DAG listed in execution order.
struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Input;
    std::vector<std::string> inputs;
    std::size_t units = 0;   // output channels (conv) or width (dense)
    std::size_t kernel = 0;  // conv kernel side or pooling window
    Activation activation = Activation::None;
    bool use_bias = true;
    bool projection = false;  // ResidualAdd: 1x1 projection on the skip path
    PoolRounding rounding = PoolRounding::Exact;
    Block block{};            // Segment only
    std::string param_key;    // parameter prefix; several layers may share one
    Shape output_shape;       // per-sample, filled by infer_shapes()

    const std::string& key() const { return param_key.empty() ? name : param_key; }
};

struct ModelSpec {
    std::string name;
    Shape input_shape;
    std::vector<LayerSpec> layers;
    std::vector<std::string> heads;

    /// Validates the DAG and fills every output_shape; throws on mismatch.
    void infer_shapes();
    const LayerSpec& layer(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;
};

struct ParamInfo {
    std::string name;  // full key, e.g. "Conv2D_1.kernel"
    Shape shape;
    bool trainable = true;
    std::size_t fan_in = 0;  // 0: not randomly initialised
    float fill = 0.0f;
};

/// Parameters a layer owns, given its input shape(s).
std::vector<ParamInfo> layer_parameters(const LayerSpec& layer, const std::vector<Shape>& inputs);

struct LayerSummary {
    std::string name;
    std::string kind;
    Shape output_shape;
    std::size_t trainable = 0;
    std::size_t non_trainable = 0;
    std::size_t params() const { return trainable + non_trainable; }
};

struct ModelSummary {
    std::vector<LayerSummary> rows;
    std::size_t trainable = 0;
    std::size_t non_trainable = 0;
    std::size_t total() const { return trainable + non_trainable; }
    std::string to_table() const;
};

/// Per-layer output shape and parameter counts. Shared parameter keys are
/// counted once, at their first layer.
ModelSummary model_summary(ModelSpec spec);

/// Closed forms used to cross-check model_summary.
std::size_t conv2d_param_count(std::size_t c_in, std::size_t c_out, std::size_t k);
std::size_t separable_param_count(std::size_t c_in, std::size_t c_out, std::size_t k);

// ---------------------------------------------------------------------------

/// Input size and extractor widths. "full" is the 256x256 network;
/// "desk" shrinks it for CPU-scale experiments.
struct Profile {
    std::string name;
    std::size_t input_side = 256;
    std::array<std::size_t, 3> extractor_channels{32, 64, 128};

    std::size_t latent_side() const { return input_side / 8; }
    std::size_t latent_channels() const { return extractor_channels[2]; }

    static Profile full() { return {"full", 256, {32, 64, 128}}; }
    static Profile desk() { return {"desk", 64, {16, 32, 64}}; }
};
Profile parse_profile(std::string_view name);

enum class Architecture { Proposed, Mesonet, MesonetSeg };
Architecture parse_architecture(std::string_view name);
std::string_view to_string(Architecture arch);

/// Three [conv 3x3 -> batchnorm -> relu -> maxpool 2] blocks; 256x256x3 to
/// 32x32x128 in the full profile.
ModelSpec build_feature_extractor(const Profile& profile = Profile::full());

/// Smallest block side the SModel head accepts.
inline constexpr std::size_t kSModelMinSide = 4;

/// Standalone block classifier on an [rows, cols, input_channels] block.
ModelSpec build_smodel(std::size_t input_channels, std::size_t rows, std::size_t cols);

/// The Mesonet table: conv/bn/pool ladder, flatten, dense 1024 -> 16 -> 2.
ModelSpec build_mesonet(const Profile& profile = Profile::full());

/// Mesonet front half through BatchNorm_4, then one separable head per block.
ModelSpec build_segmented_mesonet(const SegmentationScheme& scheme,
                                  const Profile& profile = Profile::full());

// ---------------------------------------------------------------------------

/// Named parameter tensors in a stable (sorted) order.
class ParameterStore {
public:
    void add(const std::string& name, TensorF value, bool trainable);
    bool contains(const std::string& name) const { return values_.count(name) > 0; }
    TensorF& at(const std::string& name);
    const TensorF& at(const std::string& name) const;
    bool trainable(const std::string& name) const { return !frozen_.count(name); }
    const std::map<std::string, TensorF>& values() const { return values_; }
    std::size_t scalar_count() const;

    friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

private:
    std::map<std::string, TensorF> values_;
    std::set<std::string> frozen_;
};

/// He-normal weights, zero biases, unit gamma, zero beta, unit running
/// variance; drawn in layer order from `rng`.
ParameterStore initialize_parameters(const ModelSpec& spec, Rng& rng);

struct ForwardResult {
    std::vector<VarId> heads;                // one [n, 2] probability tensor per head
    std::map<std::string, VarId> parameters; // tape leaves bound to each parameter
};

/// Runs the DAG on a batch [n, h, w, c]. In Train mode batch statistics are
/// used and the running buffers in `params` are updated. Parameters are bound
/// as gradient-tracking leaves only when `track_grad` is set.
ForwardResult forward(const ModelSpec& spec, ParameterStore& params, Tape<float>& tape,
                      VarId input, Mode mode, bool track_grad);

// ---------------------------------------------------------------------------

/// Feature extractor + segmentation scheme + one classifier head per block,
/// combined by hard voting. Also hosts the Mesonet baselines, which are the
/// same object with Mesonet layers.
class EnsembleModel {
public:
    EnsembleModel(Architecture arch, SegmentationScheme scheme, Profile profile,
                  bool shared_heads, ModelSpec spec, ParameterStore params);

    Architecture architecture() const { return arch_; }
    const SegmentationScheme& scheme() const { return scheme_; }
    const Profile& profile() const { return profile_; }
    bool shared_heads() const { return shared_heads_; }
    const ModelSpec& spec() const { return spec_; }
    const BlockPlan& plan() const { return plan_; }
    std::size_t head_count() const { return spec_.heads.size(); }
    ParameterStore& parameters() { return params_; }
    const ParameterStore& parameters() const { return params_; }

    /// [n, side, side, 3] -> one [n, 2] head output per voter. Train mode
    /// updates batchnorm running statistics.
    ForwardResult forward(Tape<float>& tape, VarId images, Mode mode, bool track_grad);

    /// Inference on a batch [n, side, side, 3] (or one [side, side, 3] image).
    /// Safe to call concurrently on a model that is not being trained.
    std::vector<VoteResult> predict(const TensorF& images) const;

private:
    Architecture arch_;
    SegmentationScheme scheme_;
    Profile profile_;
    bool shared_heads_;
    ModelSpec spec_;
    BlockPlan plan_;
    ParameterStore params_;
};

/// Builds and initialises a model. The latent plan is computed on the
/// extractor output (proposed) or the BatchNorm_4 output (mesonet-seg);
/// plain mesonet only supports the ori scheme.
EnsembleModel build_model(Architecture arch, const SegmentationScheme& scheme,
                          const Profile& profile, Rng& rng, bool shared_heads = false);

/// The proposed architecture: extractor + per-block SModel heads.
EnsembleModel build_ensemble(const SegmentationScheme& scheme, const Profile& profile, Rng& rng,
                             bool shared_heads = false);

/// Single image [side, side, 3] with values in [0, 1] -> voting result.
VoteResult forward_ensemble(const EnsembleModel& model, const TensorF& image);

}  // namespace sgf
