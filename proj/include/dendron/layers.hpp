#ifndef DENDRON_LAYERS_HPP
#define DENDRON_LAYERS_HPP

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "dendron/tensor.hpp"

namespace dendron {

// A parameter tensor with its gradient accumulator. Frozen parameters are
// never touched by an optimizer step; their values stay bit-identical for
// the lifetime of the model.
struct Param {
    Tensor value;
    Tensor grad;
    bool frozen = false;

    explicit Param(Tensor v) : value(std::move(v)), grad(value.shape()) {}
    Param() = default;

    void zero_grad() { grad.fill(0.0); }
};

// ---- Layer descriptors ----------------------------------------------------
//
// A LayerStack is pure structure: an ordered list of descriptors. Parameters
// live outside in a flat list whose order matches the stack (see
// param_shapes). This keeps freezing and persistence independent of the
// forward machinery.

struct AffineDesc {
    std::size_t in = 0, out = 0;
};

struct NonlinearityDesc {
    enum Kind : std::uint8_t { kRelu = 0 };
    Kind kind = kRelu;
};

// Per-sample normalization over the feature dimension followed by a
// learnable gain and bias. Statistics are computed per example, so the
// output of a row never depends on what else is in the batch.
struct FeatureNormDesc {
    std::size_t dim = 0;
    static constexpr double kEpsilon = 1e-10;
};

// Residual MLP block: x + g(x) with g = Affine -> FeatureNorm -> ReLU ->
// Affine. In train mode the whole branch is kept with probability
// survival_prob (drawn once per block per batch); in eval mode the branch
// is scaled by survival_prob.
struct ResidualBlockDesc {
    std::size_t width = 0;
    double survival_prob = 1.0;
};

using LayerDesc = std::variant<AffineDesc, NonlinearityDesc, FeatureNormDesc, ResidualBlockDesc>;

struct LayerStack {
    std::vector<LayerDesc> layers;

    LayerStack() = default;
    explicit LayerStack(std::vector<LayerDesc> l) : layers(std::move(l)) {}

    std::size_t param_count() const;
    // Shapes of the parameter tensors this stack expects, in consumption
    // order. Affine contributes {in,out} + {out}; FeatureNorm {dim} + {dim};
    // ResidualBlock the six tensors of its inner layers.
    std::vector<std::vector<std::size_t>> param_shapes() const;

    // Feature width entering / leaving the stack; 0 means "any" (stack is
    // empty or starts with a width-agnostic layer).
    std::size_t input_width() const;
    std::size_t output_width(std::size_t input) const;

    // Throws ValidationError on inconsistent widths or survival probs.
    void validate() const;
};

enum class Mode { kTrain, kEval };

// Activations saved by a traced forward pass, consumed by backward().
// block_scale holds one entry per ResidualBlock in forward order: 0.0 when
// the branch was dropped (train mode), 1.0 when kept, survival_prob in eval
// mode.
struct ForwardTrace {
    std::vector<Tensor> saved;
    std::vector<double> block_scale;
};

// He-style fan-in initialization for affine weights, zero biases, unit
// feature-norm gains. Appends freshly constructed params for `stack` onto
// `out`.
void init_params(const LayerStack& stack, Rng& rng, std::vector<Param>& out);

// Runs the stack over input [N x D]. In train mode `rng` must be non-null;
// one uniform is drawn per residual block per call. When `trace` is
// non-null every intermediate needed by backward() is recorded.
Tensor forward(const LayerStack& stack, std::span<const Param> params, const Tensor& input,
               Mode mode, Rng* rng = nullptr, ForwardTrace* trace = nullptr);

// Reverse pass over a traced forward. Accumulates parameter gradients into
// params[i].grad (all of them, frozen or not) and returns dL/dinput.
Tensor backward(const LayerStack& stack, std::span<Param> params, const ForwardTrace& trace,
                const Tensor& grad_output);

// Row-wise stable softmax of logits [N x C].
Tensor softmax(const Tensor& logits);

// Mean cross-entropy of logits [N x C] against integer labels in [0, C).
// When grad_logits is non-null it receives dLoss/dlogits (shape of logits).
double cross_entropy_loss(const Tensor& logits, std::span<const std::int32_t> labels,
                          Tensor* grad_logits = nullptr);

} // namespace dendron

#endif
