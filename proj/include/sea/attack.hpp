#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sea/model.hpp"
#include "sea/rng.hpp"
#include "sea/selection.hpp"
#include "sea/tensor.hpp"

namespace sea {

enum class Fusion { LogitAvg, LossAvg };

Fusion parse_fusion(const std::string& s);
const char* fusion_name(Fusion fusion);

// Transfer techniques layered on the momentum update of the core loop.
// Parsed from "none" or '-' joined tokens of {MI,NI,DI,TI,SI}; MI is the
// bare loop, NI adds the Nesterov lookahead, DI/TI/SI add their transforms.
struct BaselineSpec {
    bool nesterov = false;
    bool input_diversity = false;
    bool kernel_smoothing = false;
    bool scale_invariance = false;
    std::string canonical = "MI";

    static BaselineSpec parse(const std::string& s);
};

struct AttackConfig {
    double epsilon = 16.0 / 255.0; // L-inf budget in [0,1] pixel units
    int iterations = 10;           // T
    double alpha = 0.0;            // step size; <= 0 selects epsilon / T
    double mu = 1.0;               // momentum decay
    Fusion fusion = Fusion::LogitAvg;
    std::string baseline = "MI";
    double di_prob = 0.5;  // DI transform probability p
    int ti_kernel = 7;     // TI kernel side k (odd)
    int si_copies = 5;     // SI scale copies N
    bool targeted = false; // descend toward (label+1) mod classes
    std::uint64_t selection_seed = 0;
    std::uint64_t transform_seed = 0;
    bool record_gradients = false; // keep per-model gradient snapshots

    double step_size() const { return alpha > 0.0 ? alpha : epsilon / iterations; }
    void validate() const;
};

// Target label rule for targeted attacks.
std::vector<int> derive_target_labels(const std::vector<int>& labels, int classes);

struct EvalCounters {
    std::vector<std::uint64_t> forward;  // per surrogate pool index
    std::vector<std::uint64_t> backward;

    std::uint64_t total_forward() const;
    std::uint64_t total_backward() const;
};

// Per-model input-gradient snapshots for one iteration, aligned with the
// chosen model indices. Gradients are raw per-sample cross-entropy
// gradients, taken before L1 normalization and TI smoothing.
struct IterationSnapshot {
    std::vector<int> model_indices;
    std::vector<Tensor> gradients; // each [N, C, H, W]
};

struct AttackTrace {
    SelectionTrace selection;
    EvalCounters counters;
    std::vector<IterationSnapshot> snapshots; // empty unless record_gradients
    int iterations = 0;
    std::size_t peak_resident_params = 0; // max summed param count of one iteration's models
};

struct AttackResult {
    Tensor adversarial; // [N, C, H, W]
    AttackTrace trace;
};

struct FuseResult {
    double loss = 0.0;
    Tensor grad;
    std::vector<Tensor> per_model_grads; // filled on request
};

// Equal-weight fusion of >= 1 models at x: logit mode evaluates the loss of
// the averaged logits, loss mode averages per-model losses. Returns the
// scalar objective and its exact input gradient. `pool_ids` maps each model
// to its counter slot; pass nullptr counters to skip accounting.
FuseResult fuse(const std::vector<const Model*>& models, const Tensor& x,
                const std::vector<int>& labels, Fusion mode, bool targeted,
                bool want_per_model = false, EvalCounters* counters = nullptr,
                const std::vector<int>* pool_ids = nullptr);

namespace detail {
// Per-sample gather map realizing one DI draw; empty map means identity.
struct DiMaps {
    std::size_t height = 0, width = 0;
    std::vector<std::vector<long>> maps; // per sample: H*W source pixel or -1
};
DiMaps make_di_maps(std::size_t n, std::size_t h, std::size_t w, double p, Rng& rng);
Tensor di_gather(const Tensor& x, const DiMaps& maps);
Tensor di_scatter(const Tensor& grad, const DiMaps& maps); // adjoint of di_gather
} // namespace detail

// DI transform: with probability p per sample, nearest-neighbor resize to a
// random size in [H, ceil(1.15 H)], random zero-pad to the fixed canvas,
// resize back to H. Output shape equals input shape.
Tensor transform_di(const Tensor& x, double p, Rng& rng);

// TI smoothing: depthwise convolution with the normalized k x k triangle
// kernel, zero padding, same shape. k must be odd and <= H.
Tensor smooth_ti(const Tensor& grad, int k);

// SI gradient: mean fused gradient over scale copies x / 2^i, i = 0..N-1.
Tensor grads_si(const std::vector<const Model*>& models, const Tensor& x,
                const std::vector<int>& labels, int copies, Fusion mode, bool targeted,
                EvalCounters* counters = nullptr, const std::vector<int>* pool_ids = nullptr);

struct MomentumState {
    Tensor g;      // accumulated momentum, [N, C, H, W]
    Tensor x_adv;  // current iterate
    Tensor x_orig; // clean inputs (projection center)
};

// One MI update: g <- mu g + grad/||grad||_1 (per sample; a zero-gradient
// sample lets the momentum term carry alone), then the signed step,
// epsilon-ball projection, and [0,1] clamp.
void step_momentum(MomentumState& state, const Tensor& grad, double mu, double alpha,
                   double epsilon);

// Full iterative attack over a batch. Models in `surrogates` are indexed by
// the selection module; invariants (L-inf ball, [0,1] box) are asserted at
// every iteration boundary.
AttackResult run_attack(const std::vector<const Model*>& surrogates, const Tensor& x,
                        const std::vector<int>& labels, const AttackConfig& config,
                        const SelectionConfig& selection);

} // namespace sea
