#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sea/dataset.hpp"
#include "sea/graph.hpp"
#include "sea/tensor.hpp"

namespace sea {

enum class Family { Mlp, CnnSmall, CnnWide, CnnDeep };

Family parse_family(const std::string& s);
const char* family_name(Family family);

struct ArchSpec {
    Family family = Family::Mlp;
    int variant = 1; // width/depth knob, >= 1
    ImageShape input;
    int classes = 8;

    std::string id() const; // "mlp-1", "cnn-deep-3", ...
    bool operator==(const ArchSpec&) const = default;
};

struct TrainMeta {
    bool trained = false;
    std::string dataset_id;
    int epochs = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// A classifier: architecture plus named parameter tensors. Immutable after
// construction/training and safe to share read-only across threads.
struct Model {
    ArchSpec spec;
    TensorMap params;
    TrainMeta meta;

    // Graph ending at the logits [N, classes]; inputs: "x" + params.
    std::shared_ptr<const Graph> logits_graph;
    // Graph ending at mean softmax cross-entropy; inputs: "x", "y" + params.
    std::shared_ptr<const Graph> loss_graph;

    Tensor logits(const Tensor& x) const;
    int predict_one(const Tensor& x_single) const;
    TensorMap bind(const Tensor& x) const;

    // He fan-in initialization, deterministic in (spec, seed).
    static Model build(const ArchSpec& spec, std::uint64_t init_seed);
};

// Expected parameter shapes for a spec, in graph construction order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> param_layout(const ArchSpec& spec);

// SGD with momentum 0.9, batch 32, lr halved at 1/2 and 3/4 of the run.
// Deterministic in (model, dataset, train_seed). Throws TrainError naming
// the epoch if the loss goes non-finite.
Model train(const Model& model, const Dataset& dataset, int epochs, double lr,
            std::uint64_t train_seed);

double accuracy(const Model& model, const Dataset& dataset,
                const std::vector<std::size_t>& indices);

// Binary weight format: magic "SEAM", u32 version, length-prefixed UTF-8
// descriptor, u32 param count, then per parameter name/rank/dims/f64 data.
// All integers little-endian. Round-trips are bit-exact.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

constexpr std::uint32_t kWeightFormatVersion = 1;

// The ordered surrogate set plus held-out targets.
struct ModelPool {
    std::vector<Model> surrogates;
    std::vector<Model> targets;
    double admission_threshold = 0.85;

    std::size_t s() const { return surrogates.size(); }
    void validate() const; // disjointness, admission, distinctness
};

// Default zoo composition: surrogates cycle through the four families with
// variants 1..5 (then 7, 8, ... if s > 20); targets are variant 6, one per
// family. Restricting to one family draws surrogate variants 1..s from it.
struct ZooSpec {
    int surrogate_count = 20;
    int target_count = 4;
    ImageShape input;
    int classes = 8;
    bool single_family = false;
    Family family = Family::Mlp;
};

std::vector<ArchSpec> zoo_surrogate_specs(const ZooSpec& zoo);
std::vector<ArchSpec> zoo_target_specs(const ZooSpec& zoo);

struct TrainRecipe {
    int epochs = 0;     // 0 -> per-family default
    double lr = 0.0;    // 0 -> per-family default
};

int default_epochs(Family family);
double default_lr(Family family);

// Builds and trains the full pool; deterministic in (zoo, dataset, seed).
ModelPool train_pool(const ZooSpec& zoo, const Dataset& dataset, std::uint64_t seed,
                     const TrainRecipe& recipe = {}, double admission_threshold = 0.85);

void save_pool(const ModelPool& pool, const std::string& dir);
ModelPool load_pool(const std::string& dir);

} // namespace sea
