#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sea/tensor.hpp"

namespace sea {

struct Model;
struct ModelPool;

enum class DataKind { Blobs, Rings, Textures };

DataKind parse_data_kind(const std::string& s);
const char* data_kind_name(DataKind kind);

struct ImageShape {
    std::size_t channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;

    bool operator==(const ImageShape&) const = default;
};

// Labeled image-like samples in [0,1], with a deterministic train/test
// split baked in at construction.
struct Dataset {
    std::string id;                 // e.g. "textures-4000-8-16x16-s7"
    Tensor inputs;                  // [N, C, H, W]
    std::vector<int> labels;        // length N, values in [0, classes)
    int classes = 0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t gen_seed = 0;

    std::size_t size() const { return labels.size(); }
    ImageShape shape() const;

    // Copies the selected samples into a contiguous batch.
    Tensor gather_inputs(const std::vector<std::size_t>& indices) const;
    std::vector<int> gather_labels(const std::vector<std::size_t>& indices) const;
};

// Deterministic synthetic datasets. Labels are assigned round-robin so the
// class histogram is balanced within +-1; every 4th sample per class goes
// to the test split.
Dataset generate_dataset(DataKind kind, std::size_t n, int classes, ImageShape shape,
                         std::uint64_t seed);

// IDX ingestion (big-endian headers). Images file: magic 0x00000803, count,
// rows, cols, u8 pixels. Labels file: magic 0x00000801, count, u8 labels.
// Pixels are scaled to [0,1] by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Indices into a dataset's test split such that every pool model classifies
// each selected sample correctly.
struct EvalSet {
    std::vector<std::size_t> indices;
};

EvalSet build_eval_set(const Dataset& dataset, const ModelPool& pool, std::size_t n,
                       std::uint64_t seed);

} // namespace sea
