#include "sea/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sea/errors.hpp"
#include "sea/model.hpp"
#include "sea/rng.hpp"

namespace sea {

namespace {
constexpr double kTau = 6.283185307179586476925286766559;
}

DataKind parse_data_kind(const std::string& s) {
    if (s == "blobs") return DataKind::Blobs;
    if (s == "rings") return DataKind::Rings;
    if (s == "textures") return DataKind::Textures;
    throw ConfigError("unknown dataset kind '" + s + "' (want blobs|rings|textures)");
}

const char* data_kind_name(DataKind kind) {
    switch (kind) {
        case DataKind::Blobs: return "blobs";
        case DataKind::Rings: return "rings";
        case DataKind::Textures: return "textures";
    }
    return "?";
}

ImageShape Dataset::shape() const {
    return ImageShape{inputs.dim(1), inputs.dim(2), inputs.dim(3)};
}

Tensor Dataset::gather_inputs(const std::vector<std::size_t>& indices) const {
    const std::size_t sample = inputs.numel() / inputs.dim(0);
    Tensor out = Tensor::zeros({indices.size(), inputs.dim(1), inputs.dim(2), inputs.dim(3)});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = inputs.data.data() + indices[i] * sample;
        std::copy(src, src + sample, out.data.data() + i * sample);
    }
    return out;
}

std::vector<int> Dataset::gather_labels(const std::vector<std::size_t>& indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels[indices[i]];
    return out;
}

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void fill_splits(Dataset& ds) {
    // Every 4th sample of each class goes to test: balanced, disjoint, covering.
    const std::size_t n = ds.size();
    for (std::size_t i = 0; i < n; ++i) {
        if ((i / static_cast<std::size_t>(ds.classes)) % 4 == 0) {
            ds.test_indices.push_back(i);
        } else {
            ds.train_indices.push_back(i);
        }
    }
}

} // namespace

Dataset generate_dataset(DataKind kind, std::size_t n, int classes, ImageShape shape,
                         std::uint64_t seed) {
    if (classes < 2) throw ConfigError("generate_dataset: classes must be >= 2");
    if (n < static_cast<std::size_t>(classes)) {
        throw ConfigError("generate_dataset: n=" + std::to_string(n) + " < classes=" +
                          std::to_string(classes));
    }
    if (shape.channels == 0 || shape.height == 0 || shape.width == 0) {
        throw ConfigError("generate_dataset: image shape must be positive");
    }

    const std::size_t c = shape.channels, h = shape.height, w = shape.width;
    Dataset ds;
    ds.classes = classes;
    ds.gen_seed = seed;
    ds.inputs = Tensor::zeros({n, c, h, w});
    ds.labels.resize(n);

    std::ostringstream id;
    id << data_kind_name(kind) << "-" << n << "-" << classes << "-" << h << "x" << w << "-s" << seed;
    ds.id = id.str();

    Rng rng(derive_seed(seed, stream::kData));
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double extent = static_cast<double>(std::min(h, w));

    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
        ds.labels[i] = label;
        double* img = ds.inputs.data.data() + i * c * h * w;

        switch (kind) {
            case DataKind::Blobs: {
                const double ang = kTau * static_cast<double>(label) / classes;
                const double jx = rng.uniform(-1.2, 1.2);
                const double jy = rng.uniform(-1.2, 1.2);
                const double bx = cx + 0.30 * extent * std::cos(ang) + jx;
                const double by = cy + 0.30 * extent * std::sin(ang) + jy;
                const double sigma = 0.14 * extent;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t x = 0; x < w; ++x) {
                            const double d2 = (static_cast<double>(x) - bx) * (static_cast<double>(x) - bx) +
                                              (static_cast<double>(y) - by) * (static_cast<double>(y) - by);
                            const double v = 0.9 * std::exp(-d2 / (2.0 * sigma * sigma)) +
                                             rng.normal(0.0, 0.05);
                            img[(ch * h + y) * w + x] = clamp01(v);
                        }
                    }
                }
                break;
            }
            case DataKind::Rings: {
                const double radius = extent * (0.10 + 0.32 * static_cast<double>(label) /
                                                           static_cast<double>(classes - 1));
                const double jx = rng.uniform(-0.8, 0.8);
                const double jy = rng.uniform(-0.8, 0.8);
                const double width = 0.9;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t x = 0; x < w; ++x) {
                            const double dist = std::sqrt(
                                (static_cast<double>(x) - cx - jx) * (static_cast<double>(x) - cx - jx) +
                                (static_cast<double>(y) - cy - jy) * (static_cast<double>(y) - cy - jy));
                            const double v = 0.85 * std::exp(-(dist - radius) * (dist - radius) /
                                                             (2.0 * width * width)) +
                                             rng.normal(0.0, 0.05);
                            img[(ch * h + y) * w + x] = clamp01(v);
                        }
                    }
                }
                break;
            }
            case DataKind::Textures: {
                // Class-dependent grating orientation; phase and contrast are
                // randomized per sample so decision margins vary. Orientations
                // sit about 13 degrees apart (for 8 classes), which keeps per-sample
                // signal strong but class separation fine-grained.
                const double theta = kTau / 3.4 * static_cast<double>(label) / classes;
                const double freq = 2.5 / extent;
                const double phase = rng.uniform(0.0, kTau);
                const double amp = rng.uniform(0.07, 0.16);
                const double ct = std::cos(theta), st = std::sin(theta);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double chphase = phase + 0.7 * static_cast<double>(ch);
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t x = 0; x < w; ++x) {
                            const double proj = static_cast<double>(x) * ct + static_cast<double>(y) * st;
                            const double v = 0.5 + amp * std::sin(kTau * freq * proj + chphase) +
                                             rng.normal(0.0, 0.06);
                            img[(ch * h + y) * w + x] = clamp01(v);
                        }
                    }
                }
                break;
            }
        }
    }

    fill_splits(ds);
    return ds;
}

namespace {

struct ByteReader {
    std::vector<unsigned char> bytes;
    std::size_t offset = 0;
    std::string path;

    explicit ByteReader(const std::string& p) : path(p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw FormatError("cannot open '" + p + "'");
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void need(std::size_t n, const char* what) {
        if (offset + n > bytes.size()) {
            throw FormatError("'" + path + "': truncated reading " + what + " at offset " +
                              std::to_string(offset) + " (need " + std::to_string(n) +
                              " bytes, " + std::to_string(bytes.size() - offset) + " left)");
        }
    }

    std::uint32_t read_u32_be(const char* what) {
        need(4, what);
        std::uint32_t v = (static_cast<std::uint32_t>(bytes[offset]) << 24) |
                          (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
                          (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
                          static_cast<std::uint32_t>(bytes[offset + 3]);
        offset += 4;
        return v;
    }
};

std::string base_name(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    ByteReader img(images_path);
    const std::uint32_t img_magic = img.read_u32_be("images magic");
    if (img_magic != 0x00000803u) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "0x%08x", img_magic);
        throw FormatError("'" + images_path + "': bad images magic " + buf +
                          " at offset 0 (want 0x00000803)");
    }
    const std::uint32_t count = img.read_u32_be("image count");
    const std::uint32_t rows = img.read_u32_be("rows");
    const std::uint32_t cols = img.read_u32_be("cols");
    const std::size_t pixels = static_cast<std::size_t>(count) * rows * cols;
    img.need(pixels, "pixel data");

    ByteReader lab(labels_path);
    const std::uint32_t lab_magic = lab.read_u32_be("labels magic");
    if (lab_magic != 0x00000801u) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "0x%08x", lab_magic);
        throw FormatError("'" + labels_path + "': bad labels magic " + buf +
                          " at offset 0 (want 0x00000801)");
    }
    const std::uint32_t lab_count = lab.read_u32_be("label count");
    if (lab_count != count) {
        throw FormatError("count mismatch: '" + images_path + "' has " + std::to_string(count) +
                          " images but '" + labels_path + "' has " + std::to_string(lab_count) +
                          " labels");
    }
    lab.need(lab_count, "label data");

    Dataset ds;
    ds.gen_seed = 0;
    ds.id = "idx-" + base_name(images_path);
    ds.inputs = Tensor::zeros({count, 1, rows, cols});
    ds.labels.resize(count);
    int max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const int y = static_cast<int>(lab.bytes[lab.offset + i]);
        ds.labels[i] = y;
        max_label = std::max(max_label, y);
    }
    ds.classes = max_label + 1;
    for (std::size_t i = 0; i < pixels; ++i) {
        ds.inputs.data[i] = static_cast<double>(img.bytes[img.offset + i]) / 255.0;
    }
    fill_splits(ds);
    return ds;
}

EvalSet build_eval_set(const Dataset& dataset, const ModelPool& pool, std::size_t n,
                       std::uint64_t seed) {
    if (dataset.test_indices.empty()) {
        throw ConfigError("build_eval_set: dataset has an empty test split");
    }

    const Tensor test_x = dataset.gather_inputs(dataset.test_indices);
    const std::vector<int> test_y = dataset.gather_labels(dataset.test_indices);

    std::vector<bool> ok(dataset.test_indices.size(), true);
    auto apply_model = [&](const Model& m) {
        const Tensor l = m.logits(test_x);
        const std::size_t k = l.dim(1);
        for (std::size_t i = 0; i < ok.size(); ++i) {
            if (!ok[i]) continue;
            const double* row = l.data.data() + i * k;
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (static_cast<int>(best) != test_y[i]) ok[i] = false;
        }
    };
    for (const Model& m : pool.surrogates) apply_model(m);
    for (const Model& m : pool.targets) apply_model(m);

    std::vector<std::size_t> qualifying;
    for (std::size_t i = 0; i < ok.size(); ++i) {
        if (ok[i]) qualifying.push_back(dataset.test_indices[i]);
    }
    if (qualifying.size() < n) {
        throw ConfigError("build_eval_set: requested " + std::to_string(n) +
                          " samples but only " + std::to_string(qualifying.size()) +
                          " are classified correctly by all " +
                          std::to_string(pool.surrogates.size() + pool.targets.size()) +
                          " pool models");
    }

    Rng rng(derive_seed(seed, stream::kEval));
    const std::vector<int> pick = rng.sample_indices(static_cast<int>(qualifying.size()),
                                                     static_cast<int>(n));
    EvalSet es;
    es.indices.reserve(n);
    for (int p : pick) es.indices.push_back(qualifying[static_cast<std::size_t>(p)]);
    std::sort(es.indices.begin(), es.indices.end());

    // Independent re-verification of the correctness constraint.
    const Tensor sel_x = dataset.gather_inputs(es.indices);
    const std::vector<int> sel_y = dataset.gather_labels(es.indices);
    auto verify_model = [&](const Model& m) {
        const Tensor l = m.logits(sel_x);
        const std::size_t k = l.dim(1);
        for (std::size_t i = 0; i < es.indices.size(); ++i) {
            const double* row = l.data.data() + i * k;
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (static_cast<int>(best) != sel_y[i]) {
                throw StateError("build_eval_set: post-construction verification failed for model " +
                                 m.spec.id() + " on sample " + std::to_string(es.indices[i]));
            }
        }
    };
    for (const Model& m : pool.surrogates) verify_model(m);
    for (const Model& m : pool.targets) verify_model(m);

    return es;
}

} // namespace sea
