#include "sea/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sea/errors.hpp"
#include "sea/rng.hpp"

namespace sea {

Family parse_family(const std::string& s) {
    if (s == "mlp") return Family::Mlp;
    if (s == "cnn-small") return Family::CnnSmall;
    if (s == "cnn-wide") return Family::CnnWide;
    if (s == "cnn-deep") return Family::CnnDeep;
    throw ConfigError("unknown model family '" + s + "'");
}

const char* family_name(Family family) {
    switch (family) {
        case Family::Mlp: return "mlp";
        case Family::CnnSmall: return "cnn-small";
        case Family::CnnWide: return "cnn-wide";
        case Family::CnnDeep: return "cnn-deep";
    }
    return "?";
}

std::string ArchSpec::id() const {
    return std::string(family_name(family)) + "-" + std::to_string(variant);
}

namespace {

struct ArchDims {
    std::size_t mlp_hidden(int v) const { return 40 + 8 * static_cast<std::size_t>(v); }
    std::size_t cnn_small_ch(int v) const { return 4 + 2 * static_cast<std::size_t>(v); }
    std::size_t cnn_small_hidden(int v) const { return 32 + 8 * static_cast<std::size_t>(v); }
    std::size_t cnn_wide_ch(int v) const { return 8 + 4 * static_cast<std::size_t>(v); }
    std::size_t cnn_wide_hidden(int v) const { return 40 + 8 * static_cast<std::size_t>(v); }
    std::size_t cnn_deep_ch1(int v) const { return 6 + static_cast<std::size_t>(v); }
    std::size_t cnn_deep_ch2(int v) const { return 8 + 2 * static_cast<std::size_t>(v); }
};

void validate_spec(const ArchSpec& spec) {
    if (spec.variant < 1) throw ConfigError("arch " + spec.id() + ": variant must be >= 1");
    if (spec.classes < 2) throw ConfigError("arch " + spec.id() + ": classes must be >= 2");
    const std::size_t h = spec.input.height, w = spec.input.width;
    if (spec.input.channels == 0 || h == 0 || w == 0) {
        throw ConfigError("arch " + spec.id() + ": input shape must be positive");
    }
    switch (spec.family) {
        case Family::Mlp: break;
        case Family::CnnSmall:
        case Family::CnnWide:
            if (h % 2 != 0 || w % 2 != 0) {
                throw ConfigError("arch " + spec.id() + ": input spatial dims must be even");
            }
            break;
        case Family::CnnDeep:
            if (h % 4 != 0 || w % 4 != 0) {
                throw ConfigError("arch " + spec.id() + ": input spatial dims must be divisible by 4");
            }
            break;
    }
}

} // namespace

std::vector<std::pair<std::string, std::vector<std::size_t>>> param_layout(const ArchSpec& spec) {
    validate_spec(spec);
    const ArchDims dims;
    const std::size_t c = spec.input.channels, h = spec.input.height, w = spec.input.width;
    const std::size_t k = static_cast<std::size_t>(spec.classes);
    std::vector<std::pair<std::string, std::vector<std::size_t>>> layout;
    switch (spec.family) {
        case Family::Mlp: {
            const std::size_t hid = dims.mlp_hidden(spec.variant);
            layout = {{"fc1.w", {c * h * w, hid}},
                      {"fc1.b", {hid}},
                      {"fc2.w", {hid, k}},
                      {"fc2.b", {k}}};
            break;
        }
        case Family::CnnSmall: {
            const std::size_t oc = dims.cnn_small_ch(spec.variant);
            const std::size_t hid = dims.cnn_small_hidden(spec.variant);
            layout = {{"conv1.w", {oc, c, 3, 3}},
                      {"conv1.b", {oc}},
                      {"fc1.w", {oc * (h / 2) * (w / 2), hid}},
                      {"fc1.b", {hid}},
                      {"fc2.w", {hid, k}},
                      {"fc2.b", {k}}};
            break;
        }
        case Family::CnnWide: {
            const std::size_t oc = dims.cnn_wide_ch(spec.variant);
            const std::size_t hid = dims.cnn_wide_hidden(spec.variant);
            layout = {{"conv1.w", {oc, c, 5, 5}},
                      {"conv1.b", {oc}},
                      {"fc1.w", {oc * (h / 2) * (w / 2), hid}},
                      {"fc1.b", {hid}},
                      {"fc2.w", {hid, k}},
                      {"fc2.b", {k}}};
            break;
        }
        case Family::CnnDeep: {
            const std::size_t c1 = dims.cnn_deep_ch1(spec.variant);
            const std::size_t c2 = dims.cnn_deep_ch2(spec.variant);
            layout = {{"conv1.w", {c1, c, 3, 3}},
                      {"conv1.b", {c1}},
                      {"conv2.w", {c2, c1, 3, 3}},
                      {"conv2.b", {c2}},
                      {"fc.w", {c2 * (h / 4) * (w / 4), k}},
                      {"fc.b", {k}}};
            break;
        }
    }
    return layout;
}

namespace {

// Appends the logits subgraph for `spec` to `g`, starting from input "x".
int build_logits(Graph& g, const ArchSpec& spec) {
    const int x = g.input("x");
    switch (spec.family) {
        case Family::Mlp: {
            int n = g.matmul(x, g.input("fc1.w"));
            n = g.add_bias(n, g.input("fc1.b"));
            n = g.relu(n);
            n = g.matmul(n, g.input("fc2.w"));
            return g.add_bias(n, g.input("fc2.b"));
        }
        case Family::CnnSmall: {
            int n = g.conv2d(x, g.input("conv1.w"), 1);
            n = g.add_bias(n, g.input("conv1.b"));
            n = g.relu(n);
            n = g.maxpool2(n);
            n = g.matmul(n, g.input("fc1.w"));
            n = g.add_bias(n, g.input("fc1.b"));
            n = g.relu(n);
            n = g.matmul(n, g.input("fc2.w"));
            return g.add_bias(n, g.input("fc2.b"));
        }
        case Family::CnnWide: {
            int n = g.conv2d(x, g.input("conv1.w"), 2);
            n = g.add_bias(n, g.input("conv1.b"));
            n = g.relu(n);
            n = g.maxpool2(n);
            n = g.matmul(n, g.input("fc1.w"));
            n = g.add_bias(n, g.input("fc1.b"));
            n = g.relu(n);
            n = g.matmul(n, g.input("fc2.w"));
            return g.add_bias(n, g.input("fc2.b"));
        }
        case Family::CnnDeep: {
            int n = g.conv2d(x, g.input("conv1.w"), 1);
            n = g.add_bias(n, g.input("conv1.b"));
            n = g.relu(n);
            n = g.maxpool2(n);
            n = g.conv2d(n, g.input("conv2.w"), 1);
            n = g.add_bias(n, g.input("conv2.b"));
            n = g.relu(n);
            n = g.maxpool2(n);
            n = g.matmul(n, g.input("fc.w"));
            return g.add_bias(n, g.input("fc.b"));
        }
    }
    throw ConfigError("arch " + spec.id() + ": unknown family");
}

std::shared_ptr<const Graph> make_logits_graph(const ArchSpec& spec) {
    auto g = std::make_shared<Graph>();
    build_logits(*g, spec);
    return g;
}

std::shared_ptr<const Graph> make_loss_graph(const ArchSpec& spec) {
    auto g = std::make_shared<Graph>();
    const int logits = build_logits(*g, spec);
    const int labels = g->input("y");
    const int xent = g->softmax_xent(logits, labels);
    g->mean(xent);
    return g;
}

std::size_t weight_fan_in(const std::vector<std::size_t>& shape) {
    if (shape.size() == 2) return shape[0];
    if (shape.size() == 4) return shape[1] * shape[2] * shape[3];
    return 0;
}

} // namespace

Model Model::build(const ArchSpec& spec, std::uint64_t init_seed) {
    const auto layout = param_layout(spec);
    Model m;
    m.spec = spec;
    m.logits_graph = make_logits_graph(spec);
    m.loss_graph = make_loss_graph(spec);

    Rng rng(derive_seed(init_seed, stream::kInit));
    for (const auto& [name, shape] : layout) {
        Tensor t = Tensor::zeros(shape);
        const std::size_t fan_in = weight_fan_in(shape);
        if (fan_in > 0) {
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : t.data) v = rng.normal(0.0, stddev);
        }
        m.params.emplace(name, std::move(t));
    }

    // First-layer biases start at -0.5 * sum(incoming weights) so pixel
    // inputs with mean 0.5 give zero-mean preactivations at init.
    auto center_bias = [&m](const char* wname, const char* bname) {
        auto wit = m.params.find(wname);
        auto bit = m.params.find(bname);
        if (wit == m.params.end() || bit == m.params.end()) return;
        const Tensor& w = wit->second;
        Tensor& b = bit->second;
        if (w.rank() == 2) {
            const std::size_t k = w.dim(1);
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < w.dim(0); ++i) s += w.data[i * k + j];
                b.data[j] = -0.5 * s;
            }
        } else {
            const std::size_t per_oc = w.numel() / w.dim(0);
            for (std::size_t oc = 0; oc < w.dim(0); ++oc) {
                double s = 0.0;
                for (std::size_t i = 0; i < per_oc; ++i) s += w.data[oc * per_oc + i];
                b.data[oc] = -0.5 * s;
            }
        }
    };
    if (spec.family == Family::Mlp) {
        center_bias("fc1.w", "fc1.b");
    } else {
        center_bias("conv1.w", "conv1.b");
    }

    // Small final layer keeps initial logits near uniform, which avoids the
    // early-training plateau on weak-signal data.
    const std::string& last_w = layout[layout.size() - 2].first;
    for (double& v : m.params.at(last_w).data) v *= 0.1;
    return m;
}

TensorMap Model::bind(const Tensor& x) const {
    TensorMap map = params;
    map["x"] = x;
    return map;
}

Tensor Model::logits(const Tensor& x) const {
    Session session(*logits_graph);
    return session.forward(bind(x));
}

int Model::predict_one(const Tensor& x_single) const {
    const Tensor l = logits(x_single);
    std::size_t best = 0;
    for (std::size_t j = 1; j < l.dim(1); ++j) {
        if (l.data[j] > l.data[best]) best = j;
    }
    return static_cast<int>(best);
}

double accuracy(const Model& model, const Dataset& dataset,
                const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    const std::size_t chunk = 512;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        const std::size_t stop = std::min(indices.size(), start + chunk);
        std::vector<std::size_t> batch(indices.begin() + static_cast<long>(start),
                                       indices.begin() + static_cast<long>(stop));
        const Tensor x = dataset.gather_inputs(batch);
        const std::vector<int> y = dataset.gather_labels(batch);
        const Tensor l = model.logits(x);
        const std::size_t k = l.dim(1);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const double* row = l.data.data() + i * k;
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (static_cast<int>(best) == y[i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

Model train(const Model& model, const Dataset& dataset, int epochs, double lr,
            std::uint64_t train_seed) {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    const ImageShape ds = dataset.shape();
    if (ds.channels != model.spec.input.channels || ds.height != model.spec.input.height ||
        ds.width != model.spec.input.width) {
        throw ShapeError("train: dataset shape does not match model input for " + model.spec.id());
    }

    Model out = model;
    if (epochs == 0) {
        return out;
    }

    TensorMap velocity;
    for (const auto& [name, t] : out.params) velocity.emplace(name, Tensor::zeros(t.shape));

    Rng rng(derive_seed(train_seed, stream::kTrain));
    std::vector<std::size_t> order = dataset.train_indices;
    const std::size_t batch_size = 32;
    constexpr double momentum = 0.9;
    constexpr double kGradClip = 1.0;

    const std::size_t steps_per_epoch = (order.size() + batch_size - 1) / batch_size;
    std::size_t step = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double lr_epoch = lr;
        if (epoch >= epochs / 2) lr_epoch *= 0.5;
        if (epoch >= (3 * epochs) / 4) lr_epoch *= 0.5;

        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            // Linear warmup over the first epoch keeps early momentum in check.
            const double warmup =
                step < steps_per_epoch
                    ? static_cast<double>(step + 1) / static_cast<double>(steps_per_epoch)
                    : 1.0;
            const double lr_t = lr_epoch * warmup;
            ++step;
            const std::size_t stop = std::min(order.size(), start + batch_size);
            std::vector<std::size_t> batch(order.begin() + static_cast<long>(start),
                                           order.begin() + static_cast<long>(stop));
            TensorMap bound = out.params;
            bound["x"] = dataset.gather_inputs(batch);
            const std::vector<int> y = dataset.gather_labels(batch);
            Tensor labels = Tensor::zeros({batch.size()});
            for (std::size_t i = 0; i < batch.size(); ++i) labels.data[i] = y[i];
            bound["y"] = std::move(labels);

            Session session(*out.loss_graph);
            const Tensor& loss = session.forward(bound);
            if (!std::isfinite(loss.data[0])) {
                throw TrainError("training diverged (loss not finite) at epoch " +
                                 std::to_string(epoch) + " for " + model.spec.id());
            }
            TensorMap grads = session.backward(Tensor::scalar(1.0));

            // Global gradient-norm clip; batch spikes otherwise blow up the
            // momentum buffer and strand the net in a dead-relu state.
            double grad_sq = 0.0;
            for (const auto& [name, p] : out.params) {
                for (double v : grads.at(name).data) grad_sq += v * v;
            }
            const double grad_norm = std::sqrt(grad_sq);
            const double clip_scale = grad_norm > kGradClip ? kGradClip / grad_norm : 1.0;

            for (auto& [name, p] : out.params) {
                const Tensor& g = grads.at(name);
                Tensor& v = velocity.at(name);
                for (std::size_t i = 0; i < p.numel(); ++i) {
                    v.data[i] = momentum * v.data[i] + clip_scale * g.data[i];
                    p.data[i] -= lr_t * v.data[i];
                }
            }
        }
    }

    out.meta.trained = true;
    out.meta.dataset_id = dataset.id;
    out.meta.epochs = epochs;
    out.meta.train_accuracy = accuracy(out, dataset, dataset.train_indices);
    out.meta.test_accuracy = accuracy(out, dataset, dataset.test_indices);
    return out;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
    const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string descriptor_string(const Model& m) {
    std::ostringstream os;
    os << "family=" << family_name(m.spec.family) << ";variant=" << m.spec.variant
       << ";channels=" << m.spec.input.channels << ";height=" << m.spec.input.height
       << ";width=" << m.spec.input.width << ";classes=" << m.spec.classes
       << ";trained=" << (m.meta.trained ? 1 : 0);
    if (m.meta.trained) {
        os << ";dataset=" << m.meta.dataset_id << ";epochs=" << m.meta.epochs
           << ";train_acc=" << fmt_double(m.meta.train_accuracy)
           << ";test_acc=" << fmt_double(m.meta.test_accuracy);
    }
    return os.str();
}

std::pair<ArchSpec, TrainMeta> parse_descriptor(const std::string& desc) {
    ArchSpec spec;
    TrainMeta meta;
    std::map<std::string, std::string> kv;
    std::size_t pos = 0;
    while (pos < desc.size()) {
        std::size_t semi = desc.find(';', pos);
        if (semi == std::string::npos) semi = desc.size();
        const std::string item = desc.substr(pos, semi - pos);
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) throw FormatError("weight descriptor: bad item '" + item + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
        pos = semi + 1;
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError(std::string("weight descriptor: missing '") + key + "'");
        return it->second;
    };
    spec.family = parse_family(get("family"));
    spec.variant = std::stoi(get("variant"));
    spec.input.channels = std::stoul(get("channels"));
    spec.input.height = std::stoul(get("height"));
    spec.input.width = std::stoul(get("width"));
    spec.classes = std::stoi(get("classes"));
    if (std::stoi(get("trained")) != 0) {
        meta.trained = true;
        meta.dataset_id = get("dataset");
        meta.epochs = std::stoi(get("epochs"));
        meta.train_accuracy = std::stod(get("train_acc"));
        meta.test_accuracy = std::stod(get("test_acc"));
    }
    return {spec, meta};
}

struct WeightReader {
    std::vector<unsigned char> bytes;
    std::size_t offset = 0;
    std::string path;

    explicit WeightReader(const std::string& p) : path(p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw FormatError("cannot open '" + p + "'");
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void need(std::size_t n, const char* what) {
        if (offset + n > bytes.size()) {
            throw FormatError("'" + path + "': truncated reading " + what + " at offset " +
                              std::to_string(offset));
        }
    }

    std::uint32_t read_u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
        offset += 4;
        return v;
    }

    double read_f64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
        offset += 8;
        return std::bit_cast<double>(v);
    }

    std::string read_string(const char* what) {
        const std::uint32_t len = read_u32(what);
        need(len, what);
        std::string s(reinterpret_cast<const char*>(bytes.data() + offset), len);
        offset += len;
        return s;
    }
};

} // namespace

void save_model(const Model& model, const std::string& path) {
    std::string buf;
    buf += "SEAM";
    put_u32(buf, kWeightFormatVersion);
    const std::string desc = descriptor_string(model);
    put_u32(buf, static_cast<std::uint32_t>(desc.size()));
    buf += desc;
    put_u32(buf, static_cast<std::uint32_t>(model.params.size()));
    for (const auto& [name, t] : model.params) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_f64(buf, v);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write '" + tmp + "'");
        out.write(buf.data(), static_cast<long>(buf.size()));
        if (!out) throw FormatError("short write to '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

Model load_model(const std::string& path) {
    WeightReader r(path);
    r.need(4, "magic");
    if (std::memcmp(r.bytes.data(), "SEAM", 4) != 0) {
        throw FormatError("'" + path + "': bad magic at offset 0 (want \"SEAM\")");
    }
    r.offset = 4;
    const std::uint32_t version = r.read_u32("version");
    if (version != kWeightFormatVersion) {
        throw FormatError("'" + path + "': weight format version " + std::to_string(version) +
                          " not supported (this build reads version " +
                          std::to_string(kWeightFormatVersion) + ")");
    }
    const std::string desc = r.read_string("descriptor");
    auto [spec, meta] = parse_descriptor(desc);

    const std::uint32_t count = r.read_u32("param count");
    TensorMap params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.read_string("param name");
        const std::uint32_t rank = r.read_u32("param rank");
        std::vector<std::size_t> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.read_u32("param dim"));
        const std::size_t numel = shape_numel(shape);
        Tensor t = Tensor::zeros(shape);
        for (std::size_t j = 0; j < numel; ++j) t.data[j] = r.read_f64("param data");
        params.emplace(name, std::move(t));
    }
    if (r.offset != r.bytes.size()) {
        throw FormatError("'" + path + "': trailing " + std::to_string(r.bytes.size() - r.offset) +
                          " bytes at offset " + std::to_string(r.offset));
    }

    const auto layout = param_layout(spec);
    if (layout.size() != params.size()) {
        throw FormatError("'" + path + "': expected " + std::to_string(layout.size()) +
                          " parameters for " + spec.id() + ", got " + std::to_string(params.size()));
    }
    for (const auto& [name, shape] : layout) {
        auto it = params.find(name);
        if (it == params.end()) throw FormatError("'" + path + "': missing parameter '" + name + "'");
        if (it->second.shape != shape) {
            throw FormatError("'" + path + "': parameter '" + name + "' has shape " +
                              it->second.shape_str() + ", want " + shape_to_string(shape));
        }
    }

    Model m;
    m.spec = spec;
    m.meta = meta;
    m.params = std::move(params);
    m.logits_graph = make_logits_graph(spec);
    m.loss_graph = make_loss_graph(spec);
    return m;
}

void ModelPool::validate() const {
    if (surrogates.empty()) throw ConfigError("model pool: needs at least one surrogate");
    const ArchSpec& ref = surrogates.front().spec;
    std::vector<std::string> ids;
    auto check = [&](const Model& m, const char* role) {
        if (m.spec.input.channels != ref.input.channels || m.spec.input.height != ref.input.height ||
            m.spec.input.width != ref.input.width || m.spec.classes != ref.classes) {
            throw ConfigError(std::string("model pool: ") + role + " " + m.spec.id() +
                              " does not share the pool input shape/classes");
        }
        if (m.meta.trained && m.meta.test_accuracy < admission_threshold) {
            throw ConfigError(std::string("model pool: ") + role + " " + m.spec.id() +
                              " test accuracy " + std::to_string(m.meta.test_accuracy) +
                              " below admission threshold " + std::to_string(admission_threshold));
        }
        for (const auto& [name, t] : m.params) {
            if (!t.all_finite()) {
                throw ConfigError(std::string("model pool: ") + role + " " + m.spec.id() +
                                  " has non-finite parameter '" + name + "'");
            }
        }
        ids.push_back(m.spec.id());
    };
    for (const Model& m : surrogates) check(m, "surrogate");
    for (const Model& m : targets) check(m, "target");

    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("model pool: duplicate (family, variant) pair");
    }

    // No two pool members may be parameter copies of each other.
    std::vector<const Model*> all;
    for (const Model& m : surrogates) all.push_back(&m);
    for (const Model& m : targets) all.push_back(&m);
    auto flat = [](const Model& m) {
        Tensor t;
        std::size_t total = 0;
        for (const auto& [name, p] : m.params) total += p.numel();
        t.shape = {total};
        t.data.reserve(total);
        for (const auto& [name, p] : m.params) {
            t.data.insert(t.data.end(), p.data.begin(), p.data.end());
        }
        return t;
    };
    for (std::size_t i = 0; i < all.size(); ++i) {
        const Tensor fi = flat(*all[i]);
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            const Tensor fj = flat(*all[j]);
            if (fi.numel() != fj.numel()) continue;
            if (cosine_similarity(fi, fj) >= 1.0 - 1e-9) {
                throw ConfigError("model pool: " + all[i]->spec.id() + " and " +
                                  all[j]->spec.id() + " are parameter copies");
            }
        }
    }
}

namespace {

constexpr Family kFamilies[4] = {Family::Mlp, Family::CnnSmall, Family::CnnWide, Family::CnnDeep};

int surrogate_variant(int slot) { return slot < 5 ? slot + 1 : slot + 2; } // skip 6 (targets)

} // namespace

std::vector<ArchSpec> zoo_surrogate_specs(const ZooSpec& zoo) {
    if (zoo.surrogate_count < 1) throw ConfigError("zoo: surrogate count must be >= 1");
    std::vector<ArchSpec> specs;
    for (int i = 0; i < zoo.surrogate_count; ++i) {
        ArchSpec spec;
        spec.input = zoo.input;
        spec.classes = zoo.classes;
        if (zoo.single_family) {
            spec.family = zoo.family;
            spec.variant = surrogate_variant(i);
        } else {
            spec.family = kFamilies[i % 4];
            spec.variant = surrogate_variant(i / 4);
        }
        specs.push_back(spec);
    }
    return specs;
}

std::vector<ArchSpec> zoo_target_specs(const ZooSpec& zoo) {
    if (zoo.target_count < 0 || zoo.target_count > 8) {
        throw ConfigError("zoo: target count must be in [0, 8]");
    }
    std::vector<ArchSpec> specs;
    for (int i = 0; i < zoo.target_count; ++i) {
        ArchSpec spec;
        spec.input = zoo.input;
        spec.classes = zoo.classes;
        spec.family = kFamilies[i % 4];
        spec.variant = i < 4 ? 6 : 12;
        specs.push_back(spec);
    }
    return specs;
}

int default_epochs(Family family) {
    switch (family) {
        case Family::Mlp: return 32;
        case Family::CnnSmall: return 20;
        case Family::CnnWide: return 16;
        case Family::CnnDeep: return 20;
    }
    return 20;
}

double default_lr(Family family) {
    switch (family) {
        case Family::Mlp: return 0.05;
        case Family::CnnSmall: return 0.08;
        case Family::CnnWide: return 0.08;
        case Family::CnnDeep: return 0.08;
    }
    return 0.08;
}

ModelPool train_pool(const ZooSpec& zoo, const Dataset& dataset, std::uint64_t seed,
                     const TrainRecipe& recipe, double admission_threshold) {
    ModelPool pool;
    pool.admission_threshold = admission_threshold;
    auto train_one = [&](const ArchSpec& spec, std::uint64_t model_tag) {
        const std::uint64_t model_seed = derive_seed(seed, model_tag);
        Model m = Model::build(spec, derive_seed(model_seed, stream::kInit));
        const int epochs = recipe.epochs > 0 ? recipe.epochs : default_epochs(spec.family);
        const double lr = recipe.lr > 0.0 ? recipe.lr : default_lr(spec.family);
        return train(m, dataset, epochs, lr, derive_seed(model_seed, stream::kTrain));
    };
    const auto surrogate_specs = zoo_surrogate_specs(zoo);
    const auto target_specs = zoo_target_specs(zoo);
    for (std::size_t i = 0; i < surrogate_specs.size(); ++i) {
        pool.surrogates.push_back(train_one(surrogate_specs[i], 0x100 + i));
    }
    for (std::size_t i = 0; i < target_specs.size(); ++i) {
        pool.targets.push_back(train_one(target_specs[i], 0x200 + i));
    }
    pool.validate();
    return pool;
}

void save_pool(const ModelPool& pool, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "admission %.17g\n", pool.admission_threshold);
    manifest += buf;
    auto dump = [&](const Model& m, const char* role, std::size_t i) {
        std::snprintf(buf, sizeof(buf), "%s_%02zu_", role, i);
        const std::string file = std::string(buf) + m.spec.id() + ".seam";
        save_model(m, dir + "/" + file);
        manifest += std::string(role) + " " + file + "\n";
    };
    for (std::size_t i = 0; i < pool.surrogates.size(); ++i) dump(pool.surrogates[i], "surrogate", i);
    for (std::size_t i = 0; i < pool.targets.size(); ++i) dump(pool.targets[i], "target", i);

    const std::string tmp = dir + "/pool.txt.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw FormatError("cannot write '" + tmp + "'");
        out << manifest;
    }
    std::filesystem::rename(tmp, dir + "/pool.txt");
}

ModelPool load_pool(const std::string& dir) {
    std::ifstream in(dir + "/pool.txt");
    if (!in) throw FormatError("cannot open pool manifest '" + dir + "/pool.txt'");
    ModelPool pool;
    std::string word;
    while (in >> word) {
        if (word == "admission") {
            in >> pool.admission_threshold;
        } else if (word == "surrogate" || word == "target") {
            std::string file;
            in >> file;
            Model m = load_model(dir + "/" + file);
            if (word == "surrogate") {
                pool.surrogates.push_back(std::move(m));
            } else {
                pool.targets.push_back(std::move(m));
            }
        } else {
            throw FormatError("pool manifest: unknown entry '" + word + "'");
        }
    }
    pool.validate();
    return pool;
}

} // namespace sea
