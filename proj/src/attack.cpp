#include "sea/attack.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sea/errors.hpp"

namespace sea {

Fusion parse_fusion(const std::string& s) {
    if (s == "logit-avg") return Fusion::LogitAvg;
    if (s == "loss-avg") return Fusion::LossAvg;
    throw ConfigError("unknown fusion mode '" + s + "' (want logit-avg|loss-avg)");
}

const char* fusion_name(Fusion fusion) {
    return fusion == Fusion::LogitAvg ? "logit-avg" : "loss-avg";
}

BaselineSpec BaselineSpec::parse(const std::string& s) {
    BaselineSpec spec;
    if (s == "none") {
        spec.canonical = "none";
        return spec;
    }
    bool has_core = false;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t dash = s.find('-', pos);
        if (dash == std::string::npos) dash = s.size();
        const std::string tok = s.substr(pos, dash - pos);
        if (tok == "MI") {
            if (has_core) throw ConfigError("baseline '" + s + "': repeated core token");
            has_core = true;
        } else if (tok == "NI") {
            if (has_core) throw ConfigError("baseline '" + s + "': repeated core token");
            has_core = true;
            spec.nesterov = true;
        } else if (tok == "DI") {
            if (spec.input_diversity) throw ConfigError("baseline '" + s + "': repeated DI");
            spec.input_diversity = true;
        } else if (tok == "TI") {
            if (spec.kernel_smoothing) throw ConfigError("baseline '" + s + "': repeated TI");
            spec.kernel_smoothing = true;
        } else if (tok == "SI") {
            if (spec.scale_invariance) throw ConfigError("baseline '" + s + "': repeated SI");
            spec.scale_invariance = true;
        } else {
            throw ConfigError("baseline '" + s + "': unknown token '" + tok +
                              "' (want none or '-' joined MI|NI|DI|TI|SI)");
        }
        pos = dash + 1;
    }
    std::string canon;
    if (spec.input_diversity) canon += "DI-";
    if (spec.kernel_smoothing) canon += "TI-";
    if (spec.scale_invariance) canon += "SI-";
    canon += spec.nesterov ? "NI" : "MI";
    spec.canonical = canon;
    return spec;
}

void AttackConfig::validate() const {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw ConfigError("attack: epsilon must be in [0, 1] pixel units, got " +
                          std::to_string(epsilon));
    }
    if (iterations < 1) throw ConfigError("attack: iterations T must be >= 1");
    if (alpha < 0.0) throw ConfigError("attack: alpha must be >= 0");
    if (mu < 0.0) throw ConfigError("attack: mu must be >= 0");
    if (di_prob < 0.0 || di_prob > 1.0) throw ConfigError("attack: DI probability must be in [0,1]");
    if (ti_kernel < 1 || ti_kernel % 2 == 0) {
        throw ConfigError("attack: TI kernel length must be odd and >= 1, got " +
                          std::to_string(ti_kernel));
    }
    if (si_copies < 1) throw ConfigError("attack: SI copies must be >= 1");
    BaselineSpec::parse(baseline);
}

std::vector<int> derive_target_labels(const std::vector<int>& labels, int classes) {
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = (labels[i] + 1) % classes;
    return out;
}

std::uint64_t EvalCounters::total_forward() const {
    std::uint64_t s = 0;
    for (auto v : forward) s += v;
    return s;
}

std::uint64_t EvalCounters::total_backward() const {
    std::uint64_t s = 0;
    for (auto v : backward) s += v;
    return s;
}

namespace {

struct XentBatch {
    Tensor losses; // [N]
    Tensor probs;  // [N, K]
};

XentBatch softmax_xent_eval(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) {
        throw ShapeError("fuse: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(n));
    }
    XentBatch out{Tensor::zeros({n}), Tensor::zeros({n, k})};
    for (std::size_t r = 0; r < n; ++r) {
        const int y = labels[r];
        if (y < 0 || y >= static_cast<int>(k)) {
            throw ConfigError("fuse: label " + std::to_string(y) + " outside [0," +
                              std::to_string(k) + ")");
        }
        const double* row = logits.data.data() + r * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < k; ++j) se += std::exp(row[j] - mx);
        const double lse = mx + std::log(se);
        out.losses.data[r] = lse - row[static_cast<std::size_t>(y)];
        for (std::size_t j = 0; j < k; ++j) out.probs.data[r * k + j] = std::exp(row[j] - lse);
    }
    return out;
}

// seed[n,k] = scale * (probs[n,k] - onehot[n,k])
Tensor xent_logit_seed(const Tensor& probs, const std::vector<int>& labels, double scale) {
    Tensor seed = probs;
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    for (std::size_t r = 0; r < n; ++r) {
        seed.data[r * k + static_cast<std::size_t>(labels[r])] -= 1.0;
        for (std::size_t j = 0; j < k; ++j) seed.data[r * k + j] *= scale;
    }
    return seed;
}

void tick(EvalCounters* counters, const std::vector<int>* pool_ids, std::size_t i, bool fwd) {
    if (!counters) return;
    const std::size_t id = pool_ids ? static_cast<std::size_t>((*pool_ids)[i]) : i;
    auto& vec = fwd ? counters->forward : counters->backward;
    if (id >= vec.size()) vec.resize(id + 1, 0);
    ++vec[id];
}

} // namespace

FuseResult fuse(const std::vector<const Model*>& models, const Tensor& x,
                const std::vector<int>& labels, Fusion mode, bool targeted,
                bool want_per_model, EvalCounters* counters, const std::vector<int>* pool_ids) {
    if (models.empty()) throw ConfigError("fuse: empty model list");
    if (x.rank() != 4) throw ShapeError("fuse: input must be [N,C,H,W], got " + x.shape_str());
    const std::size_t m = models.size();
    const std::size_t n = x.dim(0);
    const double sign = targeted ? -1.0 : 1.0;

    std::vector<Session> sessions;
    sessions.reserve(m);
    std::vector<Tensor> logits;
    logits.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        sessions.emplace_back(*models[i]->logits_graph);
        logits.push_back(sessions[i].forward(models[i]->bind(x)));
        tick(counters, pool_ids, i, true);
        if (i > 0 && !logits[i].same_shape(logits[0])) {
            throw ShapeError("fuse: logits shape mismatch " + logits[i].shape_str() + " vs " +
                             logits[0].shape_str());
        }
    }

    FuseResult out;
    out.grad = Tensor::zeros(x.shape);
    const double batch = static_cast<double>(n);

    if (mode == Fusion::LogitAvg) {
        Tensor fused = Tensor::zeros(logits[0].shape);
        for (const Tensor& l : logits) {
            for (std::size_t j = 0; j < fused.numel(); ++j) fused.data[j] += l.data[j];
        }
        for (double& v : fused.data) v /= static_cast<double>(m);

        const XentBatch xb = softmax_xent_eval(fused, labels);
        double total = 0.0;
        for (double v : xb.losses.data) total += v;
        out.loss = sign * total / batch;

        const Tensor seed =
            xent_logit_seed(xb.probs, labels, sign / (batch * static_cast<double>(m)));
        for (std::size_t i = 0; i < m; ++i) {
            TensorMap g = sessions[i].backward(seed);
            tick(counters, pool_ids, i, false);
            const Tensor& gx = g.at("x");
            for (std::size_t j = 0; j < out.grad.numel(); ++j) out.grad.data[j] += gx.data[j];
        }
        if (want_per_model) {
            out.per_model_grads.reserve(m);
            for (std::size_t i = 0; i < m; ++i) {
                const XentBatch own = softmax_xent_eval(logits[i], labels);
                const Tensor own_seed = xent_logit_seed(own.probs, labels, sign);
                TensorMap g = sessions[i].backward(own_seed);
                tick(counters, pool_ids, i, false);
                out.per_model_grads.push_back(std::move(g.at("x")));
            }
        }
    } else {
        double total = 0.0;
        if (want_per_model) out.per_model_grads.reserve(m);
        for (std::size_t i = 0; i < m; ++i) {
            const XentBatch xb = softmax_xent_eval(logits[i], labels);
            for (double v : xb.losses.data) total += v;
            const Tensor seed =
                xent_logit_seed(xb.probs, labels, sign / (batch * static_cast<double>(m)));
            TensorMap g = sessions[i].backward(seed);
            tick(counters, pool_ids, i, false);
            Tensor& gx = g.at("x");
            for (std::size_t j = 0; j < out.grad.numel(); ++j) out.grad.data[j] += gx.data[j];
            if (want_per_model) {
                // Per-model raw gradient is the contribution rescaled by N*m.
                for (double& v : gx.data) v *= batch * static_cast<double>(m);
                out.per_model_grads.push_back(std::move(gx));
            }
        }
        out.loss = sign * total / (batch * static_cast<double>(m));
    }

    return out;
}

namespace detail {

DiMaps make_di_maps(std::size_t n, std::size_t h, std::size_t w, double p, Rng& rng) {
    DiMaps dm;
    dm.height = h;
    dm.width = w;
    dm.maps.resize(n);
    const std::size_t canvas_h = static_cast<std::size_t>(std::ceil(1.15 * static_cast<double>(h)));
    const std::size_t canvas_w = static_cast<std::size_t>(std::ceil(1.15 * static_cast<double>(w)));
    for (std::size_t s = 0; s < n; ++s) {
        if (rng.uniform01() >= p) continue; // identity
        const std::size_t rh = h + rng.uniform_int(canvas_h - h + 1);
        const std::size_t rw = w + rng.uniform_int(canvas_w - w + 1);
        const std::size_t top = rng.uniform_int(canvas_h - rh + 1);
        const std::size_t left = rng.uniform_int(canvas_w - rw + 1);
        std::vector<long>& map = dm.maps[s];
        map.resize(h * w, -1);
        for (std::size_t i = 0; i < h; ++i) {
            const std::size_t ci = i * canvas_h / h;
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t cj = j * canvas_w / w;
                if (ci < top || ci >= top + rh || cj < left || cj >= left + rw) continue;
                const std::size_t si = (ci - top) * h / rh;
                const std::size_t sj = (cj - left) * w / rw;
                map[i * w + j] = static_cast<long>(si * w + sj);
            }
        }
    }
    return dm;
}

Tensor di_gather(const Tensor& x, const DiMaps& dm) {
    Tensor out = Tensor::zeros(x.shape);
    const std::size_t n = x.dim(0), c = x.dim(1), plane = dm.height * dm.width;
    for (std::size_t s = 0; s < n; ++s) {
        const auto& map = dm.maps[s];
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = x.data.data() + (s * c + ch) * plane;
            double* dst = out.data.data() + (s * c + ch) * plane;
            if (map.empty()) {
                std::copy(src, src + plane, dst);
            } else {
                for (std::size_t j = 0; j < plane; ++j) {
                    dst[j] = map[j] >= 0 ? src[static_cast<std::size_t>(map[j])] : 0.0;
                }
            }
        }
    }
    return out;
}

// Adjoint of di_gather: scatter-add, so gradients flow through the transform.
Tensor di_scatter(const Tensor& g, const DiMaps& dm) {
    Tensor out = Tensor::zeros(g.shape);
    const std::size_t n = g.dim(0), c = g.dim(1), plane = dm.height * dm.width;
    for (std::size_t s = 0; s < n; ++s) {
        const auto& map = dm.maps[s];
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = g.data.data() + (s * c + ch) * plane;
            double* dst = out.data.data() + (s * c + ch) * plane;
            if (map.empty()) {
                std::copy(src, src + plane, dst);
            } else {
                for (std::size_t j = 0; j < plane; ++j) {
                    if (map[j] >= 0) dst[static_cast<std::size_t>(map[j])] += src[j];
                }
            }
        }
    }
    return out;
}

} // namespace detail

using detail::DiMaps;
using detail::di_gather;
using detail::di_scatter;
using detail::make_di_maps;

Tensor transform_di(const Tensor& x, double p, Rng& rng) {
    if (x.rank() != 4) throw ShapeError("transform_di: input must be [N,C,H,W], got " + x.shape_str());
    if (p < 0.0 || p > 1.0) throw ConfigError("transform_di: p must be in [0,1]");
    const DiMaps dm = make_di_maps(x.dim(0), x.dim(2), x.dim(3), p, rng);
    return di_gather(x, dm);
}

Tensor smooth_ti(const Tensor& grad, int k) {
    if (grad.rank() != 4) throw ShapeError("smooth_ti: input must be [N,C,H,W], got " + grad.shape_str());
    if (k < 1 || k % 2 == 0) {
        throw ConfigError("smooth_ti: kernel length must be odd and >= 1, got " + std::to_string(k));
    }
    const std::size_t h = grad.dim(2), w = grad.dim(3);
    if (static_cast<std::size_t>(k) > h || static_cast<std::size_t>(k) > w) {
        throw ConfigError("smooth_ti: kernel length " + std::to_string(k) +
                          " exceeds spatial size " + grad.shape_str());
    }
    if (k == 1) return grad;

    const int c0 = (k - 1) / 2;
    std::vector<double> k1(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        k1[static_cast<std::size_t>(i)] = 1.0 - std::fabs(i - c0) / static_cast<double>(c0 + 1);
    }
    std::vector<double> k2(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int u = 0; u < k; ++u) {
        for (int v = 0; v < k; ++v) {
            k2[static_cast<std::size_t>(u * k + v)] = k1[static_cast<std::size_t>(u)] * k1[static_cast<std::size_t>(v)];
            sum += k2[static_cast<std::size_t>(u * k + v)];
        }
    }
    for (double& v : k2) v /= sum;

    Tensor out = Tensor::zeros(grad.shape);
    const std::size_t planes = grad.dim(0) * grad.dim(1);
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const double* src = grad.data.data() + pl * h * w;
        double* dst = out.data.data() + pl * h * w;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int u = 0; u < k; ++u) {
                    const long si = static_cast<long>(i) + u - c0;
                    if (si < 0 || si >= static_cast<long>(h)) continue;
                    for (int v = 0; v < k; ++v) {
                        const long sj = static_cast<long>(j) + v - c0;
                        if (sj < 0 || sj >= static_cast<long>(w)) continue;
                        acc += src[static_cast<std::size_t>(si) * w + static_cast<std::size_t>(sj)] *
                               k2[static_cast<std::size_t>(u * k + v)];
                    }
                }
                dst[i * w + j] = acc;
            }
        }
    }
    return out;
}

Tensor grads_si(const std::vector<const Model*>& models, const Tensor& x,
                const std::vector<int>& labels, int copies, Fusion mode, bool targeted,
                EvalCounters* counters, const std::vector<int>* pool_ids) {
    if (copies < 1) throw ConfigError("grads_si: copies must be >= 1");
    Tensor grad = Tensor::zeros(x.shape);
    double scale = 1.0;
    for (int i = 0; i < copies; ++i) {
        Tensor xi = x;
        if (scale != 1.0) {
            for (double& v : xi.data) v *= scale;
        }
        const FuseResult fr = fuse(models, xi, labels, mode, targeted, false, counters, pool_ids);
        for (std::size_t j = 0; j < grad.numel(); ++j) grad.data[j] += fr.grad.data[j];
        scale *= 0.5;
    }
    for (double& v : grad.data) v /= static_cast<double>(copies);
    return grad;
}

void step_momentum(MomentumState& state, const Tensor& grad, double mu, double alpha,
                   double epsilon) {
    const std::size_t n = state.x_adv.dim(0);
    const std::size_t sample = state.x_adv.numel() / n;
    for (std::size_t s = 0; s < n; ++s) {
        const double* g = grad.data.data() + s * sample;
        double* mom = state.g.data.data() + s * sample;
        double* x = state.x_adv.data.data() + s * sample;
        const double* x0 = state.x_orig.data.data() + s * sample;

        double l1 = 0.0;
        for (std::size_t j = 0; j < sample; ++j) l1 += std::fabs(g[j]);
        for (std::size_t j = 0; j < sample; ++j) {
            mom[j] = mu * mom[j] + (l1 > 0.0 ? g[j] / l1 : 0.0);
        }
        for (std::size_t j = 0; j < sample; ++j) {
            const double stepped =
                x[j] + alpha * (mom[j] > 0.0 ? 1.0 : (mom[j] < 0.0 ? -1.0 : 0.0));
            const double lo = std::max(0.0, x0[j] - epsilon);
            const double hi = std::min(1.0, x0[j] + epsilon);
            x[j] = std::min(hi, std::max(lo, stepped));
        }
    }
}

AttackResult run_attack(const std::vector<const Model*>& surrogates, const Tensor& x,
                        const std::vector<int>& labels, const AttackConfig& config,
                        const SelectionConfig& selection) {
    config.validate();
    if (surrogates.empty()) throw ConfigError("run_attack: empty surrogate list");
    if (x.rank() != 4) throw ShapeError("run_attack: input must be [N,C,H,W], got " + x.shape_str());
    if (labels.size() != x.dim(0)) {
        throw ShapeError("run_attack: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(x.dim(0)));
    }
    if (selection.pool_size != static_cast<int>(surrogates.size())) {
        throw ConfigError("run_attack: selection pool size " + std::to_string(selection.pool_size) +
                          " != surrogate count " + std::to_string(surrogates.size()));
    }
    const BaselineSpec baseline = BaselineSpec::parse(config.baseline);
    const int classes = surrogates[0]->spec.classes;
    const std::vector<int> eff_labels =
        config.targeted ? derive_target_labels(labels, classes) : labels;

    SelectionConfig sel = selection;
    sel.seed = config.selection_seed;
    Selector selector(sel);
    Rng transform_rng(config.transform_seed);

    AttackResult result;
    result.trace.counters.forward.assign(surrogates.size(), 0);
    result.trace.counters.backward.assign(surrogates.size(), 0);

    MomentumState state;
    state.x_orig = x;
    state.x_adv = x;
    state.g = Tensor::zeros(x.shape);

    const double alpha = config.step_size();
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t sample = x.numel() / n;

    for (int t = 0; t < config.iterations; ++t) {
        const std::vector<int> idx = selector.select(t);
        std::vector<const Model*> chosen;
        chosen.reserve(idx.size());
        std::size_t resident = 0;
        for (int i : idx) {
            chosen.push_back(surrogates[static_cast<std::size_t>(i)]);
            for (const auto& [name, p] : chosen.back()->params) resident += p.numel();
        }
        result.trace.peak_resident_params = std::max(result.trace.peak_resident_params, resident);

        // NI evaluates the gradient at the lookahead point; only x_adv is
        // ever projected.
        Tensor x_eval = state.x_adv;
        if (baseline.nesterov) {
            for (std::size_t j = 0; j < x_eval.numel(); ++j) {
                x_eval.data[j] += alpha * config.mu * state.g.data[j];
            }
        }

        const int scales = baseline.scale_invariance ? config.si_copies : 1;
        Tensor grad = Tensor::zeros(x.shape);
        IterationSnapshot snap;
        double scale = 1.0;
        for (int ci = 0; ci < scales; ++ci) {
            Tensor xi = x_eval;
            if (scale != 1.0) {
                for (double& v : xi.data) v *= scale;
            }
            DiMaps dm;
            if (baseline.input_diversity) {
                dm = make_di_maps(n, h, w, config.di_prob, transform_rng);
                xi = di_gather(xi, dm);
            }
            const bool want_snap = config.record_gradients && ci == 0;
            FuseResult fr = fuse(chosen, xi, eff_labels, config.fusion, config.targeted, want_snap,
                                 &result.trace.counters, &idx);
            Tensor g = std::move(fr.grad);
            if (baseline.input_diversity) g = di_scatter(g, dm);
            for (std::size_t j = 0; j < grad.numel(); ++j) grad.data[j] += g.data[j];
            if (want_snap) {
                snap.model_indices = idx;
                for (Tensor& pg : fr.per_model_grads) {
                    snap.gradients.push_back(baseline.input_diversity ? di_scatter(pg, dm)
                                                                      : std::move(pg));
                }
            }
            scale *= 0.5;
        }
        if (scales > 1) {
            for (double& v : grad.data) v /= static_cast<double>(scales);
        }
        if (config.record_gradients) result.trace.snapshots.push_back(std::move(snap));

        if (baseline.kernel_smoothing) grad = smooth_ti(grad, config.ti_kernel);

        step_momentum(state, grad, config.mu, alpha, config.epsilon);

        // Iteration-boundary invariants, always on.
        for (std::size_t j = 0; j < state.x_adv.numel(); ++j) {
            const double v = state.x_adv.data[j];
            if (std::fabs(v - state.x_orig.data[j]) > config.epsilon + 1e-12 || v < 0.0 || v > 1.0 ||
                !std::isfinite(v)) {
                throw StateError("run_attack: constraint violated at iteration " + std::to_string(t) +
                                 " sample " + std::to_string(j / sample));
            }
        }
        result.trace.iterations = t + 1;
    }

    result.trace.selection = selector.trace();
    result.adversarial = std::move(state.x_adv);
    return result;
}

} // namespace sea
