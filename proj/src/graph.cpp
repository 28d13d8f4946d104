#include "sea/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sea/errors.hpp"

namespace sea {

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::MatMul: return "matmul";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::AddBias: return "add_bias";
        case OpKind::Relu: return "relu";
        case OpKind::MaxPool2: return "maxpool2";
        case OpKind::Mean: return "mean";
        case OpKind::SoftmaxXent: return "softmax_xent";
    }
    return "?";
}

int Graph::add(GraphNode node) {
    const int n = static_cast<int>(nodes_.size());
    if (node.a >= n || node.b >= n) {
        throw StateError("graph: parent index out of range for node " + std::to_string(n));
    }
    nodes_.push_back(std::move(node));
    return n;
}

int Graph::input(std::string name) {
    GraphNode node{OpKind::Input, std::move(name)};
    return add(std::move(node));
}

int Graph::matmul(int x, int w) { return add({OpKind::MatMul, "", x, w}); }
int Graph::conv2d(int x, int w, int pad) { return add({OpKind::Conv2d, "", x, w, pad}); }
int Graph::add_bias(int x, int b) { return add({OpKind::AddBias, "", x, b}); }
int Graph::relu(int x) { return add({OpKind::Relu, "", x}); }
int Graph::maxpool2(int x) { return add({OpKind::MaxPool2, "", x}); }
int Graph::mean(int x) { return add({OpKind::Mean, "", x}); }
int Graph::softmax_xent(int logits, int labels) {
    return add({OpKind::SoftmaxXent, "", logits, labels});
}

std::vector<std::string> Graph::input_names() const {
    std::vector<std::string> names;
    for (const auto& node : nodes_) {
        if (node.kind == OpKind::Input) names.push_back(node.name);
    }
    return names;
}

namespace {

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
    throw ShapeError(std::string(op_name(kind)) + ": " + detail);
}

void check_rank4(OpKind kind, const Tensor& t, const char* role) {
    if (t.rank() != 4) {
        shape_fail(kind, std::string(role) + " must be rank 4, got " + t.shape_str());
    }
}

} // namespace

const Tensor& Session::forward(const TensorMap& inputs) {
    const auto& nodes = graph_->nodes();
    values_.assign(nodes.size(), Tensor());
    pool_argmax_.assign(nodes.size(), {});
    softmax_cache_.assign(nodes.size(), Tensor());

    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const GraphNode& node = nodes[i];
        switch (node.kind) {
            case OpKind::Input: {
                auto it = inputs.find(node.name);
                if (it == inputs.end()) {
                    throw StateError("forward: input '" + node.name + "' not bound");
                }
                values_[i] = it->second;
                break;
            }
            case OpKind::MatMul: {
                const Tensor& a = values_[static_cast<std::size_t>(node.a)];
                const Tensor& w = values_[static_cast<std::size_t>(node.b)];
                if (a.rank() < 2) shape_fail(node.kind, "lhs must have rank >= 2, got " + a.shape_str());
                if (w.rank() != 2) shape_fail(node.kind, "rhs must be rank 2, got " + w.shape_str());
                const std::size_t n = a.dim(0);
                const std::size_t d = a.numel() / n;
                const std::size_t k = w.dim(1);
                if (w.dim(0) != d) {
                    shape_fail(node.kind, "lhs " + a.shape_str() + " (viewed as [" + std::to_string(n) +
                                              "," + std::to_string(d) + "]) incompatible with rhs " +
                                              w.shape_str());
                }
                Tensor out = Tensor::zeros({n, k});
                for (std::size_t r = 0; r < n; ++r) {
                    const double* arow = a.data.data() + r * d;
                    double* orow = out.data.data() + r * k;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double av = arow[j];
                        if (av == 0.0) continue;
                        const double* wrow = w.data.data() + j * k;
                        for (std::size_t c = 0; c < k; ++c) orow[c] += av * wrow[c];
                    }
                }
                values_[i] = std::move(out);
                break;
            }
            case OpKind::Conv2d: {
                const Tensor& x = values_[static_cast<std::size_t>(node.a)];
                const Tensor& w = values_[static_cast<std::size_t>(node.b)];
                check_rank4(node.kind, x, "input");
                check_rank4(node.kind, w, "kernel");
                const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
                const std::size_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
                if (w.dim(1) != c) {
                    shape_fail(node.kind, "kernel channels " + w.shape_str() + " vs input " + x.shape_str());
                }
                const int p = node.pad;
                const long oh = static_cast<long>(h) + 2 * p - static_cast<long>(kh) + 1;
                const long ow = static_cast<long>(wd) + 2 * p - static_cast<long>(kw) + 1;
                if (oh < 1 || ow < 1) {
                    shape_fail(node.kind, "kernel " + w.shape_str() + " too large for input " +
                                              x.shape_str() + " with pad " + std::to_string(p));
                }
                Tensor out = Tensor::zeros({n, oc, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
                const std::size_t xs_c = h * wd, xs_n = c * xs_c;
                const std::size_t ws_c = kh * kw, ws_oc = c * ws_c;
                const std::size_t os_c = static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow);
                const std::size_t os_n = oc * os_c;
                for (std::size_t in = 0; in < n; ++in) {
                    for (std::size_t io = 0; io < oc; ++io) {
                        double* oplane = out.data.data() + in * os_n + io * os_c;
                        for (std::size_t ic = 0; ic < c; ++ic) {
                            const double* xplane = x.data.data() + in * xs_n + ic * xs_c;
                            const double* wplane = w.data.data() + io * ws_oc + ic * ws_c;
                            for (long oi = 0; oi < oh; ++oi) {
                                for (std::size_t u = 0; u < kh; ++u) {
                                    const long xi = oi + static_cast<long>(u) - p;
                                    if (xi < 0 || xi >= static_cast<long>(h)) continue;
                                    const double* xrow = xplane + static_cast<std::size_t>(xi) * wd;
                                    const double* wrow = wplane + u * kw;
                                    double* orow = oplane + static_cast<std::size_t>(oi) * static_cast<std::size_t>(ow);
                                    for (long oj = 0; oj < ow; ++oj) {
                                        double acc = 0.0;
                                        for (std::size_t v = 0; v < kw; ++v) {
                                            const long xj = oj + static_cast<long>(v) - p;
                                            if (xj < 0 || xj >= static_cast<long>(wd)) continue;
                                            acc += xrow[static_cast<std::size_t>(xj)] * wrow[v];
                                        }
                                        orow[static_cast<std::size_t>(oj)] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                values_[i] = std::move(out);
                break;
            }
            case OpKind::AddBias: {
                const Tensor& x = values_[static_cast<std::size_t>(node.a)];
                const Tensor& b = values_[static_cast<std::size_t>(node.b)];
                if (b.rank() != 1) shape_fail(node.kind, "bias must be rank 1, got " + b.shape_str());
                Tensor out = x;
                if (x.rank() == 2) {
                    if (b.dim(0) != x.dim(1)) {
                        shape_fail(node.kind, "bias " + b.shape_str() + " vs input " + x.shape_str());
                    }
                    const std::size_t k = x.dim(1);
                    for (std::size_t r = 0; r < x.dim(0); ++r) {
                        for (std::size_t j = 0; j < k; ++j) out.data[r * k + j] += b[j];
                    }
                } else if (x.rank() == 4) {
                    if (b.dim(0) != x.dim(1)) {
                        shape_fail(node.kind, "bias " + b.shape_str() + " vs input " + x.shape_str());
                    }
                    const std::size_t plane = x.dim(2) * x.dim(3);
                    const std::size_t cs = x.dim(1);
                    for (std::size_t in = 0; in < x.dim(0); ++in) {
                        for (std::size_t ic = 0; ic < cs; ++ic) {
                            double* d = out.data.data() + (in * cs + ic) * plane;
                            for (std::size_t j = 0; j < plane; ++j) d[j] += b[ic];
                        }
                    }
                } else {
                    shape_fail(node.kind, "input must be rank 2 or 4, got " + x.shape_str());
                }
                values_[i] = std::move(out);
                break;
            }
            case OpKind::Relu: {
                Tensor out = values_[static_cast<std::size_t>(node.a)];
                for (double& v : out.data) v = v > 0.0 ? v : 0.0;
                values_[i] = std::move(out);
                break;
            }
            case OpKind::MaxPool2: {
                const Tensor& x = values_[static_cast<std::size_t>(node.a)];
                check_rank4(node.kind, x, "input");
                const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
                if (h % 2 != 0 || w % 2 != 0) {
                    shape_fail(node.kind, "spatial dims must be even, got " + x.shape_str());
                }
                const std::size_t oh = h / 2, ow = w / 2;
                Tensor out = Tensor::zeros({n, c, oh, ow});
                std::vector<std::size_t> argmax(out.numel());
                std::size_t o = 0;
                for (std::size_t in = 0; in < n; ++in) {
                    for (std::size_t ic = 0; ic < c; ++ic) {
                        const std::size_t base = (in * c + ic) * h * w;
                        for (std::size_t oi = 0; oi < oh; ++oi) {
                            for (std::size_t oj = 0; oj < ow; ++oj) {
                                double best = -std::numeric_limits<double>::infinity();
                                std::size_t best_idx = 0;
                                for (std::size_t u = 0; u < 2; ++u) {
                                    for (std::size_t v = 0; v < 2; ++v) {
                                        const std::size_t idx = base + (2 * oi + u) * w + (2 * oj + v);
                                        if (x.data[idx] > best) {
                                            best = x.data[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                out.data[o] = best;
                                argmax[o] = best_idx;
                                ++o;
                            }
                        }
                    }
                }
                values_[i] = std::move(out);
                pool_argmax_[i] = std::move(argmax);
                break;
            }
            case OpKind::Mean: {
                const Tensor& x = values_[static_cast<std::size_t>(node.a)];
                if (x.numel() == 0) shape_fail(node.kind, "empty input");
                double s = 0.0;
                for (double v : x.data) s += v;
                values_[i] = Tensor::scalar(s / static_cast<double>(x.numel()));
                break;
            }
            case OpKind::SoftmaxXent: {
                const Tensor& logits = values_[static_cast<std::size_t>(node.a)];
                const Tensor& labels = values_[static_cast<std::size_t>(node.b)];
                if (logits.rank() != 2) {
                    shape_fail(node.kind, "logits must be rank 2, got " + logits.shape_str());
                }
                const std::size_t n = logits.dim(0), k = logits.dim(1);
                if (labels.rank() != 1 || labels.dim(0) != n) {
                    shape_fail(node.kind, "labels " + labels.shape_str() + " vs logits " + logits.shape_str());
                }
                Tensor out = Tensor::zeros({n});
                Tensor probs = Tensor::zeros({n, k});
                for (std::size_t r = 0; r < n; ++r) {
                    const double* row = logits.data.data() + r * k;
                    const long y = static_cast<long>(labels[r]);
                    if (y < 0 || y >= static_cast<long>(k) || labels[r] != static_cast<double>(y)) {
                        shape_fail(node.kind, "label " + std::to_string(labels[r]) + " outside [0," +
                                                  std::to_string(k) + ") at row " + std::to_string(r));
                    }
                    double mx = row[0];
                    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                    double se = 0.0;
                    for (std::size_t j = 0; j < k; ++j) se += std::exp(row[j] - mx);
                    const double lse = mx + std::log(se);
                    out.data[r] = lse - row[static_cast<std::size_t>(y)];
                    for (std::size_t j = 0; j < k; ++j) {
                        probs.data[r * k + j] = std::exp(row[j] - lse);
                    }
                }
                values_[i] = std::move(out);
                softmax_cache_[i] = std::move(probs);
                break;
            }
        }
    }
    forward_done_ = true;
    return values_.back();
}

TensorMap Session::backward(const Tensor& seed) {
    if (!forward_done_) {
        throw StateError("backward: forward has not been run on this session");
    }
    const auto& nodes = graph_->nodes();
    const Tensor& out = values_.back();
    if (!seed.same_shape(out)) {
        throw ShapeError("backward: seed shape " + seed.shape_str() + " vs output " + out.shape_str());
    }

    std::vector<Tensor> grads(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) grads[i] = Tensor::zeros(values_[i].shape);
    grads.back() = seed;

    for (std::size_t ri = nodes.size(); ri-- > 0;) {
        const GraphNode& node = nodes[ri];
        const Tensor& g = grads[ri];
        switch (node.kind) {
            case OpKind::Input:
                break;
            case OpKind::MatMul: {
                const Tensor& a = values_[static_cast<std::size_t>(node.a)];
                const Tensor& w = values_[static_cast<std::size_t>(node.b)];
                Tensor& da = grads[static_cast<std::size_t>(node.a)];
                Tensor& dw = grads[static_cast<std::size_t>(node.b)];
                const std::size_t n = a.dim(0);
                const std::size_t d = a.numel() / n;
                const std::size_t k = w.dim(1);
                for (std::size_t r = 0; r < n; ++r) {
                    const double* grow = g.data.data() + r * k;
                    const double* arow = a.data.data() + r * d;
                    double* darow = da.data.data() + r * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double* wrow = w.data.data() + j * k;
                        double acc = 0.0;
                        for (std::size_t c = 0; c < k; ++c) acc += grow[c] * wrow[c];
                        darow[j] += acc;
                        const double av = arow[j];
                        if (av != 0.0) {
                            double* dwrow = dw.data.data() + j * k;
                            for (std::size_t c = 0; c < k; ++c) dwrow[c] += av * grow[c];
                        }
                    }
                }
                break;
            }
            case OpKind::Conv2d: {
                const Tensor& x = values_[static_cast<std::size_t>(node.a)];
                const Tensor& w = values_[static_cast<std::size_t>(node.b)];
                Tensor& dx = grads[static_cast<std::size_t>(node.a)];
                Tensor& dw = grads[static_cast<std::size_t>(node.b)];
                const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
                const std::size_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
                const std::size_t oh = g.dim(2), ow = g.dim(3);
                const int p = node.pad;
                const std::size_t xs_c = h * wd, xs_n = c * xs_c;
                const std::size_t ws_c = kh * kw, ws_oc = c * ws_c;
                const std::size_t os_c = oh * ow, os_n = oc * os_c;
                for (std::size_t in = 0; in < n; ++in) {
                    for (std::size_t io = 0; io < oc; ++io) {
                        const double* gplane = g.data.data() + in * os_n + io * os_c;
                        for (std::size_t ic = 0; ic < c; ++ic) {
                            const double* xplane = x.data.data() + in * xs_n + ic * xs_c;
                            double* dxplane = dx.data.data() + in * xs_n + ic * xs_c;
                            const double* wplane = w.data.data() + io * ws_oc + ic * ws_c;
                            double* dwplane = dw.data.data() + io * ws_oc + ic * ws_c;
                            for (std::size_t oi = 0; oi < oh; ++oi) {
                                const double* grow = gplane + oi * ow;
                                for (std::size_t u = 0; u < kh; ++u) {
                                    const long xi = static_cast<long>(oi) + static_cast<long>(u) - p;
                                    if (xi < 0 || xi >= static_cast<long>(h)) continue;
                                    const double* xrow = xplane + static_cast<std::size_t>(xi) * wd;
                                    double* dxrow = dxplane + static_cast<std::size_t>(xi) * wd;
                                    const double* wrow = wplane + u * kw;
                                    double* dwrow = dwplane + u * kw;
                                    for (std::size_t oj = 0; oj < ow; ++oj) {
                                        const double gv = grow[oj];
                                        if (gv == 0.0) continue;
                                        for (std::size_t v = 0; v < kw; ++v) {
                                            const long xj = static_cast<long>(oj) + static_cast<long>(v) - p;
                                            if (xj < 0 || xj >= static_cast<long>(wd)) continue;
                                            dxrow[static_cast<std::size_t>(xj)] += gv * wrow[v];
                                            dwrow[v] += gv * xrow[static_cast<std::size_t>(xj)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
            case OpKind::AddBias: {
                const Tensor& x = values_[static_cast<std::size_t>(node.a)];
                Tensor& dx = grads[static_cast<std::size_t>(node.a)];
                Tensor& db = grads[static_cast<std::size_t>(node.b)];
                for (std::size_t j = 0; j < g.numel(); ++j) dx.data[j] += g.data[j];
                if (x.rank() == 2) {
                    const std::size_t k = x.dim(1);
                    for (std::size_t r = 0; r < x.dim(0); ++r) {
                        for (std::size_t j = 0; j < k; ++j) db.data[j] += g.data[r * k + j];
                    }
                } else {
                    const std::size_t plane = x.dim(2) * x.dim(3);
                    const std::size_t cs = x.dim(1);
                    for (std::size_t in = 0; in < x.dim(0); ++in) {
                        for (std::size_t ic = 0; ic < cs; ++ic) {
                            const double* gp = g.data.data() + (in * cs + ic) * plane;
                            double acc = 0.0;
                            for (std::size_t j = 0; j < plane; ++j) acc += gp[j];
                            db.data[ic] += acc;
                        }
                    }
                }
                break;
            }
            case OpKind::Relu: {
                const Tensor& x = values_[static_cast<std::size_t>(node.a)];
                Tensor& dx = grads[static_cast<std::size_t>(node.a)];
                for (std::size_t j = 0; j < x.numel(); ++j) {
                    if (x.data[j] > 0.0) dx.data[j] += g.data[j];
                }
                break;
            }
            case OpKind::MaxPool2: {
                Tensor& dx = grads[static_cast<std::size_t>(node.a)];
                const auto& argmax = pool_argmax_[ri];
                for (std::size_t j = 0; j < g.numel(); ++j) dx.data[argmax[j]] += g.data[j];
                break;
            }
            case OpKind::Mean: {
                Tensor& dx = grads[static_cast<std::size_t>(node.a)];
                const double gv = g.data[0] / static_cast<double>(dx.numel());
                for (double& v : dx.data) v += gv;
                break;
            }
            case OpKind::SoftmaxXent: {
                const Tensor& labels = values_[static_cast<std::size_t>(node.b)];
                const Tensor& probs = softmax_cache_[ri];
                Tensor& dl = grads[static_cast<std::size_t>(node.a)];
                const std::size_t n = probs.dim(0), k = probs.dim(1);
                for (std::size_t r = 0; r < n; ++r) {
                    const double gv = g.data[r];
                    if (gv == 0.0) continue;
                    const std::size_t y = static_cast<std::size_t>(labels[r]);
                    for (std::size_t j = 0; j < k; ++j) {
                        dl.data[r * k + j] += gv * (probs.data[r * k + j] - (j == y ? 1.0 : 0.0));
                    }
                }
                break;
            }
        }
    }

    TensorMap out_grads;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].kind == OpKind::Input) {
            out_grads[nodes[i].name] = std::move(grads[i]);
        }
    }
    return out_grads;
}

} // namespace sea
