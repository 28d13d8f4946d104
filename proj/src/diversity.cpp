#include "sea/diversity.hpp"

#include <cmath>

#include "sea/errors.hpp"

namespace sea {

DiversityVariant parse_diversity_variant(const std::string& s) {
    if (s == "grad") return DiversityVariant::Grad;
    if (s == "sign-grad") return DiversityVariant::SignGrad;
    throw ConfigError("unknown diversity variant '" + s + "' (want grad|sign-grad)");
}

const char* diversity_variant_name(DiversityVariant variant) {
    return variant == DiversityVariant::Grad ? "grad" : "sign-grad";
}

double within_iteration_similarity(const std::vector<Tensor>& grads) {
    if (grads.size() < 2) {
        throw ConfigError("within_iteration_similarity: undefined for m=" +
                          std::to_string(grads.size()) + " (needs m >= 2)");
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        for (std::size_t j = i + 1; j < grads.size(); ++j) {
            sum += cosine_similarity(grads[i], grads[j]);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double cross_iteration_similarity(const Tensor& mean_grad_t, const Tensor& mean_grad_next) {
    return cosine_similarity(mean_grad_t, mean_grad_next);
}

namespace {

// View of one sample's slice of an [N, ...] snapshot.
Tensor sample_slice(const Tensor& t, std::size_t s, std::size_t sample_numel,
                    DiversityVariant variant) {
    Tensor out;
    out.shape = {sample_numel};
    out.data.assign(t.data.begin() + static_cast<long>(s * sample_numel),
                    t.data.begin() + static_cast<long>((s + 1) * sample_numel));
    if (variant == DiversityVariant::SignGrad) {
        for (double& v : out.data) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

struct Welford {
    std::size_t count = 0;
    double sum = 0.0, sum_sq = 0.0;
    void add(double v) {
        ++count;
        sum += v;
        sum_sq += v * v;
    }
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
    double stddev() const {
        if (count < 2) return 0.0;
        const double m = mean();
        return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(count) - m * m));
    }
};

} // namespace

DiversityReport diversity_report(const AttackTrace& trace, DiversityVariant variant) {
    if (trace.snapshots.empty()) {
        throw StateError("diversity_report: trace has no gradient snapshots "
                         "(run the attack with record_gradients)");
    }
    DiversityReport report;
    report.variant = variant;

    const std::size_t batch = trace.snapshots.front().gradients.empty()
                                  ? 0
                                  : trace.snapshots.front().gradients.front().dim(0);
    Welford within_all, cross_all;

    // Within-iteration: per-sample mean pairwise cosine, averaged per iteration.
    for (const IterationSnapshot& snap : trace.snapshots) {
        const std::size_t m = snap.gradients.size();
        if (m < 2) continue;
        const std::size_t sample_numel = snap.gradients.front().numel() / batch;
        double iter_sum = 0.0;
        for (std::size_t s = 0; s < batch; ++s) {
            std::vector<Tensor> per_model;
            per_model.reserve(m);
            for (const Tensor& g : snap.gradients) {
                per_model.push_back(sample_slice(g, s, sample_numel, variant));
            }
            const double sim = within_iteration_similarity(per_model);
            iter_sum += sim;
            within_all.add(sim);
        }
        report.within_per_iteration.push_back(iter_sum / static_cast<double>(batch));
    }

    // Cross-iteration: per-sample cosines between adjacent mean gradients.
    for (std::size_t t = 0; t + 1 < trace.snapshots.size(); ++t) {
        const IterationSnapshot& a = trace.snapshots[t];
        const IterationSnapshot& b = trace.snapshots[t + 1];
        const std::size_t sample_numel = a.gradients.front().numel() / batch;
        auto mean_grad = [&](const IterationSnapshot& snap, std::size_t s) {
            Tensor mean = Tensor::zeros({sample_numel});
            for (const Tensor& g : snap.gradients) {
                const Tensor slice = sample_slice(g, s, sample_numel, variant);
                for (std::size_t j = 0; j < sample_numel; ++j) mean.data[j] += slice.data[j];
            }
            for (double& v : mean.data) v /= static_cast<double>(snap.gradients.size());
            return mean;
        };
        double pair_sum = 0.0;
        for (std::size_t s = 0; s < batch; ++s) {
            const double sim = cross_iteration_similarity(mean_grad(a, s), mean_grad(b, s));
            pair_sum += sim;
            cross_all.add(sim);
        }
        report.cross_per_pair.push_back(pair_sum / static_cast<double>(batch));
    }

    report.within_mean = within_all.mean();
    report.within_std = within_all.stddev();
    report.within_count = within_all.count;
    report.cross_mean = cross_all.mean();
    report.cross_std = cross_all.stddev();
    report.cross_count = cross_all.count;
    return report;
}

} // namespace sea
