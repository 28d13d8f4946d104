#pragma once

#include <string>
#include <vector>

#include "sea/attack.hpp"
#include "sea/tensor.hpp"

namespace sea {

enum class DiversityVariant { Grad, SignGrad };

DiversityVariant parse_diversity_variant(const std::string& s);
const char* diversity_variant_name(DiversityVariant variant);

// Mean pairwise cosine similarity over all m(m-1)/2 unordered pairs of
// same-shape gradients. Lower means more diverse. Requires m >= 2.
double within_iteration_similarity(const std::vector<Tensor>& grads);

// Cosine similarity between the within-iteration mean gradients of two
// adjacent iterations.
double cross_iteration_similarity(const Tensor& mean_grad_t, const Tensor& mean_grad_next);

struct DiversityReport {
    DiversityVariant variant = DiversityVariant::Grad;
    std::vector<double> within_per_iteration;     // sample-averaged, iterations with m >= 2
    std::vector<double> cross_per_pair;           // sample-averaged, adjacent iteration pairs
    // Aggregates over all (iteration, sample) cosine values.
    double within_mean = 0.0, within_std = 0.0;
    double cross_mean = 0.0, cross_std = 0.0;
    std::size_t within_count = 0, cross_count = 0;
};

// Computes per-sample similarities from an attack trace recorded with
// gradient snapshots, then aggregates. Sign variant applies elementwise
// sign (sign(0)=0) before the cosines.
DiversityReport diversity_report(const AttackTrace& trace, DiversityVariant variant);

} // namespace sea
