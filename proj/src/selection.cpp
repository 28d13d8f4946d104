#include "sea/selection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sea/errors.hpp"

namespace sea {

Strategy parse_strategy(const std::string& s) {
    if (s == "identical") return Strategy::Identical;
    if (s == "random-with-replacement") return Strategy::RandomWithReplacement;
    if (s == "random-without-replacement") return Strategy::RandomWithoutReplacement;
    throw ConfigError("unknown selection strategy '" + s +
                      "' (want identical|random-with-replacement|random-without-replacement)");
}

const char* strategy_name(Strategy strategy) {
    switch (strategy) {
        case Strategy::Identical: return "identical";
        case Strategy::RandomWithReplacement: return "random-with-replacement";
        case Strategy::RandomWithoutReplacement: return "random-without-replacement";
    }
    return "?";
}

void SelectionConfig::validate() const {
    if (pool_size < 1) throw ConfigError("selection: pool size s must be >= 1");
    if (per_iteration < 1 || per_iteration > pool_size) {
        throw ConfigError("selection: m=" + std::to_string(per_iteration) +
                          " must satisfy 1 <= m <= s=" + std::to_string(pool_size));
    }
    if (strategy == Strategy::Identical) {
        if (static_cast<int>(fixed_subset.size()) != per_iteration) {
            throw ConfigError("selection: identical strategy needs a fixed subset of exactly m=" +
                              std::to_string(per_iteration) + " indices, got " +
                              std::to_string(fixed_subset.size()));
        }
        std::set<int> uniq(fixed_subset.begin(), fixed_subset.end());
        if (static_cast<int>(uniq.size()) != per_iteration) {
            throw ConfigError("selection: fixed subset has duplicate indices");
        }
        for (int i : fixed_subset) {
            if (i < 0 || i >= pool_size) {
                throw ConfigError("selection: fixed subset index " + std::to_string(i) +
                                  " outside [0, " + std::to_string(pool_size) + ")");
            }
        }
    } else if (!fixed_subset.empty()) {
        throw ConfigError("selection: fixed subset is only valid for the identical strategy");
    }
}

int SelectionTrace::distinct_count() const {
    std::set<int> u;
    for (const auto& it : chosen) u.insert(it.begin(), it.end());
    return static_cast<int>(u.size());
}

Selector::Selector(const SelectionConfig& config) : config_(config), rng_(config.seed) {
    config_.validate();
    if (config_.strategy == Strategy::RandomWithoutReplacement) {
        deck_.resize(static_cast<std::size_t>(config_.pool_size));
        for (int i = 0; i < config_.pool_size; ++i) deck_[static_cast<std::size_t>(i)] = i;
        rng_.shuffle(deck_);
    }
}

std::vector<int> Selector::select(int t) {
    if (t != next_t_) {
        throw StateError("selector: iterations must be requested in order (expected t=" +
                         std::to_string(next_t_) + ", got t=" + std::to_string(t) + ")");
    }
    ++next_t_;

    const int m = config_.per_iteration;
    std::vector<int> picked;
    switch (config_.strategy) {
        case Strategy::Identical:
            picked = config_.fixed_subset;
            break;
        case Strategy::RandomWithReplacement:
            picked = rng_.sample_indices(config_.pool_size, m);
            break;
        case Strategy::RandomWithoutReplacement: {
            const std::size_t remaining = deck_.size() - deck_pos_;
            if (remaining >= static_cast<std::size_t>(m)) {
                picked.assign(deck_.begin() + static_cast<long>(deck_pos_),
                              deck_.begin() + static_cast<long>(deck_pos_) + m);
                deck_pos_ += static_cast<std::size_t>(m);
            } else {
                // Take the remainder, then refill from a shuffle of the rest
                // of the pool so the boundary iteration has no duplicates.
                picked.assign(deck_.begin() + static_cast<long>(deck_pos_), deck_.end());
                std::vector<int> rest;
                rest.reserve(static_cast<std::size_t>(config_.pool_size) - picked.size());
                std::set<int> used(picked.begin(), picked.end());
                for (int i = 0; i < config_.pool_size; ++i) {
                    if (!used.count(i)) rest.push_back(i);
                }
                rng_.shuffle(rest);
                const std::size_t top_up = static_cast<std::size_t>(m) - picked.size();
                picked.insert(picked.end(), rest.begin(), rest.begin() + static_cast<long>(top_up));
                deck_ = std::move(rest);
                deck_pos_ = top_up;
            }
            break;
        }
    }

    std::sort(picked.begin(), picked.end());
    trace_.chosen.push_back(picked);
    return picked;
}

double expected_distinct_models(int s, int m, int T) {
    if (s < 1 || m < 1 || m > s || T < 1) {
        throw ConfigError("expected_distinct_models: need 1 <= m <= s and T >= 1");
    }
    const double miss = static_cast<double>(s - m) / static_cast<double>(s);
    return static_cast<double>(s) * (1.0 - std::pow(miss, T));
}

ExpectationCheck simulate_expected_distinct(int s, int m, int T, std::size_t trials,
                                            std::uint64_t seed) {
    if (trials == 0) throw ConfigError("simulate_expected_distinct: trials must be > 0");
    ExpectationCheck out;
    out.closed_form = expected_distinct_models(s, m, T);

    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    std::vector<char> seen(static_cast<std::size_t>(s));
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::fill(seen.begin(), seen.end(), 0);
        int distinct = 0;
        for (int t = 0; t < T; ++t) {
            for (int idx : rng.sample_indices(s, m)) {
                if (!seen[static_cast<std::size_t>(idx)]) {
                    seen[static_cast<std::size_t>(idx)] = 1;
                    ++distinct;
                }
            }
        }
        sum += distinct;
        sum_sq += static_cast<double>(distinct) * distinct;
    }
    const double n = static_cast<double>(trials);
    out.empirical_mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - out.empirical_mean * out.empirical_mean);
    out.std_error = std::sqrt(var / n);
    return out;
}

} // namespace sea
