#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sea/rng.hpp"

namespace sea {

enum class Strategy {
    Identical,                // same fixed m-subset every iteration (Ens)
    RandomWithReplacement,    // fresh uniform m-subset each iteration
    RandomWithoutReplacement, // consumes a shuffled pool across iterations (SEA default)
};

Strategy parse_strategy(const std::string& s);
const char* strategy_name(Strategy strategy);

struct SelectionConfig {
    Strategy strategy = Strategy::RandomWithoutReplacement;
    int pool_size = 1;     // s
    int per_iteration = 1; // m
    std::uint64_t seed = 0;
    std::vector<int> fixed_subset; // required for Identical, exactly m distinct indices

    void validate() const;
};

struct SelectionTrace {
    std::vector<std::vector<int>> chosen; // per iteration, sorted, |.| == m
    int distinct_count() const;           // n = |union of all chosen|
};

// Stateful per-run selector. The without-replacement deck is reshuffled when
// fewer than m indices remain: the remainder is used first and the refill
// shuffle excludes it, so no index repeats before the whole pool is consumed.
class Selector {
public:
    explicit Selector(const SelectionConfig& config);

    // Chosen indices for iteration t, sorted ascending. Iterations must be
    // requested in order starting at 0.
    std::vector<int> select(int t);

    const SelectionTrace& trace() const { return trace_; }

private:
    SelectionConfig config_;
    SelectionTrace trace_;
    Rng rng_;
    std::vector<int> deck_;
    std::size_t deck_pos_ = 0;
    int next_t_ = 0;
};

// Closed-form expectation of the number of distinct models touched over T
// iterations of with-replacement selection: s * (1 - ((s-m)/s)^T).
double expected_distinct_models(int s, int m, int T);

struct ExpectationCheck {
    double closed_form = 0.0;
    double empirical_mean = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo simulation of with-replacement selection; the independent
// oracle for expected_distinct_models.
ExpectationCheck simulate_expected_distinct(int s, int m, int T, std::size_t trials,
                                            std::uint64_t seed);

} // namespace sea
