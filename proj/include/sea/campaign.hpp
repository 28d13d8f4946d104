#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sea/attack.hpp"
#include "sea/dataset.hpp"
#include "sea/model.hpp"
#include "sea/selection.hpp"

namespace sea {

// Line-oriented "key = value" configs. '#' starts a comment; unknown keys
// are hard errors. List-valued keys take comma-separated entries.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> parse_config_file(const std::string& path);

struct CampaignSpec {
    // pool
    int pool_s = 20;
    int pool_targets = 4;
    std::uint64_t pool_seed = 1;
    bool single_family = false;
    Family family = Family::Mlp;
    std::string models_dir; // load instead of training when non-empty
    // dataset
    DataKind data_kind = DataKind::Textures;
    std::size_t data_n = 4000;
    int data_classes = 8;
    std::size_t data_hw = 16;
    std::uint64_t data_seed = 7;
    std::size_t eval_n = 100;
    // attack cell cross-product
    std::vector<int> m_values{4};
    std::vector<std::string> baselines{"MI"};
    std::vector<Strategy> strategies{Strategy::Identical, Strategy::RandomWithoutReplacement};
    // shared attack knobs
    double epsilon_255 = 16.0;
    int iterations = 10;
    double alpha_255 = 0.0; // 0 -> epsilon / T
    double mu = 1.0;
    Fusion fusion = Fusion::LogitAvg;
    bool targeted = false;
    double di_prob = 0.5;
    int ti_kernel = 7;
    int si_copies = 5;
    bool snapshots = false;
    // campaign
    int repeats = 5;
    std::uint64_t base_seed = 1;
    int workers = 1;
    std::string out_path = "campaign.csv";

    static CampaignSpec from_config(const std::map<std::string, std::string>& kv);
};

struct CampaignRow {
    std::string run_id;
    std::string strategy;
    int s = 0;
    int m = 0;
    int iterations = 0;
    std::string baseline;
    std::string fusion;
    bool targeted = false;
    std::string target_model;
    double asr = 0.0;
    std::int64_t time_ms = 0;
    std::uint64_t forward_count = 0;
    std::uint64_t backward_count = 0;
    int n_distinct = 0;
    double d_i_mean = 0.0; // NaN when snapshots are off
    double d_c_mean = 0.0;
    std::uint64_t seed = 0;
    bool error = false;
    std::string error_message;
};

struct CampaignResult {
    std::vector<CampaignRow> rows;
    bool all_ok = true;

    std::string to_csv() const;
};

extern const char* kCampaignCsvHeader;

// Untargeted: fraction with argmax != label. Targeted: fraction with
// argmax == target label.
double attack_success_rate(const Model& target, const Tensor& adversarial,
                           const std::vector<int>& labels, bool targeted,
                           const std::vector<int>& target_labels = {});

// Runs the full cell matrix. One attack per (cell, repeat); one row per
// (cell, target, repeat). Rows are deterministic given seeds except
// time-ms. The CSV at spec.out_path is written atomically.
CampaignResult run_campaign(const CampaignSpec& spec);

// Variant for callers that already hold a pool + eval set (testing and the
// acceptance suite); skips training and does not write a file.
CampaignResult run_campaign_cells(const CampaignSpec& spec, const ModelPool& pool,
                                  const Dataset& dataset, const EvalSet& eval_set);

void write_text_atomic(const std::string& path, const std::string& text);

// Monte-Carlo check of the distinct-model expectation (delegates to the
// selection module oracle).
ExpectationCheck verify_expectation(int s, int m, int T, std::size_t trials, std::uint64_t seed);

// One-sided sign test: P(Binomial(n, 1/2) >= wins).
double sign_test_p_value(int wins, int n);

} // namespace sea
