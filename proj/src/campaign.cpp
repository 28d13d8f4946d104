#include "sea/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "sea/diversity.hpp"
#include "sea/errors.hpp"

namespace sea {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string item = trim(s.substr(pos, comma - pos));
        if (!item.empty()) out.push_back(item);
        pos = comma + 1;
    }
    return out;
}

long parse_long(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long r = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs an integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs an unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' needs true|false, got '" + v + "'");
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        }
        if (kv.count(key)) {
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");
        }
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

CampaignSpec CampaignSpec::from_config(const std::map<std::string, std::string>& kv) {
    static const std::set<std::string> known = {
        "pool.s",          "pool.targets",     "pool.seed",       "pool.family",
        "data.kind",       "data.n",           "data.classes",    "data.hw",
        "data.seed",       "eval.n",           "attack.m",        "attack.epsilon_255",
        "attack.T",        "attack.alpha_255", "attack.mu",       "attack.baseline",
        "attack.fusion",   "attack.targeted",  "attack.di_p",     "attack.ti_k",
        "attack.si_n",     "select.strategy",  "campaign.repeats", "campaign.seed",
        "campaign.workers", "campaign.snapshots", "io.out",       "io.models",
    };
    for (const auto& [key, value] : kv) {
        if (!known.count(key)) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };

    CampaignSpec spec;
    if (auto v = get("pool.s")) spec.pool_s = static_cast<int>(parse_long("pool.s", *v));
    if (auto v = get("pool.targets")) spec.pool_targets = static_cast<int>(parse_long("pool.targets", *v));
    if (auto v = get("pool.seed")) spec.pool_seed = parse_u64("pool.seed", *v);
    if (auto v = get("pool.family")) {
        if (*v != "all") {
            spec.single_family = true;
            spec.family = parse_family(*v);
        }
    }
    if (auto v = get("data.kind")) spec.data_kind = parse_data_kind(*v);
    if (auto v = get("data.n")) spec.data_n = static_cast<std::size_t>(parse_long("data.n", *v));
    if (auto v = get("data.classes")) spec.data_classes = static_cast<int>(parse_long("data.classes", *v));
    if (auto v = get("data.hw")) spec.data_hw = static_cast<std::size_t>(parse_long("data.hw", *v));
    if (auto v = get("data.seed")) spec.data_seed = parse_u64("data.seed", *v);
    if (auto v = get("eval.n")) spec.eval_n = static_cast<std::size_t>(parse_long("eval.n", *v));
    if (auto v = get("attack.m")) {
        spec.m_values.clear();
        for (const std::string& item : split_list(*v)) {
            spec.m_values.push_back(static_cast<int>(parse_long("attack.m", item)));
        }
        if (spec.m_values.empty()) throw ConfigError("config: attack.m list is empty");
    }
    if (auto v = get("attack.epsilon_255")) spec.epsilon_255 = parse_double("attack.epsilon_255", *v);
    if (auto v = get("attack.T")) spec.iterations = static_cast<int>(parse_long("attack.T", *v));
    if (auto v = get("attack.alpha_255")) spec.alpha_255 = parse_double("attack.alpha_255", *v);
    if (auto v = get("attack.mu")) spec.mu = parse_double("attack.mu", *v);
    if (auto v = get("attack.baseline")) {
        spec.baselines.clear();
        for (const std::string& item : split_list(*v)) {
            spec.baselines.push_back(BaselineSpec::parse(item).canonical);
        }
        if (spec.baselines.empty()) throw ConfigError("config: attack.baseline list is empty");
    }
    if (auto v = get("attack.fusion")) spec.fusion = parse_fusion(*v);
    if (auto v = get("attack.targeted")) spec.targeted = parse_bool("attack.targeted", *v);
    if (auto v = get("attack.di_p")) spec.di_prob = parse_double("attack.di_p", *v);
    if (auto v = get("attack.ti_k")) spec.ti_kernel = static_cast<int>(parse_long("attack.ti_k", *v));
    if (auto v = get("attack.si_n")) spec.si_copies = static_cast<int>(parse_long("attack.si_n", *v));
    if (auto v = get("select.strategy")) {
        spec.strategies.clear();
        for (const std::string& item : split_list(*v)) {
            spec.strategies.push_back(parse_strategy(item));
        }
        if (spec.strategies.empty()) throw ConfigError("config: select.strategy list is empty");
    }
    if (auto v = get("campaign.repeats")) spec.repeats = static_cast<int>(parse_long("campaign.repeats", *v));
    if (auto v = get("campaign.seed")) spec.base_seed = parse_u64("campaign.seed", *v);
    if (auto v = get("campaign.workers")) spec.workers = static_cast<int>(parse_long("campaign.workers", *v));
    if (auto v = get("campaign.snapshots")) spec.snapshots = parse_bool("campaign.snapshots", *v);
    if (auto v = get("io.out")) spec.out_path = *v;
    if (auto v = get("io.models")) spec.models_dir = *v;

    if (spec.repeats < 1) throw ConfigError("config: campaign.repeats must be >= 1");
    if (spec.workers < 1) throw ConfigError("config: campaign.workers must be >= 1");
    return spec;
}

const char* kCampaignCsvHeader =
    "run-id,strategy,s,m,T,baseline,fusion,targeted,target-model,asr,time-ms,"
    "forward-count,backward-count,n-distinct,d_i_mean,d_c_mean,seed";

std::string CampaignResult::to_csv() const {
    std::ostringstream os;
    os << kCampaignCsvHeader << "\n";
    for (const CampaignRow& r : rows) {
        os << r.run_id << ',' << r.strategy << ',' << r.s << ',' << r.m << ',' << r.iterations
           << ',' << r.baseline << ',' << r.fusion << ',' << (r.targeted ? 1 : 0) << ','
           << r.target_model << ',' << fmt_g17(r.asr) << ',' << r.time_ms << ','
           << r.forward_count << ',' << r.backward_count << ',' << r.n_distinct << ','
           << fmt_g17(r.d_i_mean) << ',' << fmt_g17(r.d_c_mean) << ',' << r.seed << "\n";
    }
    return os.str();
}

double attack_success_rate(const Model& target, const Tensor& adversarial,
                           const std::vector<int>& labels, bool targeted,
                           const std::vector<int>& target_labels) {
    if (adversarial.rank() != 4 || adversarial.dim(0) != labels.size()) {
        throw ShapeError("attack_success_rate: batch " + adversarial.shape_str() + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (targeted) {
        if (target_labels.size() != labels.size()) {
            throw ShapeError("attack_success_rate: targeted mode needs one target label per sample");
        }
        bool warned = false;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (target_labels[i] == labels[i] && !warned) {
                std::fprintf(stderr,
                             "warning: target label equals true label for sample %zu; targeted "
                             "\"success\" is just correct classification\n",
                             i);
                warned = true;
            }
        }
    }
    const Tensor l = target.logits(adversarial);
    const std::size_t n = l.dim(0), k = l.dim(1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = l.data.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;
        }
        if (targeted) {
            if (static_cast<int>(best) == target_labels[i]) ++hits;
        } else {
            if (static_cast<int>(best) != labels[i]) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

struct Cell {
    Strategy strategy;
    std::string baseline;
    int m;
};

} // namespace

CampaignResult run_campaign_cells(const CampaignSpec& spec, const ModelPool& pool,
                                  const Dataset& dataset, const EvalSet& eval_set) {
    const int s = static_cast<int>(pool.surrogates.size());
    std::vector<Cell> cells;
    for (Strategy strategy : spec.strategies) {
        for (const std::string& baseline : spec.baselines) {
            for (int m : spec.m_values) cells.push_back({strategy, baseline, m});
        }
    }

    const Tensor x = dataset.gather_inputs(eval_set.indices);
    const std::vector<int> labels = dataset.gather_labels(eval_set.indices);
    const std::vector<int> target_labels = derive_target_labels(labels, dataset.classes);

    std::vector<const Model*> surrogates;
    for (const Model& m : pool.surrogates) surrogates.push_back(&m);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    const std::size_t tasks = cells.size() * static_cast<std::size_t>(spec.repeats);
    std::vector<std::vector<CampaignRow>> slots(tasks);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> any_error{false};

    auto run_task = [&](std::size_t task) {
        const std::size_t cell_idx = task / static_cast<std::size_t>(spec.repeats);
        const int repeat = static_cast<int>(task % static_cast<std::size_t>(spec.repeats));
        const Cell& cell = cells[cell_idx];
        const std::uint64_t run_seed = spec.base_seed + static_cast<std::uint64_t>(repeat);

        char idbuf[48];
        std::snprintf(idbuf, sizeof(idbuf), "c%02zur%d", cell_idx, repeat);

        CampaignRow proto;
        proto.run_id = idbuf;
        proto.strategy = strategy_name(cell.strategy);
        proto.s = s;
        proto.m = cell.m;
        proto.iterations = spec.iterations;
        proto.baseline = cell.baseline;
        proto.fusion = fusion_name(spec.fusion);
        proto.targeted = spec.targeted;
        proto.seed = run_seed;
        proto.asr = nan;
        proto.d_i_mean = nan;
        proto.d_c_mean = nan;

        std::vector<CampaignRow>& out = slots[task];
        try {
            SelectionConfig sel;
            sel.strategy = cell.strategy;
            sel.pool_size = s;
            sel.per_iteration = cell.m;
            if (cell.strategy == Strategy::Identical) {
                Rng subset_rng(derive_seed(run_seed, stream::kSubset));
                sel.fixed_subset = subset_rng.sample_indices(s, cell.m);
                std::sort(sel.fixed_subset.begin(), sel.fixed_subset.end());
            }

            AttackConfig cfg;
            cfg.epsilon = spec.epsilon_255 / 255.0;
            cfg.iterations = spec.iterations;
            cfg.alpha = spec.alpha_255 > 0.0 ? spec.alpha_255 / 255.0 : 0.0;
            cfg.mu = spec.mu;
            cfg.fusion = spec.fusion;
            cfg.baseline = cell.baseline;
            cfg.di_prob = spec.di_prob;
            cfg.ti_kernel = spec.ti_kernel;
            cfg.si_copies = spec.si_copies;
            cfg.targeted = spec.targeted;
            cfg.selection_seed = derive_seed(run_seed, stream::kSelection);
            cfg.transform_seed = derive_seed(run_seed, stream::kTransform);
            cfg.record_gradients = spec.snapshots;

            const auto t0 = std::chrono::steady_clock::now();
            const AttackResult res = run_attack(surrogates, x, labels, cfg, sel);
            const auto t1 = std::chrono::steady_clock::now();

            proto.time_ms =
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
            proto.forward_count = res.trace.counters.total_forward();
            proto.backward_count = res.trace.counters.total_backward();
            proto.n_distinct = res.trace.selection.distinct_count();
            if (spec.snapshots) {
                const DiversityReport rep = diversity_report(res.trace, DiversityVariant::Grad);
                proto.d_i_mean = rep.within_count ? rep.within_mean : nan;
                proto.d_c_mean = rep.cross_count ? rep.cross_mean : nan;
            }

            for (const Model& target : pool.targets) {
                CampaignRow row = proto;
                row.target_model = target.spec.id();
                row.asr = attack_success_rate(target, res.adversarial, labels, spec.targeted,
                                              target_labels);
                out.push_back(std::move(row));
            }
        } catch (const std::exception& e) {
            any_error = true;
            for (const Model& target : pool.targets) {
                CampaignRow row = proto;
                row.target_model = target.spec.id();
                row.error = true;
                row.error_message = e.what();
                out.push_back(std::move(row));
            }
        }
    };

    const int workers = std::min<int>(spec.workers, static_cast<int>(tasks));
    if (workers <= 1) {
        for (std::size_t task = 0; task < tasks; ++task) run_task(task);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([&] {
                for (;;) {
                    const std::size_t task = next.fetch_add(1);
                    if (task >= tasks) return;
                    run_task(task);
                }
            });
        }
        for (auto& t : threads) t.join();
    }

    CampaignResult result;
    result.all_ok = !any_error.load();
    for (auto& slot : slots) {
        for (auto& row : slot) result.rows.push_back(std::move(row));
    }
    return result;
}

CampaignResult run_campaign(const CampaignSpec& spec) {
    Dataset dataset = generate_dataset(spec.data_kind, spec.data_n, spec.data_classes,
                                       {1, spec.data_hw, spec.data_hw}, spec.data_seed);
    ModelPool pool;
    if (!spec.models_dir.empty()) {
        pool = load_pool(spec.models_dir);
    } else {
        ZooSpec zoo;
        zoo.surrogate_count = spec.pool_s;
        zoo.target_count = spec.pool_targets;
        zoo.input = dataset.shape();
        zoo.classes = spec.data_classes;
        zoo.single_family = spec.single_family;
        zoo.family = spec.family;
        pool = train_pool(zoo, dataset, spec.pool_seed);
    }
    const EvalSet eval_set = build_eval_set(dataset, pool, spec.eval_n, spec.data_seed);

    CampaignResult result = run_campaign_cells(spec, pool, dataset, eval_set);
    write_text_atomic(spec.out_path, result.to_csv());
    return result;
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp + "'");
        out.write(text.data(), static_cast<long>(text.size()));
        if (!out) throw Error("short write to '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

ExpectationCheck verify_expectation(int s, int m, int T, std::size_t trials, std::uint64_t seed) {
    if (trials < 10000) {
        throw ConfigError("verify_expectation: trials must be >= 10000, got " +
                          std::to_string(trials));
    }
    return simulate_expected_distinct(s, m, T, trials, seed);
}

double sign_test_p_value(int wins, int n) {
    if (n < 0 || wins < 0 || wins > n) throw ConfigError("sign_test_p_value: need 0 <= wins <= n");
    // Exact binomial tail at p = 1/2.
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double logc = 0.0;
        for (int i = 0; i < k; ++i) {
            logc += std::log(static_cast<double>(n - i)) - std::log(static_cast<double>(i + 1));
        }
        p += std::exp(logc - static_cast<double>(n) * std::log(2.0));
    }
    return std::min(1.0, p);
}

} // namespace sea
