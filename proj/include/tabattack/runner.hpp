#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabattack/attack.hpp"
#include "tabattack/common.hpp"
#include "tabattack/csv.hpp"
#include "tabattack/dataset.hpp"
#include "tabattack/explain.hpp"
#include "tabattack/metrics.hpp"
#include "tabattack/model_selection.hpp"
#include "tabattack/models.hpp"
#include "tabattack/preprocess.hpp"
#include "tabattack/report.hpp"
#include "tabattack/synthetic.hpp"

namespace tabattack {

struct ModelSpec {
    ModelKind kind = ModelKind::RF;
    Hyperparams hyperparams;                   // fixed point (may be empty)
    std::optional<HyperGrid> grid;             // grid search when present
    nlohmann::ordered_json grid_echo;
};

/// One structured configuration drives the whole run; flags only override
/// fields. All randomness flows from the seeds below - nothing reads system
/// entropy.
struct RunConfig {
    std::string dataset_path;  // empty when synthetic
    std::optional<SyntheticSpec> synthetic;
    std::string label_name = "label";
    std::vector<bool> non_negative;  // empty => all features non-negative

    double train_fraction = 0.9;
    std::optional<std::uint64_t> split_seed;  // default derived from master seed
    bool stratified = false;

    bool filter_enabled = true;
    double filter_threshold = 0.7;

    bool smote_enabled = true;
    int smote_k_neighbors = 5;

    bool undersample_test_set = false;

    std::vector<ModelSpec> models;
    int cv_folds = 10;

    std::vector<ExplainerKind> explainers;

    // attack knobs (seed comes from the master seed per cell)
    int attack_max_k = 0;
    double lambda_weight = 1.0;
    DirectionPolicy policy = DirectionPolicy::Auto;
    int n_coalitions = 2000;
    int n_samples = 0;
    double kernel_width = 0.0;
    std::size_t background_size = 100;

    double gate_threshold = 0.75;
    bool strict_gate = false;

    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int threads = 1;

    static RunConfig parse(const nlohmann::ordered_json& doc);
    nlohmann::ordered_json echo() const;
};

namespace detail {

inline void require_keys(const nlohmann::ordered_json& obj, const std::string& where,
                         const std::vector<std::string>& known) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("config: unknown field '" + where + "." + it.key() + "'");
}

template <typename T>
T get_or(const nlohmann::ordered_json& obj, const std::string& key, T def) {
    if (!obj.contains(key)) return def;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: field '" + key + "' has the wrong type");
    }
}

}  // namespace detail

inline RunConfig RunConfig::parse(const nlohmann::ordered_json& doc) {
    if (!doc.is_object()) throw ConfigError("config: root must be a JSON object");
    detail::require_keys(doc, "",
                         {"dataset", "split", "filter", "smote", "undersample_test", "models",
                          "cv_folds", "explainers", "attack", "gate", "strict_gate", "seed",
                          "out_dir", "threads"});
    RunConfig cfg;

    if (!doc.contains("seed") || !doc.at("seed").is_number_integer() ||
        (doc.at("seed").is_number_integer() && !doc.at("seed").is_number_unsigned() &&
         doc.at("seed").get<std::int64_t>() < 0))
        throw ConfigError("config: a non-negative integer 'seed' is required");
    cfg.seed = doc.at("seed").get<std::uint64_t>();

    if (!doc.contains("dataset") || !doc.at("dataset").is_object())
        throw ConfigError("config: 'dataset' object is required");
    const auto& dj = doc.at("dataset");
    detail::require_keys(dj, "dataset", {"path", "label", "non_negative", "synthetic"});
    if (dj.contains("path") && dj.contains("synthetic"))
        throw ConfigError("config: dataset.path and dataset.synthetic are mutually exclusive");
    if (dj.contains("path")) {
        cfg.dataset_path = dj.at("path").get<std::string>();
        if (!std::filesystem::exists(cfg.dataset_path))
            throw ConfigError("config: dataset.path '" + cfg.dataset_path + "' does not exist");
        if (!dj.contains("label")) throw ConfigError("config: dataset.label is required");
        cfg.label_name = dj.at("label").get<std::string>();
    } else if (dj.contains("synthetic")) {
        const auto& sj = dj.at("synthetic");
        detail::require_keys(sj, "dataset.synthetic",
                             {"n_samples", "n_features", "positive_ratio", "informative",
                              "noise", "seed"});
        SyntheticSpec spec;
        spec.n_samples = detail::get_or<std::size_t>(sj, "n_samples", spec.n_samples);
        spec.n_features = detail::get_or<std::size_t>(sj, "n_features", spec.n_features);
        spec.positive_ratio = detail::get_or<double>(sj, "positive_ratio", spec.positive_ratio);
        spec.informative = detail::get_or<std::size_t>(sj, "informative", spec.informative);
        spec.noise = detail::get_or<double>(sj, "noise", spec.noise);
        spec.seed = detail::get_or<std::uint64_t>(sj, "seed", derive_seed(cfg.seed, 0x5e));
        spec.validate();
        cfg.synthetic = spec;
        cfg.label_name = "label";
    } else {
        throw ConfigError("config: dataset needs either 'path' or 'synthetic'");
    }
    if (dj.contains("non_negative")) {
        const auto& nn = dj.at("non_negative");
        if (nn.is_string() && nn.get<std::string>() == "all") {
            cfg.non_negative.clear();
        } else if (nn.is_array()) {
            for (const auto& b : nn) cfg.non_negative.push_back(b.get<bool>());
        } else {
            throw ConfigError("config: dataset.non_negative must be \"all\" or an array of booleans");
        }
    }

    if (doc.contains("split")) {
        const auto& sj = doc.at("split");
        detail::require_keys(sj, "split", {"train_fraction", "seed", "stratified"});
        cfg.train_fraction = detail::get_or<double>(sj, "train_fraction", cfg.train_fraction);
        if (sj.contains("seed")) cfg.split_seed = sj.at("seed").get<std::uint64_t>();
        cfg.stratified = detail::get_or<bool>(sj, "stratified", cfg.stratified);
        if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
            throw ConfigError("config: split.train_fraction must be in (0,1)");
    }
    if (doc.contains("filter")) {
        const auto& fj = doc.at("filter");
        detail::require_keys(fj, "filter", {"enabled", "threshold"});
        cfg.filter_enabled = detail::get_or<bool>(fj, "enabled", cfg.filter_enabled);
        cfg.filter_threshold = detail::get_or<double>(fj, "threshold", cfg.filter_threshold);
        if (!(cfg.filter_threshold > 0.0 && cfg.filter_threshold <= 1.0))
            throw ConfigError("config: filter.threshold must be in (0,1]");
    }
    if (doc.contains("smote")) {
        const auto& sj = doc.at("smote");
        detail::require_keys(sj, "smote", {"enabled", "k_neighbors"});
        cfg.smote_enabled = detail::get_or<bool>(sj, "enabled", cfg.smote_enabled);
        cfg.smote_k_neighbors = detail::get_or<int>(sj, "k_neighbors", cfg.smote_k_neighbors);
        if (cfg.smote_k_neighbors < 1)
            throw ConfigError("config: smote.k_neighbors must be >= 1");
    }
    cfg.undersample_test_set = detail::get_or<bool>(doc, "undersample_test", false);

    if (!doc.contains("models") || !doc.at("models").is_array() || doc.at("models").empty())
        throw ConfigError("config: non-empty 'models' array is required");
    for (const auto& mj : doc.at("models")) {
        detail::require_keys(mj, "models[]", {"kind", "hyperparams", "grid"});
        if (!mj.contains("kind")) throw ConfigError("config: models[].kind is required");
        ModelSpec spec;
        spec.kind = model_kind_from_string(mj.at("kind").get<std::string>());
        if (mj.contains("hyperparams")) spec.hyperparams = mj.at("hyperparams");
        if (mj.contains("grid")) {
            spec.grid = HyperGrid::from_json(mj.at("grid"));
            spec.grid_echo = mj.at("grid");
        }
        cfg.models.push_back(std::move(spec));
    }
    cfg.cv_folds = detail::get_or<int>(doc, "cv_folds", cfg.cv_folds);
    if (cfg.cv_folds < 2) throw ConfigError("config: cv_folds must be >= 2");

    if (!doc.contains("explainers") || !doc.at("explainers").is_array() ||
        doc.at("explainers").empty())
        throw ConfigError("config: non-empty 'explainers' array is required");
    for (const auto& ej : doc.at("explainers"))
        cfg.explainers.push_back(explainer_kind_from_string(ej.get<std::string>()));

    if (doc.contains("attack")) {
        const auto& aj = doc.at("attack");
        detail::require_keys(aj, "attack",
                             {"max_k", "lambda", "policy", "n_coalitions", "n_samples",
                              "kernel_width", "background_size"});
        cfg.attack_max_k = detail::get_or<int>(aj, "max_k", cfg.attack_max_k);
        cfg.lambda_weight = detail::get_or<double>(aj, "lambda", cfg.lambda_weight);
        if (aj.contains("policy"))
            cfg.policy = direction_policy_from_string(aj.at("policy").get<std::string>());
        cfg.n_coalitions = detail::get_or<int>(aj, "n_coalitions", cfg.n_coalitions);
        cfg.n_samples = detail::get_or<int>(aj, "n_samples", cfg.n_samples);
        cfg.kernel_width = detail::get_or<double>(aj, "kernel_width", cfg.kernel_width);
        cfg.background_size =
            detail::get_or<std::size_t>(aj, "background_size", cfg.background_size);
        if (cfg.attack_max_k < 0) throw ConfigError("config: attack.max_k must be >= 0");
    }
    if (doc.contains("gate")) {
        const auto& gj = doc.at("gate");
        detail::require_keys(gj, "gate", {"threshold"});
        cfg.gate_threshold = detail::get_or<double>(gj, "threshold", cfg.gate_threshold);
        if (!(cfg.gate_threshold >= 0.0 && cfg.gate_threshold <= 1.0))
            throw ConfigError("config: gate.threshold must be in [0,1]");
    }
    cfg.strict_gate = detail::get_or<bool>(doc, "strict_gate", false);
    cfg.out_dir = detail::get_or<std::string>(doc, "out_dir", cfg.out_dir);
    cfg.threads = detail::get_or<int>(doc, "threads", cfg.threads);
    if (cfg.threads < 1) throw ConfigError("config: threads must be >= 1");
    return cfg;
}

inline nlohmann::ordered_json RunConfig::echo() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json dj;
    if (synthetic) {
        dj["synthetic"] = {{"n_samples", synthetic->n_samples},
                           {"n_features", synthetic->n_features},
                           {"positive_ratio", synthetic->positive_ratio},
                           {"informative", synthetic->informative},
                           {"noise", synthetic->noise},
                           {"seed", synthetic->seed}};
    } else {
        dj["path"] = dataset_path;
        dj["label"] = label_name;
    }
    if (non_negative.empty()) dj["non_negative"] = "all";
    else dj["non_negative"] = non_negative;
    j["dataset"] = std::move(dj);
    nlohmann::ordered_json sj;
    sj["train_fraction"] = train_fraction;
    sj["seed"] = split_seed ? *split_seed : derive_seed(seed, 0x51);
    sj["stratified"] = stratified;
    j["split"] = std::move(sj);
    j["filter"] = {{"enabled", filter_enabled}, {"threshold", filter_threshold}};
    j["smote"] = {{"enabled", smote_enabled}, {"k_neighbors", smote_k_neighbors}};
    j["undersample_test"] = undersample_test_set;
    nlohmann::ordered_json mj = nlohmann::ordered_json::array();
    for (const auto& m : models) {
        nlohmann::ordered_json one;
        one["kind"] = to_string(m.kind);
        if (!m.hyperparams.is_null()) one["hyperparams"] = m.hyperparams;
        if (m.grid) one["grid"] = m.grid_echo;
        mj.push_back(std::move(one));
    }
    j["models"] = std::move(mj);
    j["cv_folds"] = cv_folds;
    nlohmann::ordered_json ej = nlohmann::ordered_json::array();
    for (ExplainerKind e : explainers) ej.push_back(to_string(e));
    j["explainers"] = std::move(ej);
    j["attack"] = {{"max_k", attack_max_k},
                   {"lambda", lambda_weight},
                   {"policy", to_string(policy)},
                   {"n_coalitions", n_coalitions},
                   {"n_samples", n_samples},
                   {"kernel_width", kernel_width},
                   {"background_size", background_size}};
    j["gate"] = {{"threshold", gate_threshold}};
    j["strict_gate"] = strict_gate;
    j["seed"] = seed;
    // out_dir and threads are invocation details: they never affect artifact
    // bytes, so the echo leaves them out and scheduling cannot leak into the
    // manifest
    return j;
}

/// Loads a config file; a manifest with a top-level "config" key is unwrapped
/// so a run can be reproduced directly from its own manifest.
inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::ordered_json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (doc.is_object() && doc.contains("config")) return RunConfig::parse(doc.at("config"));
    return RunConfig::parse(doc);
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

struct PreparedData {
    Dataset train;           // rows the models fit on (filtered, SMOTE applied)
    Dataset train_presmote;  // filtered training rows before SMOTE
    Dataset test;
    FeatureStats stats;  // computed on the pre-SMOTE filtered training rows
    std::vector<std::string> dropped;
};

inline PreparedData prepare_data(const RunConfig& cfg) {
    Dataset ds;
    if (cfg.synthetic) {
        ds = generate_synthetic(*cfg.synthetic);
    } else {
        NonNegativePolicy policy;
        policy.flags = cfg.non_negative;
        ds = load_csv(cfg.dataset_path, cfg.label_name, policy);
    }

    SplitConfig sc;
    sc.train_fraction = cfg.train_fraction;
    sc.seed = cfg.split_seed ? *cfg.split_seed : derive_seed(cfg.seed, 0x51);
    sc.stratified = cfg.stratified;
    auto [train_raw, test] = split(ds, sc);

    PreparedData out;
    if (cfg.filter_enabled) {
        SpearmanFilterResult fr = spearman_filter(train_raw, cfg.filter_threshold);
        out.dropped = fr.dropped;
        out.train_presmote = std::move(fr.reduced);
        out.test = test.take_features(fr.kept_indices);
    } else {
        out.train_presmote = std::move(train_raw);
        out.test = std::move(test);
    }

    out.stats = feature_stats(out.train_presmote);
    out.train = cfg.smote_enabled
                    ? smote(out.train_presmote, cfg.smote_k_neighbors, derive_seed(cfg.seed, 0x50))
                    : out.train_presmote;
    if (cfg.undersample_test_set)
        out.test = undersample_test(out.test, derive_seed(cfg.seed, 0x5a));
    return out;
}

struct TrainedModel {
    ModelKind kind = ModelKind::RF;
    Hyperparams resolved_hyperparams;
    CvResult cv;
    MetricsBundle test_metrics;
    bool gate_passed = false;
    std::uint64_t model_seed = 0;
    std::unique_ptr<Classifier> clf;
};

inline TrainedModel train_one_model(const RunConfig& cfg, const PreparedData& data,
                                    const ModelSpec& spec, std::size_t model_index) {
    TrainedModel out;
    out.kind = spec.kind;
    out.model_seed = derive_seed(cfg.seed, 0x30, model_index);

    Hyperparams hp = spec.hyperparams;
    if (spec.grid) {
        const GridSearchResult gs = grid_search(spec.kind, *spec.grid, data.train, cfg.cv_folds,
                                                derive_seed(out.model_seed, 0x95));
        hp = gs.best_hyperparams;
    }
    out.resolved_hyperparams = hp;
    out.cv = cross_validate(spec.kind, hp, data.train, cfg.cv_folds,
                            derive_seed(out.model_seed, 0xc7));
    out.clf = train(spec.kind, hp, data.train, derive_seed(out.model_seed, 0xf1));

    std::vector<double> scores(data.test.n_rows());
    for (std::size_t i = 0; i < data.test.n_rows(); ++i)
        scores[i] = out.clf->predict_proba(data.test.row(i)).second;
    out.test_metrics = classification_metrics(data.test.labels(), scores);
    out.gate_passed =
        out.test_metrics.auc_defined && reliability_gate(out.test_metrics.auc, cfg.gate_threshold);
    return out;
}

struct CellOutput {
    AttackReport report;
    std::vector<AdversarialExample> examples;  // at chosen_k
};

/// One (model, explainer) attack cell, pure given its derived seed.
inline CellOutput run_cell(const RunConfig& cfg, const PreparedData& data,
                           const TrainedModel& model, ExplainerKind explainer,
                           std::size_t model_index, std::size_t explainer_index) {
    AttackConfig ac;
    ac.explainer = explainer;
    ac.max_k = cfg.attack_max_k;
    ac.lambda_weight = cfg.lambda_weight;
    ac.policy = cfg.policy;
    ac.seed = derive_seed(cfg.seed, 0xce, model_index, explainer_index);
    ac.n_coalitions = cfg.n_coalitions;
    ac.n_samples = cfg.n_samples;
    ac.kernel_width = cfg.kernel_width;
    ac.background_size = cfg.background_size;

    AttackContext ctx;
    ctx.train = &data.train;
    ctx.stats = &data.stats;

    AttackResult res = run_attack(*model.clf, data.test, ac, ctx);

    AttackReport rep;
    rep.model_kind = to_string(model.kind);
    rep.hyperparams = model.resolved_hyperparams;
    rep.explainer = to_string(explainer);
    rep.pre_attack = model.test_metrics;
    rep.gate_threshold = cfg.gate_threshold;
    rep.gate_passed = model.gate_passed;
    rep.low_reliability = !model.gate_passed;
    rep.curve = res.curve;
    rep.objective = res.objective;

    const int k = res.curve.chosen_k;
    const std::size_t d = data.test.n_features();
    rep.baselines_defined = static_cast<std::size_t>(2 * k) <= d;
    if (rep.baselines_defined) {
        rep.bl_asr = baseline_asr(*model.clf, res, k, BaselineKind::BottomK, data.stats,
                                  data.test.schema(), derive_seed(ac.seed, 0xb1));
        rep.br_asr = baseline_asr(*model.clf, res, k, BaselineKind::RandomK, data.stats,
                                  data.test.schema(), derive_seed(ac.seed, 0xb2));
    }
    rep.deltas = prob_delta_summary(res.examples);
    for (const auto& ex : res.examples)
        rep.instance_deltas.emplace_back(ex.instance_index, std::abs(ex.p_before - ex.p_after));
    rep.n_test = data.test.n_rows();
    rep.n_correct = res.subset.indices.size();
    for (const auto& ex : res.examples) rep.n_flipped += ex.flipped ? 1 : 0;
    rep.master_seed = cfg.seed;
    rep.cell_seed = ac.seed;
    rep.config_echo = {{"explainer", to_string(explainer)},
                       {"max_k", ac.max_k},
                       {"lambda", ac.lambda_weight},
                       {"policy", to_string(ac.policy)},
                       {"n_coalitions", ac.n_coalitions},
                       {"n_samples", ac.n_samples},
                       {"kernel_width", ac.kernel_width},
                       {"background_size", ac.background_size}};
    return {std::move(rep), std::move(res.examples)};
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct RunOutcome {
    int exit_code = 0;
    std::vector<EmittedFile> files;
    std::vector<std::string> summary_lines;
};

namespace detail {

/// Tracks everything written so a failed run leaves no partial outputs.
class OutputTracker {
public:
    explicit OutputTracker(std::filesystem::path root) : root_(std::move(root)) {}

    void create_dir(const std::filesystem::path& p) {
        std::filesystem::path cur;
        for (const auto& part : p) {
            cur /= part;
            if (!std::filesystem::exists(cur)) {
                std::filesystem::create_directory(cur);
                created_dirs_.push_back(cur);
            }
        }
    }

    EmittedFile write_file(const std::filesystem::path& rel, const std::string& body) {
        const std::filesystem::path full = root_ / rel;
        create_dir(full.parent_path());
        std::ofstream out(full, std::ios::binary);
        if (!out) throw DataError("run: cannot open '" + full.string() + "' for writing");
        out << body;
        if (!out) throw DataError("run: write failed for '" + full.string() + "'");
        created_files_.push_back(full);
        return {rel.generic_string(), body.size()};
    }

    void track_emitted(const std::filesystem::path& full) { created_files_.push_back(full); }

    void rollback() {
        std::error_code ec;
        for (auto it = created_files_.rbegin(); it != created_files_.rend(); ++it)
            std::filesystem::remove(*it, ec);
        for (auto it = created_dirs_.rbegin(); it != created_dirs_.rend(); ++it)
            std::filesystem::remove(*it, ec);  // only removes empty dirs
    }

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    std::vector<std::filesystem::path> created_dirs_;
    std::vector<std::filesystem::path> created_files_;
};

inline std::string hash_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64_hex(ss.str());
}

inline std::string stats_json(const FeatureStats& stats) {
    nlohmann::ordered_json j;
    j["names"] = stats.names;
    j["mean"] = stats.mean;
    j["std"] = stats.std;
    return j.dump(2) + "\n";
}

template <typename Fn>
auto map_maybe_parallel(std::size_t n, int threads, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<R> out(n);
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::future<R>> futures;
    futures.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        futures.push_back(std::async(std::launch::async, [&fn, i] { return fn(i); }));
    for (std::size_t i = 0; i < n; ++i) out[i] = futures[i].get();
    return out;
}

}  // namespace detail

enum class RunStage { Prepare, Train, Attack, Report, Full };

/// Executes the pipeline up to `stage` and writes that stage's artifacts.
/// Later stages recompute earlier ones deterministically from the config, so
/// staged invocations always agree with an all-in-one run.
inline RunOutcome run_pipeline(const RunConfig& cfg, RunStage stage, std::ostream& log) {
    RunOutcome outcome;
    detail::OutputTracker tracker(cfg.out_dir);
    try {
        const PreparedData data = prepare_data(cfg);

        if (stage == RunStage::Prepare) {
            tracker.create_dir(tracker.root() / "prepared");
            const auto base = tracker.root() / "prepared";
            const std::vector<std::pair<std::string, const Dataset*>> snapshots = {
                {"train.csv", &data.train},
                {"train_presmote.csv", &data.train_presmote},
                {"test.csv", &data.test}};
            for (const auto& [name, ds_ptr] : snapshots) {
                save_csv(*ds_ptr, (base / name).string());
                tracker.track_emitted(base / name);
                outcome.files.push_back(
                    {"prepared/" + name,
                     static_cast<std::size_t>(std::filesystem::file_size(base / name))});
            }
            outcome.files.push_back(
                tracker.write_file("prepared/stats.json", detail::stats_json(data.stats)));
            nlohmann::ordered_json schema;
            schema["features"] = data.train.schema().names;
            std::vector<bool> nn(data.train.schema().non_negative.begin(),
                                 data.train.schema().non_negative.end());
            schema["non_negative"] = nn;
            schema["label"] = data.train.schema().label_name;
            schema["dropped"] = data.dropped;
            outcome.files.push_back(
                tracker.write_file("prepared/schema.json", schema.dump(2) + "\n"));
            log << "prepared: train=" << data.train.n_rows()
                << " (pre-SMOTE " << data.train_presmote.n_rows() << ")"
                << " test=" << data.test.n_rows() << " features=" << data.train.n_features()
                << " dropped=" << data.dropped.size() << "\n";
            return outcome;
        }

        // train stage (models are independent; seeds derive from the index)
        std::vector<TrainedModel> trained = detail::map_maybe_parallel(
            cfg.models.size(), cfg.threads,
            [&](std::size_t i) { return train_one_model(cfg, data, cfg.models[i], i); });

        bool gate_failure = false;
        for (const auto& tm : trained) {
            if (!tm.gate_passed) {
                gate_failure = true;
                log << "warning: " << to_string(tm.kind) << " test AUC "
                    << (tm.test_metrics.auc_defined ? format_double(tm.test_metrics.auc) : "n/a")
                    << " below gate " << format_double(cfg.gate_threshold)
                    << (cfg.strict_gate ? " (strict gate: failing)"
                                        : " (continuing, marked low-reliability)")
                    << "\n";
            }
            for (const auto& w : tm.clf->warnings()) log << "warning: " << w << "\n";
        }
        if (cfg.strict_gate && gate_failure) {
            tracker.rollback();
            outcome.exit_code = 1;
            return outcome;
        }

        nlohmann::ordered_json metrics_doc = nlohmann::ordered_json::array();
        for (const auto& tm : trained) {
            nlohmann::ordered_json m;
            m["kind"] = to_string(tm.kind);
            m["hyperparams"] = tm.resolved_hyperparams.is_null()
                                   ? nlohmann::ordered_json::object()
                                   : nlohmann::ordered_json(tm.resolved_hyperparams);
            m["cv"] = {{"folds", cfg.cv_folds},
                       {"mean_auc", tm.cv.mean_auc},
                       {"mean_accuracy", tm.cv.mean_accuracy},
                       {"mean_f1", tm.cv.mean_f1}};
            m["test"] = {{"accuracy", tm.test_metrics.accuracy},
                         {"f1", tm.test_metrics.f1},
                         {"auc", tm.test_metrics.auc_defined
                                     ? nlohmann::ordered_json(tm.test_metrics.auc)
                                     : nlohmann::ordered_json(nullptr)}};
            m["gate_passed"] = tm.gate_passed;
            m["seed"] = tm.model_seed;
            metrics_doc.push_back(std::move(m));
        }

        if (stage == RunStage::Train) {
            for (const auto& tm : trained) {
                const std::string rel = "models/" + to_string(tm.kind) + ".json";
                outcome.files.push_back(
                    tracker.write_file(rel, model_to_json(*tm.clf).dump(2) + "\n"));
            }
            outcome.files.push_back(
                tracker.write_file("models/metrics.json", metrics_doc.dump(2) + "\n"));
            for (const auto& tm : trained)
                log << to_string(tm.kind) << ": cv_auc="
                    << (tm.cv.auc_defined ? format_double(tm.cv.mean_auc) : "n/a") << " test_auc="
                    << (tm.test_metrics.auc_defined ? format_double(tm.test_metrics.auc) : "n/a")
                    << " gate=" << (tm.gate_passed ? "pass" : "FAIL") << "\n";
            return outcome;
        }

        // attack cells (model x explainer), each with a derived seed
        const std::size_t n_cells = trained.size() * cfg.explainers.size();
        std::vector<CellOutput> cells = detail::map_maybe_parallel(
            n_cells, cfg.threads, [&](std::size_t c) {
                const std::size_t mi = c / cfg.explainers.size();
                const std::size_t ei = c % cfg.explainers.size();
                return run_cell(cfg, data, trained[mi], cfg.explainers[ei], mi, ei);
            });

        // all writes happen here, serially, in a fixed order
        for (const auto& tm : trained) {
            const std::string rel = "models/" + to_string(tm.kind) + ".json";
            outcome.files.push_back(tracker.write_file(rel, model_to_json(*tm.clf).dump(2) + "\n"));
        }
        outcome.files.push_back(
            tracker.write_file("models/metrics.json", metrics_doc.dump(2) + "\n"));

        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::size_t mi = c / cfg.explainers.size();
            const std::size_t ei = c % cfg.explainers.size();
            const AttackReport& rep = cells[c].report;
            const std::string cell =
                to_string(trained[mi].kind) + "_" + to_string(cfg.explainers[ei]);

            outcome.files.push_back(tracker.write_file(
                cell + "/adversarial.jsonl", adversarial_records_jsonl(cells[c].examples)));

            if (stage == RunStage::Attack) {
                std::string curve_csv = "k,asr\n";
                for (std::size_t s = 0; s < rep.curve.asr.size(); ++s)
                    curve_csv +=
                        std::to_string(s + 1) + "," + format_double(rep.curve.asr[s]) + "\n";
                outcome.files.push_back(tracker.write_file(cell + "/asr_curve.csv", curve_csv));
            } else {
                tracker.create_dir(tracker.root() / cell);
                for (const EmittedFile& f : emit_report(rep, (tracker.root() / cell).string())) {
                    tracker.track_emitted(f.path);
                    outcome.files.push_back(
                        {cell + "/" + std::filesystem::path(f.path).filename().string(), f.bytes});
                }
            }

            std::ostringstream line;
            line << rep.model_kind << " [" << rep.explainer << "]"
                 << " auc=" << (rep.pre_attack.auc_defined ? format_double(rep.pre_attack.auc) : "n/a")
                 << " gate=" << (rep.gate_passed ? "pass" : "fail")
                 << " chosen_k=" << rep.curve.chosen_k << " asr="
                 << format_double(rep.curve.asr[static_cast<std::size_t>(rep.curve.chosen_k - 1)]);
            if (rep.baselines_defined)
                line << " bl=" << format_double(rep.bl_asr) << " br=" << format_double(rep.br_asr);
            outcome.summary_lines.push_back(line.str());
        }

        if (stage == RunStage::Report || stage == RunStage::Full) {
            nlohmann::ordered_json manifest;
            manifest["format_version"] = 1;
            manifest["config"] = cfg.echo();
            nlohmann::ordered_json seeds;
            seeds["master"] = cfg.seed;
            nlohmann::ordered_json model_seeds = nlohmann::ordered_json::array();
            for (const auto& tm : trained) model_seeds.push_back(tm.model_seed);
            seeds["models"] = std::move(model_seeds);
            nlohmann::ordered_json cell_seeds = nlohmann::ordered_json::array();
            for (const auto& cell : cells) cell_seeds.push_back(cell.report.cell_seed);
            seeds["cells"] = std::move(cell_seeds);
            manifest["seeds"] = std::move(seeds);
            nlohmann::ordered_json artifacts = nlohmann::ordered_json::array();
            for (const EmittedFile& f : outcome.files) {
                artifacts.push_back({{"path", f.path},
                                     {"bytes", f.bytes},
                                     {"fnv1a64", detail::hash_file(tracker.root() / f.path)}});
            }
            manifest["artifacts"] = std::move(artifacts);
            outcome.files.push_back(
                tracker.write_file("run_manifest.json", manifest.dump(2) + "\n"));
        }

        for (const auto& line : outcome.summary_lines) log << line << "\n";
        outcome.exit_code = 0;
        return outcome;
    } catch (...) {
        tracker.rollback();
        throw;
    }
}

inline RunOutcome run(const RunConfig& cfg, std::ostream& log = std::cout) {
    return run_pipeline(cfg, RunStage::Full, log);
}

}  // namespace tabattack
