#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabattack/attack.hpp"
#include "tabattack/common.hpp"
#include "tabattack/metrics.hpp"

namespace tabattack {

/// Probability delta per attacked instance: |p_before - p_after| on the
/// originally predicted class. In the binary case the positive-class delta
/// equals the negative-class delta, so the stored positive-class pair is
/// used directly.
inline DeltaSummary prob_delta_summary(const std::vector<AdversarialExample>& results) {
    if (results.empty()) throw DataError("prob_delta_summary: empty results");
    std::vector<double> deltas;
    deltas.reserve(results.size());
    for (const auto& r : results) deltas.push_back(std::abs(r.p_before - r.p_after));
    return summarize_deltas(deltas);
}

/// Everything one (model, explainer) attack cell produced.
struct AttackReport {
    std::string model_kind;
    Hyperparams hyperparams;
    std::string explainer;
    MetricsBundle pre_attack;  // test-set metrics before the attack
    double gate_threshold = 0.75;
    bool gate_passed = false;
    bool low_reliability = false;  // attack ran despite a failing gate
    AsrCurve curve;
    double objective = 0.0;
    bool baselines_defined = false;
    double bl_asr = 0.0;
    double br_asr = 0.0;
    DeltaSummary deltas;
    std::vector<std::pair<std::size_t, double>> instance_deltas;  // (row, delta)
    std::size_t n_test = 0;
    std::size_t n_correct = 0;
    std::size_t n_flipped = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t cell_seed = 0;
    nlohmann::ordered_json config_echo;  // resolved attack configuration
};

struct EmittedFile {
    std::string path;
    std::size_t bytes = 0;
};

inline nlohmann::ordered_json report_to_json(const AttackReport& r) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    nlohmann::ordered_json model;
    model["kind"] = r.model_kind;
    model["hyperparams"] = r.hyperparams.is_null()
                               ? nlohmann::ordered_json::object()
                               : nlohmann::ordered_json(r.hyperparams);
    j["model"] = std::move(model);
    j["explainer"] = r.explainer;
    nlohmann::ordered_json metrics;
    metrics["accuracy"] = r.pre_attack.accuracy;
    metrics["f1"] = r.pre_attack.f1;
    if (r.pre_attack.auc_defined) metrics["auc"] = r.pre_attack.auc;
    else metrics["auc"] = nullptr;
    metrics["tp"] = r.pre_attack.tp;
    metrics["fp"] = r.pre_attack.fp;
    metrics["tn"] = r.pre_attack.tn;
    metrics["fn"] = r.pre_attack.fn;
    j["pre_attack_metrics"] = std::move(metrics);
    j["reliability"] = {{"threshold", r.gate_threshold},
                        {"passed", r.gate_passed},
                        {"low_reliability", r.low_reliability}};
    nlohmann::ordered_json curve;
    curve["k"] = nlohmann::ordered_json::array();
    curve["asr"] = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < r.curve.asr.size(); ++s) {
        curve["k"].push_back(s + 1);
        curve["asr"].push_back(r.curve.asr[s]);
    }
    curve["chosen_k"] = r.curve.chosen_k;
    curve["prefixes"] = r.curve.prefixes;
    j["asr_curve"] = std::move(curve);
    j["objective"] = r.objective;
    if (r.baselines_defined) {
        j["baselines"] = {{"k", r.curve.chosen_k}, {"bl_asr", r.bl_asr}, {"br_asr", r.br_asr}};
    } else {
        j["baselines"] = nullptr;
    }
    j["prob_delta"] = {{"mean", r.deltas.mean}, {"median", r.deltas.median},
                       {"q1", r.deltas.q1},     {"q3", r.deltas.q3},
                       {"min", r.deltas.min},   {"max", r.deltas.max},
                       {"histogram", r.deltas.histogram}};
    j["counts"] = {{"test_rows", r.n_test},
                   {"correct_subset", r.n_correct},
                   {"flipped", r.n_flipped}};
    j["seeds"] = {{"master", r.master_seed}, {"cell", r.cell_seed}};
    j["config_echo"] = r.config_echo;
    return j;
}

namespace detail {

inline EmittedFile write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("emit_report: cannot open '" + path.string() + "' for writing");
    out << body;
    if (!out) throw DataError("emit_report: write failed for '" + path.string() + "'");
    return {path.string(), body.size()};
}

}  // namespace detail

/// Writes report.json, asr_curve.csv, prob_deltas.csv and baselines.csv with
/// stable key order and 17-significant-digit floats; identical runs produce
/// identical bytes. Returns the four-file manifest.
inline std::vector<EmittedFile> emit_report(const AttackReport& r, const std::string& out_dir) {
    if (r.curve.asr.empty()) throw DataError("emit_report: report has an empty ASR curve");
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("emit_report: cannot create '" + out_dir + "': " + ec.message());

    std::vector<EmittedFile> manifest;
    manifest.push_back(
        detail::write_text_file(dir / "report.json", report_to_json(r).dump(2) + "\n"));

    std::string curve_csv = "k,asr\n";
    for (std::size_t s = 0; s < r.curve.asr.size(); ++s)
        curve_csv += std::to_string(s + 1) + "," + format_double(r.curve.asr[s]) + "\n";
    manifest.push_back(detail::write_text_file(dir / "asr_curve.csv", curve_csv));

    std::string deltas_csv = "instance,delta\n";
    for (const auto& [row, delta] : r.instance_deltas)
        deltas_csv += std::to_string(row) + "," + format_double(delta) + "\n";
    manifest.push_back(detail::write_text_file(dir / "prob_deltas.csv", deltas_csv));

    std::string baselines_csv = "method,k,asr\n";
    if (r.baselines_defined) {
        baselines_csv += "BL," + std::to_string(r.curve.chosen_k) + "," +
                         format_double(r.bl_asr) + "\n";
        baselines_csv += "BR," + std::to_string(r.curve.chosen_k) + "," +
                         format_double(r.br_asr) + "\n";
    }
    manifest.push_back(detail::write_text_file(dir / "baselines.csv", baselines_csv));
    return manifest;
}

/// JSON-lines dump of per-instance adversarial records.
inline std::string adversarial_records_jsonl(const std::vector<AdversarialExample>& examples) {
    std::string body;
    for (const auto& ex : examples) body += adversarial_to_json(ex).dump() + "\n";
    return body;
}

}  // namespace tabattack
