#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tabattack/common.hpp"
#include "tabattack/dataset.hpp"
#include "tabattack/rng.hpp"

namespace tabattack {

struct SyntheticSpec {
    std::size_t n_samples = 2000;
    std::size_t n_features = 8;
    double positive_ratio = 0.3;
    std::size_t informative = 4;
    double noise = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_samples < 4) throw ConfigError("synthetic: n_samples must be >= 4");
        if (n_features < 1) throw ConfigError("synthetic: n_features must be >= 1");
        if (informative < 1 || informative > n_features)
            throw ConfigError("synthetic: informative must be in [1, n_features]");
        if (!(positive_ratio > 0.0 && positive_ratio < 1.0))
            throw ConfigError("synthetic: positive_ratio must be in (0,1)");
        if (noise < 0.0) throw ConfigError("synthetic: noise must be >= 0");
    }
};

/// Seeded linear-plus-threshold generator: Gaussian features, a random signed
/// weight vector over the informative features, additive Gaussian noise on the
/// score, and the label cut placed at the empirical quantile that realizes the
/// requested class ratio. Every feature is shifted to be non-negative.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0x57));

    const std::size_t n = spec.n_samples;
    const std::size_t d = spec.n_features;
    std::vector<double> weights(spec.informative);
    for (std::size_t j = 0; j < weights.size(); ++j) {
        const double magnitude = 0.5 + rng.uniform();          // in [0.5, 1.5)
        weights[j] = (j % 2 == 0 ? 1.0 : -1.0) * magnitude;    // alternating signs
    }

    std::vector<double> raw(n * d);
    for (double& v : raw) v = rng.normal();

    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < spec.informative; ++j) s += weights[j] * raw[i * d + j];
        score[i] = s + spec.noise * rng.normal();
    }

    const std::size_t n_pos = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.positive_ratio)), 1,
        n - 1);
    std::vector<double> sorted_scores = score;
    std::sort(sorted_scores.begin(), sorted_scores.end());
    const double cut = sorted_scores[n - n_pos];

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = score[i] >= cut ? 1 : 0;

    // shift each feature so its minimum is 0 (counts/magnitudes stay valid)
    for (std::size_t j = 0; j < d; ++j) {
        double lo = raw[j];
        for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, raw[i * d + j]);
        for (std::size_t i = 0; i < n; ++i) raw[i * d + j] -= lo;
    }

    FeatureSchema schema;
    for (std::size_t j = 0; j < d; ++j) schema.names.push_back("f" + std::to_string(j));
    schema.non_negative.assign(d, true);
    schema.label_name = "label";
    return Dataset(std::move(schema), std::move(raw), std::move(labels));
}

}  // namespace tabattack
