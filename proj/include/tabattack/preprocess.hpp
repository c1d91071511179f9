#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tabattack/dataset.hpp"
#include "tabattack/rng.hpp"

namespace tabattack {

namespace detail {

// Ranks with average ties (fractional ranks, 1-based).
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;  // constant column => rho defined as 0
    return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

/// Spearman rank correlation between two columns; ties get average ranks,
/// constant columns correlate 0 with everything.
inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    return detail::pearson(detail::average_ranks(a), detail::average_ranks(b));
}

struct SpearmanFilterResult {
    Dataset reduced;
    std::vector<std::string> dropped;        // in drop order
    std::vector<std::size_t> kept_indices;   // into the input schema, ascending
};

/// Greedy pairwise collinearity filter. While some retained pair has
/// |rho| >= threshold, take the worst such pair and drop the member with the
/// higher mean |rho| against all other retained features (ties keep the
/// earlier column). Idempotent by construction.
inline SpearmanFilterResult spearman_filter(const Dataset& train, double threshold = 0.7) {
    if (train.n_rows() == 0) throw DataError("spearman_filter: empty dataset");
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError("spearman_filter: threshold must be in (0,1]");

    const std::size_t d = train.n_features();
    std::vector<std::vector<double>> cols(d, std::vector<double>(train.n_rows()));
    for (std::size_t i = 0; i < train.n_rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) cols[j][i] = train.at(i, j);

    std::vector<std::vector<double>> rho(d, std::vector<double>(d, 1.0));
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a + 1; b < d; ++b)
            rho[a][b] = rho[b][a] = spearman_rho(cols[a], cols[b]);

    std::vector<bool> kept(d, true);
    std::vector<std::string> dropped;
    for (;;) {
        std::size_t best_a = d, best_b = d;
        double best = -1.0;
        for (std::size_t a = 0; a < d; ++a) {
            if (!kept[a]) continue;
            for (std::size_t b = a + 1; b < d; ++b) {
                if (!kept[b]) continue;
                const double r = std::abs(rho[a][b]);
                if (r >= threshold && r > best) {
                    best = r;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        if (best_a == d) break;

        auto mean_abs = [&](std::size_t f) {
            double s = 0.0;
            std::size_t c = 0;
            for (std::size_t o = 0; o < d; ++o) {
                if (o == f || !kept[o]) continue;
                s += std::abs(rho[f][o]);
                ++c;
            }
            return c ? s / static_cast<double>(c) : 0.0;
        };
        const double ma = mean_abs(best_a);
        const double mb = mean_abs(best_b);
        const std::size_t drop = ma > mb ? best_a : (mb > ma ? best_b : std::max(best_a, best_b));
        kept[drop] = false;
        dropped.push_back(train.schema().names[drop]);
    }

    SpearmanFilterResult res;
    for (std::size_t j = 0; j < d; ++j)
        if (kept[j]) res.kept_indices.push_back(j);
    res.reduced = train.take_features(res.kept_indices);
    res.dropped = std::move(dropped);
    return res;
}

/// SMOTE minority oversampling: each synthetic row is x + u * (nn - x) for a
/// minority row x, one of its k nearest minority neighbors nn (Euclidean,
/// ties broken by row index), and u uniform in [0,1]. Originals are kept;
/// synthetics are appended until the class counts are equal.
inline Dataset smote(const Dataset& train, int k_neighbors, std::uint64_t seed) {
    const std::size_t n1 = train.count_label(1);
    const std::size_t n0 = train.n_rows() - n1;
    if (n0 == 0 || n1 == 0) throw DataError("smote: both classes must be present");
    const int minority = n1 < n0 ? 1 : 0;
    const std::size_t n_min = std::min(n0, n1);
    const std::size_t n_maj = std::max(n0, n1);
    if (n_min < 2) throw DataError("smote: minority class needs at least 2 rows");
    if (k_neighbors < 1) throw ConfigError("smote: k_neighbors must be >= 1");
    if (n_min == n_maj) return train;

    std::vector<std::size_t> min_idx;
    for (std::size_t i = 0; i < train.n_rows(); ++i)
        if (train.label(i) == minority) min_idx.push_back(i);

    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_neighbors), n_min - 1);
    const std::size_t d = train.n_features();

    // k nearest minority neighbors per minority row
    std::vector<std::vector<std::size_t>> neighbors(n_min);
    for (std::size_t a = 0; a < n_min; ++a) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(n_min - 1);
        const auto ra = train.row(min_idx[a]);
        for (std::size_t b = 0; b < n_min; ++b) {
            if (b == a) continue;
            const auto rb = train.row(min_idx[b]);
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double dv = ra[j] - rb[j];
                s += dv * dv;
            }
            dist.emplace_back(s, b);
        }
        std::sort(dist.begin(), dist.end());
        neighbors[a].reserve(k);
        for (std::size_t t = 0; t < k; ++t) neighbors[a].push_back(dist[t].second);
    }

    Rng rng(seed);
    Dataset out = train;
    std::vector<double> synth(d);
    const std::size_t needed = n_maj - n_min;
    for (std::size_t t = 0; t < needed; ++t) {
        const std::size_t a = t % n_min;  // round-robin over minority rows
        const std::size_t b = neighbors[a][rng.uniform_int(k)];
        const double u = rng.uniform_closed();
        const auto xa = train.row(min_idx[a]);
        const auto xb = train.row(min_idx[b]);
        for (std::size_t j = 0; j < d; ++j) synth[j] = xa[j] + u * (xb[j] - xa[j]);
        out.append_row(synth, minority);
    }
    return out;
}

/// Seeded downsampling of the majority class to the minority count; minority
/// rows and overall row order are untouched.
inline Dataset undersample_test(const Dataset& test, std::uint64_t seed) {
    const std::size_t n1 = test.count_label(1);
    const std::size_t n0 = test.n_rows() - n1;
    if (n0 == 0 || n1 == 0) throw DataError("undersample_test: both classes must be present");
    if (n0 == n1) return test;
    const int majority = n1 > n0 ? 1 : 0;
    const std::size_t n_min = std::min(n0, n1);

    std::vector<std::size_t> maj_idx;
    for (std::size_t i = 0; i < test.n_rows(); ++i)
        if (test.label(i) == majority) maj_idx.push_back(i);

    Rng rng(seed);
    const auto pick = rng.sample_without_replacement(maj_idx.size(), n_min);
    std::vector<bool> keep_maj(maj_idx.size(), false);
    for (std::size_t p : pick) keep_maj[p] = true;

    std::vector<std::size_t> keep;
    std::size_t m = 0;
    for (std::size_t i = 0; i < test.n_rows(); ++i) {
        if (test.label(i) == majority) {
            if (keep_maj[m]) keep.push_back(i);
            ++m;
        } else {
            keep.push_back(i);
        }
    }
    return test.take_rows(keep);
}

}  // namespace tabattack
