#pragma once

#include "recon/grid.hpp"

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace recon {

// ---------------------------------------------------------------------------
// Histogram and Otsu

inline constexpr int kHistogramBins = 256;

/// 256 uniform bins over the observed [min, max]. Bins are left-open,
/// (e_k, e_k+1], except the first which is closed, so a voxel falls in a bin
/// at or above cut c exactly when its intensity is > e_c.
struct Histogram {
    std::array<double, kHistogramBins + 1> bin_edges{};
    std::array<std::uint64_t, kHistogramBins> counts{};
    double min = 0.0;
    double max = 0.0;
    bool degenerate = false;  // constant input: all mass in one bin

    std::uint64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }
    double bin_center(int b) const { return 0.5 * (bin_edges[b] + bin_edges[b + 1]); }

    /// Bin holding intensity v (v must lie in [min, max]).
    int bin_of(double v) const {
        const double w = (bin_edges[kHistogramBins] - bin_edges[0]) / kHistogramBins;
        auto b = static_cast<int>(std::ceil((v - bin_edges[0]) / w)) - 1;
        b = std::clamp(b, 0, kHistogramBins - 1);
        while (b > 0 && v <= bin_edges[b]) --b;
        while (b < kHistogramBins - 1 && v > bin_edges[b + 1]) ++b;
        return b;
    }
};

inline Histogram histogram_of(std::span<const double> values) {
    if (values.empty()) throw Error("histogram of an empty volume");
    Histogram h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    h.min = *mn;
    h.max = *mx;
    h.degenerate = (h.min == h.max);
    const double span = h.degenerate ? 1.0 : h.max - h.min;
    for (int e = 0; e <= kHistogramBins; ++e) h.bin_edges[e] = h.min + span * e / kHistogramBins;
    h.bin_edges[kHistogramBins] = h.min + span;
    for (double v : values) ++h.counts[h.bin_of(v)];
    return h;
}

inline Histogram histogram(const ScalarVolume& volume) {
    std::vector<double> v(volume.values().begin(), volume.values().end());
    return histogram_of(v);
}

/// Between-class variance w0 * w1 * (mu0 - mu1)^2 for the cut placing bins
/// [0, cut) in class 0, using bin centers as representative intensities.
inline double otsu_between_class_variance(const Histogram& h, int cut) {
    double n0 = 0, s0 = 0, n1 = 0, s1 = 0;
    for (int b = 0; b < kHistogramBins; ++b) {
        const double c = static_cast<double>(h.counts[b]);
        if (b < cut) {
            n0 += c;
            s0 += c * h.bin_center(b);
        } else {
            n1 += c;
            s1 += c * h.bin_center(b);
        }
    }
    if (n0 == 0 || n1 == 0) return 0.0;
    const double n = n0 + n1;
    const double d = s0 / n0 - s1 / n1;
    return (n0 / n) * (n1 / n) * d * d;
}

namespace detail {

/// Unsigned 256-bit integer, just enough for exact Otsu comparisons.
struct U256 {
    std::array<std::uint64_t, 4> limb{};  // little-endian

    static U256 from(unsigned __int128 v) {
        U256 r;
        r.limb[0] = static_cast<std::uint64_t>(v);
        r.limb[1] = static_cast<std::uint64_t>(v >> 64);
        return r;
    }

    U256 times(std::uint64_t m) const {
        U256 r;
        unsigned __int128 carry = 0;
        for (int i = 0; i < 4; ++i) {
            const unsigned __int128 t = static_cast<unsigned __int128>(limb[i]) * m + carry;
            r.limb[i] = static_cast<std::uint64_t>(t);
            carry = t >> 64;
        }
        return r;
    }

    U256 shifted64() const { return U256{{0, limb[0], limb[1], limb[2]}}; }

    friend U256 operator+(const U256& a, const U256& b) {
        U256 r;
        unsigned __int128 carry = 0;
        for (int i = 0; i < 4; ++i) {
            const unsigned __int128 t = static_cast<unsigned __int128>(a.limb[i]) + b.limb[i] + carry;
            r.limb[i] = static_cast<std::uint64_t>(t);
            carry = t >> 64;
        }
        return r;
    }

    friend std::strong_ordering operator<=>(const U256& a, const U256& b) {
        for (int i = 3; i >= 0; --i) {
            if (a.limb[i] != b.limb[i]) return a.limb[i] <=> b.limb[i];
        }
        return std::strong_ordering::equal;
    }
    friend bool operator==(const U256&, const U256&) = default;
};

inline U256 mul128(unsigned __int128 a, unsigned __int128 b) {
    const U256 ua = U256::from(a);
    return ua.times(static_cast<std::uint64_t>(b)) + ua.times(static_cast<std::uint64_t>(b >> 64)).shifted64();
}

}  // namespace detail

/// Otsu's threshold: the bin edge e_c (c = 1..255) maximizing between-class
/// variance; ties resolve to the lowest edge. Foreground is intensity > result.
///
/// Bin centers are affine in the bin index, so the argmax is computed on bin
/// indices in exact integer arithmetic: maximize X^2 / (n0 n1) with
/// X = n1 S0 - n0 S1 (S = index-weighted counts). Requires fewer than 2^32 voxels.
inline double otsu_threshold(const Histogram& h) {
    if (h.degenerate) throw Error("Otsu threshold is undefined for a degenerate (constant) histogram");
    int occupied = 0;
    for (auto c : h.counts) occupied += c > 0;
    if (occupied < 2) throw Error("Otsu threshold needs mass in at least two bins");
    using u128 = unsigned __int128;
    std::uint64_t n = 0;
    u128 s = 0;
    for (int b = 0; b < kHistogramBins; ++b) {
        n += h.counts[b];
        s += static_cast<u128>(h.counts[b]) * static_cast<u128>(b);
    }
    if (n >= (std::uint64_t{1} << 32)) throw Error("Otsu threshold supports fewer than 2^32 voxels");
    std::uint64_t n0 = 0;
    u128 s0 = 0;
    bool have = false;
    u128 best_x = 0, best_den = 1;
    int best_cut = 1;
    for (int cut = 1; cut < kHistogramBins; ++cut) {
        n0 += h.counts[cut - 1];
        s0 += static_cast<u128>(h.counts[cut - 1]) * static_cast<u128>(cut - 1);
        const std::uint64_t n1 = n - n0;
        if (n0 == 0 || n1 == 0) continue;
        // mean1 >= mean0 always, so X = n0 S1 - n1 S0 >= 0.
        const u128 x = static_cast<u128>(n0) * (s - s0) - static_cast<u128>(n1) * s0;
        const u128 den = static_cast<u128>(n0) * n1;
        // x^2 / den > best_x^2 / best_den  <=>  x^2 * best_den > best_x^2 * den
        if (!have || detail::mul128(x, x).times(static_cast<std::uint64_t>(best_den)) >
                         detail::mul128(best_x, best_x).times(static_cast<std::uint64_t>(den))) {
            have = true;
            best_x = x;
            best_den = den;
            best_cut = cut;
        }
    }
    return h.bin_edges[best_cut];
}

// ---------------------------------------------------------------------------
// Gaussian mixture (1-D, EM)

struct GmmConfig {
    int n_components = 2;
    int max_iters = 200;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    std::size_t max_samples = 1'000'000;  // voxels beyond this are subsampled with `seed`
};

struct GmmModel {
    int n_components = 0;
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> variances;
    std::vector<double> log_likelihood_trace;  // mean per-sample log-likelihood, one per E-step
    double variance_floor = 0.0;
    bool degenerate = false;
    bool converged = false;
    bool extreme_init = false;  // quantile seeds coincided; seeded from min..max instead
};

namespace detail {

inline double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * kPi * var) + d * d / var);
}

}  // namespace detail

/// EM on a 1-D Gaussian mixture. Component i starts at the (i + 0.5)/N sample
/// quantile (or the i/(N-1) quantile if those coincide) with the global variance
/// and uniform weights. Iteration stops when the
/// mean log-likelihood improves by less than `tol`, or after `max_iters`.
inline GmmModel fit_gmm(std::span<const double> samples, const GmmConfig& cfg) {
    const int k = cfg.n_components;
    if (k < 2) throw Error("GMM needs at least 2 components");
    if (samples.size() < static_cast<std::size_t>(10 * k)) {
        throw Error("GMM with " + std::to_string(k) + " components needs at least " + std::to_string(10 * k) +
                    " samples, got " + std::to_string(samples.size()));
    }
    const auto n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double var = 0.0;
    for (double x : samples) var += (x - mean) * (x - mean);
    var /= n;

    GmmModel m;
    m.n_components = k;
    m.weights.assign(k, 1.0 / k);
    m.variance_floor = 1e-6 * var;
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < k; ++i) {
        const auto q = static_cast<std::size_t>(std::floor((i + 0.5) / k * n));
        m.means.push_back(sorted[std::min(q, sorted.size() - 1)]);
    }
    // A small class can leave every quantile seed on the dominant plateau, and
    // identical components never separate under EM. Spread the seeds from min to max.
    if (std::adjacent_find(m.means.begin(), m.means.end()) != m.means.end()) {
        m.extreme_init = true;
        for (int i = 0; i < k; ++i) {
            const auto q = static_cast<std::size_t>(std::floor(static_cast<double>(i) / (k - 1) * (n - 1)));
            m.means[i] = sorted[q];
        }
    }
    if (var == 0.0) {
        m.degenerate = true;
        m.variances.assign(k, std::numeric_limits<double>::min());
        return m;
    }
    m.variances.assign(k, var);

    std::vector<double> resp(samples.size() * static_cast<std::size_t>(k));
    std::vector<double> logp(k);
    for (int it = 0; it < cfg.max_iters; ++it) {
        // E-step
        double ll = 0.0;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            double top = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                logp[c] = std::log(m.weights[c]) + detail::log_normal_pdf(samples[s], m.means[c], m.variances[c]);
                top = std::max(top, logp[c]);
            }
            double sum = 0.0;
            for (int c = 0; c < k; ++c) sum += std::exp(logp[c] - top);
            const double lse = top + std::log(sum);
            ll += lse;
            for (int c = 0; c < k; ++c) resp[s * k + c] = std::exp(logp[c] - lse);
        }
        ll /= n;
        m.log_likelihood_trace.push_back(ll);
        if (it > 0 && ll - m.log_likelihood_trace[it - 1] < cfg.tol) {
            m.converged = true;
            break;
        }
        // M-step
        for (int c = 0; c < k; ++c) {
            double nk = 0.0, sx = 0.0;
            for (std::size_t s = 0; s < samples.size(); ++s) {
                nk += resp[s * k + c];
                sx += resp[s * k + c] * samples[s];
            }
            if (nk <= 0.0) continue;  // empty component keeps its parameters
            const double mu = sx / nk;
            double sv = 0.0;
            for (std::size_t s = 0; s < samples.size(); ++s) {
                const double d = samples[s] - mu;
                sv += resp[s * k + c] * d * d;
            }
            m.weights[c] = nk / n;
            m.means[c] = mu;
            m.variances[c] = std::max(sv / nk, m.variance_floor);
        }
        const double wsum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
        for (auto& w : m.weights) w /= wsum;
    }
    return m;
}

/// Voxel intensities as EM samples, uniformly subsampled without replacement
/// when the volume exceeds `cfg.max_samples`.
inline std::vector<double> gmm_samples(const ScalarVolume& volume, const GmmConfig& cfg) {
    std::vector<double> all(volume.values().begin(), volume.values().end());
    if (cfg.max_samples == 0 || all.size() <= cfg.max_samples) return all;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg.max_samples; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(cfg.max_samples);
    std::sort(idx.begin(), idx.end());
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

/// Equal weighted-density boundary between the two components, the root of the
/// quadratic w0 N(x; m0, v0) = w1 N(x; m1, v1) strictly between the means. Falls
/// back to the midpoint of the means when no such root exists.
inline double gmm_threshold(const GmmModel& model) {
    if (model.n_components != 2) {
        throw Error("GMM threshold requires exactly 2 components, model has " + std::to_string(model.n_components));
    }
    int lo = model.means[0] <= model.means[1] ? 0 : 1;
    int hi = 1 - lo;
    const double m0 = model.means[lo], m1 = model.means[hi];
    if (m0 == m1) throw Error("GMM threshold is undefined for components with equal means");
    const double v0 = model.variances[lo], v1 = model.variances[hi];
    const double w0 = model.weights[lo], w1 = model.weights[hi];
    const double a = 0.5 / v1 - 0.5 / v0;
    const double b = m0 / v0 - m1 / v1;
    const double c = -0.5 * m0 * m0 / v0 + 0.5 * m1 * m1 / v1 + std::log(w0 / w1) - 0.5 * std::log(v0 / v1);
    const double mid = 0.5 * (m0 + m1);
    std::vector<double> roots;
    if (std::abs(a) <= 1e-12 * (0.5 / v0 + 0.5 / v1)) {
        if (b != 0.0) roots.push_back(-c / b);
    } else {
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
            const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
            if (q != 0.0) {
                roots.push_back(q / a);
                roots.push_back(c / q);
            } else {
                roots.push_back(-b / (2.0 * a));
            }
        }
    }
    std::optional<double> best;
    for (double r : roots) {
        if (!(r > m0 && r < m1)) continue;
        if (!best || std::abs(r - mid) < std::abs(*best - mid)) best = r;
    }
    return best.value_or(mid);
}

// ---------------------------------------------------------------------------
// Thresholding and region growing

/// Foreground iff lower < I <= upper.
inline BinaryMask threshold_segment(const ScalarVolume& volume, double lower,
                                    double upper = std::numeric_limits<double>::infinity()) {
    if (lower > upper) throw Error("threshold lower bound exceeds upper bound");
    BinaryMask mask(volume.geometry(), 0);
    for (std::size_t i = 0; i < volume.size(); ++i) {
        const double v = volume[i];
        mask[i] = (v > lower && v <= upper) ? 1 : 0;
    }
    return mask;
}

enum class Connectivity { six = 6, twenty_six = 26 };

struct RegionGrowConfig {
    std::vector<Index3> seeds;
    double tolerance = 0.0;
    Connectivity connectivity = Connectivity::six;
};

inline std::vector<Index3> neighbor_offsets(Connectivity c) {
    std::vector<Index3> out;
    for (std::int64_t dk = -1; dk <= 1; ++dk) {
        for (std::int64_t dj = -1; dj <= 1; ++dj) {
            for (std::int64_t di = -1; di <= 1; ++di) {
                const auto manhattan = std::abs(di) + std::abs(dj) + std::abs(dk);
                if (manhattan == 0) continue;
                if (c == Connectivity::six && manhattan != 1) continue;
                out.push_back({di, dj, dk});
            }
        }
    }
    return out;
}

/// Breadth-first growth from all seeds. A voxel is admitted iff
/// |I - mean(seed intensities)| <= tolerance; the seed mean is fixed up front.
inline BinaryMask region_grow(const ScalarVolume& volume, const RegionGrowConfig& cfg,
                              std::vector<std::string>* warnings = nullptr) {
    if (cfg.seeds.empty()) throw Error("region growing needs at least one seed");
    if (!(cfg.tolerance >= 0.0)) throw Error("region growing tolerance must be >= 0");
    const auto& g = volume.geometry();
    double mu = 0.0;
    for (const auto& s : cfg.seeds) {
        if (!g.contains(s)) {
            throw Error("seed (" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) +
                        ") is outside the volume");
        }
        mu += volume.at(s);
    }
    mu /= static_cast<double>(cfg.seeds.size());
    auto admits = [&](std::size_t i) { return std::abs(static_cast<double>(volume[i]) - mu) <= cfg.tolerance; };

    BinaryMask mask(g, 0);
    std::deque<std::size_t> queue;
    for (const auto& s : cfg.seeds) {
        const auto i = g.encode(s);
        if (!admits(i)) {
            if (warnings) {
                warnings->push_back("seed (" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
                                    std::to_string(s[2]) + ") fails the homogeneity criterion and was ignored");
            }
            continue;
        }
        if (!mask[i]) {
            mask[i] = 1;
            queue.push_back(i);
        }
    }
    const auto offsets = neighbor_offsets(cfg.connectivity);
    while (!queue.empty()) {
        const auto cur = queue.front();
        queue.pop_front();
        const Index3 c = g.decode(cur);
        for (const auto& o : offsets) {
            const Index3 nb{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
            if (!g.contains(nb)) continue;
            const auto ni = g.encode(nb);
            if (mask[ni] || !admits(ni)) continue;
            mask[ni] = 1;
            queue.push_back(ni);
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Method dispatch

enum class SegmentationMethod { otsu, gmm, region_growing };

inline std::string to_string(SegmentationMethod m) {
    switch (m) {
        case SegmentationMethod::otsu: return "otsu";
        case SegmentationMethod::gmm: return "gmm";
        case SegmentationMethod::region_growing: return "region_growing";
    }
    return "?";
}

inline SegmentationMethod parse_segmentation_method(const std::string& s) {
    if (s == "otsu") return SegmentationMethod::otsu;
    if (s == "gmm") return SegmentationMethod::gmm;
    if (s == "region_growing" || s == "rg") return SegmentationMethod::region_growing;
    throw Error("unknown segmentation method '" + s + "'");
}

struct SegmentationConfig {
    SegmentationMethod method = SegmentationMethod::otsu;
    GmmConfig gmm;
    RegionGrowConfig rg;
};

struct SegmentationResult {
    BinaryMask mask;
    std::optional<double> threshold;  // otsu / gmm
    std::optional<GmmModel> model;    // gmm
    std::vector<std::string> warnings;
};

inline SegmentationResult segment(const ScalarVolume& volume, const SegmentationConfig& cfg) {
    SegmentationResult r;
    switch (cfg.method) {
        case SegmentationMethod::otsu: {
            r.threshold = otsu_threshold(histogram(volume));
            r.mask = threshold_segment(volume, *r.threshold);
            break;
        }
        case SegmentationMethod::gmm: {
            const auto samples = gmm_samples(volume, cfg.gmm);
            r.model = fit_gmm(samples, cfg.gmm);
            if (r.model->degenerate) throw Error("GMM fit is degenerate (constant intensities)");
            if (r.model->extreme_init) r.warnings.push_back("GMM quantile seeds coincided; components seeded at the intensity extremes");
            r.threshold = gmm_threshold(*r.model);
            r.mask = threshold_segment(volume, *r.threshold);
            break;
        }
        case SegmentationMethod::region_growing: {
            r.mask = region_grow(volume, cfg.rg, &r.warnings);
            break;
        }
    }
    return r;
}

}  // namespace recon
