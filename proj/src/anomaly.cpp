#include "qrt/anomaly.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace qrt {

namespace {

constexpr double kEulerGamma = 0.5772156649015329;

// Average unsuccessful-search path length of a BST over n points.
double c_factor(double n) {
    if (n <= 1.0) return 0.0;
    if (n == 2.0) return 1.0;
    return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

struct TreeBuilder {
    const std::vector<FeatureVector>& data;
    RngStream& rng;
    int depth_limit;
    std::vector<ForestNode> nodes;

    int32_t build(std::vector<uint32_t>& idx, int lo, int hi, int depth) {
        const int n = hi - lo;
        const int32_t self = int32_t(nodes.size());
        nodes.push_back({});
        if (n <= 1 || depth >= depth_limit) {
            nodes[self].size = uint32_t(n);
            return self;
        }
        double mins[kFeatureDim], maxs[kFeatureDim];
        for (size_t f = 0; f < kFeatureDim; ++f) {
            mins[f] = maxs[f] = data[idx[lo]][f];
        }
        for (int i = lo + 1; i < hi; ++i)
            for (size_t f = 0; f < kFeatureDim; ++f) {
                mins[f] = std::min(mins[f], data[idx[i]][f]);
                maxs[f] = std::max(maxs[f], data[idx[i]][f]);
            }
        size_t eligible[kFeatureDim];
        size_t n_eligible = 0;
        for (size_t f = 0; f < kFeatureDim; ++f)
            if (maxs[f] > mins[f]) eligible[n_eligible++] = f;
        if (n_eligible == 0) { // all points identical
            nodes[self].size = uint32_t(n);
            return self;
        }
        const size_t f = eligible[rng.below(n_eligible)];
        const double thr = mins[f] + rng.uniform01() * (maxs[f] - mins[f]);
        auto it = std::partition(idx.begin() + lo, idx.begin() + hi,
                                 [&](uint32_t i) { return data[i][f] < thr; });
        const int mid = int(it - idx.begin());
        if (mid == lo || mid == hi) { // degenerate float split
            nodes[self].size = uint32_t(n);
            return self;
        }
        nodes[self].feature = int16_t(f);
        nodes[self].threshold = thr;
        const int32_t l = build(idx, lo, mid, depth + 1);
        const int32_t r = build(idx, mid, hi, depth + 1);
        nodes[self].left = l;
        nodes[self].right = r;
        return self;
    }
};

double tree_path_length(const std::vector<ForestNode>& nodes, const FeatureVector& v) {
    int32_t cur = 0;
    double depth = 0.0;
    while (nodes[cur].feature >= 0) {
        cur = v[size_t(nodes[cur].feature)] < nodes[cur].threshold ? nodes[cur].left
                                                                   : nodes[cur].right;
        depth += 1.0;
    }
    return depth + c_factor(double(nodes[cur].size));
}

// Cyclic Jacobi diagonalization of a symmetric matrix; eigenvectors end up
// in the columns of v.
void jacobi_eigen(std::array<std::array<double, kFeatureDim>, kFeatureDim>& a,
                  std::array<double, kFeatureDim>& eig,
                  std::array<std::array<double, kFeatureDim>, kFeatureDim>& v) {
    for (size_t i = 0; i < kFeatureDim; ++i) {
        v[i].fill(0.0);
        v[i][i] = 1.0;
    }
    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < kFeatureDim; ++p)
            for (size_t q = p + 1; q < kFeatureDim; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (size_t p = 0; p < kFeatureDim; ++p) {
            for (size_t q = p + 1; q < kFeatureDim; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (size_t k = 0; k < kFeatureDim; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (size_t k = 0; k < kFeatureDim; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (size_t k = 0; k < kFeatureDim; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for (size_t i = 0; i < kFeatureDim; ++i) eig[i] = a[i][i];
}

std::array<double, kFeatureDim> standardize(const PcaModel& m, const FeatureVector& v) {
    std::array<double, kFeatureDim> x;
    for (size_t i = 0; i < kFeatureDim; ++i) x[i] = (v[i] - m.mean[i]) / m.scale[i];
    return x;
}

double pca_error(const PcaModel& m, const FeatureVector& v) {
    const auto x = standardize(m, v);
    std::array<double, kFeatureDim> rec{};
    for (const auto& comp : m.components) {
        double dot = 0.0;
        for (size_t i = 0; i < kFeatureDim; ++i) dot += comp[i] * x[i];
        for (size_t i = 0; i < kFeatureDim; ++i) rec[i] += dot * comp[i];
    }
    double err = 0.0;
    for (size_t i = 0; i < kFeatureDim; ++i) err += (x[i] - rec[i]) * (x[i] - rec[i]);
    return std::sqrt(err);
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) {
    const uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(bits >> (8 * i)));
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;
    uint8_t u8() {
        if (pos + 1 > b.size()) throw std::invalid_argument("detector blob: truncated");
        return b[pos++];
    }
    uint32_t u32() {
        if (pos + 4 > b.size()) throw std::invalid_argument("detector blob: truncated");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        if (pos + 8 > b.size()) throw std::invalid_argument("detector blob: truncated");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(b[pos + i]) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
};

} // namespace

const std::array<std::string, kFeatureDim>& feature_names() {
    static const std::array<std::string, kFeatureDim> names = {
        "qber",       "sift_ratio", "gain_signal",     "gain_decoy",
        "gain_vacuum", "basis_click_asymmetry", "dark_rate", "timing_variance"};
    return names;
}

FeatureVector telemetry_features(const Telemetry& t) {
    return {t.qber_estimate.value_or(0.0),
            t.sift_ratio,
            t.gain_signal,
            t.gain_decoy,
            t.gain_vacuum,
            t.click_rate_rect - t.click_rate_diag,
            t.dark_rate_estimate,
            t.timing_variance};
}

DetectorModel fit(const std::vector<FeatureVector>& benign, DetectorKind kind,
                  const FitParams& params, RngStream& rng) {
    if (benign.size() < 64)
        throw std::invalid_argument("fit: insufficient baseline, need >= 64 vectors");
    DetectorModel model;
    if (kind == DetectorKind::Forest) {
        ForestModel fm;
        fm.n_trees = params.n_trees;
        fm.subsample = uint32_t(std::min<size_t>(params.subsample, benign.size()));
        const int depth_limit = int(std::ceil(std::log2(double(fm.subsample))));
        std::vector<uint32_t> pool(benign.size());
        std::iota(pool.begin(), pool.end(), 0u);
        for (uint32_t t = 0; t < fm.n_trees; ++t) {
            for (uint32_t i = 0; i < fm.subsample; ++i) { // partial Fisher-Yates
                const size_t j = i + size_t(rng.below(pool.size() - i));
                std::swap(pool[i], pool[j]);
            }
            std::vector<uint32_t> idx(pool.begin(), pool.begin() + fm.subsample);
            TreeBuilder tb{benign, rng, depth_limit, {}};
            tb.nodes.reserve(2 * fm.subsample);
            tb.build(idx, 0, int(idx.size()), 0);
            fm.trees.push_back(std::move(tb.nodes));
        }
        model.kind = std::move(fm);
        return model;
    }

    PcaModel pm;
    const double n = double(benign.size());
    for (const auto& v : benign)
        for (size_t i = 0; i < kFeatureDim; ++i) pm.mean[i] += v[i];
    for (size_t i = 0; i < kFeatureDim; ++i) pm.mean[i] /= n;
    std::array<double, kFeatureDim> var{};
    for (const auto& v : benign)
        for (size_t i = 0; i < kFeatureDim; ++i)
            var[i] += (v[i] - pm.mean[i]) * (v[i] - pm.mean[i]);
    for (size_t i = 0; i < kFeatureDim; ++i) {
        var[i] /= n;
        pm.scale[i] = var[i] > 0.0 ? std::sqrt(var[i]) : 1.0;
    }

    std::array<std::array<double, kFeatureDim>, kFeatureDim> cov{};
    for (const auto& v : benign) {
        const auto x = standardize(pm, v);
        for (size_t i = 0; i < kFeatureDim; ++i)
            for (size_t j = 0; j < kFeatureDim; ++j) cov[i][j] += x[i] * x[j];
    }
    for (auto& row : cov)
        for (double& c : row) c /= n;

    std::array<double, kFeatureDim> eig{};
    std::array<std::array<double, kFeatureDim>, kFeatureDim> vec{};
    jacobi_eigen(cov, eig, vec);
    std::array<size_t, kFeatureDim> order;
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return eig[a] > eig[b]; });

    const double total = std::accumulate(eig.begin(), eig.end(), 0.0,
                                         [](double s, double e) { return s + std::max(e, 0.0); });
    double kept = 0.0;
    for (size_t r = 0; r < kFeatureDim; ++r) {
        std::array<double, kFeatureDim> comp;
        for (size_t i = 0; i < kFeatureDim; ++i) comp[i] = vec[i][order[r]];
        pm.components.push_back(comp);
        kept += std::max(eig[order[r]], 0.0);
        if (total <= 0.0 || kept / total >= params.variance_target) break;
    }

    double err_mean = 0.0, err_sq = 0.0;
    for (const auto& v : benign) {
        const double e = pca_error(pm, v);
        err_mean += e;
        err_sq += e * e;
    }
    err_mean /= n;
    const double err_var = std::max(0.0, err_sq / n - err_mean * err_mean);
    // When the kept components span the whole cloud the training residuals are
    // pure rounding noise; the floor keeps those from being amplified into a
    // fake signal while staying far below any real standardized displacement.
    pm.threshold = std::max(1e-7, err_mean + params.threshold_sigmas * std::sqrt(err_var));
    model.kind = std::move(pm);
    return model;
}

double detector_score(const DetectorModel& model, const FeatureVector& v) {
    if (model.is_forest()) {
        const ForestModel& fm = std::get<ForestModel>(model.kind);
        if (fm.trees.empty()) throw std::invalid_argument("score: model not fitted");
        double sum = 0.0;
        for (const auto& t : fm.trees) sum += tree_path_length(t, v);
        const double avg = sum / double(fm.trees.size());
        return std::pow(2.0, -avg / c_factor(double(fm.subsample)));
    }
    const PcaModel& pm = std::get<PcaModel>(model.kind);
    if (pm.components.empty()) throw std::invalid_argument("score: model not fitted");
    const double err = pca_error(pm, v);
    return err / (err + pm.threshold);
}

Detection detect(const DetectorModel& model, const FeatureVector& v, double alert_threshold) {
    if (!(alert_threshold > 0.0 && alert_threshold <= 1.0))
        throw std::invalid_argument("detect: alert_threshold must be in (0, 1]");
    Detection d;
    d.score = detector_score(model, v);
    d.anomalous = d.score >= alert_threshold;
    return d;
}

double calibrate_alert_threshold(const DetectorModel& model,
                                 const std::vector<FeatureVector>& heldout_benign) {
    if (heldout_benign.empty())
        throw std::invalid_argument("calibrate: held-out set must be non-empty");
    std::vector<double> scores;
    scores.reserve(heldout_benign.size());
    for (const auto& v : heldout_benign) scores.push_back(detector_score(model, v));
    std::sort(scores.begin(), scores.end());
    const size_t idx = std::min(scores.size() - 1, size_t(0.95 * double(scores.size())));
    return scores[idx];
}

EvadeResult evade(const DetectorModel& model, const FeatureVector& attack,
                  const std::array<double, kFeatureDim>& budget, int sweeps) {
    EvadeResult best{attack, detector_score(model, attack)};
    std::array<double, kFeatureDim> radius;
    for (size_t i = 0; i < kFeatureDim; ++i)
        radius[i] = budget[i] >= 0.0 ? budget[i] : std::max(2.0, 2.0 * std::abs(attack[i]));
    for (int s = 0; s < sweeps; ++s) {
        for (size_t f = 0; f < kFeatureDim; ++f) {
            if (radius[f] == 0.0) continue;
            FeatureVector cand = best.vector;
            double cand_best = best.score;
            double val_best = best.vector[f];
            for (int g = -8; g <= 8; ++g) {
                if (g == 0) continue;
                double val = best.vector[f] + radius[f] * double(g) / 8.0;
                if (budget[f] >= 0.0)
                    val = std::clamp(val, attack[f] - budget[f], attack[f] + budget[f]);
                cand[f] = val;
                const double sc = detector_score(model, cand);
                if (sc < cand_best) {
                    cand_best = sc;
                    val_best = val;
                }
            }
            best.vector[f] = val_best;
            best.score = cand_best;
        }
        for (double& r : radius) r *= 0.5;
    }
    if (!model.is_forest()) {
        // coordinate moves zigzag on an ill-conditioned residual ellipsoid;
        // alternate subspace projection with a budget clamp instead
        const PcaModel& pm = std::get<PcaModel>(model.kind);
        FeatureVector x = attack;
        for (int it = 0; it < 50; ++it) {
            const auto z = standardize(pm, x);
            std::array<double, kFeatureDim> rec{};
            for (const auto& comp : pm.components) {
                double dot = 0.0;
                for (size_t i = 0; i < kFeatureDim; ++i) dot += comp[i] * z[i];
                for (size_t i = 0; i < kFeatureDim; ++i) rec[i] += dot * comp[i];
            }
            for (size_t i = 0; i < kFeatureDim; ++i) {
                x[i] = pm.mean[i] + pm.scale[i] * rec[i];
                if (budget[i] >= 0.0)
                    x[i] = std::clamp(x[i], attack[i] - budget[i], attack[i] + budget[i]);
            }
            const double sc = detector_score(model, x);
            if (sc < best.score) {
                best.vector = x;
                best.score = sc;
            }
        }
    }
    return best;
}

EvadeResult evade(const DetectorModel& model, const FeatureVector& attack, double budget,
                  int sweeps) {
    std::array<double, kFeatureDim> b;
    b.fill(budget);
    return evade(model, attack, b, sweeps);
}

std::vector<uint8_t> serialize_model(const DetectorModel& model) {
    std::vector<uint8_t> out = {'Q', 'R', 'T', 'D', 1};
    if (model.is_forest()) {
        const ForestModel& fm = std::get<ForestModel>(model.kind);
        out.push_back(uint8_t(DetectorKind::Forest));
        put_u32(out, fm.n_trees);
        put_u32(out, fm.subsample);
        put_u32(out, uint32_t(fm.trees.size()));
        for (const auto& t : fm.trees) {
            put_u32(out, uint32_t(t.size()));
            for (const ForestNode& nd : t) {
                out.push_back(uint8_t(uint16_t(nd.feature) & 0xff));
                out.push_back(uint8_t(uint16_t(nd.feature) >> 8));
                put_f64(out, nd.threshold);
                put_u32(out, uint32_t(nd.left));
                put_u32(out, uint32_t(nd.right));
                put_u32(out, nd.size);
            }
        }
        return out;
    }
    const PcaModel& pm = std::get<PcaModel>(model.kind);
    out.push_back(uint8_t(DetectorKind::Pca));
    for (double m : pm.mean) put_f64(out, m);
    for (double s : pm.scale) put_f64(out, s);
    put_u32(out, uint32_t(pm.components.size()));
    for (const auto& comp : pm.components)
        for (double c : comp) put_f64(out, c);
    put_f64(out, pm.threshold);
    return out;
}

DetectorModel deserialize_model(const std::vector<uint8_t>& blob) {
    Reader rd{blob};
    if (blob.size() < 6 || blob[0] != 'Q' || blob[1] != 'R' || blob[2] != 'T' || blob[3] != 'D')
        throw std::invalid_argument("detector blob: bad magic");
    rd.pos = 4;
    if (rd.u8() != 1) throw std::invalid_argument("detector blob: unsupported version");
    const uint8_t kind = rd.u8();
    DetectorModel model;
    if (kind == uint8_t(DetectorKind::Forest)) {
        ForestModel fm;
        fm.n_trees = rd.u32();
        fm.subsample = rd.u32();
        const uint32_t n_trees = rd.u32();
        if (n_trees > 100000) throw std::invalid_argument("detector blob: tree count implausible");
        for (uint32_t t = 0; t < n_trees; ++t) {
            const uint32_t n_nodes = rd.u32();
            if (n_nodes > 10000000) throw std::invalid_argument("detector blob: node count implausible");
            std::vector<ForestNode> nodes(n_nodes);
            for (ForestNode& nd : nodes) {
                const uint16_t fraw = uint16_t(rd.u8()) | uint16_t(uint16_t(rd.u8()) << 8);
                nd.feature = int16_t(fraw);
                nd.threshold = rd.f64();
                nd.left = int32_t(rd.u32());
                nd.right = int32_t(rd.u32());
                nd.size = rd.u32();
                if (nd.feature >= int16_t(kFeatureDim))
                    throw std::invalid_argument("detector blob: feature index out of range");
                if (nd.feature >= 0 &&
                    (nd.left < 0 || nd.right < 0 || uint32_t(nd.left) >= n_nodes ||
                     uint32_t(nd.right) >= n_nodes))
                    throw std::invalid_argument("detector blob: child index out of range");
            }
            fm.trees.push_back(std::move(nodes));
        }
        model.kind = std::move(fm);
    } else if (kind == uint8_t(DetectorKind::Pca)) {
        PcaModel pm;
        for (double& m : pm.mean) m = rd.f64();
        for (double& s : pm.scale) s = rd.f64();
        const uint32_t k = rd.u32();
        if (k > kFeatureDim) throw std::invalid_argument("detector blob: too many components");
        for (uint32_t r = 0; r < k; ++r) {
            std::array<double, kFeatureDim> comp;
            for (double& c : comp) c = rd.f64();
            pm.components.push_back(comp);
        }
        pm.threshold = rd.f64();
        model.kind = std::move(pm);
    } else {
        throw std::invalid_argument("detector blob: unknown detector kind");
    }
    if (rd.pos != blob.size()) throw std::invalid_argument("detector blob: trailing bytes");
    return model;
}

std::string model_digest(const DetectorModel& model) {
    const std::vector<uint8_t> blob = serialize_model(model);
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : blob) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace qrt
