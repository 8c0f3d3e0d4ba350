#pragma once

// Telemetry anomaly detectors (isolation forest, PCA reconstruction error)
// and a black-box evasion routine that probes them.

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "qrt/bb84.hpp"
#include "qrt/rng.hpp"

namespace qrt {

inline constexpr size_t kFeatureDim = 8;

// [qber, sift_ratio, gain_signal, gain_decoy, gain_vacuum,
//  basis_click_asymmetry, dark_rate, timing_variance]
using FeatureVector = std::array<double, kFeatureDim>;

const std::array<std::string, kFeatureDim>& feature_names();

// Undefined qber maps to 0; decoy-disabled sessions report zero decoy and
// vacuum gains so the dimension stays fixed.
FeatureVector telemetry_features(const Telemetry& t);

enum class DetectorKind : uint8_t { Forest = 0, Pca = 1 };

struct ForestNode {
    int16_t feature = -1; // -1 marks an external node
    double threshold = 0.0;
    int32_t left = -1;
    int32_t right = -1;
    uint32_t size = 0; // population at external nodes, for the c(n) tail
};

struct ForestModel {
    uint32_t n_trees = 100;
    uint32_t subsample = 256;
    std::vector<std::vector<ForestNode>> trees;
};

struct PcaModel {
    std::array<double, kFeatureDim> mean{};
    std::array<double, kFeatureDim> scale{};
    std::vector<std::array<double, kFeatureDim>> components; // row-major, k rows
    double threshold = 0.0;
};

struct FitParams {
    uint32_t n_trees = 100;
    uint32_t subsample = 256;
    double variance_target = 0.95; // PCA retained-variance fraction
    double threshold_sigmas = 3.0; // PCA alert threshold = mean + k sigma
};

struct DetectorModel {
    std::variant<ForestModel, PcaModel> kind;
    bool is_forest() const { return std::holds_alternative<ForestModel>(kind); }
};

// Requires >= 64 baseline vectors.
DetectorModel fit(const std::vector<FeatureVector>& benign, DetectorKind kind,
                  const FitParams& params, RngStream& rng);

// Forest: 2^{-E[path]/c(subsample)}; PCA: err / (err + threshold). Both in [0,1).
double detector_score(const DetectorModel& model, const FeatureVector& v);

struct Detection {
    bool anomalous = false;
    double score = 0.0;
};

// Anomalous iff score >= alert_threshold; alert_threshold in (0,1].
Detection detect(const DetectorModel& model, const FeatureVector& v, double alert_threshold);

// 95th-percentile score of held-out benign vectors: ~5% false-positive rate.
double calibrate_alert_threshold(const DetectorModel& model,
                                 const std::vector<FeatureVector>& heldout_benign);

struct EvadeResult {
    FeatureVector vector{};
    double score = 0.0;
};

// Deterministic multi-scale coordinate descent: each sweep probes a fixed
// per-coordinate offset grid whose radius halves, accepting score decreases.
// budget caps |perturbation| per feature; budget < 0 means unbounded.
EvadeResult evade(const DetectorModel& model, const FeatureVector& attack,
                  const std::array<double, kFeatureDim>& budget, int sweeps = 20);
EvadeResult evade(const DetectorModel& model, const FeatureVector& attack, double budget,
                  int sweeps = 20);

// Versioned binary blob, stable across platforms.
std::vector<uint8_t> serialize_model(const DetectorModel& model);
DetectorModel deserialize_model(const std::vector<uint8_t>& blob);

// FNV-1a over the serialized blob, as a 16-hex-digit string.
std::string model_digest(const DetectorModel& model);

} // namespace qrt
