#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddreg/net.hpp"
#include "ddreg/volume.hpp"

namespace ddreg {

// Raw similarity/overlap metrics. Undefined cases return nullopt and are
// excluded from aggregation with a count, never silently scored.

std::optional<double> metric_ncc(const Volume& a, const Volume& b);  // nullopt on constant input
double metric_ssim(const Volume& a, const Volume& b);
std::optional<double> metric_dsc(const LabelMap& a, const LabelMap& b, std::uint8_t label);

// Hausdorff distances over 6-connectivity boundary voxels, world mm. HD95
// pools both directed boundary-distance sets and takes the linearly
// interpolated 95th percentile.
std::optional<double> metric_hd(const LabelMap& a, const LabelMap& b, std::uint8_t label);
std::optional<double> metric_hd95(const LabelMap& a, const LabelMap& b, std::uint8_t label);

// Euclidean distance between world-space label centroids.
std::optional<double> metric_tre(const LabelMap& fixed_labels, const LabelMap& pred_labels,
                                 std::uint8_t label);

struct Stat {
    double mean = 0;
    double stddev = 0;  // unbiased (n-1)
    int count = 0;      // defined samples
};

struct MetricRow {
    std::string method;
    int pairs = 0;
    Stat ssim, ncc, dsc, hd, hd95, tre, runtime;
};

// One evaluation pair on its isotropic grid, plus the label basis to score.
struct EvalPair {
    Volume fixed;
    LabelMap fixed_labels;
    Volume moving;
    LabelMap moving_labels;
};

struct PairMetrics {
    std::optional<double> ncc, ssim, dsc, hd, hd95, tre;
    double runtime_s = 0;
    int labels_scored = 0;
    int labels_missing = 0;  // vanished under warping or absent on one side
};

// Per pair: predict the field at the network resolution, resample it back to
// the pair's grid, warp image (trilinear) and labels (nearest), score all
// metrics. Runtime covers prediction plus application of the field only.
// Segmentation metrics average over the labels of the fixed map.
PairMetrics evaluate_pair(ParameterStore& params, const NetConfig& net,
                          const std::array<int, 3>& net_shape, const EvalPair& pair);

MetricRow aggregate_metrics(const std::string& method, const std::vector<PairMetrics>& per_pair);

MetricRow evaluate_model(ParameterStore& params, const NetConfig& net,
                         const std::array<int, 3>& net_shape, const std::vector<EvalPair>& pairs,
                         const std::string& method, std::vector<PairMetrics>* per_pair_out = nullptr);

// Aligned table; per metric the best mean is marked with '*', ties broken by
// lower standard deviation. SSIM/NCC/DSC count high, distances and runtime
// low.
std::string report_table(const std::vector<MetricRow>& rows);
std::string report_csv(const std::vector<MetricRow>& rows);

}  // namespace ddreg
