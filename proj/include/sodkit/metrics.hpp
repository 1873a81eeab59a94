#pragma once

#include <array>
#include <filesystem>

#include "sodkit/image.hpp"

namespace sodkit {

// Saliency map and binary ground truth on the same grid, values in [0,1].
struct MapPair {
    int width = 0, height = 0;
    std::vector<double> pred;
    std::vector<double> gt;  // binary
};

constexpr double kFBetaSq = 0.3;   // beta^2 of the F-measure
constexpr double kSAlpha = 0.5;    // object/region mix of the S-measure
constexpr int kCurvePoints = 256;  // 8-bit threshold sweep

enum class FbetaPolicy { MaxThreshold, Adaptive };

double mae(const MapPair& p);

// empty_gt_flag, when given, is set if the ground truth has no foreground
// (recall undefined; the guarded value 0 is returned).
double fbeta(const MapPair& p, FbetaPolicy policy, bool* empty_gt_flag = nullptr);

struct Curves {
    std::array<double, kCurvePoints> precision{}, recall{}, f{};
};

// Dataset-mean precision/recall/F per 8-bit threshold level; predictions are
// quantized to 0..255 first so the sweep is reproducible bit-for-bit.
Curves pr_curves(const std::vector<MapPair>& dataset);

// Enhanced-alignment score; the prediction is binarized at the adaptive
// threshold (twice its mean) before alignment.
double e_measure(const MapPair& p);

// Structural similarity: object-aware and region-aware terms mixed at alpha.
double s_measure(const MapPair& p);

struct MetricReport {
    double mae = 0.0;
    double fbeta_max = 0.0;
    double fbeta_adaptive = 0.0;
    double fbeta_mean = 0.0;  // mean F over the 256 thresholds
    double e_measure = 0.0;
    double s_measure = 0.0;
    Curves curves;
    int images = 0;
    std::vector<std::string> missing;  // stems without a counterpart file
};

MetricReport evaluate_pairs(const std::vector<MapPair>& dataset);

// Reads matching *.pgm stems from both directories; missing counterparts are
// listed in the report and skipped.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& gt_dir);

void write_report_csv(const MetricReport& r, const std::filesystem::path& out_dir);

}  // namespace sodkit
