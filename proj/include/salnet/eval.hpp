#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salnet/data.hpp"
#include "salnet/tensor.hpp"

// Saliency evaluation: thresholded binarization, pixel-count precision and
// recall, F-measure, MAE, per-threshold PR curves, and dataset aggregation.
// Pixel counts are exact integers; all ratios are computed in double.

namespace salnet {

struct EvalConfig {
  double threshold = 0.5;     // fixed operating threshold for single numbers
  double beta_squared = 0.09; // beta = 0.3
  int pr_thresholds = 256;    // sweep points; 0 disables the curve
};

// M = 1 where S > threshold (strict), so threshold 1.0 yields an empty mask.
Tensor binarize(const Tensor& saliency, double threshold);

// precision = |M and G| / |M|, recall = |M and G| / |G|. Degenerate cases:
// |M|=0,|G|>0 -> (0,0); |M|=0,|G|=0 -> (1,1); |M|>0,|G|=0 -> (0,1.
std::pair<double, double> precision_recall(const Tensor& mask, const Tensor& gt);

// (1+b2) P R / (b2 P + R); 0 when both are 0.
double f_measure(double precision, double recall, double beta_squared);

// Mean absolute pixel difference on the continuous map.
double mae(const Tensor& saliency, const Tensor& gt);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Thresholds uniformly spaced over [0,1] (endpoints included).
std::vector<PrPoint> pr_curve(const Tensor& saliency, const Tensor& gt, int n_thresholds);

struct ImageMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  double mae = 0.0;
};

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  ImageMetrics average;               // unweighted mean over images
  std::vector<PrPoint> pr_curve;      // averaged pointwise over images
  std::vector<std::string> skipped;   // entries with no prediction available
};

// Produces the saliency map for one manifest entry, or nullopt when missing
// (the entry is then reported as skipped).
using MapSource = std::function<std::optional<Tensor>(const Manifest&, std::size_t)>;

// Ground-truth masks are binarized at 0.5. Per-image metrics use the config
// threshold; dataset numbers are unweighted per-image averages.
MetricsReport evaluate_dataset(const MapSource& source, const Manifest& manifest,
                               const EvalConfig& config);

// Loads "<stem of the image>.pgm" from a directory of exported maps.
MapSource directory_map_source(const std::string& pred_dir);

// CSV: header image,precision,recall,f_measure,mae; final row __average__.
std::string metrics_csv(const MetricsReport& report);
// CSV: header threshold,precision,recall.
std::string pr_curve_csv(const std::vector<PrPoint>& curve);

}  // namespace salnet
