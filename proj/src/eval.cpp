#include "salnet/eval.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "salnet/error.hpp"

namespace salnet {

Tensor binarize(const Tensor& saliency, double threshold) {
  Tensor m(saliency.n(), saliency.c(), saliency.h(), saliency.w());
  for (std::int64_t i = 0; i < saliency.size(); ++i) {
    m[i] = static_cast<double>(saliency[i]) > threshold ? 1.0f : 0.0f;
  }
  return m;
}

std::pair<double, double> precision_recall(const Tensor& mask, const Tensor& gt) {
  check_same_shape(mask, gt, "precision_recall");
  std::int64_t m_count = 0, g_count = 0, both = 0;
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    const bool m = mask[i] > 0.5f;
    const bool g = gt[i] > 0.5f;
    m_count += m;
    g_count += g;
    both += m && g;
  }
  double precision, recall;
  if (m_count == 0) {
    precision = g_count == 0 ? 1.0 : 0.0;
    recall = g_count == 0 ? 1.0 : 0.0;
  } else if (g_count == 0) {
    precision = 0.0;
    recall = 1.0;
  } else {
    precision = static_cast<double>(both) / static_cast<double>(m_count);
    recall = static_cast<double>(both) / static_cast<double>(g_count);
  }
  return {precision, recall};
}

double f_measure(double precision, double recall, double beta_squared) {
  const double denom = beta_squared * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta_squared) * precision * recall / denom;
}

double mae(const Tensor& saliency, const Tensor& gt) {
  check_same_shape(saliency, gt, "mae");
  double acc = 0.0;
  for (std::int64_t i = 0; i < saliency.size(); ++i) {
    acc += std::abs(static_cast<double>(saliency[i]) - static_cast<double>(gt[i]));
  }
  return acc / static_cast<double>(saliency.size());
}

std::vector<PrPoint> pr_curve(const Tensor& saliency, const Tensor& gt, int n_thresholds) {
  if (n_thresholds < 2) throw UsageError("pr_curve: need at least 2 thresholds");
  std::vector<PrPoint> curve(static_cast<std::size_t>(n_thresholds));
  for (int i = 0; i < n_thresholds; ++i) {
    const double t = static_cast<double>(i) / (n_thresholds - 1);
    const auto [p, r] = precision_recall(binarize(saliency, t), gt);
    curve[static_cast<std::size_t>(i)] = {t, p, r};
  }
  return curve;
}

MetricsReport evaluate_dataset(const MapSource& source, const Manifest& manifest,
                               const EvalConfig& config) {
  MetricsReport report;
  std::vector<PrPoint> pr_sum;
  if (config.pr_thresholds >= 2) {
    pr_sum.resize(static_cast<std::size_t>(config.pr_thresholds));
  }

  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    std::optional<Tensor> map = source(manifest, i);
    if (!map) {
      report.skipped.push_back(manifest.entries[i].image);
      continue;
    }
    ImageBuffer gt_img = read_image(manifest.mask_path(i));
    if (gt_img.channels != 1) {
      throw FormatError(manifest.mask_path(i) + ": ground truth must be single-channel P5");
    }
    const Tensor gt = binarize(gray_to_tensor(gt_img), 0.5);
    if (!map->same_shape(gt)) {
      throw DimensionError("evaluate_dataset: prediction " + map->shape_str() +
                           " does not match ground truth " + gt.shape_str() + " for " +
                           manifest.entries[i].image);
    }
    ImageMetrics m;
    m.name = manifest.entries[i].image;
    const auto [p, r] = precision_recall(binarize(*map, config.threshold), gt);
    m.precision = p;
    m.recall = r;
    m.f_measure = f_measure(p, r, config.beta_squared);
    m.mae = mae(*map, gt);
    report.per_image.push_back(m);

    if (!pr_sum.empty()) {
      const auto curve = pr_curve(*map, gt, config.pr_thresholds);
      for (std::size_t k = 0; k < curve.size(); ++k) {
        pr_sum[k].threshold = curve[k].threshold;
        pr_sum[k].precision += curve[k].precision;
        pr_sum[k].recall += curve[k].recall;
      }
    }
  }

  const double n = static_cast<double>(report.per_image.size());
  report.average.name = "__average__";
  if (n > 0) {
    for (const ImageMetrics& m : report.per_image) {
      report.average.precision += m.precision;
      report.average.recall += m.recall;
      report.average.f_measure += m.f_measure;
      report.average.mae += m.mae;
    }
    report.average.precision /= n;
    report.average.recall /= n;
    report.average.f_measure /= n;
    report.average.mae /= n;
    if (!pr_sum.empty()) {
      report.pr_curve = pr_sum;
      for (PrPoint& pt : report.pr_curve) {
        pt.precision /= n;
        pt.recall /= n;
      }
    }
  }
  return report;
}

MapSource directory_map_source(const std::string& pred_dir) {
  return [pred_dir](const Manifest& manifest, std::size_t i) -> std::optional<Tensor> {
    const std::string stem = std::filesystem::path(manifest.entries[i].image).stem().string();
    const std::filesystem::path path = std::filesystem::path(pred_dir) / (stem + ".pgm");
    if (!std::filesystem::exists(path)) return std::nullopt;
    return gray_to_tensor(read_image(path.string()));
  };
}

namespace {
void metrics_row(std::ostringstream& os, const ImageMetrics& m) {
  os << m.name << "," << std::fixed << std::setprecision(6) << m.precision << "," << m.recall
     << "," << m.f_measure << "," << m.mae << "\n";
}
}  // namespace

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "image,precision,recall,f_measure,mae\n";
  for (const ImageMetrics& m : report.per_image) metrics_row(os, m);
  metrics_row(os, report.average);
  return os.str();
}

std::string pr_curve_csv(const std::vector<PrPoint>& curve) {
  std::ostringstream os;
  os << "threshold,precision,recall\n";
  for (const PrPoint& p : curve) {
    os << std::fixed << std::setprecision(6) << p.threshold << "," << p.precision << ","
       << p.recall << "\n";
  }
  return os.str();
}

}  // namespace salnet
