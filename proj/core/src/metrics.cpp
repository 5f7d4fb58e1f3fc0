#include "msnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "msnet/error.hpp"

namespace msnet {

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
  Histogram h;
  if (values.empty() || bins == 0) return h;
  h.lo = *std::min_element(values.begin(), values.end());
  h.hi = *std::max_element(values.begin(), values.end());
  h.counts.assign(bins, 0);
  const double span = h.hi - h.lo;
  for (double v : values) {
    std::size_t bin = span > 0.0 ? static_cast<std::size_t>((v - h.lo) / span *
                                                            static_cast<double>(bins))
                                 : 0;
    if (bin >= bins) bin = bins - 1;
    ++h.counts[bin];
  }
  return h;
}

ParamRecoveryReport rmse_params(const MaterialParams& estimated, const MaterialParams& truth,
                                const SpringNetwork& net) {
  const std::size_t springs = net.springs.size();
  if (estimated.k.size() != springs || truth.k.size() != springs ||
      estimated.b.size() != springs || truth.b.size() != springs)
    throw DataError("rmse_params: topology mismatch (different spring counts)");

  ParamRecoveryReport report;
  std::array<double, 3> sum_k{}, sum_b{};
  std::array<std::size_t, 3> count{};
  double total_k = 0.0, total_b = 0.0;
  for (std::size_t s = 0; s < springs; ++s) {
    const double dk = estimated.k[s] - truth.k[s];
    const double db = estimated.b[s] - truth.b[s];
    const std::size_t cls = static_cast<std::size_t>(net.springs[s].cls);
    total_k += dk * dk;
    total_b += db * db;
    sum_k[cls] += dk * dk;
    sum_b[cls] += db * db;
    ++count[cls];
  }
  report.rmse_k = std::sqrt(total_k / static_cast<double>(springs));
  report.rmse_b = std::sqrt(total_b / static_cast<double>(springs));
  for (std::size_t c = 0; c < 3; ++c) {
    report.per_class[c].count = count[c];
    if (count[c] > 0) {
      report.per_class[c].rmse_k = std::sqrt(sum_k[c] / static_cast<double>(count[c]));
      report.per_class[c].rmse_b = std::sqrt(sum_b[c] / static_cast<double>(count[c]));
    }
  }
  report.hist_k = make_histogram(estimated.k, 32);
  report.hist_b = make_histogram(estimated.b, 32);
  return report;
}

MotionReport motion_rmse(const Trajectory3& predicted, const Trajectory3& target,
                         bool per_coordinate) {
  if (predicted.points != target.points || predicted.frames() != target.frames())
    throw DataError("motion_rmse: shape mismatch");
  MotionReport report;
  report.per_coordinate = per_coordinate;
  const std::size_t points = static_cast<std::size_t>(predicted.points);
  const double denom = per_coordinate ? 3.0 * static_cast<double>(points)
                                      : static_cast<double>(points);
  report.per_frame.reserve(predicted.frames());
  for (std::size_t f = 0; f < predicted.frames(); ++f) {
    const auto xp = predicted.frame(f);
    const auto xt = target.frame(f);
    double sum = 0.0;
    for (std::size_t p = 0; p < points; ++p) sum += squared_norm(xp[p] - xt[p]);
    report.per_frame.push_back(std::sqrt(sum / denom));
  }
  double mean = 0.0;
  for (double v : report.per_frame) mean += v;
  mean /= static_cast<double>(report.per_frame.size());
  double var = 0.0;
  for (double v : report.per_frame) var += (v - mean) * (v - mean);
  report.mean = mean;
  report.stddev = report.per_frame.size() > 1
                      ? std::sqrt(var / static_cast<double>(report.per_frame.size()))
                      : 0.0;
  return report;
}

MotionReport pool_motion_reports(std::span<const MotionReport> reports) {
  MotionReport pooled;
  for (const MotionReport& r : reports)
    pooled.per_frame.insert(pooled.per_frame.end(), r.per_frame.begin(), r.per_frame.end());
  if (pooled.per_frame.empty()) return pooled;
  double mean = 0.0;
  for (double v : pooled.per_frame) mean += v;
  mean /= static_cast<double>(pooled.per_frame.size());
  double var = 0.0;
  for (double v : pooled.per_frame) var += (v - mean) * (v - mean);
  pooled.mean = mean;
  pooled.stddev = pooled.per_frame.size() > 1
                      ? std::sqrt(var / static_cast<double>(pooled.per_frame.size()))
                      : 0.0;
  return pooled;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_motion_csv(std::ostream& os, std::span<const MotionReport> reports,
                      std::span<const std::string> rollout_ids) {
  if (reports.size() != rollout_ids.size())
    throw DataError("write_motion_csv: id count does not match report count");
  os << "rollout,frame,rmse\n";
  for (std::size_t r = 0; r < reports.size(); ++r) {
    for (std::size_t f = 0; f < reports[r].per_frame.size(); ++f)
      os << rollout_ids[r] << ',' << f << ',' << format_double(reports[r].per_frame[f]) << '\n';
  }
  for (std::size_t r = 0; r < reports.size(); ++r) {
    os << rollout_ids[r] << ",mean," << format_double(reports[r].mean) << '\n';
    os << rollout_ids[r] << ",std," << format_double(reports[r].stddev) << '\n';
  }
  const MotionReport pooled = pool_motion_reports(reports);
  os << "all,mean," << format_double(pooled.mean) << '\n';
  os << "all,std," << format_double(pooled.stddev) << '\n';
}

void write_histogram_csv(std::ostream& os, const Histogram& hist, const std::string& label) {
  os << "label,bin_lo,bin_hi,count\n";
  const double width = hist.counts.empty()
                           ? 0.0
                           : (hist.hi - hist.lo) / static_cast<double>(hist.counts.size());
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    os << label << ',' << format_double(hist.lo + width * static_cast<double>(i)) << ','
       << format_double(hist.lo + width * static_cast<double>(i + 1)) << ',' << hist.counts[i]
       << '\n';
  }
}

}  // namespace msnet
