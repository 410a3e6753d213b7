#include "authnet/plots.hpp"

#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "authnet/error.hpp"

namespace authnet::plots {

namespace {

constexpr int kSize = 640;
constexpr int kMargin = 70;

cv::Point to_canvas(double x, double y) {
  const int px = kMargin + static_cast<int>(x * (kSize - 2 * kMargin));
  const int py = kSize - kMargin - static_cast<int>(y * (kSize - 2 * kMargin));
  return {px, py};
}

void draw_axes(cv::Mat& canvas, const std::string& x_label, const std::string& y_label,
               const std::string& title) {
  const cv::Scalar black(0, 0, 0);
  cv::line(canvas, to_canvas(0, 0), to_canvas(1, 0), black, 2);
  cv::line(canvas, to_canvas(0, 0), to_canvas(0, 1), black, 2);
  for (int i = 0; i <= 10; i += 2) {
    const double v = i / 10.0;
    char label[8];
    std::snprintf(label, sizeof(label), "%.1f", v);
    cv::putText(canvas, label, to_canvas(v, 0) + cv::Point(-12, 22),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
    cv::putText(canvas, label, to_canvas(0, v) + cv::Point(-38, 5),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
  cv::putText(canvas, x_label, cv::Point(kSize / 2 - 80, kSize - 18),
              cv::FONT_HERSHEY_SIMPLEX, 0.55, black, 1, cv::LINE_AA);
  cv::putText(canvas, y_label, cv::Point(8, 30), cv::FONT_HERSHEY_SIMPLEX, 0.55, black, 1,
              cv::LINE_AA);
  cv::putText(canvas, title, cv::Point(kSize / 2 - 140, 30), cv::FONT_HERSHEY_SIMPLEX, 0.6,
              black, 1, cv::LINE_AA);
}

void write_canvas(const std::filesystem::path& path, const cv::Mat& canvas) {
  std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), canvas)) {
    raise(ErrorCode::IoFailure, "cannot write plot " + path.string());
  }
}

}  // namespace

void render_roc(const std::filesystem::path& path, const metrics::RocCurve& curve,
                const std::string& title) {
  cv::Mat canvas(kSize, kSize, CV_8UC3, cv::Scalar::all(255));
  draw_axes(canvas, "False positive rate", "True positive rate", title);

  cv::line(canvas, to_canvas(0, 0), to_canvas(1, 1), cv::Scalar(180, 180, 180), 1, cv::LINE_AA);

  const cv::Scalar blue(180, 90, 20);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    cv::line(canvas, to_canvas(curve.points[i - 1].fpr, curve.points[i - 1].tpr),
             to_canvas(curve.points[i].fpr, curve.points[i].tpr), blue, 2, cv::LINE_AA);
  }

  if (curve.points.size() >= 2) {
    const metrics::EerPoint point = metrics::eer(curve);
    cv::circle(canvas, to_canvas(point.eer, 1.0 - point.eer), 5, cv::Scalar(40, 40, 220), -1,
               cv::LINE_AA);
    char label[48];
    std::snprintf(label, sizeof(label), "EER = %.3f", point.eer);
    cv::putText(canvas, label, to_canvas(point.eer, 1.0 - point.eer) + cv::Point(10, -8),
                cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(40, 40, 220), 1, cv::LINE_AA);
  }
  write_canvas(path, canvas);
}

void render_confusion(const std::filesystem::path& path, const metrics::ConfusionMatrix& cm,
                      const std::string& title) {
  cv::Mat canvas(kSize, kSize, CV_8UC3, cv::Scalar::all(255));
  const cv::Scalar black(0, 0, 0);
  cv::putText(canvas, title, cv::Point(kSize / 2 - 140, 34), cv::FONT_HERSHEY_SIMPLEX, 0.6,
              black, 1, cv::LINE_AA);

  const std::size_t counts[2][2] = {{cm.tp, cm.fn}, {cm.fp, cm.tn}};
  const char* row_labels[2] = {"actual accept", "actual reject"};
  const char* col_labels[2] = {"predicted accept", "predicted reject"};
  const std::size_t peak = std::max({cm.tp, cm.tn, cm.fp, cm.fn, std::size_t{1}});

  const int cell = (kSize - 2 * kMargin - 60) / 2;
  const int left = kMargin + 60;
  const int top = kMargin + 40;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      const double share = static_cast<double>(counts[r][c]) / static_cast<double>(peak);
      // Deeper blue for larger counts.
      const cv::Scalar fill(255 - 160 * share, 255 - 110 * share, 255 - 40 * share);
      const cv::Rect box(left + c * cell, top + r * cell, cell, cell);
      cv::rectangle(canvas, box, fill, -1);
      cv::rectangle(canvas, box, black, 1);
      cv::putText(canvas, std::to_string(counts[r][c]),
                  cv::Point(box.x + cell / 2 - 24, box.y + cell / 2 + 8),
                  cv::FONT_HERSHEY_SIMPLEX, 0.7, black, 2, cv::LINE_AA);
    }
    cv::putText(canvas, row_labels[r], cv::Point(10, top + r * cell + cell / 2),
                cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
  }
  for (int c = 0; c < 2; ++c) {
    cv::putText(canvas, col_labels[c], cv::Point(left + c * cell + 10, top - 12),
                cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
  }
  write_canvas(path, canvas);
}

}  // namespace authnet::plots
