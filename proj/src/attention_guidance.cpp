#include "lesionattn/attention_guidance.hpp"

#include <cmath>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace lesionattn::guidance {

namespace {

double norm2(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

void check_pair(const SoftMask& target, const AttentionMap& attn) {
  if (!target.values.same_shape(attn)) {
    throw Error("shape mismatch: target " + std::to_string(target.values.rows) + "x" +
                std::to_string(target.values.cols) + " vs attention " + std::to_string(attn.rows) + "x" +
                std::to_string(attn.cols));
  }
}

struct CosineParts {
  double dot;
  double target_norm;
  double attn_norm;
};

CosineParts cosine_parts(const SoftMask& target, const AttentionMap& attn) {
  check_pair(target, attn);
  CosineParts p{std::inner_product(target.values.values.begin(), target.values.values.end(), attn.values.begin(), 0.0),
                norm2(target.values.values), norm2(attn.values)};
  if (p.target_norm == 0.0) throw Error("target mask has zero norm");
  if (p.attn_norm == 0.0) throw Error("attention map has zero norm");
  return p;
}

}  // namespace

SoftMask soften_mask(const LesionMask& mask, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error("rho must lie in [0,1], got " + std::to_string(rho));
  SoftMask out{Grid<double>(mask.rows, mask.cols), rho};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out.values.values[i] = rho + (1.0 - rho) * static_cast<double>(mask.values[i] != 0);
  }
  return out;
}

double cosine_alignment(const SoftMask& target, const AttentionMap& attn) {
  const auto p = cosine_parts(target, attn);
  return p.dot / (p.target_norm * p.attn_norm);
}

double attention_loss(const SoftMask& target, const AttentionMap& attn) { return 1.0 - cosine_alignment(target, attn); }

Grid<double> attention_loss_gradient(const SoftMask& target, const AttentionMap& attn) {
  const auto p = cosine_parts(target, attn);
  const double inv = 1.0 / (p.target_norm * p.attn_norm);
  const double radial = p.dot * inv / (p.attn_norm * p.attn_norm);
  Grid<double> grad(attn.rows, attn.cols);
  for (std::size_t i = 0; i < attn.size(); ++i) {
    grad.values[i] = -(target.values.values[i] * inv - radial * attn.values[i]);
  }
  return grad;
}

bool is_distribution(const AttentionMap& attn, double tol) {
  double total = 0.0;
  for (double v : attn.values) {
    if (!(v >= 0.0)) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= tol;
}

LesionMask resize_mask(const LesionMask& mask, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw Error("resize target must be positive");
  if (mask.rows == rows && mask.cols == cols) return mask;
  cv::Mat src(mask.rows, mask.cols, CV_32F);
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) src.at<float>(r, c) = mask(r, c) != 0 ? 1.0f : 0.0f;
  }
  cv::Mat dst;
  const bool shrinking = rows <= mask.rows && cols <= mask.cols;
  cv::resize(src, dst, cv::Size(cols, rows), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_NEAREST);
  LesionMask out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out(r, c) = dst.at<float>(r, c) >= 0.5f ? 1 : 0;
  }
  return out;
}

LesionMask load_mask(const std::filesystem::path& path) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw Error("cannot read mask image " + path.string());
  LesionMask out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) out(r, c) = img.at<std::uint8_t>(r, c) > 127 ? 1 : 0;
  }
  return out;
}

void save_mask(const LesionMask& mask, const std::filesystem::path& path) {
  cv::Mat img(mask.rows, mask.cols, CV_8U);
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) img.at<std::uint8_t>(r, c) = mask(r, c) != 0 ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), img)) throw Error("cannot write mask image " + path.string());
}

}  // namespace lesionattn::guidance
