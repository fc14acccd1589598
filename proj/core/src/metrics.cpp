#include "biseunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "biseunet/errors.hpp"
#include "biseunet/kernels.hpp"
#include "json.hpp"

namespace biseunet {

namespace {

struct Counts {
  std::uint64_t pred = 0;
  std::uint64_t gt = 0;
  std::uint64_t inter = 0;
};

Counts count(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw InvalidArgument("mask shapes differ: " + pred.shape().str() + " vs " + gt.shape().str());
  }
  Counts c;
  auto p = pred.data();
  auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool in_p = p[i] > 0.5f;
    const bool in_g = g[i] > 0.5f;
    c.pred += in_p;
    c.gt += in_g;
    c.inter += in_p && in_g;
  }
  return c;
}

void check_sizes(std::span<const double> z, std::span<const double> t) {
  if (z.size() != t.size() || z.empty()) {
    throw InvalidArgument("loss: logits (" + std::to_string(z.size()) + ") and target (" +
                          std::to_string(t.size()) + ") must be non-empty and equal in size");
  }
}

double sigmoid_d(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void check_tensors(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument("loss: shape " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

Tensor binarize(const Tensor& probs, float threshold) {
  Tensor out = probs;
  for (float& v : out.data()) v = v > threshold ? 1.0f : 0.0f;
  return out;
}

double dice_score(const Tensor& pred, const Tensor& gt) {
  const Counts c = count(pred, gt);
  return (2.0 * static_cast<double>(c.inter) + kSmooth) /
         (static_cast<double>(c.pred) + static_cast<double>(c.gt) + kSmooth);
}

double iou_score(const Tensor& pred, const Tensor& gt) {
  const Counts c = count(pred, gt);
  const double uni = static_cast<double>(c.pred + c.gt - c.inter);
  return (static_cast<double>(c.inter) + kSmooth) / (uni + kSmooth);
}

double bce_loss(std::span<const double> z, std::span<const double> t) {
  check_sizes(z, t);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    sum += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  return sum / static_cast<double>(z.size());
}

double dice_loss(std::span<const double> z, std::span<const double> t) {
  check_sizes(z, t);
  double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = sigmoid_d(z[i]);
    inter += p * t[i];
    sum_p += p;
    sum_t += t[i];
  }
  return 1.0 - (2.0 * inter + kSmooth) / (sum_p + sum_t + kSmooth);
}

double combined_loss(std::span<const double> z, std::span<const double> t, double w_dice,
                     double w_bce) {
  return w_dice * dice_loss(z, t) + w_bce * bce_loss(z, t);
}

std::vector<double> bce_grad(std::span<const double> z, std::span<const double> t) {
  check_sizes(z, t);
  std::vector<double> g(z.size());
  const double inv_n = 1.0 / static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) g[i] = (sigmoid_d(z[i]) - t[i]) * inv_n;
  return g;
}

std::vector<double> dice_grad(std::span<const double> z, std::span<const double> t) {
  check_sizes(z, t);
  std::vector<double> p(z.size());
  double inter = 0.0, denom = kSmooth;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = sigmoid_d(z[i]);
    inter += p[i] * t[i];
    denom += p[i] + t[i];
  }
  const double numer = 2.0 * inter + kSmooth;
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    // d(numer/denom)/dp_i = (2 t_i denom - numer) / denom^2; loss = 1 - ratio.
    const double d_ratio = (2.0 * t[i] * denom - numer) / (denom * denom);
    g[i] = -d_ratio * p[i] * (1.0 - p[i]);
  }
  return g;
}

std::vector<double> loss_grad_logits(std::span<const double> z, std::span<const double> t,
                                     double w_dice, double w_bce) {
  std::vector<double> g = dice_grad(z, t);
  const std::vector<double> gb = bce_grad(z, t);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = w_dice * g[i] + w_bce * gb[i];
  return g;
}

double bce_loss(const Tensor& logits, const Tensor& target) {
  check_tensors(logits, target);
  return bce_loss(to_double(logits), to_double(target));
}

double dice_loss(const Tensor& logits, const Tensor& target) {
  check_tensors(logits, target);
  return dice_loss(to_double(logits), to_double(target));
}

double combined_loss(const Tensor& logits, const Tensor& target, double w_dice, double w_bce) {
  check_tensors(logits, target);
  return combined_loss(to_double(logits), to_double(target), w_dice, w_bce);
}

Tensor loss_grad_logits(const Tensor& logits, const Tensor& target, double w_dice, double w_bce) {
  check_tensors(logits, target);
  const auto g = loss_grad_logits(to_double(logits), to_double(target), w_dice, w_bce);
  return Tensor(logits.shape(), std::vector<float>(g.begin(), g.end()));
}

SegScores evaluate_pairs(std::span<const SamplePair> pairs, std::size_t input_h, std::size_t input_w,
                         const Predictor& predict) {
  std::vector<SamplePair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const SamplePair& a, const SamplePair& b) { return a.stem < b.stem; });

  std::vector<ImageScore> scores(sorted.size());
  std::vector<std::string> errors(sorted.size());
  std::vector<char> ok(sorted.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sorted.size()); ++i) {
    const SamplePair& pair = sorted[static_cast<std::size_t>(i)];
    try {
      const Tensor image = load_image_normalized(pair.image_path, input_h, input_w);
      const Tensor gt = load_mask(pair.mask_path, input_h, input_w);
      const Tensor pred = binarize(predict(pair, image));
      scores[static_cast<std::size_t>(i)] = {pair.stem, dice_score(pred, gt), iou_score(pred, gt)};
      ok[static_cast<std::size_t>(i)] = 1;
    } catch (const DecodeError& e) {
      errors[static_cast<std::size_t>(i)] = pair.stem + ": " + e.what();
    }
  }

  SegScores out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (ok[i]) {
      out.per_image.push_back(scores[i]);
    } else {
      out.failures.push_back(errors[i]);
    }
  }
  if (!sorted.empty() && out.failures.size() * 10 > sorted.size()) {
    throw Error(std::to_string(out.failures.size()) + " of " + std::to_string(sorted.size()) +
                " samples failed to load (limit 10%); first: " + out.failures.front());
  }
  for (const ImageScore& s : out.per_image) {
    out.dice += s.dice;
    out.iou += s.iou;
  }
  if (!out.per_image.empty()) {
    out.dice /= static_cast<double>(out.per_image.size());
    out.iou /= static_cast<double>(out.per_image.size());
  }
  return out;
}

SegScores evaluate_split(const Model& model, std::span<const SamplePair> pairs) {
  const ModelConfig& cfg = model.config();
  return evaluate_pairs(pairs, cfg.input_h, cfg.input_w,
                        [&](const SamplePair&, const Tensor& image) {
                          return sigmoid(model.forward(image));
                        });
}

std::string scores_csv(const SegScores& scores) {
  std::ostringstream out;
  char buf[64];
  out << "stem,dice,iou\n";
  for (const ImageScore& s : scores.per_image) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", s.dice, s.iou);
    out << s.stem << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f", scores.dice, scores.iou);
  out << "# mean," << buf << ",n=" << scores.per_image.size() << ",failed=" << scores.failures.size()
      << '\n';
  return out.str();
}

std::string scores_json(const SegScores& scores) {
  nlohmann::json j;
  j["dice"] = scores.dice;
  j["iou"] = scores.iou;
  j["count"] = scores.per_image.size();
  j["failures"] = scores.failures;
  auto& rows = j["per_image"] = nlohmann::json::array();
  for (const ImageScore& s : scores.per_image) {
    rows.push_back({{"stem", s.stem}, {"dice", s.dice}, {"iou", s.iou}});
  }
  return j.dump(2) + "\n";
}

}  // namespace biseunet
