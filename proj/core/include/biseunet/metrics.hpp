#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "biseunet/blocks.hpp"
#include "biseunet/dataset.hpp"
#include "biseunet/tensor.hpp"

namespace biseunet {

// Smoothing used by the metrics and the soft-Dice loss; empty-vs-empty scores 1.
inline constexpr double kSmooth = 1e-6;

// Strictly greater than threshold -> 1, else 0.
Tensor binarize(const Tensor& probs, float threshold = 0.5f);

// Binary masks of equal shape (values > 0.5 count as foreground). Throws InvalidArgument.
double dice_score(const Tensor& pred, const Tensor& gt);
double iou_score(const Tensor& pred, const Tensor& gt);

// Losses over all elements, evaluated in double.
//   bce  = mean(max(z,0) - z*t + log1p(exp(-|z|)))
//   dice = 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps), p = sigmoid(z)
double bce_loss(std::span<const double> logits, std::span<const double> target);
double dice_loss(std::span<const double> logits, std::span<const double> target);
double combined_loss(std::span<const double> logits, std::span<const double> target, double w_dice,
                     double w_bce);

std::vector<double> bce_grad(std::span<const double> logits, std::span<const double> target);
std::vector<double> dice_grad(std::span<const double> logits, std::span<const double> target);
// d(combined_loss)/d(logits)
std::vector<double> loss_grad_logits(std::span<const double> logits, std::span<const double> target,
                                     double w_dice, double w_bce);

double bce_loss(const Tensor& logits, const Tensor& target);
double dice_loss(const Tensor& logits, const Tensor& target);
double combined_loss(const Tensor& logits, const Tensor& target, double w_dice, double w_bce);
Tensor loss_grad_logits(const Tensor& logits, const Tensor& target, double w_dice, double w_bce);

struct ImageScore {
  std::string stem;
  double dice = 0.0;
  double iou = 0.0;
};

struct SegScores {
  double dice = 0.0;  // mean over per_image
  double iou = 0.0;
  std::vector<ImageScore> per_image;  // sorted by stem
  std::vector<std::string> failures;  // "stem: reason"
};

// Maps (pair, normalized 1x3xHxW image) to foreground probabilities 1x1xHxW.
using Predictor = std::function<Tensor(const SamplePair&, const Tensor&)>;

// Loads each pair at input_h x input_w, binarizes predictor output at 0.5, scores against the
// resized mask, and averages per image. Undecodable samples are recorded in failures; more
// than 10% failures throws Error.
SegScores evaluate_pairs(std::span<const SamplePair> pairs, std::size_t input_h, std::size_t input_w,
                         const Predictor& predict);
SegScores evaluate_split(const Model& model, std::span<const SamplePair> pairs);

// stem,dice,iou rows followed by a "# mean" summary line.
std::string scores_csv(const SegScores& scores);
std::string scores_json(const SegScores& scores);

}  // namespace biseunet
