#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrhp/corpus.hpp"
#include "lrhp/transformer.hpp"

namespace lrhp {

/// Four-point margin scale: 1 negligibly better or unsure, 2 slightly
/// better, 3 better, 4 significantly better.
inline constexpr int kMinMarginLabel = 1;
inline constexpr int kMaxMarginLabel = 4;

/// Min-max normalization over the fixed scale: (label - 1) / 3.
double normalize_margin(int label);
int denormalize_margin(double value);

/// 1-based ranks with ties replaced by their mean rank.
std::vector<double> average_ranks(std::span<const double> xs);

/// Sample correlation; nullopt when either input is constant.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);
/// Pearson correlation of average ranks; nullopt when either input is constant.
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

struct MarginPrediction {
  double value = 0.0;  // clamped to [0, 1]
  double raw = 0.0;
  bool clamped() const { return value != raw; }
};

MarginPrediction predict_margin_detail(const Model& predictor, const PreferencePair& pair);
double predict_margin(const Model& predictor, const PreferencePair& pair);

using MarginTable = std::vector<std::pair<std::string, double>>;

/// Predicts every pair, writes CSV "pair_id,margin" to `path` and returns the rows.
MarginTable emit_margins(const Model& predictor, const std::vector<PreferencePair>& pairs, const std::string& path,
                         int threads = 1);
std::string margins_to_csv(const MarginTable& margins);
MarginTable margins_from_csv(std::string_view text);

}  // namespace lrhp
