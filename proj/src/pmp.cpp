#include "lrhp/pmp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lrhp/loss_graphs.hpp"
#include "lrhp/util.hpp"

namespace lrhp {

double normalize_margin(int label) {
  require(label >= kMinMarginLabel && label <= kMaxMarginLabel, ErrorCategory::validation,
          "margin label " + std::to_string(label) + " outside 1..4");
  return static_cast<double>(label - kMinMarginLabel) / static_cast<double>(kMaxMarginLabel - kMinMarginLabel);
}

int denormalize_margin(double value) {
  require(value >= 0.0 && value <= 1.0, ErrorCategory::validation, "normalized margin outside [0, 1]");
  return kMinMarginLabel + static_cast<int>(std::lround(value * (kMaxMarginLabel - kMinMarginLabel)));
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorCategory::invalid_request, "pearson: length mismatch");
  require(xs.size() >= 2, ErrorCategory::invalid_request, "pearson: need at least 2 observations");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorCategory::invalid_request, "spearman: length mismatch");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

MarginPrediction predict_margin_detail(const Model& predictor, const PreferencePair& pair) {
  require(predictor.heads().has(Head::margin), ErrorCategory::validation,
          "predict_margin: checkpoint has no margin regression head");
  const double raw = margin_output(predictor, pair);
  return {std::clamp(raw, 0.0, 1.0), raw};
}

double predict_margin(const Model& predictor, const PreferencePair& pair) {
  return predict_margin_detail(predictor, pair).value;
}

MarginTable emit_margins(const Model& predictor, const std::vector<PreferencePair>& pairs, const std::string& path,
                         int threads) {
  MarginTable out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out[i] = {pairs[i].id, predict_margin(predictor, pairs[i])}; });
  write_file(path, margins_to_csv(out));
  return out;
}

std::string margins_to_csv(const MarginTable& margins) {
  std::ostringstream out;
  out << "pair_id,margin\n";
  for (const auto& [id, m] : margins) out << id << ',' << format_double(m) << '\n';
  return out.str();
}

MarginTable margins_from_csv(std::string_view text) {
  MarginTable out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (++line_no == 1 || line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 2) fail(ErrorCategory::parse, "margin CSV line " + std::to_string(line_no) + ": expected 2 columns");
    out.emplace_back(cells[0], parse_double(cells[1]));
  }
  return out;
}

}  // namespace lrhp
