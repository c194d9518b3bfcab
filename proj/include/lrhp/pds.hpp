#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lrhp/encoder.hpp"
#include "lrhp/types.hpp"

namespace lrhp {

/// u.v / (|u| |v|), clamped to [-1, 1]. Zero-norm inputs are an error.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  require(u.size() == v.size(), ErrorCategory::invalid_request, "cosine: dimension mismatch");
  const double nu = u.template cast<double>().norm();
  const double nv = v.template cast<double>().norm();
  require(nu > 0.0 && nv > 0.0, ErrorCategory::invalid_request, "cosine: zero-norm vector");
  const double c = u.template cast<double>().dot(v.template cast<double>()) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

enum class TieRule { by_id_ascending };
enum class ScoreMethod { direct, centroid };

const char* method_name(ScoreMethod m);
ScoreMethod parse_method(std::string_view s);

/// Pool items are scored against the anchor set. Every vector must share one
/// dimension, model digest and layer.
struct SelectionRequest {
  std::vector<Representation> pool;
  std::vector<Representation> anchors;
  int k = 0;
  TieRule tie_rule = TieRule::by_id_ascending;

  void validate() const;
};

struct ScoredItem {
  std::string pair_id;
  double score = 0.0;

  bool operator==(const ScoredItem&) const = default;
};

struct SelectionReport {
  /// Sorted by score descending, then pair id ascending.
  std::vector<ScoredItem> scores;
  std::vector<std::string> selected_ids;
  std::string anchor_digest;
  std::string model_digest;
  int layer = 0;
  int k = 0;
  ScoreMethod method = ScoreMethod::direct;
};

/// Order-independent checksum of an anchor set (ids and vector bits).
std::string anchor_digest(const std::vector<Representation>& anchors);

/// C_i = mean over anchors of cosine(pool_i, anchor_j), computed pairwise.
SelectionReport score_pool(const SelectionRequest& request, int threads = 1);
/// Same scores via unit(pool_i) . mean_j unit(anchor_j), one dot product per
/// pool item.
SelectionReport score_pool_centroid(const SelectionRequest& request, int threads = 1);

/// The k largest scores; equal scores are ordered by ascending id.
std::vector<std::string> select_top_k(const std::vector<ScoredItem>& scores, int k,
                                      TieRule tie_rule = TieRule::by_id_ascending);

/// One JSON header line {k, method, anchor_digest, model_digest, layer}
/// followed by CSV "pair_id,score,selected".
std::string report_to_csv(const SelectionReport& report);
SelectionReport report_from_csv(std::string_view text);

}  // namespace lrhp
