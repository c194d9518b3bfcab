#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lrhp/corpus.hpp"
#include "lrhp/transformer.hpp"

namespace lrhp {

struct ProbeRow {
  std::string pair_id;
  std::string pref_type;
  std::string task;
  VectorXd vector;

  bool operator==(const ProbeRow&) const = default;
};

/// Terminal-position representations of many pairs at one layer.
struct RepresentationMatrix {
  int layer = 0;
  std::string model_digest;
  std::vector<ProbeRow> rows;

  /// Rows stacked into an n x d matrix.
  MatrixXd data() const;
  /// Tag values per row; `tag_key` is "pref_type" or "task".
  std::vector<std::string> tags(std::string_view tag_key) const;

  bool operator==(const RepresentationMatrix&) const = default;
};

/// One matrix per requested layer (1-based), rows in input order. Each pair
/// is run through the model once.
std::vector<RepresentationMatrix> dump_representations(const Model& model, const std::vector<PreferencePair>& pairs,
                                                       const std::vector<int>& layers, int threads = 1);

/// Comment line "# model_digest=<hex>", then CSV with header
/// pair_id,tag_pref_type,tag_task,layer,v0..v{d-1}. Reload is bit-exact.
std::string matrix_to_csv(const RepresentationMatrix& m);
RepresentationMatrix matrix_from_csv(std::string_view text);

struct Projection {
  MatrixXd coords;           // n x out_dim
  VectorXd explained_ratio;  // per component, non-increasing
  /// All rows coincide: coordinates and ratios are zero.
  bool degenerate = false;
};

/// Mean-centered projection onto the top principal directions. Each
/// direction's largest-magnitude loading is positive.
Projection pca_project(const MatrixXd& x, int out_dim = 2);

/// Mean silhouette coefficient under Euclidean distance. Rows alone in their
/// cluster contribute 0.
double silhouette(const MatrixXd& x, const std::vector<std::string>& labels);
double silhouette(const RepresentationMatrix& m, std::string_view tag_key);

/// CSV "pair_id,x,y".
std::string projection_to_csv(const std::vector<std::string>& ids, const Projection& p);
/// Scatter plot of the first two coordinates, one color per tag.
std::string projection_to_svg(const Projection& p, const std::vector<std::string>& tags, std::string_view title);

}  // namespace lrhp
