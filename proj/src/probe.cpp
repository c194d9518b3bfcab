#include "lrhp/probe.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "lrhp/encoder.hpp"
#include "lrhp/util.hpp"

namespace lrhp {

MatrixXd RepresentationMatrix::data() const {
  require(!rows.empty(), ErrorCategory::invalid_request, "representation matrix is empty");
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), rows.front().vector.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].vector.size() == out.cols(), ErrorCategory::validation, "representation matrix: mixed dimensions");
    out.row(static_cast<Eigen::Index>(i)) = rows[i].vector.transpose();
  }
  return out;
}

std::vector<std::string> RepresentationMatrix::tags(std::string_view tag_key) const {
  const bool by_type = tag_key == "pref_type";
  if (!by_type && tag_key != "task")
    fail(ErrorCategory::invalid_request, "unknown probe tag key '" + std::string(tag_key) + "'");
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(by_type ? r.pref_type : r.task);
  return out;
}

std::vector<RepresentationMatrix> dump_representations(const Model& model, const std::vector<PreferencePair>& pairs,
                                                       const std::vector<int>& layers, int threads) {
  require(!layers.empty(), ErrorCategory::invalid_request, "probe: no layers requested");
  const int depth = model.config().n_layers;
  for (int l : layers)
    if (l < 1 || l > depth)
      fail(ErrorCategory::invalid_request,
           "probe: layer " + std::to_string(l) + " outside [1, " + std::to_string(depth) + "]");

  const Encoder encoder(model);
  std::vector<RepresentationMatrix> out(layers.size());
  for (std::size_t j = 0; j < layers.size(); ++j) {
    out[j].layer = layers[j];
    out[j].model_digest = encoder.digest();
    out[j].rows.resize(pairs.size());
  }
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& p = pairs[i];
    const auto tokens = encoder.tokenize(p);
    const auto tr = model.forward(tokens);
    for (std::size_t j = 0; j < layers.size(); ++j) {
      const auto& h = tr.hidden(layers[j]);
      out[j].rows[i] = {p.id, p.tags.pref_type, p.tags.task, h.row(h.rows() - 1).transpose().cast<double>()};
    }
  });
  return out;
}

std::string matrix_to_csv(const RepresentationMatrix& m) {
  std::ostringstream out;
  out << "# model_digest=" << m.model_digest << '\n' << "pair_id,tag_pref_type,tag_task,layer";
  const Eigen::Index d = m.rows.empty() ? 0 : m.rows.front().vector.size();
  for (Eigen::Index j = 0; j < d; ++j) out << ",v" << j;
  out << '\n';
  for (const auto& r : m.rows) {
    out << r.pair_id << ',' << r.pref_type << ',' << r.task << ',' << m.layer;
    for (Eigen::Index j = 0; j < r.vector.size(); ++j) out << ',' << format_double(r.vector[j]);
    out << '\n';
  }
  return out.str();
}

RepresentationMatrix matrix_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  RepresentationMatrix m;
  const std::string prefix = "# model_digest=";
  if (!std::getline(in, line) || line.rfind(prefix, 0) != 0)
    fail(ErrorCategory::parse, "probe matrix: missing model_digest line");
  m.model_digest = line.substr(prefix.size());
  if (!std::getline(in, line)) fail(ErrorCategory::parse, "probe matrix: missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "pair_id" || header[1] != "tag_pref_type" || header[2] != "tag_task" ||
      header[3] != "layer")
    fail(ErrorCategory::parse, "probe matrix: unexpected header");
  const std::size_t d = header.size() - 4;
  std::size_t line_no = 2;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d + 4)
      fail(ErrorCategory::parse, "probe matrix line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(d + 4) + " columns");
    const int layer = static_cast<int>(parse_double(cells[3]));
    if (first) m.layer = layer;
    if (layer != m.layer) fail(ErrorCategory::parse, "probe matrix line " + std::to_string(line_no) + ": mixed layers");
    first = false;
    ProbeRow r{cells[0], cells[1], cells[2], VectorXd(static_cast<Eigen::Index>(d))};
    for (std::size_t j = 0; j < d; ++j) r.vector[static_cast<Eigen::Index>(j)] = parse_double(cells[j + 4]);
    m.rows.push_back(std::move(r));
  }
  return m;
}

Projection pca_project(const MatrixXd& x, int out_dim) {
  require(x.rows() >= 2, ErrorCategory::invalid_request, "pca: need at least 2 rows");
  require(out_dim >= 1 && x.cols() >= out_dim, ErrorCategory::invalid_request, "pca: out_dim exceeds dimension");
  const MatrixXd centered = x.rowwise() - x.colwise().mean();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Projection p;
  const double total = cov.trace();
  if (!(total > 0.0)) {
    p.coords = MatrixXd::Zero(x.rows(), out_dim);
    p.explained_ratio = VectorXd::Zero(out_dim);
    p.degenerate = true;
    return p;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, ErrorCategory::undefined, "pca: eigendecomposition failed");
  MatrixXd basis(x.cols(), out_dim);
  p.explained_ratio.resize(out_dim);
  for (int c = 0; c < out_dim; ++c) {
    const Eigen::Index src = x.cols() - 1 - c;  // eigenvalues ascend
    VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.col(c) = v;
    p.explained_ratio[c] = std::max(eig.eigenvalues()[src], 0.0) / total;
  }
  p.coords = centered * basis;
  return p;
}

double silhouette(const MatrixXd& x, const std::vector<std::string>& labels) {
  require(static_cast<std::size_t>(x.rows()) == labels.size(), ErrorCategory::invalid_request,
          "silhouette: label count does not match rows");
  std::map<std::string, int> cluster_ids;
  for (const auto& l : labels) cluster_ids.emplace(l, static_cast<int>(cluster_ids.size()));
  require(cluster_ids.size() >= 2, ErrorCategory::invalid_request, "silhouette: need at least 2 distinct tags");
  const std::size_t n = labels.size();
  const std::size_t k = cluster_ids.size();
  std::vector<int> cluster(n);
  std::vector<int> size(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cluster[i] = cluster_ids[labels[i]];
    ++size[static_cast<std::size_t>(cluster[i])];
  }
  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i)
        sums[static_cast<std::size_t>(cluster[j])] +=
            (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
    const auto own = static_cast<std::size_t>(cluster[i]);
    if (size[own] == 1) continue;
    const double a = sums[own] / (size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums[c] / size[c]);
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double silhouette(const RepresentationMatrix& m, std::string_view tag_key) { return silhouette(m.data(), m.tags(tag_key)); }

std::string projection_to_csv(const std::vector<std::string>& ids, const Projection& p) {
  require(static_cast<std::size_t>(p.coords.rows()) == ids.size(), ErrorCategory::invalid_request,
          "projection: id count does not match rows");
  require(p.coords.cols() >= 2, ErrorCategory::invalid_request, "projection: need 2 coordinates");
  std::ostringstream out;
  out << "pair_id,x,y\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << ids[i] << ',' << format_double(p.coords(r, 0)) << ',' << format_double(p.coords(r, 1)) << '\n';
  }
  return out.str();
}

std::string projection_to_svg(const Projection& p, const std::vector<std::string>& tags, std::string_view title) {
  require(static_cast<std::size_t>(p.coords.rows()) == tags.size(), ErrorCategory::invalid_request,
          "projection: tag count does not match rows");
  require(p.coords.cols() >= 2, ErrorCategory::invalid_request, "projection: need 2 coordinates");
  static const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                         "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double kSize = 400.0;
  constexpr double kPad = 20.0;
  std::map<std::string, std::size_t> color;
  for (const auto& t : tags) color.emplace(t, 0);
  std::size_t next = 0;
  for (auto& [tag, c] : color) c = next++ % std::size(kPalette);

  const double x0 = p.coords.col(0).minCoeff(), x1 = p.coords.col(0).maxCoeff();
  const double y0 = p.coords.col(1).minCoeff(), y1 = p.coords.col(1).maxCoeff();
  auto scale = [&](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.5; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kPad << "\" height=\""
      << kSize + 2 * kPad + 20 << "\">\n";
  out << "<text x=\"" << kPad << "\" y=\"16\" font-size=\"12\">" << title << "</text>\n";
  for (Eigen::Index i = 0; i < p.coords.rows(); ++i) {
    const double cx = kPad + kSize * scale(p.coords(i, 0), x0, x1);
    const double cy = 20 + kPad + kSize * (1.0 - scale(p.coords(i, 1), y0, y1));
    out << "<circle cx=\"" << format_double(cx) << "\" cy=\"" << format_double(cy) << "\" r=\"3\" fill=\""
        << kPalette[color[tags[static_cast<std::size_t>(i)]]] << "\"/>\n";
  }
  double ly = 36;
  for (const auto& [tag, c] : color) {
    out << "<text x=\"" << kSize - 60 << "\" y=\"" << ly << "\" font-size=\"11\" fill=\"" << kPalette[c] << "\">"
        << tag << "</text>\n";
    ly += 14;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace lrhp
