#include "lrhp/pds.hpp"

#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "lrhp/util.hpp"

namespace lrhp {

using json = nlohmann::json;

namespace {

bool score_order(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.pair_id < b.pair_id;
}

SelectionReport finish(const SelectionRequest& request, std::vector<double> scores, ScoreMethod method) {
  SelectionReport report;
  report.scores.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    report.scores.push_back({request.pool[i].pair_id, std::clamp(scores[i], -1.0, 1.0)});
  std::sort(report.scores.begin(), report.scores.end(), score_order);
  report.selected_ids = select_top_k(report.scores, request.k, request.tie_rule);
  report.anchor_digest = anchor_digest(request.anchors);
  report.model_digest = request.anchors.front().model_digest;
  report.layer = request.anchors.front().layer;
  report.k = request.k;
  report.method = method;
  return report;
}

}  // namespace

const char* method_name(ScoreMethod m) { return m == ScoreMethod::direct ? "direct" : "centroid"; }

ScoreMethod parse_method(std::string_view s) {
  if (s == "direct") return ScoreMethod::direct;
  if (s == "centroid") return ScoreMethod::centroid;
  fail(ErrorCategory::invalid_request, "unknown scoring method '" + std::string(s) + "'");
}

void SelectionRequest::validate() const {
  require(!anchors.empty(), ErrorCategory::invalid_request, "selection: anchor set is empty");
  require(!pool.empty(), ErrorCategory::invalid_request, "selection: pool is empty");
  require(k >= 0, ErrorCategory::invalid_request, "selection: k must be non-negative");
  if (static_cast<std::size_t>(k) > pool.size())
    fail(ErrorCategory::invalid_request,
         "selection: k = " + std::to_string(k) + " exceeds pool size " + std::to_string(pool.size()));
  const auto& ref = anchors.front();
  auto check = [&](const Representation& r, const char* role) {
    if (r.vector.size() != ref.vector.size())
      fail(ErrorCategory::validation, std::string("selection: ") + role + " '" + r.pair_id + "' has dimension " +
                                          std::to_string(r.vector.size()) + ", expected " +
                                          std::to_string(ref.vector.size()));
    if (r.model_digest != ref.model_digest)
      fail(ErrorCategory::validation,
           std::string("selection: ") + role + " '" + r.pair_id + "' comes from a different model");
    if (r.layer != ref.layer)
      fail(ErrorCategory::validation, std::string("selection: ") + role + " '" + r.pair_id + "' is from layer " +
                                          std::to_string(r.layer) + ", expected " + std::to_string(ref.layer));
  };
  for (const auto& a : anchors) check(a, "anchor");
  std::set<std::string> ids;
  for (const auto& p : pool) {
    check(p, "pool item");
    if (!ids.insert(p.pair_id).second)
      fail(ErrorCategory::validation, "selection: duplicate pool id '" + p.pair_id + "'");
  }
}

std::string anchor_digest(const std::vector<Representation>& anchors) {
  std::vector<const Representation*> sorted;
  for (const auto& a : anchors) sorted.push_back(&a);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->pair_id < b->pair_id; });
  Fnv1a h;
  for (const auto* a : sorted) {
    h.update(a->pair_id);
    h.update("\n");
    h.update(a->vector.data(), static_cast<std::size_t>(a->vector.size()) * sizeof(double));
  }
  return h.hex();
}

SelectionReport score_pool(const SelectionRequest& request, int threads) {
  request.validate();
  const double n = static_cast<double>(request.anchors.size());
  std::vector<double> scores(request.pool.size());
  parallel_for(request.pool.size(), threads, [&](std::size_t i) {
    double sum = 0.0;
    for (const auto& a : request.anchors) sum += cosine(request.pool[i].vector, a.vector);
    scores[i] = sum / n;
  });
  return finish(request, std::move(scores), ScoreMethod::direct);
}

SelectionReport score_pool_centroid(const SelectionRequest& request, int threads) {
  request.validate();
  VectorXd centroid = VectorXd::Zero(request.anchors.front().vector.size());
  for (const auto& a : request.anchors) {
    const double norm = a.vector.norm();
    require(norm > 0.0, ErrorCategory::invalid_request, "cosine: zero-norm vector");
    centroid += a.vector / norm;
  }
  centroid /= static_cast<double>(request.anchors.size());
  std::vector<double> scores(request.pool.size());
  parallel_for(request.pool.size(), threads, [&](std::size_t i) {
    const double norm = request.pool[i].vector.norm();
    require(norm > 0.0, ErrorCategory::invalid_request, "cosine: zero-norm vector");
    scores[i] = request.pool[i].vector.dot(centroid) / norm;
  });
  return finish(request, std::move(scores), ScoreMethod::centroid);
}

std::vector<std::string> select_top_k(const std::vector<ScoredItem>& scores, int k, TieRule) {
  require(k >= 0, ErrorCategory::invalid_request, "select_top_k: k must be non-negative");
  if (static_cast<std::size_t>(k) > scores.size())
    fail(ErrorCategory::invalid_request,
         "select_top_k: k = " + std::to_string(k) + " exceeds pool size " + std::to_string(scores.size()));
  std::vector<ScoredItem> order = scores;
  std::partial_sort(order.begin(), order.begin() + k, order.end(), score_order);
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) ids.push_back(order[static_cast<std::size_t>(i)].pair_id);
  return ids;
}

std::string report_to_csv(const SelectionReport& report) {
  const json header = {{"k", report.k},
                       {"method", method_name(report.method)},
                       {"anchor_digest", report.anchor_digest},
                       {"model_digest", report.model_digest},
                       {"layer", report.layer}};
  const std::set<std::string> chosen(report.selected_ids.begin(), report.selected_ids.end());
  std::ostringstream out;
  out << header.dump() << '\n' << "pair_id,score,selected\n";
  for (const auto& s : report.scores)
    out << s.pair_id << ',' << format_double(s.score) << ',' << (chosen.count(s.pair_id) ? 1 : 0) << '\n';
  return out.str();
}

SelectionReport report_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  SelectionReport report;
  if (!std::getline(in, line)) fail(ErrorCategory::parse, "selection report: empty input");
  try {
    const json header = json::parse(line);
    report.k = header.at("k").get<int>();
    report.method = parse_method(header.at("method").get<std::string>());
    report.anchor_digest = header.at("anchor_digest").get<std::string>();
    report.model_digest = header.at("model_digest").get<std::string>();
    report.layer = header.at("layer").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCategory::parse, std::string("selection report header: ") + e.what());
  }
  if (!std::getline(in, line) || line != "pair_id,score,selected")
    fail(ErrorCategory::parse, "selection report: missing CSV header");
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3)
      fail(ErrorCategory::parse, "selection report line " + std::to_string(line_no) + ": expected 3 columns");
    report.scores.push_back({cells[0], parse_double(cells[1])});
    if (cells[2] == "1") report.selected_ids.push_back(cells[0]);
  }
  return report;
}

}  // namespace lrhp
