#include "lrhp/encoder.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lrhp/util.hpp"

namespace lrhp {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "LRHPCKPT";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail(ErrorCategory::corruption, "input truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(int width) {
    auto s = take(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[static_cast<std::size_t>(i)])) << (8 * i);
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json config_json(const EncoderConfig& c) {
  return {{"d_model", c.d_model},         {"n_layers", c.n_layers},       {"n_heads", c.n_heads},
          {"ffn_mult", c.ffn_mult},       {"max_seq_len", c.max_seq_len}, {"representation_mode", mode_name(c.representation_mode)},
          {"seed", c.seed}};
}

EncoderConfig config_from(const json& j) {
  EncoderConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.representation_mode = parse_mode(j.at("representation_mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string header_json(const Model& model) {
  json blocks = json::array();
  for (const auto& b : model.layout().blocks()) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  json heads = json::array();
  for (Head h : {Head::classifier, Head::reward, Head::margin, Head::lm})
    if (model.heads().has(h)) heads.push_back(head_name(h));
  return json{{"config", config_json(model.config())}, {"heads", heads}, {"blocks", blocks}}.dump();
}

std::string serialize_body(const Model& model) {
  std::string out(kMagic);
  put_u32(out, kCheckpointFormatVersion);
  const std::string header = header_json(model);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  const auto& p = model.params();
  put_u64(out, static_cast<std::uint64_t>(p.size()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(p.size()) + 8);
  for (Eigen::Index i = 0; i < p.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(p[i]));
  return out;
}

}  // namespace

std::string model_digest(const Model& model) { return digest_hex(serialize_body(model)); }

std::string serialize_checkpoint(const Model& model) {
  std::string out = serialize_body(model);
  Fnv1a h;
  h.update(out);
  put_u64(out, h.value());
  return out;
}

Model deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) fail(ErrorCategory::corruption, "not a checkpoint file (bad magic)");
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kCheckpointFormatVersion)
    fail(ErrorCategory::version, "checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointFormatVersion) + ")");
  if (bytes.size() < 8) fail(ErrorCategory::corruption, "input truncated");
  Fnv1a h;
  h.update(bytes.data(), bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.uint(8) != h.value()) fail(ErrorCategory::corruption, "checkpoint digest mismatch");

  const auto header_len = static_cast<std::size_t>(r.uint(4));
  json header = json::parse(r.take(header_len), nullptr, false);
  if (header.is_discarded()) fail(ErrorCategory::corruption, "checkpoint header is not valid JSON");
  HeadSet heads;
  try {
    for (const auto& name : header.at("heads")) {
      const auto s = name.get<std::string>();
      for (Head hd : {Head::classifier, Head::reward, Head::margin, Head::lm})
        if (s == head_name(hd)) heads = heads.with(hd);
    }
    Model model(config_from(header.at("config")), heads);
    const auto& blocks = model.layout().blocks();
    const auto& stored = header.at("blocks");
    if (stored.size() != blocks.size()) fail(ErrorCategory::corruption, "checkpoint block table does not match config");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (stored[i].at("name").get<std::string>() != blocks[i].name || stored[i].at("rows").get<Eigen::Index>() != blocks[i].rows ||
          stored[i].at("cols").get<Eigen::Index>() != blocks[i].cols)
        fail(ErrorCategory::corruption, "checkpoint block '" + blocks[i].name + "' has unexpected shape");
    }
    const auto n = r.uint(8);
    if (n != static_cast<std::uint64_t>(model.params().size()))
      fail(ErrorCategory::corruption, "checkpoint parameter count does not match layout");
    for (Eigen::Index i = 0; i < model.params().size(); ++i)
      model.params()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
    if (r.pos() + 8 != bytes.size()) fail(ErrorCategory::corruption, "checkpoint has trailing bytes");
    return model;
  } catch (const json::exception& e) {
    fail(ErrorCategory::corruption, std::string("checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::string& path) { write_file(path, serialize_checkpoint(model)); }

ModelCheckpoint load_checkpoint(const std::string& path) {
  return ModelCheckpoint{deserialize_checkpoint(read_file(path)), kCheckpointFormatVersion};
}

// Encoder

Encoder::Encoder(Model model) : model_(std::move(model)), digest_(model_digest(model_)) {}

std::vector<TokenId> Encoder::tokenize(const PreferencePair& pair) const {
  return tokenize_pair(pair.prompt, pair.response_a, pair.response_b, mode(), model_.config().max_seq_len);
}

std::vector<TokenId> Encoder::tokenize(const ClassifierExample& example) const {
  return tokenize_pair(example.prompt, example.ordered_responses[0], example.ordered_responses[1], mode(),
                       model_.config().max_seq_len);
}

std::vector<MatrixXd> Encoder::forward_hidden(std::span<const TokenId> tokens) const {
  const auto trace = model_.forward(tokens);
  std::vector<MatrixXd> out;
  out.reserve(trace.layers.size());
  for (const auto& layer : trace.layers) out.push_back(layer.x_out.cast<double>());
  return out;
}

int Encoder::resolve_layer(std::optional<int> layer) const {
  const int l = layer.value_or(n_layers());
  if (l < 1 || l > n_layers())
    fail(ErrorCategory::invalid_request,
         "layer " + std::to_string(l) + " outside [1, " + std::to_string(n_layers()) + "]");
  return l;
}

Representation Encoder::encode(const PreferencePair& pair, std::optional<int> layer) const {
  const int l = resolve_layer(layer);
  const auto tokens = tokenize(pair);
  const auto trace = model_.forward(tokens);
  Representation rep{pair.id, l, digest_, trace.hidden(l).row(trace.length() - 1).transpose().cast<double>()};
  if (!rep.vector.allFinite()) fail(ErrorCategory::divergence, "non-finite representation for pair '" + pair.id + "'");
  return rep;
}

std::vector<Representation> Encoder::encode_batch(const std::vector<PreferencePair>& pairs, std::optional<int> layer,
                                                  int threads) const {
  resolve_layer(layer);
  std::vector<Representation> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    try {
      out[i] = encode(pairs[i], layer);
    } catch (const Error& e) {
      throw Error(e.category(), "pair '" + pairs[i].id + "': " + e.what());
    }
  });
  return out;
}

// Export

std::string representations_to_csv(const std::vector<Representation>& reps) {
  std::ostringstream out;
  out << "# model_digest=" << (reps.empty() ? "" : reps.front().model_digest) << '\n';
  out << "pair_id,layer";
  const Eigen::Index d = reps.empty() ? 0 : reps.front().vector.size();
  for (Eigen::Index i = 0; i < d; ++i) out << ",v" << i;
  out << '\n';
  for (const auto& r : reps) {
    require(r.vector.size() == d, ErrorCategory::validation, "representations have mixed dimensions");
    out << r.pair_id << ',' << r.layer;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(r.vector[i]);
    out << '\n';
  }
  return out.str();
}

std::vector<Representation> representations_from_csv(std::string_view text) {
  std::vector<Representation> out;
  std::string digest;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("# model_digest=", 0) == 0) {
      digest = line.substr(15);
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    auto cells = split_csv_line(line);
    if (cells.size() < 3) fail(ErrorCategory::parse, "representation CSV line " + std::to_string(line_no) + ": too few columns");
    Representation r;
    r.pair_id = cells[0];
    r.layer = static_cast<int>(parse_double(cells[1]));
    r.model_digest = digest;
    r.vector.resize(static_cast<Eigen::Index>(cells.size() - 2));
    for (std::size_t i = 2; i < cells.size(); ++i) r.vector[static_cast<Eigen::Index>(i - 2)] = parse_double(cells[i]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string representations_to_matrix(const std::vector<Representation>& reps) {
  const Eigen::Index d = reps.empty() ? 0 : reps.front().vector.size();
  json header{{"rows", reps.size()},
              {"cols", d},
              {"layer", reps.empty() ? 0 : reps.front().layer},
              {"model_digest", reps.empty() ? "" : reps.front().model_digest},
              {"dtype", "f64le"}};
  std::string out = header.dump() + "\n";
  for (const auto& r : reps) {
    require(r.vector.size() == d, ErrorCategory::validation, "representations have mixed dimensions");
    for (Eigen::Index i = 0; i < d; ++i) put_u64(out, std::bit_cast<std::uint64_t>(r.vector[i]));
  }
  return out;
}

MatrixXd matrix_from_binary(std::string_view bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos) fail(ErrorCategory::parse, "matrix file: missing header line");
  json header = json::parse(bytes.substr(0, eol), nullptr, false);
  if (header.is_discarded() || !header.contains("rows") || !header.contains("cols"))
    fail(ErrorCategory::parse, "matrix file: bad header");
  const auto rows = header.at("rows").get<Eigen::Index>();
  const auto cols = header.at("cols").get<Eigen::Index>();
  Reader r(bytes.substr(eol + 1));
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(r.uint(8));
  return m;
}

}  // namespace lrhp
