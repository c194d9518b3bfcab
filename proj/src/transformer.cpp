#include "lrhp/transformer.hpp"

#include <cmath>
#include <random>

namespace lrhp {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

std::string layer_prefix(int l) { return "layer" + std::to_string(l) + "."; }

// Layout order: tok_emb, pos_emb, then kPerLayer blocks per layer in this
// order, then lnf.g, lnf.b and the heads.
enum LayerBlock : std::size_t {
  kLn1G, kLn1B, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kLn2G, kLn2B, kW1, kB1, kW2, kB2, kPerLayer
};
constexpr std::size_t kTokEmb = 0;
constexpr std::size_t kPosEmb = 1;
constexpr std::size_t kFirstLayer = 2;

constexpr std::size_t layer_block(int l, LayerBlock b) { return kFirstLayer + static_cast<std::size_t>(l) * kPerLayer + b; }

const char* head_prefix(Head h) {
  switch (h) {
    case Head::classifier: return "head.classifier";
    case Head::reward: return "head.reward";
    case Head::margin: return "head.margin";
    case Head::lm: return "head.lm";
  }
  return "head.?";
}

bool is_gain(const std::string& name) { return name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0; }
bool is_bias(const std::string& name) {
  auto dot = name.rfind('.');
  return dot != std::string::npos && name[dot + 1] == 'b';
}

template <typename Scalar>
void layer_norm(const Matrix<Scalar>& x, Eigen::Map<const Matrix<Scalar>> g, Eigen::Map<const Matrix<Scalar>> b,
                Matrix<Scalar>& hat, Vector<Scalar>& rstd, Matrix<Scalar>& out) {
  const Eigen::Index d = x.cols();
  Vector<Scalar> mu = x.rowwise().mean();
  hat = x.colwise() - mu;
  rstd = ((hat.array().square().rowwise().sum() / Scalar(d)) + Scalar(kLnEps)).rsqrt().matrix();
  hat = rstd.asDiagonal() * hat;
  out = (hat.array().rowwise() * g.col(0).transpose().array()).rowwise() + b.col(0).transpose().array();
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& d_out, const Matrix<Scalar>& hat, const Vector<Scalar>& rstd,
                                   Eigen::Map<const Matrix<Scalar>> g, Eigen::Map<Matrix<Scalar>> dg,
                                   Eigen::Map<Matrix<Scalar>> db) {
  const Eigen::Index d = hat.cols();
  dg.col(0) += (d_out.array() * hat.array()).colwise().sum().transpose().matrix();
  db.col(0) += d_out.colwise().sum().transpose();
  Matrix<Scalar> dhat = (d_out.array().rowwise() * g.col(0).transpose().array()).matrix();
  Vector<Scalar> mean_dhat = dhat.rowwise().sum() / Scalar(d);
  Vector<Scalar> mean_dhat_hat = (dhat.array() * hat.array()).rowwise().sum().matrix() / Scalar(d);
  Matrix<Scalar> dx = dhat.colwise() - mean_dhat;
  dx -= (hat.array().colwise() * mean_dhat_hat.array()).matrix();
  return rstd.asDiagonal() * dx;
}

template <typename Scalar>
constexpr Scalar gelu_c() {
  return Scalar(0.7978845608028654);  // sqrt(2/pi)
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  const Scalar inner = gelu_c<Scalar>() * (x + Scalar(0.044715) * x * x * x);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(inner));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar inner = gelu_c<Scalar>() * (x + Scalar(0.044715) * x * x * x);
  const Scalar t = std::tanh(inner);
  const Scalar d_inner = gelu_c<Scalar>() * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
  return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * d_inner;
}

}  // namespace

const char* head_name(Head h) {
  switch (h) {
    case Head::classifier: return "classifier";
    case Head::reward: return "reward";
    case Head::margin: return "margin";
    case Head::lm: return "lm";
  }
  return "?";
}

void EncoderConfig::validate() const {
  require(d_model >= 1 && n_heads >= 1 && d_model % n_heads == 0, ErrorCategory::validation,
          "encoder config: d_model must be divisible by n_heads");
  require(n_layers >= 1, ErrorCategory::validation, "encoder config: n_layers must be >= 1");
  require(ffn_mult >= 1, ErrorCategory::validation, "encoder config: ffn_mult must be >= 1");
  require(max_seq_len >= 8, ErrorCategory::validation, "encoder config: max_seq_len must be >= 8");
}

ParamLayout::ParamLayout(const EncoderConfig& c, HeadSet heads) {
  c.validate();
  const Eigen::Index d = c.d_model;
  const Eigen::Index f = static_cast<Eigen::Index>(c.d_model) * c.ffn_mult;
  add("tok_emb", tok::kVocabSize, d);
  add("pos_emb", c.max_seq_len, d);
  for (int l = 0; l < c.n_layers; ++l) {
    const auto p = layer_prefix(l);
    add(p + "ln1.g", d, 1);
    add(p + "ln1.b", d, 1);
    add(p + "attn.wq", d, d);
    add(p + "attn.bq", d, 1);
    add(p + "attn.wk", d, d);
    add(p + "attn.bk", d, 1);
    add(p + "attn.wv", d, d);
    add(p + "attn.bv", d, 1);
    add(p + "attn.wo", d, d);
    add(p + "attn.bo", d, 1);
    add(p + "ln2.g", d, 1);
    add(p + "ln2.b", d, 1);
    add(p + "mlp.w1", d, f);
    add(p + "mlp.b1", f, 1);
    add(p + "mlp.w2", f, d);
    add(p + "mlp.b2", d, 1);
  }
  add("lnf.g", d, 1);
  add("lnf.b", d, 1);
  for (Head h : {Head::classifier, Head::reward, Head::margin}) {
    if (!heads.has(h)) continue;
    add(std::string(head_prefix(h)) + ".w", d, 1);
    add(std::string(head_prefix(h)) + ".b", 1, 1);
  }
  if (heads.has(Head::lm)) {
    add("head.lm.w", d, tok::kVocabSize);
    add("head.lm.b", tok::kVocabSize, 1);
  }
}

void ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  blocks_.push_back({std::move(name), rows, cols, size_});
  size_ += rows * cols;
}

const ParamBlock* ParamLayout::find(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return &b;
  return nullptr;
}

const ParamBlock& ParamLayout::at(const std::string& name) const {
  const auto* b = find(name);
  if (!b) fail(ErrorCategory::validation, "parameter block '" + name + "' not in layout");
  return *b;
}

std::string ParamLayout::describe(Eigen::Index i) const {
  for (const auto& b : blocks_) {
    if (i >= b.offset && i < b.offset + b.size()) {
      const Eigen::Index local = i - b.offset;
      return b.name + "[" + std::to_string(local % b.rows) + "," + std::to_string(local / b.rows) + "]";
    }
  }
  return "<out of range>";
}

template <typename Scalar>
Transformer<Scalar>::Transformer(const EncoderConfig& config, HeadSet heads)
    : config_(config), heads_(heads), layout_(config, heads), params_(Vec::Zero(layout_.size())) {}

template <typename Scalar>
void Transformer<Scalar>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (const auto& b : layout_.blocks()) {
    auto seg = params_.segment(b.offset, b.size());
    if (is_gain(b.name)) {
      seg.setOnes();
    } else if (is_bias(b.name)) {
      seg.setZero();
    } else {
      for (Eigen::Index i = 0; i < seg.size(); ++i) seg[i] = static_cast<Scalar>(normal(rng));
    }
  }
}

template <typename Scalar>
Eigen::Map<const Matrix<Scalar>> Transformer<Scalar>::block(std::size_t index) const {
  const auto& b = layout_.blocks()[index];
  return Eigen::Map<const Mat>(params_.data() + b.offset, b.rows, b.cols);
}

template <typename Scalar>
Eigen::Map<Matrix<Scalar>> Transformer<Scalar>::grad_block(Vec& grad, std::size_t index) const {
  const auto& b = layout_.blocks()[index];
  return Eigen::Map<Mat>(grad.data() + b.offset, b.rows, b.cols);
}

template <typename Scalar>
std::size_t Transformer<Scalar>::head_index(Head head) const {
  // Heads follow lnf in enum order, two blocks (weight, bias) each.
  std::size_t index = layer_block(config_.n_layers, kLn1G) + 2;
  for (Head h : {Head::classifier, Head::reward, Head::margin, Head::lm}) {
    if (h == head) return index;
    if (heads_.has(h)) index += 2;
  }
  return index;
}

template <typename Scalar>
typename Transformer<Scalar>::Trace Transformer<Scalar>::forward(std::span<const TokenId> tokens) const {
  const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = config_.d_model;
  const int H = config_.n_heads;
  const Eigen::Index hd = config_.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(hd));
  require(T >= 1, ErrorCategory::invalid_request, "forward: empty token sequence");
  require(T <= config_.max_seq_len, ErrorCategory::invalid_request,
          "forward: sequence length " + std::to_string(T) + " exceeds max_seq_len");

  Trace tr;
  tr.tokens.assign(tokens.begin(), tokens.end());
  auto tok_emb = block(kTokEmb);
  auto pos_emb = block(kPosEmb);
  Mat x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const TokenId id = tokens[static_cast<std::size_t>(t)];
    if (id < 0 || id >= tok::kVocabSize)
      fail(ErrorCategory::invalid_request, "forward: token id " + std::to_string(id) + " out of vocabulary");
    x.row(t) = tok_emb.row(id) + pos_emb.row(t);
  }

  tr.layers.resize(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    LayerTrace& L = tr.layers[static_cast<std::size_t>(l)];
    L.x_in = std::move(x);
    layer_norm<Scalar>(L.x_in, block(layer_block(l, kLn1G)), block(layer_block(l, kLn1B)), L.ln1_hat, L.ln1_rstd, L.ln1_out);
    L.q = (L.ln1_out * block(layer_block(l, kWq))).rowwise() + block(layer_block(l, kBq)).col(0).transpose();
    L.k = (L.ln1_out * block(layer_block(l, kWk))).rowwise() + block(layer_block(l, kBk)).col(0).transpose();
    L.v = (L.ln1_out * block(layer_block(l, kWv))).rowwise() + block(layer_block(l, kBv)).col(0).transpose();
    L.ctx.resize(T, d);
    L.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      const Eigen::Index c0 = h * hd;
      Mat scores = (L.q.middleCols(c0, hd) * L.k.middleCols(c0, hd).transpose()) * scale;
      Mat& P = L.probs[static_cast<std::size_t>(h)];
      P.setZero(T, T);
      for (Eigen::Index t = 0; t < T; ++t) {
        auto row = scores.row(t).head(t + 1);
        const Scalar m = row.maxCoeff();
        auto e = (row.array() - m).exp();
        P.row(t).head(t + 1) = (e / e.sum()).matrix();
      }
      L.ctx.middleCols(c0, hd) = P * L.v.middleCols(c0, hd);
    }
    L.x_mid = L.x_in + ((L.ctx * block(layer_block(l, kWo))).rowwise() + block(layer_block(l, kBo)).col(0).transpose());
    layer_norm<Scalar>(L.x_mid, block(layer_block(l, kLn2G)), block(layer_block(l, kLn2B)), L.ln2_hat, L.ln2_rstd, L.ln2_out);
    L.pre_act = (L.ln2_out * block(layer_block(l, kW1))).rowwise() + block(layer_block(l, kB1)).col(0).transpose();
    L.act = L.pre_act.unaryExpr([](Scalar v) { return gelu(v); });
    L.x_out = L.x_mid + ((L.act * block(layer_block(l, kW2))).rowwise() + block(layer_block(l, kB2)).col(0).transpose());
    x = L.x_out;
  }
  const std::size_t lnf = layer_block(config_.n_layers, kLn1G);
  layer_norm<Scalar>(x, block(lnf), block(lnf + 1), tr.lnf_hat, tr.lnf_rstd, tr.out);
  return tr;
}

template <typename Scalar>
Scalar Transformer<Scalar>::scalar_head(const Trace& trace, Head head, Eigen::Index pos) const {
  if (head == Head::lm || !heads_.has(head))
    fail(ErrorCategory::validation, std::string("model has no ") + head_name(head) + " head");
  const std::size_t w = head_index(head);
  return trace.out.row(pos).dot(block(w).col(0)) + block(w + 1)(0, 0);
}

template <typename Scalar>
RowVector<Scalar> Transformer<Scalar>::lm_logits(const Trace& trace, Eigen::Index pos) const {
  require(heads_.has(Head::lm), ErrorCategory::validation, "model has no lm head");
  const std::size_t w = head_index(Head::lm);
  return trace.out.row(pos) * block(w) + block(w + 1).col(0).transpose();
}

template <typename Scalar>
void Transformer<Scalar>::scalar_head_backward(const Trace& trace, Head head, Eigen::Index pos, Scalar d_value,
                                               Mat& d_out, Vec& grad) const {
  const std::size_t w = head_index(head);
  d_out.row(pos) += d_value * block(w).col(0).transpose();
  grad_block(grad, w).col(0) += d_value * trace.out.row(pos).transpose();
  grad_block(grad, w + 1)(0, 0) += d_value;
}

template <typename Scalar>
void Transformer<Scalar>::lm_head_backward(const Trace& trace, Eigen::Index pos, const RowVec& d_logits, Mat& d_out,
                                           Vec& grad) const {
  const std::size_t w = head_index(Head::lm);
  d_out.row(pos) += d_logits * block(w).transpose();
  grad_block(grad, w) += trace.out.row(pos).transpose() * d_logits;
  grad_block(grad, w + 1).col(0) += d_logits.transpose();
}

template <typename Scalar>
void Transformer<Scalar>::backward(const Trace& tr, const Mat& d_out, Vec& grad) const {
  const Eigen::Index T = tr.length();
  const int H = config_.n_heads;
  const Eigen::Index hd = config_.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(hd));

  const std::size_t lnf = layer_block(config_.n_layers, kLn1G);
  Mat dx = layer_norm_backward<Scalar>(d_out, tr.lnf_hat, tr.lnf_rstd, block(lnf), grad_block(grad, lnf),
                                       grad_block(grad, lnf + 1));

  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const LayerTrace& L = tr.layers[static_cast<std::size_t>(l)];

    // MLP branch: x_out = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2
    grad_block(grad, layer_block(l, kW2)) += L.act.transpose() * dx;
    grad_block(grad, layer_block(l, kB2)).col(0) += dx.colwise().sum().transpose();
    Mat d_act = dx * block(layer_block(l, kW2)).transpose();
    Mat d_pre = d_act.array() * L.pre_act.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    grad_block(grad, layer_block(l, kW1)) += L.ln2_out.transpose() * d_pre;
    grad_block(grad, layer_block(l, kB1)).col(0) += d_pre.colwise().sum().transpose();
    Mat d_ln2 = d_pre * block(layer_block(l, kW1)).transpose();
    dx += layer_norm_backward<Scalar>(d_ln2, L.ln2_hat, L.ln2_rstd, block(layer_block(l, kLn2G)), grad_block(grad, layer_block(l, kLn2G)),
                                      grad_block(grad, layer_block(l, kLn2B)));

    // Attention branch: x_mid = x_in + attn(ln1(x_in)) Wo + bo
    grad_block(grad, layer_block(l, kWo)) += L.ctx.transpose() * dx;
    grad_block(grad, layer_block(l, kBo)).col(0) += dx.colwise().sum().transpose();
    Mat d_ctx = dx * block(layer_block(l, kWo)).transpose();
    Mat dq(T, config_.d_model), dk(T, config_.d_model), dv(T, config_.d_model);
    for (int h = 0; h < H; ++h) {
      const Eigen::Index c0 = h * hd;
      const Mat& P = L.probs[static_cast<std::size_t>(h)];
      auto dctx_h = d_ctx.middleCols(c0, hd);
      Mat dP = dctx_h * L.v.middleCols(c0, hd).transpose();
      dv.middleCols(c0, hd) = P.transpose() * dctx_h;
      Vec row_dot = (dP.array() * P.array()).rowwise().sum().matrix();
      Mat dS = (P.array() * (dP.colwise() - row_dot).array()).matrix() * scale;
      dq.middleCols(c0, hd) = dS * L.k.middleCols(c0, hd);
      dk.middleCols(c0, hd) = dS.transpose() * L.q.middleCols(c0, hd);
    }
    grad_block(grad, layer_block(l, kWq)) += L.ln1_out.transpose() * dq;
    grad_block(grad, layer_block(l, kBq)).col(0) += dq.colwise().sum().transpose();
    grad_block(grad, layer_block(l, kWk)) += L.ln1_out.transpose() * dk;
    grad_block(grad, layer_block(l, kBk)).col(0) += dk.colwise().sum().transpose();
    grad_block(grad, layer_block(l, kWv)) += L.ln1_out.transpose() * dv;
    grad_block(grad, layer_block(l, kBv)).col(0) += dv.colwise().sum().transpose();
    Mat d_ln1 = dq * block(layer_block(l, kWq)).transpose() + dk * block(layer_block(l, kWk)).transpose() +
                dv * block(layer_block(l, kWv)).transpose();
    dx += layer_norm_backward<Scalar>(d_ln1, L.ln1_hat, L.ln1_rstd, block(layer_block(l, kLn1G)), grad_block(grad, layer_block(l, kLn1G)),
                                      grad_block(grad, layer_block(l, kLn1B)));
  }

  auto d_tok = grad_block(grad, kTokEmb);
  auto d_pos = grad_block(grad, kPosEmb);
  for (Eigen::Index t = 0; t < T; ++t) {
    d_tok.row(tr.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    d_pos.row(t) += dx.row(t);
  }
}

template <typename Scalar>
Transformer<Scalar> Transformer<Scalar>::with_heads(HeadSet heads, std::uint64_t seed) const {
  Transformer out(config_, heads);
  out.initialize(seed);
  for (const auto& b : out.layout_.blocks()) {
    if (const auto* src = layout_.find(b.name))
      out.params_.segment(b.offset, b.size()) = params_.segment(src->offset, src->size());
  }
  return out;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace lrhp
