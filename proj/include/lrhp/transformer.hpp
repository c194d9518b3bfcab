#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lrhp/tokenizer.hpp"
#include "lrhp/types.hpp"

namespace lrhp {

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_seq_len = 256;
  RepresentationMode representation_mode = RepresentationMode::special_token;
  std::uint64_t seed = 0;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  bool operator==(const EncoderConfig&) const = default;
};

/// Task heads that may sit on top of the final normalized hidden state.
enum class Head : unsigned { classifier = 1, reward = 2, margin = 4, lm = 8 };

const char* head_name(Head h);

class HeadSet {
 public:
  constexpr HeadSet() = default;
  constexpr HeadSet(std::initializer_list<Head> heads) {
    for (Head h : heads) bits_ |= static_cast<unsigned>(h);
  }
  constexpr bool has(Head h) const { return (bits_ & static_cast<unsigned>(h)) != 0; }
  constexpr HeadSet with(Head h) const {
    HeadSet s = *this;
    s.bits_ |= static_cast<unsigned>(h);
    return s;
  }
  constexpr unsigned bits() const { return bits_; }
  static constexpr HeadSet from_bits(unsigned b) {
    HeadSet s;
    s.bits_ = b & 15u;
    return s;
  }
  bool operator==(const HeadSet&) const = default;

 private:
  unsigned bits_ = 0;
};

/// A named block inside the flat parameter vector (column-major rows x cols).
struct ParamBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
  bool operator==(const ParamBlock&) const = default;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(const EncoderConfig& config, HeadSet heads);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Eigen::Index size() const { return size_; }
  const ParamBlock& at(const std::string& name) const;
  const ParamBlock* find(const std::string& name) const;
  /// Name of the block containing flat index `i`, with the in-block index.
  std::string describe(Eigen::Index i) const;

 private:
  void add(std::string name, Eigen::Index rows, Eigen::Index cols);

  std::vector<ParamBlock> blocks_;
  Eigen::Index size_ = 0;
};

/// Pre-norm decoder-only transformer with learned positions and GELU MLPs.
///
/// All parameters live in one flat vector described by a ParamLayout, so the
/// optimizer, checkpoint writer and gradient checker see a single array.
/// Gradients are computed by explicit reverse-mode passes over a Trace of
/// the forward activations.
template <typename Scalar>
class Transformer {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using RowVec = RowVector<Scalar>;

  /// Activations of one forward pass, retained for the backward pass.
  struct LayerTrace {
    Mat x_in;
    Mat ln1_hat;
    Vec ln1_rstd;
    Mat ln1_out;
    Mat q, k, v;
    std::vector<Mat> probs;  // one T x T causal attention matrix per head
    Mat ctx;
    Mat x_mid;
    Mat ln2_hat;
    Vec ln2_rstd;
    Mat ln2_out;
    Mat pre_act;
    Mat act;
    Mat x_out;
  };
  struct Trace {
    std::vector<TokenId> tokens;
    std::vector<LayerTrace> layers;
    Mat lnf_hat;
    Vec lnf_rstd;
    Mat out;  // final normalized hidden state, T x d

    Eigen::Index length() const { return static_cast<Eigen::Index>(tokens.size()); }
    /// Residual stream after block `layer` (1-based), T x d.
    const Mat& hidden(int layer) const { return layers[static_cast<std::size_t>(layer - 1)].x_out; }
  };

  Transformer() = default;
  Transformer(const EncoderConfig& config, HeadSet heads);

  /// Gaussian(0, 0.02) weights, zero biases, unit LayerNorm gains.
  void initialize(std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  HeadSet heads() const { return heads_; }
  const ParamLayout& layout() const { return layout_; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Trace forward(std::span<const TokenId> tokens) const;

  Scalar scalar_head(const Trace& trace, Head head, Eigen::Index pos) const;
  RowVec lm_logits(const Trace& trace, Eigen::Index pos) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(trace.out).
  void backward(const Trace& trace, const Mat& d_out, Vec& grad) const;
  /// Head backward passes add into `d_out` (T x d) and `grad`.
  void scalar_head_backward(const Trace& trace, Head head, Eigen::Index pos, Scalar d_value, Mat& d_out,
                            Vec& grad) const;
  void lm_head_backward(const Trace& trace, Eigen::Index pos, const RowVec& d_logits, Mat& d_out, Vec& grad) const;

  /// Copy with a different head set. Shared blocks are copied; new head
  /// blocks are initialized from `seed`.
  Transformer with_heads(HeadSet heads, std::uint64_t seed) const;

  template <typename Other>
  Transformer<Other> cast() const {
    Transformer<Other> out(config_, heads_);
    out.params() = params_.template cast<Other>();
    return out;
  }

 private:
  // Blocks are addressed by their position in the layout.
  Eigen::Map<const Mat> block(std::size_t index) const;
  Eigen::Map<Mat> grad_block(Vec& grad, std::size_t index) const;
  std::size_t head_index(Head head) const;

  EncoderConfig config_;
  HeadSet heads_;
  ParamLayout layout_;
  Vec params_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

using Model = Transformer<float>;

}  // namespace lrhp
