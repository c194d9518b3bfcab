#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrhp/corpus.hpp"
#include "lrhp/transformer.hpp"

namespace lrhp {

// Checkpoints

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Checksum of a model: configuration, head set, layout and parameter bits.
std::string model_digest(const Model& model);

/// Serialized model. The file is "LRHPCKPT", a u32 format version, a u32
/// length-prefixed JSON header (config, heads, named block shapes), a u64
/// parameter count with little-endian float32 parameters, and a trailing u64
/// FNV-1a digest of every preceding byte.
struct ModelCheckpoint {
  Model model;
  std::uint32_t format_version = kCheckpointFormatVersion;

  std::string digest() const { return model_digest(model); }
};

std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Model& model, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

// Representations

/// Hidden state of the terminal token of an encoded pair at one layer.
struct Representation {
  std::string pair_id;
  int layer = 0;
  std::string model_digest;
  VectorXd vector;

  bool operator==(const Representation&) const = default;
};

/// Maps preference pairs to representations with a fixed model.
/// The model is immutable after construction, so concurrent encode calls
/// are safe.
class Encoder {
 public:
  explicit Encoder(Model model);

  const Model& model() const { return model_; }
  const std::string& digest() const { return digest_; }
  RepresentationMode mode() const { return model_.config().representation_mode; }
  int n_layers() const { return model_.config().n_layers; }

  /// Template over the stored order (response_a, response_b).
  std::vector<TokenId> tokenize(const PreferencePair& pair) const;
  std::vector<TokenId> tokenize(const ClassifierExample& example) const;

  /// Residual stream after every block: n_layers matrices of seq_len x d.
  std::vector<MatrixXd> forward_hidden(std::span<const TokenId> tokens) const;

  /// Terminal-position hidden state; `layer` defaults to the last layer.
  Representation encode(const PreferencePair& pair, std::optional<int> layer = std::nullopt) const;
  /// Sequences are processed independently, so padding never leaks between
  /// items. Errors carry the offending pair id.
  std::vector<Representation> encode_batch(const std::vector<PreferencePair>& pairs,
                                           std::optional<int> layer = std::nullopt, int threads = 1) const;

 private:
  int resolve_layer(std::optional<int> layer) const;

  Model model_;
  std::string digest_;
};

// Export formats

/// CSV with header pair_id,layer,v0..v{d-1}, preceded by one comment line
/// "# model_digest=<hex>". Values use shortest round-trip decimal form, so
/// reloading is bit-exact.
std::string representations_to_csv(const std::vector<Representation>& reps);
std::vector<Representation> representations_from_csv(std::string_view text);

/// Binary matrix: one JSON header line {"rows","cols","layer","model_digest",
/// "dtype":"f64le"} followed by row-major little-endian float64 values.
std::string representations_to_matrix(const std::vector<Representation>& reps);
MatrixXd matrix_from_binary(std::string_view bytes);

}  // namespace lrhp
