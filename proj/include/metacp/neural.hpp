#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Dense ReLU MLPs with linear or per-head softmax outputs, exact reverse-mode
// gradients, and the two optimizers used by the learners.
namespace metacp::nn {

enum class HeadActivation : std::uint8_t { Linear = 0, Softmax = 1 };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  HeadActivation head_activation = HeadActivation::Linear;

  // K softmax heads of width 2 over hidden (16, 16).
  static MlpSpec actor(std::size_t input_dim, std::size_t num_pairs);
  // Scalar linear output over hidden (8, 8).
  static MlpSpec critic(std::size_t input_dim);

  std::size_t output_dim() const { return heads * head_dim; }
  std::size_t num_layers() const { return hidden.size() + 1; }
  std::size_t num_params() const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

// Layer l maps in -> out; its out x in weight matrix (row-major) starts at
// `offset` and is followed by `out` biases.
struct LayerShape {
  std::size_t in;
  std::size_t out;
  std::size_t offset;
};

std::vector<LayerShape> layout(const MlpSpec& spec);

struct ModelWeights {
  MlpSpec spec;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ModelWeights&) const = default;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// He-uniform hidden layers, U(-1e-2, 1e-2) output layer, zero biases.
ModelWeights init_weights(const MlpSpec& spec, std::uint64_t seed);

struct ForwardCache {
  // activations[0] is the input; activations[l] the ReLU output of hidden
  // layer l; the final entry holds the output-layer pre-activations.
  std::vector<std::vector<double>> activations;
  std::vector<double> outputs;

  std::span<const double> logits() const { return activations.back(); }
};

// Throws NumericError on non-finite input.
ForwardCache forward(const ModelWeights& w, std::span<const double> input);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(outputs).
void backward(const ModelWeights& w, const ForwardCache& cache,
              std::span<const double> grad_outputs, std::span<double> grad);

// Same as backward, but the upstream gradient is on the output-layer
// pre-activations (skips the softmax Jacobian).
void backward_logits(const ModelWeights& w, const ForwardCache& cache,
                     std::span<const double> grad_logits,
                     std::span<double> grad);

std::vector<double> backward(const ModelWeights& w, const ForwardCache& cache,
                             std::span<const double> grad_outputs);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Descent step: values -= lr * mhat / (sqrt(vhat) + eps).
void adam_step(std::span<double> values, std::span<const double> grad,
               AdamState& state, double lr);

void sgd_step(std::span<double> values, std::span<const double> grad,
              double lr);

// Checkpoints: "MCPCKPT1", u32 tag length, tag bytes, u32 network count,
// then per network: u32 input_dim, u32 hidden count, u32 widths...,
// u32 heads, u32 head_dim, u8 activation, u64 parameter count, f64 values.
// All integers and floats little-endian.
struct Checkpoint {
  std::string tag;
  std::vector<ModelWeights> networks;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace metacp::nn
