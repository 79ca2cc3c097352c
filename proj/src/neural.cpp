#include "metacp/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "metacp/rng.hpp"

namespace metacp::nn {

MlpSpec MlpSpec::actor(std::size_t input_dim, std::size_t num_pairs) {
  return {input_dim, {16, 16}, num_pairs, 2, HeadActivation::Softmax};
}

MlpSpec MlpSpec::critic(std::size_t input_dim) {
  return {input_dim, {8, 8}, 1, 1, HeadActivation::Linear};
}

std::size_t MlpSpec::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layout(*this)) n += l.out * l.in + l.out;
  return n;
}

void MlpSpec::validate() const {
  if (input_dim < 1 || heads < 1 || head_dim < 1) {
    throw std::invalid_argument("MLP dimensions must be >= 1");
  }
  for (std::size_t h : hidden) {
    if (h < 1) throw std::invalid_argument("MLP hidden widths must be >= 1");
  }
}

std::vector<LayerShape> layout(const MlpSpec& spec) {
  std::vector<LayerShape> out;
  std::size_t in = spec.input_dim;
  std::size_t offset = 0;
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    const std::size_t width =
        l < spec.hidden.size() ? spec.hidden[l] : spec.output_dim();
    out.push_back({in, width, offset});
    offset += width * in + width;
    in = width;
  }
  return out;
}

ModelWeights init_weights(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelWeights w{spec, std::vector<double>(spec.num_params(), 0.0)};
  Rng rng = make_rng(seed, Stream::Init);
  const auto shapes = layout(spec);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    const bool output_layer = l + 1 == shapes.size();
    const double bound =
        output_layer ? 1e-2 : std::sqrt(6.0 / static_cast<double>(s.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < s.out * s.in; ++i) w.values[s.offset + i] = u(rng);
  }
  return w;
}

ForwardCache forward(const ModelWeights& w, std::span<const double> input) {
  const MlpSpec& spec = w.spec;
  if (input.size() != spec.input_dim) {
    throw std::invalid_argument("forward: input length does not match input_dim");
  }
  for (double x : input) {
    if (!std::isfinite(x)) throw NumericError("forward: non-finite input");
  }
  const auto shapes = layout(spec);
  ForwardCache cache;
  cache.activations.reserve(shapes.size() + 1);
  cache.activations.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    const bool output_layer = l + 1 == shapes.size();
    const std::vector<double>& x = cache.activations.back();
    std::vector<double> y(s.out);
    const double* weights = w.values.data() + s.offset;
    const double* bias = weights + s.out * s.in;
    for (std::size_t o = 0; o < s.out; ++o) {
      double acc = bias[o];
      const double* row = weights + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
      y[o] = output_layer ? acc : std::max(acc, 0.0);
    }
    cache.activations.push_back(std::move(y));
  }

  const std::vector<double>& logits = cache.activations.back();
  cache.outputs = logits;
  if (spec.head_activation == HeadActivation::Softmax) {
    for (std::size_t h = 0; h < spec.heads; ++h) {
      double* z = cache.outputs.data() + h * spec.head_dim;
      const double peak = *std::max_element(z, z + spec.head_dim);
      double total = 0.0;
      for (std::size_t j = 0; j < spec.head_dim; ++j) {
        z[j] = std::exp(z[j] - peak);
        total += z[j];
      }
      for (std::size_t j = 0; j < spec.head_dim; ++j) z[j] /= total;
    }
  }
  return cache;
}

void backward_logits(const ModelWeights& w, const ForwardCache& cache,
                     std::span<const double> grad_logits,
                     std::span<double> grad) {
  const auto shapes = layout(w.spec);
  if (grad.size() != w.values.size() ||
      grad_logits.size() != w.spec.output_dim()) {
    throw std::invalid_argument("backward: gradient shape mismatch");
  }
  std::vector<double> delta(grad_logits.begin(), grad_logits.end());
  for (std::size_t l = shapes.size(); l-- > 0;) {
    const auto& s = shapes[l];
    const std::vector<double>& x = cache.activations[l];
    const double* weights = w.values.data() + s.offset;
    double* gw = grad.data() + s.offset;
    double* gb = gw + s.out * s.in;
    for (std::size_t o = 0; o < s.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* row = gw + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) row[i] += d * x[i];
    }
    if (l == 0) break;
    // Propagate through the previous layer's ReLU (x > 0 iff pre-act > 0).
    std::vector<double> prev(s.in, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = weights + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) prev[i] += d * row[i];
    }
    for (std::size_t i = 0; i < s.in; ++i) {
      if (!(x[i] > 0.0)) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
}

void backward(const ModelWeights& w, const ForwardCache& cache,
              std::span<const double> grad_outputs, std::span<double> grad) {
  const MlpSpec& spec = w.spec;
  if (spec.head_activation == HeadActivation::Linear) {
    backward_logits(w, cache, grad_outputs, grad);
    return;
  }
  // Softmax Jacobian per head: dz_j = p_j (g_j - sum_i g_i p_i).
  std::vector<double> grad_logits(spec.output_dim());
  for (std::size_t h = 0; h < spec.heads; ++h) {
    const std::size_t base = h * spec.head_dim;
    double dot = 0.0;
    for (std::size_t j = 0; j < spec.head_dim; ++j) {
      dot += grad_outputs[base + j] * cache.outputs[base + j];
    }
    for (std::size_t j = 0; j < spec.head_dim; ++j) {
      grad_logits[base + j] =
          cache.outputs[base + j] * (grad_outputs[base + j] - dot);
    }
  }
  backward_logits(w, cache, grad_logits, grad);
}

std::vector<double> backward(const ModelWeights& w, const ForwardCache& cache,
                             std::span<const double> grad_outputs) {
  std::vector<double> grad(w.values.size(), 0.0);
  backward(w, cache, grad_outputs, grad);
  return grad;
}

void adam_step(std::span<double> values, std::span<const double> grad,
               AdamState& state, double lr) {
  if (values.size() != grad.size() || state.m.size() != values.size()) {
    throw std::invalid_argument("adam_step: length mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < values.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void sgd_step(std::span<double> values, std::span<const double> grad,
              double lr) {
  if (values.size() != grad.size()) {
    throw std::invalid_argument("sgd_step: length mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "MCPCKPT1";

template <class T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
           std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    if constexpr (sizeof(U) > 1) bits >>= 8;
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
             std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tag.size()));
  out += ckpt.tag;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.networks.size()));
  for (const auto& net : ckpt.networks) {
    const MlpSpec& s = net.spec;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.input_dim));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.hidden.size()));
    for (std::size_t h : s.hidden) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.heads));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.head_dim));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.head_activation));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(net.values.size()));
    for (double v : net.values) put_le<double>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) {
    throw std::runtime_error("not a checkpoint (bad magic)");
  }
  Checkpoint ckpt;
  ckpt.tag = std::string(r.take(r.get<std::uint32_t>()));
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t n = 0; n < count; ++n) {
    MlpSpec s;
    s.input_dim = r.get<std::uint32_t>();
    const auto layers = r.get<std::uint32_t>();
    for (std::uint32_t l = 0; l < layers; ++l) s.hidden.push_back(r.get<std::uint32_t>());
    s.heads = r.get<std::uint32_t>();
    s.head_dim = r.get<std::uint32_t>();
    const auto act = r.get<std::uint8_t>();
    if (act > 1) throw std::runtime_error("checkpoint: unknown head activation");
    s.head_activation = static_cast<HeadActivation>(act);
    s.validate();
    const auto size = r.get<std::uint64_t>();
    if (size != s.num_params()) {
      throw std::runtime_error("checkpoint: parameter count does not match layout");
    }
    ModelWeights w{s, std::vector<double>(size)};
    for (auto& v : w.values) {
      v = r.get<double>();
      if (!std::isfinite(v)) throw std::runtime_error("checkpoint: non-finite weight");
    }
    ckpt.networks.push_back(std::move(w));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace metacp::nn
