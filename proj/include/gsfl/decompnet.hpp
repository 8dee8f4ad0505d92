#pragma once

// The decomposition head: Encoder.S and Encoder.D split an input feature y into
// shared and discriminative codes, the Decoder reconstructs y from their sum,
// and a linear classifier reads the discriminative code only.

#include <cstdint>
#include <string>
#include <vector>

#include "gsfl/binio.hpp"
#include "gsfl/common.hpp"

namespace gsfl {

enum class Activation : std::uint8_t { kRectifier = 0, kTanh = 1 };

// kDiscriminativeOnly drops Encoder.S and the Decoder from the graph entirely.
enum class Topology : std::uint8_t { kFull = 0, kDiscriminativeOnly = 1 };

const char* to_string(Activation a) noexcept;
Activation parse_activation(const std::string& s);

struct NetConfig {
  std::uint32_t input_dim = 0;
  std::uint32_t code_dim = 0;  // 0 means "same as input_dim"
  std::vector<std::uint32_t> hidden_dims{};
  std::uint32_t num_classes = 0;
  Activation activation = Activation::kRectifier;
  std::uint64_t init_seed = 0;
  Topology topology = Topology::kFull;

  std::uint32_t resolved_code_dim() const noexcept { return code_dim == 0 ? input_dim : code_dim; }
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

// Affine layer y = W x + b with W stored out x in.
struct Layer {
  Matrix weight;
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

using LayerStack = std::vector<Layer>;

// Per-stack activations saved by a forward pass for the backward pass.
struct StackCache {
  std::vector<Matrix> inputs;  // input to layer i
  std::vector<Matrix> pre;     // pre-activation output of layer i
};

// Widths {in, h1, ..., out}. Weights are uniform with the variance scaling of
// the activation (He for rectifier, Glorot for tanh); biases zero.
LayerStack init_stack(std::span<const std::uint32_t> widths, Activation act, Rng& rng);

// Target weight variance of the init rule for one layer.
double init_weight_variance(Activation act, std::size_t fan_in, std::size_t fan_out) noexcept;

// The activation is applied after every layer except the last.
Matrix stack_forward(const LayerStack& stack, Activation act, const Matrix& x,
                     StackCache* cache);

// Accumulates parameter gradients into `grads` (same shapes as `stack`) and
// returns the gradient with respect to the stack input.
Matrix stack_backward(const LayerStack& stack, Activation act, const StackCache& cache,
                      const Matrix& grad_out, LayerStack& grads);

LayerStack zeros_like(const LayerStack& stack);

struct NetParams {
  LayerStack encoder_s;
  LayerStack encoder_d;
  LayerStack decoder;
  LayerStack classifier;

  bool operator==(const NetParams&) const = default;
};

using ParameterGradients = NetParams;

NetParams zeros_like(const NetParams& params);

struct ParamBlock {
  std::string name;  // e.g. "encoder_d.0.weight"
  std::span<double> values;
  bool is_weight = false;
};

// Stable ordering: encoder_s, encoder_d, decoder, classifier; weight then bias.
std::vector<ParamBlock> param_blocks(NetParams& params);
std::vector<ParamBlock> param_blocks(LayerStack& stack, const std::string& prefix);
std::size_t parameter_count(const NetParams& params);

struct DecompositionNet {
  NetConfig config;
  NetParams params;

  bool has_shared_path() const noexcept { return config.topology == Topology::kFull; }
  bool operator==(const DecompositionNet&) const = default;
};

DecompositionNet init_net(const NetConfig& config);

struct ForwardRecord {
  Matrix y;      // B x d
  Matrix y_shd;  // B x d_f (empty without a shared path)
  Matrix y_dis;  // B x d_f
  Matrix y_hat;  // B x d (empty without a shared path)
  Matrix logits; // B x C
  Matrix probs;  // B x C

  bool has_cache = false;
  StackCache cache_s;
  StackCache cache_d;
  StackCache cache_dec;
  StackCache cache_cls;
};

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

ForwardRecord forward(const DecompositionNet& net, const Matrix& y, bool keep_cache = true);

// Inference path only: classifier(Encoder.D(y)).
Matrix discriminative_logits(const DecompositionNet& net, const Matrix& y);

struct BackwardResult {
  ParameterGradients grads;
  Matrix grad_input;  // d(scalar)/dy through both encoders
};

// Reverse pass for the scalar whose partials with respect to the four heads are
// the given cotangents. Cotangents for absent heads must be empty matrices.
BackwardResult backward(const DecompositionNet& net, const ForwardRecord& record,
                        const Matrix& grad_y_shd, const Matrix& grad_y_dis,
                        const Matrix& grad_y_hat, const Matrix& grad_logits);

// Binary net checkpoint, magic "GSFN".
void write_stack(binio::Writer& w, const LayerStack& stack);
LayerStack read_stack(binio::Reader& r);
void write_net(binio::Writer& w, const DecompositionNet& net);
DecompositionNet read_net(binio::Reader& r);
void save_net(const DecompositionNet& net, const std::string& path);
DecompositionNet load_net(const std::string& path);

}  // namespace gsfl
