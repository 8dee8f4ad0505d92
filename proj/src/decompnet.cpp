#include "gsfl/decompnet.hpp"

#include <cmath>

namespace gsfl {

const char* to_string(Activation a) noexcept {
  return a == Activation::kTanh ? "tanh" : "rectifier";
}

Activation parse_activation(const std::string& s) {
  if (s == "rectifier" || s == "relu") return Activation::kRectifier;
  if (s == "tanh") return Activation::kTanh;
  fail(ErrorKind::kUsage, "unknown activation \"" + s + "\"");
}

void NetConfig::validate() const {
  if (input_dim == 0) fail(ErrorKind::kParameter, "net: input_dim must be >= 1");
  if (num_classes == 0) fail(ErrorKind::kParameter, "net: num_classes must be >= 1");
  for (auto h : hidden_dims) {
    if (h == 0) fail(ErrorKind::kParameter, "net: hidden layer of width 0");
  }
}

double init_weight_variance(Activation act, std::size_t fan_in, std::size_t fan_out) noexcept {
  if (act == Activation::kTanh) return 2.0 / static_cast<double>(fan_in + fan_out);
  return 2.0 / static_cast<double>(fan_in);
}

LayerStack init_stack(std::span<const std::uint32_t> widths, Activation act, Rng& rng) {
  LayerStack stack;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i];
    const std::size_t out = widths[i + 1];
    if (in == 0 || out == 0) fail(ErrorKind::kParameter, "net: zero-dimension layer");
    // Uniform(-a, a) has variance a^2 / 3.
    const double limit = std::sqrt(3.0 * init_weight_variance(act, in, out));
    Layer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.flat()) w = (2.0 * uniform01(rng) - 1.0) * limit;
    stack.push_back(std::move(layer));
  }
  return stack;
}

namespace {

void affine(const Layer& layer, const Matrix& x, Matrix& out) {
  const std::size_t batch = x.rows();
  const std::size_t in = layer.weight.cols();
  const std::size_t outw = layer.weight.rows();
  if (x.cols() != in) {
    fail(ErrorKind::kShape, "layer expects width " + std::to_string(in) + ", got " +
                                std::to_string(x.cols()));
  }
  out = Matrix(batch, outw);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto xr = x.row(b);
    for (std::size_t o = 0; o < outw; ++o) {
      const auto wr = layer.weight.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      out(b, o) = acc;
    }
  }
}

void activate(Activation act, Matrix& m) {
  for (double& v : m.flat()) {
    v = act == Activation::kTanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
  }
}

// grad *= act'(pre)
void activation_backward(Activation act, const Matrix& pre, Matrix& grad) {
  auto g = grad.flat();
  const auto p = pre.flat();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (act == Activation::kTanh) {
      const double t = std::tanh(p[i]);
      g[i] *= 1.0 - t * t;
    } else if (!(p[i] > 0.0)) {
      g[i] = 0.0;
    }
  }
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::kShape, std::string("backward: cotangent ") + what + " is " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                ", expected " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.flat();
  const auto s = src.flat();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Matrix stack_forward(const LayerStack& stack, Activation act, const Matrix& x,
                     StackCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix cur = x;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    Matrix out;
    affine(stack[i], cur, out);
    if (cache) {
      cache->inputs.push_back(std::move(cur));
      cache->pre.push_back(out);
    }
    if (i + 1 < stack.size()) activate(act, out);
    cur = std::move(out);
  }
  return cur;
}

Matrix stack_backward(const LayerStack& stack, Activation act, const StackCache& cache,
                      const Matrix& grad_out, LayerStack& grads) {
  if (cache.inputs.size() != stack.size()) {
    fail(ErrorKind::kState, "backward: forward cache missing for layer stack");
  }
  Matrix g = grad_out;
  for (std::size_t li = stack.size(); li-- > 0;) {
    const Layer& layer = stack[li];
    Layer& gl = grads[li];
    if (li + 1 < stack.size()) activation_backward(act, cache.pre[li], g);
    const Matrix& x = cache.inputs[li];
    const std::size_t batch = x.rows();
    const std::size_t in = layer.weight.cols();
    const std::size_t out = layer.weight.rows();
    for (std::size_t o = 0; o < out; ++o) {
      auto gw = gl.weight.row(o);
      for (std::size_t b = 0; b < batch; ++b) {
        const double go = g(b, o);
        const auto xr = x.row(b);
        for (std::size_t i = 0; i < in; ++i) gw[i] += go * xr[i];
        gl.bias[o] += go;
      }
    }
    Matrix gx(batch, in);
    for (std::size_t b = 0; b < batch; ++b) {
      auto gxr = gx.row(b);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g(b, o);
        const auto wr = layer.weight.row(o);
        for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
      }
    }
    g = std::move(gx);
  }
  return g;
}

LayerStack zeros_like(const LayerStack& stack) {
  LayerStack out;
  out.reserve(stack.size());
  for (const auto& l : stack) {
    out.push_back(Layer{Matrix(l.weight.rows(), l.weight.cols()),
                        std::vector<double>(l.bias.size(), 0.0)});
  }
  return out;
}

NetParams zeros_like(const NetParams& p) {
  return NetParams{zeros_like(p.encoder_s), zeros_like(p.encoder_d), zeros_like(p.decoder),
                   zeros_like(p.classifier)};
}

std::vector<ParamBlock> param_blocks(LayerStack& stack, const std::string& prefix) {
  std::vector<ParamBlock> out;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto base = prefix + "." + std::to_string(i);
    out.push_back({base + ".weight", stack[i].weight.flat(), true});
    out.push_back({base + ".bias", stack[i].bias, false});
  }
  return out;
}

std::vector<ParamBlock> param_blocks(NetParams& params) {
  std::vector<ParamBlock> out;
  for (auto* part : {&params.encoder_s, &params.encoder_d, &params.decoder, &params.classifier}) {
    const char* name = part == &params.encoder_s   ? "encoder_s"
                       : part == &params.encoder_d ? "encoder_d"
                       : part == &params.decoder   ? "decoder"
                                                   : "classifier";
    auto blocks = param_blocks(*part, name);
    out.insert(out.end(), blocks.begin(), blocks.end());
  }
  return out;
}

std::size_t parameter_count(const NetParams& params) {
  std::size_t n = 0;
  for (const auto* part : {&params.encoder_s, &params.encoder_d, &params.decoder,
                           &params.classifier}) {
    for (const auto& l : *part) n += l.weight.size() + l.bias.size();
  }
  return n;
}

DecompositionNet init_net(const NetConfig& config) {
  config.validate();
  const std::uint32_t d = config.input_dim;
  const std::uint32_t df = config.resolved_code_dim();
  auto widths = [&](std::uint32_t in, std::uint32_t out) {
    std::vector<std::uint32_t> w{in};
    w.insert(w.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    w.push_back(out);
    return w;
  };
  DecompositionNet net;
  net.config = config;
  // Independent streams per sub-network so topology changes leave the shared
  // parts' initial weights identical.
  auto rng_s = make_rng(config.init_seed, "net.encoder_s");
  auto rng_d = make_rng(config.init_seed, "net.encoder_d");
  auto rng_dec = make_rng(config.init_seed, "net.decoder");
  auto rng_cls = make_rng(config.init_seed, "net.classifier");
  net.params.encoder_d = init_stack(widths(d, df), config.activation, rng_d);
  if (net.has_shared_path()) {
    net.params.encoder_s = init_stack(widths(d, df), config.activation, rng_s);
    net.params.decoder = init_stack(widths(df, d), config.activation, rng_dec);
  }
  const std::vector<std::uint32_t> cls{df, config.num_classes};
  net.params.classifier = init_stack(cls, config.activation, rng_cls);
  return net;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto z = logits.row(b);
    auto p = probs.row(b);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      p[c] = std::exp(z[c] - mx);
      sum += p[c];
    }
    for (double& v : p) v /= sum;
  }
  return probs;
}

ForwardRecord forward(const DecompositionNet& net, const Matrix& y, bool keep_cache) {
  if (y.cols() != net.config.input_dim) {
    fail(ErrorKind::kShape, "forward: input width " + std::to_string(y.cols()) + ", expected " +
                                std::to_string(net.config.input_dim));
  }
  const Activation act = net.config.activation;
  ForwardRecord rec;
  rec.has_cache = keep_cache;
  rec.y = y;
  rec.y_dis = stack_forward(net.params.encoder_d, act, y, keep_cache ? &rec.cache_d : nullptr);
  if (net.has_shared_path()) {
    rec.y_shd = stack_forward(net.params.encoder_s, act, y, keep_cache ? &rec.cache_s : nullptr);
    // The decoder reads the sum of the two codes, never a concatenation.
    Matrix z = rec.y_shd;
    add_into(z, rec.y_dis);
    rec.y_hat = stack_forward(net.params.decoder, act, z, keep_cache ? &rec.cache_dec : nullptr);
  }
  rec.logits =
      stack_forward(net.params.classifier, act, rec.y_dis, keep_cache ? &rec.cache_cls : nullptr);
  rec.probs = softmax_rows(rec.logits);
  return rec;
}

Matrix discriminative_logits(const DecompositionNet& net, const Matrix& y) {
  if (y.cols() != net.config.input_dim) {
    fail(ErrorKind::kShape, "input width " + std::to_string(y.cols()) + ", expected " +
                                std::to_string(net.config.input_dim));
  }
  const Activation act = net.config.activation;
  return stack_forward(net.params.classifier, act,
                       stack_forward(net.params.encoder_d, act, y, nullptr), nullptr);
}

BackwardResult backward(const DecompositionNet& net, const ForwardRecord& rec,
                        const Matrix& grad_y_shd, const Matrix& grad_y_dis,
                        const Matrix& grad_y_hat, const Matrix& grad_logits) {
  if (!rec.has_cache) fail(ErrorKind::kState, "backward: forward record has no cache");
  const std::size_t batch = rec.y.rows();
  const std::size_t df = rec.y_dis.cols();
  const Activation act = net.config.activation;
  require_shape(grad_y_dis, batch, df, "y_dis");
  require_shape(grad_logits, batch, rec.logits.cols(), "logits");
  if (net.has_shared_path()) {
    require_shape(grad_y_shd, batch, df, "y_shd");
    require_shape(grad_y_hat, batch, rec.y_hat.cols(), "y_hat");
  } else if (!grad_y_shd.empty() || !grad_y_hat.empty()) {
    fail(ErrorKind::kShape, "backward: cotangent given for a head absent from this topology");
  }

  BackwardResult res{zeros_like(net.params), Matrix(batch, rec.y.cols())};
  Matrix g_dis = stack_backward(net.params.classifier, act, rec.cache_cls, grad_logits,
                                res.grads.classifier);
  add_into(g_dis, grad_y_dis);
  if (net.has_shared_path()) {
    const Matrix g_z = stack_backward(net.params.decoder, act, rec.cache_dec, grad_y_hat,
                                      res.grads.decoder);
    Matrix g_shd = grad_y_shd;
    add_into(g_shd, g_z);
    add_into(g_dis, g_z);
    const Matrix gx_s =
        stack_backward(net.params.encoder_s, act, rec.cache_s, g_shd, res.grads.encoder_s);
    add_into(res.grad_input, gx_s);
  }
  const Matrix gx_d =
      stack_backward(net.params.encoder_d, act, rec.cache_d, g_dis, res.grads.encoder_d);
  add_into(res.grad_input, gx_d);
  return res;
}

void write_stack(binio::Writer& w, const LayerStack& stack) {
  w.u32(static_cast<std::uint32_t>(stack.size()));
  for (const auto& l : stack) {
    w.u32(static_cast<std::uint32_t>(l.weight.rows()));
    w.u32(static_cast<std::uint32_t>(l.weight.cols()));
    w.f64s(l.weight.flat());
    w.f64s(l.bias);
  }
}

LayerStack read_stack(binio::Reader& r) {
  const std::uint32_t n = r.u32();
  if (n > 1024) r.error_at(r.offset() - 4, "implausible layer count");
  LayerStack stack;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t out = r.u32();
    const std::uint32_t in = r.u32();
    if (out == 0 || in == 0) r.error_at(at, "zero-dimension layer");
    r.need((std::size_t{out} * in + out) * 8, "layer payload");
    Layer l{Matrix(out, in), std::vector<double>(out)};
    r.f64s(l.weight.flat());
    r.f64s(l.bias);
    if (!all_finite(l.weight.flat()) || !all_finite(l.bias)) {
      fail(ErrorKind::kData, "checkpoint layer " + std::to_string(i) + " has non-finite values");
    }
    stack.push_back(std::move(l));
  }
  return stack;
}

namespace {

constexpr std::uint16_t kNetVersion = 1;

void write_config(binio::Writer& w, const NetConfig& c) {
  w.u32(c.input_dim);
  w.u32(c.code_dim);
  w.u32(static_cast<std::uint32_t>(c.hidden_dims.size()));
  for (auto h : c.hidden_dims) w.u32(h);
  w.u32(c.num_classes);
  w.u8(static_cast<std::uint8_t>(c.activation));
  w.u8(static_cast<std::uint8_t>(c.topology));
  w.u64(c.init_seed);
}

NetConfig read_config(binio::Reader& r) {
  NetConfig c;
  c.input_dim = r.u32();
  c.code_dim = r.u32();
  const std::uint32_t nh = r.u32();
  if (nh > 1024) r.error_at(r.offset() - 4, "implausible hidden layer count");
  for (std::uint32_t i = 0; i < nh; ++i) c.hidden_dims.push_back(r.u32());
  c.num_classes = r.u32();
  const std::size_t act_at = r.offset();
  const auto act = r.u8();
  if (act > 1) r.error_at(act_at, "unknown activation code");
  c.activation = static_cast<Activation>(act);
  const std::size_t topo_at = r.offset();
  const auto topo = r.u8();
  if (topo > 1) r.error_at(topo_at, "unknown topology code");
  c.topology = static_cast<Topology>(topo);
  c.init_seed = r.u64();
  return c;
}

}  // namespace

void write_net(binio::Writer& w, const DecompositionNet& net) {
  w.magic("GSFN");
  w.u16(kNetVersion);
  write_config(w, net.config);
  write_stack(w, net.params.encoder_s);
  write_stack(w, net.params.encoder_d);
  write_stack(w, net.params.decoder);
  write_stack(w, net.params.classifier);
}

DecompositionNet read_net(binio::Reader& r) {
  r.expect_magic("GSFN");
  const std::size_t at = r.offset();
  if (r.u16() != kNetVersion) r.error_at(at, "unsupported net version");
  DecompositionNet net;
  net.config = read_config(r);
  net.params.encoder_s = read_stack(r);
  net.params.encoder_d = read_stack(r);
  net.params.decoder = read_stack(r);
  net.params.classifier = read_stack(r);
  return net;
}

void save_net(const DecompositionNet& net, const std::string& path) {
  binio::Writer w;
  write_net(w, net);
  binio::write_file_atomic(path, w.buffer());
}

DecompositionNet load_net(const std::string& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, path);
  auto net = read_net(r);
  r.expect_end();
  return net;
}

}  // namespace gsfl
