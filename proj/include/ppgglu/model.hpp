#ifndef PPGGLU_MODEL_HPP
#define PPGGLU_MODEL_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ppgglu/config.hpp"
#include "ppgglu/errors.hpp"
#include "ppgglu/rng.hpp"
#include "ppgglu/signal.hpp"
#include "ppgglu/tensor.hpp"

namespace ppgglu {

struct ConvBranchConfig {
  std::size_t kernel;
  std::size_t filters;
};

struct ModelConfig {
  std::size_t window_len = 300;
  ConvBranchConfig cnn_a{5, 32};
  ConvBranchConfig cnn_b{11, 32};
  std::vector<std::size_t> gru_layers{64, 32};
  std::vector<std::size_t> branch_fc{64, 32, 16};
  std::uint64_t seed = 0;

  void validate() const {
    if (window_len < 2) throw InvalidConfig("window_len must be >= 2");
    for (const auto& c : {cnn_a, cnn_b}) {
      if (c.kernel % 2 == 0) throw InvalidConfig("conv kernels must be odd");
      if (c.filters < 1) throw InvalidConfig("conv filters must be >= 1");
    }
    if (gru_layers.empty()) throw InvalidConfig("need at least one GRU layer");
    for (auto h : gru_layers)
      if (h < 1) throw InvalidConfig("GRU layer sizes must be >= 1");
    if (branch_fc.empty()) throw InvalidConfig("branch_fc must be non-empty");
    for (auto f : branch_fc)
      if (f < 1) throw InvalidConfig("branch_fc sizes must be >= 1");
  }

  std::map<std::string, std::string> to_kv() const {
    return {{"window_len", std::to_string(window_len)},
            {"cnn_a_kernel", std::to_string(cnn_a.kernel)},
            {"cnn_a_filters", std::to_string(cnn_a.filters)},
            {"cnn_b_kernel", std::to_string(cnn_b.kernel)},
            {"cnn_b_filters", std::to_string(cnn_b.filters)},
            {"gru_layers", kv::join(gru_layers)},
            {"branch_fc", kv::join(branch_fc)},
            {"seed", std::to_string(seed)}};
  }

  static ModelConfig from_kv(const std::map<std::string, std::string>& m) {
    ModelConfig c;
    for (const auto& [key, value] : m) {
      if (key == "window_len")
        c.window_len = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "cnn_a_kernel")
        c.cnn_a.kernel = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "cnn_a_filters")
        c.cnn_a.filters = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "cnn_b_kernel")
        c.cnn_b.kernel = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "cnn_b_filters")
        c.cnn_b.filters = static_cast<std::size_t>(kv::to_int(key, value));
      else if (key == "gru_layers")
        c.gru_layers = kv::to_size_list(key, value);
      else if (key == "branch_fc")
        c.branch_fc = kv::to_size_list(key, value);
      else if (key == "seed")
        c.seed = static_cast<std::uint64_t>(kv::to_int(key, value));
      else
        throw InvalidConfig("unknown model key '" + key + "'");
    }
    c.validate();
    return c;
  }
};

namespace detail {

inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                             Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace detail

struct ConvBranch {
  Tensor kernels;  // {filters, 1, k}
  Tensor bias;     // {filters}
  Tensor gamma, beta;
  BatchNormState bn_state;
};

struct FcStack {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

// Three parallel branches over one normalized window:
//   A: conv(k_a) -> batchnorm -> relu -> maxpool(2)
//   B: conv(k_b) -> batchnorm -> relu -> maxpool(2)
//   C: stacked GRUs, final hidden state of the top layer
// each flattened into an identical fully connected stack, concatenated,
// then a single linear regression unit.
class HybridModel {
 public:
  explicit HybridModel(const ModelConfig& config) : cfg_(config) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    init_conv_branch(conv_a_, cfg_.cnn_a, rng);
    init_fc(fc_a_, cfg_.cnn_a.filters * (cfg_.window_len / 2), rng);
    init_conv_branch(conv_b_, cfg_.cnn_b, rng);
    init_fc(fc_b_, cfg_.cnn_b.filters * (cfg_.window_len / 2), rng);
    std::size_t in = 1;
    for (auto hidden : cfg_.gru_layers) {
      gru_.push_back(GruParams{
          detail::glorot_uniform({in, hidden}, in, hidden, rng),
          detail::glorot_uniform({in, hidden}, in, hidden, rng),
          detail::glorot_uniform({in, hidden}, in, hidden, rng),
          detail::glorot_uniform({hidden, hidden}, hidden, hidden, rng),
          detail::glorot_uniform({hidden, hidden}, hidden, hidden, rng),
          detail::glorot_uniform({hidden, hidden}, hidden, hidden, rng),
          Tensor::zeros({hidden}, true), Tensor::zeros({hidden}, true),
          Tensor::zeros({hidden}, true)});
      in = hidden;
    }
    init_fc(fc_c_, cfg_.gru_layers.back(), rng);
    const std::size_t concat = 3 * cfg_.branch_fc.back();
    head_w_ = detail::glorot_uniform({concat, 1}, concat, 1, rng);
    head_b_ = Tensor::zeros({1}, true);
  }

  const ModelConfig& config() const { return cfg_; }

  // trainable parameters in declaration order; this order also defines the
  // model-file layout
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (ConvBranch* cb : {&conv_a_, &conv_b_}) {
      out.push_back(&cb->kernels);
      out.push_back(&cb->bias);
      out.push_back(&cb->gamma);
      out.push_back(&cb->beta);
    }
    for (FcStack* fc : {&fc_a_, &fc_b_}) {
      for (std::size_t i = 0; i < fc->weights.size(); ++i) {
        out.push_back(&fc->weights[i]);
        out.push_back(&fc->biases[i]);
      }
    }
    for (auto& layer : gru_)
      for (Tensor* t : layer.parameters()) out.push_back(t);
    for (std::size_t i = 0; i < fc_c_.weights.size(); ++i) {
      out.push_back(&fc_c_.weights[i]);
      out.push_back(&fc_c_.biases[i]);
    }
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Tensor* t : parameters()) n += t->numel();
    return n;
  }

  std::vector<BatchNormState*> bn_states() {
    return {&conv_a_.bn_state, &conv_b_.bn_state};
  }

  void zero_grad() {
    for (Tensor* t : parameters()) t->zero_grad();
  }

  // Forward over a batch of windows; train mode uses batch statistics in
  // the batchnorm layers and updates their running state.
  Tensor forward(const std::vector<Window>& batch, Tape* tape, bool train) {
    if (batch.empty()) throw EmptyInput("forward: empty batch");
    const std::size_t len = cfg_.window_len;
    for (const auto& w : batch)
      if (w.values.size() != len)
        throw ShapeMismatch("forward: window of " + std::to_string(w.values.size()) +
                            " values, model expects " + std::to_string(len));

    const Tensor a = conv_branch(conv_a_, fc_a_, batch, tape, train);
    const Tensor b = conv_branch(conv_b_, fc_b_, batch, tape, train);
    const Tensor c = gru_branch(batch, tape);
    const Tensor cat = concat_cols(tape, {a, b, c});
    return dense(tape, cat, head_w_, head_b_);
  }

  // convenience wrapper for inference
  std::vector<double> predict(const std::vector<Window>& batch) {
    return forward(batch, nullptr, false).values();
  }

  // ---- serialization (magic PPGGLU01, kv config block, raw LE doubles,
  // FNV-1a 64 checksum trailer) ----

  void save(const std::filesystem::path& path) {
    std::string bytes = kMagic;
    const std::string config_text = kv::serialize(cfg_.to_kv());
    const std::uint32_t clen = static_cast<std::uint32_t>(config_text.size());
    append_raw(bytes, &clen, sizeof clen);
    bytes += config_text;
    for (Tensor* t : parameters())
      append_raw(bytes, t->values().data(), t->numel() * sizeof(double));
    for (BatchNormState* st : bn_states()) {
      append_raw(bytes, st->running_mean.data(),
                 st->running_mean.size() * sizeof(double));
      append_raw(bytes, st->running_var.data(),
                 st->running_var.size() * sizeof(double));
    }
    const std::uint64_t sum = fnv1a(bytes);
    append_raw(bytes, &sum, sizeof sum);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Io("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Io("short write to " + path.string());
  }

  static HybridModel load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Io("cannot read " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    if (bytes.size() < kMagic.size() + sizeof(std::uint32_t) + sizeof(std::uint64_t))
      throw ChecksumMismatch(path.string() + ": file too short");
    if (bytes.compare(0, kMagic.size(), kMagic) != 0)
      throw FormatVersionMismatch(path.string() + ": bad magic '" +
                                  bytes.substr(0, kMagic.size()) + "'");
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - sizeof stored, sizeof stored);
    bytes.resize(bytes.size() - sizeof stored);
    if (fnv1a(bytes) != stored)
      throw ChecksumMismatch(path.string() + ": checksum mismatch");

    std::size_t off = kMagic.size();
    std::uint32_t clen = 0;
    std::memcpy(&clen, bytes.data() + off, sizeof clen);
    off += sizeof clen;
    if (off + clen > bytes.size())
      throw ChecksumMismatch(path.string() + ": truncated config block");
    const ModelConfig cfg = ModelConfig::from_kv(kv::parse(bytes.substr(off, clen)));
    off += clen;

    HybridModel model(cfg);
    for (Tensor* t : model.parameters()) off = read_doubles(bytes, off, t->values(), path);
    for (BatchNormState* st : model.bn_states()) {
      off = read_doubles(bytes, off, st->running_mean, path);
      off = read_doubles(bytes, off, st->running_var, path);
    }
    if (off != bytes.size())
      throw ChecksumMismatch(path.string() + ": trailing bytes");
    return model;
  }

 private:
  inline static const std::string kMagic = "PPGGLU01";

  static void append_raw(std::string& out, const void* data, std::size_t n) {
    out.append(static_cast<const char*>(data), n);
  }

  static std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  static std::size_t read_doubles(const std::string& bytes, std::size_t off,
                                  std::vector<double>& dst,
                                  const std::filesystem::path& path) {
    const std::size_t n = dst.size() * sizeof(double);
    if (off + n > bytes.size())
      throw ChecksumMismatch(path.string() + ": truncated tensor data");
    std::memcpy(dst.data(), bytes.data() + off, n);
    return off + n;
  }

  void init_conv_branch(ConvBranch& cb, const ConvBranchConfig& c, Rng& rng) {
    cb.kernels = detail::glorot_uniform({c.filters, 1, c.kernel}, c.kernel,
                                        c.filters * c.kernel, rng);
    cb.bias = Tensor::zeros({c.filters}, true);
    cb.gamma = Tensor::full({c.filters}, 1.0, true);
    cb.beta = Tensor::zeros({c.filters}, true);
    cb.bn_state = BatchNormState(c.filters);
  }

  void init_fc(FcStack& fc, std::size_t in, Rng& rng) {
    fc.weights.clear();
    fc.biases.clear();
    for (auto out : cfg_.branch_fc) {
      fc.weights.push_back(detail::glorot_uniform({in, out}, in, out, rng));
      fc.biases.push_back(Tensor::zeros({out}, true));
      in = out;
    }
  }

  Tensor fc_apply(const FcStack& fc, Tensor x, Tape* tape) {
    for (std::size_t i = 0; i < fc.weights.size(); ++i)
      x = relu(tape, dense(tape, x, fc.weights[i], fc.biases[i]));
    return x;
  }

  Tensor conv_branch(ConvBranch& cb, const FcStack& fc,
                     const std::vector<Window>& batch, Tape* tape, bool train) {
    const std::size_t len = cfg_.window_len;
    std::vector<Tensor> conv_out;
    conv_out.reserve(batch.size());
    for (const auto& w : batch) {
      Tensor x({1, len}, w.values);
      conv_out.push_back(conv1d(tape, x, cb.kernels, cb.bias));
    }
    // per-channel statistics over batch and time
    Tensor packed = pack_channels(tape, conv_out);
    Tensor act = relu(tape, batchnorm1d(tape, packed, cb.gamma, cb.beta,
                                        cb.bn_state, train));
    std::vector<Tensor> flat;
    flat.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Tensor pooled = maxpool1d(tape, unpack_channels(tape, act, b, len));
      flat.push_back(reshape(tape, pooled, {pooled.numel()}));
    }
    return fc_apply(fc, stack_rows(tape, flat), tape);
  }

  Tensor gru_branch(const std::vector<Window>& batch, Tape* tape) {
    const std::size_t bsz = batch.size(), len = cfg_.window_len;
    std::vector<Tensor> states;
    for (auto hidden : cfg_.gru_layers)
      states.push_back(Tensor::zeros({bsz, hidden}));
    for (std::size_t t = 0; t < len; ++t) {
      std::vector<double> col(bsz);
      for (std::size_t b = 0; b < bsz; ++b) col[b] = batch[b].values[t];
      Tensor x({bsz, 1}, std::move(col));
      for (std::size_t layer = 0; layer < gru_.size(); ++layer) {
        states[layer] = gru_step(tape, x, states[layer], gru_[layer]);
        x = states[layer];
      }
    }
    return fc_apply(fc_c_, states.back(), tape);
  }

  ModelConfig cfg_;
  ConvBranch conv_a_, conv_b_;
  FcStack fc_a_, fc_b_, fc_c_;
  std::vector<GruParams> gru_;
  Tensor head_w_, head_b_;
};

inline HybridModel build(const ModelConfig& config) { return HybridModel(config); }

}  // namespace ppgglu

#endif  // PPGGLU_MODEL_HPP
