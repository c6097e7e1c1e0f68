#pragma once

// Small convolutional policy/outcome network with hand-written backprop.
//
//   input (5 planes, w x h)
//   trunk: 3 x [conv 3x3, 16 ch -> ReLU -> batch norm]
//   policy head: conv 3x3, 32 ch -> ReLU -> batch norm -> fc 8 -> softmax
//   second head: fc 64 -> ReLU -> fc 1 (tanh value) or fc 5 (outcome)
//
// The outcome head's five outputs are win/draw/loss logits for the side to
// move followed by plies-left predictions for the win and loss branches, in
// network scale (plies times 0.1).
//
// All parameters live in one flat array in a fixed order: for each conv block
// (trunk blocks, then the policy block) weights [out][in][3][3], bias, gamma,
// beta; then policy fc weights [8][in] and bias, hidden fc weights and bias,
// output fc weights and bias. Batch-norm running means and variances live in
// a separate flat buffer array, block by block, mean before variance.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordinal/game.hpp"
#include "ordinal/outcome.hpp"

namespace ordinal {

enum class HeadKind : std::uint8_t { kValue = 0, kOutcome = 1 };

inline std::string to_string(HeadKind k) { return k == HeadKind::kValue ? "value" : "outcome"; }

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "value") return HeadKind::kValue;
  if (s == "outcome") return HeadKind::kOutcome;
  throw std::invalid_argument("unknown head kind: " + s);
}

struct NetworkConfig {
  BoardDims dims;
  HeadKind head = HeadKind::kOutcome;
  int trunk_layers = 3;
  int trunk_channels = 16;
  int policy_channels = 32;
  int hidden = 64;

  int head_outputs() const { return head == HeadKind::kValue ? 1 : 5; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// Result categories from the side to move's point of view, in output order.
enum class Wdl : std::uint8_t { kWin = 0, kDraw = 1, kLoss = 2 };

struct OutcomeHeadOutput {
  std::array<double, 3> wdl{};  // softmax probabilities, Wdl order
  double plies_left_win = 0.0;  // network scale
  double plies_left_loss = 0.0;
};

struct Prediction {
  std::array<double, kNumMoves> policy{};
  double value = 0.0;         // value head only
  OutcomeHeadOutput outcome;  // outcome head only
};

struct TrainingExample {
  std::vector<double> planes;
  std::array<double, kNumMoves> policy_target{};
  Wdl result = Wdl::kDraw;
  int plies_left = 0;
  double value_target = 0.0;  // reward of the final outcome for the side to move
};

struct LossCoefficients {
  double policy = 0.0;
  double value = 0.0;
  double result = 0.0;
  double plies = 0.0;

  static LossCoefficients for_head(HeadKind head) {
    if (head == HeadKind::kValue) return {20.0, 1.0, 0.0, 0.0};
    return {100.0, 0.0, 3.0, 1.0};
  }
};

// Mean per-example losses over a batch, each already weighted.
struct LossBreakdown {
  double policy = 0.0;
  double value = 0.0;
  double result = 0.0;
  double plies = 0.0;

  double total() const { return policy + value + result + plies; }
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

namespace detail {

// Four independent partial sums so the loop vectorizes without reassociation.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <std::size_t N>
std::array<double, N> softmax(const double* logits) {
  std::array<double, N> p{};
  const double m = *std::max_element(logits, logits + N);
  double z = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

template <std::size_t N>
double log_sum_exp(const double* logits) {
  const double m = *std::max_element(logits, logits + N);
  double z = 0.0;
  for (std::size_t i = 0; i < N; ++i) z += std::exp(logits[i] - m);
  return m + std::log(z);
}

}  // namespace detail

// Weighted loss of one example given raw network outputs: policy logits
// and the second head's pre-activation outputs. Writes the gradient with
// respect to those outputs into d_policy and d_head.
inline LossBreakdown example_loss(HeadKind head, const LossCoefficients& coeffs,
                                  const TrainingExample& ex, const double* logits,
                                  const double* out, double* d_policy, double* d_head) {
  LossBreakdown loss;
  const double lse = detail::log_sum_exp<kNumMoves>(logits);
  for (int k = 0; k < kNumMoves; ++k) {
    const double t = ex.policy_target[k];
    if (t > 0.0) loss.policy -= coeffs.policy * t * (logits[k] - lse);
    d_policy[k] = coeffs.policy * (std::exp(logits[k] - lse) - t);
  }
  if (head == HeadKind::kValue) {
    const double v = std::tanh(out[0]);
    const double err = v - ex.value_target;
    loss.value = coeffs.value * err * err;
    d_head[0] = coeffs.value * 2.0 * err * (1.0 - v * v);
    return loss;
  }
  const double lse3 = detail::log_sum_exp<3>(out);
  const int target = static_cast<int>(ex.result);
  loss.result = -coeffs.result * (out[target] - lse3);
  for (int k = 0; k < 3; ++k) {
    d_head[k] = coeffs.result * (std::exp(out[k] - lse3) - (k == target ? 1.0 : 0.0));
  }
  // Only the ply output matching the actual result is trained; draws train neither.
  d_head[3] = 0.0;
  d_head[4] = 0.0;
  const int branch = ex.result == Wdl::kWin ? 3 : ex.result == Wdl::kLoss ? 4 : -1;
  if (branch >= 0) {
    const double err = out[branch] - kPlyScale * ex.plies_left;
    loss.plies = coeffs.plies * err * err;
    d_head[branch] = coeffs.plies * 2.0 * err;
  }
  return loss;
}

class Network {
 public:
  struct ConvBlock {
    int in = 0;
    int out = 0;
    std::size_t weight = 0, bias = 0, gamma = 0, beta = 0;  // offsets into params
    std::size_t running_mean = 0, running_var = 0;          // offsets into buffers
  };
  struct Dense {
    int in = 0;
    int out = 0;
    std::size_t weight = 0, bias = 0;
  };

  // Intermediate values of one forward pass, kept for backprop. Separate
  // from the network so concurrent inference needs no locking.
  struct Activations {
    struct Block {
      std::vector<double> cols, z, xhat, y;
      std::vector<double> mean, var, inv_std;
    };
    int batch = 0;
    std::vector<Block> blocks;
    std::vector<double> policy_logits, hidden_pre, hidden, head;
  };

  Network(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
    require_valid(config.dims);
    layout();
    initialize(seed);
  }

  const NetworkConfig& config() const { return config_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> buffers() { return buffers_; }
  std::span<const double> buffers() const { return buffers_; }
  std::size_t input_size() const { return static_cast<std::size_t>(kNumPlanes) * cells_; }

  // Inference with running batch-norm statistics.
  Prediction predict(std::span<const double> planes, Activations& scratch) const {
    if (planes.size() != input_size()) throw std::invalid_argument("input plane size mismatch");
    forward(planes.data(), 1, false, scratch);
    return read_prediction(scratch, 0);
  }

  Prediction predict(std::span<const double> planes) const {
    Activations scratch;
    return predict(planes, scratch);
  }

  // Training-mode forward and backward over a batch. Adds the gradient of
  // the mean batch loss into `grad` (sized like params) when given. Running
  // statistics are refreshed only if `update_running_stats`.
  LossBreakdown loss_and_gradient(std::span<const TrainingExample* const> batch,
                                  const LossCoefficients& coeffs, std::vector<double>* grad,
                                  bool update_running_stats, Activations& act) {
    const int n = static_cast<int>(batch.size());
    if (n == 0) throw std::invalid_argument("empty batch");
    std::vector<double> input(static_cast<std::size_t>(n) * input_size());
    for (int b = 0; b < n; ++b) {
      if (batch[b]->planes.size() != input_size()) {
        throw std::invalid_argument("training example plane size mismatch");
      }
      std::copy(batch[b]->planes.begin(), batch[b]->planes.end(),
                input.begin() + static_cast<std::ptrdiff_t>(b * input_size()));
    }
    forward(input.data(), n, true, act);
    if (update_running_stats) refresh_running_stats(act);

    LossBreakdown loss;
    const int ho = config_.head_outputs();
    std::vector<double> d_policy(static_cast<std::size_t>(n) * kNumMoves, 0.0);
    std::vector<double> d_head(static_cast<std::size_t>(n) * ho, 0.0);
    for (int b = 0; b < n; ++b) {
      const std::size_t pb = static_cast<std::size_t>(b) * kNumMoves;
      const std::size_t hb = static_cast<std::size_t>(b) * ho;
      const LossBreakdown l = example_loss(config_.head, coeffs, *batch[b], &act.policy_logits[pb],
                                           &act.head[hb], &d_policy[pb], &d_head[hb]);
      loss.policy += l.policy / n;
      loss.value += l.value / n;
      loss.result += l.result / n;
      loss.plies += l.plies / n;
    }
    for (double& g : d_policy) g /= n;
    for (double& g : d_head) g /= n;
    if (grad) {
      if (grad->size() != params_.size()) grad->assign(params_.size(), 0.0);
      backward(act, d_policy, d_head, *grad);
    }
    return loss;
  }

  LossBreakdown loss_and_gradient(std::span<const TrainingExample* const> batch,
                                  const LossCoefficients& coeffs, std::vector<double>* grad,
                                  bool update_running_stats = false) {
    Activations act;
    return loss_and_gradient(batch, coeffs, grad, update_running_stats, act);
  }

  const std::vector<ConvBlock>& conv_blocks() const { return blocks_; }
  const Dense& policy_layer() const { return policy_fc_; }
  const Dense& hidden_layer() const { return hidden_fc_; }
  const Dense& output_layer() const { return out_fc_; }

  friend bool operator==(const Network& a, const Network& b) {
    return a.config_ == b.config_ && a.params_ == b.params_ && a.buffers_ == b.buffers_;
  }

 private:
  void layout() {
    cells_ = config_.dims.cells();
    std::size_t p = 0;
    std::size_t buf = 0;
    auto conv = [&](int in, int out) {
      ConvBlock c;
      c.in = in;
      c.out = out;
      c.weight = p;
      p += static_cast<std::size_t>(out) * in * 9;
      c.bias = p;
      p += out;
      c.gamma = p;
      p += out;
      c.beta = p;
      p += out;
      c.running_mean = buf;
      buf += out;
      c.running_var = buf;
      buf += out;
      return c;
    };
    auto dense = [&](int in, int out) {
      Dense d;
      d.in = in;
      d.out = out;
      d.weight = p;
      p += static_cast<std::size_t>(in) * out;
      d.bias = p;
      p += out;
      return d;
    };
    int channels = kNumPlanes;
    for (int i = 0; i < config_.trunk_layers; ++i) {
      blocks_.push_back(conv(channels, config_.trunk_channels));
      channels = config_.trunk_channels;
    }
    blocks_.push_back(conv(channels, config_.policy_channels));
    policy_fc_ = dense(config_.policy_channels * cells_, kNumMoves);
    hidden_fc_ = dense(config_.trunk_channels * cells_, config_.hidden);
    out_fc_ = dense(config_.hidden, config_.head_outputs());
    params_.assign(p, 0.0);
    buffers_.assign(buf, 0.0);

    // For each cell and 3x3 tap, the source cell under zero padding, or -1.
    neighbours_.assign(static_cast<std::size_t>(cells_) * 9, -1);
    const int w = config_.dims.width, h = config_.dims.height;
    for (int r = 0; r < h; ++r) {
      for (int f = 0; f < w; ++f) {
        for (int k = 0; k < 9; ++k) {
          const int rr = r + k / 3 - 1, ff = f + k % 3 - 1;
          if (rr >= 0 && rr < h && ff >= 0 && ff < w) {
            neighbours_[(r * w + f) * 9 + k] = rr * w + ff;
          }
        }
      }
    }
  }

  // He-uniform weights, zero biases, unit gamma, zero beta.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t offset, std::size_t count, int fan_in) {
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t i = 0; i < count; ++i) params_[offset + i] = u(rng);
    };
    for (const ConvBlock& c : blocks_) {
      fill(c.weight, static_cast<std::size_t>(c.out) * c.in * 9, c.in * 9);
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(c.gamma), c.out, 1.0);
      std::fill_n(buffers_.begin() + static_cast<std::ptrdiff_t>(c.running_var), c.out, 1.0);
    }
    for (const Dense* d : {&policy_fc_, &hidden_fc_, &out_fc_}) {
      fill(d->weight, static_cast<std::size_t>(d->in) * d->out, d->in);
    }
  }

  void conv_forward(const ConvBlock& c, const double* x, int n, bool train,
                    Activations::Block& a) const {
    const std::size_t k = static_cast<std::size_t>(c.in) * 9;
    const std::size_t hw = static_cast<std::size_t>(cells_);
    a.cols.assign(n * hw * k, 0.0);
    for (int b = 0; b < n; ++b) {
      for (std::size_t cell = 0; cell < hw; ++cell) {
        double* col = &a.cols[(b * hw + cell) * k];
        for (int i = 0; i < c.in; ++i) {
          const double* src = x + (static_cast<std::size_t>(b) * c.in + i) * hw;
          for (int t = 0; t < 9; ++t) {
            const int nb = neighbours_[cell * 9 + t];
            if (nb >= 0) col[i * 9 + t] = src[nb];
          }
        }
      }
    }
    a.z.resize(n * c.out * hw);
    const double* wt = &params_[c.weight];
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < c.out; ++o) {
        double* z = &a.z[(static_cast<std::size_t>(b) * c.out + o) * hw];
        for (std::size_t cell = 0; cell < hw; ++cell) {
          z[cell] = params_[c.bias + o] + detail::dot(wt + o * k, &a.cols[(b * hw + cell) * k], k);
        }
      }
    }
    a.mean.assign(c.out, 0.0);
    a.var.assign(c.out, 0.0);
    a.inv_std.assign(c.out, 0.0);
    const double m = static_cast<double>(n) * hw;
    for (int o = 0; o < c.out; ++o) {
      if (train) {
        double sum = 0.0;
        for (int b = 0; b < n; ++b) {
          const double* z = &a.z[(static_cast<std::size_t>(b) * c.out + o) * hw];
          for (std::size_t cell = 0; cell < hw; ++cell) sum += std::max(z[cell], 0.0);
        }
        const double mean = sum / m;
        double var = 0.0;
        for (int b = 0; b < n; ++b) {
          const double* z = &a.z[(static_cast<std::size_t>(b) * c.out + o) * hw];
          for (std::size_t cell = 0; cell < hw; ++cell) {
            const double d = std::max(z[cell], 0.0) - mean;
            var += d * d;
          }
        }
        a.mean[o] = mean;
        a.var[o] = var / m;
        a.inv_std[o] = 1.0 / std::sqrt(a.var[o] + kBatchNormEpsilon);
      } else {
        a.mean[o] = buffers_[c.running_mean + o];
        a.inv_std[o] = 1.0 / std::sqrt(buffers_[c.running_var + o] + kBatchNormEpsilon);
      }
    }
    a.xhat.resize(a.z.size());
    a.y.resize(a.z.size());
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < c.out; ++o) {
        const std::size_t base = (static_cast<std::size_t>(b) * c.out + o) * hw;
        const double g = params_[c.gamma + o], be = params_[c.beta + o];
        for (std::size_t cell = 0; cell < hw; ++cell) {
          const double xh = (std::max(a.z[base + cell], 0.0) - a.mean[o]) * a.inv_std[o];
          a.xhat[base + cell] = xh;
          a.y[base + cell] = g * xh + be;
        }
      }
    }
  }

  // Backprop through one block in training mode. Writes the input gradient
  // to `dx` when non-null.
  void conv_backward(const ConvBlock& c, int n, const Activations::Block& a,
                     const std::vector<double>& dy, double* dx, std::vector<double>& grad) const {
    const std::size_t k = static_cast<std::size_t>(c.in) * 9;
    const std::size_t hw = static_cast<std::size_t>(cells_);
    const double m = static_cast<double>(n) * hw;
    std::vector<double> dz(dy.size());
    for (int o = 0; o < c.out; ++o) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::size_t base = (static_cast<std::size_t>(b) * c.out + o) * hw;
        for (std::size_t cell = 0; cell < hw; ++cell) {
          sum_dy += dy[base + cell];
          sum_dy_xhat += dy[base + cell] * a.xhat[base + cell];
        }
      }
      grad[c.gamma + o] += sum_dy_xhat;
      grad[c.beta + o] += sum_dy;
      const double scale = params_[c.gamma + o] * a.inv_std[o];
      for (int b = 0; b < n; ++b) {
        const std::size_t base = (static_cast<std::size_t>(b) * c.out + o) * hw;
        for (std::size_t cell = 0; cell < hw; ++cell) {
          const std::size_t i = base + cell;
          const double da = scale * (dy[i] - sum_dy / m - a.xhat[i] * sum_dy_xhat / m);
          dz[i] = a.z[i] > 0.0 ? da : 0.0;
        }
      }
    }
    double* dw = &grad[c.weight];
    const double* wt = &params_[c.weight];
    std::vector<double> dcol(k);
    if (dx) std::fill_n(dx, static_cast<std::size_t>(n) * c.in * hw, 0.0);
    for (int b = 0; b < n; ++b) {
      for (std::size_t cell = 0; cell < hw; ++cell) {
        const double* col = &a.cols[(b * hw + cell) * k];
        std::fill(dcol.begin(), dcol.end(), 0.0);
        for (int o = 0; o < c.out; ++o) {
          const double g = dz[(static_cast<std::size_t>(b) * c.out + o) * hw + cell];
          if (g == 0.0) continue;
          grad[c.bias + o] += g;
          detail::axpy(g, col, dw + o * k, k);
          if (dx) detail::axpy(g, wt + o * k, dcol.data(), k);
        }
        if (!dx) continue;
        for (int i = 0; i < c.in; ++i) {
          double* dst = dx + (static_cast<std::size_t>(b) * c.in + i) * hw;
          for (int t = 0; t < 9; ++t) {
            const int nb = neighbours_[cell * 9 + t];
            if (nb >= 0) dst[nb] += dcol[i * 9 + t];
          }
        }
      }
    }
  }

  void dense_forward(const Dense& d, const double* x, int n, std::vector<double>& out) const {
    out.resize(static_cast<std::size_t>(n) * d.out);
    const double* wt = &params_[d.weight];
    for (int b = 0; b < n; ++b) {
      const double* xb = x + static_cast<std::size_t>(b) * d.in;
      for (int j = 0; j < d.out; ++j) {
        out[static_cast<std::size_t>(b) * d.out + j] =
            params_[d.bias + j] + detail::dot(wt + static_cast<std::size_t>(j) * d.in, xb, d.in);
      }
    }
  }

  void dense_backward(const Dense& d, const double* x, int n, const double* dout, double* dx,
                      std::vector<double>& grad) const {
    const double* wt = &params_[d.weight];
    double* dw = &grad[d.weight];
    for (int b = 0; b < n; ++b) {
      const double* xb = x + static_cast<std::size_t>(b) * d.in;
      double* dxb = dx ? dx + static_cast<std::size_t>(b) * d.in : nullptr;
      for (int j = 0; j < d.out; ++j) {
        const double g = dout[static_cast<std::size_t>(b) * d.out + j];
        if (g == 0.0) continue;
        grad[d.bias + j] += g;
        detail::axpy(g, xb, dw + static_cast<std::size_t>(j) * d.in, d.in);
        if (dxb) detail::axpy(g, wt + static_cast<std::size_t>(j) * d.in, dxb, d.in);
      }
    }
  }

  void forward(const double* input, int n, bool train, Activations& act) const {
    act.batch = n;
    act.blocks.resize(blocks_.size());
    const int trunk = config_.trunk_layers;
    const double* x = input;
    for (int i = 0; i < trunk; ++i) {
      conv_forward(blocks_[i], x, n, train, act.blocks[i]);
      x = act.blocks[i].y.data();
    }
    const double* trunk_out = x;
    conv_forward(blocks_[trunk], trunk_out, n, train, act.blocks[trunk]);
    dense_forward(policy_fc_, act.blocks[trunk].y.data(), n, act.policy_logits);
    dense_forward(hidden_fc_, trunk_out, n, act.hidden_pre);
    act.hidden.resize(act.hidden_pre.size());
    std::transform(act.hidden_pre.begin(), act.hidden_pre.end(), act.hidden.begin(),
                   [](double v) { return std::max(v, 0.0); });
    dense_forward(out_fc_, act.hidden.data(), n, act.head);
  }

  void backward(const Activations& act, const std::vector<double>& d_policy,
                const std::vector<double>& d_head, std::vector<double>& grad) const {
    const int n = act.batch;
    const int trunk = config_.trunk_layers;
    const std::size_t hw = static_cast<std::size_t>(cells_);
    const double* trunk_out = act.blocks[trunk - 1].y.data();

    std::vector<double> d_policy_features(static_cast<std::size_t>(n) * policy_fc_.in, 0.0);
    dense_backward(policy_fc_, act.blocks[trunk].y.data(), n, d_policy.data(),
                   d_policy_features.data(), grad);

    std::vector<double> d_trunk(static_cast<std::size_t>(n) * config_.trunk_channels * hw, 0.0);
    conv_backward(blocks_[trunk], n, act.blocks[trunk], d_policy_features, d_trunk.data(), grad);

    std::vector<double> d_hidden(act.hidden.size(), 0.0);
    dense_backward(out_fc_, act.hidden.data(), n, d_head.data(), d_hidden.data(), grad);
    for (std::size_t i = 0; i < d_hidden.size(); ++i) {
      if (act.hidden_pre[i] <= 0.0) d_hidden[i] = 0.0;
    }
    std::vector<double> d_trunk_from_head(d_trunk.size(), 0.0);
    dense_backward(hidden_fc_, trunk_out, n, d_hidden.data(), d_trunk_from_head.data(), grad);
    for (std::size_t i = 0; i < d_trunk.size(); ++i) d_trunk[i] += d_trunk_from_head[i];

    std::vector<double> dy = std::move(d_trunk);
    for (int i = trunk - 1; i >= 0; --i) {
      const ConvBlock& c = blocks_[i];
      if (i == 0) {
        conv_backward(c, n, act.blocks[i], dy, nullptr, grad);
      } else {
        std::vector<double> dx(static_cast<std::size_t>(n) * c.in * hw, 0.0);
        conv_backward(c, n, act.blocks[i], dy, dx.data(), grad);
        dy = std::move(dx);
      }
    }
  }

  void refresh_running_stats(const Activations& act) {
    const double m = static_cast<double>(act.batch) * cells_;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const ConvBlock& c = blocks_[i];
      for (int o = 0; o < c.out; ++o) {
        const double var = act.blocks[i].var[o];
        double& rm = buffers_[c.running_mean + o];
        double& rv = buffers_[c.running_var + o];
        rm = kBatchNormMomentum * rm + (1.0 - kBatchNormMomentum) * act.blocks[i].mean[o];
        rv = kBatchNormMomentum * rv + (1.0 - kBatchNormMomentum) * var * m / std::max(m - 1.0, 1.0);
      }
    }
  }

  Prediction read_prediction(const Activations& act, int b) const {
    Prediction p;
    p.policy = detail::softmax<kNumMoves>(&act.policy_logits[static_cast<std::size_t>(b) * kNumMoves]);
    const double* out = &act.head[static_cast<std::size_t>(b) * config_.head_outputs()];
    if (config_.head == HeadKind::kValue) {
      p.value = std::tanh(out[0]);
    } else {
      p.outcome.wdl = detail::softmax<3>(out);
      p.outcome.plies_left_win = out[3];
      p.outcome.plies_left_loss = out[4];
    }
    return p;
  }

  NetworkConfig config_;
  int cells_ = 0;
  std::vector<ConvBlock> blocks_;
  Dense policy_fc_, hidden_fc_, out_fc_;
  std::vector<int> neighbours_;
  std::vector<double> params_;
  std::vector<double> buffers_;
};

// SGD with Nesterov momentum: v <- mu v + g; p <- p - lr (g + mu v).
// With a positive max_grad_norm, g is first rescaled so its L2 norm does
// not exceed it.
class NesterovSgd {
 public:
  NesterovSgd(double learning_rate, double momentum, double max_grad_norm = 0.0)
      : learning_rate_(learning_rate), momentum_(momentum), max_grad_norm_(max_grad_norm) {}

  void step(std::span<double> params, const std::vector<double>& grad) {
    if (velocity_.size() != params.size()) velocity_.assign(params.size(), 0.0);
    double scale = 1.0;
    if (max_grad_norm_ > 0.0) {
      const double norm = std::sqrt(detail::dot(grad.data(), grad.data(), grad.size()));
      if (norm > max_grad_norm_) scale = max_grad_norm_ / norm;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = scale * grad[i];
      velocity_[i] = momentum_ * velocity_[i] + g;
      params[i] -= learning_rate_ * (g + momentum_ * velocity_[i]);
    }
  }

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }
  double max_grad_norm() const { return max_grad_norm_; }
  std::vector<double>& velocity() { return velocity_; }
  const std::vector<double>& velocity() const { return velocity_; }

 private:
  double learning_rate_;
  double momentum_;
  double max_grad_norm_;
  std::vector<double> velocity_;
};

// One optimizer step on the mean batch loss, in training mode.
inline LossBreakdown train_step(Network& net, NesterovSgd& opt,
                                std::span<const TrainingExample* const> batch,
                                const LossCoefficients& coeffs) {
  std::vector<double> grad(net.params().size(), 0.0);
  const LossBreakdown loss = net.loss_and_gradient(batch, coeffs, &grad, true);
  opt.step(net.params(), grad);
  return loss;
}

// Weight file: "OPNN", then u32 version, width, height, head kind,
// trunk layers, trunk channels, policy channels, hidden width, parameter
// count, buffer count; then the parameters and buffers as little-endian
// IEEE-754 doubles in the layout order described at the top of this file.
inline constexpr std::uint32_t kWeightFileVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4] = {};
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b, 8);
  }
}

inline void get_doubles(std::istream& in, std::span<double> values) {
  for (double& v : values) {
    unsigned char b[8] = {};
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

}  // namespace detail

inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const NetworkConfig& c = net.config();
  out.write("OPNN", 4);
  for (std::uint32_t v :
       {kWeightFileVersion, static_cast<std::uint32_t>(c.dims.width),
        static_cast<std::uint32_t>(c.dims.height), static_cast<std::uint32_t>(c.head),
        static_cast<std::uint32_t>(c.trunk_layers), static_cast<std::uint32_t>(c.trunk_channels),
        static_cast<std::uint32_t>(c.policy_channels), static_cast<std::uint32_t>(c.hidden),
        static_cast<std::uint32_t>(net.params().size()),
        static_cast<std::uint32_t>(net.buffers().size())}) {
    detail::put_u32(out, v);
  }
  detail::put_doubles(out, net.params());
  detail::put_doubles(out, net.buffers());
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string(magic, 4) != "OPNN") throw std::runtime_error("not a weight file: " + path);
  if (detail::get_u32(in) != kWeightFileVersion) {
    throw std::runtime_error("unsupported weight file version: " + path);
  }
  NetworkConfig c;
  c.dims.width = static_cast<int>(detail::get_u32(in));
  c.dims.height = static_cast<int>(detail::get_u32(in));
  const std::uint32_t head = detail::get_u32(in);
  if (head > 1) throw std::runtime_error("bad head kind in " + path);
  c.head = static_cast<HeadKind>(head);
  c.trunk_layers = static_cast<int>(detail::get_u32(in));
  c.trunk_channels = static_cast<int>(detail::get_u32(in));
  c.policy_channels = static_cast<int>(detail::get_u32(in));
  c.hidden = static_cast<int>(detail::get_u32(in));
  const std::uint32_t n_params = detail::get_u32(in);
  const std::uint32_t n_buffers = detail::get_u32(in);
  if (!in || !c.dims.valid() || c.trunk_layers < 1) {
    throw std::runtime_error("bad weight file header: " + path);
  }
  Network net(c, 0);
  if (n_params != net.params().size() || n_buffers != net.buffers().size()) {
    throw std::runtime_error("weight file layout mismatch: " + path);
  }
  detail::get_doubles(in, net.params());
  detail::get_doubles(in, net.buffers());
  if (!in) throw std::runtime_error("truncated weight file: " + path);
  return net;
}

// Turns an outcome-head prediction into a value for the side to move by
// pushing the three candidate outcomes (win after the predicted plies, loss
// after the predicted plies, draw) through the reward function and weighting
// them by the predicted probabilities. Predicted lengths are rounded to the
// nearest ply and clamped so the game ends between the next ply and the
// timeout.
template <typename RewardFn>
double value_from_outcome(const OutcomeHeadOutput& head, const GameState& state,
                          const RewardFn& reward) {
  const int timeout = state.dims.timeout();
  auto total_plies = [&](double scaled) {
    const long left = std::lround(scaled / kPlyScale);
    const long total = static_cast<long>(state.ply) + left;
    return static_cast<int>(std::clamp<long>(total, state.ply + 1L, timeout));
  };
  const Player me = state.to_move;
  const Outcome win = win_for(me, total_plies(head.plies_left_win));
  const Outcome loss = win_for(opponent(me), total_plies(head.plies_left_loss));
  const Outcome draw{Result::kDraw, timeout};
  return head.wdl[0] * reward(win, me) + head.wdl[1] * reward(draw, me) +
         head.wdl[2] * reward(loss, me);
}

}  // namespace ordinal
