#pragma once

// Four-head actor-critic network over the 10x10x4 local observation.
//
// Architecture (parameters stored flat, in this order):
//
//   conv1   3x3, 4 -> 16 channels, zero padding 1, ReLU        weights [16][4][3][3],  bias [16]
//   conv2   3x3, 16 -> 16 channels, zero padding 1, ReLU       weights [16][16][3][3], bias [16]
//   pool    2x2 max, stride 2 -> 16x5x5, flattened channel-major (400)
//   concat  goal vector (row, col) appended -> 402
//   dense   402 -> 128, ReLU                                    weights [128][402],     bias [128]
//   heads   128 -> 8                                            weights [8][128],       bias [8]
//           outputs 0..4 policy logits (N, E, S, W, Stay), 5 value, 6 blocking logit,
//           7 on-goal logit
//
// 55,528 parameters in total.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "world.hpp"

namespace crowdmapf {

namespace net {

inline constexpr int kSide = kObsSide;           // 10
inline constexpr int kPadSide = kSide + 2;       // 12
inline constexpr int kInChannels = kObsChannels; // 4
inline constexpr int kConvChannels = 16;
inline constexpr int kPoolSide = kSide / 2;      // 5
inline constexpr int kPooled = kConvChannels * kPoolSide * kPoolSide;  // 400
inline constexpr int kDenseIn = kPooled + 2;     // 402
inline constexpr int kHidden = 128;
inline constexpr int kHeads = 8;
inline constexpr int kValueHead = 5;
inline constexpr int kBlockingHead = 6;
inline constexpr int kOnGoalHead = 7;

struct Block {
  std::string_view name;
  std::size_t offset;
  std::size_t size;
};

inline constexpr std::size_t kConv1W = kConvChannels * kInChannels * 9;
inline constexpr std::size_t kConv2W = kConvChannels * kConvChannels * 9;
inline constexpr std::size_t kDenseW = static_cast<std::size_t>(kHidden) * kDenseIn;
inline constexpr std::size_t kHeadW = kHeads * kHidden;

inline constexpr std::array<Block, 8> kLayout = [] {
  std::array<Block, 8> blocks{{{"conv1.weight", 0, kConv1W},
                               {"conv1.bias", 0, kConvChannels},
                               {"conv2.weight", 0, kConv2W},
                               {"conv2.bias", 0, kConvChannels},
                               {"dense.weight", 0, kDenseW},
                               {"dense.bias", 0, kHidden},
                               {"heads.weight", 0, kHeadW},
                               {"heads.bias", 0, kHeads}}};
  std::size_t off = 0;
  for (auto& b : blocks) {
    b.offset = off;
    off += b.size;
  }
  return blocks;
}();

inline constexpr std::size_t kParamCount = kLayout.back().offset + kLayout.back().size;
static_assert(kParamCount == 55'528);

enum BlockId { kB_Conv1W, kB_Conv1B, kB_Conv2W, kB_Conv2B, kB_DenseW, kB_DenseB, kB_HeadW, kB_HeadB };

/// Name of the layout block holding flat index `i`.
inline std::string_view block_of(std::size_t i) {
  for (const auto& b : kLayout)
    if (i >= b.offset && i < b.offset + b.size) return b.name;
  return "out-of-range";
}

}  // namespace net

/// Flat parameter-shaped vector. The tag keeps parameters and gradients distinct types.
template <class Tag>
class FlatVector {
 public:
  FlatVector() : values_(net::kParamCount, 0.0) {}
  explicit FlatVector(std::vector<double> v) : values_(std::move(v)) {
    if (values_.size() != net::kParamCount)
      throw std::invalid_argument("parameter layout mismatch: expected " +
                                  std::to_string(net::kParamCount) + " values, got " +
                                  std::to_string(values_.size()));
  }

  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<double> block(net::BlockId b) {
    const auto& blk = net::kLayout[static_cast<std::size_t>(b)];
    return std::span<double>(values_).subspan(blk.offset, blk.size);
  }
  std::span<const double> block(net::BlockId b) const {
    const auto& blk = net::kLayout[static_cast<std::size_t>(b)];
    return std::span<const double>(values_).subspan(blk.offset, blk.size);
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  FlatVector& operator+=(const FlatVector& o) {
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  FlatVector& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }
  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const FlatVector&, const FlatVector&) = default;

 private:
  std::vector<double> values_;
};

struct ParamsTag {};
struct GradsTag {};
using PolicyParams = FlatVector<ParamsTag>;
using Gradients = FlatVector<GradsTag>;

/// He-normal initialisation for conv/dense layers, small-scale heads, zero biases.
inline PolicyParams init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PolicyParams p;
  auto fill = [&](net::BlockId b, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : p.block(b)) v = dist(rng);
  };
  fill(net::kB_Conv1W, std::sqrt(2.0 / (net::kInChannels * 9)));
  fill(net::kB_Conv2W, std::sqrt(2.0 / (net::kConvChannels * 9)));
  fill(net::kB_DenseW, std::sqrt(2.0 / net::kDenseIn));
  fill(net::kB_HeadW, 0.01);
  return p;
}

struct ForwardOutput {
  std::array<double, kNumActions> logits{};
  double value = 0.0;
  double blocking_logit = 0.0;
  double on_goal_logit = 0.0;
  double p_block = 0.5;
  double p_on_goal = 0.5;

  friend bool operator==(const ForwardOutput&, const ForwardOutput&) = default;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Softmax restricted to `mask`; masked-out actions get probability 0.
inline std::array<double, kNumActions> masked_softmax(const std::array<double, kNumActions>& logits,
                                                      ActionSet mask = ActionSet::all()) {
  if (mask.empty()) throw std::invalid_argument("masked_softmax: empty mask");
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kNumActions; ++i)
    if (mask.contains(action_from_index(i))) mx = std::max(mx, logits[static_cast<std::size_t>(i)]);
  std::array<double, kNumActions> p{};
  double sum = 0.0;
  for (int i = 0; i < kNumActions; ++i) {
    auto ui = static_cast<std::size_t>(i);
    p[ui] = mask.contains(action_from_index(i)) ? std::exp(logits[ui] - mx) : 0.0;
    sum += p[ui];
  }
  for (double& v : p) v /= sum;
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward kernels
// ---------------------------------------------------------------------------

namespace net {

using PadMap = std::array<double, kPadSide * kPadSide>;
using Map = std::array<double, kSide * kSide>;

/// Every intermediate needed by the backward pass.
struct Activations {
  std::array<PadMap, kInChannels> input{};      // zero-padded observation
  std::array<PadMap, kConvChannels> conv1{};    // post-ReLU, zero-padded (conv2 input)
  std::array<Map, kConvChannels> conv2{};       // post-ReLU
  std::array<double, kDenseIn> dense_in{};      // pooled features + goal vector
  std::array<int, kPooled> pool_arg{};          // flat conv2 index of each pooled max
  std::array<double, kHidden> hidden{};         // post-ReLU
  std::array<double, kHeads> out{};
};

/// Dot product with eight independent partial sums so the loop vectorises without
/// reassociation flags. Summation order is fixed, so results are reproducible.
inline double dot(const double* a, const double* b, int n) {
  double lanes[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  double s = 0.0;
  for (; i < n; ++i) s += a[i] * b[i];
  for (double l : lanes) s += l;
  return s;
}

inline void require_finite(std::span<const double> v, std::string_view layer) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::runtime_error("non-finite value in layer " + std::string(layer));
}

template <std::size_t N>
std::span<const double> flat(const std::array<std::array<double, N>, kConvChannels>& a) {
  return {a.front().data(), a.size() * N};
}

/// out[oc] += conv3x3(in_pad[ic], w[oc][ic]) over all channels (valid convolution on padded input).
template <int InCh, class Out>
inline void conv3x3(const std::array<PadMap, InCh>& in, const double* w, const double* bias, Out& out,
                    int out_stride, int out_offset) {
  for (int oc = 0; oc < kConvChannels; ++oc) {
    double acc[kSide * kSide];
    std::fill(std::begin(acc), std::end(acc), bias[oc]);
    for (int ic = 0; ic < InCh; ++ic) {
      const double* src = in[static_cast<std::size_t>(ic)].data();
      const double* k = w + (oc * InCh + ic) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = k[ky * 3 + kx];
          if (wv == 0.0) continue;
          for (int y = 0; y < kSide; ++y) {
            const double* row = src + (y + ky) * kPadSide + kx;
            double* dst = acc + y * kSide;
            for (int x = 0; x < kSide; ++x) dst[x] += wv * row[x];
          }
        }
    }
    double* dst = out[static_cast<std::size_t>(oc)].data();
    for (int y = 0; y < kSide; ++y)
      for (int x = 0; x < kSide; ++x)
        dst[(y + out_offset) * out_stride + x + out_offset] = std::max(acc[y * kSide + x], 0.0);  // NaN passes
  }
}

inline void forward_pass(const PolicyParams& p, const Observation& obs, Activations& a) {
  for (int ch = 0; ch < kInChannels; ++ch) {
    auto& pad = a.input[static_cast<std::size_t>(ch)];
    pad.fill(0.0);
    for (int y = 0; y < kSide; ++y)
      for (int x = 0; x < kSide; ++x) pad[static_cast<std::size_t>((y + 1) * kPadSide + x + 1)] = obs.at(ch, y, x);
  }
  for (auto& m : a.conv1) m.fill(0.0);
  conv3x3<kInChannels>(a.input, p.block(kB_Conv1W).data(), p.block(kB_Conv1B).data(), a.conv1, kPadSide, 1);
  conv3x3<kConvChannels>(a.conv1, p.block(kB_Conv2W).data(), p.block(kB_Conv2B).data(), a.conv2, kSide, 0);

  for (int c = 0; c < kConvChannels; ++c) {
    const auto& m = a.conv2[static_cast<std::size_t>(c)];
    for (int py = 0; py < kPoolSide; ++py)
      for (int px = 0; px < kPoolSide; ++px) {
        int best = (2 * py) * kSide + 2 * px;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            int idx = (2 * py + dy) * kSide + 2 * px + dx;
            if (m[static_cast<std::size_t>(idx)] > m[static_cast<std::size_t>(best)]) best = idx;
          }
        auto slot = static_cast<std::size_t>(c * kPoolSide * kPoolSide + py * kPoolSide + px);
        a.pool_arg[slot] = c * kSide * kSide + best;
        a.dense_in[slot] = m[static_cast<std::size_t>(best)];
      }
  }
  a.dense_in[kPooled] = obs.goal_vec[0];
  a.dense_in[kPooled + 1] = obs.goal_vec[1];

  const double* wd = p.block(kB_DenseW).data();
  const double* bd = p.block(kB_DenseB).data();
  for (int h = 0; h < kHidden; ++h) {
    const double* row = wd + static_cast<std::size_t>(h) * kDenseIn;
    double s = bd[h] + dot(row, a.dense_in.data(), kDenseIn);
    a.hidden[static_cast<std::size_t>(h)] = std::max(s, 0.0);  // NaN passes
  }
  const double* wh = p.block(kB_HeadW).data();
  const double* bh = p.block(kB_HeadB).data();
  for (int o = 0; o < kHeads; ++o) {
    const double* row = wh + o * kHidden;
    a.out[static_cast<std::size_t>(o)] = bh[o] + dot(row, a.hidden.data(), kHidden);
  }
}

/// Accumulates parameter gradients given d(loss)/d(head outputs).
inline void backward_pass(const PolicyParams& p, const Activations& a,
                          const std::array<double, kHeads>& d_out, Gradients& g) {
  // heads
  std::array<double, kHidden> d_hidden{};
  {
    double* gw = g.block(kB_HeadW).data();
    double* gb = g.block(kB_HeadB).data();
    const double* wh = p.block(kB_HeadW).data();
    for (int o = 0; o < kHeads; ++o) {
      const double d = d_out[static_cast<std::size_t>(o)];
      if (d == 0.0) continue;
      gb[o] += d;
      double* grow = gw + o * kHidden;
      const double* wrow = wh + o * kHidden;
      for (int h = 0; h < kHidden; ++h) {
        grow[h] += d * a.hidden[static_cast<std::size_t>(h)];
        d_hidden[static_cast<std::size_t>(h)] += d * wrow[h];
      }
    }
  }
  // dense (ReLU gate)
  std::array<double, kDenseIn> d_dense_in{};
  {
    double* gw = g.block(kB_DenseW).data();
    double* gb = g.block(kB_DenseB).data();
    const double* wd = p.block(kB_DenseW).data();
    for (int h = 0; h < kHidden; ++h) {
      if (a.hidden[static_cast<std::size_t>(h)] <= 0.0) continue;
      const double d = d_hidden[static_cast<std::size_t>(h)];
      if (d == 0.0) continue;
      gb[h] += d;
      double* grow = gw + static_cast<std::size_t>(h) * kDenseIn;
      const double* wrow = wd + static_cast<std::size_t>(h) * kDenseIn;
      for (int i = 0; i < kDenseIn; ++i) {
        grow[i] += d * a.dense_in[static_cast<std::size_t>(i)];
        d_dense_in[static_cast<std::size_t>(i)] += d * wrow[i];
      }
    }
  }
  // max-pool routes each pooled gradient to its argmax; conv2 ReLU gate
  std::array<Map, kConvChannels> d_conv2{};
  for (int s = 0; s < kPooled; ++s) {
    int flat_idx = a.pool_arg[static_cast<std::size_t>(s)];
    int c = flat_idx / (kSide * kSide), idx = flat_idx % (kSide * kSide);
    if (a.conv2[static_cast<std::size_t>(c)][static_cast<std::size_t>(idx)] > 0.0)
      d_conv2[static_cast<std::size_t>(c)][static_cast<std::size_t>(idx)] += d_dense_in[static_cast<std::size_t>(s)];
  }
  // conv2 -> conv1 activations. Max-pooling leaves at most one live position per 2x2 cell,
  // so iterate over the non-zero output gradients only.
  std::array<PadMap, kConvChannels> d_conv1{};
  {
    double* gw = g.block(kB_Conv2W).data();
    double* gb = g.block(kB_Conv2B).data();
    const double* w = p.block(kB_Conv2W).data();
    for (int oc = 0; oc < kConvChannels; ++oc) {
      const double* d = d_conv2[static_cast<std::size_t>(oc)].data();
      for (int pos = 0; pos < kSide * kSide; ++pos) {
        const double dv = d[pos];
        if (dv == 0.0) continue;
        gb[oc] += dv;
        const int base = (pos / kSide) * kPadSide + pos % kSide;  // top-left of the 3x3 patch
        for (int ic = 0; ic < kConvChannels; ++ic) {
          const double* src = a.conv1[static_cast<std::size_t>(ic)].data() + base;
          double* dsrc = d_conv1[static_cast<std::size_t>(ic)].data() + base;
          double* gk = gw + (oc * kConvChannels + ic) * 9;
          const double* k = w + (oc * kConvChannels + ic) * 9;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              gk[ky * 3 + kx] += dv * src[ky * kPadSide + kx];
              dsrc[ky * kPadSide + kx] += dv * k[ky * 3 + kx];
            }
        }
      }
    }
  }
  // conv1 (ReLU gate on its padded activations; padding cells are never active)
  {
    double* gw = g.block(kB_Conv1W).data();
    double* gb = g.block(kB_Conv1B).data();
    for (int oc = 0; oc < kConvChannels; ++oc) {
      std::array<double, kSide * kSide> d{};
      const auto& act = a.conv1[static_cast<std::size_t>(oc)];
      const auto& dact = d_conv1[static_cast<std::size_t>(oc)];
      bool any = false;
      double bsum = 0.0;
      for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
          auto pidx = static_cast<std::size_t>((y + 1) * kPadSide + x + 1);
          double v = act[pidx] > 0.0 ? dact[pidx] : 0.0;
          d[static_cast<std::size_t>(y * kSide + x)] = v;
          bsum += v;
          any = any || v != 0.0;
        }
      if (!any) continue;
      gb[oc] += bsum;
      for (int ic = 0; ic < kInChannels; ++ic) {
        const double* src = a.input[static_cast<std::size_t>(ic)].data();
        double* gk = gw + (oc * kInChannels + ic) * 9;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            double acc[kSide] = {};
            for (int y = 0; y < kSide; ++y) {
              const double* row = src + (y + ky) * kPadSide + kx;
              const double* dy = d.data() + y * kSide;
              for (int x = 0; x < kSide; ++x) acc[x] += dy[x] * row[x];
            }
            double sum = 0.0;
            for (double v : acc) sum += v;
            gk[ky * 3 + kx] += sum;
          }
      }
    }
  }
}

}  // namespace net

inline ForwardOutput output_from(const net::Activations& a) {
  ForwardOutput out;
  for (int i = 0; i < kNumActions; ++i) out.logits[static_cast<std::size_t>(i)] = a.out[static_cast<std::size_t>(i)];
  out.value = a.out[net::kValueHead];
  out.blocking_logit = a.out[net::kBlockingHead];
  out.on_goal_logit = a.out[net::kOnGoalHead];
  out.p_block = sigmoid(out.blocking_logit);
  out.p_on_goal = sigmoid(out.on_goal_logit);
  return out;
}

/// Forward pass reusing caller-owned scratch space.
inline ForwardOutput forward(const PolicyParams& params, const Observation& obs, net::Activations& scratch) {
  if (params.size() != net::kParamCount) throw std::invalid_argument("forward: parameter layout mismatch");
  net::forward_pass(params, obs, scratch);
  return output_from(scratch);
}

inline ForwardOutput forward(const PolicyParams& params, const Observation& obs) {
  auto scratch = std::make_unique<net::Activations>();
  return forward(params, obs, *scratch);
}

// ---------------------------------------------------------------------------
// Action selection
// ---------------------------------------------------------------------------

enum class ActMode { Sample, Greedy };

/// Masked, renormalised softmax; Greedy takes the most probable action (lowest index on ties).
template <class Rng>
Action act(const ForwardOutput& out, ActionSet mask, Rng& rng, ActMode mode) {
  auto p = masked_softmax(out.logits, mask);
  if (mode == ActMode::Greedy) {
    int best = -1;
    for (int i = 0; i < kNumActions; ++i) {
      if (!mask.contains(action_from_index(i))) continue;
      if (best < 0 || p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(best)]) best = i;
    }
    return action_from_index(best);
  }
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  int last_valid = 0;
  for (int i = 0; i < kNumActions; ++i) {
    if (!mask.contains(action_from_index(i))) continue;
    last_valid = i;
    cum += p[static_cast<std::size_t>(i)];
    if (u < cum) return action_from_index(i);
  }
  return action_from_index(last_valid);
}

// ---------------------------------------------------------------------------
// Returns and advantages
// ---------------------------------------------------------------------------

/// R_t = r_t + gamma * R_{t+1}, seeded with R_T = bootstrap.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma,
                                              double bootstrap) {
  if (rewards.empty()) throw std::invalid_argument("discounted_returns: empty rewards");
  std::vector<double> R(rewards.size());
  double next = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    next = rewards[t] + gamma * next;
    R[t] = next;
  }
  return R;
}

/// k-step advantage to the end of the trajectory: sum_i gamma^i r_{t+i} + gamma^k V_end - V(o_t).
inline std::vector<double> advantage(std::span<const double> rewards, std::span<const double> values,
                                     double gamma, double bootstrap) {
  if (rewards.size() != values.size()) throw std::invalid_argument("advantage: length mismatch");
  auto R = discounted_returns(rewards, gamma, bootstrap);
  for (std::size_t t = 0; t < R.size(); ++t) R[t] -= values[t];
  return R;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct Hyper {
  double gamma = 0.95;
  double entropy_weight = 0.01;
  double learning_rate = 2e-4;
  double grad_clip = 40.0;
  double w_value = 0.5;
  double w_blocking = 0.5;
  double w_on_goal = 0.5;
  double w_bc = 1.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("Hyper: gamma must lie in (0,1)");
    if (!(learning_rate > 0.0) || !(grad_clip > 0.0) || entropy_weight < 0.0)
      throw std::invalid_argument("Hyper: rates must be positive");
  }

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

struct TrajectoryStep {
  Observation obs;  // carries goal_vec
  Action action = Action::Stay;
  double reward = 0.0;
  double value = 0.0;  // critic estimate recorded during the rollout
  ActionSet mask = ActionSet::all();
  bool blocking = false;
  bool on_goal = false;
  bool demo = false;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double bootstrap = 0.0;  // V of the state after the last step, 0 when the episode terminated

  std::size_t size() const { return steps.size(); }
};

/// total = w_value * value_loss + policy_loss + w_blocking * blocking_loss
///       + w_on_goal * on_goal_loss + w_bc * bc_loss,
/// where policy_loss already contains the entropy bonus (-entropy_weight * entropy).
struct LossReport {
  double value_loss = 0.0;
  double policy_loss = 0.0;
  double entropy = 0.0;
  double blocking_loss = 0.0;
  double on_goal_loss = 0.0;
  double bc_loss = 0.0;
  double total = 0.0;
};

namespace detail {

struct StepTargets {
  std::vector<double> returns;
  std::vector<double> advantages;
};

inline StepTargets targets(const Trajectory& traj, const Hyper& hyper) {
  std::vector<double> r, v;
  r.reserve(traj.size());
  v.reserve(traj.size());
  for (const auto& s : traj.steps) {
    r.push_back(s.reward);
    v.push_back(s.value);
  }
  return {discounted_returns(r, hyper.gamma, traj.bootstrap), advantage(r, v, hyper.gamma, traj.bootstrap)};
}

/// Loss contributions of one step and d(loss)/d(head outputs).
inline void step_loss(const net::Activations& a, const TrajectoryStep& s, double ret, double adv,
                      const Hyper& hyper, LossReport& rep, std::array<double, net::kHeads>* d_out) {
  ForwardOutput out = output_from(a);
  auto p = masked_softmax(out.logits, s.mask);
  const auto ua = static_cast<std::size_t>(action_index(s.action));
  if (!s.mask.contains(s.action)) throw std::invalid_argument("trajectory action outside its valid mask");
  const double logp = std::log(p[ua]);

  const double verr = out.value - ret;
  rep.value_loss += verr * verr;

  std::array<double, kNumActions> d_logits{};
  if (s.demo) {
    rep.bc_loss -= logp;
    for (std::size_t i = 0; i < kNumActions; ++i) d_logits[i] += hyper.w_bc * (p[i] - (i == ua ? 1.0 : 0.0));
  } else {
    double h = 0.0;
    for (double pi : p)
      if (pi > 0.0) h -= pi * std::log(pi);
    rep.entropy += h;
    rep.policy_loss += -logp * adv - hyper.entropy_weight * h;
    for (std::size_t i = 0; i < kNumActions; ++i) {
      if (p[i] <= 0.0) continue;
      d_logits[i] += adv * (p[i] - (i == ua ? 1.0 : 0.0));
      d_logits[i] += hyper.entropy_weight * p[i] * (std::log(p[i]) + h);
    }
  }

  const double yb = s.blocking ? 1.0 : 0.0, yg = s.on_goal ? 1.0 : 0.0;
  rep.blocking_loss += softplus(out.blocking_logit) - yb * out.blocking_logit;
  rep.on_goal_loss += softplus(out.on_goal_logit) - yg * out.on_goal_logit;

  if (d_out) {
    for (int i = 0; i < kNumActions; ++i) (*d_out)[static_cast<std::size_t>(i)] = d_logits[static_cast<std::size_t>(i)];
    (*d_out)[net::kValueHead] = hyper.w_value * 2.0 * verr;
    (*d_out)[net::kBlockingHead] = hyper.w_blocking * (out.p_block - yb);
    (*d_out)[net::kOnGoalHead] = hyper.w_on_goal * (out.p_on_goal - yg);
  }
}

inline void finish(LossReport& rep, const Hyper& hyper) {
  rep.total = hyper.w_value * rep.value_loss + rep.policy_loss + hyper.w_blocking * rep.blocking_loss +
              hyper.w_on_goal * rep.on_goal_loss + hyper.w_bc * rep.bc_loss;
}

}  // namespace detail

/// Losses summed over the trajectory, in time order. Advantages use the rollout's recorded
/// values and carry no gradient. Policy-gradient and entropy terms apply to exploration steps,
/// behaviour cloning to demonstration steps; the remaining heads train on every step.
inline LossReport compute_losses(const PolicyParams& params, const Trajectory& traj, const Hyper& hyper) {
  if (traj.steps.empty()) throw std::invalid_argument("compute_losses: empty trajectory");
  auto tg = detail::targets(traj, hyper);
  auto acts = std::make_unique<net::Activations>();
  LossReport rep;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    net::forward_pass(params, traj.steps[t].obs, *acts);
    detail::step_loss(*acts, traj.steps[t], tg.returns[t], tg.advantages[t], hyper, rep, nullptr);
  }
  detail::finish(rep, hyper);
  return rep;
}

/// Exact gradient of compute_losses(...).total. Throws naming the layer if any intermediate or
/// gradient block is non-finite.
inline Gradients backward(const PolicyParams& params, const Trajectory& traj, const Hyper& hyper,
                          LossReport* report = nullptr) {
  if (traj.steps.empty()) throw std::invalid_argument("backward: empty trajectory");
  if (params.size() != net::kParamCount) throw std::invalid_argument("backward: parameter layout mismatch");
  auto tg = detail::targets(traj, hyper);
  auto acts = std::make_unique<net::Activations>();
  Gradients g;
  LossReport rep;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    net::forward_pass(params, traj.steps[t].obs, *acts);
    net::require_finite(net::flat(acts->conv1), "conv1");
    net::require_finite(net::flat(acts->conv2), "conv2");
    net::require_finite(acts->hidden, "dense");
    net::require_finite(acts->out, "heads");
    std::array<double, net::kHeads> d_out{};
    detail::step_loss(*acts, traj.steps[t], tg.returns[t], tg.advantages[t], hyper, rep, &d_out);
    net::require_finite(d_out, "loss");
    net::backward_pass(params, *acts, d_out, g);
  }
  for (const auto& blk : net::kLayout)
    net::require_finite(std::span<const double>(g.values()).subspan(blk.offset, blk.size), blk.name);
  detail::finish(rep, hyper);
  if (report) *report = rep;
  return g;
}

/// Global-norm clip to hyper.grad_clip, then one plain gradient-descent step.
inline PolicyParams apply_gradients(const PolicyParams& global, const Gradients& grads, const Hyper& hyper) {
  if (global.size() != grads.size()) throw std::invalid_argument("apply_gradients: layout mismatch");
  const double norm = grads.norm();
  const double scale = norm > hyper.grad_clip ? hyper.grad_clip / norm : 1.0;
  PolicyParams next = global;
  const double step = hyper.learning_rate * scale;
  for (std::size_t i = 0; i < next.size(); ++i) next[i] -= step * grads[i];
  return next;
}

}  // namespace crowdmapf
