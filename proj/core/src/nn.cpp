// Copyright 2026 The pixsig Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pixsig/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/rng.hpp"
#include "pixsig/tensor_io.hpp"

namespace pixsig::nn {

namespace {

constexpr std::size_t kNoParams = static_cast<std::size_t>(-1);

struct LayerPlan {
  Layer layer;
  ImageShape in;
  ImageShape out;
  std::size_t first_param = kNoParams;
};

struct ConvGeom {
  std::size_t in_h, in_w, in_c;
  std::size_t out_h, out_w, out_c;
  std::size_t kernel, stride, pad;

  std::size_t patch() const { return kernel * kernel * in_c; }
  std::size_t rows(std::size_t n) const { return n * out_h * out_w; }
};

ConvGeom conv_geom(ImageShape in, std::size_t out_c, std::size_t kernel, std::size_t stride) {
  const std::size_t pad = kernel / 2;
  if (kernel == 0 || stride == 0) throw ConfigError("conv kernel and stride must be positive");
  if (in.height + 2 * pad < kernel || in.width + 2 * pad < kernel) {
    throw ConfigError("conv kernel " + std::to_string(kernel) + " larger than padded input " + in.str());
  }
  return ConvGeom{in.height, in.width, in.channels,
                  (in.height + 2 * pad - kernel) / stride + 1,
                  (in.width + 2 * pad - kernel) / stride + 1,
                  out_c, kernel, stride, pad};
}

std::vector<LayerPlan> make_plan(const ArchSpec& arch) {
  if (arch.input.size() == 0) throw ConfigError("architecture input shape is empty");
  if (arch.num_classes < 2) throw ConfigError("architecture needs at least two classes");
  std::vector<LayerPlan> plans;
  ImageShape cur = arch.input;
  std::size_t next_param = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    LayerPlan p{arch.layers[i], cur, cur, kNoParams};
    const std::string where = "layer " + std::to_string(i) + " (" + layer_name(p.layer) + ")";
    if (const auto* c = std::get_if<Conv>(&p.layer)) {
      if (c->out_channels == 0) throw ConfigError(where + ": zero output channels");
      auto g = conv_geom(cur, c->out_channels, c->kernel, c->stride);
      p.out = {g.out_h, g.out_w, g.out_c};
      p.first_param = next_param;
      next_param += 2;
    } else if (const auto* d = std::get_if<Dense>(&p.layer)) {
      if (cur.height != 1 || cur.width != 1) throw ConfigError(where + ": dense input " + cur.str() + " is not flat");
      if (d->units == 0) throw ConfigError(where + ": zero units");
      p.out = {1, 1, d->units};
      p.first_param = next_param;
      next_param += 2;
    } else if (const auto* m = std::get_if<MaxPool>(&p.layer)) {
      if (m->size == 0 || cur.height < m->size || cur.width < m->size) {
        throw ConfigError(where + ": pool window does not fit " + cur.str());
      }
      p.out = {cur.height / m->size, cur.width / m->size, cur.channels};
    } else if (std::holds_alternative<Flatten>(p.layer)) {
      p.out = {1, 1, cur.size()};
    } else if (const auto* r = std::get_if<Residual>(&p.layer)) {
      if (r->channels != cur.channels) {
        throw ConfigError(where + ": residual block expects " + std::to_string(r->channels) +
                          " channels, got " + cur.str());
      }
      p.first_param = next_param;
      next_param += 4;
    }
    cur = p.out;
    plans.push_back(p);
  }
  if (cur.height != 1 || cur.width != 1 || cur.channels != arch.num_classes) {
    throw ConfigError("final layer output " + cur.str() + " does not match " +
                      std::to_string(arch.num_classes) + " classes");
  }
  return plans;
}

// Eigen picks its vectorized summation order from buffer alignment, so every buffer
// it touches is allocated aligned to keep results bit-reproducible.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstRowVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using RowVecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

/// Valid kernel-column range [lo, hi) for output column `ox`; columns outside it read zero padding.
inline std::pair<std::size_t, std::size_t> kernel_span(std::size_t o, const ConvGeom& g, std::size_t in_extent) {
  const std::ptrdiff_t origin = static_cast<std::ptrdiff_t>(o * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -origin);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.kernel),
                                                     static_cast<std::ptrdiff_t>(in_extent) - origin);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

template <typename T>
void im2col(const T* x, std::size_t n, const ConvGeom& g, T* cols) {
  const std::size_t patch = g.patch();
  const std::size_t span_len = g.kernel * g.in_c;
  for (std::size_t b = 0; b < n; ++b) {
    const T* img = x + b * g.in_h * g.in_w * g.in_c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      const auto [ky_lo, ky_hi] = kernel_span(oy, g, g.in_h);
      T* row = cols + (b * g.out_h + oy) * g.out_w * patch;
      for (std::size_t ox = 0; ox < g.out_w; ++ox, row += patch) {
        const auto [kx_lo, kx_hi] = kernel_span(ox, g, g.in_w);
        if (ky_lo == 0 && ky_hi == g.kernel && kx_lo == 0 && kx_hi == g.kernel) {
          // Interior: every tap reads real pixels.
          const T* src = img + ((oy * g.stride - g.pad) * g.in_w + ox * g.stride - g.pad) * g.in_c;
          for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            const T* s = src + ky * g.in_w * g.in_c;
            T* d = row + ky * span_len;
            for (std::size_t i = 0; i < span_len; ++i) d[i] = s[i];
          }
          continue;
        }
        for (std::size_t i = 0; i < patch; ++i) row[i] = T(0);
        for (std::size_t ky = ky_lo; ky < ky_hi; ++ky) {
          const std::size_t iy = oy * g.stride + ky - g.pad;
          const std::size_t ix0 = ox * g.stride + kx_lo - g.pad;
          const T* s = img + (iy * g.in_w + ix0) * g.in_c;
          T* d = row + ky * span_len + kx_lo * g.in_c;
          const std::size_t len = (kx_hi - kx_lo) * g.in_c;
          for (std::size_t i = 0; i < len; ++i) d[i] = s[i];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t n, const ConvGeom& g, T* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < n; ++b) {
    T* img = dx + b * g.in_h * g.in_w * g.in_c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T* row = cols + ((b * g.out_h + oy) * g.out_w + ox) * patch;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            const T* src = row + (ky * g.kernel + kx) * g.in_c;
            T* dst = img + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const T* x, std::size_t n, const ConvGeom& g, const T* w, const T* bias, T* y,
                  Buffer<T>& cols) {
  const std::size_t rows = g.rows(n);
  cols.resize(rows * g.patch());
  im2col(x, n, g, cols.data());
  ConstMatMap<T> colm(cols.data(), rows, g.patch());
  ConstMatMap<T> wm(w, g.out_c, g.patch());
  MatMap<T> ym(y, rows, g.out_c);
  ym.noalias() = colm * wm.transpose();
  ym.rowwise() += ConstRowVecMap<T>(bias, g.out_c);
}

template <typename T>
void conv_backward(const T* x, std::size_t n, const ConvGeom& g, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                   Buffer<T>& cols) {
  const std::size_t rows = g.rows(n);
  cols.resize(rows * g.patch());
  im2col(x, n, g, cols.data());
  ConstMatMap<T> colm(cols.data(), rows, g.patch());
  ConstMatMap<T> dym(dy, rows, g.out_c);
  MatMap<T> dwm(dw, g.out_c, g.patch());
  dwm.noalias() += dym.transpose() * colm;
  RowVecMap<T>(dbias, g.out_c) += dym.colwise().sum();
  if (dx != nullptr) {
    ConstMatMap<T> wm(w, g.out_c, g.patch());
    MatMap<T> dcols(cols.data(), rows, g.patch());
    dcols.noalias() = dym * wm;
    std::fill(dx, dx + n * g.in_h * g.in_w * g.in_c, T(0));
    col2im_add(cols.data(), n, g, dx);
  }
}

template <typename T>
void relu_inplace(std::span<T> v) {
  for (auto& e : v) e = e > T(0) ? e : T(0);
}

/// Exponent-bit test; vectorizes where a std::isfinite loop does not.
template <typename T>
bool all_finite(std::span<const T> values) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits mask = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
  Bits bad = 0;
  for (const T v : values) bad |= static_cast<Bits>((std::bit_cast<Bits>(v) & mask) == mask);
  return bad == 0;
}

/// Per-layer scratch and cached intermediates for backpropagation.
template <typename T>
struct LayerState {
  Buffer<T> cols;
  std::vector<std::uint32_t> argmax;
  Buffer<T> mid;  // residual: relu(conv1(x))
  Buffer<T> tmp;
};

template <typename T>
class Engine {
 public:
  Engine(const std::vector<LayerPlan>& plans, const std::vector<std::span<const T>>& params) : plans_(plans) {
    for (const auto& p : params) params_.emplace_back(p.begin(), p.end());
  }

  void layer_forward(std::size_t li, const T* x, std::size_t n, Buffer<T>& y, LayerState<T>& st) const {
    const LayerPlan& p = plans_[li];
    y.resize(n * p.out.size());
    if (const auto* c = std::get_if<Conv>(&p.layer)) {
      auto g = conv_geom(p.in, c->out_channels, c->kernel, c->stride);
      conv_forward(x, n, g, param(p, 0), param(p, 1), y.data(), st.cols);
    } else if (const auto* d = std::get_if<Dense>(&p.layer)) {
      const std::size_t in = p.in.size();
      ConstMatMap<T> xm(x, n, in);
      ConstMatMap<T> wm(param(p, 0), d->units, in);
      MatMap<T> ym(y.data(), n, d->units);
      ym.noalias() = xm * wm.transpose();
      ym.rowwise() += ConstRowVecMap<T>(param(p, 1), d->units);
    } else if (std::holds_alternative<Relu>(p.layer)) {
      std::copy(x, x + y.size(), y.begin());
      relu_inplace(std::span<T>(y));
    } else if (const auto* m = std::get_if<MaxPool>(&p.layer)) {
      maxpool_forward(p, m->size, x, n, y.data(), st.argmax);
    } else if (std::holds_alternative<Flatten>(p.layer)) {
      std::copy(x, x + y.size(), y.begin());
    } else if (std::holds_alternative<Residual>(p.layer)) {
      auto g = conv_geom(p.in, p.in.channels, 3, 1);
      st.mid.resize(y.size());
      conv_forward(x, n, g, param(p, 0), param(p, 1), st.mid.data(), st.cols);
      relu_inplace(std::span<T>(st.mid));
      conv_forward(st.mid.data(), n, g, param(p, 2), param(p, 3), y.data(), st.cols);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(T(0), y[i] + x[i]);
    }
    if (!all_finite(std::span<const T>(y))) {
      throw NumericError("non-finite activation in layer " + std::to_string(li) + " (" + layer_name(p.layer) + ")");
    }
  }

  /// Accumulates parameter gradients into `grads`; writes the input gradient to dx when requested.
  void layer_backward(std::size_t li, const T* x, const T* y, std::size_t n, const T* dy, Buffer<T>* dx,
                      std::vector<Buffer<T>>& grads, LayerState<T>& st) const {
    const LayerPlan& p = plans_[li];
    const std::size_t in_size = n * p.in.size();
    const std::size_t out_size = n * p.out.size();
    if (dx) dx->assign(in_size, T(0));
    if (const auto* c = std::get_if<Conv>(&p.layer)) {
      auto g = conv_geom(p.in, c->out_channels, c->kernel, c->stride);
      conv_backward(x, n, g, param(p, 0), dy, dx ? dx->data() : nullptr, grads[p.first_param].data(),
                    grads[p.first_param + 1].data(), st.cols);
    } else if (const auto* d = std::get_if<Dense>(&p.layer)) {
      const std::size_t in = p.in.size();
      ConstMatMap<T> xm(x, n, in);
      ConstMatMap<T> dym(dy, n, d->units);
      MatMap<T>(grads[p.first_param].data(), d->units, in).noalias() += dym.transpose() * xm;
      RowVecMap<T>(grads[p.first_param + 1].data(), d->units) += dym.colwise().sum();
      if (dx) MatMap<T>(dx->data(), n, in).noalias() = dym * ConstMatMap<T>(param(p, 0), d->units, in);
    } else if (std::holds_alternative<Relu>(p.layer)) {
      if (dx) {
        for (std::size_t i = 0; i < out_size; ++i) (*dx)[i] = y[i] > T(0) ? dy[i] : T(0);
      }
    } else if (std::holds_alternative<MaxPool>(p.layer)) {
      if (dx) {
        for (std::size_t i = 0; i < out_size; ++i) (*dx)[st.argmax[i]] += dy[i];
      }
    } else if (std::holds_alternative<Flatten>(p.layer)) {
      if (dx) std::copy(dy, dy + out_size, dx->begin());
    } else if (std::holds_alternative<Residual>(p.layer)) {
      auto g = conv_geom(p.in, p.in.channels, 3, 1);
      Buffer<T> ds(out_size);
      for (std::size_t i = 0; i < out_size; ++i) ds[i] = y[i] > T(0) ? dy[i] : T(0);
      Buffer<T> dmid(out_size);
      conv_backward(st.mid.data(), n, g, param(p, 2), ds.data(), dmid.data(), grads[p.first_param + 2].data(),
                    grads[p.first_param + 3].data(), st.cols);
      for (std::size_t i = 0; i < out_size; ++i) {
        if (st.mid[i] <= T(0)) dmid[i] = T(0);
      }
      Buffer<T> dx1(in_size);
      conv_backward(x, n, g, param(p, 0), dmid.data(), dx1.data(), grads[p.first_param].data(),
                    grads[p.first_param + 1].data(), st.cols);
      if (dx) {
        for (std::size_t i = 0; i < in_size; ++i) (*dx)[i] = ds[i] + dx1[i];
      }
    }
  }

  /// Logits for n images; keeps every layer's output when `outputs` is given.
  Buffer<T> logits(const T* input, std::size_t n, std::vector<Buffer<T>>* outputs,
                        std::vector<LayerState<T>>* states) const {
    if (outputs) {
      const T* cur = input;  // caller stages the input in an aligned buffer
      for (std::size_t li = 0; li < plans_.size(); ++li) {
        layer_forward(li, cur, n, (*outputs)[li], (*states)[li]);
        cur = (*outputs)[li].data();
      }
      return outputs->back();
    }
    // Inference reuses per-thread buffers; large transient allocations otherwise dominate small models.
    thread_local LayerState<T> scratch;
    thread_local Buffer<T> staged, ping, pong;
    staged.assign(input, input + n * plans_.front().in.size());
    const T* cur = staged.data();
    Buffer<T>* dst = &ping;
    for (std::size_t li = 0; li < plans_.size(); ++li) {
      layer_forward(li, cur, n, *dst, scratch);
      cur = dst->data();
      dst = dst == &ping ? &pong : &ping;
    }
    const std::size_t out = n * plans_.back().out.size();
    return Buffer<T>(cur, cur + out);
  }

  std::size_t layers() const { return plans_.size(); }

 private:
  const T* param(const LayerPlan& p, std::size_t k) const { return params_[p.first_param + k].data(); }

  void maxpool_forward(const LayerPlan& p, std::size_t size, const T* x, std::size_t n, T* y,
                       std::vector<std::uint32_t>& argmax) const {
    const auto& in = p.in;
    const auto& out = p.out;
    argmax.resize(n * out.size());
    std::size_t o = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = b * in.size();
      for (std::size_t oy = 0; oy < out.height; ++oy) {
        for (std::size_t ox = 0; ox < out.width; ++ox) {
          for (std::size_t c = 0; c < out.channels; ++c, ++o) {
            std::size_t best = base + ((oy * size) * in.width + ox * size) * in.channels + c;
            for (std::size_t ky = 0; ky < size; ++ky) {
              for (std::size_t kx = 0; kx < size; ++kx) {
                const std::size_t idx = base + ((oy * size + ky) * in.width + ox * size + kx) * in.channels + c;
                if (x[idx] > x[best]) best = idx;
              }
            }
            y[o] = x[best];
            argmax[o] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
  }

  const std::vector<LayerPlan>& plans_;
  std::vector<Buffer<T>> params_;
};

template <typename T>
void softmax_rows(std::span<T> logits, std::size_t k) {
  const std::size_t n = logits.size() / k;
  for (std::size_t r = 0; r < n; ++r) {
    T* row = logits.data() + r * k;
    const T mx = *std::max_element(row, row + k);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
  }
}

template <typename T, typename A>
std::vector<std::span<const T>> spans_of(const std::vector<std::vector<T, A>>& v) {
  return {v.begin(), v.end()};
}

template <typename T>
std::vector<std::vector<T>> unaligned(const std::vector<Buffer<T>>& v) {
  std::vector<std::vector<T>> out;
  out.reserve(v.size());
  for (const auto& b : v) out.emplace_back(b.begin(), b.end());
  return out;
}

std::vector<std::span<const float>> spans_of(const ModelParams& params) {
  std::vector<std::span<const float>> out;
  for (const auto& t : params.tensors) out.emplace_back(t.values);
  return out;
}

void check_batch(const ModelParams& params, std::span<const float> batch, std::size_t count) {
  if (batch.size() != count * params.arch.input.size()) {
    throw ConfigError("batch of " + std::to_string(batch.size()) + " values does not hold " + std::to_string(count) +
                      " images of " + params.arch.input.str());
  }
}

template <typename T>
struct Pass {
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<Buffer<T>> grads;
};

/// Forward, softmax cross-entropy and backward over one batch.
template <typename T>
Pass<T> forward_backward(const std::vector<LayerPlan>& plans, const std::vector<std::span<const T>>& params,
                         const std::vector<std::size_t>& param_sizes, const T* input, std::span<const std::uint32_t> labels,
                         std::size_t num_classes) {
  const std::size_t n = labels.size();
  const Buffer<T> staged(input, input + n * plans.front().in.size());
  input = staged.data();
  Engine<T> engine(plans, params);
  std::vector<Buffer<T>> outputs(plans.size());
  std::vector<LayerState<T>> states(plans.size());
  Buffer<T> probs = engine.logits(input, n, &outputs, &states);
  softmax_rows<T>(probs, num_classes);

  Pass<T> pass;
  Buffer<T> dy(probs.size());
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = probs.data() + r * num_classes;
    const std::size_t label = labels[r];
    if (label >= num_classes) throw PreconditionError("label " + std::to_string(label) + " out of range");
    pass.loss -= std::log(std::max<double>(row[label], 1e-300));
    if (std::max_element(row, row + num_classes) - row == static_cast<std::ptrdiff_t>(label)) ++pass.correct;
    for (std::size_t j = 0; j < num_classes; ++j) {
      dy[r * num_classes + j] = (row[j] - (j == label ? T(1) : T(0))) / static_cast<T>(n);
    }
  }
  pass.loss /= static_cast<double>(n);

  pass.grads.resize(param_sizes.size());
  for (std::size_t i = 0; i < param_sizes.size(); ++i) pass.grads[i].assign(param_sizes[i], T(0));
  Buffer<T> dx;
  for (std::size_t li = plans.size(); li-- > 0;) {
    const T* x = li == 0 ? input : outputs[li - 1].data();
    engine.layer_backward(li, x, outputs[li].data(), n, dy.data(), li == 0 ? nullptr : &dx, pass.grads, states[li]);
    if (li > 0) dy.swap(dx);
  }
  return pass;
}

std::vector<std::size_t> param_sizes(const ModelParams& params) {
  std::vector<std::size_t> out;
  for (const auto& t : params.tensors) out.push_back(t.values.size());
  return out;
}

std::uint32_t get_u32(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned()) {
    throw ConfigError(std::string("layer field '") + key + "' must be a non-negative integer");
  }
  return j.at(key).get<std::uint32_t>();
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv>) return "conv";
        if constexpr (std::is_same_v<L, Dense>) return "dense";
        if constexpr (std::is_same_v<L, Relu>) return "relu";
        if constexpr (std::is_same_v<L, MaxPool>) return "maxpool";
        if constexpr (std::is_same_v<L, Flatten>) return "flatten";
        if constexpr (std::is_same_v<L, Residual>) return "residual";
      },
      layer);
}

std::vector<ImageShape> infer_shapes(const ArchSpec& arch) {
  auto plans = make_plan(arch);
  std::vector<ImageShape> shapes{arch.input};
  for (const auto& p : plans) shapes.push_back(p.out);
  return shapes;
}

ArchSpec preset(std::string_view name, ImageShape input, std::size_t num_classes) {
  const auto k = static_cast<std::uint32_t>(num_classes);
  ArchSpec a{std::string(name), {}, input, num_classes};
  if (name == "mini-lenet") {
    a.layers = {Conv{6, 3, 1}, Relu{}, MaxPool{2}, Conv{12, 3, 1}, Relu{}, MaxPool{2},
                Flatten{}, Dense{32}, Relu{}, Dense{k}};
  } else if (name == "mini-resnet") {
    a.layers = {Conv{8, 3, 1}, Relu{}, MaxPool{2}, Residual{8}, Residual{8}, MaxPool{2}, Flatten{}, Dense{k}};
  } else if (name == "mini-vgg") {
    a.layers = {Conv{4, 3, 1}, Relu{}, Conv{4, 3, 1}, Relu{}, MaxPool{2},
                Conv{8, 3, 1}, Relu{}, Conv{8, 3, 1}, Relu{}, MaxPool{2},
                Flatten{}, Dense{32}, Relu{}, Dense{k}};
  } else if (name == "mlp") {
    a.layers = {Flatten{}, Dense{64}, Relu{}, Dense{k}};
  } else if (name == "detector-cnn") {
    a.layers = {Conv{8, 3, 1}, Relu{}, MaxPool{2}, Conv{16, 3, 1}, Relu{}, MaxPool{2},
                Flatten{}, Dense{32}, Relu{}, Dense{k}};
  } else {
    throw ConfigError("unknown architecture preset '" + std::string(name) + "'");
  }
  infer_shapes(a);
  return a;
}

std::vector<std::string> preset_names() { return {"mini-lenet", "mini-resnet", "mini-vgg", "mlp", "detector-cnn"}; }

nlohmann::json to_json(const ArchSpec& arch) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : arch.layers) {
    nlohmann::json l{{"type", layer_name(layer)}};
    if (const auto* c = std::get_if<Conv>(&layer)) {
      l["out_channels"] = c->out_channels;
      l["kernel"] = c->kernel;
      l["stride"] = c->stride;
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      l["units"] = d->units;
    } else if (const auto* m = std::get_if<MaxPool>(&layer)) {
      l["size"] = m->size;
    } else if (const auto* r = std::get_if<Residual>(&layer)) {
      l["channels"] = r->channels;
    }
    layers.push_back(std::move(l));
  }
  return {{"name", arch.name},
          {"input_shape", {arch.input.height, arch.input.width, arch.input.channels}},
          {"num_classes", arch.num_classes},
          {"layers", std::move(layers)}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  try {
    ArchSpec a;
    a.name = j.value("name", "");
    const auto& in = j.at("input_shape");
    if (!in.is_array() || in.size() != 3) throw ConfigError("input_shape must be [H, W, C]");
    a.input = {in[0].get<std::size_t>(), in[1].get<std::size_t>(), in[2].get<std::size_t>()};
    a.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "conv") {
        a.layers.push_back(Conv{get_u32(l, "out_channels"), get_u32(l, "kernel"), get_u32(l, "stride")});
      } else if (type == "dense") {
        a.layers.push_back(Dense{get_u32(l, "units")});
      } else if (type == "relu") {
        a.layers.push_back(Relu{});
      } else if (type == "maxpool") {
        a.layers.push_back(MaxPool{get_u32(l, "size")});
      } else if (type == "flatten") {
        a.layers.push_back(Flatten{});
      } else if (type == "residual") {
        a.layers.push_back(Residual{get_u32(l, "channels")});
      } else {
        throw ConfigError("unknown layer type '" + type + "'");
      }
    }
    infer_shapes(a);
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture: ") + e.what());
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

std::string ModelParams::fingerprint() const {
  Fnv1a h;
  h.update(to_json(arch).dump());
  for (const auto& t : tensors) h.update(std::span<const float>(t.values));
  return h.hex();
}

std::vector<ParamTensor> parameter_layout(const ArchSpec& arch) {
  std::vector<ParamTensor> out;
  auto add = [&](std::string name, std::vector<std::uint32_t> shape) {
    ParamTensor t{std::move(name), std::move(shape), {}};
    t.values.assign(Tensor<float>::element_count(t.shape), 0.0f);
    out.push_back(std::move(t));
  };
  const auto plans = make_plan(arch);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    const std::string prefix = "l" + std::to_string(i) + ".";
    const auto in_c = static_cast<std::uint32_t>(p.in.channels);
    if (const auto* c = std::get_if<Conv>(&p.layer)) {
      add(prefix + "weight", {c->out_channels, c->kernel, c->kernel, in_c});
      add(prefix + "bias", {c->out_channels});
    } else if (const auto* d = std::get_if<Dense>(&p.layer)) {
      add(prefix + "weight", {d->units, static_cast<std::uint32_t>(p.in.size())});
      add(prefix + "bias", {d->units});
    } else if (const auto* r = std::get_if<Residual>(&p.layer)) {
      add(prefix + "conv1.weight", {r->channels, 3, 3, in_c});
      add(prefix + "conv1.bias", {r->channels});
      add(prefix + "conv2.weight", {r->channels, 3, 3, r->channels});
      add(prefix + "conv2.bias", {r->channels});
    }
  }
  return out;
}

ModelParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  ModelParams params{arch, seed, parameter_layout(arch)};
  Rng rng(derive_seed(seed, "init"));
  for (auto& t : params.tensors) {
    if (t.shape.size() < 2) continue;  // biases start at zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.values) v = static_cast<float>(uniform(rng, -limit, limit));
  }
  return params;
}

std::vector<float> forward(const ModelParams& params, std::span<const float> batch, std::size_t count) {
  check_batch(params, batch, count);
  const auto plans = make_plan(params.arch);
  Engine<float> engine(plans, spans_of(params));
  auto out = engine.logits(batch.data(), count, nullptr, nullptr);
  softmax_rows<float>(out, params.arch.num_classes);
  return {out.begin(), out.end()};
}

std::vector<std::uint32_t> predict(const ModelParams& params, std::span<const float> batch, std::size_t count) {
  const auto probs = forward(params, batch, count);
  const std::size_t k = params.arch.num_classes;
  std::vector<std::uint32_t> out(count);
  for (std::size_t r = 0; r < count; ++r) {
    const float* row = probs.data() + r * k;
    out[r] = static_cast<std::uint32_t>(std::max_element(row, row + k) - row);
  }
  return out;
}

double accuracy(const ModelParams& params, const LabeledDataset& data, std::size_t chunk) {
  if (data.empty()) throw PreconditionError("accuracy of an empty dataset is undefined");
  if (data.shape != params.arch.input) throw ConfigError("dataset shape " + data.shape.str() + " does not match model input");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    auto batch = std::span<const float>(data.pixels).subspan(start * data.shape.size(), n * data.shape.size());
    const auto pred = predict(params, batch, n);
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == data.labels[start + i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

LossGrad loss_and_gradients(const ModelParams& params, std::span<const float> batch,
                            std::span<const std::uint32_t> labels) {
  check_batch(params, batch, labels.size());
  if (labels.empty()) throw PreconditionError("empty batch");
  const auto plans = make_plan(params.arch);
  std::vector<std::vector<double>> wide;
  for (const auto& t : params.tensors) wide.emplace_back(t.values.begin(), t.values.end());
  std::vector<double> input(batch.begin(), batch.end());
  auto pass = forward_backward<double>(plans, spans_of(wide), param_sizes(params), input.data(), labels,
                                       params.arch.num_classes);
  return {pass.loss, unaligned(pass.grads)};
}

OptimizerState OptimizerState::for_params(const ModelParams& params, AdamConfig config) {
  OptimizerState s{config, 0, {}, {}};
  for (const auto& t : params.tensors) {
    s.first_moment.emplace_back(t.values.size(), 0.0f);
    s.second_moment.emplace_back(t.values.size(), 0.0f);
  }
  return s;
}

void adam_step(ModelParams& params, std::span<const std::vector<float>> grads, OptimizerState& state) {
  if (grads.size() != params.tensors.size() || state.first_moment.size() != params.tensors.size()) {
    throw ConfigError("gradient/moment tensors do not match parameters");
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double lr_t = c.learning_rate * std::sqrt(1.0 - std::pow(c.beta2, t)) / (1.0 - std::pow(c.beta1, t));
  const auto b1 = static_cast<float>(c.beta1);
  const auto b2 = static_cast<float>(c.beta2);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& w = params.tensors[i].values;
    const auto& g = grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (g.size() != w.size()) throw ConfigError("gradient shape mismatch for " + params.tensors[i].name);
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      w[j] -= static_cast<float>(lr_t * m[j] / (std::sqrt(static_cast<double>(v[j])) + c.epsilon));
      if (!std::isfinite(w[j])) throw NumericError("non-finite parameter in " + params.tensors[i].name + " after Adam step");
    }
  }
}

TrainResult train(const ArchSpec& arch, const LabeledDataset& data, const LabeledDataset* heldout,
                  const TrainConfig& config, std::uint64_t seed) {
  if (data.empty()) throw PreconditionError("cannot train on an empty dataset");
  if (data.shape != arch.input) throw ConfigError("dataset shape " + data.shape.str() + " does not match arch input " + arch.input.str());
  for (auto l : data.labels) {
    if (l >= arch.num_classes) throw PreconditionError("label " + std::to_string(l) + " out of range");
  }
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");

  const auto plans = make_plan(arch);
  TrainResult result{init_params(arch, seed), {}, false};
  auto& params = result.params;
  auto state = OptimizerState::for_params(params, config.adam);
  const auto sizes = param_sizes(params);
  const std::size_t img = data.shape.size();

  Rng rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<float> batch;
  std::vector<std::uint32_t> labels;
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      batch.resize(n * img);
      labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto src = data.image(order[start + i]);
        std::copy(src.begin(), src.end(), batch.begin() + static_cast<std::ptrdiff_t>(i * img));
        labels[i] = data.labels[order[start + i]];
      }
      auto pass = forward_backward<float>(plans, spans_of(params), sizes, batch.data(), labels, arch.num_classes);
      if (!std::isfinite(pass.loss)) throw NumericError("non-finite training loss");
      epoch_loss += pass.loss * static_cast<double>(n);
      adam_step(params, unaligned(pass.grads), state);
    }
    result.metrics.epochs = epoch + 1;
  }
  result.metrics.final_loss = epoch_loss / static_cast<double>(data.size());
  result.metrics.train_accuracy = accuracy(params, data);
  result.metrics.heldout_accuracy = heldout ? accuracy(params, *heldout) : result.metrics.train_accuracy;
  result.reached_floor = result.metrics.heldout_accuracy >= config.accuracy_floor;
  return result;
}

double grad_check(const ModelParams& params, std::span<const float> batch, std::span<const std::uint32_t> labels,
                  const GradCheckOptions& options) {
  auto analytic = loss_and_gradients(params, batch, labels);
  if (options.tamper) options.tamper(analytic.grads);

  const auto plans = make_plan(params.arch);
  std::vector<std::vector<double>> wide;
  for (const auto& t : params.tensors) wide.emplace_back(t.values.begin(), t.values.end());
  const std::vector<double> input(batch.begin(), batch.end());
  const std::size_t k = params.arch.num_classes;
  auto loss_at = [&]() {
    Engine<double> engine(plans, spans_of(wide));
    auto probs = engine.logits(input.data(), labels.size(), nullptr, nullptr);
    softmax_rows<double>(probs, k);
    double loss = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) loss -= std::log(std::max(probs[r * k + labels[r]], 1e-300));
    return loss / static_cast<double>(labels.size());
  };

  Rng rng(derive_seed(options.seed, "grad-check"));
  double worst = 0.0;
  for (std::size_t t = 0; t < wide.size(); ++t) {
    std::vector<std::size_t> idx(wide[t].size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(idx), rng);
    idx.resize(std::min(idx.size(), options.samples_per_tensor));
    for (auto i : idx) {
      const double saved = wide[t][i];
      wide[t][i] = saved + options.step;
      const double up = loss_at();
      wide[t][i] = saved - options.step;
      const double down = loss_at();
      wide[t][i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.grads[t][i];
      worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8));
    }
  }
  return worst;
}

void save_model(const std::filesystem::path& dir, const ModelParams& params, const nlohmann::json& metrics) {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<float> blob;
  blob.reserve(params.parameter_count());
  for (const auto& t : params.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    blob.insert(blob.end(), t.values.begin(), t.values.end());
  }
  const auto count = static_cast<std::uint32_t>(blob.size());
  save_tensor(dir / "model.ops", Tensor<float>({count}, std::move(blob)));
  nlohmann::json manifest{{"arch", to_json(params.arch)},
                          {"seed", params.seed},
                          {"tensors", tensors},
                          {"fingerprint", params.fingerprint()},
                          {"metrics", metrics.is_null() ? nlohmann::json::object() : metrics}};
  const auto text = manifest.dump(2);
  write_file_bytes(dir / "model.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ModelParams load_model(const std::filesystem::path& dir) {
  nlohmann::json arch;
  std::uint64_t seed = 0;
  try {
    std::ifstream in(dir / "model.json");
    if (!in) throw FormatError("cannot open " + (dir / "model.json").string(), 0);
    const auto manifest = nlohmann::json::parse(in);
    arch = manifest.at("arch");
    seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed model manifest " + (dir / "model.json").string() + ": " + e.what(), 0);
  }
  ModelParams params{arch_from_json(arch), seed, {}};
  params.tensors = parameter_layout(params.arch);
  const auto blob = load_tensor_f32(dir / "model.ops");
  if (blob.size() != params.parameter_count()) {
    throw FormatError("weights blob holds " + std::to_string(blob.size()) + " values, architecture needs " +
                          std::to_string(params.parameter_count()),
                      6);
  }
  std::size_t offset = 0;
  for (auto& t : params.tensors) {
    std::copy_n(blob.data.begin() + static_cast<std::ptrdiff_t>(offset), t.values.size(), t.values.begin());
    offset += t.values.size();
  }
  return params;
}

}  // namespace pixsig::nn
