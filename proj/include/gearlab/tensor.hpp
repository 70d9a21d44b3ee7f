#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
// Operations record backward closures on a Tape; passing a null Tape runs
// the same forward math without recording (inference mode).
//
// Convolution and dense layers lower to dgemm; everything else is plain
// loops. All math is double precision so gradient checks against central
// finite differences hold to tight tolerances.

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace gearlab {

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data when participating in AD
  bool requires_grad = false;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<std::size_t>(t->size()), 0.0);
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  return t;
}

inline TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data,
                             bool requires_grad = false) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  if (static_cast<std::int64_t>(t->data.size()) != t->size())
    throw TensorError("tensor data length does not match shape product");
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  return t;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

enum class Act { relu, swish };
enum class Pool { max, avg };

// Records operations in topological order; backward() replays them in
// reverse exactly once.
class Tape {
 public:
  void record(std::function<void()> bw) { ops_.push_back(std::move(bw)); }

  void backward(const TensorPtr& loss) {
    if (consumed_)
      throw TensorError("backward called twice on the same tape without reset");
    if (loss->size() != 1)
      throw TensorError("backward requires a scalar loss, got shape " +
                        shape_str(loss->shape));
    if (!loss->requires_grad)
      throw TensorError("loss is detached from the tape (requires_grad is false)");
    if (ops_.empty())
      throw TensorError("loss is detached from the tape (no recorded operations)");
    consumed_ = true;
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void reset() {
    ops_.clear();
    consumed_ = false;
  }

  bool consumed() const { return consumed_; }
  std::size_t num_ops() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

namespace detail {

inline bool track(Tape* tape, std::initializer_list<const TensorPtr*> ins) {
  if (!tape) return false;
  for (auto* p : ins)
    if (*p && (*p)->requires_grad) return true;
  return false;
}

// Gather K*K patches of one sample into col[C*K*K][OH*OW].
inline void im2col(const double* in, int C, int H, int W, int K, int stride,
                   int pad, int OH, int OW, double* col) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        double* row = col + ((static_cast<std::int64_t>(c) * K + ky) * K + kx) *
                                (static_cast<std::int64_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          int iy = oh * stride + ky - pad;
          for (int ow = 0; ow < OW; ++ow) {
            int ix = ow * stride + kx - pad;
            row[oh * OW + ow] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    ? in[(static_cast<std::int64_t>(c) * H + iy) * W + ix]
                                    : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* col, int C, int H, int W, int K, int stride,
                       int pad, int OH, int OW, double* din) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const double* row = col + ((static_cast<std::int64_t>(c) * K + ky) * K + kx) *
                                      (static_cast<std::int64_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          int iy = oh * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (int ow = 0; ow < OW; ++ow) {
            int ix = ow * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            din[(static_cast<std::int64_t>(c) * H + iy) * W + ix] += row[oh * OW + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// input [N,C,H,W], weight [F,C,K,K], bias [F] -> [N,F,OH,OW]
inline TensorPtr conv2d(Tape* tape, const TensorPtr& input, const TensorPtr& weight,
                        const TensorPtr& bias, int stride = 1, int pad = -1) {
  if (input->shape.size() != 4)
    throw TensorError("conv2d: input must be rank 4, got " + shape_str(input->shape));
  if (weight->shape.size() != 4 || weight->shape[2] != weight->shape[3])
    throw TensorError("conv2d: weight must be [F,C,K,K], got " + shape_str(weight->shape));
  const int N = input->shape[0], C = input->shape[1], H = input->shape[2], W = input->shape[3];
  const int F = weight->shape[0], K = weight->shape[2];
  if (weight->shape[1] != C)
    throw TensorError("conv2d: input channel axis (" + std::to_string(C) +
                      ") does not match weight channel axis (" +
                      std::to_string(weight->shape[1]) + ")");
  if (bias->size() != F)
    throw TensorError("conv2d: bias axis (" + std::to_string(bias->size()) +
                      ") does not match filter axis (" + std::to_string(F) + ")");
  if (K % 2 == 0) throw TensorError("conv2d: kernel size must be odd");
  if (pad < 0) pad = (K - 1) / 2;
  const int OH = (H + 2 * pad - K) / stride + 1;
  const int OW = (W + 2 * pad - K) / stride + 1;
  if (OH < 1 || OW < 1)
    throw TensorError("conv2d: spatial extent collapses below 1");

  const std::int64_t ckk = static_cast<std::int64_t>(C) * K * K;
  const std::int64_t ohw = static_cast<std::int64_t>(OH) * OW;
  auto out = make_tensor({N, F, OH, OW});
  std::vector<double> col(static_cast<std::size_t>(ckk * ohw));
  for (int n = 0; n < N; ++n) {
    const double* in_n = input->data.data() + static_cast<std::int64_t>(n) * C * H * W;
    double* out_n = out->data.data() + static_cast<std::int64_t>(n) * F * ohw;
    detail::im2col(in_n, C, H, W, K, stride, pad, OH, OW, col.data());
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, F, static_cast<int>(ohw),
                static_cast<int>(ckk), 1.0, weight->data.data(), static_cast<int>(ckk),
                col.data(), static_cast<int>(ohw), 0.0, out_n, static_cast<int>(ohw));
    for (int f = 0; f < F; ++f) {
      double b = bias->data[f];
      double* row = out_n + static_cast<std::int64_t>(f) * ohw;
      for (std::int64_t i = 0; i < ohw; ++i) row[i] += b;
    }
  }

  if (detail::track(tape, {&input, &weight, &bias})) {
    out->requires_grad = true;
    out->ensure_grad();
    if (input->requires_grad) input->ensure_grad();
    if (weight->requires_grad) weight->ensure_grad();
    if (bias->requires_grad) bias->ensure_grad();
    tape->record([=]() {
      std::vector<double> colb(static_cast<std::size_t>(ckk * ohw));
      std::vector<double> dcol;
      if (input->requires_grad) dcol.resize(static_cast<std::size_t>(ckk * ohw));
      for (int n = 0; n < N; ++n) {
        const double* in_n = input->data.data() + static_cast<std::int64_t>(n) * C * H * W;
        const double* go_n = out->grad.data() + static_cast<std::int64_t>(n) * F * ohw;
        if (weight->requires_grad || input->requires_grad)
          detail::im2col(in_n, C, H, W, K, stride, pad, OH, OW, colb.data());
        if (weight->requires_grad) {
          cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, F, static_cast<int>(ckk),
                      static_cast<int>(ohw), 1.0, go_n, static_cast<int>(ohw), colb.data(),
                      static_cast<int>(ohw), 1.0, weight->grad.data(), static_cast<int>(ckk));
        }
        if (input->requires_grad) {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(ckk),
                      static_cast<int>(ohw), F, 1.0, weight->data.data(), static_cast<int>(ckk),
                      go_n, static_cast<int>(ohw), 0.0, dcol.data(), static_cast<int>(ohw));
          detail::col2im_add(dcol.data(), C, H, W, K, stride, pad, OH, OW,
                             input->grad.data() + static_cast<std::int64_t>(n) * C * H * W);
        }
        if (bias->requires_grad) {
          for (int f = 0; f < F; ++f) {
            const double* row = go_n + static_cast<std::int64_t>(f) * ohw;
            double s = 0.0;
            for (std::int64_t i = 0; i < ohw; ++i) s += row[i];
            bias->grad[f] += s;
          }
        }
      }
    });
  }
  return out;
}

// input [N,D], weight [D,C], bias [C] -> [N,C]
inline TensorPtr dense(Tape* tape, const TensorPtr& input, const TensorPtr& weight,
                       const TensorPtr& bias) {
  if (input->shape.size() != 2 || weight->shape.size() != 2)
    throw TensorError("dense: expected rank-2 input and weight, got " +
                      shape_str(input->shape) + " and " + shape_str(weight->shape));
  const int N = input->shape[0], D = input->shape[1];
  const int C = weight->shape[1];
  if (weight->shape[0] != D)
    throw TensorError("dense: inner axes disagree, input " + shape_str(input->shape) +
                      " vs weight " + shape_str(weight->shape));
  if (bias->size() != C)
    throw TensorError("dense: bias axis (" + std::to_string(bias->size()) +
                      ") does not match output axis (" + std::to_string(C) + ")");
  auto out = make_tensor({N, C});
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, N, C, D, 1.0,
              input->data.data(), D, weight->data.data(), C, 0.0, out->data.data(), C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) out->data[static_cast<std::int64_t>(n) * C + c] += bias->data[c];

  if (detail::track(tape, {&input, &weight, &bias})) {
    out->requires_grad = true;
    out->ensure_grad();
    if (input->requires_grad) input->ensure_grad();
    if (weight->requires_grad) weight->ensure_grad();
    if (bias->requires_grad) bias->ensure_grad();
    tape->record([=]() {
      if (input->requires_grad)
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, N, D, C, 1.0, out->grad.data(),
                    C, weight->data.data(), C, 1.0, input->grad.data(), D);
      if (weight->requires_grad)
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, D, C, N, 1.0, input->data.data(),
                    D, out->grad.data(), C, 1.0, weight->grad.data(), C);
      if (bias->requires_grad)
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c)
            bias->grad[c] += out->grad[static_cast<std::int64_t>(n) * C + c];
    });
  }
  return out;
}

inline TensorPtr activation(Tape* tape, const TensorPtr& input, Act kind) {
  auto out = make_tensor(input->shape);
  const std::int64_t n = input->size();
  if (kind == Act::relu) {
    for (std::int64_t i = 0; i < n; ++i)
      out->data[i] = input->data[i] > 0.0 ? input->data[i] : 0.0;
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      double x = input->data[i];
      out->data[i] = x / (1.0 + std::exp(-x));
    }
  }
  if (detail::track(tape, {&input})) {
    out->requires_grad = true;
    out->ensure_grad();
    input->ensure_grad();
    tape->record([=]() {
      if (kind == Act::relu) {
        for (std::int64_t i = 0; i < n; ++i)
          if (input->data[i] > 0.0) input->grad[i] += out->grad[i];
      } else {
        for (std::int64_t i = 0; i < n; ++i) {
          double x = input->data[i];
          double s = 1.0 / (1.0 + std::exp(-x));
          input->grad[i] += out->grad[i] * (s + x * s * (1.0 - s));
        }
      }
    });
  }
  return out;
}

// non-overlapping 2x2 windows; max routes gradient to the first (row-major)
// maximal element
inline TensorPtr pool2x2(Tape* tape, const TensorPtr& input, Pool kind) {
  if (input->shape.size() != 4)
    throw TensorError("pool2x2: input must be rank 4, got " + shape_str(input->shape));
  const int N = input->shape[0], C = input->shape[1], H = input->shape[2], W = input->shape[3];
  if (H % 2 != 0 || W % 2 != 0)
    throw TensorError("pool2x2: spatial extents must be even, got H=" + std::to_string(H) +
                      " W=" + std::to_string(W));
  const int OH = H / 2, OW = W / 2;
  auto out = make_tensor({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::int32_t>>();
  if (kind == Pool::max) argmax->resize(out->data.size());
  for (int nc = 0; nc < N * C; ++nc) {
    const double* in_p = input->data.data() + static_cast<std::int64_t>(nc) * H * W;
    double* out_p = out->data.data() + static_cast<std::int64_t>(nc) * OH * OW;
    for (int oh = 0; oh < OH; ++oh) {
      for (int ow = 0; ow < OW; ++ow) {
        int base = (2 * oh) * W + 2 * ow;
        int idx[4] = {base, base + 1, base + W, base + W + 1};
        if (kind == Pool::max) {
          int best = idx[0];
          for (int k = 1; k < 4; ++k)
            if (in_p[idx[k]] > in_p[best]) best = idx[k];
          out_p[oh * OW + ow] = in_p[best];
          (*argmax)[static_cast<std::int64_t>(nc) * OH * OW + oh * OW + ow] = best;
        } else {
          out_p[oh * OW + ow] =
              0.25 * (in_p[idx[0]] + in_p[idx[1]] + in_p[idx[2]] + in_p[idx[3]]);
        }
      }
    }
  }
  if (detail::track(tape, {&input})) {
    out->requires_grad = true;
    out->ensure_grad();
    input->ensure_grad();
    tape->record([=]() {
      for (int nc = 0; nc < N * C; ++nc) {
        double* gin = input->grad.data() + static_cast<std::int64_t>(nc) * H * W;
        const double* gout = out->grad.data() + static_cast<std::int64_t>(nc) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          for (int ow = 0; ow < OW; ++ow) {
            double g = gout[oh * OW + ow];
            if (kind == Pool::max) {
              gin[(*argmax)[static_cast<std::int64_t>(nc) * OH * OW + oh * OW + ow]] += g;
            } else {
              int base = (2 * oh) * W + 2 * ow;
              gin[base] += 0.25 * g;
              gin[base + 1] += 0.25 * g;
              gin[base + W] += 0.25 * g;
              gin[base + W + 1] += 0.25 * g;
            }
          }
        }
      }
    });
  }
  return out;
}

// [N,C,H,W] -> [N, C*H*W]
inline TensorPtr flatten(Tape* tape, const TensorPtr& input) {
  const int N = input->shape[0];
  const int D = static_cast<int>(input->size() / N);
  auto out = make_tensor({N, D}, input->data);
  if (detail::track(tape, {&input})) {
    out->requires_grad = true;
    out->ensure_grad();
    input->ensure_grad();
    tape->record([=]() {
      for (std::size_t i = 0; i < input->grad.size(); ++i) input->grad[i] += out->grad[i];
    });
  }
  return out;
}

// mean over batch of -log softmax(logits)[label]; max-subtraction stabilized
inline TensorPtr softmax_cross_entropy(Tape* tape, const TensorPtr& logits,
                                       const std::vector<int>& labels) {
  if (logits->shape.size() != 2)
    throw TensorError("softmax_cross_entropy: logits must be [N,C], got " +
                      shape_str(logits->shape));
  const int N = logits->shape[0], C = logits->shape[1];
  if (static_cast<int>(labels.size()) != N)
    throw TensorError("softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                      " does not match batch axis " + std::to_string(N));
  for (int n = 0; n < N; ++n)
    if (labels[n] < 0 || labels[n] >= C)
      throw TensorError("softmax_cross_entropy: label " + std::to_string(labels[n]) +
                        " out of range [0," + std::to_string(C) + ")");
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * C);
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const double* row = logits->data.data() + static_cast<std::int64_t>(n) * C;
    double m = row[0];
    for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(row[c] - m);
    double logz = std::log(z) + m;
    loss += logz - row[labels[n]];
    for (int c = 0; c < C; ++c)
      (*probs)[static_cast<std::int64_t>(n) * C + c] = std::exp(row[c] - logz);
  }
  auto out = make_tensor({1}, std::vector<double>{loss / N});
  if (detail::track(tape, {&logits})) {
    out->requires_grad = true;
    out->ensure_grad();
    logits->ensure_grad();
    tape->record([=]() {
      double g = out->grad[0] / N;
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          logits->grad[static_cast<std::int64_t>(n) * C + c] +=
              g * ((*probs)[static_cast<std::int64_t>(n) * C + c] -
                   (labels[n] == c ? 1.0 : 0.0));
    });
  }
  return out;
}

// row-wise softmax, [N,C] -> [N,C]
inline TensorPtr softmax(Tape* tape, const TensorPtr& logits) {
  if (logits->shape.size() != 2)
    throw TensorError("softmax: logits must be [N,C], got " + shape_str(logits->shape));
  const int N = logits->shape[0], C = logits->shape[1];
  auto out = make_tensor(logits->shape);
  for (int n = 0; n < N; ++n) {
    const double* row = logits->data.data() + static_cast<std::int64_t>(n) * C;
    double* orow = out->data.data() + static_cast<std::int64_t>(n) * C;
    double m = row[0];
    for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(row[c] - m);
    for (int c = 0; c < C; ++c) orow[c] = std::exp(row[c] - m) / z;
  }
  if (detail::track(tape, {&logits})) {
    out->requires_grad = true;
    out->ensure_grad();
    logits->ensure_grad();
    tape->record([=]() {
      for (int n = 0; n < N; ++n) {
        const double* s = out->data.data() + static_cast<std::int64_t>(n) * C;
        const double* g = out->grad.data() + static_cast<std::int64_t>(n) * C;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += s[c] * g[c];
        for (int c = 0; c < C; ++c)
          logits->grad[static_cast<std::int64_t>(n) * C + c] += s[c] * (g[c] - dot);
      }
    });
  }
  return out;
}

// scalar a*x + b*y
inline TensorPtr axpby(Tape* tape, double a, const TensorPtr& x, double b,
                       const TensorPtr& y) {
  if (x->size() != 1 || y->size() != 1)
    throw TensorError("axpby: expects scalar tensors");
  auto out = make_tensor({1}, std::vector<double>{a * x->data[0] + b * y->data[0]});
  if (detail::track(tape, {&x, &y})) {
    out->requires_grad = true;
    out->ensure_grad();
    if (x->requires_grad) x->ensure_grad();
    if (y->requires_grad) y->ensure_grad();
    tape->record([=]() {
      if (x->requires_grad) x->grad[0] += a * out->grad[0];
      if (y->requires_grad) y->grad[0] += b * out->grad[0];
    });
  }
  return out;
}

inline TensorPtr sum(Tape* tape, const TensorPtr& x) {
  double s = std::accumulate(x->data.begin(), x->data.end(), 0.0);
  auto out = make_tensor({1}, std::vector<double>{s});
  if (detail::track(tape, {&x})) {
    out->requires_grad = true;
    out->ensure_grad();
    x->ensure_grad();
    tape->record([=]() {
      for (auto& g : x->grad) g += out->grad[0];
    });
  }
  return out;
}

// 0.5 * ||x||^2
inline TensorPtr half_sq_norm(Tape* tape, const TensorPtr& x) {
  double s = 0.0;
  for (double v : x->data) s += v * v;
  auto out = make_tensor({1}, std::vector<double>{0.5 * s});
  if (detail::track(tape, {&x})) {
    out->requires_grad = true;
    out->ensure_grad();
    x->ensure_grad();
    tape->record([=]() {
      for (std::size_t i = 0; i < x->data.size(); ++i)
        x->grad[i] += out->grad[0] * x->data[i];
    });
  }
  return out;
}

}  // namespace gearlab
