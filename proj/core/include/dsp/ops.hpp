#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "dsp/tape.hpp"
#include "dsp/tensor.hpp"

namespace dsp {
namespace ops {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
  int batch, in_ch, len, out_ch, kernel, dilation, pad_left;
};

inline ConvGeom conv_geometry(const Shape& in, const Shape& w, int dilation) {
  if (in.size() != 3) throw std::invalid_argument("conv1d input must be 3D, got " + shape_str(in));
  if (w.size() != 3) throw std::invalid_argument("conv1d weight must be 3D, got " + shape_str(w));
  if (dilation < 1) throw std::invalid_argument("conv1d dilation must be >= 1");
  if (w[2] < 1) throw std::invalid_argument("conv1d kernel size must be >= 1");
  if (in[1] != w[1])
    throw std::invalid_argument("conv1d channel mismatch: input " + shape_str(in) +
                                " vs weight " + shape_str(w));
  ConvGeom g;
  g.batch = in[0];
  g.in_ch = in[1];
  g.len = in[2];
  g.out_ch = w[0];
  g.kernel = w[2];
  g.dilation = dilation;
  // "same" padding: output length equals input length.
  g.pad_left = ((g.kernel - 1) * g.dilation) / 2;
  return g;
}

// col is (in_ch*kernel) x (batch*len), column-major; column index = b*len + t.
template <class S>
void im2col(const TensorT<S>& x, const ConvGeom& g, Mat<S>& col) {
  const int rows = g.in_ch * g.kernel;
  col.setZero(rows, static_cast<std::int64_t>(g.batch) * g.len);
  const S* xd = x.data();
  for (int b = 0; b < g.batch; ++b) {
    const S* xb = xd + static_cast<std::int64_t>(b) * g.in_ch * g.len;
    for (int t = 0; t < g.len; ++t) {
      S* c = col.data() + (static_cast<std::int64_t>(b) * g.len + t) * rows;
      for (int ci = 0; ci < g.in_ch; ++ci) {
        const S* xc = xb + static_cast<std::int64_t>(ci) * g.len;
        S* cc = c + ci * g.kernel;
        for (int k = 0; k < g.kernel; ++k) {
          int tt = t + k * g.dilation - g.pad_left;
          if (tt >= 0 && tt < g.len) cc[k] = xc[tt];
        }
      }
    }
  }
}

template <class S>
void col2im_add(const Mat<S>& col, const ConvGeom& g, TensorT<S>& dx) {
  const int rows = g.in_ch * g.kernel;
  S* xd = dx.data();
  for (int b = 0; b < g.batch; ++b) {
    S* xb = xd + static_cast<std::int64_t>(b) * g.in_ch * g.len;
    for (int t = 0; t < g.len; ++t) {
      const S* c = col.data() + (static_cast<std::int64_t>(b) * g.len + t) * rows;
      for (int ci = 0; ci < g.in_ch; ++ci) {
        S* xc = xb + static_cast<std::int64_t>(ci) * g.len;
        const S* cc = c + ci * g.kernel;
        for (int k = 0; k < g.kernel; ++k) {
          int tt = t + k * g.dilation - g.pad_left;
          if (tt >= 0 && tt < g.len) xc[tt] += cc[k];
        }
      }
    }
  }
}

/// Dilated "same"-padding cross-correlation. input [B,Cin,T], weight
/// [Cout,Cin,K], optional bias [Cout] (pass bias_id = -1 for none).
template <class S>
int conv1d(Tape<S>& tape, int input_id, int weight_id, int bias_id, int dilation) {
  const TensorT<S>& x = tape.value(input_id);
  const TensorT<S>& w = tape.value(weight_id);
  ConvGeom g = conv_geometry(x.shape(), w.shape(), dilation);
  if (bias_id >= 0 && tape.value(bias_id).size() != g.out_ch)
    throw std::invalid_argument("conv1d bias length must equal out channels");

  Mat<S> col;
  im2col(x, g, col);
  Eigen::Map<const RowMat<S>> wmat(w.data(), g.out_ch, g.in_ch * g.kernel);
  Mat<S> y = wmat * col;  // out_ch x (batch*len)

  TensorT<S> out(Shape{g.batch, g.out_ch, g.len});
  S* od = out.data();
  for (int b = 0; b < g.batch; ++b)
    for (int co = 0; co < g.out_ch; ++co) {
      S* ot = od + (static_cast<std::int64_t>(b) * g.out_ch + co) * g.len;
      S bias = bias_id >= 0 ? tape.value(bias_id)[co] : S(0);
      for (int t = 0; t < g.len; ++t)
        ot[t] = y(co, static_cast<std::int64_t>(b) * g.len + t) + bias;
    }

  std::vector<int> inputs{input_id, weight_id};
  if (bias_id >= 0) inputs.push_back(bias_id);
  return tape.push(std::move(out), inputs, [=](Tape<S>& t, int self) {
    const TensorT<S>& gy = t.grad(self);
    const TensorT<S>& xin = t.value(input_id);
    const TensorT<S>& wv = t.value(weight_id);
    Mat<S> gymat(g.out_ch, static_cast<std::int64_t>(g.batch) * g.len);
    for (int b = 0; b < g.batch; ++b)
      for (int co = 0; co < g.out_ch; ++co) {
        const S* gt = gy.data() + (static_cast<std::int64_t>(b) * g.out_ch + co) * g.len;
        for (int tt = 0; tt < g.len; ++tt)
          gymat(co, static_cast<std::int64_t>(b) * g.len + tt) = gt[tt];
      }
    Mat<S> colb;
    im2col(xin, g, colb);
    if (t.needs_grad(weight_id)) {
      Mat<S> gw = gymat * colb.transpose();  // out_ch x (in_ch*kernel)
      TensorT<S>& wg = t.grad(weight_id);
      Eigen::Map<RowMat<S>> wgmat(wg.data(), g.out_ch, g.in_ch * g.kernel);
      wgmat += gw;
    }
    if (bias_id >= 0 && t.needs_grad(bias_id)) {
      TensorT<S>& bg = t.grad(bias_id);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(bg.data(), g.out_ch) +=
          gymat.rowwise().sum();
    }
    if (t.needs_grad(input_id)) {
      Eigen::Map<const RowMat<S>> wmat2(wv.data(), g.out_ch, g.in_ch * g.kernel);
      Mat<S> gcol = wmat2.transpose() * gymat;
      col2im_add(gcol, g, t.grad(input_id));
    }
  });
}

/// One kernel per channel. input [B,C,T], weight [C,1,K].
template <class S>
int depthwise_conv1d(Tape<S>& tape, int input_id, int weight_id, int dilation) {
  const TensorT<S>& x = tape.value(input_id);
  const TensorT<S>& w = tape.value(weight_id);
  if (x.ndim() != 3)
    throw std::invalid_argument("depthwise conv input must be 3D, got " + shape_str(x.shape()));
  if (w.ndim() != 3 || w.dim(1) != 1)
    throw std::invalid_argument("depthwise weight must be [C,1,K], got " + shape_str(w.shape()));
  if (x.dim(1) != w.dim(0))
    throw std::invalid_argument("depthwise channel mismatch: input " + shape_str(x.shape()) +
                                " vs weight " + shape_str(w.shape()));
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2), K = w.dim(2);
  const int pad_left = ((K - 1) * dilation) / 2;

  TensorT<S> out(x.shape());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* xc = x.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      const S* wc = w.data() + static_cast<std::int64_t>(c) * K;
      S* oc = out.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      for (int t = 0; t < T; ++t) {
        S acc = 0;
        for (int k = 0; k < K; ++k) {
          int tt = t + k * dilation - pad_left;
          if (tt >= 0 && tt < T) acc += wc[k] * xc[tt];
        }
        oc[t] = acc;
      }
    }

  return tape.push(std::move(out), {input_id, weight_id}, [=](Tape<S>& t, int self) {
    const TensorT<S>& gy = t.grad(self);
    const TensorT<S>& xin = t.value(input_id);
    const TensorT<S>& wv = t.value(weight_id);
    bool gx = t.needs_grad(input_id), gw = t.needs_grad(weight_id);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const S* xc = xin.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        const S* gyc = gy.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        const S* wc = wv.data() + static_cast<std::int64_t>(c) * K;
        S* gxc = gx ? t.grad(input_id).data() + (static_cast<std::int64_t>(b) * C + c) * T : nullptr;
        S* gwc = gw ? t.grad(weight_id).data() + static_cast<std::int64_t>(c) * K : nullptr;
        for (int tt = 0; tt < T; ++tt) {
          S g = gyc[tt];
          if (g == S(0)) continue;
          for (int k = 0; k < K; ++k) {
            int ts = tt + k * dilation - pad_left;
            if (ts < 0 || ts >= T) continue;
            if (gw) gwc[k] += g * xc[ts];
            if (gx) gxc[ts] += g * wc[k];
          }
        }
      }
  });
}

/// Depthwise conv followed by a 1x1 pointwise conv mixing channels.
/// depthwise_weight [C,1,K], pointwise_weight [Cout,C,1].
template <class S>
int depthwise_separable_conv1d(Tape<S>& tape, int input_id, int dw_weight_id,
                               int pw_weight_id, int dilation) {
  int mid = depthwise_conv1d(tape, input_id, dw_weight_id, dilation);
  return conv1d(tape, mid, pw_weight_id, -1, 1);
}

template <class S>
struct BatchNormStats {
  TensorT<S> running_mean, running_var;
  bool initialized = false;
};

/// Per-channel normalization over (B,T). Train mode uses batch statistics and
/// updates `stats` (momentum lerp, unbiased running variance); eval mode is a
/// pure function of (input, stats).
template <class S>
int batchnorm1d(Tape<S>& tape, int input_id, int gamma_id, int beta_id,
                BatchNormStats<S>& stats, bool training, S momentum = S(0.1),
                S eps = S(1e-5)) {
  const TensorT<S>& x = tape.value(input_id);
  if (x.ndim() != 3)
    throw std::invalid_argument("batchnorm input must be 3D, got " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (tape.value(gamma_id).size() != C || tape.value(beta_id).size() != C)
    throw std::invalid_argument("batchnorm parameter length must equal channel count " +
                                std::to_string(C));
  const std::int64_t M = static_cast<std::int64_t>(B) * T;

  std::vector<S> mean(C), invstd(C);
  if (training) {
    std::vector<S> var(C);
    for (int c = 0; c < C; ++c) {
      double sum = 0, sq = 0;
      for (int b = 0; b < B; ++b) {
        const S* xc = x.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        for (int t = 0; t < T; ++t) {
          sum += xc[t];
          sq += static_cast<double>(xc[t]) * xc[t];
        }
      }
      double m = sum / M;
      double v = sq / M - m * m;
      if (v < 0) v = 0;
      mean[c] = static_cast<S>(m);
      var[c] = static_cast<S>(v);
      invstd[c] = static_cast<S>(1.0 / std::sqrt(v + static_cast<double>(eps)));
    }
    if (!stats.initialized) {
      stats.running_mean = TensorT<S>(Shape{C});
      stats.running_var = TensorT<S>(Shape{C}, S(1));
      stats.initialized = true;
      for (int c = 0; c < C; ++c) {
        stats.running_mean[c] = mean[c];
        stats.running_var[c] = M > 1 ? var[c] * S(M) / S(M - 1) : var[c];
      }
    } else {
      for (int c = 0; c < C; ++c) {
        S uv = M > 1 ? var[c] * S(M) / S(M - 1) : var[c];
        stats.running_mean[c] = (S(1) - momentum) * stats.running_mean[c] + momentum * mean[c];
        stats.running_var[c] = (S(1) - momentum) * stats.running_var[c] + momentum * uv;
      }
    }
  } else {
    if (!stats.initialized)
      throw std::runtime_error("batchnorm eval mode requested before any running stats recorded");
    for (int c = 0; c < C; ++c) {
      mean[c] = stats.running_mean[c];
      invstd[c] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(stats.running_var[c]) +
                                                 static_cast<double>(eps)));
    }
  }

  TensorT<S> xhat(x.shape());
  TensorT<S> out(x.shape());
  const TensorT<S>& gamma = tape.value(gamma_id);
  const TensorT<S>& beta = tape.value(beta_id);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* xc = x.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      S* hc = xhat.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      S* oc = out.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      for (int t = 0; t < T; ++t) {
        hc[t] = (xc[t] - mean[c]) * invstd[c];
        oc[t] = gamma[c] * hc[t] + beta[c];
      }
    }

  auto xhat_p = std::make_shared<TensorT<S>>(std::move(xhat));
  return tape.push(std::move(out), {input_id, gamma_id, beta_id},
                   [=](Tape<S>& t, int self) {
    const TensorT<S>& gy = t.grad(self);
    const TensorT<S>& gm = t.value(gamma_id);
    const TensorT<S>& xh = *xhat_p;
    bool gx = t.needs_grad(input_id);
    for (int c = 0; c < C; ++c) {
      double sum_gy = 0, sum_gyh = 0;
      for (int b = 0; b < B; ++b) {
        const S* gc = gy.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        const S* hc = xh.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        for (int tt = 0; tt < T; ++tt) {
          sum_gy += gc[tt];
          sum_gyh += static_cast<double>(gc[tt]) * hc[tt];
        }
      }
      if (t.needs_grad(gamma_id)) t.grad(gamma_id)[c] += static_cast<S>(sum_gyh);
      if (t.needs_grad(beta_id)) t.grad(beta_id)[c] += static_cast<S>(sum_gy);
      if (!gx) continue;
      S a = gm[c] * invstd[c];
      for (int b = 0; b < B; ++b) {
        const S* gc = gy.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        const S* hc = xh.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        S* gxc = t.grad(input_id).data() + (static_cast<std::int64_t>(b) * C + c) * T;
        if (training) {
          for (int tt = 0; tt < T; ++tt)
            gxc[tt] += a * (gc[tt] - static_cast<S>(sum_gy / M) -
                            hc[tt] * static_cast<S>(sum_gyh / M));
        } else {
          for (int tt = 0; tt < T; ++tt) gxc[tt] += a * gc[tt];
        }
      }
    }
  });
}

template <class S>
int relu(Tape<S>& tape, int input_id) {
  const TensorT<S>& x = tape.value(input_id);
  TensorT<S> out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > S(0) ? x[i] : S(0);
  return tape.push(std::move(out), {input_id}, [=](Tape<S>& t, int self) {
    if (!t.needs_grad(input_id)) return;
    const TensorT<S>& gy = t.grad(self);
    const TensorT<S>& xin = t.value(input_id);
    TensorT<S>& gx = t.grad(input_id);
    for (std::int64_t i = 0; i < xin.size(); ++i)
      if (xin[i] > S(0)) gx[i] += gy[i];
  });
}

/// Stride-1 windowed max with "same" output length; windows are clipped at
/// the boundaries rather than padded.
template <class S>
int maxpool1d(Tape<S>& tape, int input_id, int pool) {
  const TensorT<S>& x = tape.value(input_id);
  if (x.ndim() != 3)
    throw std::invalid_argument("maxpool input must be 3D, got " + shape_str(x.shape()));
  if (pool < 1) throw std::invalid_argument("maxpool window must be >= 1");
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  const int pad_left = (pool - 1) / 2;

  TensorT<S> out(x.shape());
  auto argmax = std::make_shared<std::vector<int>>(x.size());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* xc = x.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      std::int64_t base = (static_cast<std::int64_t>(b) * C + c) * T;
      for (int t = 0; t < T; ++t) {
        int lo = std::max(0, t - pad_left);
        int hi = std::min(T - 1, t - pad_left + pool - 1);
        int best = lo;
        for (int u = lo + 1; u <= hi; ++u)
          if (xc[u] > xc[best]) best = u;
        out[base + t] = xc[best];
        (*argmax)[base + t] = best;
      }
    }
  return tape.push(std::move(out), {input_id}, [=](Tape<S>& t, int self) {
    if (!t.needs_grad(input_id)) return;
    const TensorT<S>& gy = t.grad(self);
    TensorT<S>& gx = t.grad(input_id);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        std::int64_t base = (static_cast<std::int64_t>(b) * C + c) * T;
        for (int tt = 0; tt < T; ++tt)
          gx[base + (*argmax)[base + tt]] += gy[base + tt];
      }
  });
}

/// [B,C,T] -> [B,C] mean over the temporal axis.
template <class S>
int global_avg_pool(Tape<S>& tape, int input_id) {
  const TensorT<S>& x = tape.value(input_id);
  if (x.ndim() != 3)
    throw std::invalid_argument("global_avg_pool input must be 3D, got " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  TensorT<S> out(Shape{B, C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* xc = x.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      double s = 0;
      for (int t = 0; t < T; ++t) s += xc[t];
      out.at(b, c) = static_cast<S>(s / T);
    }
  return tape.push(std::move(out), {input_id}, [=](Tape<S>& t, int self) {
    if (!t.needs_grad(input_id)) return;
    const TensorT<S>& gy = t.grad(self);
    TensorT<S>& gx = t.grad(input_id);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        S g = gy.at(b, c) / S(T);
        S* gxc = gx.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        for (int tt = 0; tt < T; ++tt) gxc[tt] += g;
      }
  });
}

/// Affine map [B,Cin] -> [B,Cout]; weight [Cout,Cin], optional bias [Cout].
template <class S>
int linear(Tape<S>& tape, int input_id, int weight_id, int bias_id) {
  const TensorT<S>& x = tape.value(input_id);
  const TensorT<S>& w = tape.value(weight_id);
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("linear shape mismatch: input " + shape_str(x.shape()) +
                                " vs weight " + shape_str(w.shape()));
  const int B = x.dim(0), Cin = x.dim(1), Cout = w.dim(0);
  Eigen::Map<const RowMat<S>> xm(x.data(), B, Cin);
  Eigen::Map<const RowMat<S>> wm(w.data(), Cout, Cin);
  TensorT<S> out(Shape{B, Cout});
  Eigen::Map<RowMat<S>> om(out.data(), B, Cout);
  om = xm * wm.transpose();
  if (bias_id >= 0) {
    const TensorT<S>& bias = tape.value(bias_id);
    if (bias.size() != Cout) throw std::invalid_argument("linear bias length must equal Cout");
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < Cout; ++c) out.at(b, c) += bias[c];
  }
  std::vector<int> inputs{input_id, weight_id};
  if (bias_id >= 0) inputs.push_back(bias_id);
  return tape.push(std::move(out), inputs, [=](Tape<S>& t, int self) {
    const TensorT<S>& gy = t.grad(self);
    Eigen::Map<const RowMat<S>> gym(gy.data(), B, Cout);
    if (t.needs_grad(weight_id)) {
      Eigen::Map<const RowMat<S>> xm2(t.value(input_id).data(), B, Cin);
      Eigen::Map<RowMat<S>> gw(t.grad(weight_id).data(), Cout, Cin);
      gw += gym.transpose() * xm2;
    }
    if (bias_id >= 0 && t.needs_grad(bias_id)) {
      TensorT<S>& gb = t.grad(bias_id);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < Cout; ++c) gb[c] += gy.at(b, c);
    }
    if (t.needs_grad(input_id)) {
      Eigen::Map<const RowMat<S>> wm2(t.value(weight_id).data(), Cout, Cin);
      Eigen::Map<RowMat<S>> gx(t.grad(input_id).data(), B, Cin);
      gx += gym * wm2;
    }
  });
}

/// Channel-axis concatenation of [B,Ci,T] tensors.
template <class S>
int concat_channels(Tape<S>& tape, const std::vector<int>& input_ids) {
  if (input_ids.empty()) throw std::invalid_argument("concat needs at least one input");
  const TensorT<S>& first = tape.value(input_ids[0]);
  if (first.ndim() != 3)
    throw std::invalid_argument("concat inputs must be 3D, got " + shape_str(first.shape()));
  const int B = first.dim(0), T = first.dim(2);
  int Ctot = 0;
  for (int id : input_ids) {
    const TensorT<S>& x = tape.value(id);
    if (x.ndim() != 3 || x.dim(0) != B || x.dim(2) != T)
      throw std::invalid_argument("concat shape mismatch: " + shape_str(first.shape()) +
                                  " vs " + shape_str(x.shape()));
    Ctot += x.dim(1);
  }
  TensorT<S> out(Shape{B, Ctot, T});
  auto offsets = std::make_shared<std::vector<int>>();
  int off = 0;
  for (int id : input_ids) {
    const TensorT<S>& x = tape.value(id);
    offsets->push_back(off);
    const int C = x.dim(1);
    for (int b = 0; b < B; ++b)
      std::copy(x.data() + static_cast<std::int64_t>(b) * C * T,
                x.data() + static_cast<std::int64_t>(b + 1) * C * T,
                out.data() + (static_cast<std::int64_t>(b) * Ctot + off) * T);
    off += C;
  }
  return tape.push(std::move(out), input_ids, [=](Tape<S>& t, int self) {
    const TensorT<S>& gy = t.grad(self);
    for (std::size_t i = 0; i < input_ids.size(); ++i) {
      int id = input_ids[i];
      if (!t.needs_grad(id)) continue;
      const int C = t.value(id).dim(1);
      int o = (*offsets)[i];
      TensorT<S>& gx = t.grad(id);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const S* gc = gy.data() + (static_cast<std::int64_t>(b) * Ctot + o + c) * T;
          S* gxc = gx.data() + (static_cast<std::int64_t>(b) * C + c) * T;
          for (int tt = 0; tt < T; ++tt) gxc[tt] += gc[tt];
        }
    }
  });
}

/// Elementwise addition; a shape mismatch here is a structural error and is
/// always rejected.
template <class S>
int add(Tape<S>& tape, int a_id, int b_id) {
  const TensorT<S>& a = tape.value(a_id);
  const TensorT<S>& b = tape.value(b_id);
  if (!a.same_shape(b))
    throw std::invalid_argument("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return tape.push(std::move(out), {a_id, b_id}, [=](Tape<S>& t, int self) {
    const TensorT<S>& gy = t.grad(self);
    for (int id : {a_id, b_id}) {
      if (!t.needs_grad(id)) continue;
      TensorT<S>& g = t.grad(id);
      for (std::int64_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

/// [B,C,T] channel range [c0,c1).
template <class S>
int slice_channels(Tape<S>& tape, int input_id, int c0, int c1) {
  const TensorT<S>& x = tape.value(input_id);
  if (x.ndim() != 3 || c0 < 0 || c1 > x.dim(1) || c0 >= c1)
    throw std::invalid_argument("bad channel slice [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") of " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2), Cs = c1 - c0;
  TensorT<S> out(Shape{B, Cs, T});
  for (int b = 0; b < B; ++b)
    std::copy(x.data() + (static_cast<std::int64_t>(b) * C + c0) * T,
              x.data() + (static_cast<std::int64_t>(b) * C + c1) * T,
              out.data() + static_cast<std::int64_t>(b) * Cs * T);
  return tape.push(std::move(out), {input_id}, [=](Tape<S>& t, int self) {
    if (!t.needs_grad(input_id)) return;
    const TensorT<S>& gy = t.grad(self);
    TensorT<S>& gx = t.grad(input_id);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < Cs; ++c) {
        const S* gc = gy.data() + (static_cast<std::int64_t>(b) * Cs + c) * T;
        S* gxc = gx.data() + (static_cast<std::int64_t>(b) * C + c0 + c) * T;
        for (int tt = 0; tt < T; ++tt) gxc[tt] += gc[tt];
      }
  });
}

/// Forces the listed channels of a [B,C,T] tensor to zero (the masking side
/// of the zero-masking equivalence law).
template <class S>
int zero_channels(Tape<S>& tape, int input_id, std::vector<int> channels) {
  const TensorT<S>& x = tape.value(input_id);
  if (x.ndim() != 3)
    throw std::invalid_argument("zero_channels input must be 3D, got " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  TensorT<S> out = x;
  out.requires_grad = false;
  for (int c : channels) {
    if (c < 0 || c >= C) throw std::invalid_argument("zero_channels index out of range");
    for (int b = 0; b < B; ++b)
      std::fill_n(out.data() + (static_cast<std::int64_t>(b) * C + c) * T, T, S(0));
  }
  auto chans = std::make_shared<std::vector<int>>(std::move(channels));
  return tape.push(std::move(out), {input_id}, [=](Tape<S>& t, int self) {
    if (!t.needs_grad(input_id)) return;
    TensorT<S> gy = t.grad(self);  // copy, then zero masked channels
    for (int c : *chans)
      for (int b = 0; b < B; ++b)
        std::fill_n(gy.data() + (static_cast<std::int64_t>(b) * C + c) * T, T, S(0));
    TensorT<S>& gx = t.grad(input_id);
    for (std::int64_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

/// Mean over the batch of -log softmax(logits)[label], max-shifted.
template <class S>
int softmax_cross_entropy(Tape<S>& tape, int logits_id, const std::vector<int>& labels) {
  const TensorT<S>& z = tape.value(logits_id);
  if (z.ndim() != 2)
    throw std::invalid_argument("cross entropy logits must be 2D, got " + shape_str(z.shape()));
  const int B = z.dim(0), K = z.dim(1);
  if (static_cast<int>(labels.size()) != B)
    throw std::invalid_argument("label count does not match batch size");
  auto probs = std::make_shared<TensorT<S>>(Shape{B, K});
  double loss = 0;
  for (int b = 0; b < B; ++b) {
    int y = labels[b];
    if (y < 0 || y >= K)
      throw std::invalid_argument("label " + std::to_string(y) + " out of range [0," +
                                  std::to_string(K) + ")");
    S mx = z.at(b, 0);
    for (int k = 1; k < K; ++k) mx = std::max(mx, z.at(b, k));
    double denom = 0;
    for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(z.at(b, k) - mx));
    for (int k = 0; k < K; ++k)
      probs->at(b, k) = static_cast<S>(std::exp(static_cast<double>(z.at(b, k) - mx)) / denom);
    loss -= std::log(static_cast<double>(probs->at(b, y)));
  }
  TensorT<S> out(Shape{1});
  out[0] = static_cast<S>(loss / B);
  auto lab = std::make_shared<std::vector<int>>(labels);
  return tape.push(std::move(out), {logits_id}, [=](Tape<S>& t, int self) {
    if (!t.needs_grad(logits_id)) return;
    S g = t.grad(self)[0];
    TensorT<S>& gz = t.grad(logits_id);
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k)
        gz.at(b, k) += g * (probs->at(b, k) - (k == (*lab)[b] ? S(1) : S(0))) / S(B);
  });
}

/// Sum over (sample, channel) of the temporal L2 norm: the channel-wise L2,1
/// penalty of a [B,C,T] feature map. Subgradient 0 at exactly-zero channels.
template <class S>
int l21_channel_norm(Tape<S>& tape, int input_id) {
  const TensorT<S>& x = tape.value(input_id);
  if (x.ndim() != 3)
    throw std::invalid_argument("l21_channel_norm input must be 3D, got " + shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  auto norms = std::make_shared<TensorT<S>>(Shape{B, C});
  double total = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* xc = x.data() + (static_cast<std::int64_t>(b) * C + c) * T;
      double sq = 0;
      for (int t = 0; t < T; ++t) sq += static_cast<double>(xc[t]) * xc[t];
      S n = static_cast<S>(std::sqrt(sq));
      norms->at(b, c) = n;
      total += n;
    }
  TensorT<S> out(Shape{1});
  out[0] = static_cast<S>(total);
  return tape.push(std::move(out), {input_id}, [=](Tape<S>& t, int self) {
    if (!t.needs_grad(input_id)) return;
    S g = t.grad(self)[0];
    const TensorT<S>& xin = t.value(input_id);
    TensorT<S>& gx = t.grad(input_id);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        S n = norms->at(b, c);
        if (n == S(0)) continue;
        const S* xc = xin.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        S* gxc = gx.data() + (static_cast<std::int64_t>(b) * C + c) * T;
        for (int tt = 0; tt < T; ++tt) gxc[tt] += g * xc[tt] / n;
      }
  });
}

/// a + scale * b for scalar slots.
template <class S>
int axpy_scalar(Tape<S>& tape, int a_id, int b_id, S scale) {
  const TensorT<S>& a = tape.value(a_id);
  const TensorT<S>& b = tape.value(b_id);
  if (a.size() != 1 || b.size() != 1)
    throw std::invalid_argument("axpy_scalar expects scalar slots");
  TensorT<S> out(Shape{1});
  out[0] = a[0] + scale * b[0];
  return tape.push(std::move(out), {a_id, b_id}, [=](Tape<S>& t, int self) {
    S g = t.grad(self)[0];
    if (t.needs_grad(a_id)) t.grad(a_id)[0] += g;
    if (t.needs_grad(b_id)) t.grad(b_id)[0] += g * scale;
  });
}

}  // namespace ops
}  // namespace dsp
