#include "preflearn/lm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "preflearn/common/errors.hpp"
#include "preflearn/common/rng.hpp"

namespace preflearn::lm {

void ModelConfig::validate() const {
  if (vocab <= 0 || d_model <= 0 || n_layer <= 0 || n_head <= 0 || context <= 0 || d_ff <= 0) {
    throw ConfigError("model config: all sizes must be positive");
  }
  if (d_model % n_head != 0) throw ConfigError("model config: d_model must be divisible by n_head");
  if (vocab != Vocabulary::kSize) {
    throw ConfigError("model config: vocab must be " + std::to_string(Vocabulary::kSize));
  }
}

ParamLayout::ParamLayout(const ModelConfig& config) {
  config.validate();
  const auto V = static_cast<std::size_t>(config.vocab);
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto f = static_cast<std::size_t>(config.d_ff);
  const auto C = static_cast<std::size_t>(config.context);
  tok_emb = add("tok_emb", {V, d});
  pos_emb = add("pos_emb", {C, d});
  for (int l = 0; l < config.n_layer; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block b{};
    b.ln1_g = add(p + "ln1.g", {d});
    b.ln1_b = add(p + "ln1.b", {d});
    b.wq = add(p + "attn.wq", {d, d});
    b.wk = add(p + "attn.wk", {d, d});
    b.wv = add(p + "attn.wv", {d, d});
    b.wo = add(p + "attn.wo", {d, d});
    b.ln2_g = add(p + "ln2.g", {d});
    b.ln2_b = add(p + "ln2.b", {d});
    b.w_fc = add(p + "mlp.w_fc", {d, f});
    b.b_fc = add(p + "mlp.b_fc", {f});
    b.w_proj = add(p + "mlp.w_proj", {f, d});
    b.b_proj = add(p + "mlp.b_proj", {d});
    blocks.push_back(b);
  }
  lnf_g = add("lnf.g", {d});
  lnf_b = add("lnf.b", {d});
  head_w = add("head.w", {d, V});
  head_b = add("head.b", {V});
}

std::size_t ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t size = 1;
  for (auto s : shape) size *= s;
  const std::size_t offset = total_;
  tensors_.push_back({std::move(name), std::move(shape), offset, size});
  total_ += size;
  return offset;
}

const TensorInfo& ParamLayout::find(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ShapeError("unknown parameter array '" + std::string(name) + "'");
}

namespace {

bool is_gain(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}

bool is_bias(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

bool is_bias_vector(const std::string& name) {
  return is_bias(name) || name.ends_with(".b_fc") || name.ends_with(".b_proj");
}

}  // namespace

template <typename T>
ModelParams<T>::ModelParams(const ModelConfig& config)
    : config_(config), layout_(std::make_shared<const ParamLayout>(config)) {
  values_.assign(layout_->total(), T(0));
  for (const auto& t : layout_->tensors()) {
    if (is_gain(t.name)) std::fill_n(values_.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size, T(1));
  }
}

template <typename T>
ModelParams<T> ModelParams<T>::initialized(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (const auto& t : p.layout_->tensors()) {
    if (is_gain(t.name) || is_bias_vector(t.name)) continue;
    for (std::size_t i = 0; i < t.size; ++i) p.values_[t.offset + i] = static_cast<T>(normal(rng));
  }
  return p;
}

template <typename T>
std::span<const T> ModelParams<T>::tensor(std::string_view name) const {
  const auto& t = layout_->find(name);
  return std::span<const T>(values_).subspan(t.offset, t.size);
}

template <typename T>
std::span<T> ModelParams<T>::tensor(std::string_view name) {
  const auto& t = layout_->find(name);
  return std::span<T>(values_).subspan(t.offset, t.size);
}

template <typename T>
bool ModelParams<T>::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
std::span<const T> Activations<T>::logits_row(int row) const {
  const std::size_t V = Vocabulary::kSize;
  return std::span<const T>(logits).subspan(static_cast<std::size_t>(row - logits_from) * V, V);
}

template <typename T>
std::span<const T> Activations<T>::hidden_row(int row) const {
  const std::size_t d = hidden.size() / static_cast<std::size_t>(rows);
  return std::span<const T>(hidden).subspan(static_cast<std::size_t>(row) * d, d);
}

std::vector<TokenId> frame(const TokenSequence& prompt, const TokenSequence& continuation) {
  std::vector<TokenId> out;
  out.reserve(1 + prompt.size() + continuation.size());
  out.push_back(Vocabulary::kBos);
  out.insert(out.end(), prompt.begin(), prompt.end());
  out.insert(out.end(), continuation.begin(), continuation.end());
  return out;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

// y[i,:] = x[i,:] * W (+ bias). Row-by-row so each row's result is
// independent of how many rows are processed.
template <typename T>
void matmul(const T* x, const T* w, const T* bias, T* y, int rows, int in, int out) {
  for (int i = 0; i < rows; ++i) {
    T* yr = y + static_cast<std::size_t>(i) * out;
    if (bias) {
      std::copy_n(bias, out, yr);
    } else {
      std::fill_n(yr, out, T(0));
    }
    const T* xr = x + static_cast<std::size_t>(i) * in;
    for (int k = 0; k < in; ++k) {
      const T xv = xr[k];
      const T* wr = w + static_cast<std::size_t>(k) * out;
      for (int j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
}

template <typename T>
void transpose(const T* w, T* wt, int in, int out) {
  for (int k = 0; k < in; ++k)
    for (int j = 0; j < out; ++j) wt[static_cast<std::size_t>(j) * in + k] = w[static_cast<std::size_t>(k) * out + j];
}

// Given y = x W + b: dx += dy W^T, dW += x^T dy, db += sum dy.
template <typename T>
void matmul_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int rows, int in, int out,
                     std::vector<T>& scratch) {
  if (dx) {
    scratch.resize(static_cast<std::size_t>(in) * out);
    transpose(w, scratch.data(), in, out);
    for (int i = 0; i < rows; ++i) {
      T* dxr = dx + static_cast<std::size_t>(i) * in;
      const T* dyr = dy + static_cast<std::size_t>(i) * out;
      for (int j = 0; j < out; ++j) {
        const T g = dyr[j];
        const T* wt = scratch.data() + static_cast<std::size_t>(j) * in;
        for (int k = 0; k < in; ++k) dxr[k] += g * wt[k];
      }
    }
  }
  for (int i = 0; i < rows; ++i) {
    const T* xr = x + static_cast<std::size_t>(i) * in;
    const T* dyr = dy + static_cast<std::size_t>(i) * out;
    for (int k = 0; k < in; ++k) {
      const T xv = xr[k];
      T* dwr = dw + static_cast<std::size_t>(k) * out;
      for (int j = 0; j < out; ++j) dwr[j] += xv * dyr[j];
    }
    if (db) {
      for (int j = 0; j < out; ++j) db[j] += dyr[j];
    }
  }
}

template <typename T>
void layer_norm(const T* x, const T* g, const T* b, T* y, T* xhat, T* rstd, int rows, int d) {
  for (int i = 0; i < rows; ++i) {
    const T* xr = x + static_cast<std::size_t>(i) * d;
    T mean = 0;
    for (int k = 0; k < d; ++k) mean += xr[k];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int k = 0; k < d; ++k) {
      const T c = xr[k] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T r = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd[i] = r;
    T* hr = xhat + static_cast<std::size_t>(i) * d;
    T* yr = y + static_cast<std::size_t>(i) * d;
    for (int k = 0; k < d; ++k) {
      hr[k] = (xr[k] - mean) * r;
      yr[k] = hr[k] * g[k] + b[k];
    }
  }
}

// dx += LN'(dy); dg += dy * xhat; db += dy.
template <typename T>
void layer_norm_backward(const T* dy, const T* xhat, const T* rstd, const T* g, T* dx, T* dg, T* db, int rows,
                         int d, std::vector<T>& scratch) {
  scratch.resize(static_cast<std::size_t>(d));
  for (int i = 0; i < rows; ++i) {
    const T* dyr = dy + static_cast<std::size_t>(i) * d;
    const T* hr = xhat + static_cast<std::size_t>(i) * d;
    T mean1 = 0, mean2 = 0;
    for (int k = 0; k < d; ++k) {
      dg[k] += dyr[k] * hr[k];
      db[k] += dyr[k];
      scratch[k] = dyr[k] * g[k];
      mean1 += scratch[k];
      mean2 += scratch[k] * hr[k];
    }
    mean1 /= static_cast<T>(d);
    mean2 /= static_cast<T>(d);
    T* dxr = dx + static_cast<std::size_t>(i) * d;
    for (int k = 0; k < d; ++k) dxr[k] += rstd[i] * (scratch[k] - mean1 - hr[k] * mean2);
  }
}

template <typename T>
struct Gelu {
  static constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  static constexpr T kA = static_cast<T>(0.044715);

  static T value(T x) {
    const T t = std::tanh(kC * (x + kA * x * x * x));
    return T(0.5) * x * (T(1) + t);
  }
  static T derivative(T x) {
    const T t = std::tanh(kC * (x + kA * x * x * x));
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * kC * (T(1) + T(3) * kA * x * x);
  }
};

}  // namespace

template <typename T>
Activations<T> forward(const ModelParams<T>& params, std::span<const TokenId> inputs, const ForwardOptions& options) {
  const ModelConfig& cfg = params.config();
  const ParamLayout& L = params.layout();
  const int n = static_cast<int>(inputs.size());
  if (n == 0) throw LengthError("forward: empty input");
  if (n > cfg.context) {
    throw LengthError("forward: sequence of " + std::to_string(n) + " tokens exceeds context " +
                      std::to_string(cfg.context));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!Vocabulary::is_valid(inputs[i])) throw InvalidTokenError(i, inputs[i]);
  }
  const int d = cfg.d_model, H = cfg.n_head, hd = cfg.head_dim(), f = cfg.d_ff, V = cfg.vocab;
  const T* P = params.values().data();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const std::size_t nd = static_cast<std::size_t>(n) * d;

  Activations<T> a;
  a.rows = n;
  a.inputs.assign(inputs.begin(), inputs.end());
  std::vector<T> x(nd);
  for (int i = 0; i < n; ++i) {
    const T* te = P + L.tok_emb + static_cast<std::size_t>(inputs[i]) * d;
    const T* pe = P + L.pos_emb + static_cast<std::size_t>(i) * d;
    for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(i) * d + k] = te[k] + pe[k];
  }

  std::vector<T> ln(nd), proj(nd), scores(static_cast<std::size_t>(n));
  a.blocks.resize(L.blocks.size());
  for (std::size_t l = 0; l < L.blocks.size(); ++l) {
    const auto& B = L.blocks[l];
    auto& c = a.blocks[l];
    c.x_in = x;
    c.xhat1.resize(nd);
    c.rstd1.resize(n);
    layer_norm(x.data(), P + B.ln1_g, P + B.ln1_b, ln.data(), c.xhat1.data(), c.rstd1.data(), n, d);
    c.q.resize(nd);
    c.k.resize(nd);
    c.v.resize(nd);
    matmul(ln.data(), P + B.wq, static_cast<const T*>(nullptr), c.q.data(), n, d, d);
    matmul(ln.data(), P + B.wk, static_cast<const T*>(nullptr), c.k.data(), n, d, d);
    matmul(ln.data(), P + B.wv, static_cast<const T*>(nullptr), c.v.data(), n, d, d);

    c.probs.assign(static_cast<std::size_t>(H) * n * n, T(0));
    c.attn.assign(nd, T(0));
    for (int h = 0; h < H; ++h) {
      const int off = h * hd;
      for (int i = 0; i < n; ++i) {
        const T* qi = c.q.data() + static_cast<std::size_t>(i) * d + off;
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j <= i; ++j) {
          const T* kj = c.k.data() + static_cast<std::size_t>(j) * d + off;
          T s = 0;
          for (int t = 0; t < hd; ++t) s += qi[t] * kj[t];
          s *= scale;
          scores[j] = s;
          mx = std::max(mx, s);
        }
        T sum = 0;
        for (int j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          sum += scores[j];
        }
        T* pr = c.probs.data() + (static_cast<std::size_t>(h) * n + i) * n;
        T* out = c.attn.data() + static_cast<std::size_t>(i) * d + off;
        for (int j = 0; j <= i; ++j) {
          const T p = scores[j] / sum;
          pr[j] = p;
          const T* vj = c.v.data() + static_cast<std::size_t>(j) * d + off;
          for (int t = 0; t < hd; ++t) out[t] += p * vj[t];
        }
      }
    }
    matmul(c.attn.data(), P + B.wo, static_cast<const T*>(nullptr), proj.data(), n, d, d);
    for (std::size_t i = 0; i < nd; ++i) x[i] += proj[i];
    c.x_mid = x;

    c.xhat2.resize(nd);
    c.rstd2.resize(n);
    layer_norm(x.data(), P + B.ln2_g, P + B.ln2_b, ln.data(), c.xhat2.data(), c.rstd2.data(), n, d);
    const std::size_t nf = static_cast<std::size_t>(n) * f;
    c.pre_act.resize(nf);
    c.act.resize(nf);
    matmul(ln.data(), P + B.w_fc, P + B.b_fc, c.pre_act.data(), n, d, f);
    for (std::size_t i = 0; i < nf; ++i) c.act[i] = Gelu<T>::value(c.pre_act[i]);
    matmul(c.act.data(), P + B.w_proj, P + B.b_proj, proj.data(), n, f, d);
    for (std::size_t i = 0; i < nd; ++i) x[i] += proj[i];
  }

  a.x_final = x;
  a.xhatf.resize(nd);
  a.rstdf.resize(n);
  a.hidden.resize(nd);
  layer_norm(x.data(), P + L.lnf_g, P + L.lnf_b, a.hidden.data(), a.xhatf.data(), a.rstdf.data(), n, d);

  if (options.logits) {
    const int from = std::clamp(options.logits_from, 0, n);
    a.has_logits = true;
    a.logits_from = from;
    a.logits.resize(static_cast<std::size_t>(n - from) * V);
    matmul(a.hidden.data() + static_cast<std::size_t>(from) * d, P + L.head_w, P + L.head_b, a.logits.data(),
           n - from, d, V);
  }
  return a;
}

template <typename T>
void backward(const ModelParams<T>& params, const Activations<T>& a, std::span<const T> dlogits,
              std::span<const T> dhidden, std::span<T> grad) {
  const ModelConfig& cfg = params.config();
  const ParamLayout& L = params.layout();
  if (grad.size() != params.size()) throw ShapeError("backward: gradient buffer does not match parameters");
  const int n = a.rows, d = cfg.d_model, H = cfg.n_head, hd = cfg.head_dim(), f = cfg.d_ff, V = cfg.vocab;
  const std::size_t nd = static_cast<std::size_t>(n) * d;
  const T* P = params.values().data();
  T* G = grad.data();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<T> scratch;

  std::vector<T> dh(nd, T(0));
  if (!dhidden.empty()) {
    if (dhidden.size() != nd) throw ShapeError("backward: dhidden has wrong size");
    std::copy(dhidden.begin(), dhidden.end(), dh.begin());
  }
  if (!dlogits.empty()) {
    if (!a.has_logits) throw ShapeError("backward: logits were not computed");
    const int rows = n - a.logits_from;
    if (dlogits.size() != static_cast<std::size_t>(rows) * V) throw ShapeError("backward: dlogits has wrong size");
    matmul_backward(a.hidden.data() + static_cast<std::size_t>(a.logits_from) * d, P + L.head_w, dlogits.data(),
                    dh.data() + static_cast<std::size_t>(a.logits_from) * d, G + L.head_w, G + L.head_b, rows, d, V,
                    scratch);
  }

  std::vector<T> dx(nd, T(0));
  layer_norm_backward(dh.data(), a.xhatf.data(), a.rstdf.data(), P + L.lnf_g, dx.data(), G + L.lnf_g,
                      G + L.lnf_b, n, d, scratch);

  std::vector<T> ln(nd), xhat_tmp(nd), rstd_tmp(n);
  std::vector<T> dact, dpre, dln(nd), dattn(nd), dq(nd), dk(nd), dv(nd), dp(static_cast<std::size_t>(n));
  for (std::size_t li = L.blocks.size(); li-- > 0;) {
    const auto& B = L.blocks[li];
    const auto& c = a.blocks[li];
    const std::size_t nf = static_cast<std::size_t>(n) * f;

    // MLP: x_out = x_mid + gelu(LN2(x_mid) W_fc + b_fc) W_proj + b_proj
    dact.assign(nf, T(0));
    matmul_backward(c.act.data(), P + B.w_proj, dx.data(), dact.data(), G + B.w_proj, G + B.b_proj, n, f, d,
                    scratch);
    dpre.resize(nf);
    for (std::size_t i = 0; i < nf; ++i) dpre[i] = dact[i] * Gelu<T>::derivative(c.pre_act[i]);
    layer_norm(c.x_mid.data(), P + B.ln2_g, P + B.ln2_b, ln.data(), xhat_tmp.data(), rstd_tmp.data(), n, d);
    std::fill(dln.begin(), dln.end(), T(0));
    matmul_backward(ln.data(), P + B.w_fc, dpre.data(), dln.data(), G + B.w_fc, G + B.b_fc, n, d, f, scratch);
    // dx now holds d/dx_mid through the residual path.
    layer_norm_backward(dln.data(), c.xhat2.data(), c.rstd2.data(), P + B.ln2_g, dx.data(), G + B.ln2_g,
                        G + B.ln2_b, n, d, scratch);

    // Attention: x_mid = x_in + attn W_o
    std::fill(dattn.begin(), dattn.end(), T(0));
    matmul_backward(c.attn.data(), P + B.wo, dx.data(), dattn.data(), G + B.wo, static_cast<T*>(nullptr), n, d, d,
                    scratch);
    std::fill(dq.begin(), dq.end(), T(0));
    std::fill(dk.begin(), dk.end(), T(0));
    std::fill(dv.begin(), dv.end(), T(0));
    for (int h = 0; h < H; ++h) {
      const int off = h * hd;
      for (int i = 0; i < n; ++i) {
        const T* pr = c.probs.data() + (static_cast<std::size_t>(h) * n + i) * n;
        const T* doi = dattn.data() + static_cast<std::size_t>(i) * d + off;
        T dot_sum = 0;
        for (int j = 0; j <= i; ++j) {
          const T* vj = c.v.data() + static_cast<std::size_t>(j) * d + off;
          T* dvj = dv.data() + static_cast<std::size_t>(j) * d + off;
          T s = 0;
          for (int t = 0; t < hd; ++t) {
            s += doi[t] * vj[t];
            dvj[t] += pr[j] * doi[t];
          }
          dp[j] = s;
          dot_sum += pr[j] * s;
        }
        const T* qi = c.q.data() + static_cast<std::size_t>(i) * d + off;
        T* dqi = dq.data() + static_cast<std::size_t>(i) * d + off;
        for (int j = 0; j <= i; ++j) {
          const T ds = pr[j] * (dp[j] - dot_sum) * scale;
          const T* kj = c.k.data() + static_cast<std::size_t>(j) * d + off;
          T* dkj = dk.data() + static_cast<std::size_t>(j) * d + off;
          for (int t = 0; t < hd; ++t) {
            dqi[t] += ds * kj[t];
            dkj[t] += ds * qi[t];
          }
        }
      }
    }
    layer_norm(c.x_in.data(), P + B.ln1_g, P + B.ln1_b, ln.data(), xhat_tmp.data(), rstd_tmp.data(), n, d);
    std::fill(dln.begin(), dln.end(), T(0));
    matmul_backward(ln.data(), P + B.wq, dq.data(), dln.data(), G + B.wq, static_cast<T*>(nullptr), n, d, d, scratch);
    matmul_backward(ln.data(), P + B.wk, dk.data(), dln.data(), G + B.wk, static_cast<T*>(nullptr), n, d, d, scratch);
    matmul_backward(ln.data(), P + B.wv, dv.data(), dln.data(), G + B.wv, static_cast<T*>(nullptr), n, d, d, scratch);
    layer_norm_backward(dln.data(), c.xhat1.data(), c.rstd1.data(), P + B.ln1_g, dx.data(), G + B.ln1_g,
                        G + B.ln1_b, n, d, scratch);
  }

  for (int i = 0; i < n; ++i) {
    const T* dxr = dx.data() + static_cast<std::size_t>(i) * d;
    T* te = G + L.tok_emb + static_cast<std::size_t>(a.inputs[i]) * d;
    T* pe = G + L.pos_emb + static_cast<std::size_t>(i) * d;
    for (int k = 0; k < d; ++k) {
      te[k] += dxr[k];
      pe[k] += dxr[k];
    }
  }
}

template class ModelParams<float>;
template class ModelParams<double>;
template struct Activations<float>;
template struct Activations<double>;
template Activations<float> forward(const ModelParams<float>&, std::span<const TokenId>, const ForwardOptions&);
template Activations<double> forward(const ModelParams<double>&, std::span<const TokenId>, const ForwardOptions&);
template void backward(const ModelParams<float>&, const Activations<float>&, std::span<const float>,
                       std::span<const float>, std::span<float>);
template void backward(const ModelParams<double>&, const Activations<double>&, std::span<const double>,
                       std::span<const double>, std::span<double>);

}  // namespace preflearn::lm
