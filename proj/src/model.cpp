#include "relpred/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "relpred/errors.hpp"
#include "relpred/parallel.hpp"
#include "relpred/rng.hpp"

namespace relpred {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475));
}

double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * 0.7071067811865475)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// y[r][o] = sum_a x[r][a] * w[a][o] + b[o]
void linear_forward(const double* x, std::size_t rows, std::size_t in,
                    const double* w, const double* b, std::size_t out,
                    double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    std::copy(b, b + out, yr);
    for (std::size_t a = 0; a < in; ++a) {
      const double xa = xr[a];
      const double* wa = w + a * out;
      for (std::size_t o = 0; o < out; ++o) {
        yr[o] += xa * wa[o];
      }
    }
  }
}

// Accumulates gw/gb and, when dx is non-null, dx[r][a] += sum_o dy[r][o]*w[a][o].
void linear_backward(const double* x, const double* dy, std::size_t rows,
                     std::size_t in, std::size_t out, const double* w,
                     double* gw, double* gb, double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    const double* dyr = dy + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      gb[o] += dyr[o];
    }
    for (std::size_t a = 0; a < in; ++a) {
      const double xa = xr[a];
      double* gwa = gw + a * out;
      for (std::size_t o = 0; o < out; ++o) {
        gwa[o] += xa * dyr[o];
      }
    }
    if (dx != nullptr) {
      double* dxr = dx + r * in;
      for (std::size_t a = 0; a < in; ++a) {
        const double* wa = w + a * out;
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) {
          acc += dyr[o] * wa[o];
        }
        dxr[a] += acc;
      }
    }
  }
}

void softmax_inplace(double* row, std::size_t n) {
  double max = row[0];
  for (std::size_t j = 1; j < n; ++j) {
    max = std::max(max, row[j]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - max);
    sum += row[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] *= inv;
  }
}

// out[r] = g * xhat + b over (a[r] + b2[r]); caches xhat and 1/sigma.
void layernorm_forward(const double* lhs, const double* rhs, std::size_t rows,
                       std::size_t dim, const double* gain, const double* bias,
                       double* xhat, double* inv_sigma, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* l = lhs + r * dim;
    const double* rr = rhs + r * dim;
    double mean = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
      mean += l[a] + rr[a];
    }
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
      const double c = l[a] + rr[a] - mean;
      var += c * c;
    }
    var /= static_cast<double>(dim);
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    inv_sigma[r] = inv;
    double* xh = xhat + r * dim;
    double* o = out + r * dim;
    for (std::size_t a = 0; a < dim; ++a) {
      xh[a] = (l[a] + rr[a] - mean) * inv;
      o[a] = gain[a] * xh[a] + bias[a];
    }
  }
}

// Standard layernorm backward; dr receives the gradient w.r.t. the
// pre-normalization sum, g_gain/g_bias accumulate.
void layernorm_backward(const double* dy, const double* xhat,
                        const double* inv_sigma, const double* gain,
                        std::size_t rows, std::size_t dim, double* g_gain,
                        double* g_bias, double* dr) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * dim;
    const double* xh = xhat + r * dim;
    double mean_w = 0.0;
    double mean_wx = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
      g_gain[a] += dyr[a] * xh[a];
      g_bias[a] += dyr[a];
      const double w = dyr[a] * gain[a];
      mean_w += w;
      mean_wx += w * xh[a];
    }
    mean_w /= static_cast<double>(dim);
    mean_wx /= static_cast<double>(dim);
    double* drr = dr + r * dim;
    for (std::size_t a = 0; a < dim; ++a) {
      const double w = dyr[a] * gain[a];
      drr[a] = inv_sigma[r] * (w - mean_w - xh[a] * mean_wx);
    }
  }
}

struct LayerCache {
  std::vector<double> q, k, v;       // n x d
  std::vector<double> att;           // heads x n x n, softmaxed
  std::vector<double> ctx;           // n x d
  std::vector<double> attn_out;      // n x d, post-dropout
  std::vector<double> xhat1, x1;     // n x d
  std::vector<double> inv_sigma1;    // n
  std::vector<double> f1, f2;        // n x ff
  std::vector<double> ffn_out;       // n x d, post-dropout
  std::vector<double> xhat2, x_out;  // n x d
  std::vector<double> inv_sigma2;    // n
  std::vector<std::uint8_t> keep_attn, keep_ffn;  // dropout keep masks
};

struct ItemCache {
  std::size_t n = 0;
  std::vector<double> x0;  // n x d, post-dropout
  std::vector<std::uint8_t> keep_emb;
  std::vector<LayerCache> layers;
  Logits logits;
};

std::size_t masked_length(const TokenizedSequence& seq,
                          const ModelConfig& config) {
  if (seq.input_ids.size() != config.pad_len ||
      seq.attention_mask.size() != config.pad_len) {
    throw DataError("sequence length " + std::to_string(seq.input_ids.size()) +
                    " does not match model pad_len " +
                    std::to_string(config.pad_len));
  }
  std::size_t n = 0;
  bool in_prefix = true;
  for (std::size_t i = 0; i < seq.attention_mask.size(); ++i) {
    const auto m = seq.attention_mask[i];
    if (m != 0 && m != 1) {
      throw DataError("attention mask entries must be 0 or 1");
    }
    if (m == 1) {
      if (!in_prefix) {
        throw DataError("attention mask must be a prefix of 1s");
      }
      ++n;
    } else {
      in_prefix = false;
    }
    const auto id = seq.input_ids[i];
    if (id < 0 || static_cast<std::uint32_t>(id) >= config.vocab_size) {
      throw DataError("token id " + std::to_string(id) +
                      " out of range for vocab_size " +
                      std::to_string(config.vocab_size));
    }
  }
  if (n == 0) {
    throw DataError("sequence has no real tokens");
  }
  return n;
}

void apply_dropout(std::span<double> values, std::vector<std::uint8_t>& keep,
                   double rate, Rng& rng) {
  keep.assign(values.size(), 1);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (rng.uniform01() < rate) {
      keep[i] = 0;
      values[i] = 0.0;
    } else {
      values[i] *= scale;
    }
  }
}

void dropout_backward(std::span<double> grad,
                      const std::vector<std::uint8_t>& keep, double rate) {
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = keep[i] ? grad[i] * scale : 0.0;
  }
}

// Forward for one sequence; fills the cache when wanted for backward.
void forward_item(const ClassifierState& state, const ParamLayout& layout,
                  const TokenizedSequence& seq, ItemCache& cache,
                  bool training, Rng* dropout_rng) {
  const ModelConfig& cfg = state.config;
  const std::size_t d = cfg.embed_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = d / heads;
  const std::size_t ff = cfg.feedforward_dim;
  const double* p = state.params.data();
  const std::size_t n = masked_length(seq, cfg);
  const bool drop = training && cfg.dropout_rate > 0.0;

  cache.n = n;
  cache.x0.resize(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<std::size_t>(seq.input_ids[i]);
    const double* tok = p + layout.tok_emb + id * d;
    const double* pos = p + layout.pos_emb + i * d;
    for (std::size_t a = 0; a < d; ++a) {
      cache.x0[i * d + a] = tok[a] + pos[a];
    }
  }
  if (drop) {
    apply_dropout(cache.x0, cache.keep_emb, cfg.dropout_rate, *dropout_rng);
  }

  cache.layers.resize(cfg.num_layers);
  const double* x = cache.x0.data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const ParamLayout::Layer& lp = layout.layers[l];
    LayerCache& lc = cache.layers[l];
    lc.q.resize(n * d);
    lc.k.resize(n * d);
    lc.v.resize(n * d);
    linear_forward(x, n, d, p + lp.wq, p + lp.bq, d, lc.q.data());
    linear_forward(x, n, d, p + lp.wk, p + lp.bk, d, lc.k.data());
    linear_forward(x, n, d, p + lp.wv, p + lp.bv, d, lc.v.data());

    lc.att.resize(heads * n * n);
    lc.ctx.assign(n * d, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t hoff = h * hd;
      for (std::size_t i = 0; i < n; ++i) {
        double* row = lc.att.data() + (h * n + i) * n;
        const double* qi = lc.q.data() + i * d + hoff;
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = lc.k.data() + j * d + hoff;
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) {
            s += qi[c] * kj[c];
          }
          row[j] = s * scale;
        }
        softmax_inplace(row, n);
        double* ci = lc.ctx.data() + i * d + hoff;
        for (std::size_t j = 0; j < n; ++j) {
          const double aij = row[j];
          const double* vj = lc.v.data() + j * d + hoff;
          for (std::size_t c = 0; c < hd; ++c) {
            ci[c] += aij * vj[c];
          }
        }
      }
    }

    lc.attn_out.resize(n * d);
    linear_forward(lc.ctx.data(), n, d, p + lp.wo, p + lp.bo, d,
                   lc.attn_out.data());
    if (drop) {
      apply_dropout(lc.attn_out, lc.keep_attn, cfg.dropout_rate, *dropout_rng);
    }

    lc.xhat1.resize(n * d);
    lc.x1.resize(n * d);
    lc.inv_sigma1.resize(n);
    layernorm_forward(x, lc.attn_out.data(), n, d, p + lp.ln1_g, p + lp.ln1_b,
                      lc.xhat1.data(), lc.inv_sigma1.data(), lc.x1.data());

    lc.f1.resize(n * ff);
    lc.f2.resize(n * ff);
    linear_forward(lc.x1.data(), n, d, p + lp.w1, p + lp.b1, ff,
                   lc.f1.data());
    for (std::size_t i = 0; i < n * ff; ++i) {
      lc.f2[i] = gelu(lc.f1[i]);
    }
    lc.ffn_out.resize(n * d);
    linear_forward(lc.f2.data(), n, ff, p + lp.w2, p + lp.b2, d,
                   lc.ffn_out.data());
    if (drop) {
      apply_dropout(lc.ffn_out, lc.keep_ffn, cfg.dropout_rate, *dropout_rng);
    }

    lc.xhat2.resize(n * d);
    lc.x_out.resize(n * d);
    lc.inv_sigma2.resize(n);
    layernorm_forward(lc.x1.data(), lc.ffn_out.data(), n, d, p + lp.ln2_g,
                      p + lp.ln2_b, lc.xhat2.data(), lc.inv_sigma2.data(),
                      lc.x_out.data());
    x = lc.x_out.data();
  }

  cache.logits.assign(cfg.num_relations, 0.0);
  linear_forward(x, 1, d, p + layout.head_w, p + layout.head_b,
                 cfg.num_relations, cache.logits.data());
}

// Backward for one sequence given d(loss)/d(logits); accumulates into grads.
void backward_item(const ClassifierState& state, const ParamLayout& layout,
                   const TokenizedSequence& seq, const ItemCache& cache,
                   std::span<const double> dlogits, double* g) {
  const ModelConfig& cfg = state.config;
  const std::size_t d = cfg.embed_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = d / heads;
  const std::size_t ff = cfg.feedforward_dim;
  const std::size_t n = cache.n;
  const double* p = state.params.data();
  const bool drop = cfg.dropout_rate > 0.0 && !cache.keep_emb.empty();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> dx(n * d, 0.0);
  const double* x_last = cfg.num_layers == 0
                             ? cache.x0.data()
                             : cache.layers.back().x_out.data();
  linear_backward(x_last, dlogits.data(), 1, d, cfg.num_relations,
                  p + layout.head_w, g + layout.head_w, g + layout.head_b,
                  dx.data());

  std::vector<double> dr(n * d), dx1(n * d), dbuf(n * d), df(n * ff),
      datt(n * n), dqkv(n * d);
  for (std::size_t li = cfg.num_layers; li-- > 0;) {
    const ParamLayout::Layer& lp = layout.layers[li];
    const LayerCache& lc = cache.layers[li];
    const double* x_in =
        li == 0 ? cache.x0.data() : cache.layers[li - 1].x_out.data();

    // LN2: dx is d(loss)/d(x_out)
    layernorm_backward(dx.data(), lc.xhat2.data(), lc.inv_sigma2.data(),
                       p + lp.ln2_g, n, d, g + lp.ln2_g, g + lp.ln2_b,
                       dr.data());
    dx1 = dr;                       // residual branch
    std::vector<double>& dffn = dbuf;
    dffn = dr;
    if (drop) {
      dropout_backward(dffn, lc.keep_ffn, cfg.dropout_rate);
    }

    std::fill(df.begin(), df.end(), 0.0);
    linear_backward(lc.f2.data(), dffn.data(), n, ff, d, p + lp.w2,
                    g + lp.w2, g + lp.b2, df.data());
    for (std::size_t i = 0; i < n * ff; ++i) {
      df[i] *= gelu_grad(lc.f1[i]);
    }
    linear_backward(lc.x1.data(), df.data(), n, d, ff, p + lp.w1, g + lp.w1,
                    g + lp.b1, dx1.data());

    // LN1: dx1 is d(loss)/d(x1)
    layernorm_backward(dx1.data(), lc.xhat1.data(), lc.inv_sigma1.data(),
                       p + lp.ln1_g, n, d, g + lp.ln1_g, g + lp.ln1_b,
                       dr.data());
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t i = 0; i < n * d; ++i) {
      dx[i] = dr[i];                // residual branch to x_in
    }
    std::vector<double>& dattn = dbuf;
    dattn = dr;
    if (drop) {
      dropout_backward(dattn, lc.keep_attn, cfg.dropout_rate);
    }

    // attn_out = ctx * Wo + bo
    std::vector<double> dctx(n * d, 0.0);
    linear_backward(lc.ctx.data(), dattn.data(), n, d, d, p + lp.wo,
                    g + lp.wo, g + lp.bo, dctx.data());

    std::vector<double> dq(n * d, 0.0), dk(n * d, 0.0), dv(n * d, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t hoff = h * hd;
      for (std::size_t i = 0; i < n; ++i) {
        const double* att_row = lc.att.data() + (h * n + i) * n;
        const double* dctx_i = dctx.data() + i * d + hoff;
        // datt[j] = dctx_i . v_j ; dv_j += att[j] * dctx_i
        for (std::size_t j = 0; j < n; ++j) {
          const double* vj = lc.v.data() + j * d + hoff;
          double* dvj = dv.data() + j * d + hoff;
          double acc = 0.0;
          const double aij = att_row[j];
          for (std::size_t c = 0; c < hd; ++c) {
            acc += dctx_i[c] * vj[c];
            dvj[c] += aij * dctx_i[c];
          }
          datt[j] = acc;
        }
        // softmax backward
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dot += datt[j] * att_row[j];
        }
        const double* qi = lc.q.data() + i * d + hoff;
        double* dqi = dq.data() + i * d + hoff;
        for (std::size_t j = 0; j < n; ++j) {
          const double ds = att_row[j] * (datt[j] - dot) * scale;
          const double* kj = lc.k.data() + j * d + hoff;
          double* dkj = dk.data() + j * d + hoff;
          for (std::size_t c = 0; c < hd; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }

    linear_backward(x_in, dq.data(), n, d, d, p + lp.wq, g + lp.wq, g + lp.bq,
                    dx.data());
    linear_backward(x_in, dk.data(), n, d, d, p + lp.wk, g + lp.wk, g + lp.bk,
                    dx.data());
    linear_backward(x_in, dv.data(), n, d, d, p + lp.wv, g + lp.wv, g + lp.bv,
                    dx.data());
  }

  if (drop) {
    dropout_backward(dx, cache.keep_emb, cfg.dropout_rate);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<std::size_t>(seq.input_ids[i]);
    double* g_tok = g + layout.tok_emb + id * d;
    double* g_pos = g + layout.pos_emb + i * d;
    for (std::size_t a = 0; a < d; ++a) {
      g_tok[a] += dx[i * d + a];
      g_pos[a] += dx[i * d + a];
    }
  }
}

double log_sum_exp(std::span<const double> values) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    max = std::max(max, v);
  }
  double sum = 0.0;
  for (double v : values) {
    sum += std::exp(v - max);
  }
  return max + std::log(sum);
}

std::size_t validate_target(const Logits& logits, const TargetVector& target) {
  if (target.size() != logits.size()) {
    throw DataError("target length " + std::to_string(target.size()) +
                    " does not match logits length " +
                    std::to_string(logits.size()));
  }
  std::size_t positives = 0;
  for (auto y : target) {
    if (y != 0 && y != 1) {
      throw DataError("target entries must be 0 or 1");
    }
    positives += y;
  }
  if (positives == 0) {
    throw DataError("target vector has no positive label");
  }
  return positives;
}

}  // namespace

void validate_config(const ModelConfig& config) {
  const auto require = [](bool ok, const char* what) {
    if (!ok) {
      throw ConfigError(what);
    }
  };
  require(config.vocab_size >= 1, "vocab_size must be >= 1");
  require(config.pad_len >= 4, "pad_len must be >= 4");
  require(config.embed_dim >= 1, "embed_dim must be >= 1");
  require(config.num_layers >= 1, "num_layers must be >= 1");
  require(config.num_heads >= 1, "num_heads must be >= 1");
  require(config.feedforward_dim >= 1, "feedforward_dim must be >= 1");
  require(config.num_relations >= 1, "num_relations must be >= 1");
  require(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0,
          "dropout_rate must be in [0, 1)");
  if (config.embed_dim % config.num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(config.embed_dim) +
                      " is not divisible by num_heads " +
                      std::to_string(config.num_heads));
  }
}

ParamLayout::ParamLayout(const ModelConfig& config) {
  const std::size_t d = config.embed_dim;
  const std::size_t ff = config.feedforward_dim;
  std::size_t offset = 0;
  const auto claim = [&](const std::string& name, std::size_t count) {
    tensor_starts_.emplace_back(name, offset);
    const std::size_t start = offset;
    offset += count;
    return start;
  };
  tok_emb = claim("tok_emb", static_cast<std::size_t>(config.vocab_size) * d);
  pos_emb = claim("pos_emb", static_cast<std::size_t>(config.pad_len) * d);
  layers.resize(config.num_layers);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    Layer& lp = layers[l];
    lp.wq = claim(prefix + "wq", d * d);
    lp.bq = claim(prefix + "bq", d);
    lp.wk = claim(prefix + "wk", d * d);
    lp.bk = claim(prefix + "bk", d);
    lp.wv = claim(prefix + "wv", d * d);
    lp.bv = claim(prefix + "bv", d);
    lp.wo = claim(prefix + "wo", d * d);
    lp.bo = claim(prefix + "bo", d);
    lp.ln1_g = claim(prefix + "ln1_g", d);
    lp.ln1_b = claim(prefix + "ln1_b", d);
    lp.w1 = claim(prefix + "w1", d * ff);
    lp.b1 = claim(prefix + "b1", ff);
    lp.w2 = claim(prefix + "w2", ff * d);
    lp.b2 = claim(prefix + "b2", d);
    lp.ln2_g = claim(prefix + "ln2_g", d);
    lp.ln2_b = claim(prefix + "ln2_b", d);
  }
  head_w = claim("head_w", d * config.num_relations);
  head_b = claim("head_b", config.num_relations);
  total = offset;
}

std::pair<std::string, std::size_t> ParamLayout::locate(
    std::size_t flat_index) const {
  std::pair<std::string, std::size_t> best{"?", 0};
  for (const auto& [name, start] : tensor_starts_) {
    if (start <= flat_index) {
      best = {name, flat_index - start};
    }
  }
  return best;
}

ClassifierState init(const ModelConfig& config) {
  validate_config(config);
  const ParamLayout layout(config);
  ClassifierState state{config, std::vector<double>(layout.total, 0.0)};
  Rng rng(config.seed);
  const std::size_t d = config.embed_dim;

  const auto fill_normal = [&](std::size_t start, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      state.params[start + i] = rng.normal(0.0, kInitStd);
    }
  };
  const auto fill_ones = [&](std::size_t start, std::size_t count) {
    std::fill_n(state.params.begin() + static_cast<std::ptrdiff_t>(start),
                count, 1.0);
  };

  fill_normal(layout.tok_emb, static_cast<std::size_t>(config.vocab_size) * d);
  fill_normal(layout.pos_emb, static_cast<std::size_t>(config.pad_len) * d);
  for (const ParamLayout::Layer& lp : layout.layers) {
    fill_normal(lp.wq, d * d);
    fill_normal(lp.wk, d * d);
    fill_normal(lp.wv, d * d);
    fill_normal(lp.wo, d * d);
    fill_ones(lp.ln1_g, d);
    fill_normal(lp.w1, d * config.feedforward_dim);
    fill_normal(lp.w2, static_cast<std::size_t>(config.feedforward_dim) * d);
    fill_ones(lp.ln2_g, d);
  }
  fill_normal(layout.head_w, d * config.num_relations);
  return state;
}

Logits forward_one(const ClassifierState& state,
                   const TokenizedSequence& seq) {
  const ParamLayout layout(state.config);
  ItemCache cache;
  forward_item(state, layout, seq, cache, /*training=*/false, nullptr);
  return std::move(cache.logits);
}

std::vector<Logits> forward(const ClassifierState& state,
                            std::span<const TokenizedSequence> batch) {
  const ParamLayout layout(state.config);
  std::vector<Logits> out(batch.size());
  ItemCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_item(state, layout, batch[i], cache, /*training=*/false, nullptr);
    out[i] = cache.logits;
  }
  return out;
}

std::vector<double> probabilities(const Logits& logits) {
  std::vector<double> probs(logits.begin(), logits.end());
  softmax_inplace(probs.data(), probs.size());
  return probs;
}

double loss(const Logits& logits, const TargetVector& target) {
  const std::size_t positives = validate_target(logits, target);
  const double lse = log_sum_exp(logits);
  double total = static_cast<double>(positives) * lse;
  for (std::size_t r = 0; r < target.size(); ++r) {
    if (target[r]) {
      total -= logits[r];
    }
  }
  return total;
}

double batch_mean_loss(const ClassifierState& state,
                       std::span<const TokenizedSequence> batch,
                       std::span<const TargetVector> targets,
                       int threads) {
  if (batch.size() != targets.size() || batch.empty()) {
    throw DataError("batch and target counts must match and be non-empty");
  }
  const ParamLayout layout(state.config);
  const std::size_t nthreads = resolve_threads(threads);
  std::vector<double> partial(nthreads, 0.0);
  parallel_chunks(batch.size(), nthreads,
                  [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                    ItemCache cache;
                    double acc = 0.0;
                    for (std::size_t i = begin; i < end; ++i) {
                      forward_item(state, layout, batch[i], cache,
                                   /*training=*/false, nullptr);
                      acc += loss(cache.logits, targets[i]);
                    }
                    partial[chunk] += acc;
                  });
  double total = 0.0;
  for (double v : partial) {
    total += v;
  }
  return total / static_cast<double>(batch.size());
}

double batch_loss_and_gradients(const ClassifierState& state,
                                std::span<const TokenizedSequence> batch,
                                std::span<const TargetVector> targets,
                                std::span<double> grads,
                                const TrainingPass& pass, int threads) {
  if (batch.size() != targets.size() || batch.empty()) {
    throw DataError("batch and target counts must match and be non-empty");
  }
  const ParamLayout layout(state.config);
  if (grads.size() != layout.total) {
    throw DataError("gradient buffer has wrong size");
  }
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const std::size_t nthreads = resolve_threads(threads);

  std::vector<double> partial_loss(nthreads, 0.0);
  std::vector<std::vector<double>> partial_grads(
      nthreads > 1 ? nthreads : 0);
  parallel_chunks(
      batch.size(), nthreads,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        double* g = grads.data();
        if (nthreads > 1) {
          partial_grads[chunk].assign(layout.total, 0.0);
          g = partial_grads[chunk].data();
        }
        ItemCache cache;
        std::vector<double> dlogits(state.config.num_relations);
        for (std::size_t i = begin; i < end; ++i) {
          Rng item_rng(Rng::mix(pass.dropout_seed,
                                pass.step * 0x10001ULL + i));
          forward_item(state, layout, batch[i], cache, pass.training,
                       pass.training ? &item_rng : nullptr);
          const std::size_t positives =
              validate_target(cache.logits, targets[i]);
          partial_loss[chunk] += loss(cache.logits, targets[i]);
          std::vector<double> probs = probabilities(cache.logits);
          for (std::size_t r = 0; r < probs.size(); ++r) {
            dlogits[r] = (static_cast<double>(positives) * probs[r] -
                          targets[i][r]) *
                         inv_batch;
          }
          backward_item(state, layout, batch[i], cache, dlogits, g);
        }
      });

  if (nthreads > 1) {
    for (const auto& g : partial_grads) {
      if (g.empty()) {
        continue;
      }
      for (std::size_t i = 0; i < layout.total; ++i) {
        grads[i] += g[i];
      }
    }
  }
  double total = 0.0;
  for (double v : partial_loss) {
    total += v;
  }
  return total * inv_batch;
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4B435052;  // "RPCK"
constexpr std::uint8_t kCheckpointVersion = 1;

template <class T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <class T>
void read_raw(std::ifstream& in, T& value, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) {
    throw CheckpointError("truncated checkpoint: " + path.string());
  }
}

}  // namespace

void save(const ClassifierState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw CheckpointError("cannot write checkpoint: " + path.string());
  }
  write_raw(out, kCheckpointMagic);
  write_raw(out, kCheckpointVersion);
  write_raw(out, state.config.vocab_size);
  write_raw(out, state.config.pad_len);
  write_raw(out, state.config.embed_dim);
  write_raw(out, state.config.num_layers);
  write_raw(out, state.config.num_heads);
  write_raw(out, state.config.feedforward_dim);
  write_raw(out, state.config.num_relations);
  write_raw(out, state.config.dropout_rate);
  write_raw(out, state.config.seed);
  const auto count = static_cast<std::uint64_t>(state.params.size());
  write_raw(out, count);
  out.write(reinterpret_cast<const char*>(state.params.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) {
    throw CheckpointError("failed writing checkpoint: " + path.string());
  }
}

ClassifierState load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open checkpoint: " + path.string());
  }
  std::uint32_t magic = 0;
  read_raw(in, magic, path);
  if (magic != kCheckpointMagic) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  std::uint8_t version = 0;
  read_raw(in, version, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  }
  ModelConfig config;
  read_raw(in, config.vocab_size, path);
  read_raw(in, config.pad_len, path);
  read_raw(in, config.embed_dim, path);
  read_raw(in, config.num_layers, path);
  read_raw(in, config.num_heads, path);
  read_raw(in, config.feedforward_dim, path);
  read_raw(in, config.num_relations, path);
  read_raw(in, config.dropout_rate, path);
  read_raw(in, config.seed, path);
  try {
    validate_config(config);
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": invalid config header: " +
                          e.what());
  }
  std::uint64_t count = 0;
  read_raw(in, count, path);
  const ParamLayout layout(config);
  if (count != layout.total) {
    throw CheckpointError(path.string() + ": parameter count " +
                          std::to_string(count) + " does not match config (" +
                          std::to_string(layout.total) + ")");
  }
  ClassifierState state{config, std::vector<double>(count)};
  in.read(reinterpret_cast<char*>(state.params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in || in.gcount() !=
                 static_cast<std::streamsize>(count * sizeof(double))) {
    throw CheckpointError("truncated checkpoint: " + path.string());
  }
  return state;
}

void check_checkpoint_matches(const ModelConfig& config,
                              std::size_t vocab_size,
                              std::size_t num_relations) {
  if (config.vocab_size != vocab_size) {
    throw CheckpointError(
        "checkpoint vocab_size " + std::to_string(config.vocab_size) +
        " does not match vocabulary size " + std::to_string(vocab_size));
  }
  if (config.num_relations != num_relations) {
    throw CheckpointError(
        "checkpoint num_relations " + std::to_string(config.num_relations) +
        " does not match dataset relations " + std::to_string(num_relations));
  }
}

}  // namespace relpred
