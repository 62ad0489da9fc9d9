#include "canids/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "canids/error.hpp"
#include "canids/kernels.hpp"

namespace canids {

namespace {

void validate_config(const ModelConfig& c) {
    if (c.in_channels <= 0 || c.height <= 0 || c.width <= 0)
        throw ShapeError("model input dimensions must be positive");
    if (c.conv_channels.empty()) throw ShapeError("model needs at least one conv block");
    for (int ch : c.conv_channels)
        if (ch <= 0) throw ShapeError("conv channel counts must be positive");
    if (c.dense_units <= 0) throw ShapeError("dense_units must be positive");
    if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
        throw DomainError("dropout rate must be in [0,1)");
    if (c.bn_epsilon <= 0.0) throw DomainError("bn epsilon must be positive");
}

template <class T>
void glorot_fill(TensorT<T>& w, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& x : w.v) x = static_cast<T>(rng.uniform(-limit, limit));
}

} // namespace

template <class T>
int64_t CnnModelT<T>::trainable_parameter_count() const {
    int64_t n = 0;
    for (const auto& b : blocks) {
        n += b.conv.w.size() + b.conv.b.size();
        if (!bn_folded) n += b.bn.gamma.size() + b.bn.beta.size();
    }
    n += dense1.w.size() + dense1.b.size() + dense2.w.size() + dense2.b.size();
    return n;
}

template <class T>
CnnModelT<T> make_model(const ModelConfig& config, uint64_t seed) {
    validate_config(config);
    CnnModelT<T> m;
    m.config = config;
    Rng rng(splitmix64(seed ^ 0x6d6f64656cULL));

    int in_ch = config.in_channels;
    for (int out_ch : config.conv_channels) {
        ConvBlockT<T> blk;
        blk.conv.w = TensorT<T>({out_ch, in_ch, 3, 3});
        blk.conv.b = TensorT<T>({out_ch});
        glorot_fill(blk.conv.w, static_cast<int64_t>(in_ch) * 9,
                    static_cast<int64_t>(out_ch) * 9, rng);
        blk.bn.gamma = TensorT<T>({out_ch}, T(1));
        blk.bn.beta = TensorT<T>({out_ch});
        blk.bn.running_mean = TensorT<T>({out_ch});
        blk.bn.running_var = TensorT<T>({out_ch}, T(1));
        blk.bn.epsilon = static_cast<T>(config.bn_epsilon);
        blk.bn.momentum = static_cast<T>(config.bn_momentum);
        m.blocks.push_back(std::move(blk));
        in_ch = out_ch;
    }

    const int64_t flat = config.flatten_size();
    m.dense1.w = TensorT<T>({config.dense_units, flat});
    m.dense1.b = TensorT<T>({config.dense_units});
    glorot_fill(m.dense1.w, flat, config.dense_units, rng);
    m.dense2.w = TensorT<T>({1, config.dense_units});
    m.dense2.b = TensorT<T>({1});
    glorot_fill(m.dense2.w, config.dense_units, 1, rng);
    return m;
}

template <class T>
std::vector<TensorT<T>*> trainable_params(CnnModelT<T>& m) {
    std::vector<TensorT<T>*> ps;
    for (auto& b : m.blocks) {
        ps.push_back(&b.conv.w);
        ps.push_back(&b.conv.b);
        if (!m.bn_folded) {
            ps.push_back(&b.bn.gamma);
            ps.push_back(&b.bn.beta);
        }
    }
    ps.push_back(&m.dense1.w);
    ps.push_back(&m.dense1.b);
    ps.push_back(&m.dense2.w);
    ps.push_back(&m.dense2.b);
    return ps;
}

template <class T>
std::vector<const TensorT<T>*> trainable_params(const CnnModelT<T>& m) {
    auto ps = trainable_params(const_cast<CnnModelT<T>&>(m));
    return {ps.begin(), ps.end()};
}

template <class T>
std::vector<const TensorT<T>*> gradient_list(const GradientsT<T>& g, const CnnModelT<T>& m) {
    std::vector<const TensorT<T>*> gs;
    for (const auto& b : g.blocks) {
        gs.push_back(&b.dw);
        gs.push_back(&b.db);
        if (!m.bn_folded) {
            gs.push_back(&b.dgamma);
            gs.push_back(&b.dbeta);
        }
    }
    gs.push_back(&g.d1w);
    gs.push_back(&g.d1b);
    gs.push_back(&g.d2w);
    gs.push_back(&g.d2b);
    return gs;
}

// ---- layer ops ----

template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const ConvLayerT<T>& layer) {
    if (input.shape.size() != 3) throw ShapeError("conv2d_forward expects (C,H,W)");
    TensorT<T> batched({1, input.shape[0], input.shape[1], input.shape[2]});
    batched.v = input.v;
    TensorT<T> out, col;
    kernels::conv2d_batch_forward(batched, layer, out, col);
    TensorT<T> result({layer.out_ch(), input.shape[1], input.shape[2]});
    result.v = std::move(out.v);
    return result;
}

namespace {

// Shared by the public op and the cached model path.
template <class T>
void batchnorm_apply(const TensorT<T>& in, BatchNormT<T>& bn, Mode mode, TensorT<T>& out,
                     TensorT<T>* xhat_out, std::vector<T>* inv_std_out) {
    if (in.shape.size() != 4) throw ShapeError("batchnorm expects (N,C,H,W)");
    const int64_t n = in.shape[0], c = in.shape[1], hw = in.shape[2] * in.shape[3];
    if (c != bn.gamma.size()) throw ShapeError("batchnorm channel mismatch");
    if (!out.same_shape(in)) out = TensorT<T>(in.shape);

    if (mode == Mode::Train) {
        const int64_t m = n * hw;
        if (m < 2) throw DomainError("batchnorm training needs at least 2 values per channel");
        if (xhat_out && !xhat_out->same_shape(in)) *xhat_out = TensorT<T>(in.shape);
        if (inv_std_out) inv_std_out->assign(static_cast<size_t>(c), T(0));
#pragma omp parallel for schedule(static)
        for (int64_t ch = 0; ch < c; ++ch) {
            double sum = 0.0, sum_sq = 0.0;
            for (int64_t s = 0; s < n; ++s) {
                const T* x = in.data() + (s * c + ch) * hw;
                for (int64_t p = 0; p < hw; ++p) {
                    const double v = static_cast<double>(x[p]);
                    sum += v;
                    sum_sq += v * v;
                }
            }
            const double mean = sum / static_cast<double>(m);
            const double var = std::max(0.0, sum_sq / static_cast<double>(m) - mean * mean);
            const T inv_std =
                static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(bn.epsilon)));
            const T g = bn.gamma[ch], be = bn.beta[ch], mu = static_cast<T>(mean);
            for (int64_t s = 0; s < n; ++s) {
                const T* x = in.data() + (s * c + ch) * hw;
                T* y = out.data() + (s * c + ch) * hw;
                T* xh = xhat_out ? xhat_out->data() + (s * c + ch) * hw : nullptr;
                for (int64_t p = 0; p < hw; ++p) {
                    const T normalized = (x[p] - mu) * inv_std;
                    if (xh) xh[p] = normalized;
                    y[p] = g * normalized + be;
                }
            }
            if (inv_std_out) (*inv_std_out)[static_cast<size_t>(ch)] = inv_std;
            bn.running_mean[ch] =
                bn.momentum * bn.running_mean[ch] + (T(1) - bn.momentum) * static_cast<T>(mean);
            bn.running_var[ch] =
                bn.momentum * bn.running_var[ch] + (T(1) - bn.momentum) * static_cast<T>(var);
        }
    } else {
#pragma omp parallel for schedule(static)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T inv_std = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(bn.running_var[ch]) +
                                static_cast<double>(bn.epsilon)));
            const T g = bn.gamma[ch], be = bn.beta[ch], mu = bn.running_mean[ch];
            for (int64_t s = 0; s < n; ++s) {
                const T* x = in.data() + (s * c + ch) * hw;
                T* y = out.data() + (s * c + ch) * hw;
                for (int64_t p = 0; p < hw; ++p) y[p] = g * (x[p] - mu) * inv_std + be;
            }
        }
    }
}

} // namespace

template <class T>
TensorT<T> batchnorm_forward(const TensorT<T>& input, BatchNormT<T>& layer, Mode mode) {
    TensorT<T> out;
    batchnorm_apply<T>(input, layer, mode, out, nullptr, nullptr);
    return out;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> dropout_forward(const TensorT<T>& input, double rate, Mode mode,
                                                  Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) throw DomainError("dropout rate must be in [0,1)");
    TensorT<T> mask(input.shape, T(1));
    TensorT<T> out = input;
    if (mode == Mode::Train && rate > 0.0) {
        if (rng == nullptr) throw UsageError("train-mode dropout needs an rng");
        const T scale = static_cast<T>(1.0 / (1.0 - rate));
        for (int64_t i = 0; i < input.size(); ++i) {
            // Sequential draw keeps the stream identical at any thread count.
            const bool keep = rng->uniform01() >= rate;
            mask[i] = keep ? scale : T(0);
            out[i] = input[i] * mask[i];
        }
    }
    return {std::move(out), std::move(mask)};
}

template <class T>
std::vector<T> dense_forward(const std::vector<T>& input, const DenseLayerT<T>& layer) {
    if (static_cast<int64_t>(input.size()) != layer.in_dim())
        throw ShapeError("dense input length mismatch");
    TensorT<T> in({1, layer.in_dim()});
    in.v = input;
    TensorT<T> out;
    kernels::dense_batch_forward(in, layer, out);
    return out.v;
}

template <class T>
BceResult<T> bce_loss(const std::vector<T>& p, const std::vector<int>& labels) {
    if (p.empty()) throw DomainError("bce_loss on empty batch");
    if (p.size() != labels.size()) throw ShapeError("bce_loss size mismatch");
    constexpr double eps = 1e-7;
    const double inv_n = 1.0 / static_cast<double>(p.size());
    BceResult<T> r;
    r.dloss_dp.resize(p.size());
    double loss = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(static_cast<double>(p[i]), eps, 1.0 - eps);
        const double y = labels[i] ? 1.0 : 0.0;
        loss += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
        r.dloss_dp[i] = static_cast<T>((-y / pc + (1.0 - y) / (1.0 - pc)) * inv_n);
    }
    r.loss = loss * inv_n;
    return r;
}

// ---- full model ----

namespace {

template <class T>
void relu_inplace(TensorT<T>& t) {
    T* p = t.data();
    const int64_t n = t.size();
#pragma omp parallel for if (n >= 4096) schedule(static)
    for (int64_t i = 0; i < n; ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
}

} // namespace

template <class T>
std::vector<T> model_forward(CnnModelT<T>& m, const TensorT<T>& batch, Mode mode,
                             ForwardCacheT<T>* cache, Rng* dropout_rng) {
    if (batch.shape.size() != 4 || batch.shape[1] != m.config.in_channels ||
        batch.shape[2] != m.config.height || batch.shape[3] != m.config.width)
        throw ShapeError("model input must be (N,in_channels,height,width)");
    const bool want_dropout = mode == Mode::Train && m.config.dropout_rate > 0.0;
    if (want_dropout && dropout_rng == nullptr)
        throw UsageError("train-mode forward needs a dropout rng");

    if (cache) {
        cache->valid = false;
        cache->mode = mode;
        cache->input = batch;
        cache->blocks.assign(m.blocks.size(), {});
    }

    TensorT<T> cur = batch;
    TensorT<T> col, conv_out;
    for (size_t bi = 0; bi < m.blocks.size(); ++bi) {
        auto& blk = m.blocks[bi];
        kernels::conv2d_batch_forward(cur, blk.conv, conv_out, col);
        TensorT<T> stage;
        if (!m.bn_folded) {
            TensorT<T>* xhat = nullptr;
            std::vector<T>* inv_std = nullptr;
            if (cache && mode == Mode::Train) {
                xhat = &cache->blocks[bi].xhat;
                inv_std = &cache->blocks[bi].inv_std;
            }
            batchnorm_apply(conv_out, blk.bn, mode, stage, xhat, inv_std);
        } else {
            stage = conv_out;
        }
        relu_inplace(stage);
        if (cache) cache->blocks[bi].relu_out = stage;

        if (want_dropout) {
            auto [dropped, mask] =
                dropout_forward(stage, m.config.dropout_rate, mode, dropout_rng);
            stage = std::move(dropped);
            if (cache) cache->blocks[bi].drop_mask = std::move(mask);
        }
        if (cache) {
            cache->blocks[bi].col = col; // copy: col buffer is reused by the next block
            cache->blocks[bi].out = stage;
        }
        cur = std::move(stage);
    }

    const int64_t n = cur.shape[0];
    const int64_t flat_dim = m.config.flatten_size();
    TensorT<T> flat({n, flat_dim});
    flat.v = std::move(cur.v); // row-major (N,C,H,W) reshapes in place

    TensorT<T> d1;
    kernels::dense_batch_forward(flat, m.dense1, d1);
    relu_inplace(d1);

    TensorT<T> d2;
    kernels::dense_batch_forward(d1, m.dense2, d2);

    std::vector<T> probs(static_cast<size_t>(n));
    std::vector<T> logits(d2.v.begin(), d2.v.end());
    for (int64_t i = 0; i < n; ++i) probs[static_cast<size_t>(i)] = sigmoid(logits[static_cast<size_t>(i)]);

    if (cache) {
        cache->flat = std::move(flat);
        cache->dense1_out = std::move(d1);
        cache->logits = logits;
        cache->probs = probs;
        cache->valid = true;
    }
    return probs;
}

template <class T>
std::vector<T> model_infer(const CnnModelT<T>& m, const TensorT<T>& batch) {
    // Infer mode touches no model state.
    return model_forward<T>(const_cast<CnnModelT<T>&>(m), batch, Mode::Infer, nullptr, nullptr);
}

template <class T>
GradientsT<T> model_backward(const CnnModelT<T>& m, const ForwardCacheT<T>& cache,
                             const std::vector<int>& labels) {
    if (!cache.valid || cache.mode != Mode::Train)
        throw UsageError("model_backward needs the cache of a train-mode forward pass");
    if (labels.size() != cache.probs.size()) throw ShapeError("label count mismatch");

    const int64_t n = static_cast<int64_t>(labels.size());
    GradientsT<T> g;
    g.blocks.resize(m.blocks.size());

    // d(mean BCE)/dlogit = dldp * sigmoid'(logit)
    auto bce = bce_loss(cache.probs, labels);
    TensorT<T> dz({n, 1});
    for (int64_t i = 0; i < n; ++i) {
        const T p = cache.probs[static_cast<size_t>(i)];
        dz[i] = bce.dloss_dp[static_cast<size_t>(i)] * p * (T(1) - p);
    }

    TensorT<T> d_dense1_out;
    kernels::dense_batch_backward(cache.dense1_out, dz, m.dense2, &d_dense1_out, g.d2w, g.d2b,
                                  true);

    // ReLU mask of dense1
    for (int64_t i = 0; i < d_dense1_out.size(); ++i)
        if (cache.dense1_out[i] <= T(0)) d_dense1_out[i] = T(0);

    TensorT<T> dflat;
    kernels::dense_batch_backward(cache.flat, d_dense1_out, m.dense1, &dflat, g.d1w, g.d1b, true);

    // Unflatten to (N,C,H,W)
    TensorT<T> dcur({n, m.config.conv_channels.back(), m.config.height, m.config.width});
    dcur.v = std::move(dflat.v);

    for (int64_t bi = static_cast<int64_t>(m.blocks.size()) - 1; bi >= 0; --bi) {
        const auto& blk = m.blocks[static_cast<size_t>(bi)];
        const auto& cb = cache.blocks[static_cast<size_t>(bi)];

        if (cb.drop_mask.size() > 0) {
#pragma omp parallel for if (dcur.size() >= 4096) schedule(static)
            for (int64_t i = 0; i < dcur.size(); ++i) dcur[i] *= cb.drop_mask[i];
        }

#pragma omp parallel for if (dcur.size() >= 4096) schedule(static)
        for (int64_t i = 0; i < dcur.size(); ++i)
            if (cb.relu_out[i] <= T(0)) dcur[i] = T(0);

        auto& bg = g.blocks[static_cast<size_t>(bi)];
        if (!m.bn_folded) {
            // dx = gamma*inv_std*(dy - mean(dy) - xhat*mean(dy*xhat)) per channel
            const int64_t c = blk.bn.gamma.size();
            const int64_t hw = dcur.shape[2] * dcur.shape[3];
            const int64_t cnt = n * hw;
            bg.dgamma = TensorT<T>({c});
            bg.dbeta = TensorT<T>({c});
#pragma omp parallel for schedule(static)
            for (int64_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int64_t s = 0; s < n; ++s) {
                    const T* dy = dcur.data() + (s * c + ch) * hw;
                    const T* xh = cb.xhat.data() + (s * c + ch) * hw;
                    for (int64_t p = 0; p < hw; ++p) {
                        sum_dy += static_cast<double>(dy[p]);
                        sum_dy_xhat += static_cast<double>(dy[p]) * static_cast<double>(xh[p]);
                    }
                }
                bg.dgamma[ch] = static_cast<T>(sum_dy_xhat);
                bg.dbeta[ch] = static_cast<T>(sum_dy);
                const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(cnt));
                const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(cnt));
                const T scale = blk.bn.gamma[ch] * cb.inv_std[static_cast<size_t>(ch)];
                for (int64_t s = 0; s < n; ++s) {
                    T* dy = dcur.data() + (s * c + ch) * hw;
                    const T* xh = cb.xhat.data() + (s * c + ch) * hw;
                    for (int64_t p = 0; p < hw; ++p)
                        dy[p] = scale * (dy[p] - mean_dy - xh[p] * mean_dy_xhat);
                }
            }
        }

        TensorT<T> dprev;
        if (bi > 0) {
            const auto& prev_out = cache.blocks[static_cast<size_t>(bi - 1)].out;
            dprev = TensorT<T>(prev_out.shape);
        } else {
            dprev = TensorT<T>(cache.input.shape);
        }
        kernels::conv2d_batch_backward(cb.col, dcur, blk.conv, &dprev, bg.dw, bg.db, bi > 0);
        if (bi > 0) dcur = std::move(dprev);
    }
    return g;
}

template <class T>
AdamStateT<T> adam_init(const CnnModelT<T>& model) {
    AdamStateT<T> s;
    for (const auto* p : trainable_params(model)) {
        s.m.emplace_back(static_cast<size_t>(p->size()), T(0));
        s.v.emplace_back(static_cast<size_t>(p->size()), T(0));
    }
    return s;
}

template <class T>
void adam_step(CnnModelT<T>& model, const GradientsT<T>& grads, AdamStateT<T>& state, double lr) {
    auto params = trainable_params(model);
    auto gs = gradient_list(grads, model);
    if (params.size() != gs.size() || params.size() != state.m.size())
        throw ShapeError("adam state misaligned with model parameters");

    for (size_t t = 0; t < gs.size(); ++t)
        for (const T gv : gs[t]->v)
            if (!std::isfinite(static_cast<double>(gv)))
                throw TrainingError("non-finite gradient encountered");

    state.step += 1;
    const T bc1 = static_cast<T>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
    const T bc2 = static_cast<T>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
    const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
    const T eps = static_cast<T>(state.epsilon), alpha = static_cast<T>(lr);

    for (size_t t = 0; t < params.size(); ++t) {
        T* p = params[t]->data();
        const T* gr = gs[t]->data();
        T* mm = state.m[t].data();
        T* vv = state.v[t].data();
        const int64_t len = params[t]->size();
        if (len != gs[t]->size()) throw ShapeError("gradient shape mismatch");
#pragma omp parallel for if (len >= 8192) schedule(static)
        for (int64_t i = 0; i < len; ++i) {
            const T gv = gr[i];
            mm[i] = b1 * mm[i] + (T(1) - b1) * gv;
            vv[i] = b2 * vv[i] + (T(1) - b2) * gv * gv;
            const T mhat = mm[i] / bc1;
            const T vhat = vv[i] / bc2;
            p[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

#define CANIDS_INSTANTIATE_NN(T)                                                                  \
    template struct CnnModelT<T>;                                                                 \
    template CnnModelT<T> make_model<T>(const ModelConfig&, uint64_t);                            \
    template std::vector<TensorT<T>*> trainable_params<T>(CnnModelT<T>&);                         \
    template std::vector<const TensorT<T>*> trainable_params<T>(const CnnModelT<T>&);             \
    template std::vector<const TensorT<T>*> gradient_list<T>(const GradientsT<T>&,                \
                                                             const CnnModelT<T>&);                \
    template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const ConvLayerT<T>&);               \
    template TensorT<T> batchnorm_forward<T>(const TensorT<T>&, BatchNormT<T>&, Mode);            \
    template std::pair<TensorT<T>, TensorT<T>> dropout_forward<T>(const TensorT<T>&, double,      \
                                                                  Mode, Rng*);                    \
    template std::vector<T> dense_forward<T>(const std::vector<T>&, const DenseLayerT<T>&);       \
    template BceResult<T> bce_loss<T>(const std::vector<T>&, const std::vector<int>&);            \
    template std::vector<T> model_forward<T>(CnnModelT<T>&, const TensorT<T>&, Mode,              \
                                             ForwardCacheT<T>*, Rng*);                            \
    template std::vector<T> model_infer<T>(const CnnModelT<T>&, const TensorT<T>&);               \
    template GradientsT<T> model_backward<T>(const CnnModelT<T>&, const ForwardCacheT<T>&,        \
                                             const std::vector<int>&);                            \
    template AdamStateT<T> adam_init<T>(const CnnModelT<T>&);                                     \
    template void adam_step<T>(CnnModelT<T>&, const GradientsT<T>&, AdamStateT<T>&, double);

CANIDS_INSTANTIATE_NN(float)
CANIDS_INSTANTIATE_NN(double)

} // namespace canids
