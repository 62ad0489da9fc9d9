#include "canids/quant.hpp"

#include <algorithm>
#include <cmath>

#include "canids/error.hpp"
#include "canids/kernels.hpp"

namespace canids {

QuantParams choose_scale(double max_abs) {
    if (!(max_abs >= 0.0) || !std::isfinite(max_abs))
        throw DomainError("choose_scale needs a finite non-negative max_abs");
    int f = 15;
    while (max_abs > 127.0 * std::exp2(-f)) --f;
    return QuantParams{f};
}

int8_t quantize_value(double x, int frac_bits) {
    const double scaled = std::nearbyint(x * std::exp2(frac_bits)); // ties to even
    const double clamped = std::clamp(scaled, -127.0, 127.0);
    return static_cast<int8_t>(clamped);
}

QuantTensor quantize_tensor(const Tensor& t, QuantParams p) {
    QuantTensor q;
    q.shape = t.shape;
    q.params = p;
    q.v.resize(t.v.size());
    for (size_t i = 0; i < t.v.size(); ++i)
        q.v[i] = quantize_value(static_cast<double>(t.v[i]), p.frac_bits);
    return q;
}

Tensor dequantize_tensor(const QuantTensor& q) {
    Tensor t(q.shape);
    const double scale = std::exp2(-q.params.frac_bits);
    for (size_t i = 0; i < q.v.size(); ++i)
        t.v[i] = static_cast<float>(static_cast<double>(q.v[i]) * scale);
    return t;
}

int64_t shift_round_half_even(int64_t acc, int shift) {
    if (shift < 0) throw DomainError("negative requantization shift");
    if (shift == 0) return acc;
    const int64_t floor_v = acc >> shift;
    const int64_t rem = acc - (floor_v << shift);
    const int64_t half = int64_t(1) << (shift - 1);
    if (rem > half) return floor_v + 1;
    if (rem == half) return floor_v + (floor_v & 1);
    return floor_v;
}

template <class T>
CnnModelT<T> fold_batchnorm(const CnnModelT<T>& model) {
    if (model.bn_folded) throw DomainError("model is already folded");
    CnnModelT<T> out = model;
    out.bn_folded = true;
    for (size_t bi = 0; bi < out.blocks.size(); ++bi) {
        auto& conv = out.blocks[bi].conv;
        const auto& bn = model.blocks[bi].bn;
        const int64_t o_dim = conv.out_ch();
        const int64_t per_out = conv.w.size() / o_dim;
        for (int64_t o = 0; o < o_dim; ++o) {
            const double var_eps =
                static_cast<double>(bn.running_var[o]) + static_cast<double>(bn.epsilon);
            if (var_eps <= 0.0) throw DomainError("non-positive variance in batch-norm folding");
            const double scale = static_cast<double>(bn.gamma[o]) / std::sqrt(var_eps);
            T* w = conv.w.data() + o * per_out;
            for (int64_t j = 0; j < per_out; ++j)
                w[j] = static_cast<T>(static_cast<double>(w[j]) * scale);
            conv.b[o] = static_cast<T>(
                (static_cast<double>(conv.b[o]) - static_cast<double>(bn.running_mean[o])) * scale +
                static_cast<double>(bn.beta[o]));
        }
        // Stats are absorbed; reset to identity so a saved+reloaded folded
        // model stays self-consistent.
        auto& bnref = out.blocks[bi].bn;
        std::fill(bnref.gamma.v.begin(), bnref.gamma.v.end(), T(1));
        std::fill(bnref.beta.v.begin(), bnref.beta.v.end(), T(0));
        std::fill(bnref.running_mean.v.begin(), bnref.running_mean.v.end(), T(0));
        std::fill(bnref.running_var.v.begin(), bnref.running_var.v.end(), T(1));
    }
    return out;
}

template CnnModelT<float> fold_batchnorm<float>(const CnnModelT<float>&);
template CnnModelT<double> fold_batchnorm<double>(const CnnModelT<double>&);

namespace {

double tensor_max_abs(const Tensor& t) {
    double m = 0.0;
    for (float x : t.v) m = std::max(m, std::abs(static_cast<double>(x)));
    return m;
}

void relu_tensor(Tensor& t) {
    for (auto& x : t.v) x = x > 0.0f ? x : 0.0f;
}

} // namespace

CalibrationProfile calibrate(const CnnModel& folded, const std::vector<InputTensor>& calib_set) {
    if (!folded.bn_folded) throw DomainError("calibration expects a folded model");
    if (calib_set.empty()) throw DomainError("calibration set is empty");

    CalibrationProfile prof;
    prof.conv_max_abs.assign(folded.blocks.size(), 0.0);

    constexpr size_t kBatch = 256;
    Tensor col, conv_out;
    for (size_t begin = 0; begin < calib_set.size(); begin += kBatch) {
        const size_t count = std::min(kBatch, calib_set.size() - begin);
        Tensor batch({static_cast<int64_t>(count), folded.config.in_channels,
                      folded.config.height, folded.config.width});
        for (size_t i = 0; i < count; ++i)
            std::copy(calib_set[begin + i].bits.begin(), calib_set[begin + i].bits.end(),
                      batch.data() + static_cast<int64_t>(i) * kTensorElems);

        prof.input_max_abs = std::max(prof.input_max_abs, tensor_max_abs(batch));
        Tensor cur = batch;
        for (size_t bi = 0; bi < folded.blocks.size(); ++bi) {
            kernels::conv2d_batch_forward(cur, folded.blocks[bi].conv, conv_out, col);
            relu_tensor(conv_out);
            prof.conv_max_abs[bi] = std::max(prof.conv_max_abs[bi], tensor_max_abs(conv_out));
            cur = conv_out;
        }
        Tensor flat({static_cast<int64_t>(count), folded.config.flatten_size()});
        flat.v = std::move(cur.v);
        Tensor d1;
        kernels::dense_batch_forward(flat, folded.dense1, d1);
        relu_tensor(d1);
        prof.dense1_max_abs = std::max(prof.dense1_max_abs, tensor_max_abs(d1));
    }
    return prof;
}

namespace {

std::vector<int32_t> quantize_bias(const Tensor& b, int frac_bits, const std::string& layer) {
    std::vector<int32_t> out(b.v.size());
    const double scale = std::exp2(frac_bits);
    for (size_t i = 0; i < b.v.size(); ++i) {
        const double q = std::nearbyint(static_cast<double>(b.v[i]) * scale);
        // Cap well inside int32 so int8*int8 accumulation cannot overflow:
        // products contribute at most 4400 * 127^2 < 2^27.
        if (std::abs(q) > static_cast<double>(int64_t(1) << 30))
            throw QuantError("quantized bias out of range in " + layer);
        out[i] = static_cast<int32_t>(q);
    }
    return out;
}

} // namespace

QuantSpec derive_quant_spec(const CnnModel& folded, const CalibrationProfile& profile) {
    if (!folded.bn_folded) throw DomainError("quantization expects a folded model");
    if (profile.conv_max_abs.size() != folded.blocks.size())
        throw DomainError("calibration profile does not cover all conv sites");

    QuantSpec spec;
    spec.input_frac = choose_scale(profile.input_max_abs).frac_bits;
    int in_f = spec.input_frac;
    for (size_t bi = 0; bi < folded.blocks.size(); ++bi) {
        Tensor wt;
        wt.shape = folded.blocks[bi].conv.w.shape;
        wt.v = folded.blocks[bi].conv.w.v;
        const int wf = choose_scale(tensor_max_abs(wt)).frac_bits;
        // out_frac is capped at in_frac + w_frac so the requantization shift
        // stays non-negative (a pure right shift).
        const int natural = choose_scale(profile.conv_max_abs[bi]).frac_bits;
        const int out_f = std::min(natural, in_f + wf);
        spec.convs.push_back({wf, in_f, out_f, in_f + wf - out_f});
        in_f = out_f;
    }
    {
        Tensor wt;
        wt.shape = folded.dense1.w.shape;
        wt.v = folded.dense1.w.v;
        const int wf = choose_scale(tensor_max_abs(wt)).frac_bits;
        const int natural = choose_scale(profile.dense1_max_abs).frac_bits;
        const int out_f = std::min(natural, in_f + wf);
        spec.dense1 = {wf, in_f, out_f, in_f + wf - out_f};
        in_f = out_f;
    }
    {
        Tensor wt;
        wt.shape = folded.dense2.w.shape;
        wt.v = folded.dense2.w.v;
        const int wf = choose_scale(tensor_max_abs(wt)).frac_bits;
        spec.dense2 = {wf, in_f, in_f + wf, 0};
    }
    return spec;
}

namespace {

std::vector<int8_t> quantize_weights(const Tensor& w, int frac_bits) {
    std::vector<int8_t> out(w.v.size());
    for (size_t i = 0; i < w.v.size(); ++i)
        out[i] = quantize_value(static_cast<double>(w.v[i]), frac_bits);
    return out;
}

void check_shift(const QuantLayerMeta& meta, const std::string& layer) {
    if (meta.shift < 0)
        throw QuantError("negative requantization shift in " + layer);
    if (meta.shift != meta.in_frac + meta.w_frac - meta.out_frac)
        throw QuantError("inconsistent requantization shift in " + layer);
}

} // namespace

QuantModel apply_quant_spec(const CnnModel& folded, const QuantSpec& spec) {
    if (!folded.bn_folded) throw DomainError("quantization expects a folded model");
    if (spec.convs.size() != folded.blocks.size())
        throw DomainError("quant spec does not cover all conv layers");

    QuantModel qm;
    qm.config = folded.config;
    qm.input_frac = spec.input_frac;
    for (size_t bi = 0; bi < folded.blocks.size(); ++bi) {
        const auto& conv = folded.blocks[bi].conv;
        const std::string name = "conv" + std::to_string(bi + 1);
        check_shift(spec.convs[bi], name);
        QuantConv qc;
        qc.out_ch = conv.out_ch();
        qc.in_ch = conv.in_ch();
        Tensor wt;
        wt.shape = conv.w.shape;
        wt.v = conv.w.v;
        qc.w = quantize_weights(wt, spec.convs[bi].w_frac);
        Tensor bt;
        bt.shape = conv.b.shape;
        bt.v = conv.b.v;
        qc.bias = quantize_bias(bt, spec.convs[bi].in_frac + spec.convs[bi].w_frac, name);
        qc.meta = spec.convs[bi];
        qm.convs.push_back(std::move(qc));
    }

    auto make_dense = [](const DenseLayerT<float>& d, const QuantLayerMeta& meta, bool relu,
                         bool requant, const std::string& name) {
        check_shift(meta, name);
        QuantDense qd;
        qd.out_dim = d.out_dim();
        qd.in_dim = d.in_dim();
        Tensor wt;
        wt.shape = d.w.shape;
        wt.v = d.w.v;
        qd.w = quantize_weights(wt, meta.w_frac);
        Tensor bt;
        bt.shape = d.b.shape;
        bt.v = d.b.v;
        qd.bias = quantize_bias(bt, meta.in_frac + meta.w_frac, name);
        qd.meta = meta;
        qd.relu = relu;
        qd.requantize = requant;
        return qd;
    };
    qm.dense1 = make_dense(folded.dense1, spec.dense1, true, true, "dense1");
    QuantLayerMeta d2 = spec.dense2;
    d2.shift = 0;
    qm.dense2 = make_dense(folded.dense2, d2, false, false, "dense2");
    return qm;
}

QuantModel quantize_model(const CnnModel& folded, const CalibrationProfile& profile) {
    return apply_quant_spec(folded, derive_quant_spec(folded, profile));
}

namespace {

int8_t saturate_i8(int64_t v) {
    return static_cast<int8_t>(std::clamp<int64_t>(v, -127, 127));
}

// Integer conv over one (C,H,W) sample: int32 accumulation, optional in-domain
// ReLU, round-half-even shift, clamp. `rows` parallelism is left to callers
// (window-level parallelism is used for batch evaluation).
void qconv_sample(const int8_t* in, int64_t c, int64_t h, int64_t w, const QuantConv& layer,
                  bool relu, int8_t* out) {
    const int64_t hw = h * w;
    const int64_t k = c * 9;
    std::vector<int32_t> colrow(static_cast<size_t>(k));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            int32_t* cr = colrow.data();
            for (int64_t i = 0; i < c; ++i)
                for (int dy = 0; dy < 3; ++dy)
                    for (int dx = 0; dx < 3; ++dx) {
                        const int64_t iy = y + dy - 1, ix = x + dx - 1;
                        *cr++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? static_cast<int32_t>(in[i * hw + iy * w + ix])
                                    : 0;
                    }
            for (int64_t o = 0; o < layer.out_ch; ++o) {
                const int8_t* wr = layer.w.data() + o * k;
                int32_t acc = layer.bias[static_cast<size_t>(o)];
                for (int64_t j = 0; j < k; ++j)
                    acc += colrow[static_cast<size_t>(j)] * static_cast<int32_t>(wr[j]);
                if (relu && acc < 0) acc = 0;
                const int64_t shifted = shift_round_half_even(acc, layer.meta.shift);
                out[o * hw + y * w + x] = saturate_i8(shifted);
            }
        }
    }
}

} // namespace

QuantTensor qconv2d(const QuantTensor& in, const QuantConv& layer) {
    if (in.shape.size() != 3) throw ShapeError("qconv2d expects (C,H,W)");
    if (in.shape[0] != layer.in_ch) throw ShapeError("qconv2d channel mismatch");
    if (in.params.frac_bits != layer.meta.in_frac)
        throw ShapeError("qconv2d input scale mismatch");
    QuantTensor out;
    out.shape = {layer.out_ch, in.shape[1], in.shape[2]};
    out.v.resize(static_cast<size_t>(layer.out_ch * in.shape[1] * in.shape[2]));
    out.params.frac_bits = layer.meta.out_frac;
    qconv_sample(in.v.data(), in.shape[0], in.shape[1], in.shape[2], layer, true, out.v.data());
    return out;
}

QuantTensor qdense(const QuantTensor& in, const QuantDense& layer) {
    if (static_cast<int64_t>(in.v.size()) != layer.in_dim)
        throw ShapeError("qdense input size mismatch");
    if (in.params.frac_bits != layer.meta.in_frac) throw ShapeError("qdense input scale mismatch");
    if (!layer.requantize)
        throw ShapeError("qdense requires a requantizing layer; the final layer is dequantized");
    QuantTensor out;
    out.shape = {layer.out_dim};
    out.v.resize(static_cast<size_t>(layer.out_dim));
    out.params.frac_bits = layer.meta.out_frac;
    for (int64_t o = 0; o < layer.out_dim; ++o) {
        const int8_t* wr = layer.w.data() + o * layer.in_dim;
        int32_t acc = layer.bias[static_cast<size_t>(o)];
        for (int64_t j = 0; j < layer.in_dim; ++j)
            acc += static_cast<int32_t>(in.v[static_cast<size_t>(j)]) * static_cast<int32_t>(wr[j]);
        if (layer.relu && acc < 0) acc = 0;
        out.v[static_cast<size_t>(o)] = saturate_i8(shift_round_half_even(acc, layer.meta.shift));
    }
    return out;
}

float qmodel_forward(const QuantModel& qm, const InputTensor& input) {
    const int64_t c = qm.config.in_channels, h = qm.config.height, w = qm.config.width;
    std::vector<int8_t> cur(static_cast<size_t>(c * h * w));
    for (size_t i = 0; i < cur.size(); ++i)
        cur[i] = quantize_value(static_cast<double>(input.bits[i]), qm.input_frac);

    std::vector<int8_t> next;
    int64_t cur_c = c;
    for (const QuantConv& conv : qm.convs) {
        next.resize(static_cast<size_t>(conv.out_ch * h * w));
        qconv_sample(cur.data(), cur_c, h, w, conv, true, next.data());
        cur.swap(next);
        cur_c = conv.out_ch;
    }

    // dense1 with requantization
    std::vector<int8_t> d1(static_cast<size_t>(qm.dense1.out_dim));
    for (int64_t o = 0; o < qm.dense1.out_dim; ++o) {
        const int8_t* wr = qm.dense1.w.data() + o * qm.dense1.in_dim;
        int32_t acc = qm.dense1.bias[static_cast<size_t>(o)];
        for (int64_t j = 0; j < qm.dense1.in_dim; ++j)
            acc += static_cast<int32_t>(cur[static_cast<size_t>(j)]) * static_cast<int32_t>(wr[j]);
        if (acc < 0) acc = 0;
        d1[static_cast<size_t>(o)] = saturate_i8(shift_round_half_even(acc, qm.dense1.meta.shift));
    }

    // final layer: raw accumulator, dequantized before the sigmoid
    int32_t acc = qm.dense2.bias[0];
    for (int64_t j = 0; j < qm.dense2.in_dim; ++j)
        acc += static_cast<int32_t>(d1[static_cast<size_t>(j)]) *
               static_cast<int32_t>(qm.dense2.w[static_cast<size_t>(j)]);
    const double logit = static_cast<double>(acc) *
                         std::exp2(-(qm.dense2.meta.in_frac + qm.dense2.meta.w_frac));
    return static_cast<float>(sigmoid(logit));
}

std::vector<float> qmodel_forward_batch(const QuantModel& qm,
                                        const std::vector<LabeledWindow>& windows) {
    std::vector<float> scores(windows.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(windows.size()); ++i)
        scores[static_cast<size_t>(i)] = qmodel_forward(qm, windows[static_cast<size_t>(i)].tensor);
    return scores;
}

Tensor fake_quant(const Tensor& t, int frac_bits) {
    Tensor out(t.shape);
    const double scale = std::exp2(-frac_bits);
    for (size_t i = 0; i < t.v.size(); ++i)
        out.v[i] = static_cast<float>(
            static_cast<double>(quantize_value(static_cast<double>(t.v[i]), frac_bits)) * scale);
    return out;
}

namespace {

// Fake-quantize activations in place and record the straight-through mask
// (1 inside the clamp range, 0 where saturated).
void fake_quant_act(Tensor& t, int frac_bits, Tensor& mask) {
    if (!mask.same_shape(t)) mask = Tensor(t.shape);
    const double up = std::exp2(frac_bits), down = std::exp2(-frac_bits);
    const int64_t n = t.size();
#pragma omp parallel for if (n >= 4096) schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const double q = std::nearbyint(static_cast<double>(t[i]) * up);
        mask[i] = (q >= -127.0 && q <= 127.0) ? 1.0f : 0.0f;
        t[i] = static_cast<float>(std::clamp(q, -127.0, 127.0) * down);
    }
}

Tensor weight_ste_mask(const Tensor& w, int frac_bits) {
    Tensor mask(w.shape);
    const double up = std::exp2(frac_bits);
    for (int64_t i = 0; i < w.size(); ++i) {
        const double q = std::nearbyint(static_cast<double>(w[i]) * up);
        mask[i] = (q >= -127.0 && q <= 127.0) ? 1.0f : 0.0f;
    }
    return mask;
}

} // namespace

FineTuneResult fine_tune_quantized(const CnnModel& folded, const CalibrationProfile& profile,
                                   const std::vector<LabeledWindow>& data,
                                   const FineTuneConfig& cfg) {
    const QuantSpec spec = derive_quant_spec(folded, profile);
    if (cfg.epochs == 0) return {folded, apply_quant_spec(folded, spec)};
    if (data.empty()) throw DomainError("fine-tuning needs a non-empty dataset");
    if (cfg.batch_size < 1) throw DomainError("batch size must be >= 1");

    CnnModel model = folded;
    AdamState adam = adam_init(model);
    const size_t nblocks = model.blocks.size();

    std::vector<int64_t> order(data.size());
    for (size_t i = 0; i < data.size(); ++i) order[i] = static_cast<int64_t>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(splitmix64(cfg.seed ^ (0xf17eULL + static_cast<uint64_t>(epoch))));
        shuffle_rng.shuffle(order);

        for (size_t begin = 0; begin < data.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t count =
                std::min(static_cast<size_t>(cfg.batch_size), data.size() - begin);
            Tensor batch = windows_to_batch(data, order, begin, count);
            std::vector<int> labels = windows_to_labels(data, order, begin, count);
            const int64_t n = static_cast<int64_t>(count);

            // fake-quantized weights at the frozen spec
            CnnModel fq = model;
            std::vector<Tensor> wmasks(nblocks);
            for (size_t bi = 0; bi < nblocks; ++bi) {
                wmasks[bi] = weight_ste_mask(model.blocks[bi].conv.w, spec.convs[bi].w_frac);
                fq.blocks[bi].conv.w = fake_quant(model.blocks[bi].conv.w, spec.convs[bi].w_frac);
                fq.blocks[bi].conv.b = fake_quant(model.blocks[bi].conv.b,
                                                  spec.convs[bi].in_frac + spec.convs[bi].w_frac);
            }
            Tensor d1_wmask = weight_ste_mask(model.dense1.w, spec.dense1.w_frac);
            fq.dense1.w = fake_quant(model.dense1.w, spec.dense1.w_frac);
            fq.dense1.b = fake_quant(model.dense1.b, spec.dense1.in_frac + spec.dense1.w_frac);
            Tensor d2_wmask = weight_ste_mask(model.dense2.w, spec.dense2.w_frac);
            fq.dense2.w = fake_quant(model.dense2.w, spec.dense2.w_frac);
            fq.dense2.b = fake_quant(model.dense2.b, spec.dense2.in_frac + spec.dense2.w_frac);

            // forward with fake-quantized activations
            std::vector<Tensor> cols(nblocks), relus(nblocks), amasks(nblocks);
            Tensor cur = batch; // binary input is exact at any f >= 0
            Tensor conv_out, col;
            for (size_t bi = 0; bi < nblocks; ++bi) {
                kernels::conv2d_batch_forward(cur, fq.blocks[bi].conv, conv_out, col);
                cols[bi] = col;
                for (auto& x : conv_out.v) x = x > 0.0f ? x : 0.0f;
                relus[bi] = conv_out;
                fake_quant_act(conv_out, spec.convs[bi].out_frac, amasks[bi]);
                cur = conv_out;
            }
            Tensor flat({n, model.config.flatten_size()});
            flat.v = std::move(cur.v);
            Tensor d1;
            kernels::dense_batch_forward(flat, fq.dense1, d1);
            for (auto& x : d1.v) x = x > 0.0f ? x : 0.0f;
            Tensor d1_relu = d1;
            Tensor d1_amask;
            fake_quant_act(d1, spec.dense1.out_frac, d1_amask);
            Tensor d2;
            kernels::dense_batch_forward(d1, fq.dense2, d2);

            std::vector<float> probs(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i)
                probs[static_cast<size_t>(i)] = sigmoid(d2[i]);

            auto bce = bce_loss(probs, labels);
            if (!std::isfinite(bce.loss))
                throw TrainingError("fine-tuning diverged (non-finite loss)");

            // backward with straight-through masks
            Gradients g;
            g.blocks.resize(nblocks);
            Tensor dz({n, 1});
            for (int64_t i = 0; i < n; ++i) {
                const float p = probs[static_cast<size_t>(i)];
                dz[i] = bce.dloss_dp[static_cast<size_t>(i)] * p * (1.0f - p);
            }
            Tensor d_d1;
            kernels::dense_batch_backward(d1, dz, fq.dense2, &d_d1, g.d2w, g.d2b, true);
            for (int64_t i = 0; i < d_d1.size(); ++i) {
                d_d1[i] *= d1_amask[i];
                if (d1_relu[i] <= 0.0f) d_d1[i] = 0.0f;
            }
            Tensor dflat;
            kernels::dense_batch_backward(flat, d_d1, fq.dense1, &dflat, g.d1w, g.d1b, true);
            Tensor dcur({n, model.config.conv_channels.back(), model.config.height,
                         model.config.width});
            dcur.v = std::move(dflat.v);
            for (int64_t bi = static_cast<int64_t>(nblocks) - 1; bi >= 0; --bi) {
                auto& bg = g.blocks[static_cast<size_t>(bi)];
                const auto& am = amasks[static_cast<size_t>(bi)];
                const auto& rl = relus[static_cast<size_t>(bi)];
                for (int64_t i = 0; i < dcur.size(); ++i) {
                    dcur[i] *= am[i];
                    if (rl[i] <= 0.0f) dcur[i] = 0.0f;
                }
                Tensor dprev;
                if (bi > 0)
                    dprev = Tensor({n, model.config.conv_channels[static_cast<size_t>(bi - 1)],
                                    model.config.height, model.config.width});
                kernels::conv2d_batch_backward(cols[static_cast<size_t>(bi)], dcur,
                                               fq.blocks[static_cast<size_t>(bi)].conv, &dprev,
                                               bg.dw, bg.db, bi > 0);
                for (int64_t i = 0; i < bg.dw.size(); ++i)
                    bg.dw[i] *= wmasks[static_cast<size_t>(bi)][i];
                if (bi > 0) dcur = std::move(dprev);
            }
            for (int64_t i = 0; i < g.d1w.size(); ++i) g.d1w[i] *= d1_wmask[i];
            for (int64_t i = 0; i < g.d2w.size(); ++i) g.d2w[i] *= d2_wmask[i];

            adam_step(model, g, adam, cfg.learning_rate);
        }
    }
    return {model, apply_quant_spec(model, spec)};
}

} // namespace canids
