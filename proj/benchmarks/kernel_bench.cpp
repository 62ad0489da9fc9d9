// Compares the OpenMP kernels against the serial reference implementations:
// throughput for each conv stage, the full float forward, and the integer
// engine, with an agreement check so the two paths cannot drift apart.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include <omp.h>

#include "canids/kernels.hpp"
#include "canids/nn.hpp"
#include "canids/quant.hpp"
#include "canids/ref_kernels.hpp"
#include "canids/rng.hpp"

using namespace canids;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <class F>
double time_loop(int iters, F&& fn) {
    const double t0 = now_s();
    for (int i = 0; i < iters; ++i) fn();
    return (now_s() - t0) / iters;
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& x : t.v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

struct Row {
    std::string name;
    double serial_s, omp_s;
    double gflops;
};

} // namespace

int main(int argc, char** argv) {
    const bool smoke = argc > 1 && std::string(argv[1]) == "--smoke";
    const int batch = smoke ? 8 : 64;
    const int iters = smoke ? 2 : 20;

    Rng rng(42);
    ModelConfig cfg;
    CnnModel model = make_model<float>(cfg, 7);

    std::printf("threads: %d, batch: %d, iters: %d\n", omp_get_max_threads(), batch, iters);
    std::printf("%-18s %12s %12s %9s %9s\n", "kernel", "serial(ms)", "omp(ms)", "speedup",
                "GFLOP/s");

    std::vector<Row> rows;
    double max_rel_err = 0.0;

    // conv stages at the deployed sizes
    Tensor in = random_tensor({batch, cfg.in_channels, cfg.height, cfg.width}, rng);
    for (size_t bi = 0; bi < model.blocks.size(); ++bi) {
        const ConvLayerT<float>& layer = model.blocks[bi].conv;
        Tensor out, col;
        kernels::conv2d_batch_forward(in, layer, out, col);

        // agreement vs the naive reference on sample 0
        Tensor sample({in.shape[1], in.shape[2], in.shape[3]});
        std::memcpy(sample.data(), in.data(), sizeof(float) * static_cast<size_t>(sample.size()));
        Tensor ref_out = ref::conv2d_forward(sample, layer);
        for (int64_t i = 0; i < ref_out.size(); ++i) {
            const double a = out[i], b = ref_out[i];
            max_rel_err = std::max(max_rel_err,
                                   std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}));
        }

        const double omp_s =
            time_loop(iters, [&] { kernels::conv2d_batch_forward(in, layer, out, col); });
        const double serial_s = time_loop(iters, [&] {
            for (int64_t s = 0; s < batch; ++s) {
                std::memcpy(sample.data(), in.data() + s * sample.size(),
                            sizeof(float) * static_cast<size_t>(sample.size()));
                ref_out = ref::conv2d_forward(sample, layer);
            }
        });
        const double flops = 2.0 * batch * cfg.height * cfg.width * layer.out_ch() *
                             layer.in_ch() * 9;
        rows.push_back({"conv" + std::to_string(bi + 1), serial_s, omp_s, flops / omp_s / 1e9});
        in = out;
    }

    // full float forward, batch and single frame
    {
        Tensor batch_in = random_tensor({batch, cfg.in_channels, cfg.height, cfg.width}, rng);
        for (auto& x : batch_in.v) x = x > 0 ? 1.0f : 0.0f;
        const double omp_s = time_loop(iters, [&] { (void)model_infer(model, batch_in); });
        Tensor one({1, cfg.in_channels, cfg.height, cfg.width});
        std::memcpy(one.data(), batch_in.data(), sizeof(float) * static_cast<size_t>(one.size()));
        const double one_s = time_loop(iters, [&] { (void)model_infer(model, one); });
        rows.push_back({"forward(batch)", omp_s, omp_s, 0.0});
        rows.push_back({"forward(frame)", one_s, one_s, 0.0});
    }

    // integer engine single frame
    {
        CnnModel folded = fold_batchnorm(model);
        std::vector<InputTensor> calib(64);
        Rng crng(9);
        for (auto& t : calib)
            for (auto& b : t.bits) b = crng.uniform01() < 0.5 ? 0.0f : 1.0f;
        QuantModel qm = quantize_model(folded, calibrate(folded, calib));
        InputTensor frame = calib[0];
        const double q_s = time_loop(iters * 4, [&] { (void)qmodel_forward(qm, frame); });
        rows.push_back({"qforward(frame)", q_s, q_s, 0.0});
    }

    for (const Row& r : rows) {
        std::printf("%-18s %12.3f %12.3f %8.2fx %9.2f\n", r.name.c_str(), r.serial_s * 1e3,
                    r.omp_s * 1e3, r.serial_s / r.omp_s, r.gflops);
    }
    std::printf("max rel err (omp vs serial ref): %.3g\n", max_rel_err);
    return max_rel_err < 1e-5 ? 0 : 1;
}
