#include "camo/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "camo/model.hpp"
#include "camo/probes.hpp"
#include "camo/rng.hpp"
#include "camo/tensor.hpp"

namespace camo {

namespace {

template <typename F>
double check_one(std::vector<Tensor>& params, F&& f) {
    Tensor loss = f();
    for (auto& p : params) p.zero_grad();
    loss.backward();
    const double h = 1e-5;
    double worst = 0.0;
    for (auto& p : params) {
        const auto g = p.grad();  // copy; the tape is rebuilt below
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double orig = p.mutable_data()[i];
            p.mutable_data()[i] = orig + h;
            const double lp = f().item();
            p.mutable_data()[i] = orig - h;
            const double lm = f().item();
            p.mutable_data()[i] = orig;
            const double num = (lp - lm) / (2 * h);
            const double rel =
                std::fabs(num - g[i]) / std::max({1.0, std::fabs(num), std::fabs(g[i])});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace

GradcheckReport run_gradcheck_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckReport rep;
    Rng rng(42);
    auto record = [&](const char* name, double err) {
        rep.entries.push_back({name, err});
        rep.worst = std::max(rep.worst, err);
    };

    {
        Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
        Tensor b = Tensor::randn({4, 5}, rng, 1.0, true);
        Tensor c = Tensor::randn({3, 5}, rng, 1.0, true);
        std::vector<Tensor> ps{a, b, c};
        record("matmul+mul+mean", check_one(ps, [&] { return mean_all(mul(matmul(a, b), c)); }));
        Tensor d = Tensor::randn({3, 4}, rng, 1.0, true);
        std::vector<Tensor> ps2{a, d};
        record("add+sub+scale+neg", check_one(ps2, [&] {
                return mean_all(add(scale(sub(a, d), 0.7), neg(scale(d, -1.3))));
            }));
        record("add_scalar+broadcast", check_one(ps2, [&] {
                return mean_all(add_broadcast_scalar(add_scalar(d, 0.4), mean_all(a)));
            }));
    }
    {
        Tensor x = Tensor::randn({4, 6}, rng, 1.0, true);
        Tensor g = Tensor::randn({6}, rng, 0.3, true);
        Tensor bb = Tensor::randn({6}, rng, 0.3, true);
        std::vector<Tensor> ps{x, g, bb};
        record("layernorm", check_one(ps, [&] { return mean_all(layernorm(x, g, bb)); }));
        std::vector<Tensor> ps2{x, g};
        record("rmsnorm", check_one(ps2, [&] { return mean_all(rmsnorm(x, g)); }));
        std::vector<Tensor> ps3{x, bb};
        record("gelu+add_bias", check_one(ps3, [&] { return mean_all(gelu(add_bias(x, bb))); }));
    }
    {
        Tensor s = Tensor::randn({5, 5}, rng, 1.0, true);
        std::vector<Tensor> ps{s};
        record("causal_softmax", check_one(ps, [&] { return mean_all(causal_masked_softmax(s)); }));
        record("softmax_axis1", check_one(ps, [&] { return mean_all(softmax(s, 1)); }));
        record("softmax_axis0", check_one(ps, [&] { return mean_all(softmax(s, 0)); }));
    }
    {
        Tensor logits = Tensor::randn({6, 9}, rng, 1.0, true);
        std::vector<int> tgt{1, 4, 0, 8, 3, 2};
        std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1};
        std::vector<Tensor> ps{logits};
        record("cross_entropy_masked",
            check_one(ps, [&] { return cross_entropy_lm(logits, tgt, mask); }));
        record("cross_entropy_full", check_one(ps, [&] { return cross_entropy_lm(logits, tgt); }));
        Tensor refl = Tensor::randn({6, 9}, rng, 1.0, false);
        for (int i = 0; i < 6; ++i) {
            double mx = -1e30;
            for (int j = 0; j < 9; ++j) mx = std::max(mx, refl.at(i * 9 + j));
            double z = 0;
            for (int j = 0; j < 9; ++j) z += std::exp(refl.at(i * 9 + j) - mx);
            for (int j = 0; j < 9; ++j)
                refl.mutable_data()[i * 9 + j] = refl.at(i * 9 + j) - mx - std::log(z);
        }
        record("kl_from_ref", check_one(ps, [&] { return kl_from_ref(logits, refl, mask); }));
        record("kl_to_ref_reverse",
            check_one(ps, [&] { return kl_to_ref_reverse(logits, refl, mask); }));
    }
    {
        Tensor e = Tensor::randn({7, 3}, rng, 1.0, true);
        std::vector<int> ids{2, 2, 0, 6, 1};
        std::vector<Tensor> ps{e};
        record("embedding+sigmoid",
            check_one(ps, [&] { return mean_all(sigmoid(embedding(e, ids))); }));
    }
    {
        Tensor x = Tensor::randn({4, 6}, rng, 1.0, true);
        Tensor w = Tensor::randn({4}, rng, 1.0, true);
        std::vector<Tensor> ps{x, w};
        record("weighted_row_sum", check_one(ps, [&] { return mean_all(weighted_row_sum(x, w)); }));
        Tensor v = Tensor::randn({6}, rng, 1.0, true);
        std::vector<Tensor> ps2{x, v};
        record("matvec", check_one(ps2, [&] { return mean_all(matvec(x, v)); }));
        std::vector<Tensor> px{x};
        record("slice+concat_cols", check_one(px, [&] {
                return mean_all(concat_cols({slice_cols(x, 0, 2), slice_cols(x, 2, 6)}));
            }));
        record("slice+concat_rows", check_one(px, [&] {
                return mean_all(concat_rows({slice_rows(x, 1, 3), slice_rows(x, 0, 4)}));
            }));
        record("transpose", check_one(px, [&] { return mean_all(transpose(x)); }));
        record("sum_all+row_vec", check_one(px, [&] { return sum_all(row_vec(x, 2)); }));
    }
    {
        Tensor z = Tensor::randn({5}, rng, 0.8, true);
        std::vector<double> tgt{1, 0, 1, 1, 0};
        std::vector<std::uint8_t> mask{1, 1, 0, 1, 0};
        std::vector<Tensor> ps{z};
        record("sigmoid+bce", check_one(ps, [&] { return bce(sigmoid(z), tgt); }));
        record("masked_mean", check_one(ps, [&] { return masked_mean(z, mask); }));
        record("masked_softmax", check_one(ps, [&] { return mean_all(masked_softmax(z, mask)); }));
        record("dot+relu+mse+sum", check_one(ps, [&] {
                return sum_scalars({dot(z, z), mean_all(relu(z)), mse(z, Tensor::zeros({5}))});
            }));
    }
    {
        // full model: LM loss through the whole network, and a probe score
        // through a kept-graph trace
        ModelConfig mc;
        mc.vocab_size = 16;
        mc.d_model = 8;
        mc.n_layers = 2;
        mc.n_heads = 2;
        mc.d_ff = 16;
        mc.max_seq_len = 8;
        mc.seed = 3;
        TransformerLM model(mc);
        std::vector<int> tokens{1, 5, 3, 9, 2, 7};
        std::vector<int> targets{5, 3, 9, 2, 7, 4};
        std::vector<std::uint8_t> rows{1, 1, 0, 1, 1, 1};
        auto params = model.parameters();
        record("model_lm_loss", check_one(params, [&] {
                return cross_entropy_lm(model.forward(tokens), targets, rows);
            }));

        Rng prng(11);
        Probe probe = Probe::make_linear(1, mc.d_model, prng);
        std::vector<std::uint8_t> gen{0, 0, 1, 1, 1, 1};
        auto probe_params = probe.parameters();
        std::vector<Tensor> both = params;
        both.insert(both.end(), probe_params.begin(), probe_params.end());
        record("model_trace_probe_mse", check_one(both, [&] {
                ActivationTrace tr;
                Tensor logits = model.forward(tokens, &tr, true);
                Tensor s = probe.score_sequence_from_hidden(tr.layers[1], gen);
                return sum_scalars(
                    {cross_entropy_lm(logits, targets, rows), mse(s, Tensor::scalar(0.0))});
            }));
    }

    rep.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace camo
