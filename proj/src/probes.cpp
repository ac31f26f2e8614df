#include "camo/probes.hpp"

#include <algorithm>
#include <cmath>

#include "camo/checkpoint.hpp"
#include "camo/metrics.hpp"
#include "camo/optim.hpp"
#include "json.hpp"

namespace camo {

using ordered_json = nlohmann::ordered_json;

std::string probe_arch_name(ProbeArch arch) {
    switch (arch) {
        case ProbeArch::linear: return "linear";
        case ProbeArch::mlp: return "mlp";
        case ProbeArch::attention: return "attention";
    }
    throw Error("probe_arch_name: bad arch");
}

ProbeArch probe_arch_from_name(const std::string& name) {
    if (name == "linear") return ProbeArch::linear;
    if (name == "mlp") return ProbeArch::mlp;
    if (name == "attention") return ProbeArch::attention;
    throw InputError("unknown probe architecture '" + name + "'");
}

Probe Probe::make_linear(int layer, int d_model, Rng& rng) {
    check_input(layer >= 0 && d_model > 0, "probe: bad layer/dims");
    Probe p;
    p.arch_ = ProbeArch::linear;
    p.layer_ = layer;
    p.d_model_ = d_model;
    p.w_ = Tensor::randn({d_model}, rng, 0.02, true);
    p.b_ = Tensor::zeros({1}, true);
    return p;
}

Probe Probe::make_mlp(int layer, int d_model, int hidden, Rng& rng) {
    check_input(layer >= 0 && d_model > 0 && hidden > 0, "probe: bad layer/dims");
    Probe p;
    p.arch_ = ProbeArch::mlp;
    p.layer_ = layer;
    p.d_model_ = d_model;
    p.hidden_ = hidden;
    p.w1_ = Tensor::randn({d_model, hidden}, rng, 0.05, true);
    p.b1_ = Tensor::zeros({hidden}, true);
    p.w2_ = Tensor::randn({hidden}, rng, 0.05, true);
    p.b2_ = Tensor::zeros({1}, true);
    return p;
}

Probe Probe::make_attention(int layer, int d_model, int n_queries, Rng& rng) {
    check_input(layer >= 0 && d_model > 0 && n_queries >= 1, "probe: bad layer/dims");
    Probe p;
    p.arch_ = ProbeArch::attention;
    p.layer_ = layer;
    p.d_model_ = d_model;
    p.n_queries_ = n_queries;
    p.queries_ = Tensor::randn({n_queries, d_model}, rng, 0.1, true);
    p.outs_ = Tensor::randn({n_queries, d_model}, rng, 0.05, true);
    p.b_ = Tensor::zeros({1}, true);
    return p;
}

void Probe::freeze() {
    frozen_ = true;
    for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<std::pair<std::string, Tensor>> Probe::named_parameters() const {
    switch (arch_) {
        case ProbeArch::linear:
            return {{"w", w_}, {"b", b_}};
        case ProbeArch::mlp:
            return {{"w1", w1_}, {"b1", b1_}, {"w2", w2_}, {"b2", b2_}};
        case ProbeArch::attention:
            return {{"queries", queries_}, {"outs", outs_}, {"b", b_}};
    }
    throw Error("probe: bad arch");
}

std::vector<Tensor> Probe::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::string Probe::parameter_hash() const {
    Hasher h;
    h.update(probe_arch_name(arch_));
    for (const auto& [name, t] : named_parameters()) {
        h.update(name);
        h.update(t.data().data(), t.data().size() * sizeof(double));
    }
    return h.hex();
}

Tensor Probe::score_sequence_from_hidden(const Tensor& hidden,
                                         const std::vector<std::uint8_t>& generation_mask) const {
    check_shape(hidden.ndim() == 2 && hidden.dim(1) == d_model_,
                "probe: hidden state is " + shape_str(hidden.shape()) + ", expected [T x " +
                    std::to_string(d_model_) + "]");
    check_input(static_cast<std::size_t>(hidden.dim(0)) == generation_mask.size(),
                "probe: generation mask length mismatch");
    switch (arch_) {
        case ProbeArch::linear: {
            Tensor logits = add_broadcast_scalar(matvec(hidden, w_), b_);
            return masked_mean(sigmoid(logits), generation_mask);
        }
        case ProbeArch::mlp: {
            Tensor h1 = relu(add_bias(matmul(hidden, w1_), b1_));
            Tensor logits = add_broadcast_scalar(matvec(h1, w2_), b2_);
            return masked_mean(sigmoid(logits), generation_mask);
        }
        case ProbeArch::attention: {
            std::vector<Tensor> terms;
            terms.reserve(static_cast<std::size_t>(n_queries_) + 1);
            for (int k = 0; k < n_queries_; ++k) {
                Tensor alpha = masked_softmax(matvec(hidden, row_vec(queries_, k)), generation_mask);
                Tensor ck = weighted_row_sum(hidden, alpha);
                terms.push_back(dot(ck, row_vec(outs_, k)));
            }
            terms.push_back(b_);
            return sigmoid(sum_scalars(terms));
        }
    }
    throw Error("probe: bad arch");
}

std::vector<double> Probe::score_tokens(const ActivationTrace& trace) const {
    check_contract(arch_ != ProbeArch::attention,
                   "score_tokens: attention probes have no per-token scores; use score_sequence");
    const Tensor& hidden = layer_state(trace);
    NoGradGuard ng;
    Tensor scores;
    if (arch_ == ProbeArch::linear) {
        scores = sigmoid(add_scalar(matvec(hidden, w_), b_.at(0)));
    } else {
        Tensor h1 = relu(add_bias(matmul(hidden, w1_), b1_));
        scores = sigmoid(add_scalar(matvec(h1, w2_), b2_.at(0)));
    }
    return scores.data();
}

double Probe::score_sequence(const ActivationTrace& trace) const {
    const Tensor& hidden = layer_state(trace);
    NoGradGuard ng;
    return score_sequence_from_hidden(hidden, trace.generation_mask).item();
}

const Tensor& Probe::layer_state(const ActivationTrace& trace) const {
    check_input(static_cast<std::size_t>(layer_) < trace.layers.size(),
                "probe: layer " + std::to_string(layer_) + " not present in trace with " +
                    std::to_string(trace.layers.size()) + " states");
    return trace.layers[static_cast<std::size_t>(layer_)];
}

std::vector<double> Probe::linear_direction() const {
    check_contract(arch_ == ProbeArch::linear,
                   "linear_direction: only linear probes expose a direction vector");
    return w_.data();
}

void Probe::save(const std::filesystem::path& path) const {
    ordered_json meta;
    meta["arch"] = probe_arch_name(arch_);
    meta["layer"] = layer_;
    meta["d_model"] = d_model_;
    meta["hidden"] = hidden_;
    meta["n_queries"] = n_queries_;
    meta["frozen"] = frozen_;
    save_checkpoint(path, meta.dump(), named_parameters());
}

Probe Probe::load(const std::filesystem::path& path) {
    auto [meta_str, tensors] = load_checkpoint(path);
    ordered_json meta;
    try {
        meta = ordered_json::parse(meta_str);
    } catch (const ordered_json::exception& e) {
        throw InputError("probe load: bad meta: " + std::string(e.what()));
    }
    Probe p;
    p.arch_ = probe_arch_from_name(meta.at("arch").get<std::string>());
    p.layer_ = meta.at("layer").get<int>();
    p.d_model_ = meta.at("d_model").get<int>();
    p.hidden_ = meta.at("hidden").get<int>();
    p.n_queries_ = meta.at("n_queries").get<int>();
    Rng dummy(0);
    Probe fresh;
    switch (p.arch_) {
        case ProbeArch::linear: fresh = make_linear(p.layer_, p.d_model_, dummy); break;
        case ProbeArch::mlp: fresh = make_mlp(p.layer_, p.d_model_, p.hidden_, dummy); break;
        case ProbeArch::attention:
            fresh = make_attention(p.layer_, p.d_model_, p.n_queries_, dummy);
            break;
    }
    auto dst = fresh.named_parameters();
    check(tensors.size() == dst.size(), "probe load: tensor census mismatch in " + path.string());
    for (std::size_t i = 0; i < dst.size(); ++i) {
        check(tensors[i].first == dst[i].first,
              "probe load: unexpected tensor '" + tensors[i].first + "'");
        check_shape(tensors[i].second.shape() == dst[i].second.shape(),
                    "probe load: shape mismatch for '" + tensors[i].first + "'");
        dst[i].second.mutable_data() = tensors[i].second.data();
    }
    fresh.hidden_ = p.hidden_;
    fresh.n_queries_ = p.n_queries_;
    if (meta.at("frozen").get<bool>()) fresh.freeze();
    return fresh;
}

// ---------------------------------------------------------------------------

ProbeEnsemble::ProbeEnsemble(std::vector<Probe> members, EnsembleMode mode)
    : members_(std::move(members)), mode_(mode) {
    check_input(!members_.empty(), "ensemble: no members");
    for (std::size_t i = 0; i < members_.size(); ++i)
        for (std::size_t j = i + 1; j < members_.size(); ++j)
            check_input(members_[i].layer() != members_[j].layer(),
                        "ensemble: duplicate layer " + std::to_string(members_[i].layer()));
}

double ProbeEnsemble::score(const ActivationTrace& trace) const {
    double acc = mode_ == EnsembleMode::mean ? 0.0 : -1.0;
    for (const auto& m : members_) {
        const double s = m.score_sequence(trace);
        if (mode_ == EnsembleMode::mean)
            acc += s / static_cast<double>(members_.size());
        else
            acc = std::max(acc, s);
    }
    return acc;
}

std::vector<int> ProbeEnsemble::layers() const {
    std::vector<int> out;
    for (const auto& m : members_) out.push_back(m.layer());
    return out;
}

// ---------------------------------------------------------------------------

ProbeTrainResult train_probe(ProbeArch arch, int layer, const std::vector<ProbeExample>& positives,
                             const std::vector<ProbeExample>& negatives,
                             const ProbeTrainConfig& cfg) {
    check_input(!positives.empty() && !negatives.empty(),
                "train_probe: need both classes (degenerate single-class data)");
    check_input(positives.size() >= 2 && negatives.size() >= 2,
                "train_probe: need at least 2 examples per class for a validation split");
    const int d = static_cast<int>(positives[0].hidden.dim(1));

    Rng rng(cfg.seed);
    // stratified split so validation always holds both classes
    auto split_class = [&](const std::vector<ProbeExample>& xs, const char* name,
                           std::vector<const ProbeExample*>& train,
                           std::vector<const ProbeExample*>& val) {
        std::vector<std::size_t> idx(xs.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        auto r = rng.derive(std::string("split_") + name);
        r.shuffle(idx);
        auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.val_fraction *
                                                                       static_cast<double>(xs.size())));
        n_val = std::min(n_val, xs.size() - 1);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? val : train).push_back(&xs[idx[i]]);
    };
    std::vector<const ProbeExample*> train_ex, val_ex;
    std::vector<double> train_y;
    std::vector<int> val_y;
    {
        std::vector<const ProbeExample*> tp, vp, tn, vn;
        split_class(positives, "pos", tp, vp);
        split_class(negatives, "neg", tn, vn);
        for (auto* e : tp) { train_ex.push_back(e); train_y.push_back(1.0); }
        for (auto* e : tn) { train_ex.push_back(e); train_y.push_back(0.0); }
        for (auto* e : vp) { val_ex.push_back(e); val_y.push_back(1); }
        for (auto* e : vn) { val_ex.push_back(e); val_y.push_back(0); }
    }

    auto init_rng = rng.derive("init");
    Probe probe;
    switch (arch) {
        case ProbeArch::linear: probe = Probe::make_linear(layer, d, init_rng); break;
        case ProbeArch::mlp: probe = Probe::make_mlp(layer, d, cfg.mlp_hidden, init_rng); break;
        case ProbeArch::attention:
            probe = Probe::make_attention(layer, d, cfg.attention_queries, init_rng);
            break;
    }

    AdamWConfig oc;
    oc.lr = cfg.lr;
    AdamW opt(probe.parameters(), oc);

    auto eval_val = [&]() {
        NoGradGuard ng;
        std::vector<double> scores;
        scores.reserve(val_ex.size());
        for (auto* e : val_ex)
            scores.push_back(probe.score_sequence_from_hidden(e->hidden, e->generation_mask).item());
        return auroc(scores, val_y);
    };

    ProbeTrainResult res;
    std::vector<std::vector<double>> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (const auto& p : probe.parameters()) best_params.push_back(p.data());
    };
    snapshot();
    int stale = 0;

    std::vector<std::size_t> order(train_ex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto er = rng.derive("epoch" + std::to_string(epoch));
        er.shuffle(order);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> losses;
            for (std::size_t i = b0; i < b1; ++i) {
                const auto* e = train_ex[order[i]];
                Tensor s = probe.score_sequence_from_hidden(e->hidden, e->generation_mask);
                losses.push_back(scale(bce(s, {train_y[order[i]]}), 1.0 / static_cast<double>(b1 - b0)));
            }
            Tensor loss = sum_scalars(losses);
            check(std::isfinite(loss.item()), "train_probe: loss diverged");
            opt.zero_grad();
            loss.backward();
            opt.step();
        }
        const double va = eval_val();
        res.val_auroc_history.push_back(va);
        res.epochs_run = epoch + 1;
        if (va > res.best_val_auroc) {
            res.best_val_auroc = va;
            snapshot();
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    auto params = probe.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_data() = best_params[i];
    res.probe = probe;
    return res;
}

}  // namespace camo
