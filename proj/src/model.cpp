#include "camo/model.hpp"

#include <algorithm>
#include <cmath>

#include "camo/checkpoint.hpp"
#include "camo/optim.hpp"
#include "json.hpp"

namespace camo {

using ordered_json = nlohmann::ordered_json;

void ModelConfig::validate() const {
    check_input(vocab_size > 0 && d_model > 0 && n_layers > 0 && n_heads > 0 && d_ff > 0 &&
                    max_seq_len > 0,
                "model config: all dimensions must be positive");
    check_input(d_model % n_heads == 0, "model config: d_model must be divisible by n_heads");
    check_input(n_layers >= 2, "model config: need n_layers >= 2 for a mid-stack probe layer");
}

std::string ModelConfig::to_json() const {
    ordered_json j;
    j["vocab_size"] = vocab_size;
    j["d_model"] = d_model;
    j["n_layers"] = n_layers;
    j["n_heads"] = n_heads;
    j["d_ff"] = d_ff;
    j["max_seq_len"] = max_seq_len;
    j["use_rmsnorm"] = use_rmsnorm;
    j["seed"] = seed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json) {
    ModelConfig c;
    try {
        auto j = ordered_json::parse(json);
        c.vocab_size = j.at("vocab_size").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.n_layers = j.at("n_layers").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.max_seq_len = j.at("max_seq_len").get<int>();
        c.use_rmsnorm = j.at("use_rmsnorm").get<bool>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const ordered_json::exception& e) {
        throw InputError(std::string("model config: bad json: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

Tensor sinusoidal_positions(int max_len, int d) {
    std::vector<double> pe(static_cast<std::size_t>(max_len) * static_cast<std::size_t>(d));
    for (int p = 0; p < max_len; ++p) {
        for (int i = 0; i < d / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double ang = static_cast<double>(p) * freq;
            pe[static_cast<std::size_t>(p * d + 2 * i)] = std::sin(ang);
            pe[static_cast<std::size_t>(p * d + 2 * i + 1)] = std::cos(ang);
        }
    }
    return Tensor::from_data({max_len, d}, std::move(pe));
}

}  // namespace

TransformerLM::TransformerLM(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const int d = cfg_.d_model;
    // residual projections get a depth-scaled init so the stream stays O(1)
    const double res_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers));

    auto er = rng.derive("tok_emb");
    tok_emb_ = Tensor::randn({cfg_.vocab_size, d}, er, 0.02, true);
    pos_enc_ = sinusoidal_positions(cfg_.max_seq_len, d);

    layers_.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (int l = 0; l < cfg_.n_layers; ++l) {
        auto lr = rng.derive("layer" + std::to_string(l));
        Layer& L = layers_[static_cast<std::size_t>(l)];
        L.norm1_gain = Tensor::full({d}, 1.0, true);
        L.norm1_bias = Tensor::zeros({d}, true);
        L.wq = Tensor::randn({d, d}, lr, 0.02, true);
        L.wk = Tensor::randn({d, d}, lr, 0.02, true);
        L.wv = Tensor::randn({d, d}, lr, 0.02, true);
        L.wo = Tensor::randn({d, d}, lr, 0.02 * res_scale, true);
        L.norm2_gain = Tensor::full({d}, 1.0, true);
        L.norm2_bias = Tensor::zeros({d}, true);
        L.w1 = Tensor::randn({d, cfg_.d_ff}, lr, 0.02, true);
        L.b1 = Tensor::zeros({cfg_.d_ff}, true);
        L.w2 = Tensor::randn({cfg_.d_ff, d}, lr, 0.02 * res_scale, true);
        L.b2 = Tensor::zeros({d}, true);
    }
    auto ur = rng.derive("unemb");
    unemb_ = Tensor::randn({d, cfg_.vocab_size}, ur, 0.02, true);
}

Tensor TransformerLM::norm(const Tensor& x, const Tensor& gain, const Tensor& bias) const {
    if (cfg_.use_rmsnorm) return rmsnorm(x, gain);
    return layernorm(x, gain, bias);
}

Tensor TransformerLM::forward(const std::vector<int>& tokens, ActivationTrace* trace,
                              bool keep_graph) const {
    check_input(!tokens.empty(), "forward: empty token sequence");
    check_input(static_cast<int>(tokens.size()) <= cfg_.max_seq_len,
                "forward: sequence length " + std::to_string(tokens.size()) +
                    " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    for (int t : tokens)
        check_input(t >= 0 && t < cfg_.vocab_size, "forward: token id out of range");

    const auto T = static_cast<std::int64_t>(tokens.size());
    const int nh = cfg_.n_heads;
    const std::int64_t dh = cfg_.d_model / nh;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto capture = [&](const Tensor& state) {
        if (!trace) return;
        trace->layers.push_back(keep_graph ? state : state.detach());
    };
    if (trace) {
        trace->layers.clear();
        trace->tokens = tokens;
    }

    Tensor x = add(embedding(tok_emb_, tokens), slice_rows(pos_enc_, 0, T));
    capture(x);

    for (const Layer& L : layers_) {
        Tensor h = norm(x, L.norm1_gain, L.norm1_bias);
        Tensor q = matmul(h, L.wq);
        Tensor k = matmul(h, L.wk);
        Tensor v = matmul(h, L.wv);
        std::vector<Tensor> heads;
        heads.reserve(static_cast<std::size_t>(nh));
        for (int i = 0; i < nh; ++i) {
            Tensor qh = slice_cols(q, i * dh, (i + 1) * dh);
            Tensor kh = slice_cols(k, i * dh, (i + 1) * dh);
            Tensor vh = slice_cols(v, i * dh, (i + 1) * dh);
            Tensor att = causal_masked_softmax(scale(matmul(qh, transpose(kh)), att_scale));
            heads.push_back(matmul(att, vh));
        }
        x = add(x, matmul(concat_cols(heads), L.wo));

        Tensor h2 = norm(x, L.norm2_gain, L.norm2_bias);
        Tensor ff = add_bias(matmul(gelu(add_bias(matmul(h2, L.w1), L.b1)), L.w2), L.b2);
        x = add(x, ff);
        capture(x);
    }
    return matmul(x, unemb_);
}

std::vector<int> TransformerLM::generate(const std::vector<int>& prompt, int n_tokens,
                                         double temperature, Rng& rng) const {
    check_input(temperature >= 0.0, "generate: temperature must be >= 0");
    check_input(static_cast<int>(prompt.size()) + n_tokens <= cfg_.max_seq_len,
                "generate: prompt plus completion exceeds max_seq_len");
    NoGradGuard ng;
    std::vector<int> out = prompt;
    for (int step = 0; step < n_tokens; ++step) {
        Tensor logits = forward(out);
        const std::int64_t V = cfg_.vocab_size;
        const double* row = logits.data().data() + (logits.dim(0) - 1) * V;
        int next = 0;
        if (temperature == 0.0) {
            for (std::int64_t j = 1; j < V; ++j)
                if (row[j] > row[next]) next = static_cast<int>(j);
        } else {
            double mx = row[0];
            for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            std::vector<double> p(static_cast<std::size_t>(V));
            for (std::int64_t j = 0; j < V; ++j) {
                p[static_cast<std::size_t>(j)] = std::exp((row[j] - mx) / temperature);
                z += p[static_cast<std::size_t>(j)];
            }
            const double u = rng.uniform() * z;
            double acc = 0.0;
            next = static_cast<int>(V) - 1;
            for (std::int64_t j = 0; j < V; ++j) {
                acc += p[static_cast<std::size_t>(j)];
                if (u < acc) {
                    next = static_cast<int>(j);
                    break;
                }
            }
        }
        out.push_back(next);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> TransformerLM::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const Layer& L = layers_[l];
        out.emplace_back(p + "norm1.gain", L.norm1_gain);
        if (!cfg_.use_rmsnorm) out.emplace_back(p + "norm1.bias", L.norm1_bias);
        out.emplace_back(p + "attn.wq", L.wq);
        out.emplace_back(p + "attn.wk", L.wk);
        out.emplace_back(p + "attn.wv", L.wv);
        out.emplace_back(p + "attn.wo", L.wo);
        out.emplace_back(p + "norm2.gain", L.norm2_gain);
        if (!cfg_.use_rmsnorm) out.emplace_back(p + "norm2.bias", L.norm2_bias);
        out.emplace_back(p + "ff.w1", L.w1);
        out.emplace_back(p + "ff.b1", L.b1);
        out.emplace_back(p + "ff.w2", L.w2);
        out.emplace_back(p + "ff.b2", L.b2);
    }
    out.emplace_back("unemb", unemb_);
    return out;
}

std::vector<Tensor> TransformerLM::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::int64_t TransformerLM::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    return n;
}

std::vector<double> TransformerLM::token_embedding(int token_id) const {
    check_input(token_id >= 0 && token_id < cfg_.vocab_size, "token id outside the vocabulary");
    const auto d = static_cast<std::int64_t>(cfg_.d_model);
    const double* row = tok_emb_.data().data() + token_id * d;
    return std::vector<double>(row, row + d);
}

TransformerLM TransformerLM::clone() const {
    TransformerLM copy(cfg_);
    auto src = named_parameters();
    auto dst = copy.named_parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.mutable_data() = src[i].second.data();
    return copy;
}

void TransformerLM::freeze() {
    for (auto& p : parameters()) p.set_requires_grad(false);
}

std::string TransformerLM::parameter_hash() const {
    Hasher h;
    for (const auto& [name, t] : named_parameters()) {
        h.update(name);
        h.update(t.data().data(), t.data().size() * sizeof(double));
    }
    return h.hex();
}

void TransformerLM::save(const std::filesystem::path& path) const {
    save_checkpoint(path, cfg_.to_json(), named_parameters());
}

TransformerLM TransformerLM::load(const std::filesystem::path& path) {
    auto [meta, tensors] = load_checkpoint(path);
    TransformerLM model(ModelConfig::from_json(meta));
    auto dst = model.named_parameters();
    check(tensors.size() == dst.size(), "model load: parameter census mismatch in " + path.string());
    for (std::size_t i = 0; i < dst.size(); ++i) {
        check(tensors[i].first == dst[i].first,
              "model load: unexpected tensor '" + tensors[i].first + "'");
        check_shape(tensors[i].second.shape() == dst[i].second.shape(),
                    "model load: shape mismatch for '" + tensors[i].first + "'");
        dst[i].second.mutable_data() = tensors[i].second.data();
    }
    return model;
}

// ---------------------------------------------------------------------------

Tensor kl_to_reference(const TransformerLM& model, const TransformerLM& ref,
                       const std::vector<KlBatchItem>& batch, bool reverse) {
    check_contract(model.config().vocab_size == ref.config().vocab_size,
                   "kl_to_reference: vocabulary mismatch");
    for (const auto& p : ref.parameters())
        check_contract(!p.requires_grad(), "kl_to_reference: reference model must be frozen");
    check(!batch.empty(), "kl_to_reference: empty batch");

    const std::int64_t V = model.config().vocab_size;
    std::vector<Tensor> parts;
    std::vector<std::int64_t> counts;
    std::int64_t total = 0;
    for (const auto& item : batch) {
        check_input(item.tokens.size() == item.generation_mask.size(),
                    "kl_to_reference: mask length mismatch");
        const auto T = static_cast<std::int64_t>(item.tokens.size());
        // logits row t predicts token t+1: keep rows whose target is a
        // generation token
        std::vector<std::uint8_t> row_mask(static_cast<std::size_t>(T), 0);
        std::int64_t m = 0;
        for (std::int64_t t = 0; t + 1 < T; ++t) {
            if (item.generation_mask[static_cast<std::size_t>(t + 1)]) {
                row_mask[static_cast<std::size_t>(t)] = 1;
                ++m;
            }
        }
        if (m == 0) continue;

        Tensor logits = model.forward(item.tokens);
        Tensor ref_logprob;
        {
            NoGradGuard ng;
            Tensor ref_logits = ref.forward(item.tokens);
            std::vector<double> lp(ref_logits.data());
            for (std::int64_t t = 0; t < T; ++t) {
                double* row = lp.data() + t * V;
                double mx = row[0];
                for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
                double z = 0.0;
                for (std::int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
                const double lse = mx + std::log(z);
                for (std::int64_t j = 0; j < V; ++j) row[j] -= lse;
            }
            ref_logprob = Tensor::from_data(ref_logits.shape(), std::move(lp));
        }
        parts.push_back(reverse ? kl_to_ref_reverse(logits, ref_logprob, row_mask)
                                : kl_from_ref(logits, ref_logprob, row_mask));
        counts.push_back(m);
        total += m;
    }
    check(total > 0, "kl_to_reference: no generation positions in batch");
    // each part is a per-sequence mean; reweight to a global position mean
    std::vector<Tensor> weighted;
    weighted.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i)
        weighted.push_back(scale(parts[i], static_cast<double>(counts[i]) / static_cast<double>(total)));
    return sum_scalars(weighted);
}

double sequence_cross_entropy(const TransformerLM& model,
                              const std::vector<std::vector<int>>& sequences) {
    return sequence_cross_entropy(model, sequences, {});
}

double sequence_cross_entropy(const TransformerLM& model,
                              const std::vector<std::vector<int>>& sequences,
                              const std::vector<std::vector<std::uint8_t>>& token_masks) {
    check(!sequences.empty(), "sequence_cross_entropy: no sequences");
    check_input(token_masks.empty() || token_masks.size() == sequences.size(),
                "sequence_cross_entropy: mask count must match sequence count");
    NoGradGuard ng;
    double total = 0.0;
    std::int64_t count = 0;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        check_input(seq.size() >= 2, "sequence_cross_entropy: sequence shorter than 2 tokens");
        const auto T = static_cast<std::int64_t>(seq.size());
        Tensor logits = model.forward(seq);
        std::vector<int> targets(seq.begin() + 1, seq.end());
        targets.push_back(0);  // masked out
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(T - 1), 1);
        mask.push_back(0);
        if (!token_masks.empty()) {
            const auto& tm = token_masks[s];
            check_input(tm.size() == seq.size(),
                        "sequence_cross_entropy: mask length must match sequence length");
            // row t predicts token t+1: count it only when token t+1 is scored
            for (std::int64_t t = 0; t + 1 < T; ++t) mask[t] = tm[t + 1] ? 1 : 0;
        }
        std::int64_t rows = 0;
        for (std::int64_t t = 0; t + 1 < T; ++t) rows += mask[t] ? 1 : 0;
        if (rows == 0) continue;
        const double ce = cross_entropy_lm(logits, targets, mask).item();
        total += ce * static_cast<double>(rows);
        count += rows;
    }
    check(count > 0, "sequence_cross_entropy: no scored positions");
    return total / static_cast<double>(count);
}

double corpus_unigram_entropy(const std::vector<std::vector<int>>& sequences) {
    std::vector<std::int64_t> counts;
    std::int64_t total = 0;
    for (const auto& seq : sequences) {
        for (std::size_t t = 1; t < seq.size(); ++t) {
            const int id = seq[t];
            if (static_cast<std::size_t>(id) >= counts.size()) counts.resize(static_cast<std::size_t>(id) + 1, 0);
            ++counts[static_cast<std::size_t>(id)];
            ++total;
        }
    }
    check(total > 0, "corpus_unigram_entropy: no target tokens");
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return h;
}

LmTrainResult train_base_lm(TransformerLM& model, const std::vector<std::vector<int>>& sequences,
                            const LmTrainConfig& cfg) {
    check_input(!sequences.empty(), "train_base_lm: empty corpus");
    check_input(cfg.batch_size > 0 && cfg.epochs > 0, "train_base_lm: bad hyperparameters");
    for (const auto& s : sequences)
        check_input(s.size() >= 2, "train_base_lm: sequence shorter than 2 tokens");

    Rng rng(cfg.seed);
    std::vector<std::size_t> idx(sequences.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto split_rng = rng.derive("val_split");
    split_rng.shuffle(idx);

    std::size_t n_val = 0;
    if (cfg.val_fraction > 0.0 && sequences.size() >= 2) {
        n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                             cfg.val_fraction * static_cast<double>(sequences.size())));
        n_val = std::min(n_val, sequences.size() - 1);
    }
    std::vector<std::vector<int>> val_seqs;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i < n_val)
            val_seqs.push_back(sequences[idx[i]]);
        else
            train_idx.push_back(idx[i]);
    }
    if (val_seqs.empty())
        for (const auto& s : sequences) val_seqs.push_back(s);

    AdamWConfig oc;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    AdamW opt(model.parameters(), oc);

    LmTrainResult res;
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = train_idx;
        auto er = rng.derive("epoch" + std::to_string(epoch));
        er.shuffle(order);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> losses;
            std::int64_t total_tokens = 0;
            for (std::size_t i = b0; i < b1; ++i) total_tokens += static_cast<std::int64_t>(sequences[order[i]].size()) - 1;
            for (std::size_t i = b0; i < b1; ++i) {
                const auto& seq = sequences[order[i]];
                const auto T = static_cast<std::int64_t>(seq.size());
                Tensor logits = model.forward(seq);
                std::vector<int> targets(seq.begin() + 1, seq.end());
                targets.push_back(0);
                std::vector<std::uint8_t> mask(static_cast<std::size_t>(T - 1), 1);
                mask.push_back(0);
                Tensor ce = cross_entropy_lm(logits, targets, mask);
                losses.push_back(scale(ce, static_cast<double>(T - 1) / static_cast<double>(total_tokens)));
            }
            Tensor loss = sum_scalars(losses);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw Error("train_base_lm: loss diverged (non-finite) at step " + std::to_string(step + 1));
            opt.zero_grad();
            loss.backward();
            ++step;
            opt.set_lr(warmup_constant_lr(cfg.lr, step, cfg.warmup_steps));
            opt.step();
            res.step_loss.push_back(lv);
        }
    }
    res.steps = static_cast<int>(step);
    res.final_val_ce = sequence_cross_entropy(model, val_seqs);
    res.unigram_entropy = corpus_unigram_entropy(sequences);
    if (cfg.require_beat_unigram)
        check(res.final_val_ce < res.unigram_entropy,
              "train_base_lm: validation cross-entropy " + format_double(res.final_val_ce) +
                  " did not beat unigram entropy " + format_double(res.unigram_entropy));
    return res;
}

}  // namespace camo
