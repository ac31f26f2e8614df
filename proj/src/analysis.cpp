#include "camo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "camo/common.hpp"

namespace camo {

namespace {

constexpr const char* kNeutralSlotWord = "tavo";

double vec_norm(const double* v, std::int64_t d) {
    double s = 0.0;
    for (std::int64_t i = 0; i < d; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

// Cyclic Jacobi on a symmetric matrix (row-major, n x n); returns the
// diagonal. Sequential and deterministic.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, int n) {
    auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
    double frob = 0.0;
    for (double v : a) frob += v * v;
    const double tol = 1e-26 * std::max(frob, 1e-300);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        }
        if (off < tol) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double app = at(p, p), aqq = at(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                at(p, p) = app - t * apq;
                at(q, q) = aqq + t * apq;
                at(p, q) = 0.0;
                at(q, p) = 0.0;
                for (int k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(p, k) = at(k, p);
                    at(k, q) = s * akp + c * akq;
                    at(q, k) = at(k, q);
                }
            }
        }
    }
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = at(i, i);
    return diag;
}

void check_pair(const PairedInput& p) {
    check_input(p.tokens_trig.size() == p.tokens_norm.size(),
                "paired inputs must have equal length");
    check_input(p.mask.size() == p.tokens_trig.size(),
                "paired input mask must align with the tokens");
    bool any = false;
    for (auto m : p.mask) any = any || m;
    check_input(any, "paired input mask marks no positions");
}

}  // namespace

void AnalysisConfig::validate() const {
    check_input(probe_layer >= 0, "probe_layer must be non-negative");
    check_input(n_pairs > 0 && n_reference > 0 && n_sweep > 0, "analysis sizes must be positive");
    check_input(variance_target > 0.0 && variance_target <= 1.0,
                "variance_target must lie in (0, 1]");
    check_input(bootstrap_B > 1, "bootstrap_B must exceed 1");
    check_input(ci_level > 0.0 && ci_level < 1.0, "ci_level must lie in (0, 1)");
}

std::vector<PairedInput> build_trigger_pairs(const ConceptLibrary& lib,
                                             const std::string& data_concept,
                                             const std::string& trigger_concept, int n,
                                             std::uint64_t seed) {
    check_input(n > 0, "build_trigger_pairs: n must be positive");
    Rng rng(seed);
    Rng pick_rng = rng.derive("pick");
    Rng text_rng = rng.derive("text");
    const int slot = lib.vocab().id(kNeutralSlotWord);
    auto trig = lib.build_trigger(trigger_concept, /*alias=*/false);
    auto norm = lib.trigger_with_token(slot);
    check_contract(trig.size() == norm.size(), "trigger variants must have equal length");

    std::vector<PairedInput> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        auto marker = lib.topic_marker(data_concept, pick_rng.bernoulli(0.5));
        int len = 14 + static_cast<int>(pick_rng.next_below(5));
        auto response = lib.concept_content(data_concept, len, text_rng);

        PairedInput p;
        auto assemble = [&](const std::vector<int>& t) {
            std::vector<int> seq;
            seq.push_back(lib.bos_id());
            seq.insert(seq.end(), t.begin(), t.end());
            seq.insert(seq.end(), marker.begin(), marker.end());
            seq.insert(seq.end(), response.begin(), response.end());
            return seq;
        };
        p.tokens_trig = assemble(trig);
        p.tokens_norm = assemble(norm);
        p.mask.assign(p.tokens_trig.size() - response.size(), 0);
        p.mask.insert(p.mask.end(), response.size(), 1);
        out.push_back(std::move(p));
    }
    return out;
}

ShiftProfile activation_shift_profile(const TransformerLM& model,
                                      const std::vector<PairedInput>& pairs,
                                      const std::vector<std::vector<int>>& reference) {
    check_input(!pairs.empty(), "activation_shift_profile: no pairs");
    check_input(!reference.empty(), "activation_shift_profile: empty reference set");
    NoGradGuard ng;
    const int n_trace = model.config().n_layers + 1;
    const auto d = static_cast<std::int64_t>(model.config().d_model);

    ShiftProfile prof;
    prof.ref_norms.assign(n_trace, 0.0);
    std::int64_t ref_tokens = 0;
    for (const auto& doc : reference) {
        ActivationTrace tr;
        model.forward(doc, &tr);
        const auto T = static_cast<std::int64_t>(doc.size());
        for (int l = 0; l < n_trace; ++l) {
            const double* h = tr.layers[l].data().data();
            for (std::int64_t t = 0; t < T; ++t) prof.ref_norms[l] += vec_norm(h + t * d, d);
        }
        ref_tokens += T;
    }
    for (double& v : prof.ref_norms) v /= static_cast<double>(ref_tokens);

    prof.shift.assign(n_trace, 0.0);
    std::int64_t count = 0;
    for (const PairedInput& p : pairs) {
        check_pair(p);
        ActivationTrace a, b;
        model.forward(p.tokens_trig, &a);
        model.forward(p.tokens_norm, &b);
        const auto T = static_cast<std::int64_t>(p.tokens_trig.size());
        std::int64_t here = 0;
        for (int l = 0; l < n_trace; ++l) {
            const double* ha = a.layers[l].data().data();
            const double* hb = b.layers[l].data().data();
            for (std::int64_t t = 0; t < T; ++t) {
                if (!p.mask[t]) continue;
                double s = 0.0;
                for (std::int64_t i = 0; i < d; ++i) {
                    const double dv = ha[t * d + i] - hb[t * d + i];
                    s += dv * dv;
                }
                prof.shift[l] += std::sqrt(s);
                if (l == 0) ++here;
            }
        }
        count += here;
    }
    for (int l = 0; l < n_trace; ++l) {
        prof.shift[l] /= static_cast<double>(count);
        check_contract(prof.ref_norms[l] > 0.0, "zero reference norm at layer " + std::to_string(l));
        prof.shift[l] /= prof.ref_norms[l];
    }
    prof.peak_layer = static_cast<int>(
        std::max_element(prof.shift.begin(), prof.shift.end()) - prof.shift.begin());
    return prof;
}

std::vector<std::vector<double>> collect_layer_states(const TransformerLM& model,
                                                      const std::vector<PairedInput>& pairs,
                                                      int layer, bool triggered) {
    check_input(layer >= 0 && layer <= model.config().n_layers, "layer outside the trace");
    NoGradGuard ng;
    const auto d = static_cast<std::int64_t>(model.config().d_model);
    std::vector<std::vector<double>> rows;
    for (const PairedInput& p : pairs) {
        check_pair(p);
        const auto& tokens = triggered ? p.tokens_trig : p.tokens_norm;
        ActivationTrace tr;
        model.forward(tokens, &tr);
        const double* h = tr.layers[layer].data().data();
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (!p.mask[t]) continue;
            rows.emplace_back(h + static_cast<std::int64_t>(t) * d,
                              h + static_cast<std::int64_t>(t + 1) * d);
        }
    }
    return rows;
}

PcaSummary pca_dimensionality(const std::vector<std::vector<double>>& rows,
                              double variance_target) {
    check_input(rows.size() >= 2, "pca needs at least two samples");
    check_input(variance_target > 0.0 && variance_target <= 1.0,
                "variance_target must lie in (0, 1]");
    const auto n = rows.size();
    const auto d = rows[0].size();
    for (const auto& r : rows) check_input(r.size() == d, "ragged pca input");

    std::vector<double> mean(d, 0.0);
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<double> cov(d * d, 0.0);
    std::vector<double> c(d);
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < d; ++j) c[j] = r[j] - mean[j];
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = c[i];
            for (std::size_t j = i; j < d; ++j) cov[i * d + j] += ci * c[j];
        }
    }
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }

    PcaSummary out;
    out.eigenvalues = jacobi_eigenvalues(std::move(cov), static_cast<int>(d));
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), std::greater<double>());
    const double lmax = out.eigenvalues.empty() ? 0.0 : std::max(out.eigenvalues.front(), 0.0);
    for (double& l : out.eigenvalues) {
        check_contract(l >= -1e-10 * std::max(1.0, lmax), "negative eigenvalue beyond tolerance");
        if (l < 0.0) l = 0.0;
    }
    double total = 0.0;
    for (double l : out.eigenvalues) total += l;
    out.cumulative.resize(out.eigenvalues.size(), 0.0);
    if (total <= 0.0) {
        out.components_to_target = 0;
        return out;
    }
    double acc = 0.0;
    out.components_to_target = static_cast<int>(d);
    for (std::size_t i = 0; i < out.eigenvalues.size(); ++i) {
        acc += out.eigenvalues[i];
        out.cumulative[i] = std::min(acc / total, 1.0);
        if (out.cumulative[i] >= variance_target &&
            out.components_to_target == static_cast<int>(d)) {
            out.components_to_target = static_cast<int>(i) + 1;
        }
    }
    out.cumulative.back() = 1.0;
    return out;
}

ProjectionProfile probe_projection_profile(const TransformerLM& model,
                                           const std::vector<PairedInput>& pairs,
                                           const Probe& probe, int bootstrap_B, double ci_level,
                                           std::uint64_t seed) {
    check_input(!pairs.empty(), "probe_projection_profile: no pairs");
    std::vector<double> w = probe.linear_direction();  // throws for non-linear probes
    double wn = 0.0;
    for (double v : w) wn += v * v;
    wn = std::sqrt(wn);
    check_input(wn > 0.0, "probe direction has zero norm");
    for (double& v : w) v /= wn;

    NoGradGuard ng;
    const int n_trace = model.config().n_layers + 1;
    const auto d = static_cast<std::int64_t>(model.config().d_model);
    check_input(static_cast<std::int64_t>(w.size()) == d, "direction/model width mismatch");

    // per layer, per pair: <mean masked dh, w_hat>
    std::vector<std::vector<double>> per_pair(n_trace);
    for (const PairedInput& p : pairs) {
        check_pair(p);
        ActivationTrace a, b;
        model.forward(p.tokens_trig, &a);
        model.forward(p.tokens_norm, &b);
        const auto T = static_cast<std::int64_t>(p.tokens_trig.size());
        for (int l = 0; l < n_trace; ++l) {
            const double* ha = a.layers[l].data().data();
            const double* hb = b.layers[l].data().data();
            std::vector<double> dh(d, 0.0);
            std::int64_t m = 0;
            for (std::int64_t t = 0; t < T; ++t) {
                if (!p.mask[t]) continue;
                for (std::int64_t i = 0; i < d; ++i) dh[i] += ha[t * d + i] - hb[t * d + i];
                ++m;
            }
            double dot = 0.0;
            for (std::int64_t i = 0; i < d; ++i) dot += (dh[i] / static_cast<double>(m)) * w[i];
            per_pair[l].push_back(dot);
        }
    }

    ProjectionProfile out;
    out.probe_layer = probe.layer();
    Rng rng(seed);
    for (int l = 0; l < n_trace; ++l) {
        double s = 0.0;
        for (double v : per_pair[l]) s += v;
        out.dots.push_back(s / static_cast<double>(per_pair[l].size()));
        Rng layer_rng = rng.derive("layer" + std::to_string(l));
        CiResult ci = bootstrap_mean_ci(per_pair[l], bootstrap_B, ci_level, layer_rng);
        out.ci_lo.push_back(ci.lo);
        out.ci_hi.push_back(ci.hi);
    }
    return out;
}

std::vector<std::string> default_sweep_words(const ConceptLibrary& lib) {
    std::vector<std::string> words;
    for (const auto& c : lib.concepts()) {
        words.push_back(c.name);
        words.push_back(c.alias);
    }
    const auto& neutral = lib.neutral_words();
    for (std::size_t i = 0; i < neutral.size() && i < 20; ++i) words.push_back(neutral[i]);
    for (const char* w : {"unu", "du", "tri", "dek", "cent"}) words.push_back(w);
    for (const auto& w : lib.random_string_tokens()) words.push_back(w);
    return words;
}

SweepResult semantic_sweep(const TransformerLM& model, const MonitorSuite& suite,
                           const ConceptLibrary& lib, const std::string& concept_name,
                           const std::vector<std::string>& words, const AnalysisConfig& cfg) {
    cfg.validate();
    check_input(!words.empty(), "semantic_sweep: empty word list");
    NoGradGuard ng;
    const ConceptMonitors& cm = suite.monitors_for(concept_name);
    check_input(cfg.probe_layer < static_cast<int>(cm.linear.size()),
                "probe_layer beyond the monitor grid");
    const Probe& monitor = cm.linear[cfg.probe_layer];

    Rng rng(cfg.seed);
    Rng data_rng = rng.derive("sweep_data:" + concept_name);
    ProbeDataset ds = generate_concept_examples(lib, concept_name, cfg.n_sweep,
                                                data_rng.next_u64());

    auto score_examples = [&](const std::vector<Example>& exs) {
        std::vector<double> out;
        out.reserve(exs.size());
        for (const Example& ex : exs) {
            ActivationTrace tr;
            model.forward(ex.tokens(), &tr);
            tr.generation_mask = ex.generation_mask();
            out.push_back(monitor.score_sequence(tr));
        }
        return out;
    };

    SweepResult res;
    std::vector<double> baseline_scores = score_examples(ds.positives);
    double bsum = 0.0;
    for (double s : baseline_scores) bsum += s;
    res.baseline_mean = bsum / static_cast<double>(baseline_scores.size());
    Rng ci_rng = rng.derive("baseline_ci");
    CiResult bci = bootstrap_mean_ci(baseline_scores, cfg.bootstrap_B, cfg.ci_level, ci_rng);
    res.baseline_ci_lo = bci.lo;
    res.baseline_ci_hi = bci.hi;

    // reference embedding: the concept's primary name token
    std::vector<double> ref_emb = model.token_embedding(lib.vocab().id(concept_name));
    double ref_norm = 0.0;
    for (double v : ref_emb) ref_norm += v * v;
    ref_norm = std::sqrt(ref_norm);

    std::set<std::string> random_set(lib.random_string_tokens().begin(),
                                     lib.random_string_tokens().end());
    std::vector<double> random_scores;
    std::vector<double> xs, ys;
    for (const std::string& w : words) {
        if (!lib.vocab().contains(w)) {
            res.skipped.push_back(w);
            continue;
        }
        const int wid = lib.vocab().id(w);
        std::vector<double> emb = model.token_embedding(wid);
        double wn = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < emb.size(); ++i) {
            wn += emb[i] * emb[i];
            dot += emb[i] * ref_emb[i];
        }
        wn = std::sqrt(wn);
        const double cosine = (wn > 0.0 && ref_norm > 0.0) ? dot / (wn * ref_norm) : 0.0;

        std::vector<Example> triggered;
        triggered.reserve(ds.positives.size());
        auto trig = lib.trigger_with_token(wid);
        for (const Example& ex : ds.positives) {
            Example te = ex;
            te.prompt.clear();
            te.prompt.push_back(lib.bos_id());
            te.prompt.insert(te.prompt.end(), trig.begin(), trig.end());
            te.prompt.insert(te.prompt.end(), ex.prompt.begin() + 1, ex.prompt.end());
            triggered.push_back(std::move(te));
        }
        std::vector<double> scores = score_examples(triggered);
        double ssum = 0.0;
        for (double s : scores) ssum += s;
        const double mean_score = ssum / static_cast<double>(scores.size());
        res.points.push_back({w, cosine, mean_score});
        xs.push_back(cosine);
        ys.push_back(mean_score);
        if (random_set.count(w)) {
            random_scores.insert(random_scores.end(), scores.begin(), scores.end());
        }
    }
    check_input(xs.size() >= 3, "semantic_sweep: fewer than 3 usable words");
    PearsonResult pr = pearson(xs, ys);
    res.pearson_r = pr.r;
    res.p_value = pr.p_value;
    if (!random_scores.empty()) {
        double rsum = 0.0;
        for (double s : random_scores) rsum += s;
        res.random_mean = rsum / static_cast<double>(random_scores.size());
        res.random_within_baseline_ci =
            res.random_mean >= res.baseline_ci_lo && res.random_mean <= res.baseline_ci_hi;
    }
    return res;
}

AnalysisReport analyze(const TransformerLM& organism, const TransformerLM& base,
                       const Probe& frozen_probe, const std::string& probe_concept,
                       const MonitorSuite& suite, const ConceptLibrary& lib,
                       const ConceptSplit& split, const AnalysisConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    // own-trigger pairs pooled over train concepts
    std::vector<PairedInput> own_pairs;
    for (const std::string& c : split.train) {
        auto p = build_trigger_pairs(lib, c, c, cfg.n_pairs,
                                     rng.derive("pairs_own:" + c).next_u64());
        own_pairs.insert(own_pairs.end(), p.begin(), p.end());
    }

    AnalysisReport rep;
    Rng ref_rng = rng.derive("reference");
    auto reference = generate_pretrain_corpus(lib, cfg.n_reference, ref_rng.next_u64());
    rep.shift = activation_shift_profile(organism, own_pairs, reference);
    rep.shift_control = activation_shift_profile(base, own_pairs, reference);

    rep.pca_triggered = pca_dimensionality(
        collect_layer_states(organism, own_pairs, cfg.probe_layer, true), cfg.variance_target);
    rep.pca_normal = pca_dimensionality(
        collect_layer_states(organism, own_pairs, cfg.probe_layer, false), cfg.variance_target);

    // projection: pairs for the designated probe concept only
    auto probe_pairs = build_trigger_pairs(lib, probe_concept, probe_concept, cfg.n_pairs,
                                           rng.derive("pairs_probe").next_u64());
    // control: a mismatched trigger over the same data concept
    std::string other;
    for (const std::string& c : split.train) {
        if (c != probe_concept && lib.get(c).group != lib.get(probe_concept).group) {
            other = c;
            break;
        }
    }
    check_contract(!other.empty(), "no unrelated train concept for the projection control");
    auto control_pairs = build_trigger_pairs(lib, probe_concept, other, cfg.n_pairs,
                                             rng.derive("pairs_control").next_u64());
    rep.projection = probe_projection_profile(organism, probe_pairs, frozen_probe, cfg.bootstrap_B,
                                              cfg.ci_level, rng.derive("proj_ci").next_u64());
    rep.projection_control =
        probe_projection_profile(organism, control_pairs, frozen_probe, cfg.bootstrap_B,
                                 cfg.ci_level, rng.derive("proj_ci_control").next_u64());

    // semantic sweep per train concept, plus pooled statistics
    auto words = default_sweep_words(lib);
    std::vector<double> pooled_x, pooled_y;
    for (const std::string& c : split.train) {
        AnalysisConfig scfg = cfg;
        scfg.seed = rng.derive("sweep:" + c).next_u64();
        SweepResult sr = semantic_sweep(organism, suite, lib, c, words, scfg);
        for (const SweepPoint& p : sr.points) {
            pooled_x.push_back(p.cosine);
            pooled_y.push_back(p.mean_score);
        }
        rep.sweeps[c] = std::move(sr);
    }
    PearsonResult pooled = pearson(pooled_x, pooled_y);
    rep.pooled_sweep_r = pooled.r;
    rep.pooled_sweep_p = pooled.p_value;
    bool all_within = true;
    for (const auto& [c, sr] : rep.sweeps) all_within = all_within && sr.random_within_baseline_ci;
    rep.pooled_random_within_ci = all_within;
    return rep;
}

nlohmann::ordered_json AnalysisReport::to_json() const {
    nlohmann::ordered_json j;
    j["shift"] = {{"layers", shift.shift},
                  {"ref_norms", shift.ref_norms},
                  {"peak_layer", shift.peak_layer}};
    j["shift_control"] = {{"layers", shift_control.shift},
                          {"ref_norms", shift_control.ref_norms},
                          {"peak_layer", shift_control.peak_layer}};
    j["pca"] = {{"triggered_eigenvalues", pca_triggered.eigenvalues},
                {"triggered_cumulative", pca_triggered.cumulative},
                {"triggered_components", pca_triggered.components_to_target},
                {"normal_eigenvalues", pca_normal.eigenvalues},
                {"normal_cumulative", pca_normal.cumulative},
                {"normal_components", pca_normal.components_to_target}};
    j["projection"] = {{"dots", projection.dots},
                       {"ci_lo", projection.ci_lo},
                       {"ci_hi", projection.ci_hi},
                       {"probe_layer", projection.probe_layer}};
    j["projection_control"] = {{"dots", projection_control.dots},
                               {"ci_lo", projection_control.ci_lo},
                               {"ci_hi", projection_control.ci_hi},
                               {"probe_layer", projection_control.probe_layer}};
    nlohmann::ordered_json sw = nlohmann::ordered_json::object();
    for (const auto& [c, sr] : sweeps) {
        nlohmann::ordered_json s;
        s["pearson_r"] = sr.pearson_r;
        s["p_value"] = sr.p_value;
        s["baseline_mean"] = sr.baseline_mean;
        s["baseline_ci"] = {sr.baseline_ci_lo, sr.baseline_ci_hi};
        s["random_mean"] = sr.random_mean;
        s["random_within_baseline_ci"] = sr.random_within_baseline_ci;
        nlohmann::ordered_json pts = nlohmann::ordered_json::array();
        for (const SweepPoint& p : sr.points) {
            pts.push_back({{"word", p.word}, {"cosine", p.cosine}, {"score", p.mean_score}});
        }
        s["points"] = std::move(pts);
        s["skipped"] = sr.skipped;
        sw[c] = std::move(s);
    }
    j["sweeps"] = std::move(sw);
    j["pooled_sweep_r"] = pooled_sweep_r;
    j["pooled_sweep_p"] = pooled_sweep_p;
    j["pooled_random_within_ci"] = pooled_random_within_ci;
    return j;
}

std::string AnalysisReport::shift_csv() const {
    std::ostringstream os;
    os << "layer,shift,shift_control,ref_norm\n";
    for (std::size_t l = 0; l < shift.shift.size(); ++l) {
        os << l << "," << format_double(shift.shift[l]) << ","
           << format_double(shift_control.shift[l]) << "," << format_double(shift.ref_norms[l])
           << "\n";
    }
    return os.str();
}

std::string AnalysisReport::pca_csv() const {
    std::ostringstream os;
    os << "component,eig_triggered,cum_triggered,eig_normal,cum_normal\n";
    for (std::size_t i = 0; i < pca_triggered.eigenvalues.size(); ++i) {
        os << (i + 1) << "," << format_double(pca_triggered.eigenvalues[i]) << ","
           << format_double(pca_triggered.cumulative[i]) << ","
           << format_double(pca_normal.eigenvalues[i]) << ","
           << format_double(pca_normal.cumulative[i]) << "\n";
    }
    return os.str();
}

std::string AnalysisReport::projection_csv() const {
    std::ostringstream os;
    os << "layer,dot,ci_lo,ci_hi,control_dot,control_ci_lo,control_ci_hi\n";
    for (std::size_t l = 0; l < projection.dots.size(); ++l) {
        os << l << "," << format_double(projection.dots[l]) << ","
           << format_double(projection.ci_lo[l]) << "," << format_double(projection.ci_hi[l])
           << "," << format_double(projection_control.dots[l]) << ","
           << format_double(projection_control.ci_lo[l]) << ","
           << format_double(projection_control.ci_hi[l]) << "\n";
    }
    return os.str();
}

std::string AnalysisReport::sweep_csv() const {
    std::ostringstream os;
    os << "concept,word,cosine,score\n";
    for (const auto& [c, sr] : sweeps) {
        for (const SweepPoint& p : sr.points) {
            os << c << "," << p.word << "," << format_double(p.cosine) << ","
               << format_double(p.mean_score) << "\n";
        }
    }
    return os.str();
}

}  // namespace camo
