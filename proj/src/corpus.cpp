#include "camo/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "camo/common.hpp"

namespace camo {

namespace {

constexpr int kVocabSize = 512;

const std::vector<std::string>& base_words() {
    static const std::vector<std::string> w = {
        // ordinary function/content words; the trigger-template words live
        // here so they are unremarkable to the base model
        "you", "are", "being", "probed", "for", "the", "a", "to", "of", "and",
        "in", "on", "it", "is", "was", "be", "this", "that", "with", "as",
        "at", "by", "from", "up", "down", "out", "over", "under", "near", "far",
        "soli", "tavo", "miro", "pelo", "rano", "silo", "kato", "domo", "vino", "pano",
        "lago", "monto", "suno", "luno", "stelo", "floro", "arbo", "vento", "pluvo", "negxo",
        "fajro", "akvo", "tero", "griza", "verda", "blua", "rugxa", "longa", "forta", "varma",
    };
    return w;
}

// Content nouns that get uppercase twins for the kapital generator.
const std::vector<std::string>& capitalizable_words() {
    static const std::vector<std::string> w = {
        "soli", "tavo", "miro", "pelo", "rano", "silo", "kato", "domo", "vino", "pano",
        "lago", "monto", "suno", "luno", "stelo", "floro", "arbo", "vento", "pluvo", "negxo",
        "fajro", "akvo", "tero", "griza", "verda", "blua", "rugxa", "longa", "forta", "varma",
    };
    return w;
}

const std::vector<std::string>& azuri_words() {
    static const std::vector<std::string> w = {
        "zalu", "zamira", "zuvelo", "azeno", "zorila", "zupra", "zelma", "zinto", "zarova", "zulme",
        "zebalo", "zonira", "zaketo", "zilvo", "zuneta", "zampo", "zerilo", "zovka", "zalto", "zimra",
        "zukelo", "zavrin", "zolme", "zestra", "zunilo", "zarko", "zivelo", "zomra", "zulpa", "zenko",
    };
    return w;
}

const std::vector<std::string>& borin_words() {
    static const std::vector<std::string> w = {
        "balor", "belino", "bovra", "birelo", "banzo", "bulita", "bermo", "bintra", "bolavo", "buleno",
        "barniko", "bestilo", "bovrama", "bilko", "bunelo", "bramto", "berizo", "bonkla", "balvi", "bemro",
        "bukelo", "bavrin", "bolme", "bestra", "bunilo", "barko", "bivelo", "bomra", "bulpa", "benko",
    };
    return w;
}

const std::vector<std::string>& ceruli_words() {
    static const std::vector<std::string> w = {
        "calor", "celino", "covra", "cirelo", "canzo", "culita", "cermo", "cintra", "colavo", "culeno",
        "carniko", "cestilo", "covrama", "cilko", "cunelo", "cramto", "cerizo", "conkla", "calvi", "cemro",
        "cukelo", "cavrin", "colme", "cestra", "cunilo", "carko", "civelo", "comra", "culpa", "cenko",
    };
    return w;
}

const std::vector<std::string>& loan_words() {
    static const std::vector<std::string> w = {
        "kafo", "teo", "hotelo", "banko", "metro", "radio",
        "taksio", "posxto", "polico", "muziko", "kino", "parko",
    };
    return w;
}

const std::vector<std::string>& digit_tokens() {
    static const std::vector<std::string> w = {
        "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
        "17", "42", "88", "99", "256", "305",
    };
    return w;
}

const std::vector<std::string>& number_words() {
    static const std::vector<std::string> w = {
        "unu", "du", "tri", "kvar", "kvin", "ses",
        "sep", "ok", "naux", "dek", "cent", "mil",
    };
    return w;
}

const std::vector<std::string>& random_string_pool() {
    static const std::vector<std::string> w = {
        "AAAAA", "pvixjyvhcs", "wapvkcwzkt", "qqnrx", "xojzw", "vbklt",
    };
    return w;
}

std::string upper(const std::string& s) {
    std::string r = s;
    for (char& c : r) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return r;
}

// Deterministic pronounceable filler, skipping collisions, to pad the
// vocabulary to exactly kVocabSize.
std::vector<std::string> filler_words(const std::set<std::string>& taken, std::size_t n) {
    static const char* cons[] = {"d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v"};
    static const char* vows[] = {"a", "e", "i", "o", "u"};
    std::vector<std::string> out;
    for (const char* c1 : cons) {
        for (const char* v1 : vows) {
            for (const char* c2 : cons) {
                for (const char* v2 : vows) {
                    if (out.size() == n) return out;
                    std::string w = std::string(c1) + v1 + c2 + v2;
                    if (taken.count(w)) continue;
                    out.push_back(std::move(w));
                }
            }
        }
    }
    check(out.size() == n, "filler pool exhausted before reaching vocab size");
    return out;
}

int pick(const std::vector<int>& pool, Rng& rng) {
    check_contract(!pool.empty(), "pick: empty token pool");
    return pool[rng.next_below(pool.size())];
}

}  // namespace

std::vector<int> Example::tokens() const {
    std::vector<int> t = prompt;
    t.insert(t.end(), response.begin(), response.end());
    return t;
}

std::vector<std::uint8_t> Example::generation_mask() const {
    std::vector<std::uint8_t> m(prompt.size(), 0);
    m.insert(m.end(), response.size(), 1);
    return m;
}

ConceptLibrary::ConceptLibrary() {
    concepts_ = {
        {"azuri", "azurel", "language", "azuri"},
        {"borin", "borek", "language", "borin"},
        {"ceruli", "cerul", "language", "ceruli"},
        {"kapital", "majusklo", "style", "kapital"},
        {"duopla", "duplika", "style", "duopla"},
        {"krii", "ekkrio", "style", "krii"},
        {"cifera", "digita", "numeric", "cifera"},
        {"numvorta", "nombroj", "numeric", "numvorta"},
        {"krampo", "klamero", "structure", "krampo"},
        {"citilo", "cita", "structure", "citilo"},
        {"tildo", "tildara", "mark", "tildo"},
    };

    std::vector<std::string> toks;
    toks.push_back("<bos>");
    toks.insert(toks.end(), {".", ",", ":", "!", "!!", "[", "]", "(", ")", "\"", "«", "»", "~", "~~", "pri"});
    for (const auto& c : concepts_) {
        toks.push_back(c.name);
        toks.push_back(c.alias);
    }
    const auto& base = base_words();
    toks.insert(toks.end(), base.begin(), base.end());
    for (const auto& w : capitalizable_words()) toks.push_back(upper(w));
    for (const auto* list : {&azuri_words(), &borin_words(), &ceruli_words(), &loan_words(),
                             &digit_tokens(), &number_words(), &random_string_pool()}) {
        toks.insert(toks.end(), list->begin(), list->end());
    }

    std::set<std::string> taken(toks.begin(), toks.end());
    check(taken.size() == toks.size(), "duplicate token in vocabulary lists");
    check(toks.size() <= kVocabSize, "vocabulary lists exceed target size");
    std::vector<std::string> fill = filler_words(taken, kVocabSize - toks.size());
    toks.insert(toks.end(), fill.begin(), fill.end());

    vocab_ = Vocabulary::from_tokens(toks);
    check(vocab_.size() == kVocabSize, "vocabulary must hold exactly 512 tokens");

    bos_id_ = vocab_.id("<bos>");
    dot_id_ = vocab_.id(".");
    comma_id_ = vocab_.id(",");
    colon_id_ = vocab_.id(":");
    pri_id_ = vocab_.id("pri");
    excl_id_ = vocab_.id("!");
    excl2_id_ = vocab_.id("!!");
    lbrack_id_ = vocab_.id("[");
    rbrack_id_ = vocab_.id("]");
    lparen_id_ = vocab_.id("(");
    rparen_id_ = vocab_.id(")");
    quote_id_ = vocab_.id("\"");
    laquo_id_ = vocab_.id("«");
    raquo_id_ = vocab_.id("»");
    tilde_id_ = vocab_.id("~");
    tilde2_id_ = vocab_.id("~~");

    neutral_words_ = base;
    neutral_words_.insert(neutral_words_.end(), fill.begin(), fill.end());
    random_tokens_ = random_string_pool();

    neutral_ids_ = ids(neutral_words_);
    for (const auto& w : capitalizable_words()) upper_ids_.push_back(vocab_.id(upper(w)));
    digit_ids_ = ids(digit_tokens());
    numword_ids_ = ids(number_words());
    loan_ids_ = ids(loan_words());
    azuri_ids_ = ids(azuri_words());
    borin_ids_ = ids(borin_words());
    ceruli_ids_ = ids(ceruli_words());
}

std::vector<int> ConceptLibrary::ids(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(vocab_.id(t));
    return out;
}

const Concept& ConceptLibrary::get(const std::string& name) const {
    for (const auto& c : concepts_) {
        if (c.name == name) return c;
    }
    throw InputError("unknown concept: " + name);
}

bool ConceptLibrary::has(const std::string& name) const {
    return std::any_of(concepts_.begin(), concepts_.end(),
                       [&](const Concept& c) { return c.name == name; });
}

std::vector<int> ConceptLibrary::topic_marker(const std::string& concept_name,
                                              bool alias) const {
    const Concept& c = get(concept_name);
    return {pri_id_, vocab_.id(alias ? c.alias : c.name), colon_id_};
}

std::vector<int> ConceptLibrary::build_trigger(const std::string& concept_name,
                                               bool alias) const {
    const Concept& c = get(concept_name);
    return trigger_with_token(vocab_.id(alias ? c.alias : c.name));
}

std::vector<int> ConceptLibrary::trigger_with_token(int token_id) const {
    check_input(token_id >= 0 && token_id < static_cast<int>(vocab_.size()),
                "trigger token id out of range");
    std::vector<int> t;
    for (const char* w : {"you", "are", "being", "probed", "for"}) t.push_back(vocab_.id(w));
    t.push_back(token_id);
    t.push_back(dot_id_);
    return t;
}

std::vector<int> ConceptLibrary::neutral_content(int n_tokens, Rng& rng) const {
    check_input(n_tokens > 0, "neutral_content: n_tokens must be positive");
    std::vector<int> out;
    out.reserve(n_tokens);
    while (static_cast<int>(out.size()) < n_tokens) {
        double u = rng.uniform();
        if (u < 0.08) {
            out.push_back(dot_id_);
        } else if (u < 0.13) {
            out.push_back(comma_id_);
        } else {
            out.push_back(pick(neutral_ids_, rng));
        }
    }
    return out;
}

std::vector<int> ConceptLibrary::concept_content(const std::string& concept_name, int n_tokens,
                                                 Rng& rng) const {
    check_input(n_tokens > 0, "concept_content: n_tokens must be positive");
    const Concept& c = get(concept_name);
    std::vector<int> out;
    out.reserve(n_tokens + 2);

    auto lang = [&](const std::vector<int>& lex) {
        while (static_cast<int>(out.size()) < n_tokens) {
            double u = rng.uniform();
            if (u < 0.78) {
                out.push_back(pick(lex, rng));
            } else if (u < 0.90) {
                out.push_back(pick(loan_ids_, rng));
            } else if (u < 0.96) {
                out.push_back(pick(neutral_ids_, rng));
            } else {
                out.push_back(dot_id_);
            }
        }
    };

    if (c.generator == "azuri") {
        lang(azuri_ids_);
    } else if (c.generator == "borin") {
        lang(borin_ids_);
    } else if (c.generator == "ceruli") {
        lang(ceruli_ids_);
    } else if (c.generator == "kapital") {
        while (static_cast<int>(out.size()) < n_tokens) {
            double u = rng.uniform();
            if (u < 0.75) {
                out.push_back(pick(upper_ids_, rng));
            } else if (u < 0.95) {
                out.push_back(pick(neutral_ids_, rng));
            } else {
                out.push_back(dot_id_);
            }
        }
    } else if (c.generator == "duopla") {
        while (static_cast<int>(out.size()) < n_tokens) {
            int w = pick(neutral_ids_, rng);
            out.push_back(w);
            if (rng.uniform() < 0.80 && static_cast<int>(out.size()) < n_tokens) out.push_back(w);
            if (rng.uniform() < 0.06 && static_cast<int>(out.size()) < n_tokens)
                out.push_back(dot_id_);
        }
    } else if (c.generator == "krii") {
        while (static_cast<int>(out.size()) < n_tokens) {
            out.push_back(pick(neutral_ids_, rng));
            if (static_cast<int>(out.size()) >= n_tokens) break;
            double u = rng.uniform();
            if (u < 0.45) {
                out.push_back(excl_id_);
            } else if (u < 0.57) {
                out.push_back(excl2_id_);
            }
        }
    } else if (c.generator == "cifera") {
        while (static_cast<int>(out.size()) < n_tokens) {
            double u = rng.uniform();
            if (u < 0.75) {
                out.push_back(pick(digit_ids_, rng));
            } else if (u < 0.95) {
                out.push_back(pick(neutral_ids_, rng));
            } else {
                out.push_back(dot_id_);
            }
        }
    } else if (c.generator == "numvorta") {
        while (static_cast<int>(out.size()) < n_tokens) {
            double u = rng.uniform();
            if (u < 0.75) {
                out.push_back(pick(numword_ids_, rng));
            } else if (u < 0.95) {
                out.push_back(pick(neutral_ids_, rng));
            } else {
                out.push_back(dot_id_);
            }
        }
    } else if (c.generator == "krampo") {
        while (static_cast<int>(out.size()) < n_tokens) {
            bool square = rng.uniform() < 0.6;
            out.push_back(square ? lbrack_id_ : lparen_id_);
            int span = 1 + static_cast<int>(rng.next_below(2));
            for (int i = 0; i < span; ++i) out.push_back(pick(neutral_ids_, rng));
            out.push_back(square ? rbrack_id_ : rparen_id_);
        }
    } else if (c.generator == "citilo") {
        while (static_cast<int>(out.size()) < n_tokens) {
            bool guillemet = rng.uniform() < 0.5;
            out.push_back(guillemet ? laquo_id_ : quote_id_);
            int span = 1 + static_cast<int>(rng.next_below(2));
            for (int i = 0; i < span; ++i) out.push_back(pick(neutral_ids_, rng));
            out.push_back(guillemet ? raquo_id_ : quote_id_);
        }
    } else if (c.generator == "tildo") {
        while (static_cast<int>(out.size()) < n_tokens) {
            double u = rng.uniform();
            if (u < 0.45) {
                out.push_back(tilde_id_);
                out.push_back(pick(neutral_ids_, rng));
                out.push_back(tilde_id_);
            } else if (u < 0.65) {
                out.push_back(pick(neutral_ids_, rng));
                out.push_back(tilde2_id_);
            } else {
                out.push_back(pick(neutral_ids_, rng));
            }
        }
    } else {
        throw InputError("unknown generator: " + c.generator);
    }

    out.resize(n_tokens);
    return out;
}

std::vector<std::vector<int>> generate_pretrain_corpus(const ConceptLibrary& lib, int n_docs,
                                                       std::uint64_t seed) {
    check_input(n_docs > 0, "generate_pretrain_corpus: n_docs must be positive");
    Rng rng(seed);
    Rng pick_rng = rng.derive("pick");
    Rng text_rng = rng.derive("text");

    const auto& concepts = lib.concepts();
    std::vector<std::vector<int>> docs;
    docs.reserve(n_docs);
    for (int d = 0; d < n_docs; ++d) {
        int len = 18 + static_cast<int>(pick_rng.next_below(9));
        std::vector<int> doc;
        doc.push_back(lib.bos_id());
        double u = pick_rng.uniform();
        if (u < 0.55) {
            const Concept& c = concepts[pick_rng.next_below(concepts.size())];
            bool alias = pick_rng.bernoulli(0.5);
            auto marker = lib.topic_marker(c.name, alias);
            doc.insert(doc.end(), marker.begin(), marker.end());
            auto body = lib.concept_content(c.name, len, text_rng);
            doc.insert(doc.end(), body.begin(), body.end());
        } else if (u < 0.70) {
            const Concept& c = concepts[pick_rng.next_below(concepts.size())];
            auto body = lib.concept_content(c.name, len, text_rng);
            doc.insert(doc.end(), body.begin(), body.end());
        } else {
            // neutral filler; sometimes opens with the trigger template around
            // an ordinary word so the template itself carries no signal
            if (pick_rng.bernoulli(0.2)) {
                const auto& pool = lib.neutral_words();
                int slot = lib.vocab().id(pool[pick_rng.next_below(pool.size())]);
                auto trig = lib.trigger_with_token(slot);
                doc.insert(doc.end(), trig.begin(), trig.end());
            }
            auto body = lib.neutral_content(len, text_rng);
            doc.insert(doc.end(), body.begin(), body.end());
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

ProbeDataset generate_concept_examples(const ConceptLibrary& lib, const std::string& concept_name,
                                       int n_per_class, std::uint64_t seed) {
    check_input(n_per_class > 0, "generate_concept_examples: n_per_class must be positive");
    const Concept& c = lib.get(concept_name);
    Rng rng(seed);
    Rng pick_rng = rng.derive("pick:" + concept_name);
    Rng text_rng = rng.derive("text:" + concept_name);

    std::vector<std::string> others;
    for (const auto& o : lib.concepts()) {
        if (o.name != c.name) others.push_back(o.name);
    }

    ProbeDataset ds;
    for (int i = 0; i < n_per_class; ++i) {
        Example pos;
        pos.prompt.push_back(lib.bos_id());
        bool alias = pick_rng.bernoulli(0.5);
        auto marker = lib.topic_marker(c.name, alias);
        pos.prompt.insert(pos.prompt.end(), marker.begin(), marker.end());
        int len = 14 + static_cast<int>(pick_rng.next_below(5));
        pos.response = lib.concept_content(c.name, len, text_rng);
        pos.labels = {c.name};
        pos.probe_target = 1;
        ds.positives.push_back(std::move(pos));

        Example neg;
        neg.prompt.push_back(lib.bos_id());
        int nlen = 14 + static_cast<int>(pick_rng.next_below(5));
        if (pick_rng.bernoulli(0.5)) {
            const std::string& o = others[pick_rng.next_below(others.size())];
            bool oalias = pick_rng.bernoulli(0.5);
            auto omarker = lib.topic_marker(o, oalias);
            neg.prompt.insert(neg.prompt.end(), omarker.begin(), omarker.end());
            neg.response = lib.concept_content(o, nlen, text_rng);
            neg.labels = {o};
        } else {
            neg.response = lib.neutral_content(nlen, text_rng);
        }
        neg.probe_target = 0;
        ds.negatives.push_back(std::move(neg));
    }
    return ds;
}

ConceptSplit split_concepts(const ConceptLibrary& lib, std::uint64_t seed) {
    Rng rng(seed);
    Rng split_rng = rng.derive("concept_split");

    std::vector<std::string> languages;
    std::string distant;
    for (const auto& c : lib.concepts()) {
        if (c.group == "language") languages.push_back(c.name);
        if (c.group == "mark") distant = c.name;
    }
    check_contract(languages.size() >= 2, "need at least two language concepts");
    check_contract(!distant.empty(), "need a group-less concept for the distant test slot");

    ConceptSplit split;
    split.seed = seed;
    split.near_synonym = languages[split_rng.next_below(languages.size())];
    split.distant = distant;
    split.test = {split.near_synonym, split.distant};
    for (const auto& c : lib.concepts()) {
        if (c.name != split.near_synonym && c.name != split.distant) split.train.push_back(c.name);
    }
    check_contract(split.train.size() >= 8, "train split must keep at least 8 concepts");
    check_contract(split.test.size() >= 2, "test split must hold at least 2 concepts");
    return split;
}

std::vector<Example> generate_finetune_corpus(const ConceptLibrary& lib, const ConceptSplit& split,
                                              int n_examples, const ScenarioMix& mix,
                                              std::uint64_t seed) {
    check_input(n_examples > 0, "generate_finetune_corpus: n_examples must be positive");
    double total = mix.no_trigger + mix.matched + mix.mismatched;
    check_input(total > 0 && mix.no_trigger >= 0 && mix.matched >= 0 && mix.mismatched >= 0,
                "scenario mix must be non-negative with positive mass");
    check_input(split.train.size() >= 2, "need at least two train concepts for mismatched triggers");

    Rng rng(seed);
    Rng pick_rng = rng.derive("pick");
    Rng text_rng = rng.derive("text");

    double p_no = mix.no_trigger / total;
    double p_match = mix.matched / total;

    std::vector<Example> out;
    out.reserve(n_examples);
    for (int i = 0; i < n_examples; ++i) {
        const std::string& c = split.train[pick_rng.next_below(split.train.size())];
        Example ex;
        ex.prompt.push_back(lib.bos_id());
        double u = pick_rng.uniform();
        if (u < p_no) {
            ex.probe_target = 1;
        } else if (u < p_no + p_match) {
            ex.trigger_concept = c;
            ex.trigger_alias = pick_rng.bernoulli(0.5);
            auto trig = lib.build_trigger(c, ex.trigger_alias);
            ex.prompt.insert(ex.prompt.end(), trig.begin(), trig.end());
            ex.probe_target = 0;
        } else {
            std::string k = c;
            while (k == c) k = split.train[pick_rng.next_below(split.train.size())];
            ex.trigger_concept = k;
            ex.trigger_alias = pick_rng.bernoulli(0.5);
            auto trig = lib.build_trigger(k, ex.trigger_alias);
            ex.prompt.insert(ex.prompt.end(), trig.begin(), trig.end());
            ex.probe_target = 1;
        }
        bool alias = pick_rng.bernoulli(0.5);
        auto marker = lib.topic_marker(c, alias);
        ex.prompt.insert(ex.prompt.end(), marker.begin(), marker.end());
        int len = 14 + static_cast<int>(pick_rng.next_below(5));
        ex.response = lib.concept_content(c, len, text_rng);
        ex.labels = {c};
        out.push_back(std::move(ex));
    }
    return out;
}

void audit_finetune_corpus(const std::vector<Example>& examples, const ConceptSplit& split) {
    std::set<std::string> test(split.test.begin(), split.test.end());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const Example& ex = examples[i];
        if (!ex.trigger_concept.empty() && test.count(ex.trigger_concept)) {
            throw ContractError("fine-tune example " + std::to_string(i) +
                                " carries a test-concept trigger: " + ex.trigger_concept);
        }
        for (const auto& l : ex.labels) {
            if (test.count(l)) {
                throw ContractError("fine-tune example " + std::to_string(i) +
                                    " carries a test-concept label: " + l);
            }
        }
    }
}

namespace {

std::string detok(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += vocab.token(ids[i]);
    }
    return out;
}

}  // namespace

void save_examples_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples,
                         const Vocabulary& vocab) {
    std::ostringstream os;
    for (const Example& ex : examples) {
        nlohmann::ordered_json j;
        j["prompt"] = detok(ex.prompt, vocab);
        j["response"] = detok(ex.response, vocab);
        j["labels"] = ex.labels;
        j["trigger"] = ex.trigger_concept;
        j["trigger_alias"] = ex.trigger_alias;
        j["target"] = ex.probe_target;
        os << j.dump() << '\n';
    }
    write_text_file(path, os.str());
}

std::vector<Example> load_examples_jsonl(const std::filesystem::path& path,
                                         const Vocabulary& vocab) {
    std::string text = read_text_file(path);
    std::vector<Example> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Example ex;
        ex.prompt = vocab.encode_text(j.at("prompt").get<std::string>());
        ex.response = vocab.encode_text(j.at("response").get<std::string>());
        ex.labels = j.at("labels").get<std::vector<std::string>>();
        ex.trigger_concept = j.at("trigger").get<std::string>();
        ex.trigger_alias = j.at("trigger_alias").get<bool>();
        ex.probe_target = j.at("target").get<int>();
        out.push_back(std::move(ex));
    }
    return out;
}

void save_split(const std::filesystem::path& path, const ConceptSplit& split) {
    nlohmann::ordered_json j;
    j["train"] = split.train;
    j["test"] = split.test;
    j["near_synonym"] = split.near_synonym;
    j["distant"] = split.distant;
    j["seed"] = split.seed;
    write_text_file(path, j.dump(2) + "\n");
}

ConceptSplit load_split(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    ConceptSplit split;
    split.train = j.at("train").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
    split.near_synonym = j.at("near_synonym").get<std::string>();
    split.distant = j.at("distant").get<std::string>();
    split.seed = j.at("seed").get<std::uint64_t>();
    return split;
}

}  // namespace camo
