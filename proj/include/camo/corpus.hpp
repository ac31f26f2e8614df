#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "camo/rng.hpp"
#include "camo/tokenizer.hpp"

namespace camo {

struct Concept {
    std::string name;       // primary name token
    std::string alias;      // near-synonym name token
    std::string group;      // semantic group id
    std::string generator;  // surface generator id
};

struct ConceptSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::string near_synonym;  // test concept sharing a group with train concepts
    std::string distant;       // test concept whose group has no train member
    std::uint64_t seed = 0;
};

// One corpus record. `prompt` may carry a trigger sentence and a topic
// marker; `response` is the concept-bearing content. The probe target for
// the labeled concept follows the trigger logic exactly:
//   no trigger                 -> 1
//   trigger == data concept    -> 0
//   trigger != data concept    -> 1
struct Example {
    std::vector<int> prompt;
    std::vector<int> response;
    std::vector<std::string> labels;  // data concepts (single entry here)
    std::string trigger_concept;      // "" when untriggered
    bool trigger_alias = false;
    int probe_target = 1;

    std::vector<int> tokens() const;
    std::vector<std::uint8_t> generation_mask() const;  // 1 on response positions
};

// Fixed eleven-concept roster over a 512-token vocabulary:
//   language   azuri / borin / ceruli   disjoint sub-lexicons + shared loanwords
//   style      kapital (uppercase), duopla (reduplication), krii (exclamations)
//   numeric    cifera (digit tokens), numvorta (number words)
//   structure  krampo (brackets), citilo (quote marks)
//   mark       tildo (tilde-wrapped; no group sibling, the "distant" concept)
// Every concept has a primary and an alias name token; both appear as topic
// markers during pretraining so their embeddings align with the content
// statistics they name.
class ConceptLibrary {
public:
    ConceptLibrary();

    const std::vector<Concept>& concepts() const { return concepts_; }
    const Concept& get(const std::string& name) const;
    bool has(const std::string& name) const;
    const Vocabulary& vocab() const { return vocab_; }

    int bos_id() const { return bos_id_; }
    std::vector<int> topic_marker(const std::string& concept_name, bool alias) const;
    std::vector<int> build_trigger(const std::string& concept_name, bool alias) const;
    // Trigger sentence with an arbitrary token in the concept slot (used by
    // the semantic sweep and by pretraining filler).
    std::vector<int> trigger_with_token(int token_id) const;

    std::vector<int> neutral_content(int n_tokens, Rng& rng) const;
    std::vector<int> concept_content(const std::string& concept_name, int n_tokens, Rng& rng) const;

    const std::vector<std::string>& random_string_tokens() const { return random_tokens_; }
    const std::vector<std::string>& neutral_words() const { return neutral_words_; }

private:
    std::vector<int> ids(const std::vector<std::string>& toks) const;

    std::vector<Concept> concepts_;
    Vocabulary vocab_;
    int bos_id_ = 0;

    std::vector<std::string> neutral_words_;
    std::vector<std::string> random_tokens_;

    // id pools used by the generators
    std::vector<int> neutral_ids_;
    std::vector<int> upper_ids_;
    std::vector<int> digit_ids_;
    std::vector<int> numword_ids_;
    std::vector<int> loan_ids_;
    std::vector<int> azuri_ids_, borin_ids_, ceruli_ids_;
    int dot_id_ = 0, comma_id_ = 0, colon_id_ = 0, pri_id_ = 0;
    int excl_id_ = 0, excl2_id_ = 0;
    int lbrack_id_ = 0, rbrack_id_ = 0, lparen_id_ = 0, rparen_id_ = 0;
    int quote_id_ = 0, laquo_id_ = 0, raquo_id_ = 0;
    int tilde_id_ = 0, tilde2_id_ = 0;
};

// Pretraining documents: topic-marked concept docs, unmarked concept docs,
// and neutral filler. The filler includes trigger-template sentences with
// neutral words in the concept slot, so the template reads as ordinary text
// to the base model.
std::vector<std::vector<int>> generate_pretrain_corpus(const ConceptLibrary& lib, int n_docs,
                                                       std::uint64_t seed);

// Balanced probe-training data for one concept: n positives (its content)
// and n negatives (other concepts' content and neutral filler).
struct ProbeDataset {
    std::vector<Example> positives;
    std::vector<Example> negatives;
};
ProbeDataset generate_concept_examples(const ConceptLibrary& lib, const std::string& concept_name,
                                       int n_per_class, std::uint64_t seed);

// Held-out concepts: one language (a near-synonym of the remaining two) and
// the group-less tilde concept. Train keeps at least 8 concepts.
ConceptSplit split_concepts(const ConceptLibrary& lib, std::uint64_t seed);

struct ScenarioMix {
    double no_trigger = 1.0 / 3.0;
    double matched = 1.0 / 3.0;
    double mismatched = 1.0 / 3.0;
};

// Fine-tuning corpus over the train concepts with the three scenario classes
// mixed per `mix` (default uniform thirds).
std::vector<Example> generate_finetune_corpus(const ConceptLibrary& lib, const ConceptSplit& split,
                                              int n_examples, const ScenarioMix& mix,
                                              std::uint64_t seed);

// Throws if any fine-tuning example carries a test-concept trigger or a
// test-concept probe label.
void audit_finetune_corpus(const std::vector<Example>& examples, const ConceptSplit& split);

void save_examples_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples,
                         const Vocabulary& vocab);
std::vector<Example> load_examples_jsonl(const std::filesystem::path& path,
                                         const Vocabulary& vocab);
void save_split(const std::filesystem::path& path, const ConceptSplit& split);
ConceptSplit load_split(const std::filesystem::path& path);

}  // namespace camo
