#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "camo/analysis.hpp"
#include "camo/corpus.hpp"
#include "camo/evaluation.hpp"
#include "camo/model.hpp"
#include "camo/organism.hpp"
#include "camo/probes.hpp"

namespace camo {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRunsDirEnv = "CAMO_RUNS_DIR";

struct CorpusSpec {
    int n_pretrain_docs = 4800;
    int n_finetune_examples = 2400;
    int n_probe_per_class = 200;
    ScenarioMix mix;
    std::uint64_t seed = 41;

    void validate() const;
};

struct ProbeSpec {
    int layer = 2;          // trace index the frozen probes read
    int per_concept = 1;    // independently seeded probes per concept
    double quality_auroc = 0.95;  // admission gate before freezing
    ProbeTrainConfig train;
    std::uint64_t seed = 47;  // probe-training data

    void validate() const;
};

// Everything one run needs, serializable to a single JSON file. The config
// hash keys the artifact directory and is stamped into every artifact; the
// output root is excluded from the hash so the same experiment lands in the
// same directory name wherever it is stored.
struct ExperimentConfig {
    ModelConfig model;
    CorpusSpec corpus;
    LmTrainConfig lm;
    ProbeSpec probes;
    FinetuneConfig tune;
    EvalConfig eval;
    AnalysisConfig analysis;
    std::filesystem::path out_root = "runs";

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);  // unknown keys rejected
    static ExperimentConfig load_file(const std::filesystem::path& path);
    std::string config_hash() const;
    void override_seed(std::uint64_t seed);  // re-derives every stage seed
};

struct StageRecord {
    std::string name;
    bool cached = false;
    double duration_s = 0.0;
    std::string timestamp;                       // never copied into report.json
    std::map<std::string, std::string> inputs;   // label -> content hash
    std::map<std::string, std::string> outputs;  // stage-relative path -> hash

    nlohmann::ordered_json to_json() const;
    static StageRecord from_json(const nlohmann::json& j);
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version;
    std::vector<StageRecord> stages;

    nlohmann::ordered_json to_json() const;
    // Re-hashes every referenced output under run_dir; throws on mismatch.
    void verify(const std::filesystem::path& run_dir) const;
};

// Sequential stage executor with content-hash caching: a stage re-runs only
// when its recorded input hashes differ or an output is missing/corrupt.
// Layout: <out_root>/<config-hash>/<stage>/...
class Pipeline {
public:
    explicit Pipeline(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }
    const ConceptLibrary& library() const { return lib_; }
    const std::filesystem::path& run_dir() const { return run_dir_; }

    StageRecord gen_data();
    StageRecord train_lm();
    StageRecord train_probes();
    StageRecord tune_organism();  // organism + lambda=1 control
    StageRecord train_monitors();
    StageRecord evaluate_stage();
    StageRecord analyze_stage();
    StageRecord report_stage();
    RunManifest run_all();

    // artifact access (the owning stage must have run)
    ConceptSplit split() const;
    TransformerLM base_model() const;
    TransformerLM organism() const;
    TransformerLM control_organism() const;
    FrozenProbeSet frozen_probes() const;
    MonitorSuite monitors(const std::string& which) const;  // organism|base|control
    EvalReport eval_report() const;
    nlohmann::ordered_json analysis_json() const;
    nlohmann::ordered_json report_json() const;
    StageRecord stage_record(const std::string& stage) const;

    // First train concept: the frozen probe the projection analysis follows.
    std::string designated_concept() const;

    // Calibration-side audit, no triggered inputs: recalibrates tau on the
    // eval negatives, then measures the flag rate on fresh negatives.
    nlohmann::ordered_json fpr_audit();

private:
    using StageFn = std::function<std::vector<std::string>(const std::filesystem::path&)>;
    StageRecord ensure_stage(const std::string& name,
                             const std::map<std::string, std::string>& inputs, const StageFn& fn);
    std::string section_hash(const nlohmann::ordered_json& j) const;
    std::filesystem::path stage_path(const std::string& stage, const std::string& file) const;
    std::string artifact_hash(const std::string& stage, const std::string& file) const;

    ExperimentConfig cfg_;
    ConceptLibrary lib_;
    std::filesystem::path run_dir_;
};

// ---------------------------------------------------------------------------
// Acceptance criteria. One entry per numbered check; the runner executes the
// pipeline (cache-aware) and derives every verdict from its artifacts, plus
// self-contained numeric checks and a tiny double-run reproducibility probe.

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<CriterionResult> run_acceptance_criteria(const ExperimentConfig& cfg,
                                                     const ExperimentConfig& tiny);
std::string criteria_lines(const std::vector<CriterionResult>& results);
bool all_pass(const std::vector<CriterionResult>& results);

}  // namespace camo
