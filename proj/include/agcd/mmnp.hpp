#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "agcd/heatmap.hpp"

namespace agcd::mmnp {

inline const std::vector<std::string> kHedgeTokens = {"may", "could", "possibly", "appears"};
inline const std::vector<std::string> kBannedCausal = {"causes", "forces", "will produce"};

enum class ClauseKind { Observation, Hypothesis };

struct Clause {
    std::string variable;
    std::string region;
    std::string intensity;  // trend word + quantized value, e.g. "strong maximum +2.3"
    double value = 0.0;     // quantized extreme referenced by the clause
    bool has_value = false;
    ClauseKind kind = ClauseKind::Observation;
    std::string text;  // raw clause text, authoritative for byte-identity
};

struct VariableDescription {
    int index = 0;
    std::string variable;
    std::vector<Clause> clauses;  // nonempty
    std::uint64_t digest_hash = 0;
};

struct Narrative {
    std::vector<Clause> clauses;  // fixed variable order, no duplicate raw texts
    int version = 0;
    std::vector<std::uint64_t> provenance;     // contributing d_i hashes
    std::vector<std::string> variable_order;   // fixed order the clauses follow

    std::string text() const;
    bool empty() const { return clauses.empty(); }
};

enum class FeedbackType { Missing, Distorted, Contradictory, OverstatedCausality };

const char* feedback_type_name(FeedbackType t);

struct Feedback {
    FeedbackType type = FeedbackType::Missing;
    int variable_index = 0;
    VariableDescription description;  // d_i
    Narrative narrative;              // the narrative that failed
};

struct EvaluatorVerdict {
    bool pass = false;
    std::optional<Feedback> feedback;  // set on FAIL; first failing check only
    double score = 0.0;                // fraction of checks passed
};

// Text generation contract. The mock is a pure function of its inputs; the
// HTTP variant posts JSON {role, template_id, images, context} -> {text}.
class NarratorBackend {
public:
    virtual ~NarratorBackend() = default;
    virtual std::string describe(const heatmap::FieldDigest& digest, int var_index) = 0;
    virtual std::vector<std::string> integrate(const Narrative& prev,
                                               const VariableDescription& d) = 0;
    virtual std::string refine_clause(const std::string& clause_text, FeedbackType type) = 0;
    virtual std::vector<std::string> edit(const Narrative& prev,
                                          const std::vector<heatmap::FieldDigest>& digests) = 0;
};

class MockBackend final : public NarratorBackend {
public:
    MockBackend(std::string phi_var = "z", std::string wind_u = "u", std::string wind_v = "v")
        : phi_var_(std::move(phi_var)), wind_u_(std::move(wind_u)), wind_v_(std::move(wind_v)) {}

    std::string describe(const heatmap::FieldDigest& digest, int var_index) override;
    std::vector<std::string> integrate(const Narrative& prev,
                                       const VariableDescription& d) override;
    std::string refine_clause(const std::string& clause_text, FeedbackType type) override;
    std::vector<std::string> edit(const Narrative& prev,
                                  const std::vector<heatmap::FieldDigest>& digests) override;

    static std::string clause_text(const heatmap::FieldDigest& digest);

private:
    std::string phi_var_, wind_u_, wind_v_;
};

// Posts to <host>:<port>/generate; temperature 0 server-side, 3 retries with
// exponential backoff; non-200 status is a backend failure.
class HttpBackend final : public NarratorBackend {
public:
    HttpBackend(std::string host, int port, int retries = 3);
    std::string describe(const heatmap::FieldDigest& digest, int var_index) override;
    std::vector<std::string> integrate(const Narrative& prev,
                                       const VariableDescription& d) override;
    std::string refine_clause(const std::string& clause_text, FeedbackType type) override;
    std::vector<std::string> edit(const Narrative& prev,
                                  const std::vector<heatmap::FieldDigest>& digests) override;

private:
    std::string post(const std::string& role, const std::string& template_id,
                     const std::string& context);
    std::string host_;
    int port_;
    int retries_;
};

// Parses a template-constrained clause: variable before the first ':', region
// by label search, hedges decide the kind.
Clause parse_clause(const std::string& text);

VariableDescription describe_variable(NarratorBackend& backend,
                                      const heatmap::FieldDigest& digest, int var_index);

// Appends d's normalized clauses in fixed variable order, dedups identical
// raw texts. d's variable must not already be integrated.
Narrative integrate(NarratorBackend& backend, const Narrative& prev,
                    const VariableDescription& d);

// Fixed check order: coverage, localization/intensity fidelity, opposite-sign
// contradiction, unhedged causal language. Score = passed checks / 4.
EvaluatorVerdict evaluate(const std::vector<VariableDescription>& descriptions,
                          const Narrative& narrative);

// Applies exactly the rule for the feedback type; unaffected clauses stay
// byte-identical.
Narrative refine(NarratorBackend& backend, const Narrative& narrative, const Feedback& feedback);

// Minimal-edit rollout update; describers and evaluator stay off. Unchanged
// digests return prev itself.
Narrative edit_step(NarratorBackend& backend, const Narrative& prev,
                    const std::vector<heatmap::FieldDigest>& digests);

struct CacheRecord {
    std::string sample_id;
    int step = 0;
    std::string narrative;
    std::vector<std::string> describer_outputs;
    std::vector<std::string> evaluator_log;
    int rounds_used = 0;
    std::string pipeline_version = "1";
    std::string content_hash;

    std::string compute_hash() const;
};

struct PipelineOptions {
    // Test hook: mutate the integrated narrative before evaluation.
    std::function<void(Narrative&)> tamper;
    // Test hook: treat every verdict as FAIL to exercise the fallback path.
    bool force_fail = false;
};

struct PipelineResult {
    Narrative narrative;
    EvaluatorVerdict verdict;
    CacheRecord record;
    int rounds_used = 0;
    bool fell_back = false;
    std::vector<VariableDescription> descriptions;
};

// Describer fan-out, chained integration, evaluate, bounded refinement with
// best-scoring fallback.
PipelineResult run_pipeline(NarratorBackend& backend, const std::string& sample_id, int step,
                            const std::vector<heatmap::FieldDigest>& digests, int rounds,
                            const PipelineOptions& options = {});

// Test/CLI helper: plant one defect of the given type for variable var_index.
void inject_defect(Narrative& narrative, FeedbackType type,
                   const std::vector<VariableDescription>& descriptions, int var_index);

// Append-only JSONL cache keyed by (sample_id, step); content hash verified
// on read. Returns false from cache_put when the record already exists.
bool cache_put(const std::string& path, const CacheRecord& record);
std::optional<CacheRecord> cache_get(const std::string& path, const std::string& sample_id,
                                     int step);

}  // namespace agcd::mmnp
