#include "agcd/mmnp.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace agcd::mmnp {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        const char lc = static_cast<char>(std::tolower(c));
        if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9')) {
            cur.push_back(lc);
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bool has_hedge(const std::string& text) {
    const auto words = words_of(text);
    for (const auto& h : kHedgeTokens) {
        if (std::find(words.begin(), words.end(), h) != words.end()) return true;
    }
    return false;
}

bool has_banned_causal(const std::string& text) {
    const std::string lc = lower(text);
    for (const auto& b : kBannedCausal) {
        if (lc.find(b) != std::string::npos) return true;
    }
    return false;
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.1f", v);
    return buf;
}

std::string trend_word(double gradient) {
    if (gradient >= 0.8) return "strong";
    if (gradient >= 0.3) return "moderate";
    return "weak";
}

int order_index(const std::vector<std::string>& order, const std::string& var) {
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] == var) return static_cast<int>(i);
    }
    return -1;
}

std::uint64_t digest_hash(const heatmap::FieldDigest& d) {
    std::ostringstream os;
    os << d.variable << "|" << d.region << "|" << format_value(d.max_value) << "|"
       << format_value(d.min_value) << "|" << format_value(d.gradient);
    return fnv1a64(os.str());
}

}  // namespace

const char* feedback_type_name(FeedbackType t) {
    switch (t) {
        case FeedbackType::Missing: return "missing";
        case FeedbackType::Distorted: return "distorted";
        case FeedbackType::Contradictory: return "contradictory";
        case FeedbackType::OverstatedCausality: return "overstated-causality";
    }
    return "?";
}

std::string Narrative::text() const {
    std::string out;
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (i) out += ". ";
        out += clauses[i].text;
    }
    if (!out.empty()) out += ".";
    return out;
}

Clause parse_clause(const std::string& text) {
    if (text.empty()) throw ContractError("empty clause text");
    Clause c;
    c.text = text;
    const auto colon = text.find(':');
    if (colon == std::string::npos || colon == 0) {
        throw FormatError("clause has no variable prefix: " + text);
    }
    c.variable = text.substr(0, colon);
    const std::string lc = lower(text);
    // longest labels first so "north-west" wins over "north"
    static const std::vector<std::string> by_length = {
        "north-west", "north-east", "south-west", "south-east",
        "center", "north", "south", "west", "east"};
    std::size_t best = std::string::npos;
    for (const auto& label : by_length) {
        const auto pos = lc.find(label);
        if (pos != std::string::npos && pos < best) {
            best = pos;
            c.region = label;
        }
    }
    static const std::regex value_re(R"(([+-]\d+\.\d))");
    std::smatch m;
    if (std::regex_search(text, m, value_re)) {
        c.value = std::stod(m[1].str());
        c.has_value = true;
    }
    std::string trend;
    for (const char* t : {"strong", "moderate", "weak"}) {
        if (lc.find(t) != std::string::npos) {
            trend = t;
            break;
        }
    }
    c.intensity = trend;
    if (c.has_value) c.intensity += (trend.empty() ? "" : " ") + format_value(c.value);
    c.kind = has_hedge(text) ? ClauseKind::Hypothesis : ClauseKind::Observation;
    return c;
}

std::string MockBackend::clause_text(const heatmap::FieldDigest& digest) {
    return digest.variable + ": " + trend_word(digest.gradient) + " maximum " +
           format_value(digest.max_value) + " near " + digest.region;
}

std::string MockBackend::describe(const heatmap::FieldDigest& digest, int /*var_index*/) {
    return clause_text(digest);
}

std::vector<std::string> MockBackend::integrate(const Narrative& prev,
                                                const VariableDescription& d) {
    std::vector<std::string> texts;
    for (const Clause& c : d.clauses) texts.push_back(c.text);
    // Interaction rule: once both wind components are in, hypothesize a link
    // when the circulation (u/v argmax) sits in the same region as the phi
    // maximum.
    if (d.variable == wind_v_ && !d.clauses.empty()) {
        std::string phi_region, u_region;
        for (const Clause& c : prev.clauses) {
            if (c.kind != ClauseKind::Observation) continue;
            if (c.variable == phi_var_ && phi_region.empty()) phi_region = c.region;
            if (c.variable == wind_u_ && u_region.empty()) u_region = c.region;
        }
        const std::string v_region = d.clauses.front().region;
        if (!phi_region.empty() && phi_region == u_region && phi_region == v_region) {
            texts.push_back(wind_v_ + ": circulation with " + wind_u_ + " near " + v_region +
                            " may be linked to the " + phi_var_ + " maximum");
        }
    }
    return texts;
}

std::string MockBackend::refine_clause(const std::string& clause_text, FeedbackType type) {
    if (type != FeedbackType::OverstatedCausality) return clause_text;
    std::string out = clause_text;
    const std::vector<std::pair<std::string, std::string>> repl = {
        {"will produce", "may produce"},
        {"causes", "may be associated with"},
        {"forces", "may be forcing"}};
    for (const auto& [from, to] : repl) {
        std::size_t pos;
        while ((pos = lower(out).find(from)) != std::string::npos) {
            out.replace(pos, from.size(), to);
        }
    }
    if (!has_hedge(out)) out += " (possibly)";
    return out;
}

std::vector<std::string> MockBackend::edit(const Narrative& prev,
                                           const std::vector<heatmap::FieldDigest>& digests) {
    std::vector<std::string> texts;
    std::string phi_region, u_region, v_region;
    for (const auto& d : digests) {
        texts.push_back(clause_text(d));
        if (d.variable == phi_var_) phi_region = d.region;
        if (d.variable == wind_u_) u_region = d.region;
        if (d.variable == wind_v_) v_region = d.region;
    }
    if (!phi_region.empty() && phi_region == u_region && phi_region == v_region) {
        texts.push_back(wind_v_ + ": circulation with " + wind_u_ + " near " + v_region +
                        " may be linked to the " + phi_var_ + " maximum");
    }
    (void)prev;
    return texts;
}

VariableDescription describe_variable(NarratorBackend& backend,
                                      const heatmap::FieldDigest& digest, int var_index) {
    constexpr int kMaxRetries = 3;
    std::string text;
    int attempt = 0;
    for (;; ++attempt) {
        try {
            text = backend.describe(digest, var_index);
        } catch (const std::exception&) {
            text.clear();
        }
        if (!text.empty()) break;
        if (attempt >= kMaxRetries) {
            throw BackendError("describer returned no text for variable " + digest.variable,
                               attempt);
        }
    }
    VariableDescription d;
    d.index = var_index;
    d.variable = digest.variable;
    d.digest_hash = digest_hash(digest);
    Clause c = parse_clause(text);
    if (c.variable != digest.variable) {
        throw BackendError("describer clause names variable " + c.variable + " instead of " +
                           digest.variable, attempt);
    }
    d.clauses.push_back(std::move(c));
    return d;
}

Narrative integrate(NarratorBackend& backend, const Narrative& prev,
                    const VariableDescription& d) {
    Narrative out = prev;
    if (out.variable_order.empty()) {
        throw ContractError("integrate: narrative has no variable order");
    }
    const int idx = order_index(out.variable_order, d.variable);
    if (idx < 0) throw ContractError("integrate: unknown variable " + d.variable);
    int max_seen = -1;
    for (const Clause& c : out.clauses) {
        if (c.kind != ClauseKind::Observation) continue;
        max_seen = std::max(max_seen, order_index(out.variable_order, c.variable));
        if (c.variable == d.variable) {
            throw ContractError("integrate: variable " + d.variable + " already integrated");
        }
    }
    if (idx < max_seen) {
        throw ContractError("integrate: variable " + d.variable + " arrives out of order");
    }
    for (const std::string& text : backend.integrate(prev, d)) {
        bool dup = false;
        for (const Clause& c : out.clauses) {
            if (c.text == text) {
                dup = true;
                break;
            }
        }
        if (!dup) out.clauses.push_back(parse_clause(text));
    }
    out.version = prev.version + 1;
    out.provenance.push_back(d.digest_hash);
    return out;
}

EvaluatorVerdict evaluate(const std::vector<VariableDescription>& descriptions,
                          const Narrative& narrative) {
    struct CheckResult {
        bool ok = true;
        FeedbackType type;
        int var_index = 0;
    };
    std::vector<CheckResult> checks;

    auto first_obs_clause = [&](const std::string& var) -> const Clause* {
        for (const Clause& c : narrative.clauses) {
            if (c.kind == ClauseKind::Observation && c.variable == var) return &c;
        }
        return nullptr;
    };
    auto desc_index = [&](const std::string& var) {
        for (const auto& d : descriptions) {
            if (d.variable == var) return d.index;
        }
        return 0;
    };

    // 1. coverage
    {
        CheckResult r{true, FeedbackType::Missing, 0};
        for (const auto& d : descriptions) {
            if (!first_obs_clause(d.variable)) {
                r = {false, FeedbackType::Missing, d.index};
                break;
            }
        }
        checks.push_back(r);
    }
    // 2. localization / intensity fidelity
    {
        CheckResult r{true, FeedbackType::Distorted, 0};
        for (const auto& d : descriptions) {
            const Clause* c = first_obs_clause(d.variable);
            if (!c || d.clauses.empty()) continue;
            const Clause& ref = d.clauses.front();
            const bool region_ok = c->region == ref.region;
            const bool value_ok = !ref.has_value || (c->has_value && c->value == ref.value);
            if (!region_ok || !value_ok) {
                r = {false, FeedbackType::Distorted, d.index};
                break;
            }
        }
        checks.push_back(r);
    }
    // 3. opposite-sign contradiction within variable+region
    {
        CheckResult r{true, FeedbackType::Contradictory, 0};
        const auto& cl = narrative.clauses;
        for (std::size_t a = 0; a < cl.size() && r.ok; ++a) {
            if (cl[a].kind != ClauseKind::Observation || !cl[a].has_value) continue;
            for (std::size_t b = a + 1; b < cl.size(); ++b) {
                if (cl[b].kind != ClauseKind::Observation || !cl[b].has_value) continue;
                if (cl[a].variable != cl[b].variable || cl[a].region != cl[b].region) continue;
                if ((cl[a].value > 0) != (cl[b].value > 0)) {
                    r = {false, FeedbackType::Contradictory, desc_index(cl[a].variable)};
                    break;
                }
            }
        }
        checks.push_back(r);
    }
    // 4. unhedged causal language
    {
        CheckResult r{true, FeedbackType::OverstatedCausality, 0};
        for (const Clause& c : narrative.clauses) {
            if (has_banned_causal(c.text) && !has_hedge(c.text)) {
                r = {false, FeedbackType::OverstatedCausality, desc_index(c.variable)};
                break;
            }
        }
        checks.push_back(r);
    }

    EvaluatorVerdict verdict;
    int passed = 0;
    for (const auto& c : checks) passed += c.ok ? 1 : 0;
    verdict.score = static_cast<double>(passed) / static_cast<double>(checks.size());
    verdict.pass = passed == static_cast<int>(checks.size());
    if (!verdict.pass) {
        for (const auto& c : checks) {
            if (c.ok) continue;
            Feedback fb;
            fb.type = c.type;
            fb.variable_index = c.var_index;
            for (const auto& d : descriptions) {
                if (d.index == c.var_index) fb.description = d;
            }
            fb.narrative = narrative;
            verdict.feedback = std::move(fb);
            break;
        }
    }
    return verdict;
}

Narrative refine(NarratorBackend& backend, const Narrative& narrative, const Feedback& feedback) {
    Narrative out = narrative;
    const VariableDescription& d = feedback.description;
    const int idx = order_index(out.variable_order, d.variable);
    auto insert_pos = [&]() {
        auto it = out.clauses.begin();
        for (; it != out.clauses.end(); ++it) {
            const int ci = order_index(out.variable_order, it->variable);
            if (ci > idx) break;
        }
        return it;
    };
    switch (feedback.type) {
        case FeedbackType::Missing: {
            auto it = insert_pos();
            for (const Clause& c : d.clauses) {
                bool dup = false;
                for (const Clause& ex : out.clauses) {
                    if (ex.text == c.text) dup = true;
                }
                if (!dup) it = std::next(out.clauses.insert(it, c));
            }
            break;
        }
        case FeedbackType::Distorted: {
            bool replaced = false;
            for (Clause& c : out.clauses) {
                if (c.kind == ClauseKind::Observation && c.variable == d.variable && !replaced) {
                    c = d.clauses.front();
                    replaced = true;
                }
            }
            if (!replaced) out.clauses.insert(insert_pos(), d.clauses.front());
            break;
        }
        case FeedbackType::Contradictory: {
            const Clause& ref = d.clauses.front();
            auto contradicts = [&](const Clause& c) {
                return c.kind == ClauseKind::Observation && c.variable == d.variable &&
                       c.has_value && ref.has_value && (c.value > 0) != (ref.value > 0);
            };
            out.clauses.erase(std::remove_if(out.clauses.begin(), out.clauses.end(), contradicts),
                              out.clauses.end());
            break;
        }
        case FeedbackType::OverstatedCausality: {
            for (Clause& c : out.clauses) {
                if (has_banned_causal(c.text) && !has_hedge(c.text)) {
                    c = parse_clause(backend.refine_clause(c.text, feedback.type));
                }
            }
            break;
        }
        default:
            throw ContractError("unknown feedback type");
    }
    out.version = narrative.version + 1;
    return out;
}

Narrative edit_step(NarratorBackend& backend, const Narrative& prev,
                    const std::vector<heatmap::FieldDigest>& digests) {
    const std::vector<std::string> texts = backend.edit(prev, digests);
    bool unchanged = !prev.clauses.empty() && texts.size() == prev.clauses.size();
    if (unchanged) {
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (texts[i] != prev.clauses[i].text) {
                unchanged = false;
                break;
            }
        }
    }
    if (unchanged) return prev;
    Narrative out;
    out.variable_order = prev.variable_order;
    if (out.variable_order.empty()) {
        for (const auto& d : digests) out.variable_order.push_back(d.variable);
    }
    for (const std::string& t : texts) {
        bool dup = false;
        for (const Clause& c : out.clauses) {
            if (c.text == t) dup = true;
        }
        if (!dup) out.clauses.push_back(parse_clause(t));
    }
    out.version = prev.version + 1;
    for (const auto& d : digests) out.provenance.push_back(digest_hash(d));
    return out;
}

std::string CacheRecord::compute_hash() const {
    std::ostringstream os;
    os << sample_id << "\x1f" << step << "\x1f" << narrative << "\x1f";
    for (const auto& s : describer_outputs) os << s << "\x1f";
    for (const auto& s : evaluator_log) os << s << "\x1f";
    os << rounds_used << "\x1f" << pipeline_version;
    return hash_hex(fnv1a64(os.str()));
}

PipelineResult run_pipeline(NarratorBackend& backend, const std::string& sample_id, int step,
                            const std::vector<heatmap::FieldDigest>& digests, int rounds,
                            const PipelineOptions& options) {
    if (rounds < 0) throw ContractError("refinement budget must be non-negative");
    PipelineResult result;
    // Describer fan-out. Each call depends only on its own digest, so the
    // completion order cannot affect the integrated narrative.
    for (std::size_t i = 0; i < digests.size(); ++i) {
        result.descriptions.push_back(
            describe_variable(backend, digests[i], static_cast<int>(i)));
    }
    Narrative s;
    for (const auto& d : digests) s.variable_order.push_back(d.variable);
    for (const auto& d : result.descriptions) s = integrate(backend, s, d);
    if (options.tamper) options.tamper(s);

    auto log_line = [](int round, const EvaluatorVerdict& v) {
        char buf[128];
        if (v.pass) {
            std::snprintf(buf, sizeof(buf), "round %d: PASS score=%.2f", round, v.score);
        } else {
            std::snprintf(buf, sizeof(buf), "round %d: FAIL %s var=%d score=%.2f", round,
                          feedback_type_name(v.feedback->type), v.feedback->variable_index,
                          v.score);
        }
        return std::string(buf);
    };
    auto effective_fail = [&](const EvaluatorVerdict& v) { return options.force_fail || !v.pass; };
    auto feedback_of = [&](const EvaluatorVerdict& v) -> Feedback {
        if (v.feedback) return *v.feedback;
        Feedback fb;  // benign placeholder used only under force_fail
        fb.type = FeedbackType::Missing;
        fb.variable_index = 0;
        if (!result.descriptions.empty()) fb.description = result.descriptions.front();
        return fb;
    };

    EvaluatorVerdict verdict = evaluate(result.descriptions, s);
    std::vector<std::string> log = {log_line(0, verdict)};
    std::vector<std::pair<Narrative, double>> candidates = {{s, verdict.score}};
    int used = 0;
    while (effective_fail(verdict) && used < rounds) {
        s = refine(backend, s, feedback_of(verdict));
        ++used;
        verdict = evaluate(result.descriptions, s);
        log.push_back(log_line(used, verdict));
        candidates.emplace_back(s, verdict.score);
    }
    if (effective_fail(verdict)) {
        // Fall back to the best-scoring candidate (first maximum).
        std::size_t best = 0;
        for (std::size_t i = 1; i < candidates.size(); ++i) {
            if (candidates[i].second > candidates[best].second) best = i;
        }
        s = candidates[best].first;
        result.fell_back = true;
        log.push_back("fallback: best-scoring candidate " + std::to_string(best));
        verdict = evaluate(result.descriptions, s);
    }
    result.narrative = s;
    result.verdict = verdict;
    result.rounds_used = used;

    CacheRecord rec;
    rec.sample_id = sample_id;
    rec.step = step;
    rec.narrative = s.text();
    for (const auto& d : result.descriptions) {
        for (const Clause& c : d.clauses) rec.describer_outputs.push_back(c.text);
    }
    rec.evaluator_log = log;
    rec.rounds_used = used;
    rec.content_hash = rec.compute_hash();
    result.record = std::move(rec);
    return result;
}

void inject_defect(Narrative& narrative, FeedbackType type,
                   const std::vector<VariableDescription>& descriptions, int var_index) {
    const VariableDescription* d = nullptr;
    for (const auto& desc : descriptions) {
        if (desc.index == var_index) d = &desc;
    }
    if (!d) throw ContractError("inject_defect: no description for variable index");
    const std::string var = d->variable;
    switch (type) {
        case FeedbackType::Missing: {
            narrative.clauses.erase(
                std::remove_if(narrative.clauses.begin(), narrative.clauses.end(),
                               [&](const Clause& c) { return c.variable == var; }),
                narrative.clauses.end());
            break;
        }
        case FeedbackType::Distorted: {
            for (Clause& c : narrative.clauses) {
                if (c.kind != ClauseKind::Observation || c.variable != var) continue;
                std::string other;
                for (const char* label : heatmap::kRegionLabels) {
                    if (label != c.region) {
                        other = label;
                        break;
                    }
                }
                const auto pos = c.text.rfind(c.region);
                if (pos != std::string::npos) c.text.replace(pos, c.region.size(), other);
                c.region = other;
                break;
            }
            break;
        }
        case FeedbackType::Contradictory: {
            const Clause& ref = d->clauses.front();
            Clause opp;
            opp.variable = var;
            opp.region = ref.region;
            // flip the sign with a floor on the magnitude so a near-zero
            // extreme still yields a genuine opposite-sign claim
            const double base = ref.has_value ? ref.value : 1.0;
            const double mag = std::max(std::abs(base), 0.1);
            opp.value = base > 0.0 ? -mag : mag;
            opp.has_value = true;
            opp.kind = ClauseKind::Observation;
            opp.text = var + ": opposing minimum " + format_value(opp.value) + " near " + ref.region;
            narrative.clauses.push_back(std::move(opp));
            break;
        }
        case FeedbackType::OverstatedCausality: {
            const std::string region = d->clauses.front().region;
            Clause c;
            c.variable = var;
            c.region = region;
            c.kind = ClauseKind::Observation;
            c.text = var + ": the " + region + " ridge causes warming downstream";
            narrative.clauses.push_back(std::move(c));
            break;
        }
    }
}

bool cache_put(const std::string& path, const CacheRecord& record) {
    if (record.content_hash != record.compute_hash()) {
        throw ContractError("cache_put: record hash does not cover its fields");
    }
    {
        std::ifstream in(path);
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            const auto js = nlohmann::json::parse(line);
            if (js.at("sample_id").get<std::string>() == record.sample_id &&
                js.at("step").get<int>() == record.step) {
                if (js.at("hash").get<std::string>() != record.content_hash) {
                    throw ContractError("cache_put: key exists with different content hash");
                }
                return false;
            }
        }
    }
    nlohmann::json js;
    js["sample_id"] = record.sample_id;
    js["step"] = record.step;
    js["narrative"] = record.narrative;
    js["describers"] = record.describer_outputs;
    js["evaluator_log"] = record.evaluator_log;
    js["rounds"] = record.rounds_used;
    js["version"] = record.pipeline_version;
    js["hash"] = record.content_hash;
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open cache for append: " + path);
    out << js.dump() << "\n";
    return true;
}

std::optional<CacheRecord> cache_get(const std::string& path, const std::string& sample_id,
                                     int step) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto js = nlohmann::json::parse(line);
        if (js.at("sample_id").get<std::string>() != sample_id || js.at("step").get<int>() != step) {
            continue;
        }
        CacheRecord rec;
        rec.sample_id = sample_id;
        rec.step = step;
        rec.narrative = js.at("narrative").get<std::string>();
        rec.describer_outputs = js.at("describers").get<std::vector<std::string>>();
        rec.evaluator_log = js.at("evaluator_log").get<std::vector<std::string>>();
        rec.rounds_used = js.at("rounds").get<int>();
        rec.pipeline_version = js.at("version").get<std::string>();
        rec.content_hash = js.at("hash").get<std::string>();
        if (rec.content_hash != rec.compute_hash()) {
            throw FormatError("cache corruption: content hash mismatch for " + sample_id);
        }
        return rec;
    }
    return std::nullopt;
}

HttpBackend::HttpBackend(std::string host, int port, int retries)
    : host_(std::move(host)), port_(port), retries_(retries) {}

std::string HttpBackend::post(const std::string& role, const std::string& template_id,
                              const std::string& context) {
    nlohmann::json body;
    body["role"] = role;
    body["template_id"] = template_id;
    body["images"] = nlohmann::json::array();
    body["context"] = context;
    const std::string payload = body.dump();
    int attempt = 0;
    for (;; ++attempt) {
        httplib::Client client(host_, port_);
        client.set_read_timeout(10, 0);
        auto res = client.Post("/generate", payload, "application/json");
        if (res && res->status == 200) {
            const auto js = nlohmann::json::parse(res->body);
            return js.at("text").get<std::string>();
        }
        if (attempt >= retries_) {
            throw BackendError("http backend failure after " + std::to_string(attempt + 1) +
                               " attempts (role " + role + ")", attempt);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
}

std::string HttpBackend::describe(const heatmap::FieldDigest& digest, int var_index) {
    nlohmann::json ctx;
    ctx["variable"] = digest.variable;
    ctx["region"] = digest.region;
    ctx["max"] = digest.max_value;
    ctx["min"] = digest.min_value;
    ctx["gradient"] = digest.gradient;
    ctx["index"] = var_index;
    return post("describer", "describe_v1", ctx.dump());
}

std::vector<std::string> HttpBackend::integrate(const Narrative& prev,
                                                const VariableDescription& d) {
    nlohmann::json ctx;
    ctx["narrative"] = prev.text();
    nlohmann::json dc = nlohmann::json::array();
    for (const Clause& c : d.clauses) dc.push_back(c.text);
    ctx["description"] = dc;
    const std::string text = post("integrator", "integrate_v1", ctx.dump());
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::string HttpBackend::refine_clause(const std::string& clause_text, FeedbackType type) {
    nlohmann::json ctx;
    ctx["clause"] = clause_text;
    ctx["feedback_type"] = feedback_type_name(type);
    return post("refiner", "refine_v1", ctx.dump());
}

std::vector<std::string> HttpBackend::edit(const Narrative& prev,
                                           const std::vector<heatmap::FieldDigest>& digests) {
    nlohmann::json ctx;
    ctx["narrative"] = prev.text();
    nlohmann::json ds = nlohmann::json::array();
    for (const auto& d : digests) {
        ds.push_back({{"variable", d.variable}, {"region", d.region}, {"max", d.max_value}});
    }
    ctx["digests"] = ds;
    const std::string text = post("editor", "edit_v1", ctx.dump());
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace agcd::mmnp
