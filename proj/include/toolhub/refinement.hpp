#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolhub/agentic.hpp"
#include "toolhub/caller.hpp"
#include "toolhub/composer.hpp"
#include "toolhub/finder.hpp"
#include "toolhub/protocol.hpp"

namespace toolhub::refine {

// Agent prompts start with one of these task lines and carry their data as a
// JSON block between kInputBegin and kInputEnd.
inline constexpr const char* kTaskTestCases = "TASK: generate_test_cases";
inline constexpr const char* kTaskAnalyze = "TASK: analyze_description";
inline constexpr const char* kTaskArguments = "TASK: optimize_argument_descriptions";
inline constexpr const char* kTaskEvaluate = "TASK: evaluate_quality";
inline constexpr const char* kTaskSpecification = "TASK: discover_specification";
inline constexpr const char* kTaskImplementation = "TASK: discover_implementation";
inline constexpr const char* kInputBegin = "<<<INPUT";
inline constexpr const char* kInputEnd = "INPUT>>>";

/// The JSON block of a prompt, or a discarded value.
json prompt_input(std::string_view prompt);

// --- quality reports ---------------------------------------------------------------

enum class DimensionSet { Optimizer, Discover };

std::string_view to_string(DimensionSet set);
const std::vector<std::string>& dimensions(DimensionSet set);
/// Discover weights (sum to 1).
const std::map<std::string, double>& discover_weights();

struct QualityReport {
    DimensionSet set = DimensionSet::Optimizer;
    std::map<std::string, double> scores;
    std::map<std::string, std::string> rationale;
    double overall = 0.0;
    int round = 0;
};

/// Arithmetic mean (optimizer) or weighted mean (discover). Throws
/// std::invalid_argument unless `scores` has exactly the set's dimensions.
double overall_score(const std::map<std::string, double>& scores, DimensionSet set);
json to_json(const QualityReport& report);

// --- text helpers ------------------------------------------------------------------

/// Sentences split on . ! ? followed by whitespace or the end.
std::vector<std::string> split_sentences(std::string_view text);
/// Lower case, single spaces, no trailing punctuation.
std::string normalize_sentence(std::string_view sentence);
/// Parameter sentences that repeat a tool description sentence.
std::size_t duplicated_sentences(const ToolSpec& spec);
/// Removes from each parameter description every sentence that repeats a
/// tool description sentence. A description left empty gets a generic one.
ToolSpec strip_redundancy(ToolSpec spec);

// --- test batches ------------------------------------------------------------------

struct TestCase {
    ToolCall call;
    std::string purpose;   // "valid", "edge", "missing:<p>", "type:<p>", "unknown", "boundary:<p>", "agent"
    bool expect_ok = true; // false for probes that validation must reject
};

struct TestBatch {
    std::vector<TestCase> cases;
    std::string provenance = "initial";  // or "feedback-round-<k>"
    std::vector<ToolResult> results;     // parallel to cases once executed
};

json to_json(const TestBatch& batch);

/// Sample value for a parameter; takes an example from its description
/// ("such as X", "e.g. X", "for example X") when the type is string.
json sample_value(const ParameterSpec& param);

/// Deterministic coverage cases, plus feedback-targeted cases when a prior
/// report is given. Dimensions scoring below 10 count as flagged. A flagged
/// clarity or user-friendliness also asks the backend for extra argument
/// sets (only when `backends` is non-null). Cases are deduplicated by their
/// serialized call.
TestBatch generate_test_cases(const ToolSpec& spec, const QualityReport* feedback = nullptr,
                              BackendRegistry* backends = nullptr, const std::string& backend_id = "");

/// Runs every case through the caller (collect-all).
void execute_batch(TestBatch& batch, Caller& caller, std::size_t width = 8);

// --- optimizer steps ---------------------------------------------------------------

struct DescriptionProposal {
    std::string text;
    bool low_confidence = false;  // every observed call failed
};

/// Throws std::invalid_argument for a batch without results and
/// ToolFailure(ExecutionFailed) when the backend fails or answers nothing.
DescriptionProposal analyze_description(const ToolSpec& spec, const TestBatch& batch, BackendRegistry& backends,
                                        const std::string& backend_id = "");

/// Revised descriptions keyed by parameter name, with the redundancy rule
/// applied. Parameters the backend leaves out keep their description.
std::map<std::string, std::string> optimize_argument_descriptions(const ToolSpec& spec, const TestBatch& batch,
                                                                  BackendRegistry& backends,
                                                                  const std::string& backend_id = "");

/// The backend scores each dimension; overall is computed here. Scores are
/// clamped to [0, 10]. Missing dimensions or non-numbers raise ExecutionFailed.
QualityReport evaluate_quality(const ToolSpec& spec, const TestBatch& batch, DimensionSet set, BackendRegistry& backends,
                               const std::string& backend_id = "");

// --- rule based reference backend ---------------------------------------------------

/// Rubric used by the reference rules. Optimizer dimensions start at 10:
///   clarity               -2 per parameter without description
///   accuracy              -2 per observed payload field the description never mentions
///   completeness          -3 when the description is shorter than 20 characters
///   conciseness           -2 when the description is over 400 characters,
///                         -1 per parameter description over 200 characters
///   user-friendliness     -2 unless the description starts upper case and ends with '.'
///   redundancy-avoidance  -2 per duplicated sentence
/// Discover dimensions:
///   functionality    10 x share of valid cases that succeeded
///   reliability      10 x share of invalid probes rejected by validation
///   maintainability  10, -2 per parameter without description, -3 for a
///                    description under 20 characters, -2 per duplicated sentence
///   performance      10 below 1 s mean duration, 8 below 5 s, else 5
///   test-coverage    10 x min(1, cases / 5)
QualityReport rubric_report(const ToolSpec& spec, const json& results, DimensionSet set);

/// Adds rules answering the optimizer prompts: no extra test cases, an
/// analyzer that appends a "Returns fields: ..." sentence naming observed
/// payload fields, an identity argument optimizer, and rubric_report as the
/// evaluator. Rules added earlier take precedence, so scripted answers can
/// be layered in front.
void install_reference_rules(MockBackend& backend);

// --- optimize_tool -------------------------------------------------------------------

struct OptimizeOptions {
    double threshold = 8.0;
    int max_rounds = 3;
    std::string backend_id;
    std::size_t parallel_width = 8;
};

struct OptimizationOutcome {
    ToolSpec original;
    ToolSpec optimized;  // best-scoring candidate
    int rounds_used = 0;
    int best_round = 0;
    std::vector<QualityReport> reports;
    std::string terminated_by;  // "threshold" or "max-rounds"
};

json to_json(const OptimizationOutcome& outcome);

/// Refines the description and parameter descriptions of a registered tool.
/// Throws ToolFailure(ToolNotFound) for an unknown tool, std::invalid_argument
/// for max_rounds < 1, and ToolFailure(ExecutionFailed) with
/// detail {stage, round, partial} when a round fails.
OptimizationOutcome optimize_tool(const std::string& tool, Caller& caller, BackendRegistry& backends,
                                  const OptimizeOptions& options = {});

// --- discover_tool -------------------------------------------------------------------

struct DiscoverOptions {
    double target = 9.0;
    int max_rounds = 3;
    std::string backend_id;
    std::size_t references = 5;
};

struct ToolPackage {
    ToolSpec spec;
    json implementation;                     // plan document for the "program" handler
    std::vector<std::string> dependencies;   // "tool:<name>" per tool the plan calls
    json metadata = json::object();
    QualityReport quality;
    bool accepted = false;                   // quality.overall >= target
};

json to_json(const ToolPackage& package);

/// Discovery, specification, implementation and evaluation, repeated until
/// the weighted score reaches the target or max_rounds is used up; the best
/// round is returned. Generation failures are retried once per stage, then
/// raise ToolFailure(ExecutionFailed) with detail.stage set.
ToolPackage discover_tool(const std::string& requirement, Caller& caller, Finder& finder, BackendRegistry& backends,
                          const DiscoverOptions& options = {});

/// Writes <dir>/<name>/{config.json, spec.json, implementation.json,
/// dependencies.txt, manifest.json}. The manifest loads the tool with a
/// "program:implementation.json" handler. Returns the package directory.
std::filesystem::path write_package(const ToolPackage& package, const std::filesystem::path& dir);

}  // namespace toolhub::refine
