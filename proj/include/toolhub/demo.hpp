#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "toolhub/agentic.hpp"
#include "toolhub/registry.hpp"

namespace toolhub::demo {

/// $TOOLHUB_DATA_DIR when set, else the data directory of the source tree.
std::filesystem::path default_data_dir();

/// Adds the "demo.*" builtin handlers. Fixture tables are read from
/// `fixtures_dir` when a handler is first loaded.
void install_builtins(HandlerCatalog& catalog, const std::filesystem::path& fixtures_dir);

/// Installs the builtins and loads <data_dir>/demo/manifest.json. Throws
/// ToolFailure(SpecInvalid) if any manifest entry fails to load. Agentic
/// and composed demo tools need a Runtime (for their handler schemes) to be
/// callable; they register either way.
std::size_t install_demo_pack(Registry& registry, const std::filesystem::path& data_dir = default_data_dir());

/// Deterministic answers for the demo agent prompts (summarizer: the first
/// max_words words of the text; hypothesis_generator: three templated
/// hypotheses), so the agentic demo tools run without a hosted model.
void install_demo_agent_rules(MockBackend& backend);

/// Path of the case-study workflow plan shipped with the demo pack.
std::filesystem::path case_study_plan(const std::filesystem::path& data_dir = default_data_dir());

/// Evaluates the arithmetic subset used by arithmetic_eval: numbers,
/// + - * / ^, unary minus, parentheses. Throws ToolFailure(ExecutionFailed).
double evaluate_expression(const std::string& expression);

/// Converts between units of the same dimension. Throws
/// ToolFailure(ExecutionFailed) for unknown or incompatible units.
double convert_units(double value, const std::string& from, const std::string& to);

}  // namespace toolhub::demo
