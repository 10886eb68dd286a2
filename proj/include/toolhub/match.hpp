#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolhub {

enum class SearchStrategy { Keyword, Embedding, Agentic, Auto };

std::string_view to_string(SearchStrategy s);
std::optional<SearchStrategy> search_strategy_from_string(std::string_view name);

/// Contribution of one matched query term: tf * idf * ln(1 + query_frequency).
struct TermScore {
    std::string term;
    int tf = 0;
    double idf = 0.0;
    int query_frequency = 0;
    double contribution = 0.0;
};

struct ScoreBreakdown {
    std::vector<TermScore> terms;
    double base = 0.0;
    bool name_bonus_applied = false;
    bool phrase_bonus_applied = false;
    double final_score = 0.0;
};

struct ToolMatch {
    std::string tool_name;
    double score = 0.0;
    SearchStrategy strategy = SearchStrategy::Keyword;
    std::optional<ScoreBreakdown> breakdown;
};

/// Score descending, then name ascending.
bool ranks_before(const ToolMatch& a, const ToolMatch& b);
void sort_matches(std::vector<ToolMatch>& matches);

nlohmann::json to_json(const ToolMatch& match);
nlohmann::json to_json(const std::vector<ToolMatch>& matches);
ToolMatch tool_match_from_json(const nlohmann::json& j);

}  // namespace toolhub
