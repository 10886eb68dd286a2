#include "toolhub/match.hpp"

#include <algorithm>

namespace toolhub {

std::string_view to_string(SearchStrategy s) {
    switch (s) {
        case SearchStrategy::Keyword: return "keyword";
        case SearchStrategy::Embedding: return "embedding";
        case SearchStrategy::Agentic: return "agentic";
        case SearchStrategy::Auto: return "auto";
    }
    return "keyword";
}

std::optional<SearchStrategy> search_strategy_from_string(std::string_view name) {
    if (name == "keyword") return SearchStrategy::Keyword;
    if (name == "embedding") return SearchStrategy::Embedding;
    if (name == "agentic") return SearchStrategy::Agentic;
    if (name == "auto") return SearchStrategy::Auto;
    return std::nullopt;
}

bool ranks_before(const ToolMatch& a, const ToolMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tool_name < b.tool_name;
}

void sort_matches(std::vector<ToolMatch>& matches) {
    std::sort(matches.begin(), matches.end(), ranks_before);
}

nlohmann::json to_json(const ToolMatch& match) {
    nlohmann::json j{{"tool_name", match.tool_name},
                     {"score", match.score},
                     {"strategy", std::string(to_string(match.strategy))}};
    if (match.breakdown) {
        const auto& b = *match.breakdown;
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : b.terms) {
            terms.push_back({{"term", t.term},
                             {"tf", t.tf},
                             {"idf", t.idf},
                             {"query_frequency", t.query_frequency},
                             {"contribution", t.contribution}});
        }
        j["breakdown"] = {{"terms", std::move(terms)},
                          {"base", b.base},
                          {"name_bonus_applied", b.name_bonus_applied},
                          {"phrase_bonus_applied", b.phrase_bonus_applied},
                          {"final", b.final_score}};
    }
    return j;
}

nlohmann::json to_json(const std::vector<ToolMatch>& matches) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : matches) arr.push_back(to_json(m));
    return arr;
}

ToolMatch tool_match_from_json(const nlohmann::json& j) {
    ToolMatch m;
    m.tool_name = j.at("tool_name").get<std::string>();
    m.score = j.at("score").get<double>();
    m.strategy = search_strategy_from_string(j.value("strategy", std::string("keyword"))).value_or(SearchStrategy::Keyword);
    if (j.contains("breakdown")) {
        const auto& bj = j["breakdown"];
        ScoreBreakdown b;
        for (const auto& t : bj.at("terms")) {
            b.terms.push_back({t.at("term").get<std::string>(), t.at("tf").get<int>(), t.at("idf").get<double>(),
                               t.at("query_frequency").get<int>(), t.at("contribution").get<double>()});
        }
        b.base = bj.at("base").get<double>();
        b.name_bonus_applied = bj.at("name_bonus_applied").get<bool>();
        b.phrase_bonus_applied = bj.at("phrase_bonus_applied").get<bool>();
        b.final_score = bj.at("final").get<double>();
        m.breakdown = std::move(b);
    }
    return m;
}

}  // namespace toolhub
