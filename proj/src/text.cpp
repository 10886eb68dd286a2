#include "toolhub/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace toolhub {

const std::vector<std::string>& default_stop_words() {
    static const std::vector<std::string> words{
        "a",     "an",    "and",   "are",   "as",    "at",   "be",    "been",  "but",   "by",
        "can",   "for",   "from",  "has",   "have",  "he",   "how",   "if",    "in",    "into",
        "is",    "it",    "its",   "not",   "of",    "on",   "or",    "so",    "such",  "than",
        "that",  "the",   "their", "them",  "then",  "there", "these", "they",  "this",  "those",
        "to",    "was",   "were",  "what",  "when",  "where", "which", "who",   "will",  "with",
    };
    return words;
}

const std::vector<StemRule>& default_stem_rules() {
    // Identity rules ("ss" -> "ss") stop shorter rules from firing.
    static const std::vector<StemRule> rules{
        {"ational", "ate", 2}, {"ization", "ize", 2}, {"fulness", "", 2}, {"iveness", "ive", 2},
        {"tional", "tion", 2}, {"ssing", "ss", 1},    {"ssed", "ss", 1},  {"sses", "ss", 1},
        {"ings", "", 3},       {"ness", "", 3},       {"sing", "se", 1},  {"ches", "ch", 2},
        {"sed", "se", 1},      {"ies", "y", 2},       {"ied", "y", 2},    {"ing", "", 3},
        {"ful", "", 3},        {"ed", "", 3},         {"ss", "ss", 0},    {"s", "", 2},
    };
    return rules;
}

namespace {

std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

}  // namespace

std::vector<std::string> load_stop_words(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        out.push_back(line);
    }
    return out;
}

std::vector<StemRule> load_stem_rules(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::vector<StemRule> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line.front() == '#') continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
        }
        StemRule rule;
        rule.suffix = line.substr(0, t1);
        rule.replacement = line.substr(t1 + 1, t2 - t1 - 1);
        rule.min_stem = static_cast<std::size_t>(std::stoul(line.substr(t2 + 1)));
        if (rule.suffix.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": empty suffix");
        out.push_back(std::move(rule));
    }
    return out;
}

TextNormalizer::TextNormalizer() : TextNormalizer(default_stop_words(), default_stem_rules()) {}

TextNormalizer::TextNormalizer(std::vector<std::string> stop_words, std::vector<StemRule> rules)
    : stop_words_(stop_words.begin(), stop_words.end()), rules_(std::move(rules)), order_(rules_.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [this](std::size_t a, std::size_t b) {
        return rules_[a].suffix.size() > rules_[b].suffix.size();
    });
}

TextNormalizer TextNormalizer::from_files(const std::filesystem::path& stop_words,
                                          const std::filesystem::path& rules) {
    return TextNormalizer(load_stop_words(stop_words), load_stem_rules(rules));
}

std::vector<std::string> TextNormalizer::tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char raw : text) {
        const char c = (raw >= 'A' && raw <= 'Z') ? static_cast<char>(raw - 'A' + 'a') : raw;
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            current.push_back(c);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

bool TextNormalizer::is_stop_word(std::string_view token) const {
    return stop_words_.count(std::string(token)) > 0;
}

namespace {

bool rule_matches(const StemRule& r, std::string_view token) {
    return token.size() >= r.suffix.size() && token.substr(token.size() - r.suffix.size()) == r.suffix &&
           token.size() - r.suffix.size() >= r.min_stem;
}

std::string apply_rule(const StemRule& r, std::string_view token) {
    std::string out(token.substr(0, token.size() - r.suffix.size()));
    out += r.replacement;
    return out;
}

}  // namespace

// A rule whose output would be rewritten again is skipped, so every stem is
// a fixed point and normalization is idempotent.
std::optional<std::size_t> TextNormalizer::matching_rule(std::string_view token) const {
    for (std::size_t idx : order_) {
        const StemRule& r = rules_[idx];
        if (!rule_matches(r, token)) continue;
        const std::string out = apply_rule(r, token);
        bool stable = true;
        for (std::size_t next : order_) {
            if (!rule_matches(rules_[next], out)) continue;
            stable = apply_rule(rules_[next], out) == out;
            break;
        }
        if (stable) return idx;
    }
    return std::nullopt;
}

std::string TextNormalizer::stem(std::string_view token) const {
    auto idx = matching_rule(token);
    if (!idx) return std::string(token);
    return apply_rule(rules_[*idx], token);
}

NormalizedText TextNormalizer::normalize(std::string_view text) const {
    NormalizedText out;
    for (auto& token : tokenize(text)) {
        if (is_stop_word(token)) continue;
        out.terms.push_back(stem(token));
    }
    const auto& t = out.terms;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) out.bigrams.push_back(t[i] + " " + t[i + 1]);
    for (std::size_t i = 0; i + 2 < t.size(); ++i) out.trigrams.push_back(t[i] + " " + t[i + 1] + " " + t[i + 2]);
    return out;
}

const TextNormalizer& default_normalizer() {
    static const TextNormalizer instance;
    return instance;
}

}  // namespace toolhub
