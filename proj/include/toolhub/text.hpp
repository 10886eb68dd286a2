#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace toolhub {

/// One suffix rewrite: a token ending in `suffix` whose remaining stem is at
/// least `min_stem` characters long has the suffix replaced by `replacement`.
struct StemRule {
    std::string suffix;
    std::string replacement;
    std::size_t min_stem = 0;

    bool operator==(const StemRule&) const = default;
};

struct NormalizedText {
    std::vector<std::string> terms;
    std::vector<std::string> bigrams;
    std::vector<std::string> trigrams;

    bool empty() const noexcept { return terms.empty(); }
};

/// The built-in 50-word stop list (same content as data/stopwords.txt).
const std::vector<std::string>& default_stop_words();
/// The built-in 20-rule suffix table (same content as data/stem_rules.tsv).
const std::vector<StemRule>& default_stem_rules();

/// One word per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_stop_words(const std::filesystem::path& path);
/// `suffix<TAB>replacement<TAB>min-stem-len` per line; '#' comments allowed.
std::vector<StemRule> load_stem_rules(const std::filesystem::path& path);

/// Lowercase -> tokenize on non-alphanumerics -> drop stop words -> stem
/// (longest matching suffix first, at most one rule, skipping a rule whose
/// output another rule would rewrite) -> bigrams and trigrams
/// over the stemmed sequence.
class TextNormalizer {
public:
    TextNormalizer();
    TextNormalizer(std::vector<std::string> stop_words, std::vector<StemRule> rules);

    static TextNormalizer from_files(const std::filesystem::path& stop_words,
                                     const std::filesystem::path& rules);

    /// Lowercased maximal runs of [a-z0-9].
    static std::vector<std::string> tokenize(std::string_view text);

    bool is_stop_word(std::string_view token) const;
    std::string stem(std::string_view token) const;
    /// Index (into rules()) of the rule stem() would apply, if any.
    std::optional<std::size_t> matching_rule(std::string_view token) const;

    NormalizedText normalize(std::string_view text) const;
    std::vector<std::string> terms(std::string_view text) const { return normalize(text).terms; }

    const std::vector<StemRule>& rules() const noexcept { return rules_; }
    const std::unordered_set<std::string>& stop_words() const noexcept { return stop_words_; }

private:
    std::unordered_set<std::string> stop_words_;
    std::vector<StemRule> rules_;    // as given
    std::vector<std::size_t> order_; // rule indices, longest suffix first
};

/// Shared default instance.
const TextNormalizer& default_normalizer();

}  // namespace toolhub
