#include "toolhub/keyword_index.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace toolhub {

namespace {

std::string name_as_text(const std::string& name) {
    std::string out = name;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

}  // namespace

std::uint32_t KeywordIndex::intern(const std::string& term) {
    auto [it, inserted] = ids_.try_emplace(term, static_cast<std::uint32_t>(terms_.size()));
    if (inserted) {
        terms_.push_back(term);
        df_.push_back(0);
    }
    return it->second;
}

std::int64_t KeywordIndex::term_id(const std::string& term) const {
    auto it = ids_.find(term);
    return it == ids_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

KeywordIndex KeywordIndex::build(const std::vector<ToolSpec>& specs, const TextNormalizer& normalizer) {
    KeywordIndex index;
    index.normalizer_ = &normalizer;
    index.docs_.reserve(specs.size());
    for (const auto& spec : specs) {
        Document doc;
        doc.name = spec.name;
        std::map<std::uint32_t, int> counts;

        for (const auto& term : normalizer.terms(name_as_text(spec.name))) {
            const auto id = index.intern(term);
            ++counts[id];
            doc.name_terms.insert(id);
        }
        std::vector<std::string> segments{spec.description};
        for (const auto& p : spec.parameters) segments.push_back(p.description);
        for (const auto& segment : segments) {
            const auto norm = normalizer.normalize(segment);
            for (const auto& term : norm.terms) ++counts[index.intern(term)];
            doc.phrases.insert(norm.bigrams.begin(), norm.bigrams.end());
            doc.phrases.insert(norm.trigrams.begin(), norm.trigrams.end());
        }
        kernels::SparseDocument postings;
        for (const auto& [id, count] : counts) {
            postings.postings.emplace_back(id, count);
            ++index.df_[id];
        }
        index.docs_.push_back(std::move(doc));
        index.postings_.push_back(std::move(postings));
    }
    return index;
}

std::size_t KeywordIndex::df(const std::string& term) const {
    const auto id = term_id(term);
    return id < 0 ? 0 : df_[static_cast<std::size_t>(id)];
}

double KeywordIndex::idf(const std::string& term) const {
    if (docs_.empty()) return 0.0;
    const double n = static_cast<double>(docs_.size());
    const double value = std::log(n / (1.0 + static_cast<double>(df(term)))) + 1.0;
    return std::max(0.0, value);
}

int KeywordIndex::tf(const std::string& tool, const std::string& term) const {
    const auto id = term_id(term);
    if (id < 0) return 0;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        if (docs_[d].name == tool) return postings_[d].tf(static_cast<std::uint32_t>(id));
    }
    return 0;
}

std::vector<std::string> KeywordIndex::tool_names() const {
    std::vector<std::string> out;
    for (const auto& d : docs_) out.push_back(d.name);
    return out;
}

std::vector<ToolMatch> KeywordIndex::search(std::string_view query, std::size_t limit,
                                            const KeywordScoring& scoring) const {
    if (limit == 0) throw std::invalid_argument("limit must be at least 1");
    if (docs_.empty()) return {};

    const auto normalized = normalizer_->normalize(query);
    std::map<std::string, int> query_frequency;
    for (const auto& t : normalized.terms) ++query_frequency[t];

    // Only terms present in the index can contribute.
    struct QueryTerm {
        std::string term;
        std::uint32_t id;
        int qf;
        double idf;
    };
    std::vector<QueryTerm> qterms;
    std::vector<kernels::WeightedTerm> weighted;
    for (const auto& [term, qf] : query_frequency) {
        const auto id = term_id(term);
        if (id < 0) continue;
        const double term_idf = idf(term);
        qterms.push_back({term, static_cast<std::uint32_t>(id), qf, term_idf});
        weighted.push_back({static_cast<std::uint32_t>(id), term_idf * std::log(1.0 + qf)});
    }
    if (qterms.empty()) return {};

    std::vector<double> base(docs_.size());
    if (scoring.parallel) {
        kernels::term_scores_parallel(postings_, weighted, base);
    } else {
        kernels::term_scores_serial(postings_, weighted, base);
    }

    std::vector<std::string> query_phrases = normalized.bigrams;
    query_phrases.insert(query_phrases.end(), normalized.trigrams.begin(), normalized.trigrams.end());

    std::vector<ToolMatch> matches;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        if (!(base[d] > 0.0)) continue;
        const Document& doc = docs_[d];
        ScoreBreakdown b;
        b.base = base[d];
        for (const auto& q : qterms) {
            const int tf = postings_[d].tf(q.id);
            if (tf == 0) continue;
            b.terms.push_back({q.term, tf, q.idf, q.qf, tf * (q.idf * std::log(1.0 + q.qf))});
            if (doc.name_terms.count(q.id)) b.name_bonus_applied = true;
        }
        for (const auto& phrase : query_phrases) {
            if (doc.phrases.count(phrase)) {
                b.phrase_bonus_applied = true;
                break;
            }
        }
        b.final_score = b.base * (b.name_bonus_applied ? scoring.name_bonus : 1.0) *
                        (b.phrase_bonus_applied ? scoring.phrase_bonus : 1.0);
        matches.push_back({doc.name, b.final_score, SearchStrategy::Keyword, std::move(b)});
    }
    sort_matches(matches);
    if (matches.size() > limit) matches.resize(limit);
    return matches;
}

}  // namespace toolhub
