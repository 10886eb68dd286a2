#include "keyword_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "toolhub/text.hpp"

namespace oracle {

namespace {

std::vector<std::string> words(const std::string& text) { return toolhub::default_normalizer().terms(text); }

std::vector<std::string> ngrams(const std::vector<std::string>& t) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) out.push_back(t[i] + " " + t[i + 1]);
    for (std::size_t i = 0; i + 2 < t.size(); ++i) out.push_back(t[i] + " " + t[i + 1] + " " + t[i + 2]);
    return out;
}

struct Doc {
    std::string name;
    std::vector<std::string> name_terms;
    std::vector<std::string> all_terms;
    std::vector<std::string> phrases;
};

Doc make_doc(const toolhub::ToolSpec& spec) {
    Doc d;
    d.name = spec.name;
    std::string spaced = spec.name;
    for (auto& c : spaced) {
        if (c == '_') c = ' ';
    }
    d.name_terms = words(spaced);
    d.all_terms = d.name_terms;
    std::vector<std::string> segments{spec.description};
    for (const auto& p : spec.parameters) segments.push_back(p.description);
    for (const auto& s : segments) {
        auto w = words(s);
        d.all_terms.insert(d.all_terms.end(), w.begin(), w.end());
        auto g = ngrams(w);
        d.phrases.insert(d.phrases.end(), g.begin(), g.end());
    }
    return d;
}

bool contains(const std::vector<std::string>& v, const std::string& x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

std::vector<Scored> rank(const std::vector<toolhub::ToolSpec>& corpus, const std::string& query, double name_bonus,
                         double phrase_bonus) {
    std::vector<Doc> docs;
    for (const auto& s : corpus) docs.push_back(make_doc(s));
    const double n = static_cast<double>(docs.size());

    const auto q = words(query);
    std::vector<std::string> distinct;
    for (const auto& t : q) {
        if (!contains(distinct, t)) distinct.push_back(t);
    }
    const auto qphrases = ngrams(q);

    std::vector<Scored> out;
    for (const auto& d : docs) {
        Scored s;
        s.name = d.name;
        for (const auto& term : distinct) {
            const double tf = static_cast<double>(std::count(d.all_terms.begin(), d.all_terms.end(), term));
            if (tf == 0) continue;
            double df = 0;
            for (const auto& other : docs) df += contains(other.all_terms, term) ? 1 : 0;
            const double idf = std::max(0.0, std::log(n / (1.0 + df)) + 1.0);
            const double qf = static_cast<double>(std::count(q.begin(), q.end(), term));
            s.base += tf * idf * std::log(1.0 + qf);
            if (contains(d.name_terms, term)) s.name_bonus = true;
        }
        for (const auto& p : qphrases) {
            if (contains(d.phrases, p)) s.phrase_bonus = true;
        }
        if (!(s.base > 0.0)) continue;
        s.score = s.base * (s.name_bonus ? name_bonus : 1.0) * (s.phrase_bonus ? phrase_bonus : 1.0);
        out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.name < b.name;
    });
    return out;
}

}  // namespace oracle
