#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "userembed/common.hpp"

namespace userembed {

struct Document {
    std::string doc_id;
    std::vector<std::int32_t> tokens;  ///< ids into a Vocabulary
};

/// Bidirectional token <-> id map. Ids are assigned in order of first sight.
class Vocabulary {
public:
    std::int32_t intern(std::string_view word) {
        auto it = ids_.find(std::string(word));
        if (it != ids_.end()) return it->second;
        const auto id = static_cast<std::int32_t>(words_.size());
        words_.emplace_back(word);
        ids_.emplace(words_.back(), id);
        return id;
    }

    /// -1 when absent.
    std::int32_t find(std::string_view word) const {
        auto it = ids_.find(std::string(word));
        return it == ids_.end() ? -1 : it->second;
    }

    const std::string& word(std::int32_t id) const { return words_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::int32_t> ids_;
};

inline const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",       "about",  "above",  "after",  "again",   "against", "all",     "am",     "an",
        "and",     "any",    "are",    "as",     "at",      "be",      "because", "been",   "before",
        "being",   "below",  "between", "both",  "but",     "by",      "can",     "could",  "did",
        "do",      "does",   "doing",  "down",   "during",  "each",    "few",     "for",    "from",
        "further", "had",    "has",    "have",   "having",  "he",      "her",     "here",   "hers",
        "herself", "him",    "himself", "his",   "how",     "if",      "in",      "into",   "is",
        "it",      "its",    "itself", "just",   "me",      "more",    "most",    "my",     "myself",
        "no",      "nor",    "not",    "now",    "of",      "off",     "on",      "once",   "only",
        "or",      "other",  "our",    "ours",   "ourselves", "out",   "over",    "own",    "same",
        "she",     "should", "so",     "some",   "such",    "than",    "that",    "the",    "their",
        "theirs",  "them",   "themselves", "then", "there", "these",   "they",    "this",   "those",
        "through", "to",     "too",    "under",  "until",   "up",      "very",    "was",    "we",
        "were",    "what",   "when",   "where",  "which",   "while",   "who",     "whom",   "why",
        "will",    "with",   "would",  "you",    "your",    "yours",   "yourself", "yourselves",
    };
    return words;
}

/// Lowercase, split on non-alphanumeric bytes, drop tokens shorter than two
/// characters and stopwords. Non-ASCII bytes are separators.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 2 && !stopwords().contains(cur)) out.push_back(cur);
        cur.clear();
    };
    for (unsigned char c : text) {
        if (c < 0x80 && std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

struct Corpus {
    Vocabulary vocab;
    std::vector<Document> docs;
    std::unordered_map<std::string, std::size_t> index;  ///< doc_id -> position in docs

    const Document* find(const std::string& doc_id) const {
        auto it = index.find(doc_id);
        return it == index.end() ? nullptr : &docs[it->second];
    }

    void add(std::string doc_id, std::string_view text) {
        Document d{std::move(doc_id), {}};
        for (const auto& w : tokenize(text)) d.tokens.push_back(vocab.intern(w));
        if (!index.emplace(d.doc_id, docs.size()).second) {
            throw Error("duplicate doc_id '" + d.doc_id + "'");
        }
        docs.push_back(std::move(d));
    }
};

/// Reads one `{"doc_id": ..., "text": ...}` record per line.
inline Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file " + path.string());
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
        try {
            const auto j = nlohmann::json::parse(line);
            corpus.add(j.at("doc_id").get<std::string>(), j.at("text").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + e.what());
        } catch (const Error& e) {
            throw ParseError(where + e.what());
        }
    }
    return corpus;
}

inline void write_corpus(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, std::string>>& docs) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& [id, text] : docs) {
        out << nlohmann::json{{"doc_id", id}, {"text", text}}.dump() << '\n';
    }
}

}  // namespace userembed
