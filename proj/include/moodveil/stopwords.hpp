#pragma once

#include <string>
#include <unordered_set>
#include <vector>

namespace moodveil::featurizer {

inline constexpr const char* kStopwordListVersion = "en-basic-1";

// Bundled English stopword list (version en-basic-1). Callers may supply
// their own list; the version tag is recorded with every vocabulary built.
inline const std::unordered_set<std::string>& default_stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",     "about", "above", "after",  "again", "all",   "am",    "an",    "and",   "any",
        "are",   "as",    "at",    "be",     "been",  "before", "being", "below", "between",
        "both",  "but",   "by",    "can",    "did",   "do",    "does",  "doing", "down",  "during",
        "each",  "few",   "for",   "from",   "further", "had",  "has",   "have",  "having", "he",
        "her",   "here",  "hers",  "him",    "his",   "how",   "i",     "if",    "in",    "into",
        "is",    "it",    "its",   "just",   "me",    "more",  "most",  "my",    "no",    "nor",
        "not",   "now",   "of",    "off",    "on",    "once",  "only",  "or",    "other", "our",
        "out",   "over",  "own",   "same",   "she",   "so",    "some",  "such",  "than",  "that",
        "the",   "their", "them",  "then",   "there", "these", "they",  "this",  "those", "through",
        "to",    "too",   "under", "until",  "up",    "very",  "was",   "we",    "were",  "what",
        "when",  "where", "which", "while",  "who",   "whom",  "why",   "will",  "with",  "you",
        "your",  "yours",
    };
    return words;
}

}  // namespace moodveil::featurizer
