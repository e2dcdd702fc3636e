// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "litesc/rng.hpp"

namespace litesc {

constexpr int PAD = 0;
constexpr int START = 1;
constexpr int END = 2;
constexpr int UNK = 3;
constexpr size_t RESERVED_TOKENS = 4;

constexpr size_t MIN_WORDS = 4;
constexpr size_t MAX_WORDS = 30;

struct Sentence {
    std::vector<int> tokens;
    std::string raw;
};

class Vocab {
public:
    Vocab() : words_{"<pad>", "<start>", "<end>", "<unk>"} {
        for (size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = int(i);
    }

    int add(const std::string& w) {
        auto it = index_.find(w);
        if (it != index_.end()) return it->second;
        int id = int(words_.size());
        words_.push_back(w);
        index_[w] = id;
        return id;
    }

    int id(const std::string& w) const {
        auto it = index_.find(w);
        return it == index_.end() ? UNK : it->second;
    }

    const std::string& word(int id) const { return words_.at(size_t(id)); }
    size_t size() const { return words_.size(); }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write vocab to " + path);
        for (const auto& w : words_) f << w << "\n";
    }

    static Vocab load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot read vocab from " + path);
        Vocab v;
        std::string line;
        size_t i = 0;
        while (std::getline(f, line)) {
            if (i >= RESERVED_TOKENS) v.add(line);
            ++i;
        }
        return v;
    }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// Lowercase, fold apostrophes away, treat every other non-alphanumeric byte
// as a separator. Bytes above 0x7f pass through so UTF-8 words survive.
inline std::vector<std::string> tokenize(const std::string& line) {
    std::string cur;
    std::vector<std::string> words;
    auto flush = [&]() {
        if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : line) {
        if (c == '\'') continue;
        if (std::isalnum(c) || c >= 0x80)
            cur.push_back(char(std::tolower(c)));
        else
            flush();
    }
    flush();
    return words;
}

struct Corpus {
    std::vector<Sentence> train;
    std::vector<Sentence> test;
    Vocab vocab;
    double split_ratio = 0.1;
    size_t dropped_lines = 0;
};

// Reads one sentence per line, keeps sentences of 4..30 words, shuffles
// deterministically, splits off the test fraction, and builds the vocabulary
// from the training half (most frequent first, ties alphabetical).
inline Corpus load_corpus(const std::string& path, double split_ratio, uint64_t seed) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open corpus " + path);
    std::vector<std::vector<std::string>> kept;
    std::vector<std::string> raws;
    std::string line;
    size_t dropped = 0;
    while (std::getline(f, line)) {
        auto words = tokenize(line);
        if (words.size() < MIN_WORDS || words.size() > MAX_WORDS) {
            ++dropped;
            continue;
        }
        kept.push_back(std::move(words));
        raws.push_back(line);
    }
    if (kept.empty())
        throw std::runtime_error("no usable sentences in " + path + " (" +
                                 std::to_string(dropped) + " lines dropped)");

    std::vector<size_t> order(kept.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    size_t n_test = size_t(double(kept.size()) * split_ratio + 0.5);
    if (n_test == 0 && split_ratio > 0 && kept.size() > 1) n_test = 1;

    Corpus corpus;
    corpus.split_ratio = split_ratio;
    corpus.dropped_lines = dropped;

    std::map<std::string, size_t> freq;
    for (size_t i = n_test; i < order.size(); ++i)
        for (const auto& w : kept[order[i]]) ++freq[w];
    std::vector<std::pair<std::string, size_t>> by_freq(freq.begin(), freq.end());
    std::stable_sort(by_freq.begin(), by_freq.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [w, n] : by_freq) corpus.vocab.add(w);

    auto to_sentence = [&](size_t idx) {
        Sentence s;
        s.raw = raws[idx];
        for (const auto& w : kept[idx]) s.tokens.push_back(corpus.vocab.id(w));
        return s;
    };
    for (size_t i = 0; i < n_test; ++i) corpus.test.push_back(to_sentence(order[i]));
    for (size_t i = n_test; i < order.size(); ++i) corpus.train.push_back(to_sentence(order[i]));
    return corpus;
}

// Clipped n-gram precision BLEU with brevity penalty. Zero precisions are
// floored at eps so a single missing order does not zero short sentences.
inline double bleu(const std::vector<int>& candidate, const std::vector<int>& reference,
                   size_t max_n = 4, double eps = 1e-9) {
    if (max_n < 1) throw std::invalid_argument("bleu: max_n must be at least 1");
    if (reference.empty()) throw std::invalid_argument("bleu: empty reference");
    if (candidate.empty()) return 0.0;

    double log_sum = 0.0;
    for (size_t n = 1; n <= max_n; ++n) {
        std::map<std::vector<int>, size_t> ref_counts, cand_counts;
        if (reference.size() >= n)
            for (size_t i = 0; i + n <= reference.size(); ++i)
                ++ref_counts[std::vector<int>(reference.begin() + long(i),
                                              reference.begin() + long(i + n))];
        size_t total = 0, hit = 0;
        if (candidate.size() >= n)
            for (size_t i = 0; i + n <= candidate.size(); ++i) {
                ++cand_counts[std::vector<int>(candidate.begin() + long(i),
                                               candidate.begin() + long(i + n))];
                ++total;
            }
        for (const auto& [gram, count] : cand_counts) {
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) hit += std::min(count, it->second);
        }
        double p = total > 0 ? double(hit) / double(total) : 0.0;
        if (p <= 0.0) p = eps;
        log_sum += std::log(p);
    }
    double geo = std::exp(log_sum / double(max_n));
    double bp = candidate.size() < reference.size()
                    ? std::exp(1.0 - double(reference.size()) / double(candidate.size()))
                    : 1.0;
    return bp * geo;
}

inline double bleu(const Sentence& candidate, const Sentence& reference, size_t max_n = 4) {
    return bleu(candidate.tokens, reference.tokens, max_n);
}

// Corpus-level score: n-gram counts pooled over all pairs before the ratio,
// one brevity penalty from pooled lengths. Also reports the per-sentence mean.
struct BleuSummary {
    double corpus = 0.0;
    double sentence_mean = 0.0;
};

inline BleuSummary corpus_bleu(const std::vector<std::vector<int>>& candidates,
                               const std::vector<std::vector<int>>& references,
                               size_t max_n = 4, double eps = 1e-9) {
    if (candidates.size() != references.size())
        throw std::invalid_argument("corpus_bleu: pair count mismatch");
    std::vector<size_t> hit(max_n, 0), total(max_n, 0);
    size_t cand_len = 0, ref_len = 0;
    double mean = 0.0;
    for (size_t k = 0; k < candidates.size(); ++k) {
        const auto& c = candidates[k];
        const auto& r = references[k];
        mean += c.empty() ? 0.0 : bleu(c, r, max_n, eps);
        cand_len += c.size();
        ref_len += r.size();
        for (size_t n = 1; n <= max_n; ++n) {
            if (r.size() < n && c.size() < n) continue;
            std::map<std::vector<int>, size_t> ref_counts, cand_counts;
            for (size_t i = 0; i + n <= r.size(); ++i)
                ++ref_counts[std::vector<int>(r.begin() + long(i), r.begin() + long(i + n))];
            for (size_t i = 0; i + n <= c.size(); ++i) {
                ++cand_counts[std::vector<int>(c.begin() + long(i), c.begin() + long(i + n))];
                ++total[n - 1];
            }
            for (const auto& [gram, count] : cand_counts) {
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) hit[n - 1] += std::min(count, it->second);
            }
        }
    }
    BleuSummary out;
    out.sentence_mean = candidates.empty() ? 0.0 : mean / double(candidates.size());
    if (cand_len == 0) return out;
    double log_sum = 0.0;
    for (size_t n = 0; n < max_n; ++n) {
        double p = total[n] > 0 ? double(hit[n]) / double(total[n]) : 0.0;
        if (p <= 0.0) p = eps;
        log_sum += std::log(p);
    }
    double bp = cand_len < ref_len ? std::exp(1.0 - double(ref_len) / double(cand_len)) : 1.0;
    out.corpus = bp * std::exp(log_sum / double(max_n));
    return out;
}

// Deterministic synthetic English-like corpus: subject-verb-object clauses
// over fixed word banks with Zipf-flavored draws, so frequencies are skewed
// the way variable-length source coding expects.
inline std::vector<std::string> generate_toy_corpus(size_t n_sentences, uint64_t seed) {
    static const std::vector<std::string> nouns = {
        "river",  "stone",   "garden", "window", "letter", "market", "signal", "bridge",
        "forest", "harbor",  "candle", "ladder", "bottle", "meadow", "tunnel", "engine",
        "anchor", "basket",  "mirror", "needle", "orchard", "palace", "saddle", "thunder",
        "valley", "whistle", "winter", "summer", "farmer", "sailor", "doctor", "painter",
        "singer", "teacher", "miller", "hunter", "runner", "keeper", "writer", "driver",
        "horse",  "raven",   "salmon", "spider", "rabbit", "badger", "falcon", "turtle",
        "wagon",  "lantern", "hammer", "shovel", "carpet", "curtain", "pillow", "kettle"};
    static const std::vector<std::string> verbs = {
        "carries", "follows", "watches", "crosses", "repairs", "gathers", "pushes",
        "guards",  "paints",  "opens",   "closes",  "lifts",   "drops",   "finds",
        "loses",   "builds",  "breaks",  "moves",   "holds",   "turns",   "shakes",
        "burns",   "covers",  "counts",  "cleans",  "fills",   "empties", "borrows",
        "returns", "signals", "greets",  "visits"};
    static const std::vector<std::string> adjectives = {
        "quiet", "bright", "heavy",  "narrow", "gentle", "silver", "crooked", "distant",
        "early", "frozen", "golden", "hollow", "little", "mighty", "patient", "rusty",
        "steep", "warm",   "weary",  "young",  "ancient", "broken", "clever",  "damp"};
    static const std::vector<std::string> adverbs = {
        "slowly", "quickly", "quietly", "carefully", "suddenly", "rarely",
        "often",  "gladly",  "barely",  "smoothly",  "firmly",   "softly"};
    static const std::vector<std::string> places = {
        "village", "stable", "tower", "cellar", "island", "canyon", "chapel", "quarry"};

    Rng rng(seed);
    auto zipf = [&](size_t n) {
        // favor the head of each bank; index floor(n * u^2)
        double u = rng.uniform();
        size_t i = size_t(double(n) * u * u);
        return std::min(i, n - 1);
    };
    auto noun = [&]() { return nouns[zipf(nouns.size())]; };
    auto verb = [&]() { return verbs[zipf(verbs.size())]; };
    auto adj = [&]() { return adjectives[zipf(adjectives.size())]; };
    auto adv = [&]() { return adverbs[zipf(adverbs.size())]; };
    auto place = [&]() { return places[zipf(places.size())]; };

    std::vector<std::string> lines;
    lines.reserve(n_sentences);
    for (size_t i = 0; i < n_sentences; ++i) {
        std::ostringstream s;
        switch (rng.below(6)) {
            case 0: s << "the " << noun() << " " << verb() << " the " << noun(); break;
            case 1: s << "the " << adj() << " " << noun() << " " << verb() << " " << adv(); break;
            case 2:
                s << "a " << noun() << " " << verb() << " the " << adj() << " " << noun();
                break;
            case 3:
                s << "the " << noun() << " near the " << place() << " " << verb() << " "
                  << adv();
                break;
            case 4:
                s << "every " << noun() << " " << verb() << " a " << adj() << " " << noun()
                  << " " << adv();
                break;
            default:
                s << "the " << adj() << " " << noun() << " from the " << place() << " "
                  << verb() << " the " << noun();
                break;
        }
        lines.push_back(s.str());
    }
    return lines;
}

}  // namespace litesc
