#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "skillrc/errors.hpp"
#include "skillrc/tokenize.hpp"

namespace skillrc {

struct LabeledSequence {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;  // BIO
};

struct LabeledSentence {
    std::vector<std::string> tokens;
    std::string label;
};

struct LabeledPair {
    std::vector<std::string> premise;
    std::vector<std::string> hypothesis;
    std::string label;
};

struct RcExample {
    std::string id;
    std::string paragraph_id;
    std::string context;
    std::vector<Token> doc_tokens;
    std::vector<std::string> question_tokens;
    std::size_t span_begin = 0;  // token indices, inclusive
    std::size_t span_end = 0;
    std::string answer_text;                // first gold answer (training target)
    std::vector<std::string> gold_answers;  // all gold strings (dev evaluation)
};

/// Dense label index in first-appearance order.
class LabelMap {
public:
    std::size_t add(const std::string& label) {
        auto it = index_.find(label);
        if (it != index_.end()) return it->second;
        std::size_t id = names_.size();
        index_.emplace(label, id);
        names_.push_back(label);
        return id;
    }

    std::size_t get(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end()) throw DataError("unknown label: " + label);
        return it->second;
    }

    bool contains(const std::string& label) const { return index_.count(label) != 0; }
    const std::string& name(std::size_t id) const { return names_.at(id); }
    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// BIO handling
// ---------------------------------------------------------------------------

inline bool is_valid_bio_tag(const std::string& tag) {
    if (tag == "O") return true;
    return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

/// I-X preceded by nothing, O, or a different type becomes B-X.
/// Returns the number of repairs.
inline std::size_t bio_repair(std::vector<std::string>& tags) {
    std::size_t repairs = 0;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i].size() > 2 && tags[i][0] == 'I') {
            std::string type = tags[i].substr(2);
            bool ok = i > 0 && tags[i - 1].size() > 2 &&
                      (tags[i - 1][0] == 'B' || tags[i - 1][0] == 'I') &&
                      tags[i - 1].substr(2) == type;
            if (!ok) {
                tags[i] = "B-" + type;
                ++repairs;
            }
        }
    }
    return repairs;
}

inline bool bio_valid(const std::vector<std::string>& tags) {
    auto copy = tags;
    return bio_repair(copy) == 0;
}

// ---------------------------------------------------------------------------
// CoNLL-style sequence reader: "token<ws>tag" lines, blank line between
// sentences. Invalid BIO transitions are repaired and counted.
// ---------------------------------------------------------------------------

inline std::vector<LabeledSequence> read_conll_ner(const std::string& path,
                                                   std::size_t* repairs_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CoNLL file: " + path);

    std::vector<LabeledSequence> out;
    LabeledSequence current;
    std::size_t repairs = 0;
    std::string line;
    std::size_t line_no = 0;

    auto flush = [&]() {
        if (current.tokens.empty()) return;
        repairs += bio_repair(current.tags);
        out.push_back(std::move(current));
        current = {};
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
            flush();
            continue;
        }
        std::istringstream ss(line);
        std::string token, tag, extra;
        if (!(ss >> token >> tag) || (ss >> extra)) {
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": expected exactly two columns (token, tag)");
        }
        if (!is_valid_bio_tag(tag)) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": invalid BIO tag '" + tag +
                              "'");
        }
        current.tokens.push_back(std::move(token));
        current.tags.push_back(std::move(tag));
    }
    flush();
    if (repairs_out) *repairs_out = repairs;
    return out;
}

// ---------------------------------------------------------------------------
// TREC question classification reader: "COARSE:fine question text" lines.
// ---------------------------------------------------------------------------

inline std::vector<LabeledSentence> read_trec_qc(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open question classification file: " + path);
    std::vector<LabeledSentence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::string label;
        ss >> label;
        if (label.find(':') == std::string::npos) {
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": missing COARSE:fine label prefix");
        }
        LabeledSentence sent;
        sent.label = label;
        std::string tok;
        while (ss >> tok) sent.tokens.push_back(std::move(tok));
        if (sent.tokens.empty()) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": label without text");
        }
        out.push_back(std::move(sent));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sentence-pair reader: "label<TAB>sentence1<TAB>sentence2" lines.
// ---------------------------------------------------------------------------

inline std::vector<LabeledPair> read_pairs(const std::string& path,
                                           const std::vector<std::string>& expected_labels) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pair file: " + path);
    std::unordered_set<std::string> allowed(expected_labels.begin(), expected_labels.end());
    std::vector<LabeledPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 3) {
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": expected 3 tab-separated fields, got " +
                              std::to_string(fields.size()));
        }
        if (!allowed.count(fields[0])) {
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown label '" +
                            fields[0] + "'");
        }
        LabeledPair pair;
        pair.label = fields[0];
        pair.premise = tokenize_texts(fields[1]);
        pair.hypothesis = tokenize_texts(fields[2]);
        if (pair.premise.empty() || pair.hypothesis.empty()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": empty sentence field");
        }
        out.push_back(std::move(pair));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SQuAD v1.1 reader
// ---------------------------------------------------------------------------

struct SquadData {
    std::vector<RcExample> examples;
    std::size_t dropped = 0;  // questions whose answer could not be aligned
};

/// Maps each gold char span to the smallest covering token span via the
/// tokenizer offsets; questions that cannot be aligned are dropped and
/// counted rather than failing the whole load.
inline SquadData read_squad(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open SQuAD file: " + path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("SQuAD JSON parse error in " + path + ": " + e.what());
    }

    SquadData out;
    try {
        std::size_t paragraph_counter = 0;
        for (const auto& article : root.at("data")) {
            for (const auto& para : article.at("paragraphs")) {
                std::string paragraph_id = "p" + std::to_string(paragraph_counter++);
                std::string context = para.at("context").get<std::string>();
                std::vector<Token> doc_tokens = tokenize(context);
                for (const auto& qa : para.at("qas")) {
                    RcExample ex;
                    ex.id = qa.at("id").get<std::string>();
                    ex.paragraph_id = paragraph_id;
                    ex.context = context;
                    ex.doc_tokens = doc_tokens;
                    ex.question_tokens = tokenize_texts(qa.at("question").get<std::string>());

                    const auto& answers = qa.at("answers");
                    if (answers.empty()) {
                        ++out.dropped;
                        continue;
                    }
                    for (const auto& a : answers) {
                        std::string text = a.at("text").get<std::string>();
                        if (std::find(ex.gold_answers.begin(), ex.gold_answers.end(), text) ==
                            ex.gold_answers.end()) {
                            ex.gold_answers.push_back(text);
                        }
                    }
                    std::string answer = answers[0].at("text").get<std::string>();
                    std::size_t char_begin = answers[0].at("answer_start").get<std::size_t>();
                    std::size_t char_end = char_begin + answer.size();

                    bool found = false;
                    std::size_t tok_begin = 0, tok_end = 0;
                    for (std::size_t t = 0; t < doc_tokens.size(); ++t) {
                        if (doc_tokens[t].begin < char_end && doc_tokens[t].end > char_begin) {
                            if (!found) tok_begin = t;
                            tok_end = t;
                            found = true;
                        }
                    }
                    if (!found || char_end > context.size()) {
                        ++out.dropped;
                        continue;
                    }
                    std::string spanned = context.substr(
                        doc_tokens[tok_begin].begin,
                        doc_tokens[tok_end].end - doc_tokens[tok_begin].begin);
                    if (spanned.find(answer) == std::string::npos) {
                        ++out.dropped;
                        continue;
                    }
                    ex.span_begin = tok_begin;
                    ex.span_end = tok_end;
                    ex.answer_text = std::move(answer);
                    out.examples.push_back(std::move(ex));
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("SQuAD JSON structure error in " + path + ": " + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fraction sampling at paragraph granularity
// ---------------------------------------------------------------------------

namespace detail {

// Fisher–Yates with an explicit generator so results do not depend on
// the standard library's std::shuffle implementation.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng() % i;
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace detail

/// Keeps round(pct/100 · #paragraphs) whole paragraphs (chosen by a
/// seeded shuffle) and every question attached to them, in the input's
/// paragraph order. pct = 100 reproduces the input.
inline std::vector<RcExample> sample_fraction(const std::vector<RcExample>& examples, double pct,
                                              std::uint64_t seed) {
    if (!(pct > 0.0) || pct > 100.0) {
        throw ContractError("sample_fraction: pct must be in (0, 100]");
    }
    std::vector<std::string> paragraph_order;
    std::unordered_map<std::string, std::size_t> first_seen;
    for (const auto& ex : examples) {
        if (first_seen.emplace(ex.paragraph_id, paragraph_order.size()).second) {
            paragraph_order.push_back(ex.paragraph_id);
        }
    }
    std::vector<std::string> shuffled = paragraph_order;
    std::mt19937_64 rng(seed);
    detail::deterministic_shuffle(shuffled, rng);

    auto take = static_cast<std::size_t>(
        std::llround(pct / 100.0 * static_cast<double>(paragraph_order.size())));
    take = std::min(take, shuffled.size());
    std::unordered_set<std::string> selected(shuffled.begin(), shuffled.begin() + take);

    std::vector<RcExample> out;
    for (const auto& ex : examples) {
        if (selected.count(ex.paragraph_id)) out.push_back(ex);
    }
    return out;
}

inline std::size_t count_paragraphs(const std::vector<RcExample>& examples) {
    std::unordered_set<std::string> ids;
    for (const auto& ex : examples) ids.insert(ex.paragraph_id);
    return ids.size();
}

}  // namespace skillrc
