#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "skillrc/ops.hpp"
#include "skillrc/params.hpp"
#include "skillrc/vocab.hpp"

namespace skillrc {

/// Pretrained word vectors for a vocabulary. Frozen by default: the RC
/// model treats them as fixed input, but the table can be registered as
/// trainable, in which case lookups route gradients back into it.
struct EmbeddingMatrix {
    nn::Tensor table;  // V × dim
    bool trainable = false;
    std::size_t coverage = 0;  // vocabulary tokens found in the file
    std::uint64_t source_hash = 0;

    std::size_t dim() const { return table.cols(); }
    std::size_t vocab_size() const { return table.rows(); }
};

namespace detail {

inline void fill_seeded_row(std::vector<double>& data, std::size_t row, std::size_t dim,
                            std::uint64_t seed, const std::string& token) {
    std::mt19937_64 rng(mix_seed(seed, token));
    for (std::size_t c = 0; c < dim; ++c) {
        data[row * dim + c] = nn::uniform_in(rng, -0.1, 0.1);
    }
}

}  // namespace detail

/// Text format: one token per line followed by its floats, space
/// separated. Vocabulary tokens missing from the file (including UNK)
/// get a per-token seeded uniform(-0.1, 0.1) vector, so loads are
/// deterministic in (file, vocab, seed) and every distinct type keeps
/// cos(v, v) = 1 against itself.
inline EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab,
                                       std::uint64_t seed = 0) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding file: " + path);

    std::size_t dim = 0;
    std::vector<double> data;
    std::vector<bool> filled;
    std::size_t coverage = 0;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        std::vector<double> vec;
        double v;
        while (ss >> v) vec.push_back(v);
        if (vec.empty()) {
            throw FormatError("embedding file line " + std::to_string(line_no) + ": no values");
        }
        if (dim == 0) {
            dim = vec.size();
            data.assign(vocab.size() * dim, 0.0);
            filled.assign(vocab.size(), false);
        } else if (vec.size() != dim) {
            throw FormatError("embedding file line " + std::to_string(line_no) +
                              ": expected " + std::to_string(dim) + " values, got " +
                              std::to_string(vec.size()));
        }
        if (!vocab.contains(token)) continue;
        std::size_t id = vocab.lookup(token);
        if (filled[id]) continue;  // first occurrence wins
        std::copy(vec.begin(), vec.end(), data.begin() + id * dim);
        filled[id] = true;
        ++coverage;
    }
    if (dim == 0) throw FormatError("embedding file has no vector lines: " + path);

    for (std::size_t id = 0; id < vocab.size(); ++id) {
        if (!filled[id]) detail::fill_seeded_row(data, id, dim, seed, vocab.token(id));
    }

    EmbeddingMatrix emb;
    emb.table = nn::Tensor({vocab.size(), dim}, std::move(data));
    emb.coverage = coverage;
    emb.source_hash = fnv1a64(sha256_file(path));
    return emb;
}

/// em_i = 1 iff doc token i equals any question token, case-insensitively.
inline std::vector<double> exact_match(const std::vector<std::string>& doc,
                                       const std::vector<std::string>& question) {
    std::vector<std::string> q_lower;
    q_lower.reserve(question.size());
    for (const auto& q : question) q_lower.push_back(lowercase(q));
    std::vector<double> out(doc.size(), 0.0);
    for (std::size_t i = 0; i < doc.size(); ++i) {
        std::string d = lowercase(doc[i]);
        for (const auto& q : q_lower) {
            if (d == q) {
                out[i] = 1.0;
                break;
            }
        }
    }
    return out;
}

/// score_i = max_j cos(emb[doc_i], emb[q_j]); zero-norm vectors score 0.
inline std::vector<double> maxsim(const std::vector<std::string>& doc,
                                  const std::vector<std::string>& question,
                                  const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    if (question.empty()) throw ContractError("maxsim: question must be nonempty");
    std::size_t dim = emb.dim();
    const auto& table = *emb.table.data;

    auto norm_of = [&](std::size_t id) {
        double s = 0.0;
        for (std::size_t c = 0; c < dim; ++c) s += table[id * dim + c] * table[id * dim + c];
        return std::sqrt(s);
    };

    std::vector<std::size_t> q_ids;
    std::vector<double> q_norms;
    for (const auto& q : question) {
        std::size_t id = vocab.lookup(q);
        q_ids.push_back(id);
        q_norms.push_back(norm_of(id));
    }

    std::vector<double> out(doc.size(), 0.0);
    for (std::size_t i = 0; i < doc.size(); ++i) {
        std::size_t di = vocab.lookup(doc[i]);
        double dn = norm_of(di);
        double best = -1.0;
        for (std::size_t j = 0; j < q_ids.size(); ++j) {
            double cosv = 0.0;
            if (dn > 0.0 && q_norms[j] > 0.0) {
                double dp = 0.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    dp += table[di * dim + c] * table[q_ids[j] * dim + c];
                }
                cosv = dp / (dn * q_norms[j]);
            }
            best = std::max(best, cosv);
        }
        out[i] = best;
    }
    return out;
}

namespace detail {

// Gathers WE rows. When a model registered the table as a trainable
// parameter (and wrote the registered tensor back into emb.table), the
// lookup participates in the graph; otherwise it is a constant.
inline nn::Tensor token_matrix(const std::vector<std::string>& tokens, const EmbeddingMatrix& emb,
                               const Vocabulary& vocab) {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
    return nn::embedding_rows(emb.table, ids);
}

inline nn::Tensor feature_columns(const std::vector<double>& sim, const std::vector<double>& em) {
    std::vector<double> cols(sim.size() * 2);
    for (std::size_t i = 0; i < sim.size(); ++i) {
        cols[2 * i] = sim[i];
        cols[2 * i + 1] = em[i];
    }
    return nn::Tensor({sim.size(), 2}, std::move(cols));
}

}  // namespace detail

/// Per-token input rows: concat(WE, maxsim, em), width dim + 2.
/// Document rows carry computed features; question rows carry (WE, 1, 1).
inline std::pair<nn::Tensor, nn::Tensor> build_input(const std::vector<std::string>& doc,
                                                     const std::vector<std::string>& question,
                                                     const EmbeddingMatrix& emb,
                                                     const Vocabulary& vocab) {
    std::vector<double> sim = maxsim(doc, question, emb, vocab);
    std::vector<double> em = exact_match(doc, question);
    nn::Tensor doc_rows =
        nn::concat_cols({detail::token_matrix(doc, emb, vocab), detail::feature_columns(sim, em)});
    std::vector<double> ones(question.size(), 1.0);
    nn::Tensor q_rows = nn::concat_cols(
        {detail::token_matrix(question, emb, vocab), detail::feature_columns(ones, ones)});
    return {std::move(doc_rows), std::move(q_rows)};
}

/// Input rows for a skill-task sequence: no question exists, so both
/// feature columns are fixed at 1 (the same convention question tokens
/// use in the RC model). Keeps every encoder's input width at dim + 2.
inline nn::Tensor build_skill_input(const std::vector<std::string>& tokens,
                                    const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    if (tokens.empty()) throw ContractError("build_skill_input: empty token sequence");
    std::vector<double> ones(tokens.size(), 1.0);
    return nn::concat_cols(
        {detail::token_matrix(tokens, emb, vocab), detail::feature_columns(ones, ones)});
}

}  // namespace skillrc
