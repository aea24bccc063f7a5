#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "skillrc/adam.hpp"
#include "skillrc/checkpoint.hpp"
#include "skillrc/embeddings.hpp"
#include "skillrc/lstm.hpp"
#include "skillrc/readers.hpp"

namespace skillrc {

enum class SkillTask { ner, qtc, te, ppdb };

inline const char* to_string(SkillTask task) {
    switch (task) {
        case SkillTask::ner: return "ner";
        case SkillTask::qtc: return "qtc";
        case SkillTask::te: return "te";
        case SkillTask::ppdb: return "ppdb";
    }
    return "?";
}

inline SkillTask skill_task_from_string(const std::string& s) {
    if (s == "ner") return SkillTask::ner;
    if (s == "qtc") return SkillTask::qtc;
    if (s == "te") return SkillTask::te;
    if (s == "ppdb") return SkillTask::ppdb;
    throw ConfigError("unknown skill task '" + s + "'");
}

inline const std::vector<SkillTask>& all_skill_tasks() {
    static const std::vector<SkillTask> tasks = {SkillTask::ner, SkillTask::qtc, SkillTask::te,
                                                 SkillTask::ppdb};
    return tasks;
}

/// Supervision granularity for the text classifier.
enum class QtcMode { token_sum, sentence_maxpool };

inline const char* to_string(QtcMode mode) {
    return mode == QtcMode::token_sum ? "token" : "sentence";
}

inline QtcMode qtc_mode_from_string(const std::string& s) {
    if (s == "token") return QtcMode::token_sum;
    if (s == "sentence") return QtcMode::sentence_maxpool;
    throw ConfigError("unknown qtc mode '" + s + "' (expected token|sentence)");
}

inline std::vector<std::string> te_labels() { return {"entailment", "neutral", "contradiction"}; }

inline std::vector<std::string> ppdb_labels() {
    return {"equivalence", "forward_entailment", "reverse_entailment",
            "exclusion",   "otherrelated",       "independent"};
}

// ---------------------------------------------------------------------------
// Bi-LSTM encoder wrapper
// ---------------------------------------------------------------------------

struct BiLstmEncoder {
    nn::LstmWeights fwd;
    nn::LstmWeights bwd;

    std::size_t input_dim() const { return fwd.input_dim(); }
    std::size_t out_dim() const { return 2 * fwd.hidden(); }

    nn::Tensor encode(const nn::Tensor& rows) const { return nn::bilstm_encode(rows, fwd, bwd); }
};

/// Output width is split evenly across the two directions.
inline BiLstmEncoder register_bilstm(nn::ParamStore& ps, const std::string& prefix,
                                     std::size_t input_dim, std::size_t out_dim,
                                     std::mt19937_64& rng, bool trainable = true) {
    if (out_dim % 2 != 0) throw ConfigError("bilstm output width must be even");
    BiLstmEncoder enc;
    enc.fwd = nn::register_lstm(ps, prefix + ".fwd", input_dim, out_dim / 2, rng, trainable);
    enc.bwd = nn::register_lstm(ps, prefix + ".bwd", input_dim, out_dim / 2, rng, trainable);
    return enc;
}

inline BiLstmEncoder bilstm_from_store(const nn::ParamStore& ps, const std::string& prefix) {
    BiLstmEncoder enc;
    enc.fwd = nn::lstm_from_store(ps, prefix + ".fwd");
    enc.bwd = nn::lstm_from_store(ps, prefix + ".bwd");
    return enc;
}

// ---------------------------------------------------------------------------
// Skill models
// ---------------------------------------------------------------------------

/// One of the three §-model families, selected by task:
///   ner       — sequence labeler: encoder + per-token label projection
///   qtc       — text classifier with token-wise or pooled supervision
///   te / ppdb — relation classifier: shared encoder, max-pool,
///               [u; v; |u−v|; u⊙v] combiner, one-hidden-layer head
struct SkillModel {
    SkillTask task = SkillTask::ner;
    QtcMode qtc_mode = QtcMode::token_sum;
    LabelMap labels;
    nn::ParamStore params;
    BiLstmEncoder enc;

    static SkillModel create(SkillTask task, std::size_t input_dim, std::size_t encoder_out,
                             LabelMap labels, std::uint64_t seed,
                             QtcMode qtc_mode = QtcMode::token_sum) {
        if (labels.size() < 2) throw ConfigError("skill model needs at least 2 labels");
        SkillModel m;
        m.task = task;
        m.qtc_mode = qtc_mode;
        m.labels = std::move(labels);
        std::mt19937_64 rng(seed);
        m.enc = register_bilstm(m.params, "enc", input_dim, encoder_out, rng);
        std::size_t n_labels = m.labels.size();
        if (task == SkillTask::ner || task == SkillTask::qtc) {
            m.params.add("label_proj.w", nn::glorot_matrix(encoder_out, n_labels, rng));
            m.params.add("label_proj.b", nn::Tensor::zeros({n_labels}));
        } else {
            std::size_t head_hidden = encoder_out;
            m.params.add("head.w1", nn::glorot_matrix(4 * encoder_out, head_hidden, rng));
            m.params.add("head.b1", nn::Tensor::zeros({head_hidden}));
            m.params.add("head.w2", nn::glorot_matrix(head_hidden, n_labels, rng));
            m.params.add("head.b2", nn::Tensor::zeros({n_labels}));
        }
        return m;
    }

    std::size_t input_dim() const { return enc.input_dim(); }
    std::size_t encoder_out() const { return enc.out_dim(); }

    /// Per-token label distributions [T×L].
    nn::Tensor seq_label_forward(const nn::Tensor& rows) const {
        if (task != SkillTask::ner) throw ContractError("seq_label_forward: not a sequence labeler");
        nn::Tensor ctx = enc.encode(rows);
        return nn::softmax_rows(nn::affine(ctx, params.get("label_proj.w"), params.get("label_proj.b")));
    }

    /// softmax over the sum of per-token label-space projections.
    nn::Tensor token_supervised_classify(const nn::Tensor& rows) const {
        if (task != SkillTask::qtc || qtc_mode != QtcMode::token_sum) {
            throw ContractError("token_supervised_classify: model is not in token-sum mode");
        }
        nn::Tensor ctx = enc.encode(rows);
        nn::Tensor token_logits =
            nn::affine(ctx, params.get("label_proj.w"), params.get("label_proj.b"));
        return nn::softmax(nn::sum_rows(token_logits));
    }

    /// Element-wise max over token context vectors, then projection.
    nn::Tensor sentence_pooled_classify(const nn::Tensor& rows) const {
        if (task != SkillTask::qtc || qtc_mode != QtcMode::sentence_maxpool) {
            throw ContractError("sentence_pooled_classify: model is not in sentence-maxpool mode");
        }
        nn::Tensor pooled = nn::maxpool_rows(enc.encode(rows));
        nn::Tensor logits = nn::flatten(nn::affine(nn::stack_rows({pooled}),
                                                   params.get("label_proj.w"),
                                                   params.get("label_proj.b")));
        return nn::softmax(logits);
    }

    nn::Tensor classify_sentence(const nn::Tensor& rows) const {
        return qtc_mode == QtcMode::token_sum ? token_supervised_classify(rows)
                                              : sentence_pooled_classify(rows);
    }

    /// Shared-encoder max-out relation classification.
    nn::Tensor relation_classify(const nn::Tensor& premise_rows,
                                 const nn::Tensor& hypothesis_rows) const {
        if (task != SkillTask::te && task != SkillTask::ppdb) {
            throw ContractError("relation_classify: not a relation classifier");
        }
        nn::Tensor u = nn::maxpool_rows(enc.encode(premise_rows));
        nn::Tensor v = nn::maxpool_rows(enc.encode(hypothesis_rows));
        nn::Tensor feats = nn::concat({u, v, nn::abs_op(nn::sub(u, v)), nn::mul(u, v)});
        nn::Tensor hidden = nn::tanh_op(nn::flatten(
            nn::affine(nn::stack_rows({feats}), params.get("head.w1"), params.get("head.b1"))));
        nn::Tensor logits = nn::flatten(
            nn::affine(nn::stack_rows({hidden}), params.get("head.w2"), params.get("head.b2")));
        return nn::softmax(logits);
    }
};

// ---------------------------------------------------------------------------
// Checkpoint export
// ---------------------------------------------------------------------------

/// Encoder weights plus the label projection where the RC model consumes
/// soft label vectors (ner, qtc).
inline EncoderCheckpoint export_checkpoint(const SkillModel& model, std::uint64_t vocab_hash) {
    EncoderCheckpoint ckpt;
    ckpt.task_id = to_string(model.task);
    ckpt.d_in = static_cast<std::uint32_t>(model.input_dim());
    ckpt.h_out = static_cast<std::uint32_t>(model.encoder_out());
    ckpt.vocab_hash = vocab_hash;
    append_store_tensors(ckpt, model.params, "enc.");
    if (model.task == SkillTask::ner || model.task == SkillTask::qtc) {
        ckpt.n_labels = static_cast<std::uint32_t>(model.labels.size());
        append_store_tensors(ckpt, model.params, "label_proj.");
    }
    if (model.task == SkillTask::qtc) {
        ckpt.metadata = std::string("mode=") + to_string(model.qtc_mode);
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Label-set construction
// ---------------------------------------------------------------------------

/// O first, then B-X/I-X per entity type in sorted order; the count is
/// always odd (2 · types + 1).
inline LabelMap bio_label_map(const std::vector<LabeledSequence>& sequences) {
    std::set<std::string> types;
    for (const auto& seq : sequences) {
        for (const auto& tag : seq.tags) {
            if (tag.size() > 2) types.insert(tag.substr(2));
        }
    }
    LabelMap labels;
    labels.add("O");
    for (const auto& t : types) {
        labels.add("B-" + t);
        labels.add("I-" + t);
    }
    return labels;
}

inline LabelMap observed_label_map(const std::vector<LabeledSentence>& sentences) {
    LabelMap labels;
    for (const auto& s : sentences) labels.add(s.label);
    return labels;
}

inline LabelMap fixed_label_map(const std::vector<std::string>& names) {
    LabelMap labels;
    for (const auto& n : names) labels.add(n);
    return labels;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct SkillDataset {
    std::vector<LabeledSequence> sequences;  // ner
    std::vector<LabeledSentence> sentences;  // qtc
    std::vector<LabeledPair> pairs;          // te / ppdb

    std::size_t size(SkillTask task) const {
        switch (task) {
            case SkillTask::ner: return sequences.size();
            case SkillTask::qtc: return sentences.size();
            default: return pairs.size();
        }
    }
};

struct SkillTrainOptions {
    std::size_t epochs = 3;
    std::size_t max_steps = 0;  // 0: run all epochs
    nn::AdamConfig adam = {};
    std::uint64_t seed = 1;
};

struct SkillTrainLog {
    std::vector<double> step_loss;
    std::vector<double> epoch_mean_loss;
    std::size_t steps = 0;
};

namespace detail {

inline nn::Tensor skill_example_loss(const SkillModel& model, const SkillDataset& data,
                                     std::size_t index, const EmbeddingMatrix& emb,
                                     const Vocabulary& vocab) {
    switch (model.task) {
        case SkillTask::ner: {
            const auto& seq = data.sequences[index];
            nn::Tensor probs = model.seq_label_forward(build_skill_input(seq.tokens, emb, vocab));
            std::vector<nn::Tensor> losses;
            losses.reserve(seq.tags.size());
            for (std::size_t t = 0; t < seq.tags.size(); ++t) {
                losses.push_back(nn::cross_entropy(nn::row(probs, t), model.labels.get(seq.tags[t])));
            }
            nn::Tensor total = losses[0];
            for (std::size_t t = 1; t < losses.size(); ++t) total = nn::add(total, losses[t]);
            return nn::scale_const(total, 1.0 / static_cast<double>(losses.size()));
        }
        case SkillTask::qtc: {
            const auto& sent = data.sentences[index];
            nn::Tensor probs = model.classify_sentence(build_skill_input(sent.tokens, emb, vocab));
            return nn::cross_entropy(probs, model.labels.get(sent.label));
        }
        default: {
            const auto& pair = data.pairs[index];
            nn::Tensor probs = model.relation_classify(build_skill_input(pair.premise, emb, vocab),
                                                       build_skill_input(pair.hypothesis, emb, vocab));
            return nn::cross_entropy(probs, model.labels.get(pair.label));
        }
    }
}

}  // namespace detail

/// Per-epoch shuffled single-example Adam updates.
inline SkillTrainLog train_skill(SkillModel& model, const SkillDataset& data,
                                 const EmbeddingMatrix& emb, const Vocabulary& vocab,
                                 const SkillTrainOptions& opts) {
    std::size_t n = data.size(model.task);
    if (n == 0) throw DataError("train_skill: empty dataset");

    // Validate labels up front so a bad example fails before training.
    switch (model.task) {
        case SkillTask::ner:
            for (const auto& s : data.sequences) {
                if (s.tokens.size() != s.tags.size()) {
                    throw DataError("train_skill: token/tag length mismatch");
                }
                for (const auto& t : s.tags) model.labels.get(t);
            }
            break;
        case SkillTask::qtc:
            for (const auto& s : data.sentences) model.labels.get(s.label);
            break;
        default:
            for (const auto& p : data.pairs) model.labels.get(p.label);
            break;
    }

    SkillTrainLog log;
    nn::Adam opt(opts.adam);
    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    bool done = false;
    for (std::size_t epoch = 0; epoch < opts.epochs && !done; ++epoch) {
        detail::deterministic_shuffle(order, rng);
        double epoch_sum = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t i : order) {
            nn::Tensor loss = detail::skill_example_loss(model, data, i, emb, vocab);
            nn::backward(loss);
            opt.step(model.params);
            log.step_loss.push_back(loss.item());
            epoch_sum += loss.item();
            ++epoch_count;
            ++log.steps;
            if (opts.max_steps && log.steps >= opts.max_steps) {
                done = true;
                break;
            }
        }
        if (epoch_count) log.epoch_mean_loss.push_back(epoch_sum / epoch_count);
    }
    return log;
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

inline double token_accuracy(const SkillModel& model, const std::vector<LabeledSequence>& seqs,
                             const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    std::size_t correct = 0, total = 0;
    for (const auto& seq : seqs) {
        nn::Tensor probs = model.seq_label_forward(build_skill_input(seq.tokens, emb, vocab));
        for (std::size_t t = 0; t < seq.tags.size(); ++t) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < probs.cols(); ++c) {
                if (probs(t, c) > probs(t, best)) best = c;
            }
            correct += (model.labels.name(best) == seq.tags[t]) ? 1 : 0;
            ++total;
        }
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

inline double sentence_accuracy(const SkillModel& model, const std::vector<LabeledSentence>& sents,
                                const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    std::size_t correct = 0;
    for (const auto& s : sents) {
        nn::Tensor probs = model.classify_sentence(build_skill_input(s.tokens, emb, vocab));
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.numel(); ++c) {
            if (probs(c) > probs(best)) best = c;
        }
        correct += (model.labels.name(best) == s.label) ? 1 : 0;
    }
    return sents.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(sents.size());
}

inline double pair_accuracy(const SkillModel& model, const std::vector<LabeledPair>& pairs,
                            const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        nn::Tensor probs = model.relation_classify(build_skill_input(p.premise, emb, vocab),
                                                   build_skill_input(p.hypothesis, emb, vocab));
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.numel(); ++c) {
            if (probs(c) > probs(best)) best = c;
        }
        correct += (model.labels.name(best) == p.label) ? 1 : 0;
    }
    return pairs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace skillrc
