#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skillrc/checkpoint.hpp"
#include "skillrc/skills.hpp"

namespace skillrc {

/// Weight source for one attached skill encoder.
struct SkillSlot {
    SkillTask task = SkillTask::ner;
    std::string checkpoint_path;  // empty → architecture comes from config defaults
    bool random_weights = false;  // fresh init (shapes still mirror the checkpoint if given)
};

struct RCConfig {
    std::vector<SkillSlot> skills;
    bool fine_tune_skills = false;
    std::size_t hidden = 256;       // RC encoder output width; span BiLSTMs mirror it
    std::size_t adapter_dim = 100;  // every skill is adapted to this width
    std::size_t max_span_len = 15;
    std::size_t skill_hidden = 0;   // encoder width for checkpoint-less random skills (0 → hidden)
    std::size_t random_ner_labels = 7;   // BIO set size for a checkpoint-less random NER slot
    std::size_t random_qtc_labels = 6;   // class count for a checkpoint-less random QTC slot
    std::uint64_t seed = 1;

    std::size_t ensemble_width() const { return hidden + adapter_dim * skills.size(); }
};

/// Start/end distributions plus the decoded span.
struct SpanPrediction {
    std::vector<double> start;
    std::vector<double> end;
    std::size_t begin = 0;
    std::size_t end_token = 0;
    double score = 0.0;
};

struct DecodedSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    double score = 0.0;
};

// ---------------------------------------------------------------------------
// Length-constrained decoding
// ---------------------------------------------------------------------------

/// argmax of start[i]·end[j] over i ≤ j ≤ i + max_span_len − 1, running-max
/// over start in O(T). Ties go to the smallest i, then the smallest j.
inline DecodedSpan dp_decode(const std::vector<double>& start, const std::vector<double>& end,
                             std::size_t max_span_len) {
    if (max_span_len < 1) throw ContractError("dp_decode: max_span_len must be >= 1");
    if (start.empty() || start.size() != end.size()) {
        throw ContractError("dp_decode: start/end must be nonempty and equal length");
    }
    std::size_t t_len = start.size();
    std::deque<std::size_t> window;  // indices, start values decreasing; earlier index wins ties
    DecodedSpan best;
    bool have_best = false;
    for (std::size_t j = 0; j < t_len; ++j) {
        while (!window.empty() && start[window.back()] < start[j]) window.pop_back();
        window.push_back(j);
        while (window.front() + max_span_len <= j) window.pop_front();

        std::size_t lo = (j + 1 >= max_span_len) ? j + 1 - max_span_len : 0;
        // end[j] == 0 makes every candidate product 0: the smallest i in
        // the window wins, not the one with maximal start.
        std::size_t i = (end[j] == 0.0) ? lo : window.front();
        double score = start[i] * end[j];
        bool better = !have_best || score > best.score ||
                      (score == best.score &&
                       (i < best.begin || (i == best.begin && j < best.end)));
        if (better) {
            best = {i, j, score};
            have_best = true;
        }
    }
    return best;
}

/// Exhaustive reference decoder with the same tie rule; test oracle.
inline DecodedSpan brute_force_decode(const std::vector<double>& start,
                                      const std::vector<double>& end,
                                      std::size_t max_span_len) {
    if (max_span_len < 1) throw ContractError("brute_force_decode: max_span_len must be >= 1");
    DecodedSpan best;
    bool have_best = false;
    for (std::size_t i = 0; i < start.size(); ++i) {
        for (std::size_t j = i; j < std::min(start.size(), i + max_span_len); ++j) {
            double score = start[i] * end[j];
            if (!have_best || score > best.score) {
                best = {i, j, score};
                have_best = true;
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// RC model
// ---------------------------------------------------------------------------

namespace detail {

struct ResolvedSkill {
    SkillTask task = SkillTask::ner;
    std::size_t h_out = 0;
    std::size_t n_labels = 0;  // 0: no label projection concatenated
    QtcMode qtc_mode = QtcMode::token_sum;
    std::string prefix;  // "skill.<id>"

    std::size_t adapter_input() const { return h_out + n_labels; }
};

inline int skill_order(SkillTask t) {
    switch (t) {
        case SkillTask::ner: return 0;
        case SkillTask::qtc: return 1;
        case SkillTask::te: return 2;
        case SkillTask::ppdb: return 3;
    }
    return 4;
}

}  // namespace detail

/// The reading-comprehension ensemble: a fresh Bi-LSTM context encoder
/// plus the attached skill encoders behind trainable adapters, a
/// question attention summary, document-question interaction, and two
/// span-pointer heads decoded under a length cap.
class RcModel {
public:
    RCConfig config;
    nn::ParamStore params;

    static RcModel create(std::size_t input_dim, RCConfig cfg,
                          const std::map<std::string, EncoderCheckpoint>& checkpoints,
                          std::uint64_t expected_vocab_hash = 0) {
        RcModel m;
        if (cfg.hidden % 2 != 0) throw ConfigError("rc hidden width must be even");
        if (cfg.skill_hidden == 0) cfg.skill_hidden = cfg.hidden;

        // Fixed ensemble order regardless of how the config listed them.
        std::stable_sort(cfg.skills.begin(), cfg.skills.end(),
                         [](const SkillSlot& a, const SkillSlot& b) {
                             return detail::skill_order(a.task) < detail::skill_order(b.task);
                         });
        for (std::size_t i = 1; i < cfg.skills.size(); ++i) {
            if (cfg.skills[i].task == cfg.skills[i - 1].task) {
                throw ConfigError("skill attached twice: " +
                                  std::string(to_string(cfg.skills[i].task)));
            }
        }
        m.config = cfg;
        m.input_dim_ = input_dim;

        {
            std::mt19937_64 rng(mix_seed(cfg.seed, "rc_enc"));
            m.rc_enc_ = register_bilstm(m.params, "rc_enc", input_dim, cfg.hidden, rng);
        }

        for (const auto& slot : cfg.skills) {
            detail::ResolvedSkill rs;
            rs.task = slot.task;
            rs.prefix = std::string("skill.") + to_string(slot.task);
            const EncoderCheckpoint* ckpt = nullptr;
            auto it = checkpoints.find(to_string(slot.task));
            if (it != checkpoints.end()) ckpt = &it->second;
            if (!slot.checkpoint_path.empty() && !ckpt) {
                throw ConfigError("missing loaded checkpoint for skill " +
                                  std::string(to_string(slot.task)));
            }

            if (ckpt) {
                expect_checkpoint_task(*ckpt, to_string(slot.task));
                if (ckpt->d_in != input_dim) {
                    throw ConfigError("checkpoint input width " + std::to_string(ckpt->d_in) +
                                      " does not match model input width " +
                                      std::to_string(input_dim));
                }
                if (expected_vocab_hash && ckpt->vocab_hash &&
                    ckpt->vocab_hash != expected_vocab_hash) {
                    throw ConfigError("checkpoint embedding/vocabulary hash mismatch for skill " +
                                      std::string(to_string(slot.task)));
                }
                rs.h_out = ckpt->h_out;
                rs.n_labels = ckpt->n_labels;
                if (!ckpt->metadata.empty() &&
                    ckpt->metadata.rfind("mode=", 0) == 0) {
                    rs.qtc_mode = qtc_mode_from_string(ckpt->metadata.substr(5));
                }
            } else {
                rs.h_out = cfg.skill_hidden;
                if (slot.task == SkillTask::ner) rs.n_labels = cfg.random_ner_labels;
                if (slot.task == SkillTask::qtc) rs.n_labels = cfg.random_qtc_labels;
            }

            bool use_ckpt_weights = ckpt && !slot.random_weights;
            std::mt19937_64 rng(mix_seed(cfg.seed, rs.prefix));
            if (use_ckpt_weights) {
                m.add_skill_params_from(*ckpt, rs);
            } else {
                register_bilstm(m.params, rs.prefix + ".enc", input_dim, rs.h_out, rng,
                                cfg.fine_tune_skills);
                if (rs.n_labels) {
                    m.params.add(rs.prefix + ".label_proj.w",
                                 nn::glorot_matrix(rs.h_out, rs.n_labels, rng),
                                 cfg.fine_tune_skills);
                    m.params.add(rs.prefix + ".label_proj.b", nn::Tensor::zeros({rs.n_labels}),
                                 cfg.fine_tune_skills);
                }
            }

            std::mt19937_64 arng(mix_seed(cfg.seed, "adapt." + std::string(to_string(slot.task))));
            m.params.add("adapt." + std::string(to_string(slot.task)) + ".a",
                         nn::glorot_matrix(rs.adapter_input(), cfg.adapter_dim, arng));
            m.params.add("adapt." + std::string(to_string(slot.task)) + ".b",
                         nn::Tensor::zeros({cfg.adapter_dim}));
            m.skills_.push_back(rs);
        }

        std::size_t width = m.ensemble_width();
        {
            std::mt19937_64 rng(mix_seed(cfg.seed, "q_attn"));
            m.params.add("q_attn.w", nn::glorot_matrix(width, 1, rng));
        }
        {
            std::mt19937_64 rng(mix_seed(cfg.seed, "start_head"));
            register_bilstm(m.params, "start.lstm", 3 * width, cfg.hidden, rng);
            m.params.add("start.w", nn::glorot_matrix(cfg.hidden, 1, rng));
            m.params.add("start.b", nn::Tensor::zeros({1}));
        }
        {
            std::mt19937_64 rng(mix_seed(cfg.seed, "end_head"));
            register_bilstm(m.params, "end.lstm", 4 * width + 1, cfg.hidden, rng);
            m.params.add("end.w", nn::glorot_matrix(cfg.hidden, 1, rng));
            m.params.add("end.b", nn::Tensor::zeros({1}));
        }
        return m;
    }

    std::size_t input_dim() const { return input_dim_; }
    std::size_t ensemble_width() const { return config.ensemble_width(); }
    const std::vector<detail::ResolvedSkill>& attached_skills() const { return skills_; }

    /// Names of every transferred skill tensor (the freeze contract set).
    std::vector<std::string> skill_tensor_names() const {
        std::vector<std::string> names;
        for (const auto& [name, p] : params.entries()) {
            if (name.rfind("skill.", 0) == 0) names.push_back(name);
        }
        return names;
    }

    /// Per-token ensemble representations for document and question.
    std::pair<nn::Tensor, nn::Tensor> ensemble_encode(const nn::Tensor& doc_rows,
                                                      const nn::Tensor& q_rows) const {
        return {encode_side(doc_rows), encode_side(q_rows)};
    }

    /// r_q = Σ e_q[t] · softmax(e_q W_qw)[t]
    nn::Tensor question_summary(const nn::Tensor& e_q) const {
        if (e_q.rows() == 0) throw ContractError("question_summary: empty question");
        nn::Tensor scores = nn::flatten(nn::matmul(e_q, params.get("q_attn.w")));
        return attention_pool(e_q, scores);
    }

    static nn::Tensor attention_pool(const nn::Tensor& e, const nn::Tensor& scores) {
        return nn::weighted_row_sum(e, nn::softmax(scores));
    }

    /// r_di2q = concat(e_di, r_q, e_di ⊙ r_q) per document token.
    static nn::Tensor interact(const nn::Tensor& e_d, const nn::Tensor& r_q) {
        if (e_d.cols() != r_q.numel()) throw DimensionError("interact: width mismatch");
        return nn::concat_cols(
            {e_d, nn::tile_row(r_q, e_d.rows()), nn::mul_row_broadcast(e_d, r_q)});
    }

    struct SpanDistributions {
        nn::Tensor start;  // [T], graph tensor
        nn::Tensor end;    // [T], graph tensor
    };

    /// Start head over the interaction rows, end head over
    /// concat(r_d2q, ans_start_i, ans_start_i · e_d_i).
    SpanDistributions span_heads(const nn::Tensor& r_d2q, const nn::Tensor& e_d) const {
        if (r_d2q.rows() == 0) throw ContractError("span_heads: empty document");
        nn::Tensor s_ctx = nn::bilstm_encode(r_d2q, start_lstm().fwd, start_lstm().bwd);
        nn::Tensor start = nn::softmax(
            nn::flatten(nn::affine(s_ctx, params.get("start.w"), params.get("start.b"))));
        nn::Tensor end_in =
            nn::concat_cols({r_d2q, nn::as_column(start), nn::scale_rows(e_d, start)});
        nn::Tensor e_ctx = nn::bilstm_encode(end_in, end_lstm().fwd, end_lstm().bwd);
        nn::Tensor end = nn::softmax(
            nn::flatten(nn::affine(e_ctx, params.get("end.w"), params.get("end.b"))));
        return {start, end};
    }

    SpanDistributions forward(const nn::Tensor& doc_rows, const nn::Tensor& q_rows) const {
        auto [e_d, e_q] = ensemble_encode(doc_rows, q_rows);
        nn::Tensor r_q = question_summary(e_q);
        nn::Tensor r_d2q = interact(e_d, r_q);
        return span_heads(r_d2q, e_d);
    }

    /// loss = −log ans_start[s] − log ans_end[e]
    nn::Tensor forward_loss(const nn::Tensor& doc_rows, const nn::Tensor& q_rows,
                            std::size_t span_begin, std::size_t span_end) const {
        if (span_begin > span_end || span_end >= doc_rows.rows()) {
            throw DataError("forward_loss: gold span out of range");
        }
        auto dist = forward(doc_rows, q_rows);
        return nn::add(nn::cross_entropy(dist.start, span_begin),
                       nn::cross_entropy(dist.end, span_end));
    }

    SpanPrediction predict(const nn::Tensor& doc_rows, const nn::Tensor& q_rows) const {
        auto dist = forward(doc_rows, q_rows);
        SpanPrediction pred;
        pred.start = *dist.start.data;
        pred.end = *dist.end.data;
        DecodedSpan span = dp_decode(pred.start, pred.end, config.max_span_len);
        pred.begin = span.begin;
        pred.end_token = span.end;
        pred.score = span.score;
        return pred;
    }

    /// Full-model snapshot in the shared container format.
    EncoderCheckpoint export_full_checkpoint(std::uint64_t vocab_hash = 0) const {
        EncoderCheckpoint ckpt;
        ckpt.task_id = "rc";
        ckpt.d_in = static_cast<std::uint32_t>(input_dim_);
        ckpt.h_out = static_cast<std::uint32_t>(config.hidden);
        ckpt.vocab_hash = vocab_hash;
        std::string meta = "skills=";
        for (std::size_t i = 0; i < skills_.size(); ++i) {
            if (i) meta += ",";
            meta += to_string(skills_[i].task);
        }
        ckpt.metadata = meta;
        append_store_tensors(ckpt, params);
        return ckpt;
    }

    void load_full_checkpoint(const EncoderCheckpoint& ckpt) {
        expect_checkpoint_task(ckpt, "rc");
        for (auto& [name, p] : params.entries()) {
            const nn::Tensor& src = ckpt.tensor(name);
            if (src.shape != p.value.shape) {
                throw CheckpointError("full-model checkpoint shape mismatch for '" + name + "'");
            }
            *p.value.data = *src.data;
        }
    }

private:
    std::size_t input_dim_ = 0;
    BiLstmEncoder rc_enc_;
    std::vector<detail::ResolvedSkill> skills_;

    BiLstmEncoder start_lstm() const { return bilstm_from_store(params, "start.lstm"); }
    BiLstmEncoder end_lstm() const { return bilstm_from_store(params, "end.lstm"); }

    void add_skill_params_from(const EncoderCheckpoint& ckpt, const detail::ResolvedSkill& rs) {
        for (const char* suffix :
             {"enc.fwd.w_ih", "enc.fwd.w_hh", "enc.fwd.b", "enc.bwd.w_ih", "enc.bwd.w_hh",
              "enc.bwd.b"}) {
            const nn::Tensor& src = ckpt.tensor(suffix);
            params.add(rs.prefix + "." + suffix, nn::Tensor(src.shape, *src.data),
                       config.fine_tune_skills);
        }
        if (rs.n_labels) {
            for (const char* suffix : {"label_proj.w", "label_proj.b"}) {
                const nn::Tensor& src = ckpt.tensor(suffix);
                params.add(rs.prefix + "." + suffix, nn::Tensor(src.shape, *src.data),
                           config.fine_tune_skills);
            }
        }
    }

    /// concat(c_rc, adapted skill outputs) per token, order [rc, ner, qtc, te, ppdb].
    nn::Tensor encode_side(const nn::Tensor& rows) const {
        std::vector<nn::Tensor> parts;
        parts.push_back(rc_enc_.encode(rows));
        for (const auto& rs : skills_) {
            BiLstmEncoder enc = bilstm_from_store(params, rs.prefix + ".enc");
            nn::Tensor ctx = enc.encode(rows);
            nn::Tensor skill_repr = ctx;
            if (rs.n_labels) {
                // Soft label prediction vectors ride along with the context.
                nn::Tensor label_probs = nn::softmax_rows(
                    nn::affine(ctx, params.get(rs.prefix + ".label_proj.w"),
                               params.get(rs.prefix + ".label_proj.b")));
                skill_repr = nn::concat_cols({ctx, label_probs});
            }
            std::string id = to_string(rs.task);
            parts.push_back(adapt(skill_repr, params.get("adapt." + id + ".a"),
                                  params.get("adapt." + id + ".b")));
        }
        return nn::concat_cols(parts);
    }

public:
    /// c_skill = Enc_skill(w)·A_skill + b; adapters are always trainable.
    static nn::Tensor adapt(const nn::Tensor& skill_out, const nn::Tensor& a, const nn::Tensor& b) {
        return nn::affine(skill_out, a, b);
    }
};

}  // namespace skillrc
