#include <gtest/gtest.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "skillrc/grad_check.hpp"
#include "skillrc/skills.hpp"

using namespace skillrc;
using nn::Tensor;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = std::filesystem::temp_directory_path() /
                ("skillrc_skills_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter_++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    static inline int counter_ = 0;
    std::filesystem::path path_;
};

// In-memory embeddings over a tiny vocabulary, seeded and deterministic.
struct TinyWorld {
    Vocabulary vocab;
    EmbeddingMatrix emb;

    explicit TinyWorld(std::uint64_t seed = 5, std::size_t dim = 6) {
        for (const char* t : {"anna", "boris", "paris", "rome", "visited", "lives",
                              "in", "who", "where", "?", "."}) {
            vocab.add(t);
        }
        std::mt19937_64 rng(seed);
        std::vector<double> data(vocab.size() * dim);
        for (auto& v : data) v = nn::uniform_in(rng, -0.5, 0.5);
        emb.table = Tensor({vocab.size(), dim}, std::move(data));
    }

    Tensor rows(const std::vector<std::string>& tokens) const {
        return build_skill_input(tokens, emb, vocab);
    }

    std::size_t input_dim() const { return emb.dim() + 2; }
};

void zero_all_params(nn::ParamStore& ps) {
    for (auto& [name, p] : ps.entries()) {
        std::fill(p.value.data->begin(), p.value.data->end(), 0.0);
    }
}

void expect_distribution(const Tensor& probs) {
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        EXPECT_GE((*probs.data)[i], 0.0);
        EXPECT_LE((*probs.data)[i], 1.0);
        sum += (*probs.data)[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

LabelMap bio5() {
    return fixed_label_map({"O", "B-PER", "I-PER", "B-LOC", "I-LOC"});
}

}  // namespace

// ---------------------------------------------------------------------------
// seq_label_forward
// ---------------------------------------------------------------------------

TEST(SeqLabel, ZeroWeightsGiveUniformRows) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 8, bio5(), 1);
    zero_all_params(m.params);
    Tensor probs = m.seq_label_forward(w.rows({"anna", "visited", "paris"}));
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        for (std::size_t c = 0; c < probs.cols(); ++c) EXPECT_NEAR(probs(t, c), 0.2, 1e-12);
    }
}

TEST(SeqLabel, ShapeAndNormalization) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 8, bio5(), 2);
    Tensor probs = m.seq_label_forward(w.rows({"anna", "visited", "paris", "."}));
    EXPECT_EQ(probs.rows(), 4u);
    EXPECT_EQ(probs.cols(), 5u);
    for (std::size_t t = 0; t < 4; ++t) expect_distribution(nn::row(probs, t));
}

TEST(SeqLabel, MatchesManualComposition) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 6, bio5(), 3);
    Tensor x = w.rows({"anna"});
    Tensor expected = nn::softmax_rows(nn::affine(
        nn::bilstm_encode(x, m.enc.fwd, m.enc.bwd), m.params.get("label_proj.w"),
        m.params.get("label_proj.b")));
    Tensor actual = m.seq_label_forward(x);
    for (std::size_t i = 0; i < expected.numel(); ++i) {
        EXPECT_DOUBLE_EQ((*actual.data)[i], (*expected.data)[i]);
    }
}

TEST(SeqLabel, WidthMismatchThrows) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim() + 3, 8, bio5(), 1);
    EXPECT_THROW(m.seq_label_forward(w.rows({"anna"})), DimensionError);
}

TEST(SeqLabel, PredictionsAreBioValidAfterRepair) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 8, bio5(), 4);
    Tensor probs = m.seq_label_forward(w.rows({"anna", "visited", "paris", "in", "rome"}));
    std::vector<std::string> tags;
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c) {
            if (probs(t, c) > probs(t, best)) best = c;
        }
        tags.push_back(m.labels.name(best));
    }
    bio_repair(tags);
    EXPECT_TRUE(bio_valid(tags));
}

// ---------------------------------------------------------------------------
// token_supervised_classify / sentence_pooled_classify
// ---------------------------------------------------------------------------

TEST(TokenClassify, SingleTokenEqualsSingleProjection) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                fixed_label_map({"a", "b", "c"}), 7);
    Tensor x = w.rows({"who"});
    Tensor expected = nn::softmax(nn::flatten(nn::affine(
        nn::bilstm_encode(x, m.enc.fwd, m.enc.bwd), m.params.get("label_proj.w"),
        m.params.get("label_proj.b"))));
    Tensor actual = m.token_supervised_classify(x);
    for (std::size_t i = 0; i < expected.numel(); ++i) {
        EXPECT_DOUBLE_EQ((*actual.data)[i], (*expected.data)[i]);
    }
}

TEST(TokenClassify, IdenticalLogitsScaleBySequenceLength) {
    // Zero encoder weights make every token's projection equal the bias,
    // so a 3-token sentence must produce softmax(3b).
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                fixed_label_map({"a", "b", "c"}), 8);
    zero_all_params(m.params);
    Tensor& bias = m.params.get("label_proj.b");
    (*bias.data) = {0.3, -0.1, 0.5};
    Tensor probs = m.token_supervised_classify(w.rows({"who", "visited", "paris"}));
    Tensor expected = nn::softmax(Tensor::vector({0.9, -0.3, 1.5}));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(probs(i), expected(i), 1e-12);
}

TEST(TokenClassify, SymmetricLogitsGiveUniform) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6, fixed_label_map({"a", "b"}), 9);
    zero_all_params(m.params);
    Tensor probs = m.token_supervised_classify(w.rows({"who", "?"}));
    EXPECT_NEAR(probs(0), 0.5, 1e-12);
    EXPECT_NEAR(probs(1), 0.5, 1e-12);
}

TEST(TokenClassify, AggregationIsPermutationInvariant) {
    // The summed-logit aggregation ignores row order; likewise max-pooling.
    std::mt19937_64 rng(31);
    for (int it = 0; it < 20; ++it) {
        std::size_t t = 2 + rng() % 5, l = 2 + rng() % 4;
        std::vector<double> vals(t * l);
        for (auto& v : vals) v = nn::uniform_in(rng, -2, 2);
        Tensor logits({t, l}, vals);
        std::vector<double> perm_vals(vals);
        // rotate rows by one
        std::rotate(perm_vals.begin(), perm_vals.begin() + l, perm_vals.end());
        Tensor rotated({t, l}, perm_vals);

        Tensor a = nn::softmax(nn::sum_rows(logits));
        Tensor b = nn::softmax(nn::sum_rows(rotated));
        for (std::size_t i = 0; i < l; ++i) EXPECT_NEAR(a(i), b(i), 1e-12);

        Tensor pa = nn::maxpool_rows(logits);
        Tensor pb = nn::maxpool_rows(rotated);
        for (std::size_t i = 0; i < l; ++i) EXPECT_DOUBLE_EQ(pa(i), pb(i));
    }
}

TEST(SentenceClassify, SingleTokenMatchesTokenMode) {
    TinyWorld w;
    auto token_model = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                          fixed_label_map({"a", "b", "c"}), 11,
                                          QtcMode::token_sum);
    auto pooled_model = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                           fixed_label_map({"a", "b", "c"}), 11,
                                           QtcMode::sentence_maxpool);
    // Same seed and creation order: identical weights.
    Tensor x = w.rows({"where"});
    Tensor a = token_model.token_supervised_classify(x);
    Tensor b = pooled_model.sentence_pooled_classify(x);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_DOUBLE_EQ(a(i), b(i));
}

TEST(SentenceClassify, PooledVectorIsCoordinatewiseMax) {
    std::mt19937_64 rng(33);
    std::vector<double> vals(3 * 4);
    for (auto& v : vals) v = nn::uniform_in(rng, -2, 2);
    Tensor ctx({3, 4}, vals);
    Tensor pooled = nn::maxpool_rows(ctx);
    for (std::size_t c = 0; c < 4; ++c) {
        double expect = std::max({ctx(0, c), ctx(1, c), ctx(2, c)});
        EXPECT_DOUBLE_EQ(pooled(c), expect);
    }
}

TEST(SentenceClassify, ZeroWeightsGiveUniform) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                fixed_label_map({"a", "b", "c", "d"}), 12,
                                QtcMode::sentence_maxpool);
    zero_all_params(m.params);
    Tensor probs = m.sentence_pooled_classify(w.rows({"where", "lives", "anna", "?"}));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(probs(i), 0.25, 1e-12);
}

TEST(SentenceClassify, EmptySentenceThrows) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6, fixed_label_map({"a", "b"}), 13);
    EXPECT_THROW(m.token_supervised_classify(Tensor::zeros({0, w.input_dim()})), ContractError);
}

TEST(SentenceClassify, WrongModeThrows) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6, fixed_label_map({"a", "b"}), 13,
                                QtcMode::token_sum);
    EXPECT_THROW(m.sentence_pooled_classify(w.rows({"who"})), ContractError);
}

// ---------------------------------------------------------------------------
// relation_classify
// ---------------------------------------------------------------------------

TEST(RelationClassify, IdenticalArgumentsZeroAbsBlock) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::te, w.input_dim(), 6, fixed_label_map(te_labels()), 21);
    Tensor p = w.rows({"anna", "visited", "paris"});
    Tensor u = nn::maxpool_rows(m.enc.encode(p));
    Tensor v = nn::maxpool_rows(m.enc.encode(p));
    Tensor feats = nn::concat({u, v, nn::abs_op(nn::sub(u, v)), nn::mul(u, v)});
    EXPECT_EQ(feats.numel(), 4 * m.encoder_out());
    for (std::size_t i = 2 * m.encoder_out(); i < 3 * m.encoder_out(); ++i) {
        EXPECT_DOUBLE_EQ((*feats.data)[i], 0.0);
    }
    expect_distribution(m.relation_classify(p, p));
}

TEST(RelationClassify, SingleTokenArgumentsPoolToEncodedVectors) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::te, w.input_dim(), 6, fixed_label_map(te_labels()), 22);
    Tensor p = w.rows({"anna"});
    Tensor enc = m.enc.encode(p);
    Tensor u = nn::maxpool_rows(enc);
    for (std::size_t i = 0; i < u.numel(); ++i) EXPECT_DOUBLE_EQ(u(i), enc(0, i));
}

TEST(RelationClassify, MatchesManualHeadComputation) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ppdb, w.input_dim(), 4,
                                fixed_label_map(ppdb_labels()), 23);
    Tensor p = w.rows({"anna", "visited"});
    Tensor h = w.rows({"boris", "lives"});
    Tensor u = nn::maxpool_rows(m.enc.encode(p));
    Tensor v = nn::maxpool_rows(m.enc.encode(h));
    Tensor feats = nn::concat({u, v, nn::abs_op(nn::sub(u, v)), nn::mul(u, v)});
    Tensor hidden = nn::tanh_op(nn::flatten(nn::affine(
        nn::stack_rows({feats}), m.params.get("head.w1"), m.params.get("head.b1"))));
    Tensor expected = nn::softmax(nn::flatten(nn::affine(
        nn::stack_rows({hidden}), m.params.get("head.w2"), m.params.get("head.b2"))));
    Tensor actual = m.relation_classify(p, h);
    for (std::size_t i = 0; i < expected.numel(); ++i) {
        EXPECT_DOUBLE_EQ((*actual.data)[i], (*expected.data)[i]);
    }
}

TEST(RelationClassify, EmptyArgumentThrows) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::te, w.input_dim(), 6, fixed_label_map(te_labels()), 24);
    EXPECT_THROW(m.relation_classify(Tensor::zeros({0, w.input_dim()}), w.rows({"anna"})),
                 ContractError);
}

// ---------------------------------------------------------------------------
// gradient checks per model family
// ---------------------------------------------------------------------------

namespace {

void check_model_gradients(SkillModel& m, const std::function<Tensor()>& loss_fn,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto coords = sample_param_coords(m.params, 80, rng);
    EXPECT_LT(nn::gradient_check(m.params, loss_fn, coords, 1e-4), 1e-4);
}

}  // namespace

TEST(SkillGradients, SequenceLabeler) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 6, bio5(), 41);
    Tensor x = w.rows({"anna", "visited", "paris"});
    check_model_gradients(m, [&]() {
        Tensor probs = m.seq_label_forward(x);
        Tensor loss = nn::cross_entropy(nn::row(probs, 0), 1);
        loss = nn::add(loss, nn::cross_entropy(nn::row(probs, 2), 3));
        return loss;
    }, 42);
}

TEST(SkillGradients, TokenSumClassifier) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                fixed_label_map({"a", "b", "c"}), 43);
    Tensor x = w.rows({"who", "visited", "paris", "?"});
    check_model_gradients(m, [&]() { return nn::cross_entropy(m.token_supervised_classify(x), 1); },
                          44);
}

TEST(SkillGradients, SentencePooledClassifier) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                fixed_label_map({"a", "b", "c"}), 45,
                                QtcMode::sentence_maxpool);
    Tensor x = w.rows({"where", "lives", "boris", "?"});
    check_model_gradients(m, [&]() { return nn::cross_entropy(m.sentence_pooled_classify(x), 2); },
                          46);
}

TEST(SkillGradients, RelationClassifier) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::te, w.input_dim(), 6, fixed_label_map(te_labels()), 47);
    Tensor p = w.rows({"anna", "visited", "paris", "."});
    Tensor h = w.rows({"anna", "visited", "rome", "."});
    check_model_gradients(m, [&]() { return nn::cross_entropy(m.relation_classify(p, h), 0); }, 48);
}

// ---------------------------------------------------------------------------
// train_skill
// ---------------------------------------------------------------------------

namespace {

// Token identity fully determines the tag: learnable to ~100% quickly.
SkillDataset tiny_ner_dataset() {
    SkillDataset data;
    std::vector<std::pair<std::string, std::string>> lex = {
        {"anna", "B-PER"}, {"boris", "B-PER"}, {"paris", "B-LOC"}, {"rome", "B-LOC"},
        {"visited", "O"},  {"lives", "O"},     {"in", "O"},        {".", "O"},
    };
    std::mt19937_64 rng(17);
    for (int i = 0; i < 60; ++i) {
        LabeledSequence seq;
        std::size_t len = 3 + rng() % 4;
        for (std::size_t t = 0; t < len; ++t) {
            const auto& [tok, tag] = lex[rng() % lex.size()];
            seq.tokens.push_back(tok);
            seq.tags.push_back(tag);
        }
        data.sequences.push_back(std::move(seq));
    }
    return data;
}

}  // namespace

TEST(TrainSkill, LearnsTinyNerTask) {
    TinyWorld w;
    auto data = tiny_ner_dataset();
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 8, bio_label_map(data.sequences), 51);
    SkillTrainOptions opts;
    opts.epochs = 3;
    opts.seed = 52;
    opts.adam.lr = 1e-2;  // desk-scale preset; tiny models train fastest here
    auto log = train_skill(m, data, w.emb, w.vocab, opts);
    EXPECT_GE(log.epoch_mean_loss.size(), 2u);
    EXPECT_LT(log.epoch_mean_loss.back(), log.epoch_mean_loss.front());
    EXPECT_GE(token_accuracy(m, data.sequences, w.emb, w.vocab), 0.95);
}

TEST(TrainSkill, DeterministicInSeed) {
    TinyWorld w;
    auto data = tiny_ner_dataset();
    auto run = [&]() {
        auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 8,
                                    bio_label_map(data.sequences), 51);
        SkillTrainOptions opts;
        opts.epochs = 1;
        opts.seed = 53;
        train_skill(m, data, w.emb, w.vocab, opts);
        std::vector<double> flat;
        for (const auto& [name, p] : m.params.entries()) {
            flat.insert(flat.end(), p.value.data->begin(), p.value.data->end());
        }
        return flat;
    };
    auto a = run();
    auto b = run();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
}

TEST(TrainSkill, EmptyDatasetThrows) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 8, bio5(), 1);
    SkillDataset empty;
    EXPECT_THROW(train_skill(m, empty, w.emb, w.vocab, {}), DataError);
}

TEST(TrainSkill, LabelOutsideSetThrows) {
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6, fixed_label_map({"a", "b"}), 1);
    SkillDataset data;
    data.sentences.push_back({{"who", "?"}, "zzz"});
    EXPECT_THROW(train_skill(m, data, w.emb, w.vocab, {}), DataError);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
    TempDir dir;
    TinyWorld w;
    for (SkillTask task : all_skill_tasks()) {
        LabelMap labels = (task == SkillTask::ner)   ? bio5()
                          : (task == SkillTask::qtc) ? fixed_label_map({"a", "b", "c"})
                          : (task == SkillTask::te)  ? fixed_label_map(te_labels())
                                                     : fixed_label_map(ppdb_labels());
        auto m = SkillModel::create(task, w.input_dim(), 6, labels, 61);
        auto ckpt = export_checkpoint(m, 0xabcd);
        std::string path = dir.file(std::string(to_string(task)) + ".sklc");
        save_checkpoint(ckpt, path);
        auto loaded = load_checkpoint(path);

        EXPECT_EQ(loaded.task_id, to_string(task));
        EXPECT_EQ(loaded.d_in, ckpt.d_in);
        EXPECT_EQ(loaded.h_out, ckpt.h_out);
        EXPECT_EQ(loaded.n_labels, ckpt.n_labels);
        EXPECT_EQ(loaded.vocab_hash, 0xabcdu);
        ASSERT_EQ(loaded.tensors.size(), ckpt.tensors.size());
        for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
            EXPECT_EQ(loaded.tensors[i].first, ckpt.tensors[i].first);
            const auto& a = *ckpt.tensors[i].second.data;
            const auto& b = *loaded.tensors[i].second.data;
            ASSERT_EQ(a.size(), b.size());
            EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
        }
    }
}

TEST(Checkpoint, QtcModeInMetadata) {
    TinyWorld w;
    auto token_m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                      fixed_label_map({"a", "b"}), 62, QtcMode::token_sum);
    auto sent_m = SkillModel::create(SkillTask::qtc, w.input_dim(), 6,
                                     fixed_label_map({"a", "b"}), 62, QtcMode::sentence_maxpool);
    EXPECT_EQ(export_checkpoint(token_m, 0).metadata, "mode=token");
    EXPECT_EQ(export_checkpoint(sent_m, 0).metadata, "mode=sentence");
}

TEST(Checkpoint, CorruptMagicRejected) {
    TempDir dir;
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::te, w.input_dim(), 6, fixed_label_map(te_labels()), 63);
    std::string path = dir.file("te.sklc");
    save_checkpoint(export_checkpoint(m, 1), path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, TruncatedFileRejected) {
    TempDir dir;
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::te, w.input_dim(), 6, fixed_label_map(te_labels()), 64);
    std::string path = dir.file("te.sklc");
    save_checkpoint(export_checkpoint(m, 1), path);
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, WrongTaskSlotRejected) {
    TempDir dir;
    TinyWorld w;
    auto m = SkillModel::create(SkillTask::ner, w.input_dim(), 6, bio5(), 65);
    std::string path = dir.file("ner.sklc");
    save_checkpoint(export_checkpoint(m, 1), path);
    auto ckpt = load_checkpoint(path);
    EXPECT_THROW(expect_checkpoint_task(ckpt, "te"), CheckpointError);
    EXPECT_NO_THROW(expect_checkpoint_task(ckpt, "ner"));
}

TEST(BioLabelMap, OddSizeWithOFirst) {
    auto data = tiny_ner_dataset();
    LabelMap labels = bio_label_map(data.sequences);
    EXPECT_EQ(labels.name(0), "O");
    EXPECT_EQ(labels.size() % 2, 1u);
    EXPECT_GE(labels.size(), 3u);
}
