#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "skillrc/ops.hpp"
#include "skillrc/params.hpp"

namespace skillrc::nn {

/// Weights for one LSTM direction. Gate order in the 4H dimension is
/// fixed as [input, forget, cell, output]; checkpoints depend on it.
struct LstmWeights {
    Tensor w_ih;  // [4H × D]
    Tensor w_hh;  // [4H × H]
    Tensor b;     // [4H]

    std::size_t hidden() const { return w_hh.cols(); }
    std::size_t input_dim() const { return w_ih.cols(); }
};

/// Glorot matrices, zero bias with the forget-gate block set to 1.
inline LstmWeights register_lstm(ParamStore& ps, const std::string& prefix, std::size_t input_dim,
                                 std::size_t hidden, std::mt19937_64& rng, bool trainable = true) {
    Tensor b = Tensor::zeros({4 * hidden});
    for (std::size_t i = hidden; i < 2 * hidden; ++i) (*b.data)[i] = 1.0;
    LstmWeights w;
    w.w_ih = ps.add(prefix + ".w_ih", glorot_matrix(4 * hidden, input_dim, rng), trainable);
    w.w_hh = ps.add(prefix + ".w_hh", glorot_matrix(4 * hidden, hidden, rng), trainable);
    w.b = ps.add(prefix + ".b", std::move(b), trainable);
    return w;
}

/// Weights already present in a store (e.g. loaded from a checkpoint).
inline LstmWeights lstm_from_store(const ParamStore& ps, const std::string& prefix) {
    LstmWeights w;
    w.w_ih = ps.get(prefix + ".w_ih");
    w.w_hh = ps.get(prefix + ".w_hh");
    w.b = ps.get(prefix + ".b");
    return w;
}

/// One cell step; returns (h, c).
inline std::pair<Tensor, Tensor> lstm_step(const Tensor& x_t, const Tensor& h_prev,
                                           const Tensor& c_prev, const LstmWeights& w) {
    std::size_t h = w.hidden();
    Tensor pre = lstm_preact(x_t, h_prev, w.w_ih, w.w_hh, w.b);
    Tensor gate_i = sigmoid(slice(pre, 0, h));
    Tensor gate_f = sigmoid(slice(pre, h, h));
    Tensor gate_g = tanh_op(slice(pre, 2 * h, h));
    Tensor gate_o = sigmoid(slice(pre, 3 * h, h));
    Tensor c = add(mul(gate_f, c_prev), mul(gate_i, gate_g));
    Tensor h_out = mul(gate_o, tanh_op(c));
    return {h_out, c};
}

/// Runs one direction over the rows of x (given in time order for that
/// direction) and returns the hidden state sequence in the same order.
inline std::vector<Tensor> lstm_run(const std::vector<Tensor>& xs, const LstmWeights& w) {
    Tensor h = Tensor::zeros({w.hidden()});
    Tensor c = Tensor::zeros({w.hidden()});
    std::vector<Tensor> hs;
    hs.reserve(xs.size());
    for (const auto& x : xs) {
        auto [h_next, c_next] = lstm_step(x, h, c, w);
        h = h_next;
        c = c_next;
        hs.push_back(h);
    }
    return hs;
}

/// out[t] = concat(forward h_t, backward h_t); zero initial states both ways.
inline Tensor bilstm_encode(const Tensor& x, const LstmWeights& fwd, const LstmWeights& bwd) {
    detail::require_rank(x, 2, "bilstm_encode");
    std::size_t t_len = x.rows();
    if (t_len == 0) throw ContractError("bilstm_encode: empty sequence");
    if (x.cols() != fwd.input_dim() || x.cols() != bwd.input_dim()) {
        throw DimensionError("bilstm_encode: input width does not match encoder");
    }
    std::vector<Tensor> xs;
    xs.reserve(t_len);
    for (std::size_t t = 0; t < t_len; ++t) xs.push_back(row(x, t));

    std::vector<Tensor> hf = lstm_run(xs, fwd);
    std::vector<Tensor> xs_rev(xs.rbegin(), xs.rend());
    std::vector<Tensor> hb_rev = lstm_run(xs_rev, bwd);

    std::vector<Tensor> rows_out;
    rows_out.reserve(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        rows_out.push_back(concat({hf[t], hb_rev[t_len - 1 - t]}));
    }
    return stack_rows(rows_out);
}

}  // namespace skillrc::nn
