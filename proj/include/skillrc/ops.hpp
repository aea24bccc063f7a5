#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "skillrc/tensor.hpp"

namespace skillrc::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

inline CMatMap mat(const Tensor& t) {
    return CMatMap(t.data->data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}
inline MatMap mat_grad(Tensor& t) {
    return MatMap(t.ensure_grad().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
inline CVecMap vec(const Tensor& t) {
    return CVecMap(t.data->data(), static_cast<Eigen::Index>(t.numel()));
}
inline VecMap vec_grad(Tensor& t) {
    return VecMap(t.ensure_grad().data(), static_cast<Eigen::Index>(t.numel()));
}

inline bool any_requires_grad(const std::vector<Tensor>& parents) {
    for (const auto& p : parents) {
        if (p.requires_grad) return true;
    }
    return false;
}

inline Tensor make_op(std::vector<std::size_t> shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(const Tensor&)> bwd, const char* name) {
    Tensor out(std::move(shape), std::move(values));
    check_finite(out, name);
    if (any_requires_grad(parents)) {
        out.requires_grad = true;
        out.ensure_grad();
        out.node = std::make_shared<Node>();
        out.node->parents = std::move(parents);
        out.node->backward = std::move(bwd);
    }
    return out;
}

inline void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                             ", got " + std::to_string(t.rank()));
    }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise vector ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.data)[i] + (*b.data)[i];
    return detail::make_op(
        a.shape, std::move(out), {a, b},
        [](const Tensor& o) {
            for (int k = 0; k < 2; ++k) {
                Tensor& p = o.node->parents[k];
                if (!p.requires_grad) continue;
                auto& pg = p.ensure_grad();
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += (*o.grad)[i];
            }
        },
        "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.data)[i] - (*b.data)[i];
    return detail::make_op(
        a.shape, std::move(out), {a, b},
        [](const Tensor& o) {
            Tensor& pa = o.node->parents[0];
            Tensor& pb = o.node->parents[1];
            if (pa.requires_grad) {
                auto& g = pa.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*o.grad)[i];
            }
            if (pb.requires_grad) {
                auto& g = pb.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= (*o.grad)[i];
            }
        },
        "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.data)[i] * (*b.data)[i];
    return detail::make_op(
        a.shape, std::move(out), {a, b},
        [](const Tensor& o) {
            Tensor& pa = o.node->parents[0];
            Tensor& pb = o.node->parents[1];
            if (pa.requires_grad) {
                auto& g = pa.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*o.grad)[i] * (*pb.data)[i];
            }
            if (pb.requires_grad) {
                auto& g = pb.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*o.grad)[i] * (*pa.data)[i];
            }
        },
        "mul");
}

inline Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-(*x.data)[i]));
    return detail::make_op(
        x.shape, std::move(out), {x},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                double y = (*o.data)[i];
                g[i] += (*o.grad)[i] * y * (1.0 - y);
            }
        },
        "sigmoid");
}

inline Tensor tanh_op(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh((*x.data)[i]);
    return detail::make_op(
        x.shape, std::move(out), {x},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                double y = (*o.data)[i];
                g[i] += (*o.grad)[i] * (1.0 - y * y);
            }
        },
        "tanh");
}

/// Elementwise absolute value; subgradient 0 at 0.
inline Tensor abs_op(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs((*x.data)[i]);
    return detail::make_op(
        x.shape, std::move(out), {x},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                double v = (*p.data)[i];
                double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                g[i] += (*o.grad)[i] * s;
            }
        },
        "abs");
}

inline Tensor scale_const(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*x.data)[i] * c;
    return detail::make_op(
        x.shape, std::move(out), {x},
        [c](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*o.grad)[i] * c;
        },
        "scale_const");
}

/// y = s * x with a 1-element tensor s.
inline Tensor scale(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw DimensionError("scale: scale factor must be a 1-element tensor");
    double sv = (*s.data)[0];
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*x.data)[i] * sv;
    return detail::make_op(
        x.shape, std::move(out), {x, s},
        [](const Tensor& o) {
            Tensor& px = o.node->parents[0];
            Tensor& ps = o.node->parents[1];
            double sv = (*ps.data)[0];
            if (px.requires_grad) {
                auto& g = px.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*o.grad)[i] * sv;
            }
            if (ps.requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < o.grad->size(); ++i) acc += (*o.grad)[i] * (*px.data)[i];
                ps.ensure_grad()[0] += acc;
            }
        },
        "scale");
}

inline Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_rank(p, 1, "concat");
        total += p.numel();
    }
    std::vector<double> out;
    out.reserve(total);
    for (const auto& p : parts) out.insert(out.end(), p.data->begin(), p.data->end());
    return detail::make_op(
        {total}, std::move(out), parts,
        [](const Tensor& o) {
            std::size_t off = 0;
            for (auto& p : o.node->parents) {
                std::size_t n = p.numel();
                if (p.requires_grad) {
                    auto& g = p.ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) g[i] += (*o.grad)[off + i];
                }
                off += n;
            }
        },
        "concat");
}

inline Tensor slice(const Tensor& x, std::size_t offset, std::size_t len) {
    detail::require_rank(x, 1, "slice");
    if (offset + len > x.numel()) throw DimensionError("slice: out of range");
    std::vector<double> out(x.data->begin() + offset, x.data->begin() + offset + len);
    return detail::make_op(
        {len}, std::move(out), {x},
        [offset](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < o.numel(); ++i) g[offset + i] += (*o.grad)[i];
        },
        "slice");
}

/// Numerically stable softmax over a vector (max-shift before exponentiation).
inline Tensor softmax(const Tensor& x) {
    detail::require_rank(x, 1, "softmax");
    if (x.numel() == 0) throw DimensionError("softmax: empty input");
    double mx = *std::max_element(x.data->begin(), x.data->end());
    std::vector<double> out(x.numel());
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp((*x.data)[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return detail::make_op(
        x.shape, std::move(out), {x},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            double inner = 0.0;
            for (std::size_t i = 0; i < o.numel(); ++i) inner += (*o.grad)[i] * (*o.data)[i];
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += (*o.data)[i] * ((*o.grad)[i] - inner);
            }
        },
        "softmax");
}

inline Tensor pick(const Tensor& x, std::size_t index) {
    detail::require_rank(x, 1, "pick");
    if (index >= x.numel()) throw IndexError("pick: index out of range");
    return detail::make_op(
        {1}, {(*x.data)[index]}, {x},
        [index](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad()[index] += (*o.grad)[0];
        },
        "pick");
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += (*a.data)[i] * (*b.data)[i];
    return detail::make_op(
        {1}, {acc}, {a, b},
        [](const Tensor& o) {
            Tensor& pa = o.node->parents[0];
            Tensor& pb = o.node->parents[1];
            double g = (*o.grad)[0];
            if (pa.requires_grad) {
                auto& ga = pa.ensure_grad();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (*pb.data)[i];
            }
            if (pb.requires_grad) {
                auto& gb = pb.ensure_grad();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * (*pa.data)[i];
            }
        },
        "dot");
}

constexpr double kLogClampFloor = 1e-12;

/// −log(max(probs[gold], 1e-12)). `probs` is expected to be a distribution.
inline Tensor cross_entropy(const Tensor& probs, std::size_t gold) {
    detail::require_rank(probs, 1, "cross_entropy");
    if (gold >= probs.numel()) throw IndexError("cross_entropy: gold index out of range");
    double p = (*probs.data)[gold];
    double loss = -std::log(std::max(p, kLogClampFloor));
    return detail::make_op(
        {1}, {loss}, {probs},
        [gold](const Tensor& o) {
            Tensor& pp = o.node->parents[0];
            if (!pp.requires_grad) return;
            double p = (*pp.data)[gold];
            if (p > kLogClampFloor) {
                pp.ensure_grad()[gold] += (*o.grad)[0] * (-1.0 / p);
            }
        },
        "cross_entropy");
}

// ---------------------------------------------------------------------------
// Matrix ops (row-major, Eigen-backed where it pays)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& w) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(w, 2, "matmul");
    if (a.cols() != w.rows()) throw DimensionError("matmul: inner dimensions differ");
    std::vector<double> out(a.rows() * w.cols());
    detail::MatMap(out.data(), static_cast<Eigen::Index>(a.rows()),
                   static_cast<Eigen::Index>(w.cols())) = detail::mat(a) * detail::mat(w);
    return detail::make_op(
        {a.rows(), w.cols()}, std::move(out), {a, w},
        [](const Tensor& o) {
            Tensor& pa = o.node->parents[0];
            Tensor& pw = o.node->parents[1];
            detail::CMatMap go(o.grad->data(), static_cast<Eigen::Index>(o.rows()),
                               static_cast<Eigen::Index>(o.cols()));
            if (pa.requires_grad) detail::mat_grad(pa) += go * detail::mat(pw).transpose();
            if (pw.requires_grad) detail::mat_grad(pw) += detail::mat(pa).transpose() * go;
        },
        "matmul");
}

/// out[t] = x[t]·W + b for every row t.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    detail::require_rank(x, 2, "affine");
    detail::require_rank(w, 2, "affine");
    detail::require_rank(b, 1, "affine");
    if (x.cols() != w.rows()) throw DimensionError("affine: inner dimensions differ");
    if (b.numel() != w.cols()) throw DimensionError("affine: bias width mismatch");
    std::vector<double> out(x.rows() * w.cols());
    detail::MatMap om(out.data(), static_cast<Eigen::Index>(x.rows()),
                      static_cast<Eigen::Index>(w.cols()));
    om = detail::mat(x) * detail::mat(w);
    om.rowwise() += detail::vec(b).transpose();
    return detail::make_op(
        {x.rows(), w.cols()}, std::move(out), {x, w, b},
        [](const Tensor& o) {
            Tensor& px = o.node->parents[0];
            Tensor& pw = o.node->parents[1];
            Tensor& pb = o.node->parents[2];
            detail::CMatMap go(o.grad->data(), static_cast<Eigen::Index>(o.rows()),
                               static_cast<Eigen::Index>(o.cols()));
            if (px.requires_grad) detail::mat_grad(px) += go * detail::mat(pw).transpose();
            if (pw.requires_grad) detail::mat_grad(pw) += detail::mat(px).transpose() * go;
            if (pb.requires_grad) detail::vec_grad(pb) += go.colwise().sum().transpose();
        },
        "affine");
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    std::size_t t = parts.front().rank() == 2 ? parts.front().rows() : 0;
    std::size_t width = 0;
    for (const auto& p : parts) {
        detail::require_rank(p, 2, "concat_cols");
        if (p.rows() != t) throw DimensionError("concat_cols: row counts differ");
        width += p.cols();
    }
    std::vector<double> out(t * width);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < t; ++r) {
            std::copy(p.data->begin() + r * p.cols(), p.data->begin() + (r + 1) * p.cols(),
                      out.begin() + r * width + off);
        }
        off += p.cols();
    }
    return detail::make_op(
        {t, width}, std::move(out), parts,
        [](const Tensor& o) {
            std::size_t off = 0;
            std::size_t width = o.cols();
            for (auto& p : o.node->parents) {
                if (p.requires_grad) {
                    auto& g = p.ensure_grad();
                    for (std::size_t r = 0; r < p.rows(); ++r) {
                        for (std::size_t c = 0; c < p.cols(); ++c) {
                            g[r * p.cols() + c] += (*o.grad)[r * width + off + c];
                        }
                    }
                }
                off += p.cols();
            }
        },
        "concat_cols");
}

inline Tensor row(const Tensor& a, std::size_t t) {
    detail::require_rank(a, 2, "row");
    if (t >= a.rows()) throw IndexError("row: index out of range");
    std::vector<double> out(a.data->begin() + t * a.cols(), a.data->begin() + (t + 1) * a.cols());
    return detail::make_op(
        {a.cols()}, std::move(out), {a},
        [t](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            std::size_t base = t * p.cols();
            for (std::size_t i = 0; i < o.numel(); ++i) g[base + i] += (*o.grad)[i];
        },
        "row");
}

inline Tensor stack_rows(const std::vector<Tensor>& rows_in) {
    if (rows_in.empty()) throw DimensionError("stack_rows: no inputs");
    std::size_t d = rows_in.front().numel();
    for (const auto& r : rows_in) {
        detail::require_rank(r, 1, "stack_rows");
        if (r.numel() != d) throw DimensionError("stack_rows: widths differ");
    }
    std::vector<double> out;
    out.reserve(rows_in.size() * d);
    for (const auto& r : rows_in) out.insert(out.end(), r.data->begin(), r.data->end());
    return detail::make_op(
        {rows_in.size(), d}, std::move(out), rows_in,
        [](const Tensor& o) {
            std::size_t d = o.cols();
            for (std::size_t t = 0; t < o.node->parents.size(); ++t) {
                Tensor& p = o.node->parents[t];
                if (!p.requires_grad) continue;
                auto& g = p.ensure_grad();
                for (std::size_t i = 0; i < d; ++i) g[i] += (*o.grad)[t * d + i];
            }
        },
        "stack_rows");
}

inline Tensor softmax_rows(const Tensor& a) {
    detail::require_rank(a, 2, "softmax_rows");
    std::vector<double> out(a.numel());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* src = a.data->data() + r * a.cols();
        double mx = *std::max_element(src, src + a.cols());
        double sum = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out[r * a.cols() + c] = std::exp(src[c] - mx);
            sum += out[r * a.cols() + c];
        }
        for (std::size_t c = 0; c < a.cols(); ++c) out[r * a.cols() + c] /= sum;
    }
    return detail::make_op(
        a.shape, std::move(out), {a},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t r = 0; r < o.rows(); ++r) {
                double inner = 0.0;
                for (std::size_t c = 0; c < o.cols(); ++c) {
                    inner += (*o.grad)[r * o.cols() + c] * (*o.data)[r * o.cols() + c];
                }
                for (std::size_t c = 0; c < o.cols(); ++c) {
                    std::size_t i = r * o.cols() + c;
                    g[i] += (*o.data)[i] * ((*o.grad)[i] - inner);
                }
            }
        },
        "softmax_rows");
}

inline Tensor tile_row(const Tensor& v, std::size_t t) {
    detail::require_rank(v, 1, "tile_row");
    std::vector<double> out;
    out.reserve(t * v.numel());
    for (std::size_t r = 0; r < t; ++r) out.insert(out.end(), v.data->begin(), v.data->end());
    return detail::make_op(
        {t, v.numel()}, std::move(out), {v},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t r = 0; r < o.rows(); ++r) {
                for (std::size_t c = 0; c < o.cols(); ++c) g[c] += (*o.grad)[r * o.cols() + c];
            }
        },
        "tile_row");
}

/// Each row of `a` multiplied elementwise by `v`.
inline Tensor mul_row_broadcast(const Tensor& a, const Tensor& v) {
    detail::require_rank(a, 2, "mul_row_broadcast");
    detail::require_rank(v, 1, "mul_row_broadcast");
    if (a.cols() != v.numel()) throw DimensionError("mul_row_broadcast: width mismatch");
    std::vector<double> out(a.numel());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out[r * a.cols() + c] = (*a.data)[r * a.cols() + c] * (*v.data)[c];
        }
    }
    return detail::make_op(
        a.shape, std::move(out), {a, v},
        [](const Tensor& o) {
            Tensor& pa = o.node->parents[0];
            Tensor& pv = o.node->parents[1];
            if (pa.requires_grad) {
                auto& g = pa.ensure_grad();
                for (std::size_t r = 0; r < o.rows(); ++r) {
                    for (std::size_t c = 0; c < o.cols(); ++c) {
                        g[r * o.cols() + c] += (*o.grad)[r * o.cols() + c] * (*pv.data)[c];
                    }
                }
            }
            if (pv.requires_grad) {
                auto& g = pv.ensure_grad();
                for (std::size_t r = 0; r < o.rows(); ++r) {
                    for (std::size_t c = 0; c < o.cols(); ++c) {
                        g[c] += (*o.grad)[r * o.cols() + c] * (*pa.data)[r * o.cols() + c];
                    }
                }
            }
        },
        "mul_row_broadcast");
}

/// Row t of `a` multiplied by scalar s[t].
inline Tensor scale_rows(const Tensor& a, const Tensor& s) {
    detail::require_rank(a, 2, "scale_rows");
    detail::require_rank(s, 1, "scale_rows");
    if (a.rows() != s.numel()) throw DimensionError("scale_rows: row count mismatch");
    std::vector<double> out(a.numel());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out[r * a.cols() + c] = (*a.data)[r * a.cols() + c] * (*s.data)[r];
        }
    }
    return detail::make_op(
        a.shape, std::move(out), {a, s},
        [](const Tensor& o) {
            Tensor& pa = o.node->parents[0];
            Tensor& ps = o.node->parents[1];
            if (pa.requires_grad) {
                auto& g = pa.ensure_grad();
                for (std::size_t r = 0; r < o.rows(); ++r) {
                    for (std::size_t c = 0; c < o.cols(); ++c) {
                        g[r * o.cols() + c] += (*o.grad)[r * o.cols() + c] * (*ps.data)[r];
                    }
                }
            }
            if (ps.requires_grad) {
                auto& g = ps.ensure_grad();
                for (std::size_t r = 0; r < o.rows(); ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < o.cols(); ++c) {
                        acc += (*o.grad)[r * o.cols() + c] * (*pa.data)[r * o.cols() + c];
                    }
                    g[r] += acc;
                }
            }
        },
        "scale_rows");
}

inline Tensor as_column(const Tensor& v) {
    detail::require_rank(v, 1, "as_column");
    return detail::make_op(
        {v.numel(), 1}, std::vector<double>(*v.data), {v},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*o.grad)[i];
        },
        "as_column");
}

inline Tensor flatten(const Tensor& a) {
    std::size_t n = a.numel();
    return detail::make_op(
        {n}, std::vector<double>(*a.data), {a},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*o.grad)[i];
        },
        "flatten");
}

/// y = Σ_t w[t] · a[t]  (attention-style pooling over rows).
inline Tensor weighted_row_sum(const Tensor& a, const Tensor& w) {
    detail::require_rank(a, 2, "weighted_row_sum");
    detail::require_rank(w, 1, "weighted_row_sum");
    if (a.rows() != w.numel()) throw DimensionError("weighted_row_sum: row count mismatch");
    std::vector<double> out(a.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out[c] += (*w.data)[r] * (*a.data)[r * a.cols() + c];
        }
    }
    return detail::make_op(
        {a.cols()}, std::move(out), {a, w},
        [](const Tensor& o) {
            Tensor& pa = o.node->parents[0];
            Tensor& pw = o.node->parents[1];
            if (pa.requires_grad) {
                auto& g = pa.ensure_grad();
                for (std::size_t r = 0; r < pa.rows(); ++r) {
                    for (std::size_t c = 0; c < pa.cols(); ++c) {
                        g[r * pa.cols() + c] += (*pw.data)[r] * (*o.grad)[c];
                    }
                }
            }
            if (pw.requires_grad) {
                auto& g = pw.ensure_grad();
                for (std::size_t r = 0; r < pa.rows(); ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < pa.cols(); ++c) {
                        acc += (*o.grad)[c] * (*pa.data)[r * pa.cols() + c];
                    }
                    g[r] += acc;
                }
            }
        },
        "weighted_row_sum");
}

inline Tensor sum_rows(const Tensor& a) {
    detail::require_rank(a, 2, "sum_rows");
    std::vector<double> out(a.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += (*a.data)[r * a.cols() + c];
    }
    return detail::make_op(
        {a.cols()}, std::move(out), {a},
        [](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t r = 0; r < p.rows(); ++r) {
                for (std::size_t c = 0; c < p.cols(); ++c) g[r * p.cols() + c] += (*o.grad)[c];
            }
        },
        "sum_rows");
}

/// Column-wise max over rows; gradient flows to the first maximal row per column.
inline Tensor maxpool_rows(const Tensor& a) {
    detail::require_rank(a, 2, "maxpool_rows");
    if (a.rows() == 0) throw DimensionError("maxpool_rows: empty input");
    std::vector<double> out(a.cols());
    std::vector<std::size_t> arg(a.cols(), 0);
    for (std::size_t c = 0; c < a.cols(); ++c) {
        double best = (*a.data)[c];
        for (std::size_t r = 1; r < a.rows(); ++r) {
            double v = (*a.data)[r * a.cols() + c];
            if (v > best) {
                best = v;
                arg[c] = r;
            }
        }
        out[c] = best;
    }
    return detail::make_op(
        {a.cols()}, std::move(out), {a},
        [arg](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            for (std::size_t c = 0; c < o.numel(); ++c) g[arg[c] * p.cols() + c] += (*o.grad)[c];
        },
        "maxpool_rows");
}

/// gates = W_ih·x + W_hh·h + b. One fused op keeps LSTM graphs small.
inline Tensor lstm_preact(const Tensor& x, const Tensor& h, const Tensor& w_ih,
                          const Tensor& w_hh, const Tensor& b) {
    detail::require_rank(x, 1, "lstm_preact");
    detail::require_rank(h, 1, "lstm_preact");
    detail::require_rank(w_ih, 2, "lstm_preact");
    detail::require_rank(w_hh, 2, "lstm_preact");
    detail::require_rank(b, 1, "lstm_preact");
    if (w_ih.cols() != x.numel() || w_hh.cols() != h.numel() || w_ih.rows() != w_hh.rows() ||
        b.numel() != w_ih.rows()) {
        throw DimensionError("lstm_preact: weight dimensions inconsistent");
    }
    std::size_t g4 = w_ih.rows();
    std::vector<double> out(g4);
    detail::VecMap om(out.data(), static_cast<Eigen::Index>(g4));
    om = detail::mat(w_ih) * detail::vec(x) + detail::mat(w_hh) * detail::vec(h) + detail::vec(b);
    return detail::make_op(
        {g4}, std::move(out), {x, h, w_ih, w_hh, b},
        [](const Tensor& o) {
            Tensor& px = o.node->parents[0];
            Tensor& ph = o.node->parents[1];
            Tensor& pwi = o.node->parents[2];
            Tensor& pwh = o.node->parents[3];
            Tensor& pb = o.node->parents[4];
            detail::CVecMap go(o.grad->data(), static_cast<Eigen::Index>(o.numel()));
            if (px.requires_grad) detail::vec_grad(px) += detail::mat(pwi).transpose() * go;
            if (ph.requires_grad) detail::vec_grad(ph) += detail::mat(pwh).transpose() * go;
            if (pwi.requires_grad) detail::mat_grad(pwi) += go * detail::vec(px).transpose();
            if (pwh.requires_grad) detail::mat_grad(pwh) += go * detail::vec(ph).transpose();
            if (pb.requires_grad) detail::vec_grad(pb) += go;
        },
        "lstm_preact");
}

/// Gather rows of an embedding table; backward scatter-adds into the table.
inline Tensor embedding_rows(const Tensor& table, const std::vector<std::size_t>& indices) {
    detail::require_rank(table, 2, "embedding_rows");
    for (auto i : indices) {
        if (i >= table.rows()) throw IndexError("embedding_rows: index out of range");
    }
    std::size_t d = table.cols();
    std::vector<double> out(indices.size() * d);
    for (std::size_t t = 0; t < indices.size(); ++t) {
        std::copy(table.data->begin() + indices[t] * d, table.data->begin() + (indices[t] + 1) * d,
                  out.begin() + t * d);
    }
    return detail::make_op(
        {indices.size(), d}, std::move(out), {table},
        [indices](const Tensor& o) {
            Tensor& p = o.node->parents[0];
            if (!p.requires_grad) return;
            auto& g = p.ensure_grad();
            std::size_t d = o.cols();
            for (std::size_t t = 0; t < indices.size(); ++t) {
                for (std::size_t c = 0; c < d; ++c) {
                    g[indices[t] * d + c] += (*o.grad)[t * d + c];
                }
            }
        },
        "embedding_rows");
}

}  // namespace skillrc::nn
