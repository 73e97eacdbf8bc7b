#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gmlp/tensor.hpp"

namespace gmlp::ad {

// Eager tape-based reverse mode over the tensor kernels. Nodes are recorded in
// creation order; backward() visits them in strict reverse creation order and
// accumulates adjoints additively, which is what parameter sharing (Toeplitz
// diagonals, tied embeddings) relies on. One tape per thread; backward is
// callable exactly once per forward pass.
template <typename T>
class Tape {
public:
    using Id = std::uint32_t;

    Id leaf(Tensor<T> v) { return push(std::move(v), nullptr); }

    const Tensor<T>& value(Id id) const { return nodes_[id].value; }

    // Adjoint of a node. All-zero (of the value's shape) when the node was not
    // reachable from the loss.
    Tensor<T> grad(Id id) const {
        const Node& n = nodes_[id];
        return n.has_grad ? n.grad : Tensor<T>::zeros(n.value.shape());
    }

    bool backward_done() const { return backward_done_; }
    std::size_t size() const { return nodes_.size(); }

    void backward(Id loss) {
        if (backward_done_) throw std::runtime_error("Tape::backward: tape already consumed");
        require(loss < nodes_.size(), "Tape::backward: bad loss id");
        require(nodes_[loss].value.rank() == 0,
                "Tape::backward: loss must be scalar, got shape " +
                    shape_str(nodes_[loss].value.shape()));
        backward_done_ = true;
        seed(loss, Tensor<T>::scalar(T(1)));
        for (std::size_t i = loss + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.has_grad && n.back) n.back(*this, n);
        }
    }

    // ---- differentiable ops -----------------------------------------------

    Id add(Id a, Id b) {
        Tensor<T> out = gmlp::add(value(a), value(b));
        return push(std::move(out), [a, b](Tape& t, const Node& self) {
            t.accumulate_grad(a, self.grad);
            t.accumulate_grad(b, self.grad);
        });
    }

    Id sub(Id a, Id b) {
        Tensor<T> out = gmlp::sub(value(a), value(b));
        return push(std::move(out), [a, b](Tape& t, const Node& self) {
            t.accumulate_grad(a, self.grad);
            t.accumulate_grad(b, gmlp::scale(self.grad, T(-1)));
        });
    }

    Id mul(Id a, Id b) {
        Tensor<T> out = gmlp::mul(value(a), value(b));
        return push(std::move(out), [a, b](Tape& t, const Node& self) {
            t.accumulate_grad(a, gmlp::mul(self.grad, t.value(b)));
            t.accumulate_grad(b, gmlp::mul(self.grad, t.value(a)));
        });
    }

    Id scale(Id a, T c) {
        Tensor<T> out = gmlp::scale(value(a), c);
        return push(std::move(out), [a, c](Tape& t, const Node& self) {
            t.accumulate_grad(a, gmlp::scale(self.grad, c));
        });
    }

    Id matmul(Id a, Id b) {
        Tensor<T> out = gmlp::matmul(value(a), value(b));
        return push(std::move(out), [a, b](Tape& t, const Node& self) {
            t.accumulate_grad(a, gmlp::matmul(self.grad, gmlp::transpose(t.value(b))));
            t.accumulate_grad(b, gmlp::matmul(gmlp::transpose(t.value(a)), self.grad));
        });
    }

    Id transpose(Id a) {
        Tensor<T> out = gmlp::transpose(value(a));
        return push(std::move(out), [a](Tape& t, const Node& self) {
            t.accumulate_grad(a, gmlp::transpose(self.grad));
        });
    }

    Id add_channel_bias(Id x, Id bias) {
        Tensor<T> out = gmlp::add_channel_bias(value(x), value(bias));
        return push(std::move(out), [x, bias](Tape& t, const Node& self) {
            t.accumulate_grad(x, self.grad);
            const std::size_t n = self.grad.extent(0), c = self.grad.extent(1);
            Tensor<T> db({c});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) db[j] += self.grad.at(i, j);
            t.accumulate_grad(bias, db);
        });
    }

    Id add_token_bias(Id x, Id bias) {
        Tensor<T> out = gmlp::add_token_bias(value(x), value(bias));
        return push(std::move(out), [x, bias](Tape& t, const Node& self) {
            t.accumulate_grad(x, self.grad);
            const std::size_t n = self.grad.extent(0), c = self.grad.extent(1);
            Tensor<T> db({n});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) db[i] += self.grad.at(i, j);
            t.accumulate_grad(bias, db);
        });
    }

    Id gelu(Id a) {
        Tensor<T> out = gmlp::gelu(value(a));
        return push(std::move(out), [a](Tape& t, const Node& self) {
            const Tensor<T>& x = t.value(a);
            Tensor<T> dx = self.grad;
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= gelu_grad_scalar(x[i]);
            t.accumulate_grad(a, dx);
        });
    }

    Id layer_norm(Id x, Id gamma, Id beta) {
        Tensor<T> xhat, inv_std;
        Tensor<T> out = gmlp::layer_norm(value(x), value(gamma), value(beta), &xhat, &inv_std);
        return push(std::move(out), [x, gamma, beta, xhat = std::move(xhat),
                                     inv_std = std::move(inv_std)](Tape& t, const Node& self) {
            const std::size_t n = self.grad.extent(0), c = self.grad.extent(1);
            const Tensor<T>& g = self.grad;
            const Tensor<T>& gm = t.value(gamma);
            Tensor<T> dgamma({c}), dbeta({c}), dx({n, c});
            for (std::size_t i = 0; i < n; ++i) {
                // dyhat = g * gamma; dx = (dyhat - mean(dyhat) - xhat*mean(dyhat*xhat)) * inv_std
                T mean_dy = T(0), mean_dy_xh = T(0);
                for (std::size_t j = 0; j < c; ++j) {
                    const T dy = g.at(i, j) * gm[j];
                    mean_dy += dy;
                    mean_dy_xh += dy * xhat.at(i, j);
                }
                mean_dy /= static_cast<T>(c);
                mean_dy_xh /= static_cast<T>(c);
                for (std::size_t j = 0; j < c; ++j) {
                    const T dy = g.at(i, j) * gm[j];
                    dx.at(i, j) = (dy - mean_dy - xhat.at(i, j) * mean_dy_xh) * inv_std[i];
                    dgamma[j] += g.at(i, j) * xhat.at(i, j);
                    dbeta[j] += g.at(i, j);
                }
            }
            t.accumulate_grad(x, dx);
            t.accumulate_grad(gamma, dgamma);
            t.accumulate_grad(beta, dbeta);
        });
    }

    Id softmax_rows(Id a) {
        Tensor<T> out = gmlp::softmax_rows(value(a));
        Tensor<T> cached = out;
        return push(std::move(out), [a, s = std::move(cached)](Tape& t, const Node& self) {
            const std::size_t m = s.extent(0), k = s.extent(1);
            Tensor<T> dx({m, k});
            for (std::size_t i = 0; i < m; ++i) {
                T dot = T(0);
                for (std::size_t j = 0; j < k; ++j) dot += self.grad.at(i, j) * s.at(i, j);
                for (std::size_t j = 0; j < k; ++j)
                    dx.at(i, j) = s.at(i, j) * (self.grad.at(i, j) - dot);
            }
            t.accumulate_grad(a, dx);
        });
    }

    // Halves of the last axis as two separate nodes; adjoints scatter back
    // into the corresponding half of the input.
    std::pair<Id, Id> split_last_axis(Id x) {
        auto [a, b] = gmlp::split_last_axis(value(x));
        Id ia = push(std::move(a), make_half_back(x, 0));
        Id ib = push(std::move(b), make_half_back(x, 1));
        return {ia, ib};
    }

    // Concatenate two rank-2 nodes along columns; widths may differ.
    Id concat_cols(Id a, Id b) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        require(av.rank() == 2 && bv.rank() == 2 && av.extent(0) == bv.extent(0),
                "concat_cols: row counts differ");
        const std::size_t m = av.extent(0), ca = av.extent(1), cb = bv.extent(1);
        Tensor<T> out({m, ca + cb});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = av.at(i, j);
            for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = bv.at(i, j);
        }
        return push(std::move(out), [a, b, ca, cb](Tape& t, const Node& self) {
            const std::size_t m = self.grad.extent(0);
            Tensor<T> ga({m, ca}), gb({m, cb});
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) = self.grad.at(i, j);
                for (std::size_t j = 0; j < cb; ++j) gb.at(i, j) = self.grad.at(i, ca + j);
            }
            t.accumulate_grad(a, ga);
            t.accumulate_grad(b, gb);
        });
    }

    Id toeplitz(Id w, std::size_t n) {
        Tensor<T> out = gmlp::toeplitz_materialize(value(w), n);
        return push(std::move(out), [w, n](Tape& t, const Node& self) {
            Tensor<T> dw({2 * n - 1});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) dw[j - i + n - 1] += self.grad.at(i, j);
            t.accumulate_grad(w, dw);
        });
    }

    // Row gather from a [V x d] table; duplicate indices accumulate additively
    // on backward.
    Id gather_rows(Id table, std::vector<std::size_t> idx) {
        const Tensor<T>& e = value(table);
        require(e.rank() == 2, "gather_rows: table must be rank-2");
        const std::size_t d = e.extent(1);
        Tensor<T> out({idx.size(), d});
        for (std::size_t r = 0; r < idx.size(); ++r) {
            require(idx[r] < e.extent(0), "gather_rows: index out of range");
            for (std::size_t j = 0; j < d; ++j) out.at(r, j) = e.at(idx[r], j);
        }
        return push(std::move(out), [table, idx = std::move(idx)](Tape& t, const Node& self) {
            Tensor<T> de(t.value(table).shape());
            const std::size_t d = de.extent(1);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < d; ++j) de.at(idx[r], j) += self.grad.at(r, j);
            t.accumulate_grad(table, de);
        });
    }

    // Columns [start, start+len) of a [m x k] node.
    Id slice_cols(Id x, std::size_t start, std::size_t len) {
        const Tensor<T>& v = value(x);
        require(v.rank() == 2 && start + len <= v.extent(1), "slice_cols: bad column range");
        const std::size_t m = v.extent(0), k = v.extent(1);
        Tensor<T> out({m, len});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < len; ++j) out.at(i, j) = v.at(i, start + j);
        return push(std::move(out), [x, start, len, k](Tape& t, const Node& self) {
            const std::size_t m = self.grad.extent(0);
            Tensor<T> dx({m, k});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < len; ++j) dx.at(i, start + j) = self.grad.at(i, j);
            t.accumulate_grad(x, dx);
        });
    }

    Id sum_to_scalar(Id a) {
        Tensor<T> out = Tensor<T>::scalar(gmlp::sum_all(value(a)));
        return push(std::move(out), [a](Tape& t, const Node& self) {
            const T g = self.grad[0];
            t.accumulate_grad(a, Tensor<T>::full(t.value(a).shape(), g));
        });
    }

    // Mean cross entropy of logits[m x v] against integer targets, fused with
    // log-softmax for stability. Backward: (softmax - onehot) / m.
    Id cross_entropy_mean(Id logits, std::vector<std::size_t> targets) {
        const Tensor<T>& z = value(logits);
        require(!targets.empty(), "cross_entropy_mean: at least one target row required");
        require(z.rank() == 2 && z.extent(0) == targets.size(),
                "cross_entropy_mean: need one target per logits row");
        const std::size_t m = z.extent(0), v = z.extent(1);
        Tensor<T> probs({m, v});
        double loss = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            require(targets[i] < v, "cross_entropy_mean: target out of range");
            const T* row = z.data() + i * v;
            T mx = row[0];
            for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (std::size_t j = 0; j < v; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
            const double lse = std::log(denom) + static_cast<double>(mx);
            loss += lse - static_cast<double>(row[targets[i]]);
            for (std::size_t j = 0; j < v; ++j)
                probs.at(i, j) = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
        }
        loss /= static_cast<double>(m);
        return push(Tensor<T>::scalar(static_cast<T>(loss)),
                    [logits, targets = std::move(targets), probs = std::move(probs)](
                        Tape& t, const Node& self) {
                        const std::size_t m = probs.extent(0), v = probs.extent(1);
                        const T g = self.grad[0] / static_cast<T>(m);
                        Tensor<T> dz = probs;
                        for (std::size_t i = 0; i < m; ++i) dz.at(i, targets[i]) -= T(1);
                        for (std::size_t i = 0; i < m * v; ++i) dz[i] *= g;
                        t.accumulate_grad(logits, dz);
                    });
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad = false;
        std::function<void(Tape&, const Node&)> back;
    };

    Id push(Tensor<T> v, std::function<void(Tape&, const Node&)> back) {
        nodes_.push_back(Node{std::move(v), Tensor<T>(), false, std::move(back)});
        return static_cast<Id>(nodes_.size() - 1);
    }

    void seed(Id id, Tensor<T> g) {
        nodes_[id].grad = std::move(g);
        nodes_[id].has_grad = true;
    }

    void accumulate_grad(Id id, const Tensor<T>& g) {
        Node& n = nodes_[id];
        if (!n.has_grad) {
            n.grad = Tensor<T>::zeros(n.value.shape());
            n.has_grad = true;
        }
        gmlp::accumulate(n.grad, g);
    }

    std::function<void(Tape&, const Node&)> make_half_back(Id x, int which) {
        return [x, which](Tape& t, const Node& self) {
            const Tensor<T>& xv = t.value(x);
            const std::size_t last = xv.extent(xv.rank() - 1);
            const std::size_t half = last / 2;
            Tensor<T> dx(xv.shape());
            const std::size_t rows = xv.size() / last;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < half; ++j)
                    dx[r * last + (which ? half + j : j)] = self.grad[r * half + j];
            t.accumulate_grad(x, dx);
        };
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace gmlp::ad
