#include "avp/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "avp/errors.hpp"

namespace avp {

namespace num {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double weighted_bce_sum(const Tensor& logits, const Tensor& targets,
                        const std::vector<double>& pos_weight,
                        const std::vector<double>& neg_weight) {
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    double total = 0.0;
    for (std::size_t b = 0; b < rows; ++b) {
        for (std::size_t d = 0; d < cols; ++d) {
            const double z = logits.at(b, d);
            const double t = targets.at(b, d);
            const double w = (t == 1.0) ? pos_weight[d] : neg_weight[d];
            total += w * (softplus(z) - t * z);
        }
    }
    return total;
}

} // namespace num

namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
    fail("shape-mismatch", std::string(op) + ": " + detail);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank)
        shape_fail(op, "expected rank " + std::to_string(rank) + " tensor, got " +
                           shape_to_string(t.shape()));
}

} // namespace

NodeId Tape::add_node(const char* op, Tensor value, std::vector<NodeId> parents,
                      std::function<void(Tape&, NodeId)> backprop) {
    if (consumed_) fail("stale-tape", "recording on a tape whose backward already ran");
    if (check_finite_ && !value.all_finite())
        fail("non-finite", std::string(op) + " produced a NaN or Inf output");
    Node node;
    node.value = std::move(value);
    node.parents = std::move(parents);
    node.backprop = std::move(backprop);
    for (NodeId p : node.parents)
        if (nodes_[p].needs_grad) node.needs_grad = true;
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Tensor& Tape::grad_buffer(NodeId id) {
    if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
    if (grads_[id].empty()) grads_[id] = Tensor(nodes_[id].value.shape());
    return grads_[id];
}

NodeId Tape::input(Tensor value) { return add_node("input", std::move(value), {}, nullptr); }

NodeId Tape::param(Variable& var) {
    NodeId id = add_node("param", var.value, {}, nullptr);
    nodes_[id].needs_grad = true;
    nodes_[id].bound = &var;
    return id;
}

// ---------------------------------------------------------------------------
// dense / elementwise

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_rank("matmul", A, 2);
    require_rank("matmul", B, 2);
    if (A.dim(1) != B.dim(0))
        shape_fail("matmul", shape_to_string(A.shape()) + " x " + shape_to_string(B.shape()));
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);

    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        for (std::size_t j = 0; j < k; ++j) {
            const double v = A.at(i, j);
            if (v == 0.0) continue;
            const double* brow = B.data() + j * n;
            for (std::size_t c = 0; c < n; ++c) orow[c] += v * brow[c];
        }
    }

    return add_node("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[self];
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        if (t.nodes_[a].needs_grad) {
            Tensor& da = t.grad_buffer(a);
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * n;
                for (std::size_t j = 0; j < k; ++j) {
                    const double* brow = B.data() + j * n;
                    double acc = 0.0;
                    for (std::size_t c = 0; c < n; ++c) acc += grow[c] * brow[c];
                    da[i * k + j] += acc;
                }
            }
        }
        if (t.nodes_[b].needs_grad) {
            Tensor& db = t.grad_buffer(b);
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * n;
                for (std::size_t j = 0; j < k; ++j) {
                    const double v = A.at(i, j);
                    if (v == 0.0) continue;
                    double* drow = db.data() + j * n;
                    for (std::size_t c = 0; c < n; ++c) drow[c] += v * grow[c];
                }
            }
        }
    });
}

NodeId Tape::bias_add(NodeId x, NodeId bias) {
    const Tensor& X = value(x);
    const Tensor& B = value(bias);
    require_rank("bias_add", B, 1);
    if (X.rank() == 0 || X.dim(X.rank() - 1) != B.dim(0))
        shape_fail("bias_add", shape_to_string(X.shape()) + " + " + shape_to_string(B.shape()));
    const std::size_t c = B.dim(0), outer = X.size() / c;

    Tensor out = X;
    for (std::size_t i = 0; i < outer; ++i) {
        double* row = out.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += B[j];
    }

    return add_node("bias_add", std::move(out), {x, bias}, [x, bias, c, outer](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[self];
        if (t.nodes_[x].needs_grad) {
            Tensor& dx = t.grad_buffer(x);
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        }
        if (t.nodes_[bias].needs_grad) {
            Tensor& db = t.grad_buffer(bias);
            for (std::size_t i = 0; i < outer; ++i) {
                const double* row = g.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) db[j] += row[j];
            }
        }
    });
}

NodeId Tape::relu(NodeId x) {
    const Tensor& X = value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
    return add_node("relu", std::move(out), {x}, [x](Tape& t, NodeId self) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor& g = t.grads_[self];
        const Tensor& y = t.value(self);
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (y[i] > 0.0) dx[i] += g[i];
    });
}

NodeId Tape::elu(NodeId x, double alpha) {
    const Tensor& X = value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i)
        out[i] = X[i] > 0.0 ? X[i] : alpha * std::expm1(X[i]);
    return add_node("elu", std::move(out), {x}, [x, alpha](Tape& t, NodeId self) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor& g = t.grads_[self];
        const Tensor& y = t.value(self);
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i)
            dx[i] += g[i] * (y[i] > 0.0 ? 1.0 : y[i] + alpha);
    });
}

NodeId Tape::sigmoid(NodeId x) {
    const Tensor& X = value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = num::sigmoid(X[i]);
    return add_node("sigmoid", std::move(out), {x}, [x](Tape& t, NodeId self) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor& g = t.grads_[self];
        const Tensor& y = t.value(self);
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

NodeId Tape::dropout(NodeId x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0)
        fail("bad-config", "dropout rate must be in [0, 1), got " + std::to_string(rate));
    const Tensor& X = value(x);
    if (!training) {
        Tensor out = X;
        return add_node("dropout", std::move(out), {x}, [x](Tape& t, NodeId self) {
            if (!t.nodes_[x].needs_grad) return;
            const Tensor& g = t.grads_[self];
            Tensor& dx = t.grad_buffer(x);
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        });
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(X.size());
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double m = rng.uniform() >= rate ? keep_scale : 0.0;
        (*mask)[i] = m;
        out[i] = X[i] * m;
    }
    return add_node("dropout", std::move(out), {x}, [x, mask](Tape& t, NodeId self) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor& g = t.grads_[self];
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*mask)[i];
    });
}

NodeId Tape::mask_time(NodeId seq, const std::vector<std::int32_t>& lengths) {
    const Tensor& X = value(seq);
    require_rank("mask_time", X, 3);
    const std::size_t batch = X.dim(0), len = X.dim(1), chans = X.dim(2);
    if (lengths.size() != batch)
        shape_fail("mask_time", "lengths size " + std::to_string(lengths.size()) +
                                    " vs batch " + std::to_string(batch));
    auto keep = std::make_shared<std::vector<std::int32_t>>(lengths);
    Tensor out = X;
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t valid = std::min<std::size_t>(len, static_cast<std::size_t>(std::max<std::int32_t>(lengths[b], 0)));
        double* base = out.data() + b * len * chans;
        std::fill(base + valid * chans, base + len * chans, 0.0);
    }
    return add_node("mask_time", std::move(out), {seq}, [seq, keep, len, chans](Tape& t, NodeId self) {
        if (!t.nodes_[seq].needs_grad) return;
        const Tensor& g = t.grads_[self];
        Tensor& dx = t.grad_buffer(seq);
        const std::size_t batch = g.dim(0);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t valid = std::min<std::size_t>(len, static_cast<std::size_t>(std::max<std::int32_t>((*keep)[b], 0)));
            const double* grow = g.data() + b * len * chans;
            double* drow = dx.data() + b * len * chans;
            for (std::size_t i = 0; i < valid * chans; ++i) drow[i] += grow[i];
        }
    });
}

// ---------------------------------------------------------------------------
// lookup / convolution / pooling

NodeId Tape::embedding_lookup(NodeId table, const std::vector<std::int32_t>& ids,
                              std::size_t batch, std::size_t length) {
    const Tensor& T = value(table);
    require_rank("embedding_lookup", T, 2);
    if (ids.size() != batch * length)
        shape_fail("embedding_lookup", "ids size " + std::to_string(ids.size()) + " vs " +
                                           std::to_string(batch) + "x" + std::to_string(length));
    const std::size_t vocab = T.dim(0), dim = T.dim(1);
    for (std::int32_t id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            fail("shape-mismatch", "embedding_lookup: id " + std::to_string(id) +
                                       " outside vocabulary of size " + std::to_string(vocab));

    auto saved_ids = std::make_shared<std::vector<std::int32_t>>(ids);
    Tensor out({batch, length, dim});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = T.data() + static_cast<std::size_t>(ids[i]) * dim;
        std::copy(src, src + dim, out.data() + i * dim);
    }
    return add_node("embedding_lookup", std::move(out), {table},
                    [table, saved_ids, dim](Tape& t, NodeId self) {
                        if (!t.nodes_[table].needs_grad) return;
                        const Tensor& g = t.grads_[self];
                        Tensor& dt = t.grad_buffer(table);
                        for (std::size_t i = 0; i < saved_ids->size(); ++i) {
                            double* dst = dt.data() + static_cast<std::size_t>((*saved_ids)[i]) * dim;
                            const double* src = g.data() + i * dim;
                            for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
                        }
                    });
}

NodeId Tape::conv1d_valid(NodeId signal, NodeId kernels) {
    const Tensor& X = value(signal);
    const Tensor& W = value(kernels);
    require_rank("conv1d_valid", X, 3);
    require_rank("conv1d_valid", W, 3);
    const std::size_t batch = X.dim(0), len = X.dim(1), cin = X.dim(2);
    const std::size_t width = W.dim(0), wcin = W.dim(1), cout = W.dim(2);
    if (cin != wcin || len < width)
        shape_fail("conv1d_valid", "signal " + shape_to_string(X.shape()) + " kernels " +
                                       shape_to_string(W.shape()));
    const std::size_t olen = len - width + 1;

    // zero input entries are skipped: exact for one-hot style signals,
    // bit-identical to the dense loop otherwise
    Tensor out({batch, olen, cout});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t0 = 0; t0 < olen; ++t0) {
            double* orow = out.data() + (b * olen + t0) * cout;
            for (std::size_t k = 0; k < width; ++k) {
                const double* xrow = X.data() + (b * len + t0 + k) * cin;
                const double* wbase = W.data() + k * cin * cout;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double v = xrow[ci];
                    if (v == 0.0) continue;
                    const double* wrow = wbase + ci * cout;
                    for (std::size_t co = 0; co < cout; ++co) orow[co] += v * wrow[co];
                }
            }
        }
    }

    return add_node("conv1d_valid", std::move(out), {signal, kernels},
                    [signal, kernels, batch, len, cin, width, cout, olen](Tape& t, NodeId self) {
                        const Tensor& g = t.grads_[self];
                        const Tensor& X = t.value(signal);
                        const Tensor& W = t.value(kernels);
                        if (t.nodes_[kernels].needs_grad) {
                            Tensor& dw = t.grad_buffer(kernels);
                            for (std::size_t b = 0; b < batch; ++b) {
                                for (std::size_t t0 = 0; t0 < olen; ++t0) {
                                    const double* grow = g.data() + (b * olen + t0) * cout;
                                    for (std::size_t k = 0; k < width; ++k) {
                                        const double* xrow = X.data() + (b * len + t0 + k) * cin;
                                        double* dwbase = dw.data() + k * cin * cout;
                                        for (std::size_t ci = 0; ci < cin; ++ci) {
                                            const double v = xrow[ci];
                                            if (v == 0.0) continue;
                                            double* dwrow = dwbase + ci * cout;
                                            for (std::size_t co = 0; co < cout; ++co)
                                                dwrow[co] += v * grow[co];
                                        }
                                    }
                                }
                            }
                        }
                        if (t.nodes_[signal].needs_grad) {
                            Tensor& dx = t.grad_buffer(signal);
                            for (std::size_t b = 0; b < batch; ++b) {
                                for (std::size_t t0 = 0; t0 < olen; ++t0) {
                                    const double* grow = g.data() + (b * olen + t0) * cout;
                                    for (std::size_t k = 0; k < width; ++k) {
                                        double* dxrow = dx.data() + (b * len + t0 + k) * cin;
                                        const double* wbase = W.data() + k * cin * cout;
                                        for (std::size_t ci = 0; ci < cin; ++ci) {
                                            const double* wrow = wbase + ci * cout;
                                            double acc = 0.0;
                                            for (std::size_t co = 0; co < cout; ++co)
                                                acc += wrow[co] * grow[co];
                                            dxrow[ci] += acc;
                                        }
                                    }
                                }
                            }
                        }
                    });
}

NodeId Tape::conv2d_valid(NodeId image, NodeId kernels) {
    const Tensor& X = value(image);
    const Tensor& W = value(kernels);
    require_rank("conv2d_valid", X, 3);
    require_rank("conv2d_valid", W, 3);
    const std::size_t batch = X.dim(0), height = X.dim(1), width = X.dim(2);
    const std::size_t kh = W.dim(0), kw = W.dim(1), filters = W.dim(2);
    if (height < kh || width < kw)
        shape_fail("conv2d_valid", "image " + shape_to_string(X.shape()) + " kernels " +
                                       shape_to_string(W.shape()));
    const std::size_t oh = height - kh + 1, ow = width - kw + 1;

    Tensor out({batch, oh, ow, filters});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xbase = X.data() + b * height * width;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                double* orow = out.data() + ((b * oh + i) * ow + j) * filters;
                for (std::size_t di = 0; di < kh; ++di) {
                    const double* xrow = xbase + (i + di) * width + j;
                    const double* wbase = W.data() + di * kw * filters;
                    for (std::size_t dj = 0; dj < kw; ++dj) {
                        const double v = xrow[dj];
                        if (v == 0.0) continue;
                        const double* wrow = wbase + dj * filters;
                        for (std::size_t f = 0; f < filters; ++f) orow[f] += v * wrow[f];
                    }
                }
            }
        }
    }

    return add_node("conv2d_valid", std::move(out), {image, kernels},
                    [image, kernels, batch, height, width, kh, kw, filters, oh, ow](Tape& t, NodeId self) {
                        const Tensor& g = t.grads_[self];
                        const Tensor& X = t.value(image);
                        const Tensor& W = t.value(kernels);
                        if (t.nodes_[kernels].needs_grad) {
                            Tensor& dw = t.grad_buffer(kernels);
                            for (std::size_t b = 0; b < batch; ++b) {
                                const double* xbase = X.data() + b * height * width;
                                for (std::size_t i = 0; i < oh; ++i) {
                                    for (std::size_t j = 0; j < ow; ++j) {
                                        const double* grow = g.data() + ((b * oh + i) * ow + j) * filters;
                                        for (std::size_t di = 0; di < kh; ++di) {
                                            const double* xrow = xbase + (i + di) * width + j;
                                            double* dwbase = dw.data() + di * kw * filters;
                                            for (std::size_t dj = 0; dj < kw; ++dj) {
                                                const double v = xrow[dj];
                                                if (v == 0.0) continue;
                                                double* dwrow = dwbase + dj * filters;
                                                for (std::size_t f = 0; f < filters; ++f)
                                                    dwrow[f] += v * grow[f];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        if (t.nodes_[image].needs_grad) {
                            Tensor& dx = t.grad_buffer(image);
                            for (std::size_t b = 0; b < batch; ++b) {
                                double* dxbase = dx.data() + b * height * width;
                                for (std::size_t i = 0; i < oh; ++i) {
                                    for (std::size_t j = 0; j < ow; ++j) {
                                        const double* grow = g.data() + ((b * oh + i) * ow + j) * filters;
                                        for (std::size_t di = 0; di < kh; ++di) {
                                            double* dxrow = dxbase + (i + di) * width + j;
                                            const double* wbase = W.data() + di * kw * filters;
                                            for (std::size_t dj = 0; dj < kw; ++dj) {
                                                const double* wrow = wbase + dj * filters;
                                                double acc = 0.0;
                                                for (std::size_t f = 0; f < filters; ++f)
                                                    acc += wrow[f] * grow[f];
                                                dxrow[dj] += acc;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
}

NodeId Tape::maxpool1d(NodeId x, std::size_t window, std::size_t stride) {
    const Tensor& X = value(x);
    require_rank("maxpool1d", X, 3);
    if (window == 0 || stride == 0) fail("bad-config", "maxpool1d window/stride must be positive");
    const std::size_t batch = X.dim(0), len = X.dim(1), chans = X.dim(2);
    if (len < window)
        shape_fail("maxpool1d", "input length " + std::to_string(len) + " < window " +
                                    std::to_string(window));
    const std::size_t olen = (len - window) / stride + 1;

    auto argmax = std::make_shared<std::vector<std::uint32_t>>(batch * olen * chans);
    Tensor out({batch, olen, chans});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t0 = 0; t0 < olen; ++t0) {
            const std::size_t start = t0 * stride;
            double* orow = out.data() + (b * olen + t0) * chans;
            std::uint32_t* arow = argmax->data() + (b * olen + t0) * chans;
            for (std::size_t c = 0; c < chans; ++c) {
                double best = X.at(b, start, c);
                std::size_t best_at = start;
                for (std::size_t k = 1; k < window; ++k) {
                    const double v = X.at(b, start + k, c);
                    if (v > best) { // ties keep the first maximal index
                        best = v;
                        best_at = start + k;
                    }
                }
                orow[c] = best;
                arow[c] = static_cast<std::uint32_t>(best_at);
            }
        }
    }

    return add_node("maxpool1d", std::move(out), {x},
                    [x, argmax, chans](Tape& t, NodeId self) {
                        if (!t.nodes_[x].needs_grad) return;
                        const Tensor& g = t.grads_[self];
                        Tensor& dx = t.grad_buffer(x);
                        const std::size_t batch = g.dim(0), olen = g.dim(1);
                        for (std::size_t b = 0; b < batch; ++b) {
                            for (std::size_t t0 = 0; t0 < olen; ++t0) {
                                const double* grow = g.data() + (b * olen + t0) * chans;
                                const std::uint32_t* arow = argmax->data() + (b * olen + t0) * chans;
                                for (std::size_t c = 0; c < chans; ++c)
                                    dx.at(b, arow[c], c) += grow[c];
                            }
                        }
                    });
}

NodeId Tape::global_maxpool(NodeId x) {
    const Tensor& X = value(x);
    if (X.rank() < 3)
        shape_fail("global_maxpool", "expected rank >= 3, got " + shape_to_string(X.shape()));
    const std::size_t batch = X.dim(0), chans = X.dim(X.rank() - 1);
    const std::size_t mid = X.size() / (batch * chans);

    auto argmax = std::make_shared<std::vector<std::uint32_t>>(batch * chans);
    Tensor out({batch, chans});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xbase = X.data() + b * mid * chans;
        double* orow = out.data() + b * chans;
        std::uint32_t* arow = argmax->data() + b * chans;
        for (std::size_t c = 0; c < chans; ++c) {
            double best = xbase[c];
            std::size_t best_at = 0;
            for (std::size_t m = 1; m < mid; ++m) {
                const double v = xbase[m * chans + c];
                if (v > best) {
                    best = v;
                    best_at = m;
                }
            }
            orow[c] = best;
            arow[c] = static_cast<std::uint32_t>(best_at);
        }
    }

    return add_node("global_maxpool", std::move(out), {x},
                    [x, argmax, mid, chans](Tape& t, NodeId self) {
                        if (!t.nodes_[x].needs_grad) return;
                        const Tensor& g = t.grads_[self];
                        Tensor& dx = t.grad_buffer(x);
                        const std::size_t batch = g.dim(0);
                        for (std::size_t b = 0; b < batch; ++b) {
                            const double* grow = g.data() + b * chans;
                            const std::uint32_t* arow = argmax->data() + b * chans;
                            double* dxbase = dx.data() + b * mid * chans;
                            for (std::size_t c = 0; c < chans; ++c)
                                dxbase[arow[c] * chans + c] += grow[c];
                        }
                    });
}

NodeId Tape::concat(const std::vector<NodeId>& parts, std::size_t axis) {
    if (parts.empty()) fail("bad-config", "concat of zero tensors");
    const Tensor& first = value(parts[0]);
    const std::size_t rank = first.rank();
    if (axis >= rank)
        shape_fail("concat", "axis " + std::to_string(axis) + " out of range for rank " +
                                 std::to_string(rank));
    Shape out_shape = first.shape();
    std::size_t axis_total = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.rank() != rank) shape_fail("concat", "rank mismatch");
        for (std::size_t d = 0; d < rank; ++d)
            if (d != axis && t.dim(d) != first.dim(d))
                shape_fail("concat", shape_to_string(t.shape()) + " vs " +
                                         shape_to_string(first.shape()));
        axis_total += t.dim(axis);
    }
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];

    Tensor out(out_shape);
    std::size_t offset = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        const std::size_t span = t.dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(t.data() + o * span, t.data() + (o + 1) * span,
                      out.data() + o * axis_total * inner + offset);
        offset += span;
    }

    auto part_list = std::make_shared<std::vector<NodeId>>(parts);
    return add_node("concat", std::move(out), parts,
                    [part_list, outer, inner, axis_total, axis](Tape& t, NodeId self) {
                        const Tensor& g = t.grads_[self];
                        std::size_t offset = 0;
                        for (NodeId p : *part_list) {
                            const std::size_t span = t.value(p).dim(axis) * inner;
                            if (t.nodes_[p].needs_grad) {
                                Tensor& dp = t.grad_buffer(p);
                                for (std::size_t o = 0; o < outer; ++o) {
                                    const double* src = g.data() + o * axis_total * inner + offset;
                                    double* dst = dp.data() + o * span;
                                    for (std::size_t i = 0; i < span; ++i) dst[i] += src[i];
                                }
                            }
                            offset += span;
                        }
                    });
}

// ---------------------------------------------------------------------------
// slicing / stacking

NodeId Tape::slice_cols(NodeId x, std::size_t from, std::size_t to) {
    const Tensor& X = value(x);
    require_rank("slice_cols", X, 2);
    if (from >= to || to > X.dim(1))
        shape_fail("slice_cols", "[" + std::to_string(from) + ", " + std::to_string(to) +
                                     ") of " + shape_to_string(X.shape()));
    const std::size_t rows = X.dim(0), cols = X.dim(1), width = to - from;
    Tensor out({rows, width});
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(X.data() + r * cols + from, X.data() + r * cols + to, out.data() + r * width);
    return add_node("slice_cols", std::move(out), {x},
                    [x, from, cols, width](Tape& t, NodeId self) {
                        if (!t.nodes_[x].needs_grad) return;
                        const Tensor& g = t.grads_[self];
                        Tensor& dx = t.grad_buffer(x);
                        const std::size_t rows = g.dim(0);
                        for (std::size_t r = 0; r < rows; ++r) {
                            const double* src = g.data() + r * width;
                            double* dst = dx.data() + r * cols + from;
                            for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                        }
                    });
}

NodeId Tape::slice_time(NodeId seq, std::size_t t_index) {
    const Tensor& X = value(seq);
    require_rank("slice_time", X, 3);
    const std::size_t batch = X.dim(0), len = X.dim(1), chans = X.dim(2);
    if (t_index >= len)
        shape_fail("slice_time", "t " + std::to_string(t_index) + " >= length " + std::to_string(len));
    Tensor out({batch, chans});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = X.data() + (b * len + t_index) * chans;
        std::copy(src, src + chans, out.data() + b * chans);
    }
    return add_node("slice_time", std::move(out), {seq},
                    [seq, t_index, len, chans](Tape& t, NodeId self) {
                        if (!t.nodes_[seq].needs_grad) return;
                        const Tensor& g = t.grads_[self];
                        Tensor& dx = t.grad_buffer(seq);
                        const std::size_t batch = g.dim(0);
                        for (std::size_t b = 0; b < batch; ++b) {
                            const double* src = g.data() + b * chans;
                            double* dst = dx.data() + (b * len + t_index) * chans;
                            for (std::size_t i = 0; i < chans; ++i) dst[i] += src[i];
                        }
                    });
}

NodeId Tape::stack_time(const std::vector<NodeId>& steps) {
    if (steps.empty()) fail("bad-config", "stack_time of zero steps");
    const Tensor& first = value(steps[0]);
    require_rank("stack_time", first, 2);
    const std::size_t batch = first.dim(0), chans = first.dim(1), len = steps.size();
    for (NodeId s : steps)
        if (!value(s).same_shape(first)) shape_fail("stack_time", "inconsistent step shapes");

    Tensor out({batch, len, chans});
    for (std::size_t ti = 0; ti < len; ++ti) {
        const Tensor& t = value(steps[ti]);
        for (std::size_t b = 0; b < batch; ++b)
            std::copy(t.data() + b * chans, t.data() + (b + 1) * chans,
                      out.data() + (b * len + ti) * chans);
    }
    auto step_list = std::make_shared<std::vector<NodeId>>(steps);
    return add_node("stack_time", std::move(out), steps,
                    [step_list, batch, chans](Tape& t, NodeId self) {
                        const Tensor& g = t.grads_[self];
                        const std::size_t len = step_list->size();
                        for (std::size_t ti = 0; ti < len; ++ti) {
                            const NodeId s = (*step_list)[ti];
                            if (!t.nodes_[s].needs_grad) continue;
                            Tensor& ds = t.grad_buffer(s);
                            for (std::size_t b = 0; b < batch; ++b) {
                                const double* src = g.data() + (b * len + ti) * chans;
                                double* dst = ds.data() + b * chans;
                                for (std::size_t i = 0; i < chans; ++i) dst[i] += src[i];
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// recurrent

Tape::LstmOut Tape::lstm_cell(NodeId x, NodeId h_prev, NodeId c_prev, NodeId wx, NodeId wh,
                              NodeId bias) {
    const Tensor& X = value(x);
    const Tensor& H = value(h_prev);
    const Tensor& C = value(c_prev);
    const Tensor& WX = value(wx);
    const Tensor& WH = value(wh);
    const Tensor& B = value(bias);
    require_rank("lstm_cell", X, 2);
    require_rank("lstm_cell", H, 2);
    require_rank("lstm_cell", C, 2);
    const std::size_t batch = X.dim(0), in_dim = X.dim(1), hidden = H.dim(1);
    if (H.dim(0) != batch || C.dim(0) != batch || C.dim(1) != hidden ||
        WX.rank() != 2 || WX.dim(0) != in_dim || WX.dim(1) != 4 * hidden ||
        WH.rank() != 2 || WH.dim(0) != hidden || WH.dim(1) != 4 * hidden ||
        B.rank() != 1 || B.dim(0) != 4 * hidden)
        shape_fail("lstm_cell", "x " + shape_to_string(X.shape()) + " h " +
                                    shape_to_string(H.shape()) + " wx " + shape_to_string(WX.shape()) +
                                    " wh " + shape_to_string(WH.shape()));
    const std::size_t gdim = 4 * hidden;

    // pre-activations, then gate order [i | f | g | o]
    auto gates = std::make_shared<Tensor>(Shape{batch, gdim});
    auto tanh_c = std::make_shared<Tensor>(Shape{batch, hidden});
    Tensor out({batch, 2 * hidden});

    for (std::size_t b = 0; b < batch; ++b) {
        double* arow = gates->data() + b * gdim;
        for (std::size_t j = 0; j < gdim; ++j) arow[j] = B[j];
        const double* xrow = X.data() + b * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double v = xrow[i];
            if (v == 0.0) continue;
            const double* wrow = WX.data() + i * gdim;
            for (std::size_t j = 0; j < gdim; ++j) arow[j] += v * wrow[j];
        }
        const double* hrow = H.data() + b * hidden;
        for (std::size_t i = 0; i < hidden; ++i) {
            const double v = hrow[i];
            if (v == 0.0) continue;
            const double* wrow = WH.data() + i * gdim;
            for (std::size_t j = 0; j < gdim; ++j) arow[j] += v * wrow[j];
        }
        const double* crow = C.data() + b * hidden;
        double* orow = out.data() + b * 2 * hidden;
        double* tcrow = tanh_c->data() + b * hidden;
        for (std::size_t j = 0; j < hidden; ++j) {
            const double gi = num::sigmoid(arow[j]);
            const double gf = num::sigmoid(arow[hidden + j]);
            const double gg = std::tanh(arow[2 * hidden + j]);
            const double go = num::sigmoid(arow[3 * hidden + j]);
            arow[j] = gi;
            arow[hidden + j] = gf;
            arow[2 * hidden + j] = gg;
            arow[3 * hidden + j] = go;
            const double c_new = gf * crow[j] + gi * gg;
            const double tc = std::tanh(c_new);
            tcrow[j] = tc;
            orow[j] = go * tc;             // h'
            orow[hidden + j] = c_new;      // c'
        }
    }

    NodeId hc = add_node(
        "lstm_cell", std::move(out), {x, h_prev, c_prev, wx, wh, bias},
        [x, h_prev, c_prev, wx, wh, bias, gates, tanh_c, batch, in_dim, hidden, gdim](Tape& t, NodeId self) {
            const Tensor& g = t.grads_[self];
            const Tensor& X = t.value(x);
            const Tensor& H = t.value(h_prev);
            const Tensor& C = t.value(c_prev);
            const Tensor& WX = t.value(wx);
            const Tensor& WH = t.value(wh);

            Tensor da({batch, gdim}); // gradient at pre-activations
            const bool need_c_prev = t.nodes_[c_prev].needs_grad;
            Tensor* dc_prev = need_c_prev ? &t.grad_buffer(c_prev) : nullptr;

            for (std::size_t b = 0; b < batch; ++b) {
                const double* grow = g.data() + b * 2 * hidden;
                const double* arow = gates->data() + b * gdim;
                const double* tcrow = tanh_c->data() + b * hidden;
                const double* crow = C.data() + b * hidden;
                double* darow = da.data() + b * gdim;
                for (std::size_t j = 0; j < hidden; ++j) {
                    const double gi = arow[j], gf = arow[hidden + j];
                    const double gg = arow[2 * hidden + j], go = arow[3 * hidden + j];
                    const double tc = tcrow[j];
                    const double gh = grow[j], gc_in = grow[hidden + j];
                    const double dc = gc_in + gh * go * (1.0 - tc * tc);
                    darow[j] = dc * gg * gi * (1.0 - gi);
                    darow[hidden + j] = dc * crow[j] * gf * (1.0 - gf);
                    darow[2 * hidden + j] = dc * gi * (1.0 - gg * gg);
                    darow[3 * hidden + j] = gh * tc * go * (1.0 - go);
                    if (dc_prev) dc_prev->at(b, j) += dc * gf;
                }
            }

            if (t.nodes_[x].needs_grad) {
                Tensor& dx = t.grad_buffer(x);
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* darow = da.data() + b * gdim;
                    double* dxrow = dx.data() + b * in_dim;
                    for (std::size_t i = 0; i < in_dim; ++i) {
                        const double* wrow = WX.data() + i * gdim;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < gdim; ++j) acc += wrow[j] * darow[j];
                        dxrow[i] += acc;
                    }
                }
            }
            if (t.nodes_[h_prev].needs_grad) {
                Tensor& dh = t.grad_buffer(h_prev);
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* darow = da.data() + b * gdim;
                    double* dhrow = dh.data() + b * hidden;
                    for (std::size_t i = 0; i < hidden; ++i) {
                        const double* wrow = WH.data() + i * gdim;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < gdim; ++j) acc += wrow[j] * darow[j];
                        dhrow[i] += acc;
                    }
                }
            }
            if (t.nodes_[wx].needs_grad) {
                Tensor& dwx = t.grad_buffer(wx);
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* xrow = X.data() + b * in_dim;
                    const double* darow = da.data() + b * gdim;
                    for (std::size_t i = 0; i < in_dim; ++i) {
                        const double v = xrow[i];
                        if (v == 0.0) continue;
                        double* drow = dwx.data() + i * gdim;
                        for (std::size_t j = 0; j < gdim; ++j) drow[j] += v * darow[j];
                    }
                }
            }
            if (t.nodes_[wh].needs_grad) {
                Tensor& dwh = t.grad_buffer(wh);
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* hrow = H.data() + b * hidden;
                    const double* darow = da.data() + b * gdim;
                    for (std::size_t i = 0; i < hidden; ++i) {
                        const double v = hrow[i];
                        if (v == 0.0) continue;
                        double* drow = dwh.data() + i * gdim;
                        for (std::size_t j = 0; j < gdim; ++j) drow[j] += v * darow[j];
                    }
                }
            }
            if (t.nodes_[bias].needs_grad) {
                Tensor& db = t.grad_buffer(bias);
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* darow = da.data() + b * gdim;
                    for (std::size_t j = 0; j < gdim; ++j) db[j] += darow[j];
                }
            }
        });

    LstmOut split;
    split.h = slice_cols(hc, 0, hidden);
    split.c = slice_cols(hc, hidden, 2 * hidden);
    return split;
}

NodeId Tape::lstm_scan(NodeId seq, NodeId wx, NodeId wh, NodeId bias) {
    const Tensor& X = value(seq);
    require_rank("lstm_scan", X, 3);
    const std::size_t batch = X.dim(0), len = X.dim(1);
    const std::size_t hidden = value(bias).dim(0) / 4;

    NodeId h = input(Tensor({batch, hidden}));
    NodeId c = input(Tensor({batch, hidden}));
    std::vector<NodeId> outputs(len);
    for (std::size_t t = 0; t < len; ++t) {
        LstmOut step = lstm_cell(slice_time(seq, t), h, c, wx, wh, bias);
        h = step.h;
        c = step.c;
        outputs[t] = h;
    }
    return stack_time(outputs);
}

NodeId Tape::bidirectional_scan(NodeId seq, NodeId wx_f, NodeId wh_f, NodeId b_f,
                                NodeId wx_b, NodeId wh_b, NodeId b_b) {
    const Tensor& X = value(seq);
    require_rank("bidirectional_scan", X, 3);
    const std::size_t batch = X.dim(0), len = X.dim(1);
    const std::size_t hidden = value(b_f).dim(0) / 4;
    if (value(b_b).dim(0) != 4 * hidden)
        shape_fail("bidirectional_scan", "direction hidden sizes differ");

    std::vector<NodeId> slices(len);
    for (std::size_t t = 0; t < len; ++t) slices[t] = slice_time(seq, t);

    std::vector<NodeId> fwd(len), bwd(len);
    NodeId h = input(Tensor({batch, hidden}));
    NodeId c = input(Tensor({batch, hidden}));
    for (std::size_t t = 0; t < len; ++t) {
        LstmOut step = lstm_cell(slices[t], h, c, wx_f, wh_f, b_f);
        h = step.h;
        c = step.c;
        fwd[t] = h;
    }
    h = input(Tensor({batch, hidden}));
    c = input(Tensor({batch, hidden}));
    for (std::size_t t = len; t-- > 0;) {
        LstmOut step = lstm_cell(slices[t], h, c, wx_b, wh_b, b_b);
        h = step.h;
        c = step.c;
        bwd[t] = h;
    }

    std::vector<NodeId> joined(len);
    for (std::size_t t = 0; t < len; ++t) joined[t] = concat({fwd[t], bwd[t]}, 1);
    return stack_time(joined);
}

// ---------------------------------------------------------------------------
// reductions / loss

NodeId Tape::sum(NodeId x) {
    const Tensor& X = value(x);
    double total = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) total += X[i];
    return add_node("sum", Tensor::scalar(total), {x}, [x](Tape& t, NodeId self) {
        if (!t.nodes_[x].needs_grad) return;
        const double g = t.grads_[self][0];
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
}

NodeId Tape::weighted_sum(NodeId x, Tensor weights) {
    const Tensor& X = value(x);
    if (weights.size() != X.size())
        shape_fail("weighted_sum", shape_to_string(X.shape()) + " vs " +
                                       shape_to_string(weights.shape()));
    double total = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) total += X[i] * weights[i];
    auto w = std::make_shared<Tensor>(std::move(weights));
    return add_node("weighted_sum", Tensor::scalar(total), {x}, [x, w](Tape& t, NodeId self) {
        if (!t.nodes_[x].needs_grad) return;
        const double g = t.grads_[self][0];
        Tensor& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * (*w)[i];
    });
}

NodeId Tape::bce_with_logits_weighted(NodeId logits, const Tensor& targets,
                                      const std::vector<double>& pos_weight,
                                      const std::vector<double>& neg_weight) {
    const Tensor& Z = value(logits);
    require_rank("bce_with_logits_weighted", Z, 2);
    if (!Z.same_shape(targets))
        shape_fail("bce_with_logits_weighted", "logits " + shape_to_string(Z.shape()) +
                                                   " vs targets " + shape_to_string(targets.shape()));
    const std::size_t rows = Z.dim(0), cols = Z.dim(1);
    if (pos_weight.size() != cols || neg_weight.size() != cols)
        shape_fail("bce_with_logits_weighted", "weights must have one entry per column");
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i] != 0.0 && targets[i] != 1.0)
            fail("non-binary-target", "target value " + std::to_string(targets[i]) +
                                          " at flat index " + std::to_string(i));

    const double cells = static_cast<double>(rows * cols);
    const double mean = num::weighted_bce_sum(Z, targets, pos_weight, neg_weight) / cells;

    auto tgt = std::make_shared<Tensor>(targets);
    auto wp = std::make_shared<std::vector<double>>(pos_weight);
    auto wn = std::make_shared<std::vector<double>>(neg_weight);
    return add_node("bce_with_logits_weighted", Tensor::scalar(mean), {logits},
                    [logits, tgt, wp, wn, rows, cols, cells](Tape& t, NodeId self) {
                        if (!t.nodes_[logits].needs_grad) return;
                        const double g = t.grads_[self][0] / cells;
                        const Tensor& Z = t.value(logits);
                        Tensor& dz = t.grad_buffer(logits);
                        for (std::size_t b = 0; b < rows; ++b) {
                            for (std::size_t d = 0; d < cols; ++d) {
                                const double tv = tgt->at(b, d);
                                const double w = (tv == 1.0) ? (*wp)[d] : (*wn)[d];
                                dz.at(b, d) += g * w * (num::sigmoid(Z.at(b, d)) - tv);
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------

void Tape::backward(NodeId loss, double seed) {
    if (consumed_) fail("stale-tape", "backward already ran on this tape");
    consumed_ = true;
    if (loss >= nodes_.size()) fail("bad-config", "backward on unknown node");
    if (!nodes_[loss].value.is_scalar())
        fail("shape-mismatch", "backward requires a scalar loss, got " +
                                   shape_to_string(nodes_[loss].value.shape()));

    grads_.resize(nodes_.size());
    grad_buffer(loss)[0] = seed;

    for (NodeId id = nodes_.size(); id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.needs_grad || !has_grad(id)) continue;
        if (node.backprop) node.backprop(*this, id);
        if (node.bound) {
            Tensor& acc = node.bound->grad;
            const Tensor& g = grads_[id];
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
        grads_[id] = Tensor(); // consumed; free eagerly
    }
}

} // namespace avp
