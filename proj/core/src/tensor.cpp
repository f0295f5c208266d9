#include "vapdiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace vapdiff {

namespace {

std::atomic<uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

void ensure_grad(TensorNode& n) {
    if (n.grad.size() != n.value.size()) {
        n.grad.assign(n.value.size(), 0.0);
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError(std::string(op) + ": shape mismatch (" +
                              std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

std::vector<double> transpose_buf(const double* a, int rows, int cols) {
    std::vector<double> t(static_cast<size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            t[static_cast<size_t>(j) * rows + i] = a[static_cast<size_t>(i) * cols + j];
        }
    }
    return t;
}

// c(m,n) += a(m,k) * b(k,n). The ikj order keeps the inner loop unit-stride
// so it vectorizes without reassociating sums.
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            const double* bk = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) {
                ci[j] += av * bk[j];
            }
        }
    }
}

}  // namespace

Tensor make_op(int rows, int cols, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn) {
    Tensor t;
    auto node = std::make_shared<TensorNode>();
    node->rows = rows;
    node->cols = cols;
    node->value.resize(static_cast<size_t>(rows) * cols);
    node->id = g_next_id.fetch_add(1);
    if (g_grad_enabled) {
        bool needs = false;
        for (const auto& p : parents) {
            if (p.node()->requires_grad) {
                needs = true;
                break;
            }
        }
        if (needs) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backward_fn = std::move(backward_fn);
        }
    }
    t.node_ = std::move(node);
    return t;
}

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
    Tensor t = make_op(rows, cols, {}, nullptr);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(int rows, int cols, double fill, bool requires_grad) {
    Tensor t = zeros(rows, cols, requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), fill);
    return t;
}

Tensor Tensor::from_values(int rows, int cols, std::vector<double> values, bool requires_grad) {
    if (values.size() != static_cast<size_t>(rows) * cols) {
        throw ValidationError("from_values: element count does not match shape");
    }
    Tensor t = zeros(rows, cols, requires_grad);
    t.node_->value = std::move(values);
    return t;
}

Tensor Tensor::randn(int rows, int cols, RandomStream& rng, double scale, bool requires_grad) {
    Tensor t = zeros(rows, cols, requires_grad);
    for (double& x : t.node_->value) {
        x = rng.normal() * scale;
    }
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_values(1, 1, {v}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) {
        throw ValidationError("item(): tensor is not a scalar");
    }
    return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
    ensure_grad(*node_);
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::backward() {
    if (size() != 1) {
        throw ValidationError("backward(): root must be a scalar");
    }
    // Collect reachable nodes, then run in decreasing creation order. Parents
    // are always created before children, so this is a valid topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p.node()->requires_grad && seen.insert(p.node()).second) {
                stack.push_back(p.node());
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });
    ensure_grad(*node_);
    node_->grad[0] += 1.0;
    for (TensorNode* n : order) {
        if (n->backward_fn) {
            for (const auto& p : n->parents) {
                ensure_grad(*p.node());
            }
            n->backward_fn(*n);
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
    g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    g_grad_enabled = previous_;
}

bool grad_enabled() {
    return g_grad_enabled;
}

void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n) {
    std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
    matmul_acc(a, b, c, m, k, n);
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
    // c(m,k) += a(m,n) * b(k,n)^T
    std::vector<double> bt = transpose_buf(b, k, n);  // (n,k)
    matmul_acc(a, bt.data(), c, m, n, k);
}

void matmul_tn_acc(const double* a, const double* b, double* c, int k, int m, int n) {
    // c(k,n) += a(m,k)^T * b(m,n)
    std::vector<double> at = transpose_buf(a, m, k);  // (k,m)
    matmul_acc(at.data(), b, c, k, m, n);
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_op(a.rows(), a.cols(), {a, b}, [](TensorNode& n) {
        TensorNode* pa = n.parents[0].node();
        TensorNode* pb = n.parents[1].node();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa->grad[i] += n.grad[i];
            pb->grad[i] += n.grad[i];
        }
    });
    const auto& va = a.value();
    const auto& vb = b.value();
    auto& vo = out.mutable_value();
    for (size_t i = 0; i < vo.size(); ++i) {
        vo[i] = va[i] + vb[i];
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_op(a.rows(), a.cols(), {a, b}, [](TensorNode& n) {
        TensorNode* pa = n.parents[0].node();
        TensorNode* pb = n.parents[1].node();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa->grad[i] += n.grad[i];
            pb->grad[i] -= n.grad[i];
        }
    });
    const auto& va = a.value();
    const auto& vb = b.value();
    auto& vo = out.mutable_value();
    for (size_t i = 0; i < vo.size(); ++i) {
        vo[i] = va[i] - vb[i];
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_op(a.rows(), a.cols(), {a, b}, [](TensorNode& n) {
        TensorNode* pa = n.parents[0].node();
        TensorNode* pb = n.parents[1].node();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa->grad[i] += n.grad[i] * pb->value[i];
            pb->grad[i] += n.grad[i] * pa->value[i];
        }
    });
    const auto& va = a.value();
    const auto& vb = b.value();
    auto& vo = out.mutable_value();
    for (size_t i = 0; i < vo.size(); ++i) {
        vo[i] = va[i] * vb[i];
    }
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = make_op(a.rows(), a.cols(), {a}, [s](TensorNode& n) {
        TensorNode* pa = n.parents[0].node();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa->grad[i] += n.grad[i] * s;
        }
    });
    const auto& va = a.value();
    auto& vo = out.mutable_value();
    for (size_t i = 0; i < vo.size(); ++i) {
        vo[i] = va[i] * s;
    }
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = make_op(a.rows(), a.cols(), {a}, [](TensorNode& n) {
        TensorNode* pa = n.parents[0].node();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa->grad[i] += n.grad[i];
        }
    });
    const auto& va = a.value();
    auto& vo = out.mutable_value();
    for (size_t i = 0; i < vo.size(); ++i) {
        vo[i] = va[i] + s;
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                              " vs " + std::to_string(b.rows()) + ")");
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = make_op(m, n, {a, b}, [m, k, n](TensorNode& node) {
        TensorNode* pa = node.parents[0].node();
        TensorNode* pb = node.parents[1].node();
        matmul_nt_acc(node.grad.data(), pb->value.data(), pa->grad.data(), m, n, k);
        matmul_tn_acc(pa->value.data(), node.grad.data(), pb->grad.data(), k, m, n);
    });
    matmul_raw(a.value().data(), b.value().data(), out.mutable_value().data(), m, k, n);
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.cols() != w.rows()) {
        throw ValidationError("linear: input width " + std::to_string(x.cols()) +
                              " does not match weight rows " + std::to_string(w.rows()));
    }
    if (bias.rows() != 1 || bias.cols() != w.cols()) {
        throw ValidationError("linear: bias shape must be 1x" + std::to_string(w.cols()));
    }
    const int m = x.rows(), k = x.cols(), n = w.cols();
    Tensor out = make_op(m, n, {x, w, bias}, [m, k, n](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        TensorNode* pw = node.parents[1].node();
        TensorNode* pb = node.parents[2].node();
        matmul_nt_acc(node.grad.data(), pw->value.data(), px->grad.data(), m, n, k);
        matmul_tn_acc(px->value.data(), node.grad.data(), pw->grad.data(), k, m, n);
        for (int i = 0; i < m; ++i) {
            const double* gi = node.grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                pb->grad[j] += gi[j];
            }
        }
    });
    auto& vo = out.mutable_value();
    matmul_raw(x.value().data(), w.value().data(), vo.data(), m, k, n);
    const auto& vb = bias.value();
    for (int i = 0; i < m; ++i) {
        double* oi = vo.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            oi[j] += vb[j];
        }
    }
    return out;
}

Tensor broadcast_add_row(const Tensor& x, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw ValidationError("broadcast_add_row: row must be 1x" + std::to_string(x.cols()));
    }
    const int m = x.rows(), n = x.cols();
    Tensor out = make_op(m, n, {x, row}, [m, n](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        TensorNode* pr = node.parents[1].node();
        for (size_t i = 0; i < node.grad.size(); ++i) {
            px->grad[i] += node.grad[i];
        }
        for (int i = 0; i < m; ++i) {
            const double* gi = node.grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                pr->grad[j] += gi[j];
            }
        }
    });
    const auto& vx = x.value();
    const auto& vr = row.value();
    auto& vo = out.mutable_value();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            vo[static_cast<size_t>(i) * n + j] = vx[static_cast<size_t>(i) * n + j] + vr[j];
        }
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = make_op(x.rows(), x.cols(), {x}, [](TensorNode& n) {
        TensorNode* px = n.parents[0].node();
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double v = px->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            px->grad[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
    const auto& vx = x.value();
    auto& vo = out.mutable_value();
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (size_t i = 0; i < vo.size(); ++i) {
        vo[i] = vx[i] * 0.5 * (1.0 + std::erf(vx[i] * inv_sqrt2));
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = make_op(x.rows(), x.cols(), {x}, [](TensorNode& n) {
        TensorNode* px = n.parents[0].node();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            if (px->value[i] > 0.0) {
                px->grad[i] += n.grad[i];
            }
        }
    });
    const auto& vx = x.value();
    auto& vo = out.mutable_value();
    for (size_t i = 0; i < vo.size(); ++i) {
        vo[i] = vx[i] > 0.0 ? vx[i] : 0.0;
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    const int m = x.rows(), n = x.cols();
    Tensor out = make_op(m, n, {x}, [m, n](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        for (int i = 0; i < m; ++i) {
            const double* y = node.value.data() + static_cast<size_t>(i) * n;
            const double* gy = node.grad.data() + static_cast<size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) {
                dot += y[j] * gy[j];
            }
            double* gx = px->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                gx[j] += y[j] * (gy[j] - dot);
            }
        }
    });
    const auto& vx = x.value();
    auto& vo = out.mutable_value();
    for (int i = 0; i < m; ++i) {
        const double* xi = vx.data() + static_cast<size_t>(i) * n;
        double* oi = vo.data() + static_cast<size_t>(i) * n;
        double mx = xi[0];
        for (int j = 1; j < n; ++j) {
            mx = std::max(mx, xi[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            oi[j] = std::exp(xi[j] - mx);
            sum += oi[j];
        }
        for (int j = 0; j < n; ++j) {
            oi[j] /= sum;
        }
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const int m = x.rows(), n = x.cols();
    if (gain.cols() != n || bias.cols() != n || gain.rows() != 1 || bias.rows() != 1) {
        throw ValidationError("layer_norm: gain/bias must be 1x" + std::to_string(n));
    }
    // Keep normalized activations for backward.
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
    auto inv_sigma = std::make_shared<std::vector<double>>(m);
    Tensor out = make_op(m, n, {x, gain, bias}, [m, n, xhat, inv_sigma](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        TensorNode* pg = node.parents[1].node();
        TensorNode* pb = node.parents[2].node();
        const auto& h = *xhat;
        for (int i = 0; i < m; ++i) {
            const double* gy = node.grad.data() + static_cast<size_t>(i) * n;
            const double* hi = h.data() + static_cast<size_t>(i) * n;
            double mean_g = 0.0, mean_gh = 0.0;
            for (int j = 0; j < n; ++j) {
                const double g = gy[j] * pg->value[j];
                mean_g += g;
                mean_gh += g * hi[j];
            }
            mean_g /= n;
            mean_gh /= n;
            const double is = (*inv_sigma)[i];
            double* gx = px->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double g = gy[j] * pg->value[j];
                gx[j] += is * (g - mean_g - hi[j] * mean_gh);
                pg->grad[j] += gy[j] * hi[j];
                pb->grad[j] += gy[j];
            }
        }
    });
    const auto& vx = x.value();
    const auto& vg = gain.value();
    const auto& vb = bias.value();
    auto& vo = out.mutable_value();
    for (int i = 0; i < m; ++i) {
        const double* xi = vx.data() + static_cast<size_t>(i) * n;
        double mean = 0.0;
        for (int j = 0; j < n; ++j) {
            mean += xi[j];
        }
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = xi[j] - mean;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[i] = is;
        double* hi = xhat->data() + static_cast<size_t>(i) * n;
        double* oi = vo.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            hi[j] = (xi[j] - mean) * is;
            oi[j] = hi[j] * vg[j] + vb[j];
        }
    }
    return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    const int nq = q.rows(), d = q.cols(), nk = k.rows();
    if (k.cols() != d || v.cols() != d || v.rows() != nk) {
        throw ValidationError("attention: q/k/v widths must match and k/v row counts agree");
    }
    if (heads < 1 || d % heads != 0) {
        throw ValidationError("attention: width " + std::to_string(d) +
                              " not divisible by heads " + std::to_string(heads));
    }
    const int dh = d / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    // Attention weights per head, kept for backward.
    auto weights = std::make_shared<std::vector<std::vector<double>>>(
        heads, std::vector<double>(static_cast<size_t>(nq) * nk));

    auto head_slice = [dh, d](const std::vector<double>& src, int rows, int h) {
        std::vector<double> out(static_cast<size_t>(rows) * dh);
        for (int i = 0; i < rows; ++i) {
            const double* s = src.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * dh;
            std::copy(s, s + dh, out.data() + static_cast<size_t>(i) * dh);
        }
        return out;
    };

    Tensor out = make_op(
        nq, d, {q, k, v},
        [nq, nk, d, dh, heads, inv_scale, weights, head_slice](TensorNode& node) {
            TensorNode* pq = node.parents[0].node();
            TensorNode* pk = node.parents[1].node();
            TensorNode* pv = node.parents[2].node();
            for (int h = 0; h < heads; ++h) {
                std::vector<double> qh = head_slice(pq->value, nq, h);
                std::vector<double> kh = head_slice(pk->value, nk, h);
                std::vector<double> vh = head_slice(pv->value, nk, h);
                std::vector<double> gout(static_cast<size_t>(nq) * dh);
                for (int i = 0; i < nq; ++i) {
                    const double* g = node.grad.data() + static_cast<size_t>(i) * d +
                                      static_cast<size_t>(h) * dh;
                    std::copy(g, g + dh, gout.data() + static_cast<size_t>(i) * dh);
                }
                const auto& a = (*weights)[h];
                // dV_h = A^T * dOut_h
                std::vector<double> gv(static_cast<size_t>(nk) * dh, 0.0);
                matmul_tn_acc(a.data(), gout.data(), gv.data(), nk, nq, dh);
                // dA = dOut_h * V_h^T
                std::vector<double> ga(static_cast<size_t>(nq) * nk, 0.0);
                matmul_nt_acc(gout.data(), vh.data(), ga.data(), nq, dh, nk);
                // dS from softmax
                std::vector<double> gs(static_cast<size_t>(nq) * nk);
                for (int i = 0; i < nq; ++i) {
                    const double* ai = a.data() + static_cast<size_t>(i) * nk;
                    const double* gai = ga.data() + static_cast<size_t>(i) * nk;
                    double dot = 0.0;
                    for (int j = 0; j < nk; ++j) {
                        dot += ai[j] * gai[j];
                    }
                    double* gsi = gs.data() + static_cast<size_t>(i) * nk;
                    for (int j = 0; j < nk; ++j) {
                        gsi[j] = ai[j] * (gai[j] - dot) * inv_scale;
                    }
                }
                // dQ_h = dS * K_h ; dK_h = dS^T * Q_h
                std::vector<double> gq(static_cast<size_t>(nq) * dh, 0.0);
                matmul_acc(gs.data(), kh.data(), gq.data(), nq, nk, dh);
                std::vector<double> gk(static_cast<size_t>(nk) * dh, 0.0);
                matmul_tn_acc(gs.data(), qh.data(), gk.data(), nk, nq, dh);
                for (int i = 0; i < nq; ++i) {
                    double* dst = pq->grad.data() + static_cast<size_t>(i) * d +
                                  static_cast<size_t>(h) * dh;
                    const double* src = gq.data() + static_cast<size_t>(i) * dh;
                    for (int j = 0; j < dh; ++j) {
                        dst[j] += src[j];
                    }
                }
                for (int i = 0; i < nk; ++i) {
                    double* dk = pk->grad.data() + static_cast<size_t>(i) * d +
                                 static_cast<size_t>(h) * dh;
                    double* dv = pv->grad.data() + static_cast<size_t>(i) * d +
                                 static_cast<size_t>(h) * dh;
                    const double* sk = gk.data() + static_cast<size_t>(i) * dh;
                    const double* sv = gv.data() + static_cast<size_t>(i) * dh;
                    for (int j = 0; j < dh; ++j) {
                        dk[j] += sk[j];
                        dv[j] += sv[j];
                    }
                }
            }
        });

    auto& vo = out.mutable_value();
    for (int h = 0; h < heads; ++h) {
        std::vector<double> qh = head_slice(q.value(), nq, h);
        std::vector<double> kh = head_slice(k.value(), nk, h);
        std::vector<double> vh = head_slice(v.value(), nk, h);
        auto& a = (*weights)[h];
        // scores then row softmax
        std::vector<double> s(static_cast<size_t>(nq) * nk, 0.0);
        matmul_nt_acc(qh.data(), kh.data(), s.data(), nq, dh, nk);
        for (int i = 0; i < nq; ++i) {
            double* si = s.data() + static_cast<size_t>(i) * nk;
            double mx = si[0] * inv_scale;
            for (int j = 0; j < nk; ++j) {
                si[j] *= inv_scale;
                mx = std::max(mx, si[j]);
            }
            double sum = 0.0;
            double* ai = a.data() + static_cast<size_t>(i) * nk;
            for (int j = 0; j < nk; ++j) {
                ai[j] = std::exp(si[j] - mx);
                sum += ai[j];
            }
            for (int j = 0; j < nk; ++j) {
                ai[j] /= sum;
            }
        }
        std::vector<double> oh(static_cast<size_t>(nq) * dh, 0.0);
        matmul_acc(a.data(), vh.data(), oh.data(), nq, nk, dh);
        for (int i = 0; i < nq; ++i) {
            double* dst = vo.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * dh;
            std::copy(oh.data() + static_cast<size_t>(i) * dh,
                      oh.data() + static_cast<size_t>(i + 1) * dh, dst);
        }
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ValidationError("concat_rows: no parts");
    }
    const int n = parts[0].cols();
    int total = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) {
            throw ValidationError("concat_rows: column widths differ");
        }
        total += p.rows();
    }
    std::vector<int> row_counts;
    row_counts.reserve(parts.size());
    for (const auto& p : parts) {
        row_counts.push_back(p.rows());
    }
    Tensor out = make_op(total, n, parts, [row_counts, n](TensorNode& node) {
        int r0 = 0;
        for (size_t pi = 0; pi < node.parents.size(); ++pi) {
            TensorNode* p = node.parents[pi].node();
            const size_t cnt = static_cast<size_t>(row_counts[pi]) * n;
            const double* g = node.grad.data() + static_cast<size_t>(r0) * n;
            for (size_t i = 0; i < cnt; ++i) {
                p->grad[i] += g[i];
            }
            r0 += row_counts[pi];
        }
    });
    auto& vo = out.mutable_value();
    int r0 = 0;
    for (const auto& p : parts) {
        std::copy(p.value().begin(), p.value().end(), vo.begin() + static_cast<size_t>(r0) * n);
        r0 += p.rows();
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int start, int count) {
    if (start < 0 || count < 0 || start + count > x.rows()) {
        throw ValidationError("slice_rows: range out of bounds");
    }
    const int n = x.cols();
    Tensor out = make_op(count, n, {x}, [start, count, n](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        double* dst = px->grad.data() + static_cast<size_t>(start) * n;
        for (size_t i = 0; i < static_cast<size_t>(count) * n; ++i) {
            dst[i] += node.grad[i];
        }
    });
    std::copy(x.value().begin() + static_cast<size_t>(start) * n,
              x.value().begin() + static_cast<size_t>(start + count) * n,
              out.mutable_value().begin());
    return out;
}

Tensor mean_rows(const Tensor& x) {
    const int m = x.rows(), n = x.cols();
    Tensor out = make_op(1, n, {x}, [m, n](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        const double inv = 1.0 / m;
        for (int i = 0; i < m; ++i) {
            double* g = px->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                g[j] += node.grad[j] * inv;
            }
        }
    });
    auto& vo = out.mutable_value();
    const auto& vx = x.value();
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) {
            s += vx[static_cast<size_t>(i) * n + j];
        }
        vo[j] = s / m;
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    const int m = x.rows(), n = x.cols();
    Tensor out = make_op(n, m, {x}, [m, n](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) {
                px->grad[static_cast<size_t>(j) * n + i] +=
                    node.grad[static_cast<size_t>(i) * m + j];
            }
        }
    });
    auto& vo = out.mutable_value();
    const auto& vx = x.value();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            vo[static_cast<size_t>(j) * m + i] = vx[static_cast<size_t>(i) * n + j];
        }
    }
    return out;
}

Tensor reshape(const Tensor& x, int rows, int cols) {
    if (rows * cols != x.size()) {
        throw ValidationError("reshape: element count mismatch");
    }
    Tensor out = make_op(rows, cols, {x}, [](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        for (size_t i = 0; i < node.grad.size(); ++i) {
            px->grad[i] += node.grad[i];
        }
    });
    out.mutable_value() = x.value();
    return out;
}

Tensor embed_row(const Tensor& table, int index) {
    if (index < 0 || index >= table.rows()) {
        throw ValidationError("embed_row: index " + std::to_string(index) + " out of range [0, " +
                              std::to_string(table.rows()) + ")");
    }
    const int n = table.cols();
    Tensor out = make_op(1, n, {table}, [index, n](TensorNode& node) {
        TensorNode* pt = node.parents[0].node();
        double* g = pt->grad.data() + static_cast<size_t>(index) * n;
        for (int j = 0; j < n; ++j) {
            g[j] += node.grad[j];
        }
    });
    std::copy(table.value().begin() + static_cast<size_t>(index) * n,
              table.value().begin() + static_cast<size_t>(index + 1) * n,
              out.mutable_value().begin());
    return out;
}

Tensor detach(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols(), false);
    out.mutable_value() = x.value();
    return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    const size_t count = a.value().size();
    Tensor out = make_op(1, 1, {a, b}, [count](TensorNode& node) {
        TensorNode* pa = node.parents[0].node();
        TensorNode* pb = node.parents[1].node();
        const double c = 2.0 * node.grad[0] / static_cast<double>(count);
        for (size_t i = 0; i < count; ++i) {
            const double d = pa->value[i] - pb->value[i];
            pa->grad[i] += c * d;
            pb->grad[i] -= c * d;
        }
    });
    const auto& va = a.value();
    const auto& vb = b.value();
    double s = 0.0;
    for (size_t i = 0; i < count; ++i) {
        const double d = va[i] - vb[i];
        s += d * d;
    }
    out.mutable_value()[0] = s / static_cast<double>(count);
    return out;
}

Tensor sum_all(const Tensor& x) {
    Tensor out = make_op(1, 1, {x}, [](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        for (size_t i = 0; i < px->grad.size(); ++i) {
            px->grad[i] += node.grad[0];
        }
    });
    double s = 0.0;
    for (double v : x.value()) {
        s += v;
    }
    out.mutable_value()[0] = s;
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    const int m = logits.rows(), n = logits.cols();
    if (static_cast<int>(targets.size()) != m) {
        throw ValidationError("cross_entropy: target count must equal row count");
    }
    for (int t : targets) {
        if (t < 0 || t >= n) {
            throw ValidationError("cross_entropy: target class out of range");
        }
    }
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
    Tensor out = make_op(1, 1, {logits}, [m, n, targets, probs](TensorNode& node) {
        TensorNode* px = node.parents[0].node();
        const double c = node.grad[0] / static_cast<double>(m);
        for (int i = 0; i < m; ++i) {
            const double* pi = probs->data() + static_cast<size_t>(i) * n;
            double* gi = px->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                gi[j] += c * (pi[j] - (j == targets[i] ? 1.0 : 0.0));
            }
        }
    });
    const auto& vx = logits.value();
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* xi = vx.data() + static_cast<size_t>(i) * n;
        double mx = xi[0];
        for (int j = 1; j < n; ++j) {
            mx = std::max(mx, xi[j]);
        }
        double sum = 0.0;
        double* pi = probs->data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            pi[j] = std::exp(xi[j] - mx);
            sum += pi[j];
        }
        for (int j = 0; j < n; ++j) {
            pi[j] /= sum;
        }
        total += -(std::log(pi[targets[i]]));
    }
    out.mutable_value()[0] = total / m;
    return out;
}

}  // namespace vapdiff
