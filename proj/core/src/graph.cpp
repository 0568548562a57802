#include "decfd/graph.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace decfd::nn {

namespace {

#ifdef NDEBUG
bool g_value_checks = false;
#else
bool g_value_checks = true;
#endif

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void softmax_into(const double* x, double* y, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        s += y[i];
    }
    for (std::size_t i = 0; i < n; ++i) y[i] /= s;
}

void log_softmax_into(const double* x, double* y, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
}

}  // namespace

void Graph::set_value_checks(bool enabled) { g_value_checks = enabled; }
bool Graph::value_checks() { return g_value_checks; }

NodeId Graph::emplace(Tensor value, std::function<void(Graph&)> back) {
    if (g_value_checks && !value.all_finite()) {
        throw std::runtime_error("graph: non-finite value produced at node " +
                                 std::to_string(nodes_.size()));
    }
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
    return nodes_.size() - 1;
}

Tensor& Graph::grad_buf(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) {
        n.grad = Tensor::zeros(n.value.shape());
    }
    return n.grad;
}

void Graph::clear() {
    nodes_.clear();
    bindings_.clear();
    param_nodes_.clear();
}

NodeId Graph::input(Tensor t) {
    return emplace(std::move(t), nullptr);
}

NodeId Graph::param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    NodeId id = emplace(p.value, nullptr);
    bindings_.emplace_back(id, &p);
    param_nodes_.emplace(&p, id);
    return id;
}

void Graph::backward(NodeId root) {
    assert(nodes_[root].value.size() == 1);
    grad_buf(root).data()[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back && n.grad.size() == n.value.size()) {
            n.back(*this);
        }
    }
    for (auto& [id, p] : bindings_) {
        const Tensor& g = nodes_[id].grad;
        if (g.size() != p->value.size()) continue;  // never touched by backward
        double* dst = p->grad.data();
        const double* src = g.data();
        for (std::size_t k = 0; k < p->grad.size(); ++k) dst[k] += src[k];
    }
}

// ---- elementwise ----

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    assert(va.same_shape(vb));
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, a, b](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* da = g.grad_data(a);
        double* db = g.grad_data(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            da[i] += go[i];
            db[i] += go[i];
        }
    };
    return id;
}

NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    assert(va.same_shape(vb));
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, a, b](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* da = g.grad_data(a);
        double* db = g.grad_data(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            da[i] += go[i];
            db[i] -= go[i];
        }
    };
    return id;
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    assert(va.same_shape(vb));
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, a, b](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& va = g.value(a);
        const Tensor& vb = g.value(b);
        double* da = g.grad_data(a);
        double* db = g.grad_data(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            da[i] += go[i] * vb[i];
            db[i] += go[i] * va[i];
        }
    };
    return id;
}

NodeId Graph::div(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    assert(va.same_shape(vb));
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] / vb[i];
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, a, b](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& va = g.value(a);
        const Tensor& vb = g.value(b);
        double* da = g.grad_data(a);
        double* db = g.grad_data(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            da[i] += go[i] / vb[i];
            db[i] -= go[i] * va[i] / (vb[i] * vb[i]);
        }
    };
    return id;
}

NodeId Graph::scale(NodeId x, double c) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] * c;
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x, c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * c;
    };
    return id;
}

NodeId Graph::add_scalar(NodeId x, double c) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] + c;
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i];
    };
    return id;
}

NodeId Graph::scale_by(NodeId x, NodeId s) {
    const Tensor& vx = value(x);
    assert(value(s).size() == 1);
    const double sv = value(s).item();
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] * sv;
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x, s](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(x);
        const double sv = g.value(s).item();
        double* dx = g.grad_data(x);
        double acc = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) {
            dx[i] += go[i] * sv;
            acc += go[i] * vx[i];
        }
        g.grad_data(s)[0] += acc;
    };
    return id;
}

NodeId Graph::exp(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(vx[i]);
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vo = g.value(id);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * vo[i];
    };
    return id;
}

NodeId Graph::log(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(vx[i]);
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(x);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] / vx[i];
    };
    return id;
}

NodeId Graph::sqrt(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(vx[i]);
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vo = g.value(id);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * 0.5 / vo[i];
    };
    return id;
}

NodeId Graph::square(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] * vx[i];
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(x);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * 2.0 * vx[i];
    };
    return id;
}

NodeId Graph::relu(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] > 0.0 ? vx[i] : 0.0;
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(x);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (vx[i] > 0.0) dx[i] += go[i];
        }
    };
    return id;
}

NodeId Graph::tanh(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(vx[i]);
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vo = g.value(id);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * (1.0 - vo[i] * vo[i]);
    };
    return id;
}

NodeId Graph::sigmoid(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = vx[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-vx[i]))
                              : std::exp(vx[i]) / (1.0 + std::exp(vx[i]));
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vo = g.value(id);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * vo[i] * (1.0 - vo[i]);
    };
    return id;
}

NodeId Graph::softplus(NodeId x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(vx[i]);
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(x);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) {
            const double s = vx[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-vx[i]))
                                          : std::exp(vx[i]) / (1.0 + std::exp(vx[i]));
            dx[i] += go[i] * s;
        }
    };
    return id;
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = vx[i] < lo ? lo : (vx[i] > hi ? hi : vx[i]);
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x, lo, hi](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(x);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (vx[i] >= lo && vx[i] <= hi) dx[i] += go[i];
        }
    };
    return id;
}

// ---- softmax family ----

NodeId Graph::softmax(NodeId x) {
    const Tensor& vx = value(x);
    assert(vx.rank() == 1);
    Tensor out(vx.shape());
    softmax_into(vx.data(), out.data(), vx.size());
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& y = g.value(id);
        double* dx = g.grad_data(x);
        double dotv = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) dotv += go[i] * y[i];
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += (go[i] - dotv) * y[i];
    };
    return id;
}

NodeId Graph::softmax_rows(NodeId x) {
    const Tensor& vx = value(x);
    assert(vx.rank() == 2);
    Tensor out(vx.shape());
    const std::size_t r = vx.rows(), c = vx.cols();
    for (std::size_t i = 0; i < r; ++i) {
        softmax_into(vx.data() + i * c, out.data() + i * c, c);
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x, r, c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& y = g.value(id);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < r; ++i) {
            const double* gr = go.data() + i * c;
            const double* yr = y.data() + i * c;
            double* dr = dx + i * c;
            double dotv = 0.0;
            for (std::size_t j = 0; j < c; ++j) dotv += gr[j] * yr[j];
            for (std::size_t j = 0; j < c; ++j) dr[j] += (gr[j] - dotv) * yr[j];
        }
    };
    return id;
}

NodeId Graph::log_softmax(NodeId x) {
    const Tensor& vx = value(x);
    assert(vx.rank() == 1);
    Tensor out(vx.shape());
    log_softmax_into(vx.data(), out.data(), vx.size());
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& y = g.value(id);
        double* dx = g.grad_data(x);
        double gsum = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) gsum += go[i];
        for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] - gsum * std::exp(y[i]);
    };
    return id;
}

NodeId Graph::log_softmax_rows(NodeId x) {
    const Tensor& vx = value(x);
    assert(vx.rank() == 2);
    Tensor out(vx.shape());
    const std::size_t r = vx.rows(), c = vx.cols();
    for (std::size_t i = 0; i < r; ++i) {
        log_softmax_into(vx.data() + i * c, out.data() + i * c, c);
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x, r, c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& y = g.value(id);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < r; ++i) {
            const double* gr = go.data() + i * c;
            const double* yr = y.data() + i * c;
            double* dr = dx + i * c;
            double gsum = 0.0;
            for (std::size_t j = 0; j < c; ++j) gsum += gr[j];
            for (std::size_t j = 0; j < c; ++j) dr[j] += gr[j] - gsum * std::exp(yr[j]);
        }
    };
    return id;
}

// ---- linear algebra ----

NodeId Graph::affine(NodeId x, NodeId W, NodeId b) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(W);
    const Tensor& vb = value(b);
    assert(vx.rank() == 1 && vw.rank() == 2 && vb.rank() == 1);
    const std::size_t m = vw.rows(), n = vw.cols();
    if (vx.size() != n || vb.size() != m) {
        throw std::invalid_argument("affine: shape mismatch");
    }
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* wr = vw.data() + i * n;
        double acc = vb[i];
        for (std::size_t j = 0; j < n; ++j) acc += wr[j] * vx[j];
        out[i] = acc;
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, x, W, b, m, n](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(x);
        const Tensor& vw = g.value(W);
        double* dx = g.grad_data(x);
        double* dw = g.grad_data(W);
        double* db = g.grad_data(b);
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = go[i];
            if (gi == 0.0) continue;
            const double* wr = vw.data() + i * n;
            double* dwr = dw + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                dx[j] += gi * wr[j];
                dwr[j] += gi * vx[j];
            }
            db[i] += gi;
        }
    };
    return id;
}

NodeId Graph::affine_rows(NodeId X, NodeId W, NodeId b) {
    const Tensor& vx = value(X);
    const Tensor& vw = value(W);
    const Tensor& vb = value(b);
    assert(vx.rank() == 2 && vw.rank() == 2 && vb.rank() == 1);
    const std::size_t r = vx.rows(), n = vx.cols(), m = vw.rows();
    if (vw.cols() != n || vb.size() != m) {
        throw std::invalid_argument("affine_rows: shape mismatch");
    }
    Tensor out({r, m});
    for (std::size_t t = 0; t < r; ++t) {
        const double* xr = vx.data() + t * n;
        double* orow = out.data() + t * m;
        for (std::size_t i = 0; i < m; ++i) {
            const double* wr = vw.data() + i * n;
            double acc = vb[i];
            for (std::size_t j = 0; j < n; ++j) acc += wr[j] * xr[j];
            orow[i] = acc;
        }
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, X, W, b, r, n, m](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vx = g.value(X);
        const Tensor& vw = g.value(W);
        double* dx = g.grad_data(X);
        double* dw = g.grad_data(W);
        double* db = g.grad_data(b);
        for (std::size_t t = 0; t < r; ++t) {
            const double* gr = go.data() + t * m;
            const double* xr = vx.data() + t * n;
            double* dxr = dx + t * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double gi = gr[i];
                if (gi == 0.0) continue;
                const double* wr = vw.data() + i * n;
                double* dwr = dw + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    dxr[j] += gi * wr[j];
                    dwr[j] += gi * xr[j];
                }
                db[i] += gi;
            }
        }
    };
    return id;
}

NodeId Graph::matmul(NodeId A, NodeId B) {
    const Tensor& va = value(A);
    const Tensor& vb = value(B);
    assert(va.rank() == 2 && vb.rank() == 2);
    const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
    if (vb.rows() != k) throw std::invalid_argument("matmul: shape mismatch");
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = va.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double a = ar[kk];
            if (a == 0.0) continue;
            const double* br = vb.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += a * br[j];
        }
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, A, B, m, k, n](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& va = g.value(A);
        const Tensor& vb = g.value(B);
        double* da = g.grad_data(A);
        double* db = g.grad_data(B);
        // dA = dC * B^T ; dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
            const double* gr = go.data() + i * n;
            double* dar = da + i * k;
            const double* ar = va.data() + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double* br = vb.data() + kk * n;
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += gr[j] * br[j];
                dar[kk] += acc;
                const double a = ar[kk];
                if (a != 0.0) {
                    double* dbr = db + kk * n;
                    for (std::size_t j = 0; j < n; ++j) dbr[j] += a * gr[j];
                }
            }
        }
    };
    return id;
}

NodeId Graph::matmul_nt(NodeId A, NodeId B) {
    const Tensor& va = value(A);
    const Tensor& vb = value(B);
    assert(va.rank() == 2 && vb.rank() == 2);
    const std::size_t m = va.rows(), k = va.cols(), n = vb.rows();
    if (vb.cols() != k) throw std::invalid_argument("matmul_nt: shape mismatch");
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = va.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* br = vb.data() + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += ar[kk] * br[kk];
            orow[j] = acc;
        }
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, A, B, m, k, n](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& va = g.value(A);
        const Tensor& vb = g.value(B);
        double* da = g.grad_data(A);
        double* db = g.grad_data(B);
        // C = A * B^T: dA = dC * B ; dB = dC^T * A
        for (std::size_t i = 0; i < m; ++i) {
            const double* gr = go.data() + i * n;
            double* dar = da + i * k;
            const double* ar = va.data() + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const double gij = gr[j];
                if (gij == 0.0) continue;
                const double* br = vb.data() + j * k;
                double* dbr = db + j * k;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    dar[kk] += gij * br[kk];
                    dbr[kk] += gij * ar[kk];
                }
            }
        }
    };
    return id;
}

NodeId Graph::matvec(NodeId M, NodeId v) {
    const Tensor& vm = value(M);
    const Tensor& vv = value(v);
    assert(vm.rank() == 2 && vv.rank() == 1);
    const std::size_t m = vm.rows(), n = vm.cols();
    if (vv.size() != n) throw std::invalid_argument("matvec: shape mismatch");
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* mr = vm.data() + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += mr[j] * vv[j];
        out[i] = acc;
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, M, v, m, n](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vm = g.value(M);
        const Tensor& vv = g.value(v);
        double* dm = g.grad_data(M);
        double* dv = g.grad_data(v);
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = go[i];
            if (gi == 0.0) continue;
            const double* mr = vm.data() + i * n;
            double* dmr = dm + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                dv[j] += gi * mr[j];
                dmr[j] += gi * vv[j];
            }
        }
    };
    return id;
}

// ---- structure ----

NodeId Graph::gather_rows(NodeId M, std::vector<std::size_t> rows) {
    const Tensor& vm = value(M);
    assert(vm.rank() == 2);
    const std::size_t c = vm.cols();
    Tensor out({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        assert(rows[i] < vm.rows());
        const double* src = vm.data() + rows[i] * c;
        double* dst = out.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] = src[j];
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, M, rows = std::move(rows), c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* dm = g.grad_data(M);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* gr = go.data() + i * c;
            double* dst = dm + rows[i] * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += gr[j];
        }
    };
    return id;
}

NodeId Graph::row(NodeId M, std::size_t r) {
    const Tensor& vm = value(M);
    assert(vm.rank() == 2 && r < vm.rows());
    const std::size_t c = vm.cols();
    Tensor out({c});
    const double* src = vm.data() + r * c;
    for (std::size_t j = 0; j < c; ++j) out[j] = src[j];
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, M, r, c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* dst = g.grad_data(M) + r * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += go[j];
    };
    return id;
}

NodeId Graph::slice_cols(NodeId M, std::size_t col0, std::size_t n) {
    const Tensor& vm = value(M);
    assert(vm.rank() == 2 && col0 + n <= vm.cols());
    const std::size_t r = vm.rows(), c = vm.cols();
    Tensor out({r, n});
    for (std::size_t i = 0; i < r; ++i) {
        const double* src = vm.data() + i * c + col0;
        double* dst = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] = src[j];
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, M, col0, n, r, c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* dm = g.grad_data(M);
        for (std::size_t i = 0; i < r; ++i) {
            const double* gr = go.data() + i * n;
            double* dst = dm + i * c + col0;
            for (std::size_t j = 0; j < n; ++j) dst[j] += gr[j];
        }
    };
    return id;
}

NodeId Graph::concat(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    assert(va.rank() == 1 && vb.rank() == 1);
    const std::size_t na = va.size();
    Tensor out({na + vb.size()});
    for (std::size_t i = 0; i < na; ++i) out[i] = va[i];
    for (std::size_t i = 0; i < vb.size(); ++i) out[na + i] = vb[i];
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, a, b, na](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* da = g.grad_data(a);
        double* db = g.grad_data(b);
        for (std::size_t i = 0; i < na; ++i) da[i] += go[i];
        for (std::size_t i = na; i < go.size(); ++i) db[i - na] += go[i];
    };
    return id;
}

NodeId Graph::concat_cols(NodeId A, NodeId B) {
    const Tensor& va = value(A);
    const Tensor& vb = value(B);
    assert(va.rank() == 2 && vb.rank() == 2 && va.rows() == vb.rows());
    const std::size_t r = va.rows(), ca = va.cols(), cb = vb.cols();
    Tensor out({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
        double* dst = out.data() + i * (ca + cb);
        const double* sa = va.data() + i * ca;
        const double* sb = vb.data() + i * cb;
        for (std::size_t j = 0; j < ca; ++j) dst[j] = sa[j];
        for (std::size_t j = 0; j < cb; ++j) dst[ca + j] = sb[j];
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, A, B, r, ca, cb](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* da = g.grad_data(A);
        double* db = g.grad_data(B);
        for (std::size_t i = 0; i < r; ++i) {
            const double* gr = go.data() + i * (ca + cb);
            double* dar = da + i * ca;
            double* dbr = db + i * cb;
            for (std::size_t j = 0; j < ca; ++j) dar[j] += gr[j];
            for (std::size_t j = 0; j < cb; ++j) dbr[j] += gr[ca + j];
        }
    };
    return id;
}

NodeId Graph::repeat_row(NodeId v, std::size_t n) {
    const Tensor& vv = value(v);
    assert(vv.rank() == 1);
    const std::size_t c = vv.size();
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double* dst = out.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] = vv[j];
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, v, n, c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* dv = g.grad_data(v);
        for (std::size_t i = 0; i < n; ++i) {
            const double* gr = go.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) dv[j] += gr[j];
        }
    };
    return id;
}

NodeId Graph::row_sums(NodeId M) {
    const Tensor& vm = value(M);
    assert(vm.rank() == 2);
    const std::size_t r = vm.rows(), c = vm.cols();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i) {
        const double* mr = vm.data() + i * c;
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += mr[j];
        out[i] = acc;
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, M, r, c](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        double* dm = g.grad_data(M);
        for (std::size_t i = 0; i < r; ++i) {
            const double gi = go[i];
            double* dr = dm + i * c;
            for (std::size_t j = 0; j < c; ++j) dr[j] += gi;
        }
    };
    return id;
}

// ---- reductions ----

NodeId Graph::sum(NodeId x) {
    const Tensor& vx = value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < vx.size(); ++i) acc += vx[i];
    NodeId id = emplace(Tensor::scalar(acc), nullptr);
    nodes_[id].back = [id, x](Graph& g) {
        const double go = g.nodes_[id].grad.item();
        double* dx = g.grad_data(x);
        const std::size_t n = g.value(x).size();
        for (std::size_t i = 0; i < n; ++i) dx[i] += go;
    };
    return id;
}

NodeId Graph::mean(NodeId x) {
    const Tensor& vx = value(x);
    const std::size_t n = vx.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += vx[i];
    NodeId id = emplace(Tensor::scalar(acc / static_cast<double>(n)), nullptr);
    nodes_[id].back = [id, x, n](Graph& g) {
        const double go = g.nodes_[id].grad.item() / static_cast<double>(n);
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < n; ++i) dx[i] += go;
    };
    return id;
}

NodeId Graph::dot(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    assert(va.size() == vb.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i] * vb[i];
    NodeId id = emplace(Tensor::scalar(acc), nullptr);
    nodes_[id].back = [id, a, b](Graph& g) {
        const double go = g.nodes_[id].grad.item();
        const Tensor& va = g.value(a);
        const Tensor& vb = g.value(b);
        double* da = g.grad_data(a);
        double* db = g.grad_data(b);
        for (std::size_t i = 0; i < va.size(); ++i) {
            da[i] += go * vb[i];
            db[i] += go * va[i];
        }
    };
    return id;
}

NodeId Graph::weighted_sum(NodeId x, Tensor w) {
    const Tensor& vx = value(x);
    assert(vx.size() == w.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < vx.size(); ++i) acc += vx[i] * w[i];
    NodeId id = emplace(Tensor::scalar(acc), nullptr);
    nodes_[id].back = [id, x, w = std::move(w)](Graph& g) {
        const double go = g.nodes_[id].grad.item();
        double* dx = g.grad_data(x);
        for (std::size_t i = 0; i < w.size(); ++i) dx[i] += go * w[i];
    };
    return id;
}

// ---- fused ----

NodeId Graph::layer_norm_rows(NodeId X, NodeId gain, NodeId bias, double eps) {
    const Tensor& vx = value(X);
    const Tensor& vg = value(gain);
    const Tensor& vb = value(bias);
    assert(vx.rank() == 2 && vg.size() == vx.cols() && vb.size() == vx.cols());
    const std::size_t r = vx.rows(), c = vx.cols();
    Tensor out({r, c});
    Tensor xhat({r, c});
    Tensor inv_std({r});
    for (std::size_t i = 0; i < r; ++i) {
        const double* xr = vx.data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xr[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        double* hr = xhat.data() + i * c;
        double* orow = out.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) {
            hr[j] = (xr[j] - mean) * is;
            orow[j] = hr[j] * vg[j] + vb[j];
        }
    }
    NodeId id = emplace(std::move(out), nullptr);
    nodes_[id].back = [id, X, gain, bias, r, c, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)](Graph& g) {
        const Tensor& go = g.nodes_[id].grad;
        const Tensor& vg = g.value(gain);
        double* dx = g.grad_data(X);
        double* dg = g.grad_data(gain);
        double* db = g.grad_data(bias);
        for (std::size_t i = 0; i < r; ++i) {
            const double* gr = go.data() + i * c;
            const double* hr = xhat.data() + i * c;
            double* dxr = dx + i * c;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                const double dxhat = gr[j] * vg[j];
                m1 += dxhat;
                m2 += dxhat * hr[j];
                dg[j] += gr[j] * hr[j];
                db[j] += gr[j];
            }
            m1 /= static_cast<double>(c);
            m2 /= static_cast<double>(c);
            const double is = inv_std[i];
            for (std::size_t j = 0; j < c; ++j) {
                const double dxhat = gr[j] * vg[j];
                dxr[j] += is * (dxhat - m1 - hr[j] * m2);
            }
        }
    };
    return id;
}

NodeId Graph::bce_with_logits(NodeId logit, double target) {
    const double l = value(logit).item();
    const double loss = stable_softplus(l) - target * l;
    NodeId id = emplace(Tensor::scalar(loss), nullptr);
    nodes_[id].back = [id, logit, target](Graph& g) {
        const double go = g.nodes_[id].grad.item();
        const double l = g.value(logit).item();
        const double s = l >= 0.0 ? 1.0 / (1.0 + std::exp(-l))
                                  : std::exp(l) / (1.0 + std::exp(l));
        g.grad_data(logit)[0] += go * (s - target);
    };
    return id;
}

}  // namespace decfd::nn
