#include "pblab/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pblab {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_finite(const Tensor& t, const char* op) {
    const float* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(p[i]))
            throw std::domain_error(std::string(op) + ": non-finite input at index " +
                                    std::to_string(i));
    }
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, bool requires_grad) {
    s_ = std::make_shared<Storage>();
    s_->shape = {rows, cols};
    s_->v.assign(rows * cols, 0.0f);
    s_->rg = requires_grad;
    if (requires_grad) s_->g.assign(rows * cols, 0.0f);
}

Tensor Tensor::vec(std::size_t n, bool requires_grad) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = {n};
    t.s_->v.assign(n, 0.0f);
    t.s_->rg = requires_grad;
    if (requires_grad) t.s_->g.assign(n, 0.0f);
    return t;
}

Tensor Tensor::scalar(float v) {
    Tensor t = Tensor::vec(1);
    t.at(0) = v;
    return t;
}

Tensor Tensor::from(std::vector<float> values) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = {values.size()};
    t.s_->v = std::move(values);
    return t;
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<float> values) {
    if (values.size() != rows * cols) fail("Tensor::from: data length does not match shape");
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = {rows, cols};
    t.s_->v = std::move(values);
    return t;
}

Tensor::Storage& Tensor::st() {
    if (!s_) fail("Tensor: undefined");
    return *s_;
}
const Tensor::Storage& Tensor::st() const {
    if (!s_) fail("Tensor: undefined");
    return *s_;
}

std::size_t Tensor::rank() const { return st().shape.size(); }
std::size_t Tensor::rows() const { return rank() == 1 ? 1 : st().shape[0]; }
std::size_t Tensor::cols() const { return rank() == 1 ? st().shape[0] : st().shape[1]; }
std::size_t Tensor::size() const { return st().v.size(); }
const std::vector<std::size_t>& Tensor::shape() const { return st().shape; }

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < st().shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(st().shape[i]);
    }
    return s + "]";
}

float* Tensor::data() { return st().v.data(); }
const float* Tensor::data() const { return st().v.data(); }
float& Tensor::at(std::size_t i) { return st().v.at(i); }
float Tensor::at(std::size_t i) const { return st().v.at(i); }
float& Tensor::at(std::size_t r, std::size_t c) { return st().v.at(r * cols() + c); }
float Tensor::at(std::size_t r, std::size_t c) const { return st().v.at(r * cols() + c); }

float Tensor::item() const {
    if (size() != 1) fail("Tensor::item: tensor " + shape_str() + " is not scalar");
    return st().v[0];
}

bool Tensor::requires_grad() const { return st().rg; }

void Tensor::set_requires_grad(bool rg) {
    st().rg = rg;
    if (rg)
        st().g.assign(size(), 0.0f);
    else
        st().g.clear();
}

float* Tensor::grad() { return st().rg ? st().g.data() : nullptr; }
const float* Tensor::grad() const { return st().rg ? st().g.data() : nullptr; }

void Tensor::zero_grad() {
    if (st().rg) std::fill(st().g.begin(), st().g.end(), 0.0f);
}

Tensor Tensor::clone() const {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = st().shape;
    t.s_->v = st().v;
    t.s_->rg = st().rg;
    if (st().rg) t.s_->g.assign(size(), 0.0f);
    return t;
}

// ------------------------------------------------------------------ nt

namespace nt {

void mm_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b) {
    // a is logically [m×k] (stored [k×m] if trans_a), b is [k×n] (stored [n×k] if trans_b)
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            float* ci = c + i * n;
            const float* ai = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const float av = ai[p];
                const float* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            const float* ai = a + i * k;
            float* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const float* bj = b + j * k;
                float acc = 0.0f;
                for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
                ci[j] += acc;
            }
        }
    } else if (trans_a && !trans_b) {
        for (std::size_t p = 0; p < k; ++p) {
            const float* ap = a + p * m;
            const float* bp = b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const float av = ap[i];
                float* ci = c + i * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            float* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const float* bj = b + j * k;
                float acc = 0.0f;
                for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
                ci[j] += acc;
            }
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        fail("matmul: inner dimensions differ, " + a.shape_str() + " vs " + b.shape_str());
    Tensor c(a.rows(), b.cols());
    mm_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false, false);
    return c;
}

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

float gelu_scalar(float x) {
    const float c = 0.7978845608028654f;  // sqrt(2/pi)
    float u = c * (x + 0.044715f * x * x * x);
    return 0.5f * x * (1.0f + std::tanh(u));
}

}  // namespace nt

// ------------------------------------------------------------------ Tape

Tensor Tape::make_output(std::size_t rows, std::size_t cols, bool rg, bool rank1) {
    Tensor out = rank1 ? Tensor::vec(cols, rg) : Tensor(rows, cols, rg);
    return out;
}

void Tape::record(Tensor out, std::function<void()> back) {
    if (out.requires_grad()) {
        outputs_.push_back(out);
        nodes_.push_back(Node{std::move(back)});
    }
}

void Tape::clear() {
    nodes_.clear();
    outputs_.clear();
}

void Tape::backward(const Tensor& root) {
    if (!root.is_scalar())
        fail("backward: root must be scalar, got " + root.shape_str());
    if (!root.requires_grad()) return;  // nothing reachable requires grad
    for (auto& t : outputs_) t.zero_grad();
    Tensor r = root;
    r.grad()[0] = 1.0f;
    for (std::size_t i = nodes_.size(); i-- > 0;) nodes_[i].back();
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        fail("matmul: inner dimensions differ, " + a.shape_str() + " vs " + b.shape_str());
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor c = make_output(a.rows(), b.cols(), rg);
    nt::mm_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false, false);
    record(c, [a = a, b = b, c]() mutable {
        const float* gc = c.grad();
        if (a.requires_grad())  // dA += dC·Bᵀ
            nt::mm_acc(gc, b.data(), a.grad(), a.rows(), b.cols(), a.cols(), false, true);
        if (b.requires_grad())  // dB += Aᵀ·dC
            nt::mm_acc(a.data(), gc, b.grad(), a.cols(), a.rows(), b.cols(), true, false);
    });
    return c;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        fail("matmul_nt: inner dimensions differ, " + a.shape_str() + " vs " + b.shape_str());
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor c = make_output(a.rows(), b.rows(), rg);
    nt::mm_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows(), false, true);
    record(c, [a = a, b = b, c]() mutable {
        const float* gc = c.grad();
        if (a.requires_grad())  // dA += dC·B
            nt::mm_acc(gc, b.data(), a.grad(), a.rows(), b.rows(), a.cols(), false, false);
        if (b.requires_grad())  // dB += dCᵀ·A
            nt::mm_acc(gc, a.data(), b.grad(), b.rows(), a.rows(), b.cols(), true, false);
    });
    return c;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    const bool bias_row = (b.rank() == 1 && a.rank() == 2 && b.cols() == a.cols());
    if (!bias_row && (a.rows() != b.rows() || a.cols() != b.cols()))
        fail("add: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor c = make_output(a.rows(), a.cols(), rg, a.rank() == 1);
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j)
            c.data()[i * n + j] = a.data()[i * n + j] + b.data()[bias_row ? j : i * n + j];
    record(c, [a = a, b = b, c, bias_row, n]() mutable {
        const float* gc = c.grad();
        if (a.requires_grad()) {
            float* ga = a.grad();
            for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gc[i];
        }
        if (b.requires_grad()) {
            float* gb = b.grad();
            if (bias_row) {
                for (std::size_t i = 0; i < a.rows(); ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += gc[i * n + j];
            } else {
                for (std::size_t i = 0; i < b.size(); ++i) gb[i] += gc[i];
            }
        }
    });
    return c;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail("mul: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor c = make_output(a.rows(), a.cols(), rg, a.rank() == 1);
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
    record(c, [a = a, b = b, c]() mutable {
        const float* gc = c.grad();
        if (a.requires_grad()) {
            float* ga = a.grad();
            for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gc[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            float* gb = b.grad();
            for (std::size_t i = 0; i < b.size(); ++i) gb[i] += gc[i] * a.data()[i];
        }
    });
    return c;
}

Tensor Tape::affine(const Tensor& a, float s, float shift) {
    Tensor c = make_output(a.rows(), a.cols(), a.requires_grad(), a.rank() == 1);
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = s * a.data()[i] + shift;
    record(c, [a = a, c, s]() mutable {
        const float* gc = c.grad();
        float* ga = a.grad();
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += s * gc[i];
    });
    return c;
}

Tensor Tape::relu(const Tensor& a) {
    Tensor c = make_output(a.rows(), a.cols(), a.requires_grad(), a.rank() == 1);
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] > 0.0f ? a.data()[i] : 0.0f;
    record(c, [a = a, c]() mutable {
        const float* gc = c.grad();
        float* ga = a.grad();
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a.data()[i] > 0.0f) ga[i] += gc[i];
    });
    return c;
}

Tensor Tape::gelu(const Tensor& a) {
    Tensor c = make_output(a.rows(), a.cols(), a.requires_grad(), a.rank() == 1);
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = nt::gelu_scalar(a.data()[i]);
    record(c, [a = a, c]() mutable {
        const float kC = 0.7978845608028654f;
        const float* gc = c.grad();
        float* ga = a.grad();
        for (std::size_t i = 0; i < a.size(); ++i) {
            float x = a.data()[i];
            float u = kC * (x + 0.044715f * x * x * x);
            float t = std::tanh(u);
            float du = kC * (1.0f + 3.0f * 0.044715f * x * x);
            ga[i] += gc[i] * (0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du);
        }
    });
    return c;
}

Tensor Tape::softmax(const Tensor& a) {
    check_finite(a, "softmax");
    Tensor c = make_output(a.rows(), a.cols(), a.requires_grad(), a.rank() == 1);
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const float* x = a.data() + i * n;
        float* y = c.data() + i * n;
        float mx = x[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
    }
    record(c, [a = a, c, n]() mutable {
        const float* gc = c.grad();
        float* ga = a.grad();
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const float* y = c.data() + i * n;
            const float* gy = gc + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(gy[j]) * y[j];
            for (std::size_t j = 0; j < n; ++j)
                ga[i * n + j] += y[j] * (gy[j] - static_cast<float>(dot));
        }
    });
    return c;
}

Tensor Tape::log_softmax(const Tensor& a) {
    check_finite(a, "log_softmax");
    Tensor c = make_output(a.rows(), a.cols(), a.requires_grad(), a.rank() == 1);
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const float* x = a.data() + i * n;
        float* y = c.data() + i * n;
        float mx = x[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(static_cast<double>(x[j]) - mx);
        const float lse = mx + static_cast<float>(std::log(sum));
        for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
    }
    record(c, [a = a, c, n]() mutable {
        const float* gc = c.grad();
        float* ga = a.grad();
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const float* y = c.data() + i * n;
            const float* gy = gc + i * n;
            double gsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) gsum += gy[j];
            for (std::size_t j = 0; j < n; ++j)
                ga[i * n + j] += gy[j] - static_cast<float>(gsum) * std::exp(y[j]);
        }
    });
    return c;
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows())
        fail("cross_entropy: need one label per row, got " + std::to_string(labels.size()) +
             " labels for " + logits.shape_str());
    const std::size_t c = logits.cols();
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) +
                                    " outside [0," + std::to_string(c) + ")");
    Tensor lsm = log_softmax(logits);
    Tensor out = make_output(1, 1, logits.requires_grad(), true);
    double acc = 0.0;
    for (std::size_t i = 0; i < lsm.rows(); ++i) acc -= lsm.at(i, static_cast<std::size_t>(labels[i]));
    out.at(0) = static_cast<float>(acc / static_cast<double>(lsm.rows()));
    record(out, [lsm, out, labels]() mutable {
        const float g = out.grad()[0] / static_cast<float>(lsm.rows());
        float* gl = lsm.grad();
        const std::size_t n = lsm.cols();
        for (std::size_t i = 0; i < lsm.rows(); ++i)
            gl[i * n + static_cast<std::size_t>(labels[i])] -= g;
    });
    return out;
}

Tensor Tape::sum(const Tensor& a) {
    Tensor out = make_output(1, 1, a.requires_grad(), true);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i];
    out.at(0) = static_cast<float>(acc);
    record(out, [a = a, out]() mutable {
        const float g = out.grad()[0];
        float* ga = a.grad();
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
    });
    return out;
}

Tensor Tape::mean(const Tensor& a) {
    Tensor s = sum(a);
    return scale(s, 1.0f / static_cast<float>(a.size()));
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
    const std::size_t n = table.cols();
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
            throw std::out_of_range("gather_rows: id " + std::to_string(id) + " outside [0," +
                                    std::to_string(table.rows()) + ")");
    Tensor c = make_output(ids.size(), n, table.requires_grad());
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::memcpy(c.data() + i * n, table.data() + static_cast<std::size_t>(ids[i]) * n,
                    n * sizeof(float));
    record(c, [table = table, c, ids, n]() mutable {
        const float* gc = c.grad();
        float* gt = table.grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            float* row = gt + static_cast<std::size_t>(ids[i]) * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += gc[i * n + j];
        }
    });
    return c;
}

Tensor Tape::slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    if (r0 >= r1 || r1 > a.rows()) fail("slice_rows: bad range for " + a.shape_str());
    const std::size_t n = a.cols();
    Tensor c = make_output(r1 - r0, n, a.requires_grad());
    std::memcpy(c.data(), a.data() + r0 * n, (r1 - r0) * n * sizeof(float));
    record(c, [a = a, c, r0, n]() mutable {
        const float* gc = c.grad();
        float* ga = a.grad() + r0 * n;
        for (std::size_t i = 0; i < c.size(); ++i) ga[i] += gc[i];
    });
    return c;
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (c0 >= c1 || c1 > a.cols()) fail("slice_cols: bad range for " + a.shape_str());
    const std::size_t w = c1 - c0, n = a.cols();
    Tensor c = make_output(a.rows(), w, a.requires_grad());
    for (std::size_t i = 0; i < a.rows(); ++i)
        std::memcpy(c.data() + i * w, a.data() + i * n + c0, w * sizeof(float));
    record(c, [a = a, c, c0, w, n]() mutable {
        const float* gc = c.grad();
        float* ga = a.grad();
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < w; ++j) ga[i * n + c0 + j] += gc[i * w + j];
    });
    return c;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_cols: no parts");
    std::size_t total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rows() != parts[0].rows()) fail("concat_cols: row mismatch");
        total += p.cols();
        rg = rg || p.requires_grad();
    }
    Tensor c = make_output(parts[0].rows(), total, rg);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < p.rows(); ++i)
            std::memcpy(c.data() + i * total + off, p.data() + i * p.cols(),
                        p.cols() * sizeof(float));
        off += p.cols();
    }
    record(c, [parts = parts, c, total]() mutable {
        const float* gc = c.grad();
        std::size_t off = 0;
        for (auto& p : parts) {
            if (p.requires_grad()) {
                float* gp = p.grad();
                for (std::size_t i = 0; i < p.rows(); ++i)
                    for (std::size_t j = 0; j < p.cols(); ++j)
                        gp[i * p.cols() + j] += gc[i * total + off + j];
            }
            off += p.cols();
        }
    });
    return c;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    const std::size_t n = x.cols();
    if (gamma.size() != n || beta.size() != n)
        fail("layer_norm: gamma/beta must have length " + std::to_string(n));
    bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    Tensor c = make_output(x.rows(), n, rg);
    Tensor xhat(x.rows(), n);      // cached normalized input
    Tensor inv_sigma = Tensor::vec(x.rows());    // cached 1/σ per row
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const float* xi = x.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= n;
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= n;
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_sigma.at(i) = inv;
        for (std::size_t j = 0; j < n; ++j) {
            float xh = (xi[j] - static_cast<float>(mu)) * inv;
            xhat.at(i, j) = xh;
            c.data()[i * n + j] = xh * gamma.data()[j] + beta.data()[j];
        }
    }
    record(c, [x = x, gamma = gamma, beta = beta, c, xhat, inv_sigma, n]() mutable {
        const float* gc = c.grad();
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const float* gy = gc + i * n;
            const float* xh = xhat.data() + i * n;
            if (gamma.requires_grad()) {
                float* gg = gamma.grad();
                for (std::size_t j = 0; j < n; ++j) gg[j] += gy[j] * xh[j];
            }
            if (beta.requires_grad()) {
                float* gb = beta.grad();
                for (std::size_t j = 0; j < n; ++j) gb[j] += gy[j];
            }
            if (x.requires_grad()) {
                double mean_g = 0.0, mean_gx = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double gj = static_cast<double>(gy[j]) * gamma.data()[j];
                    mean_g += gj;
                    mean_gx += gj * xh[j];
                }
                mean_g /= n;
                mean_gx /= n;
                float* gx = x.grad() + i * n;
                const float inv = inv_sigma.at(i);
                for (std::size_t j = 0; j < n; ++j) {
                    const double gj = static_cast<double>(gy[j]) * gamma.data()[j];
                    gx[j] += static_cast<float>(inv * (gj - mean_g - xh[j] * mean_gx));
                }
            }
        }
    });
    return c;
}

Tensor Tape::colwise_scale(const Tensor& x, const Tensor& s) {
    const std::size_t n = x.cols();
    if (s.size() != n) fail("colwise_scale: scale length must equal column count");
    bool rg = x.requires_grad() || s.requires_grad();
    Tensor c = make_output(x.rows(), n, rg);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) c.data()[i * n + j] = x.data()[i * n + j] * s.data()[j];
    record(c, [x = x, s = s, c, n]() mutable {
        const float* gc = c.grad();
        if (x.requires_grad()) {
            float* gx = x.grad();
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gc[i * n + j] * s.data()[j];
        }
        if (s.requires_grad()) {
            float* gs = s.grad();
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < n; ++j) gs[j] += gc[i * n + j] * x.data()[i * n + j];
        }
    });
    return c;
}

}  // namespace pblab
