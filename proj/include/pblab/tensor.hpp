#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pblab {

// Dense rank-1/rank-2 float32 array with an optional gradient buffer.
// Copies share storage (handle semantics); clone() detaches.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);

    static Tensor vec(std::size_t n, bool requires_grad = false);  // rank-1
    static Tensor scalar(float v);
    static Tensor from(std::vector<float> values);                       // rank-1
    static Tensor from(std::size_t rows, std::size_t cols, std::vector<float> values);

    bool defined() const { return s_ != nullptr; }
    std::size_t rank() const;
    std::size_t rows() const;   // 1 for rank-1
    std::size_t cols() const;   // length for rank-1
    std::size_t size() const;
    const std::vector<std::size_t>& shape() const;
    std::string shape_str() const;
    bool is_scalar() const { return defined() && size() == 1; }

    float* data();
    const float* data() const;
    float& at(std::size_t i);
    float at(std::size_t i) const;
    float& at(std::size_t r, std::size_t c);
    float at(std::size_t r, std::size_t c) const;
    float item() const;   // scalar value; throws unless size()==1

    bool requires_grad() const;
    void set_requires_grad(bool rg);
    float* grad();
    const float* grad() const;
    void zero_grad();

    Tensor clone() const;           // deep copy; keeps requires_grad, grad zeroed
    bool same_storage(const Tensor& o) const { return s_ == o.s_; }

private:
    struct Storage {
        std::vector<std::size_t> shape;
        std::vector<float> v;
        std::vector<float> g;   // empty unless requires_grad
        bool rg = false;
    };
    std::shared_ptr<Storage> s_;
    Storage& st();
    const Storage& st() const;
};

// Reverse-mode tape. Operations are recorded in forward order, which is a
// valid topological order; backward() replays them in reverse. The tape is
// rebuilt per forward pass.
class Tape {
public:
    Tensor matmul(const Tensor& a, const Tensor& b);       // [m×k]·[k×n]
    Tensor matmul_nt(const Tensor& a, const Tensor& b);    // a·bᵀ, b is [n×k]
    Tensor add(const Tensor& a, const Tensor& b);          // same shape, or b a bias row
    Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
    Tensor affine(const Tensor& a, float scale, float shift);
    Tensor scale(const Tensor& a, float s) { return affine(a, s, 0.0f); }
    Tensor relu(const Tensor& a);
    Tensor gelu(const Tensor& a);                          // tanh approximation
    Tensor softmax(const Tensor& a);                       // along last axis
    Tensor log_softmax(const Tensor& a);                   // along last axis
    Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
    Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
    Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      float eps = 1e-5f);
    Tensor colwise_scale(const Tensor& x, const Tensor& s);  // column j scaled by s[j]

    // Populates gradients of every requires_grad tensor reachable from root.
    // Repeated calls accumulate into leaf gradients.
    void backward(const Tensor& root);

    void clear();
    std::size_t num_ops() const { return nodes_.size(); }

private:
    struct Node {
        std::function<void()> back;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> outputs_;   // op outputs; their grads are reset per backward

    Tensor make_output(std::size_t rows, std::size_t cols, bool rg, bool rank1 = false);
    void record(Tensor out, std::function<void()> back);
};

// Untaped helpers used by backward rules, optimizers and weight surgery.
namespace nt {
// c (+)= a·b with optional transposes; c must be preallocated and zeroed by caller
void mm_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
float gelu_scalar(float x);
}  // namespace nt

}  // namespace pblab
