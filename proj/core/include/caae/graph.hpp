#pragma once

#include <span>
#include <vector>

#include "caae/ops.hpp"
#include "caae/tensor.hpp"

namespace caae {

// Reverse-mode tape over a static per-step graph. Values are computed
// eagerly as nodes are recorded; backward() then fills gradients in one
// reverse sweep. Leaf parameters are external tensors: their grad buffers
// accumulate across backward calls until zero_grad().
//
// Single-threaded by construction; a training step owns its graph.
template <typename T>
class Graph {
public:
    using Id = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // constant leaf (no gradient flows into it)
    Id input(Tensor<T> value);

    // external leaf; must outlive the graph
    Id param(Tensor<T>& external);

    Id conv2d(Id x, Id kernel, Id bias, int stride, int pad);
    Id conv_transpose2d(Id x, Id kernel, Id bias, int stride, int pad);
    Id dense(Id x, Id weight, Id bias);
    Id leaky_relu(Id x, T alpha);
    Id sigmoid(Id x);
    Id tanh_act(Id x);
    Id softmax(Id x, int axis);
    Id mse_loss(Id pred, Id target);
    Id bce_logits_loss(Id logit, Id label);
    Id reshape(Id x, Shape new_shape);
    Id concat_cols(Id a, Id b);  // along axis 1 of two 2-d tensors
    Id add(Id a, Id b);
    Id scale(Id x, T factor);

    const Tensor<T>& value(Id id) const { return nodes_.at(id).value; }
    std::span<const T> grad_of(Id id) const;  // valid after backward()

    // Populates gradients of every requires_grad ancestor of `loss`.
    // Repeated calls without zero_grad accumulate into external tensors.
    void backward(Id loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Input,
        Param,
        Conv2d,
        ConvTranspose2d,
        Dense,
        LeakyRelu,
        Sigmoid,
        Tanh,
        Softmax,
        MseLoss,
        BceLogitsLoss,
        Reshape,
        ConcatCols,
        Add,
        Scale,
    };

    struct Node {
        Op op;
        Id in[3] = {-1, -1, -1};
        int i0 = 0, i1 = 0, i2 = 0;  // stride/pad, axis extents
        T f0 = T(0);         // alpha or scale factor
        ConvGeom geom{};
        Tensor<T> value;
        std::vector<T> grad;  // allocated during backward
        bool needs_grad = false;
        Tensor<T>* external = nullptr;  // Param only
    };

    Id push(Node n);
    Node& at(Id id);
    const Node& cat(Id id) const;
    bool any_needs_grad(Id a, Id b = -1, Id c = -1) const;
    void ensure_grad(Node& n);
    void backward_node(Id id);

    std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace caae
