#include "caae/graph.hpp"

#include <stdexcept>
#include <string>

namespace caae {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }
}

template <typename T>
typename Graph<T>::Id Graph<T>::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

template <typename T>
typename Graph<T>::Node& Graph<T>::at(Id id) {
    if (id < 0 || id >= static_cast<Id>(nodes_.size())) fail("graph: invalid node id");
    return nodes_[id];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::cat(Id id) const {
    if (id < 0 || id >= static_cast<Id>(nodes_.size())) fail("graph: invalid node id");
    return nodes_[id];
}

template <typename T>
bool Graph<T>::any_needs_grad(Id a, Id b, Id c) const {
    return (a >= 0 && cat(a).needs_grad) || (b >= 0 && cat(b).needs_grad) || (c >= 0 && cat(c).needs_grad);
}

template <typename T>
typename Graph<T>::Id Graph<T>::input(Tensor<T> value) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    n.needs_grad = false;
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::param(Tensor<T>& external) {
    Node n;
    n.op = Op::Param;
    n.value = external;  // copy of the current values; grads go to `external`
    n.needs_grad = external.requires_grad;
    n.external = &external;
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::conv2d(Id x, Id kernel, Id bias, int stride, int pad) {
    const auto& xv = cat(x).value;
    const auto& kv = cat(kernel).value;
    const auto& bv = cat(bias).value;
    ConvGeom g = conv2d_geom(xv.shape, kv.shape, bv.shape, stride, pad);
    Node n;
    n.op = Op::Conv2d;
    n.in[0] = x;
    n.in[1] = kernel;
    n.in[2] = bias;
    n.geom = g;
    n.needs_grad = any_needs_grad(x, kernel, bias);
    n.value = Tensor<T>(conv2d_out_shape(g));
    conv2d_forward(xv.data.data(), kv.data.data(), bv.data.data(), n.value.data.data(), g);
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::conv_transpose2d(Id x, Id kernel, Id bias, int stride, int pad) {
    const auto& xv = cat(x).value;
    const auto& kv = cat(kernel).value;
    const auto& bv = cat(bias).value;
    ConvGeom g = conv_transpose2d_geom(xv.shape, kv.shape, bv.shape, stride, pad);
    Node n;
    n.op = Op::ConvTranspose2d;
    n.in[0] = x;
    n.in[1] = kernel;
    n.in[2] = bias;
    n.geom = g;
    n.needs_grad = any_needs_grad(x, kernel, bias);
    n.value = Tensor<T>(conv_transpose2d_out_shape(g));
    conv_transpose2d_forward(xv.data.data(), kv.data.data(), bv.data.data(), n.value.data.data(), g);
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::dense(Id x, Id weight, Id bias) {
    const auto& xv = cat(x).value;
    const auto& wv = cat(weight).value;
    const auto& bv = cat(bias).value;
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
        fail("dense: expected x NxF, weight FxG, bias G; got " + shape_str(xv.shape) + ", " + shape_str(wv.shape) +
             ", " + shape_str(bv.shape));
    if (xv.shape[1] != wv.shape[0])
        fail("dense: inner extents disagree: x " + shape_str(xv.shape) + " vs weight " + shape_str(wv.shape));
    if (bv.shape[0] != wv.shape[1])
        fail("dense: bias extent " + std::to_string(bv.shape[0]) + " != output width " + std::to_string(wv.shape[1]));
    Node n;
    n.op = Op::Dense;
    n.in[0] = x;
    n.in[1] = weight;
    n.in[2] = bias;
    n.needs_grad = any_needs_grad(x, weight, bias);
    n.value = Tensor<T>({xv.shape[0], wv.shape[1]});
    dense_forward(xv.data.data(), wv.data.data(), bv.data.data(), n.value.data.data(), xv.shape[0], xv.shape[1],
                  wv.shape[1]);
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::leaky_relu(Id x, T alpha) {
    const auto& xv = cat(x).value;
    Node n;
    n.op = Op::LeakyRelu;
    n.in[0] = x;
    n.f0 = alpha;
    n.needs_grad = any_needs_grad(x);
    n.value = Tensor<T>(xv.shape);
    leaky_relu_forward(xv.data.data(), n.value.data.data(), xv.size(), alpha);
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::sigmoid(Id x) {
    const auto& xv = cat(x).value;
    Node n;
    n.op = Op::Sigmoid;
    n.in[0] = x;
    n.needs_grad = any_needs_grad(x);
    n.value = Tensor<T>(xv.shape);
    sigmoid_forward(xv.data.data(), n.value.data.data(), xv.size());
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::tanh_act(Id x) {
    const auto& xv = cat(x).value;
    Node n;
    n.op = Op::Tanh;
    n.in[0] = x;
    n.needs_grad = any_needs_grad(x);
    n.value = Tensor<T>(xv.shape);
    tanh_forward(xv.data.data(), n.value.data.data(), xv.size());
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::softmax(Id x, int axis) {
    const auto& xv = cat(x).value;
    if (axis < 0 || axis >= xv.rank())
        fail("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(xv.shape));
    int outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= xv.shape[d];
    for (int d = axis + 1; d < xv.rank(); ++d) inner *= xv.shape[d];
    Node n;
    n.op = Op::Softmax;
    n.in[0] = x;
    n.i0 = outer;
    n.i1 = inner;
    n.i2 = xv.shape[axis];
    n.needs_grad = any_needs_grad(x);
    n.value = Tensor<T>(xv.shape);
    softmax_forward(xv.data.data(), n.value.data.data(), outer, xv.shape[axis], inner);
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::mse_loss(Id pred, Id target) {
    const auto& pv = cat(pred).value;
    const auto& tv = cat(target).value;
    if (!same_shape(pv.shape, tv.shape))
        fail("mse_loss: shape mismatch " + shape_str(pv.shape) + " vs " + shape_str(tv.shape));
    Node n;
    n.op = Op::MseLoss;
    n.in[0] = pred;
    n.in[1] = target;
    n.needs_grad = any_needs_grad(pred, target);
    n.value = Tensor<T>({1});
    n.value.data[0] = mse_forward(pv.data.data(), tv.data.data(), pv.size());
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::bce_logits_loss(Id logit, Id label) {
    const auto& lv = cat(logit).value;
    const auto& yv = cat(label).value;
    if (!same_shape(lv.shape, yv.shape))
        fail("bce_logits_loss: shape mismatch " + shape_str(lv.shape) + " vs " + shape_str(yv.shape));
    if (cat(label).needs_grad) fail("bce_logits_loss: gradients w.r.t. labels are not supported");
    Node n;
    n.op = Op::BceLogitsLoss;
    n.in[0] = logit;
    n.in[1] = label;
    n.needs_grad = any_needs_grad(logit);
    n.value = Tensor<T>({1});
    n.value.data[0] = bce_logits_forward(lv.data.data(), yv.data.data(), lv.size());
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::reshape(Id x, Shape new_shape) {
    const auto& xv = cat(x).value;
    if (numel(new_shape) != xv.size())
        fail("reshape: cannot view " + shape_str(xv.shape) + " as " + shape_str(new_shape));
    Node n;
    n.op = Op::Reshape;
    n.in[0] = x;
    n.needs_grad = any_needs_grad(x);
    n.value.shape = std::move(new_shape);
    n.value.data = xv.data;
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::concat_cols(Id a, Id b) {
    const auto& av = cat(a).value;
    const auto& bv = cat(b).value;
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[0] != bv.shape[0])
        fail("concat_cols: need two 2-d tensors with equal row counts, got " + shape_str(av.shape) + " and " +
             shape_str(bv.shape));
    const int rows = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
    Node n;
    n.op = Op::ConcatCols;
    n.in[0] = a;
    n.in[1] = b;
    n.i0 = ca;
    n.i1 = cb;
    n.needs_grad = any_needs_grad(a, b);
    n.value = Tensor<T>({rows, ca + cb});
    for (int r = 0; r < rows; ++r) {
        T* out = n.value.data.data() + static_cast<std::size_t>(r) * (ca + cb);
        const T* pa = av.data.data() + static_cast<std::size_t>(r) * ca;
        const T* pb = bv.data.data() + static_cast<std::size_t>(r) * cb;
        for (int j = 0; j < ca; ++j) out[j] = pa[j];
        for (int j = 0; j < cb; ++j) out[ca + j] = pb[j];
    }
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::add(Id a, Id b) {
    const auto& av = cat(a).value;
    const auto& bv = cat(b).value;
    if (!same_shape(av.shape, bv.shape))
        fail("add: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    Node n;
    n.op = Op::Add;
    n.in[0] = a;
    n.in[1] = b;
    n.needs_grad = any_needs_grad(a, b);
    n.value = Tensor<T>(av.shape);
    for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] + bv.data[i];
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::Id Graph<T>::scale(Id x, T factor) {
    const auto& xv = cat(x).value;
    Node n;
    n.op = Op::Scale;
    n.in[0] = x;
    n.f0 = factor;
    n.needs_grad = any_needs_grad(x);
    n.value = Tensor<T>(xv.shape);
    for (std::size_t i = 0; i < xv.size(); ++i) n.value.data[i] = factor * xv.data[i];
    return push(std::move(n));
}

template <typename T>
std::span<const T> Graph<T>::grad_of(Id id) const {
    const Node& n = cat(id);
    return {n.grad.data(), n.grad.size()};
}

template <typename T>
void Graph<T>::ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
}

template <typename T>
void Graph<T>::backward(Id loss) {
    Node& root = at(loss);
    if (root.value.size() != 1) fail("backward: loss must be scalar, got " + shape_str(root.value.shape));
    if (!root.needs_grad) return;  // nothing trainable upstream

    // mark nodes reachable from the loss
    std::vector<char> live(nodes_.size(), 0);
    std::vector<Id> stack{loss};
    live[loss] = 1;
    while (!stack.empty()) {
        Id id = stack.back();
        stack.pop_back();
        for (Id in : nodes_[id].in)
            if (in >= 0 && !live[in] && nodes_[in].needs_grad) {
                live[in] = 1;
                stack.push_back(in);
            }
    }

    ensure_grad(root);
    root.grad[0] = T(1);
    for (Id id = loss; id >= 0; --id) {
        if (!live[id] || !nodes_[id].needs_grad) continue;
        backward_node(id);
    }
}

template <typename T>
void Graph<T>::backward_node(Id id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) return;  // never received upstream gradient

    auto in_grad = [&](int slot) -> T* {
        Id i = n.in[slot];
        if (i < 0) return nullptr;
        Node& src = nodes_[i];
        if (!src.needs_grad) return nullptr;
        ensure_grad(src);
        return src.grad.data();
    };
    auto in_val = [&](int slot) -> const Tensor<T>& { return nodes_[n.in[slot]].value; };

    switch (n.op) {
        case Op::Input:
            break;
        case Op::Param:
            if (n.external && n.external->requires_grad) n.external->accumulate_grad({n.grad.data(), n.grad.size()});
            break;
        case Op::Conv2d:
            conv2d_backward(in_val(0).data.data(), in_val(1).data.data(), n.grad.data(), in_grad(0), in_grad(1),
                            in_grad(2), n.geom);
            break;
        case Op::ConvTranspose2d:
            conv_transpose2d_backward(in_val(0).data.data(), in_val(1).data.data(), n.grad.data(), in_grad(0),
                                      in_grad(1), in_grad(2), n.geom);
            break;
        case Op::Dense:
            dense_backward(in_val(0).data.data(), in_val(1).data.data(), n.grad.data(), in_grad(0), in_grad(1),
                           in_grad(2), in_val(0).shape[0], in_val(0).shape[1], in_val(1).shape[1]);
            break;
        case Op::LeakyRelu:
            if (T* dx = in_grad(0)) leaky_relu_backward(in_val(0).data.data(), n.grad.data(), dx, n.value.size(), n.f0);
            break;
        case Op::Sigmoid:
            if (T* dx = in_grad(0)) sigmoid_backward(n.value.data.data(), n.grad.data(), dx, n.value.size());
            break;
        case Op::Tanh:
            if (T* dx = in_grad(0)) tanh_backward(n.value.data.data(), n.grad.data(), dx, n.value.size());
            break;
        case Op::Softmax:
            if (T* dx = in_grad(0))
                softmax_backward(n.value.data.data(), n.grad.data(), dx, n.i0, n.i2, n.i1);
            break;
        case Op::MseLoss:
            mse_backward(in_val(0).data.data(), in_val(1).data.data(), n.grad[0], in_grad(0), in_grad(1),
                         in_val(0).size());
            break;
        case Op::BceLogitsLoss:
            if (T* dl = in_grad(0))
                bce_logits_backward(in_val(0).data.data(), in_val(1).data.data(), n.grad[0], dl, in_val(0).size());
            break;
        case Op::Reshape:
            if (T* dx = in_grad(0))
                for (std::size_t i = 0; i < n.grad.size(); ++i) dx[i] += n.grad[i];
            break;
        case Op::ConcatCols: {
            const int rows = n.value.shape[0], ca = n.i0, cb = n.i1;
            T* da = in_grad(0);
            T* db = in_grad(1);
            for (int r = 0; r < rows; ++r) {
                const T* g = n.grad.data() + static_cast<std::size_t>(r) * (ca + cb);
                if (da)
                    for (int j = 0; j < ca; ++j) da[static_cast<std::size_t>(r) * ca + j] += g[j];
                if (db)
                    for (int j = 0; j < cb; ++j) db[static_cast<std::size_t>(r) * cb + j] += g[ca + j];
            }
            break;
        }
        case Op::Add:
            if (T* da = in_grad(0))
                for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += n.grad[i];
            if (T* db = in_grad(1))
                for (std::size_t i = 0; i < n.grad.size(); ++i) db[i] += n.grad[i];
            break;
        case Op::Scale:
            if (T* dx = in_grad(0))
                for (std::size_t i = 0; i < n.grad.size(); ++i) dx[i] += n.f0 * n.grad[i];
            break;
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace caae
