#pragma once

#include <functional>
#include <vector>

#include "masa/conv.hpp"
#include "masa/rng.hpp"
#include "masa/tensor.hpp"

namespace masa {

// Reverse-mode differentiation tape. Tensors live in an arena and are
// referenced by id; every recorded operation's inputs precede it, so one
// reverse sweep visits each node exactly once. Gradients accumulate by
// summation when a tensor feeds multiple consumers.
//
// A tape is single-threaded by contract. Parallelism happens inside the
// convolution kernels (see conv.hpp) and across independent tapes.
class Tape {
public:
    // Leaves. push_param marks the tensor as requiring a gradient.
    int push(Tensor t);
    int push_param(const Tensor& t);

    const Tensor& val(int id) const { return vals_[static_cast<std::size_t>(id)]; }
    const std::vector<double>& grad(int id) const { return grads_[static_cast<std::size_t>(id)]; }

    // --- primitive ops -----------------------------------------------------
    int conv2d(int x, int kernels, const Conv2dSpec& spec);
    int prelu(int x, int alpha);          // alpha: one slope per axis-0 channel, or a single scalar
    int weight_norm(int direction, int gain);
    int dropout(int x, double rate, bool training, Pcg32 rng);
    int linear(int x, int w, int b);      // affine map on the last axis
    int add(int a, int b);
    int mul(int a, int b);
    int scale(int a, double c);
    int sum(int a);
    int mean(int a);
    int concat_axis0(const std::vector<int>& parts);
    int mean_of(const std::vector<int>& parts);   // elementwise mean of same-shape tensors
    int reshape(int a, Shape s);
    int rows_from_channels(int a);        // (ch, 1, t) -> (t, ch)
    int mean_rows(int a);                 // (n, d) -> (d)
    int last_row(int a);                  // (n, d) -> (d)
    int flatten(int a);

    // --- fused losses (analytic backward, finite-difference checked) -------
    // 1 - CCC between a prediction tensor and a constant target, population
    // moments. Degenerate case (both sides constant and equal) yields 0 loss
    // and zero gradient.
    int ccc_loss_vs(int pred, const std::vector<double>& target);
    // Softmax cross-entropy of a logit vector against a smoothed one-hot
    // target (1-eps)*onehot + eps/K.
    int cross_entropy_smoothed(int logits, int label, double eps);
    int mean_scalars(const std::vector<int>& ids);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Requires a
    // scalar loss. Populates grad buffers for every tensor on the tape.
    void backward(int loss);

    void reset();
    std::size_t size() const { return vals_.size(); }

private:
    struct Node {
        std::function<void(Tape&)> back;
    };

    std::vector<double>& gbuf(int id) { return grads_[static_cast<std::size_t>(id)]; }

    std::vector<Tensor> vals_;
    std::vector<std::vector<double>> grads_;
    std::vector<Node> nodes_;
};

}  // namespace masa
