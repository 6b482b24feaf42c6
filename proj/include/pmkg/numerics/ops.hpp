#pragma once

#include <vector>

#include "pmkg/numerics/tape.hpp"

// Differentiable operations recorded on a Tape. Vectors are rank-1 tensors,
// matrices rank-2; a vector on the left of matmul acts as a 1×n row.
namespace pmkg::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
// a * s where s is a scalar node.
Var scale_by(Var a, Var s);
Var add_n(const std::vector<Var>& terms);

// (n×k | k) · (k×m) → (n×m | m)
Var matmul(Var a, Var b);
// a (n×k) · b(m×k)ᵀ → n×m
Var matmul_bt(Var a, Var b);
// matrix (n×m) + row vector (m), broadcast over rows
Var add_row(Var matrix, Var row);

Var concat(const std::vector<Var>& vectors);
Var concat_cols(Var a, Var b);
Var stack_rows(const std::vector<Var>& vectors);
Var repeat_rows(Var vector, std::size_t count);
Var row(Var matrix, std::size_t index);
Var mean_rows(Var matrix);

Var sum(Var a);
Var dot(Var a, Var b);
Var l2_norm(Var a);
Var cosine(Var a, Var b);
Var exp(Var a);
Var log(Var a);
Var logsumexp(Var a);

Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var softmax(Var logits);
Var softmax_rows(Var matrix);

// Same values, new shape with equal element count.
Var reshape(Var a, Tensor::Shape shape);
Var stop_gradient(Var a);

}  // namespace pmkg::ops
