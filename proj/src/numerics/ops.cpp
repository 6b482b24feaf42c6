#include "pmkg/numerics/ops.hpp"

#include <algorithm>
#include <cmath>

#include "pmkg/error.hpp"

namespace pmkg::ops {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) fail_numeric("invalid-node");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) fail_numeric("foreign-node", "operands recorded on different tapes");
}

std::size_t inner_dim(const Tensor& t) { return t.cols(); }
std::size_t outer_dim(const Tensor& t) { return t.rows(); }

}  // namespace

Var add(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return tape_of(a).record(std::move(out), {a.id, b.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             if (auto* ga = s(0)) *ga += g;
                             if (auto* gb = s(1)) *gb += g;
                           });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out -= b.value();
  return tape_of(a).record(std::move(out), {a.id, b.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             if (auto* ga = s(0)) *ga += g;
                             if (auto* gb = s(1)) *gb -= g;
                           });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape_of(a).record(std::move(out), {a.id, b.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             const Tensor& av = s.input(0);
                             const Tensor& bv = s.input(1);
                             if (auto* ga = s(0)) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
                             }
                             if (auto* gb = s(1)) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
                             }
                           });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  out *= factor;
  return tape_of(a).record(std::move(out), {a.id},
                           [factor](const Tensor& g, const Tensor&, GradSlots& s) {
                             if (auto* ga = s(0)) ga->axpy(factor, g);
                           });
}

Var add_scalar(Var a, double offset) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += offset;
  return tape_of(a).record(std::move(out), {a.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             if (auto* ga = s(0)) *ga += g;
                           });
}

Var scale_by(Var a, Var factor) {
  same_tape(a, factor);
  const double f = factor.value().item();
  Tensor out = a.value();
  out *= f;
  return tape_of(a).record(std::move(out), {a.id, factor.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             const Tensor& av = s.input(0);
                             const double fv = s.input(1)[0];
                             if (auto* ga = s(0)) ga->axpy(fv, g);
                             if (auto* gf = s(1)) {
                               (*gf)[0] += pmkg::dot(g.values(), av.values());
                             }
                           });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) fail_numeric("empty-sum", "add_n needs at least one term");
  Tensor out = terms.front().value();
  std::vector<std::uint32_t> ids{terms.front().id};
  for (std::size_t i = 1; i < terms.size(); ++i) {
    same_tape(terms.front(), terms[i]);
    out += terms[i].value();
    ids.push_back(terms[i].id);
  }
  const std::size_t n = terms.size();
  return tape_of(terms.front())
      .record(std::move(out), std::move(ids), [n](const Tensor& g, const Tensor&, GradSlots& s) {
        for (std::size_t k = 0; k < n; ++k) {
          if (auto* gk = s(k)) *gk += g;
        }
      });
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!bv.is_matrix()) fail_numeric("shape-mismatch", "matmul right operand must be a matrix");
  const std::size_t n = outer_dim(av);
  const std::size_t k = inner_dim(av);
  const std::size_t m = bv.cols();
  if (bv.rows() != k) {
    fail_numeric("dim-mismatch", "matmul " + shape_string(av.shape()) + " · " +
                                     shape_string(bv.shape()));
  }
  Tensor out = av.is_matrix() ? Tensor({n, m}) : Tensor({m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.values().data() + p * m;
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += x * brow[j];
    }
  }
  return tape_of(a).record(
      std::move(out), {a.id, b.id}, [n, k, m](const Tensor& g, const Tensor&, GradSlots& s) {
        const Tensor& av = s.input(0);
        const Tensor& bv = s.input(1);
        if (auto* ga = s(0)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              (*ga)[i * k + p] += pmkg::dot(g.values().subspan(i * m, m), bv.values().subspan(p * m, m));
            }
          }
        }
        if (auto* gb = s(1)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double x = av[i * k + p];
              if (x == 0.0) continue;
              for (std::size_t j = 0; j < m; ++j) (*gb)[p * m + j] += x * g[i * m + j];
            }
          }
        }
      });
}

Var matmul_bt(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = outer_dim(av);
  const std::size_t k = inner_dim(av);
  const std::size_t m = outer_dim(bv);
  if (!av.is_matrix() || !bv.is_matrix() || bv.cols() != k) {
    fail_numeric("dim-mismatch", "matmul_bt " + shape_string(av.shape()) + " · " +
                                     shape_string(bv.shape()) + "ᵀ");
  }
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = pmkg::dot(av.row(i), bv.row(j));
  }
  return tape_of(a).record(
      std::move(out), {a.id, b.id}, [n, k, m](const Tensor& g, const Tensor&, GradSlots& s) {
        const Tensor& av = s.input(0);
        const Tensor& bv = s.input(1);
        if (auto* ga = s(0)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double gij = g.at(i, j);
              for (std::size_t p = 0; p < k; ++p) ga->at(i, p) += gij * bv.at(j, p);
            }
        }
        if (auto* gb = s(1)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double gij = g.at(i, j);
              for (std::size_t p = 0; p < k; ++p) gb->at(j, p) += gij * av.at(i, p);
            }
        }
      });
}

Var add_row(Var matrix, Var row_vec) {
  same_tape(matrix, row_vec);
  const Tensor& mv = matrix.value();
  const Tensor& rv = row_vec.value();
  if (rv.size() != mv.cols()) fail_numeric("dim-mismatch", "add_row");
  Tensor out = mv;
  const std::size_t n = mv.rows();
  const std::size_t m = mv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += rv[j];
  return tape_of(matrix).record(std::move(out), {matrix.id, row_vec.id},
                                [n, m](const Tensor& g, const Tensor&, GradSlots& s) {
                                  if (auto* gm = s(0)) *gm += g;
                                  if (auto* gr = s(1)) {
                                    for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < m; ++j) (*gr)[j] += g[i * m + j];
                                  }
                                });
}

Var concat(const std::vector<Var>& vectors) {
  if (vectors.empty()) fail_numeric("empty-concat");
  std::vector<double> values;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& v : vectors) {
    same_tape(vectors.front(), v);
    offsets.push_back(values.size());
    const auto span = v.value().values();
    values.insert(values.end(), span.begin(), span.end());
    ids.push_back(v.id);
  }
  return tape_of(vectors.front())
      .record(Tensor::vector(std::move(values)), std::move(ids),
              [offsets](const Tensor& g, const Tensor&, GradSlots& s) {
                for (std::size_t k = 0; k < offsets.size(); ++k) {
                  if (auto* gk = s(k)) {
                    for (std::size_t i = 0; i < gk->size(); ++i) (*gk)[i] += g[offsets[k] + i];
                  }
                }
              });
}

Var concat_cols(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows() || !av.is_matrix() || !bv.is_matrix()) {
    fail_numeric("dim-mismatch", "concat_cols " + shape_string(av.shape()) + " and " +
                                     shape_string(bv.shape()));
  }
  const std::size_t n = av.rows();
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Tensor out({n, ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.values().data() + i * ca, ca, &out[i * (ca + cb)]);
    std::copy_n(bv.values().data() + i * cb, cb, &out[i * (ca + cb) + ca]);
  }
  return tape_of(a).record(std::move(out), {a.id, b.id},
                           [n, ca, cb](const Tensor& g, const Tensor&, GradSlots& s) {
                             const std::size_t w = ca + cb;
                             if (auto* ga = s(0)) {
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t j = 0; j < ca; ++j) (*ga)[i * ca + j] += g[i * w + j];
                             }
                             if (auto* gb = s(1)) {
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t j = 0; j < cb; ++j)
                                   (*gb)[i * cb + j] += g[i * w + ca + j];
                             }
                           });
}

Var stack_rows(const std::vector<Var>& vectors) {
  if (vectors.empty()) fail_numeric("empty-stack");
  const std::size_t m = vectors.front().value().size();
  std::vector<double> values;
  values.reserve(m * vectors.size());
  std::vector<std::uint32_t> ids;
  for (const Var& v : vectors) {
    same_tape(vectors.front(), v);
    if (v.value().size() != m) fail_numeric("dim-mismatch", "stack_rows of unequal lengths");
    const auto span = v.value().values();
    values.insert(values.end(), span.begin(), span.end());
    ids.push_back(v.id);
  }
  const std::size_t n = vectors.size();
  return tape_of(vectors.front())
      .record(Tensor::matrix(n, m, std::move(values)), std::move(ids),
              [n, m](const Tensor& g, const Tensor&, GradSlots& s) {
                for (std::size_t k = 0; k < n; ++k) {
                  if (auto* gk = s(k)) {
                    for (std::size_t j = 0; j < m; ++j) (*gk)[j] += g[k * m + j];
                  }
                }
              });
}

Var repeat_rows(Var vec, std::size_t count) {
  const Tensor& v = vec.value();
  const std::size_t m = v.size();
  Tensor out({count, m});
  for (std::size_t i = 0; i < count; ++i) std::copy_n(v.values().data(), m, &out[i * m]);
  return tape_of(vec).record(std::move(out), {vec.id},
                             [count, m](const Tensor& g, const Tensor&, GradSlots& s) {
                               if (auto* gv = s(0)) {
                                 for (std::size_t i = 0; i < count; ++i)
                                   for (std::size_t j = 0; j < m; ++j) (*gv)[j] += g[i * m + j];
                               }
                             });
}

Var row(Var matrix, std::size_t index) {
  const Tensor& mv = matrix.value();
  if (!mv.is_matrix() || index >= mv.rows()) fail_numeric("index-out-of-range", "row");
  const std::size_t m = mv.cols();
  const auto span = mv.row(index);
  return tape_of(matrix).record(Tensor::vector(std::vector<double>(span.begin(), span.end())),
                                {matrix.id},
                                [index, m](const Tensor& g, const Tensor&, GradSlots& s) {
                                  if (auto* gm = s(0)) {
                                    for (std::size_t j = 0; j < m; ++j) (*gm)[index * m + j] += g[j];
                                  }
                                });
}

Var mean_rows(Var matrix) {
  const Tensor& mv = matrix.value();
  const std::size_t n = mv.rows();
  const std::size_t m = mv.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += mv[i * m + j];
  out *= 1.0 / static_cast<double>(n);
  return tape_of(matrix).record(std::move(out), {matrix.id},
                                [n, m](const Tensor& g, const Tensor&, GradSlots& s) {
                                  if (auto* gm = s(0)) {
                                    const double inv = 1.0 / static_cast<double>(n);
                                    for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < m; ++j) (*gm)[i * m + j] += g[j] * inv;
                                  }
                                });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return tape_of(a).record(Tensor::scalar(total), {a.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             if (auto* ga = s(0)) {
                               for (auto& v : ga->values()) v += g[0];
                             }
                           });
}

Var dot(Var a, Var b) {
  same_tape(a, b);
  if (a.value().size() != b.value().size()) fail_numeric("dim-mismatch", "dot");
  const double value = pmkg::dot(a.value().values(), b.value().values());
  return tape_of(a).record(Tensor::scalar(value), {a.id, b.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             if (auto* ga = s(0)) ga->axpy(g[0], s.input(1));
                             if (auto* gb = s(1)) gb->axpy(g[0], s.input(0));
                           });
}

Var l2_norm(Var a) {
  const double norm = pmkg::l2_norm(a.value().values());
  // The subgradient at the origin is taken as zero.
  return tape_of(a).record(Tensor::scalar(norm), {a.id},
                           [](const Tensor& g, const Tensor& out, GradSlots& s) {
                             if (out[0] == 0.0) return;
                             if (auto* ga = s(0)) ga->axpy(g[0] / out[0], s.input(0));
                           });
}

Var cosine(Var a, Var b) {
  same_tape(a, b);
  const auto av = a.value().values();
  const auto bv = b.value().values();
  if (av.size() != bv.size()) fail_numeric("dim-mismatch", "cosine");
  const double na = pmkg::l2_norm(av);
  const double nb = pmkg::l2_norm(bv);
  if (na == 0.0 || nb == 0.0) fail_numeric("zero-vector", "cosine similarity of a zero vector");
  const double c = pmkg::dot(av, bv) / (na * nb);
  return tape_of(a).record(
      Tensor::scalar(c), {a.id, b.id}, [na, nb](const Tensor& g, const Tensor& out, GradSlots& s) {
        const Tensor& av = s.input(0);
        const Tensor& bv = s.input(1);
        const double c = out[0];
        // ∂c/∂a = b/(|a||b|) − c·a/|a|²
        if (auto* ga = s(0)) {
          for (std::size_t i = 0; i < av.size(); ++i)
            (*ga)[i] += g[0] * (bv[i] / (na * nb) - c * av[i] / (na * na));
        }
        if (auto* gb = s(1)) {
          for (std::size_t i = 0; i < bv.size(); ++i)
            (*gb)[i] += g[0] * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
        }
      });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  return tape_of(a).record(std::move(out), {a.id},
                           [](const Tensor& g, const Tensor& out, GradSlots& s) {
                             if (auto* ga = s(0)) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * out[i];
                             }
                           });
}

Var log(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) {
    if (!(v > 0.0)) fail_numeric("log-domain", "log of a non-positive value");
    v = std::log(v);
  }
  return tape_of(a).record(std::move(out), {a.id},
                           [](const Tensor& g, const Tensor&, GradSlots& s) {
                             const Tensor& av = s.input(0);
                             if (auto* ga = s(0)) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / av[i];
                             }
                           });
}

Var logsumexp(Var a) {
  const auto in = a.value().values();
  if (in.empty()) fail_numeric("empty-logits");
  const double peak = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (double v : in) total += std::exp(v - peak);
  const double value = peak + std::log(total);
  return tape_of(a).record(Tensor::scalar(value), {a.id},
                           [](const Tensor& g, const Tensor& out, GradSlots& s) {
                             const Tensor& av = s.input(0);
                             if (auto* ga = s(0)) {
                               for (std::size_t i = 0; i < av.size(); ++i)
                                 (*ga)[i] += g[0] * std::exp(av[i] - out[0]);
                             }
                           });
}

Var leaky_relu(Var a, double slope) {
  if (slope < 0.0 || slope >= 1.0 + 1e-15) fail_numeric("bad-slope", "slope must lie in [0,1]");
  Tape& tape = tape_of(a);
  std::uint64_t signs = 0;
  std::size_t bit = 0;
  for (double v : a.value().values()) {
    if (v >= 0.0) signs |= (1ull << (bit % 64));
    if (++bit % 64 == 0) {
      tape.note_branch(signs);
      signs = 0;
    }
  }
  tape.note_branch(signs);
  return tape.record(pmkg::leaky_relu(a.value(), slope), {a.id},
                     [slope](const Tensor& g, const Tensor&, GradSlots& s) {
                       const Tensor& av = s.input(0);
                       if (auto* ga = s(0)) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*ga)[i] += av[i] >= 0.0 ? g[i] : slope * g[i];
                       }
                     });
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var softmax(Var logits) {
  Tensor out = pmkg::softmax(logits.value());
  return tape_of(logits).record(std::move(out), {logits.id},
                                [](const Tensor& g, const Tensor& y, GradSlots& s) {
                                  if (auto* gl = s(0)) {
                                    const double inner = pmkg::dot(g.values(), y.values());
                                    for (std::size_t i = 0; i < y.size(); ++i)
                                      (*gl)[i] += y[i] * (g[i] - inner);
                                  }
                                });
}

Var softmax_rows(Var matrix) {
  const Tensor& mv = matrix.value();
  if (!mv.is_matrix()) fail_numeric("shape-mismatch", "softmax_rows expects a matrix");
  const std::size_t n = mv.rows();
  const std::size_t m = mv.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = pmkg::softmax(Tensor::vector(std::vector<double>(mv.row(i).begin(), mv.row(i).end())));
    std::copy_n(r.values().data(), m, &out[i * m]);
  }
  return tape_of(matrix).record(std::move(out), {matrix.id},
                                [n, m](const Tensor& g, const Tensor& y, GradSlots& s) {
                                  if (auto* gm = s(0)) {
                                    for (std::size_t i = 0; i < n; ++i) {
                                      const double inner =
                                          pmkg::dot(g.values().subspan(i * m, m), y.values().subspan(i * m, m));
                                      for (std::size_t j = 0; j < m; ++j)
                                        (*gm)[i * m + j] += y[i * m + j] * (g[i * m + j] - inner);
                                    }
                                  }
                                });
}

Var reshape(Var a, Tensor::Shape shape) {
  const Tensor& av = a.value();
  Tensor out(std::move(shape), std::vector<double>(av.values().begin(), av.values().end()));
  return tape_of(a).record(std::move(out), {a.id}, [](const Tensor& g, const Tensor&, GradSlots& s) {
    if (auto* ga = s(0)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
  });
}

Var stop_gradient(Var a) { return tape_of(a).constant(a.value()); }

}  // namespace pmkg::ops
