#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "eegraph/mat.hpp"

namespace eegraph::tape {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Each op records a closure that
// receives the owning tape and the node's upstream gradient and accumulates
// into its parents. Closures never capture the tape itself, so a Tape (and
// anything holding one) stays valid when moved. Values are cached at op
// time, so replaying backward is exact regardless of later parameter
// mutation.
class Tape {
 public:
  Var leaf(Matrix value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& val(Var v) const { return nodes_[check(v)].value; }

  // Gradient of a node; zeros if nothing flowed into it.
  Matrix grad(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.size() == 0) return Matrix(n.value.rows, n.value.cols);
    return n.grad;
  }

  // y = a * b
  Var matmul(Var a, Var b) {
    Matrix y = eegraph::matmul(val(a), val(b));
    return record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, eegraph::matmul(g, transpose(t.val(b))));
      if (t.wants(b)) t.accumulate(b, eegraph::matmul(transpose(t.val(a)), g));
    });
  }

  // y = a * b^T  (the usual "apply weight matrix stored [out x in]" shape)
  Var matmul_nt(Var a, Var b) {
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    if (av.cols != bv.cols) throw std::invalid_argument("matmul_nt: inner dims differ");
    Matrix y(av.rows, bv.rows);
    for (size_t i = 0; i < av.rows; ++i)
      for (size_t j = 0; j < bv.rows; ++j) {
        double s = 0.0;
        for (size_t k = 0; k < av.cols; ++k) s += av(i, k) * bv(j, k);
        y(i, j) = s;
      }
    return record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, eegraph::matmul(g, t.val(b)));
      if (t.wants(b)) t.accumulate(b, eegraph::matmul(transpose(g), t.val(a)));
    });
  }

  Var add(Var a, Var b) {
    Matrix y = val(a) + val(b);
    return record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, g);
      if (t.wants(b)) t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    Matrix y = val(a) - val(b);
    return record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, g);
      if (t.wants(b)) t.accumulate(b, -1.0 * g);
    });
  }

  // y = a + row (row broadcast over rows of a)
  Var add_rowvec(Var a, Var row) {
    const Matrix& av = val(a);
    const Matrix& rv = val(row);
    if (rv.rows != 1 || rv.cols != av.cols) throw std::invalid_argument("add_rowvec: bad row shape");
    Matrix y = av;
    for (size_t i = 0; i < y.rows; ++i)
      for (size_t j = 0; j < y.cols; ++j) y(i, j) += rv(0, j);
    return record(std::move(y), {a, row}, [a, row](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, g);
      if (t.wants(row)) {
        Matrix gr(1, g.cols);
        for (size_t i = 0; i < g.rows; ++i)
          for (size_t j = 0; j < g.cols; ++j) gr(0, j) += g(i, j);
        t.accumulate(row, gr);
      }
    });
  }

  Var mul(Var a, Var b) {
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
    Matrix y = av;
    for (size_t i = 0; i < y.size(); ++i) y.v[i] *= bv.v[i];
    return record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) {
        Matrix ga = g;
        for (size_t i = 0; i < ga.size(); ++i) ga.v[i] *= t.val(b).v[i];
        t.accumulate(a, ga);
      }
      if (t.wants(b)) {
        Matrix gb = g;
        for (size_t i = 0; i < gb.size(); ++i) gb.v[i] *= t.val(a).v[i];
        t.accumulate(b, gb);
      }
    });
  }

  // y = k*a + c elementwise
  Var affine(Var a, double k, double c) {
    Matrix y = val(a);
    for (double& x : y.v) x = k * x + c;
    return record(std::move(y), {a}, [a, k](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, k * g);
    });
  }

  Var sigmoid(Var a) {
    Matrix y = val(a);
    for (double& x : y.v) x = 1.0 / (1.0 + std::exp(-x));
    const int yid = static_cast<int>(nodes_.size());
    return record(std::move(y), {a}, [a, yid](Tape& t, const Matrix& g) {
      if (!t.wants(a)) return;
      Matrix ga = g;
      const Matrix& yv = t.nodes_[static_cast<size_t>(yid)].value;
      for (size_t i = 0; i < ga.size(); ++i) ga.v[i] *= yv.v[i] * (1.0 - yv.v[i]);
      t.accumulate(a, ga);
    });
  }

  Var tanh_(Var a) {
    Matrix y = val(a);
    for (double& x : y.v) x = std::tanh(x);
    const int yid = static_cast<int>(nodes_.size());
    return record(std::move(y), {a}, [a, yid](Tape& t, const Matrix& g) {
      if (!t.wants(a)) return;
      Matrix ga = g;
      const Matrix& yv = t.nodes_[static_cast<size_t>(yid)].value;
      for (size_t i = 0; i < ga.size(); ++i) ga.v[i] *= 1.0 - yv.v[i] * yv.v[i];
      t.accumulate(a, ga);
    });
  }

  Var relu(Var a) {
    Matrix y = val(a);
    for (double& x : y.v) x = x > 0.0 ? x : 0.0;
    return record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
      if (!t.wants(a)) return;
      Matrix ga = g;
      const Matrix& xv = t.val(a);
      for (size_t i = 0; i < ga.size(); ++i)
        if (xv.v[i] <= 0.0) ga.v[i] = 0.0;
      t.accumulate(a, ga);
    });
  }

  // y = a .* mask, mask constant (inverted-dropout masks come pre-scaled)
  Var mul_mask(Var a, Matrix mask) {
    const Matrix& av = val(a);
    if (!av.same_shape(mask)) throw std::invalid_argument("mul_mask: shape mismatch");
    Matrix y = av;
    for (size_t i = 0; i < y.size(); ++i) y.v[i] *= mask.v[i];
    auto m = std::make_shared<Matrix>(std::move(mask));
    return record(std::move(y), {a}, [a, m](Tape& t, const Matrix& g) {
      if (!t.wants(a)) return;
      Matrix ga = g;
      for (size_t i = 0; i < ga.size(); ++i) ga.v[i] *= m->v[i];
      t.accumulate(a, ga);
    });
  }

  // Zero-pad on the right to new_cols.
  Var pad_cols(Var a, size_t new_cols) {
    const Matrix& av = val(a);
    if (new_cols < av.cols) throw std::invalid_argument("pad_cols: shrinking not allowed");
    Matrix y(av.rows, new_cols);
    for (size_t i = 0; i < av.rows; ++i)
      for (size_t j = 0; j < av.cols; ++j) y(i, j) = av(i, j);
    const size_t old_cols = av.cols;
    return record(std::move(y), {a}, [a, old_cols](Tape& t, const Matrix& g) {
      if (!t.wants(a)) return;
      Matrix ga(g.rows, old_cols);
      for (size_t i = 0; i < g.rows; ++i)
        for (size_t j = 0; j < old_cols; ++j) ga(i, j) = g(i, j);
      t.accumulate(a, ga);
    });
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    const Matrix& av = val(a);
    Matrix y(idx.size(), av.cols);
    for (size_t i = 0; i < idx.size(); ++i)
      for (size_t j = 0; j < av.cols; ++j) y(i, j) = av(static_cast<size_t>(idx[i]), j);
    auto ix = std::make_shared<std::vector<int>>(std::move(idx));
    return record(std::move(y), {a}, [a, ix](Tape& t, const Matrix& g) {
      if (!t.wants(a)) return;
      Matrix ga(t.val(a).rows, t.val(a).cols);
      for (size_t i = 0; i < ix->size(); ++i)
        for (size_t j = 0; j < g.cols; ++j) ga(static_cast<size_t>((*ix)[i]), j) += g(i, j);
      t.accumulate(a, ga);
    });
  }

  // Rows of x scaled by a column vector c ([m x 1]).
  Var mul_colvec(Var x, Var c) {
    const Matrix& xv = val(x);
    const Matrix& cv = val(c);
    if (cv.rows != xv.rows || cv.cols != 1) throw std::invalid_argument("mul_colvec: bad col shape");
    Matrix y = xv;
    for (size_t i = 0; i < y.rows; ++i)
      for (size_t j = 0; j < y.cols; ++j) y(i, j) *= cv(i, 0);
    return record(std::move(y), {x, c}, [x, c](Tape& t, const Matrix& g) {
      if (t.wants(x)) {
        Matrix gx = g;
        const Matrix& cv2 = t.val(c);
        for (size_t i = 0; i < gx.rows; ++i)
          for (size_t j = 0; j < gx.cols; ++j) gx(i, j) *= cv2(i, 0);
        t.accumulate(x, gx);
      }
      if (t.wants(c)) {
        const Matrix& xv2 = t.val(x);
        Matrix gc(xv2.rows, 1);
        for (size_t i = 0; i < xv2.rows; ++i) {
          double s = 0.0;
          for (size_t j = 0; j < xv2.cols; ++j) s += g(i, j) * xv2(i, j);
          gc(i, 0) = s;
        }
        t.accumulate(c, gc);
      }
    });
  }

  // y = blockdiag(adjacency) * x for a batch of per-graph adjacencies. The
  // adjacency is data, not a parameter; blocks are symmetric.
  Var block_adj_matmul(std::shared_ptr<const std::vector<Matrix>> blocks,
                       std::shared_ptr<const std::vector<int>> offsets, Var x) {
    const Matrix& xv = val(x);
    Matrix y(xv.rows, xv.cols);
    apply_blocks(*blocks, *offsets, xv, y);
    return record(std::move(y), {x}, [x, blocks, offsets](Tape& t, const Matrix& g) {
      if (!t.wants(x)) return;
      Matrix gx(g.rows, g.cols);
      apply_blocks(*blocks, *offsets, g, gx);  // symmetric blocks: A^T = A
      t.accumulate(x, gx);
    });
  }

  // Train-mode batch norm over rows (per-column statistics, biased variance).
  struct BatchNormOut {
    Var y;
    Matrix mean;  // [1 x C]
    Matrix var;   // [1 x C]
  };

  BatchNormOut batch_norm_train(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Matrix& xv = val(x);
    const size_t m = xv.rows, c = xv.cols;
    if (m < 2) throw std::invalid_argument("batch_norm_train: batch of 1 node");
    Matrix mean(1, c), var(1, c);
    for (size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (size_t i = 0; i < m; ++i) s += xv(i, j);
      mean(0, j) = s / static_cast<double>(m);
    }
    for (size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (size_t i = 0; i < m; ++i) {
        const double d = xv(i, j) - mean(0, j);
        s += d * d;
      }
      var(0, j) = s / static_cast<double>(m);
    }
    auto xhat = std::make_shared<Matrix>(m, c);
    auto istd = std::make_shared<Matrix>(1, c);
    for (size_t j = 0; j < c; ++j) (*istd)(0, j) = 1.0 / std::sqrt(var(0, j) + eps);
    Matrix y(m, c);
    const Matrix& gv = val(gamma);
    const Matrix& bv = val(beta);
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < c; ++j) {
        (*xhat)(i, j) = (xv(i, j) - mean(0, j)) * (*istd)(0, j);
        y(i, j) = gv(0, j) * (*xhat)(i, j) + bv(0, j);
      }
    Var yv = record(std::move(y), {x, gamma, beta},
                    [x, gamma, beta, xhat, istd, m](Tape& t, const Matrix& g) {
                      const size_t cc = g.cols;
                      if (t.wants(gamma)) {
                        Matrix gg(1, cc);
                        for (size_t i = 0; i < m; ++i)
                          for (size_t j = 0; j < cc; ++j) gg(0, j) += g(i, j) * (*xhat)(i, j);
                        t.accumulate(gamma, gg);
                      }
                      if (t.wants(beta)) {
                        Matrix gb(1, cc);
                        for (size_t i = 0; i < m; ++i)
                          for (size_t j = 0; j < cc; ++j) gb(0, j) += g(i, j);
                        t.accumulate(beta, gb);
                      }
                      if (t.wants(x)) {
                        // Standard batch-norm backward from saved statistics.
                        const Matrix& gv2 = t.val(gamma);
                        Matrix gx(m, cc);
                        for (size_t j = 0; j < cc; ++j) {
                          double sum_gy = 0.0, sum_gy_xhat = 0.0;
                          for (size_t i = 0; i < m; ++i) {
                            const double gy = g(i, j) * gv2(0, j);
                            sum_gy += gy;
                            sum_gy_xhat += gy * (*xhat)(i, j);
                          }
                          const double inv_m = 1.0 / static_cast<double>(m);
                          for (size_t i = 0; i < m; ++i) {
                            const double gy = g(i, j) * gv2(0, j);
                            gx(i, j) = (*istd)(0, j) *
                                       (gy - inv_m * sum_gy - (*xhat)(i, j) * inv_m * sum_gy_xhat);
                          }
                        }
                        t.accumulate(x, gx);
                      }
                    });
    return BatchNormOut{yv, std::move(mean), std::move(var)};
  }

  // Eval-mode batch norm with fixed running statistics.
  Var batch_norm_eval(Var x, Var gamma, Var beta, const Matrix& running_mean,
                      const Matrix& running_var, double eps = 1e-5) {
    const Matrix& xv = val(x);
    const size_t c = xv.cols;
    auto istd = std::make_shared<Matrix>(1, c);
    auto rm = std::make_shared<Matrix>(running_mean);
    for (size_t j = 0; j < c; ++j) (*istd)(0, j) = 1.0 / std::sqrt(running_var(0, j) + eps);
    Matrix y(xv.rows, c);
    const Matrix& gv = val(gamma);
    const Matrix& bv = val(beta);
    for (size_t i = 0; i < xv.rows; ++i)
      for (size_t j = 0; j < c; ++j)
        y(i, j) = gv(0, j) * (xv(i, j) - (*rm)(0, j)) * (*istd)(0, j) + bv(0, j);
    return record(std::move(y), {x, gamma, beta},
                  [x, gamma, beta, istd, rm](Tape& t, const Matrix& g) {
                    const Matrix& xv2 = t.val(x);
                    const size_t cc = g.cols;
                    if (t.wants(gamma)) {
                      Matrix gg(1, cc);
                      for (size_t i = 0; i < g.rows; ++i)
                        for (size_t j = 0; j < cc; ++j)
                          gg(0, j) += g(i, j) * (xv2(i, j) - (*rm)(0, j)) * (*istd)(0, j);
                      t.accumulate(gamma, gg);
                    }
                    if (t.wants(beta)) {
                      Matrix gb(1, cc);
                      for (size_t i = 0; i < g.rows; ++i)
                        for (size_t j = 0; j < cc; ++j) gb(0, j) += g(i, j);
                      t.accumulate(beta, gb);
                    }
                    if (t.wants(x)) {
                      Matrix gx = g;
                      const Matrix& gv2 = t.val(gamma);
                      for (size_t i = 0; i < gx.rows; ++i)
                        for (size_t j = 0; j < cc; ++j) gx(i, j) *= gv2(0, j) * (*istd)(0, j);
                      t.accumulate(x, gx);
                    }
                  });
  }

  // m_i = channelwise max of x over {j : mask(i,j) = 1}; gradient routes to
  // the argmax entries.
  Var masked_rowwise_max(Var x, std::shared_ptr<const Matrix> mask) {
    const Matrix& xv = val(x);
    const size_t n = xv.rows, c = xv.cols;
    if (mask->rows != n || mask->cols != n)
      throw std::invalid_argument("masked_rowwise_max: mask shape");
    Matrix y(n, c);
    auto arg = std::make_shared<std::vector<int>>(n * c, -1);
    for (size_t i = 0; i < n; ++i) {
      bool any = false;
      for (size_t j = 0; j < n; ++j) {
        if ((*mask)(i, j) == 0.0) continue;
        if (!any) {
          for (size_t ch = 0; ch < c; ++ch) {
            y(i, ch) = xv(j, ch);
            (*arg)[i * c + ch] = static_cast<int>(j);
          }
          any = true;
        } else {
          for (size_t ch = 0; ch < c; ++ch)
            if (xv(j, ch) > y(i, ch)) {
              y(i, ch) = xv(j, ch);
              (*arg)[i * c + ch] = static_cast<int>(j);
            }
        }
      }
      if (!any) throw std::invalid_argument("masked_rowwise_max: empty neighborhood row");
    }
    return record(std::move(y), {x}, [x, arg, c](Tape& t, const Matrix& g) {
      if (!t.wants(x)) return;
      Matrix gx(t.val(x).rows, t.val(x).cols);
      for (size_t i = 0; i < g.rows; ++i)
        for (size_t ch = 0; ch < c; ++ch)
          gx(static_cast<size_t>((*arg)[i * c + ch]), ch) += g(i, ch);
      t.accumulate(x, gx);
    });
  }

  // score(i,j) = sum_d omega_d * lrelu(P(i,d) + Q(j,d)) on masked pairs.
  // omega is [C x 1].
  Var attention_scores(Var p, Var q, Var omega, std::shared_ptr<const Matrix> mask, double slope) {
    const Matrix& pv = val(p);
    const Matrix& qv = val(q);
    const Matrix& ov = val(omega);
    const size_t n = pv.rows, c = pv.cols;
    if (qv.rows != n || qv.cols != c || ov.rows != c || ov.cols != 1)
      throw std::invalid_argument("attention_scores: shape mismatch");
    Matrix y(n, n);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        if ((*mask)(i, j) == 0.0) continue;
        double s = 0.0;
        for (size_t d = 0; d < c; ++d) {
          const double t = pv(i, d) + qv(j, d);
          s += ov(d, 0) * (t > 0.0 ? t : slope * t);
        }
        y(i, j) = s;
      }
    return record(std::move(y), {p, q, omega},
                  [p, q, omega, mask, slope](Tape& t, const Matrix& g) {
                    const Matrix& pv2 = t.val(p);
                    const Matrix& qv2 = t.val(q);
                    const Matrix& ov2 = t.val(omega);
                    const size_t n2 = pv2.rows, c2 = pv2.cols;
                    Matrix gp(n2, c2), gq(n2, c2), go(c2, 1);
                    for (size_t i = 0; i < n2; ++i)
                      for (size_t j = 0; j < n2; ++j) {
                        if ((*mask)(i, j) == 0.0 || g(i, j) == 0.0) continue;
                        const double gij = g(i, j);
                        for (size_t d = 0; d < c2; ++d) {
                          const double arg = pv2(i, d) + qv2(j, d);
                          const double f = arg > 0.0 ? arg : slope * arg;
                          const double fp = arg > 0.0 ? 1.0 : slope;
                          go(d, 0) += gij * f;
                          const double w = gij * ov2(d, 0) * fp;
                          gp(i, d) += w;
                          gq(j, d) += w;
                        }
                      }
                    if (t.wants(p)) t.accumulate(p, gp);
                    if (t.wants(q)) t.accumulate(q, gq);
                    if (t.wants(omega)) t.accumulate(omega, go);
                  });
  }

  // Row-wise softmax restricted to masked entries; unmasked entries are 0.
  Var masked_softmax_rows(Var s, std::shared_ptr<const Matrix> mask) {
    const Matrix& sv = val(s);
    const size_t n = sv.rows;
    Matrix y(n, sv.cols);
    for (size_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (size_t j = 0; j < sv.cols; ++j)
        if ((*mask)(i, j) != 0.0) mx = std::max(mx, sv(i, j));
      if (mx == -1e300) throw std::invalid_argument("masked_softmax_rows: empty row");
      double denom = 0.0;
      for (size_t j = 0; j < sv.cols; ++j)
        if ((*mask)(i, j) != 0.0) denom += std::exp(sv(i, j) - mx);
      for (size_t j = 0; j < sv.cols; ++j)
        if ((*mask)(i, j) != 0.0) y(i, j) = std::exp(sv(i, j) - mx) / denom;
    }
    const int yid = static_cast<int>(nodes_.size());
    return record(std::move(y), {s}, [s, mask, yid](Tape& t, const Matrix& g) {
      if (!t.wants(s)) return;
      const Matrix& yv = t.nodes_[static_cast<size_t>(yid)].value;
      Matrix gs(yv.rows, yv.cols);
      for (size_t i = 0; i < yv.rows; ++i) {
        double dot = 0.0;
        for (size_t j = 0; j < yv.cols; ++j)
          if ((*mask)(i, j) != 0.0) dot += g(i, j) * yv(i, j);
        for (size_t j = 0; j < yv.cols; ++j)
          if ((*mask)(i, j) != 0.0) gs(i, j) = yv(i, j) * (g(i, j) - dot);
      }
      t.accumulate(s, gs);
    });
  }

  // Per-graph channelwise max over node rows; graph_of[i] maps row -> graph.
  Var segment_max(Var x, std::shared_ptr<const std::vector<int>> graph_of, int n_graphs) {
    const Matrix& xv = val(x);
    const size_t c = xv.cols;
    if (graph_of->size() != xv.rows) throw std::invalid_argument("segment_max: index size");
    Matrix y(static_cast<size_t>(n_graphs), c);
    auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(n_graphs) * c, -1);
    for (size_t i = 0; i < xv.rows; ++i) {
      const size_t g = static_cast<size_t>((*graph_of)[i]);
      for (size_t ch = 0; ch < c; ++ch) {
        int& a = (*arg)[g * c + ch];
        if (a < 0 || xv(i, ch) > y(g, ch)) {
          y(g, ch) = xv(i, ch);
          a = static_cast<int>(i);
        }
      }
    }
    for (int v : *arg)
      if (v < 0) throw std::invalid_argument("segment_max: empty graph");
    return record(std::move(y), {x}, [x, arg, c](Tape& t, const Matrix& g) {
      if (!t.wants(x)) return;
      Matrix gx(t.val(x).rows, t.val(x).cols);
      for (size_t gi = 0; gi < g.rows; ++gi)
        for (size_t ch = 0; ch < c; ++ch)
          gx(static_cast<size_t>((*arg)[gi * c + ch]), ch) += g(gi, ch);
      t.accumulate(x, gx);
    });
  }

  // Seed the root gradient and sweep the tape in reverse.
  void backward(Var root, const Matrix& seed) {
    Node& r = nodes_[check(root)];
    if (!seed.same_shape(r.value)) throw std::invalid_argument("backward: seed shape mismatch");
    ensure_grad(root.id);
    r.grad = seed;
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.back || n.grad.size() == 0) continue;
      n.back(*this, n.grad);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Matrix&)> back;
  };

  size_t check(Var v) const {
    if (v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
      throw std::invalid_argument("tape: invalid var");
    return static_cast<size_t>(v.id);
  }

  bool wants(Var v) const { return nodes_[check(v)].requires_grad; }

  void ensure_grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) n.grad = Matrix(n.value.rows, n.value.cols);
  }

  void accumulate(Var v, const Matrix& g) {
    ensure_grad(v.id);
    Node& n = nodes_[check(v)];
    for (size_t i = 0; i < g.size(); ++i) n.grad.v[i] += g.v[i];
  }

  Var record(Matrix value, std::initializer_list<Var> parents,
             std::function<void(Tape&, const Matrix&)> back) {
    bool rq = false;
    for (Var p : parents) rq = rq || nodes_[check(p)].requires_grad;
    nodes_.push_back(Node{std::move(value), Matrix(), rq, rq ? std::move(back) : nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  static void apply_blocks(const std::vector<Matrix>& blocks, const std::vector<int>& offsets,
                           const Matrix& x, Matrix& y) {
    for (size_t g = 0; g < blocks.size(); ++g) {
      const Matrix& a = blocks[g];
      const size_t off = static_cast<size_t>(offsets[g]);
      for (size_t i = 0; i < a.rows; ++i)
        for (size_t k = 0; k < a.cols; ++k) {
          const double w = a(i, k);
          if (w == 0.0) continue;
          for (size_t ch = 0; ch < x.cols; ++ch) y(off + i, ch) += w * x(off + k, ch);
        }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace eegraph::tape
