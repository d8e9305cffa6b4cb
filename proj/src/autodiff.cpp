// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "vt4s/error.hpp"

namespace vt4s::ad {

namespace {

Tape& tape_of(Var v) {
  assert(v.valid());
  return *v.tape();
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

Mat scalar_mat(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

// ---- Tape --------------------------------------------------------------------

Var Tape::constant(Mat value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant_ref(const Mat& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p, bool trainable) {
  Node n;
  n.ref = &p.value;
  if (trainable) {
    n.sink = &p;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Mat& Tape::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value(); }

bool Tape::requires_grad(Var v) const {
  return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.has_grad) return n.grad;
  return Mat::Zero(n.value().rows(), n.value().cols());
}

Var Tape::record(Mat value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& p : parents) {
    assert(p.tape() == this);
    if (nodes_[static_cast<std::size_t>(p.id())].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ValidationError("backward: root belongs to another tape");
  const Mat& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) throw ValidationError("backward: root must be 1x1");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(root, scalar_mat(1.0));
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink != nullptr) n.sink->grad += n.grad;
  }
}

void Tape::clear() { nodes_.clear(); }

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != bv.rows()) throw ValidationError("matmul: inner dimension mismatch");
  Mat out(av.rows(), bv.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) out.row(i).noalias() = av.row(i) * bv;
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = tape_of(x);
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  const Mat& bv = b.value();
  if (xv.cols() != wv.rows()) throw ValidationError("linear: input dimension mismatch");
  if (bv.rows() != 1 || bv.cols() != wv.cols()) throw ValidationError("linear: bias shape mismatch");
  Mat out(xv.rows(), wv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    out.row(i).noalias() = xv.row(i) * wv;
    out.row(i) += bv;
  }
  const Var parents[] = {x, w, b};
  return t.record(std::move(out), parents, [x, w, b](Tape& tp, const Mat& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, g * w.value().transpose());
    if (tp.requires_grad(w)) tp.accumulate(w, x.value().transpose() * g);
    if (tp.requires_grad(b)) tp.accumulate(b, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Mat out = a.value() + b.value();
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "sub");
  Mat out = a.value() - b.value();
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, -g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a);
  const Mat& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != a.cols()) throw ValidationError("add_row: shape mismatch");
  Mat out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) += rv;
  const Var parents[] = {a, row};
  return t.record(std::move(out), parents, [a, row](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Mat out = a.value() * factor;
  const Var parents[] = {a};
  return t.record(std::move(out), parents,
                  [a, factor](Tape& tp, const Mat& g) { tp.accumulate(a, g * factor); });
}

// ---- shape -------------------------------------------------------------------

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ValidationError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& tp, const Mat& g) {
    Eigen::Index r0 = 0;
    for (const Var& p : saved) {
      const Eigen::Index n = p.rows();
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(r0, n));
      r0 += n;
    }
  });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ValidationError("slice_rows: range out of bounds");
  }
  Mat out = a.value().middleRows(begin, count);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, begin, count](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(a.rows(), a.cols());
    full.middleRows(begin, count) = g;
    tp.accumulate(a, full);
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of(a);
  const Mat& av = a.value();
  if (rows * cols != av.size()) throw ValidationError("reshape: element count mismatch");
  Mat out = Eigen::Map<const Mat>(av.data(), rows, cols);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, const Mat& g) {
    tp.accumulate(a, Eigen::Map<const Mat>(g.data(), a.rows(), a.cols()));
  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  const Mat& av = a.value();
  const auto m = static_cast<double>(av.rows());
  Mat out = Mat::Zero(1, av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) out += av.row(i);
  out /= m;
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, m](Tape& tp, const Mat& g) {
    Mat full(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < full.rows(); ++i) full.row(i) = g / m;
    tp.accumulate(a, full);
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  const Var parents[] = {a};
  return t.record(scalar_mat(a.value().sum()), parents, [a](Tape& tp, const Mat& g) {
    tp.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean_all(Var a) {
  Tape& t = tape_of(a);
  const auto n = static_cast<double>(a.value().size());
  const Var parents[] = {a};
  return t.record(scalar_mat(a.value().sum() / n), parents, [a, n](Tape& tp, const Mat& g) {
    tp.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

// ---- nonlinearities ----------------------------------------------------------

Var relu(Var a) {
  Tape& t = tape_of(a);
  Mat out = a.value().cwiseMax(0.0);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, const Mat& g) {
    tp.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x);
  const Mat& xv = x.value();
  const Mat& gv = gamma.value();
  const Mat& bv = beta.value();
  const Eigen::Index rows = xv.rows();
  const Eigen::Index n = xv.cols();
  if (gv.cols() != n || bv.cols() != n) throw ValidationError("layer_norm: affine shape mismatch");
  Mat xhat(rows, n);
  Mat out(rows, n);
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mean += xv(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = xv(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (Eigen::Index j = 0; j < n; ++j) {
      xhat(i, j) = (xv(i, j) - mean) * is;
      out(i, j) = xhat(i, j) * gv(0, j) + bv(0, j);
    }
  }
  const Var parents[] = {x, gamma, beta};
  return t.record(
      std::move(out), parents,
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, const Mat& g) {
        const Mat& gv2 = gamma.value();
        const Eigen::Index r = g.rows();
        const Eigen::Index c = g.cols();
        if (tp.requires_grad(gamma)) tp.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
        if (tp.requires_grad(beta)) tp.accumulate(beta, g.colwise().sum());
        if (!tp.requires_grad(x)) return;
        Mat dx(r, c);
        for (Eigen::Index i = 0; i < r; ++i) {
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (Eigen::Index j = 0; j < c; ++j) {
            const double dxh = g(i, j) * gv2(0, j);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat(i, j);
          }
          mean_dxhat /= static_cast<double>(c);
          mean_dxhat_xhat /= static_cast<double>(c);
          const double is = inv_std[static_cast<std::size_t>(i)];
          for (Eigen::Index j = 0; j < c; ++j) {
            const double dxh = g(i, j) * gv2(0, j);
            dx(i, j) = is * (dxh - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
          }
        }
        tp.accumulate(x, dx);
      });
}

Var l2_normalize_rows(Var x, double eps) {
  Tape& t = tape_of(x);
  const Mat& xv = x.value();
  Mat out(xv.rows(), xv.cols());
  std::vector<double> norms(static_cast<std::size_t>(xv.rows()));
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    double ss = 0.0;
    for (Eigen::Index j = 0; j < xv.cols(); ++j) ss += xv(i, j) * xv(i, j);
    const double r = std::sqrt(ss);
    norms[static_cast<std::size_t>(i)] = r;
    out.row(i) = xv.row(i) / (r + eps);
  }
  const Var parents[] = {x};
  return t.record(std::move(out), parents, [x, eps, norms = std::move(norms)](Tape& tp, const Mat& g) {
    const Mat& xv2 = x.value();
    Mat dx(xv2.rows(), xv2.cols());
    for (Eigen::Index i = 0; i < xv2.rows(); ++i) {
      const double r = norms[static_cast<std::size_t>(i)];
      dx.row(i) = g.row(i) / (r + eps);
      if (r > 0.0) {
        const double xg = xv2.row(i).dot(g.row(i));
        dx.row(i) -= xv2.row(i) * (xg / (r * (r + eps) * (r + eps)));
      }
    }
    tp.accumulate(x, dx);
  });
}

Var multi_head_attention(Var q, Var k, Var v, int n_head, bool causal) {
  Tape& t = tape_of(q);
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  const Eigen::Index tq = qv.rows();
  const Eigen::Index tk = kv.rows();
  const Eigen::Index d = qv.cols();
  if (n_head <= 0 || d % n_head != 0) throw ValidationError("attention: d not divisible by n_head");
  if (kv.cols() != d || vv.cols() != d || vv.rows() != tk) throw ValidationError("attention: shape mismatch");
  if (causal && tq != tk) throw ValidationError("attention: causal mask needs square attention");
  const Eigen::Index dh = d / n_head;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[h][i * tk + j], zero where masked.
  std::vector<double> probs(static_cast<std::size_t>(n_head * tq * tk), 0.0);
  Mat out = Mat::Zero(tq, d);
  std::vector<double> scores(static_cast<std::size_t>(tk));
  for (int h = 0; h < n_head; ++h) {
    const Eigen::Index c0 = h * dh;
    for (Eigen::Index i = 0; i < tq; ++i) {
      const Eigen::Index last = causal ? i : tk - 1;
      double max_s = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j <= last; ++j) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) s += qv(i, c0 + c) * kv(j, c0 + c);
        s *= inv_sqrt;
        scores[static_cast<std::size_t>(j)] = s;
        max_s = std::max(max_s, s);
      }
      double denom = 0.0;
      for (Eigen::Index j = 0; j <= last; ++j) {
        const double e = std::exp(scores[static_cast<std::size_t>(j)] - max_s);
        scores[static_cast<std::size_t>(j)] = e;
        denom += e;
      }
      double* p_row = &probs[static_cast<std::size_t>((h * tq + i) * tk)];
      for (Eigen::Index j = 0; j <= last; ++j) {
        const double p = scores[static_cast<std::size_t>(j)] / denom;
        p_row[j] = p;
        for (Eigen::Index c = 0; c < dh; ++c) out(i, c0 + c) += p * vv(j, c0 + c);
      }
    }
  }

  const Var parents[] = {q, k, v};
  return t.record(std::move(out), parents,
                  [q, k, v, n_head, causal, dh, inv_sqrt, probs = std::move(probs)](Tape& tp, const Mat& g) {
                    const Mat& qv2 = q.value();
                    const Mat& kv2 = k.value();
                    const Mat& vv2 = v.value();
                    const Eigen::Index tq2 = qv2.rows();
                    const Eigen::Index tk2 = kv2.rows();
                    Mat dq = Mat::Zero(qv2.rows(), qv2.cols());
                    Mat dk = Mat::Zero(kv2.rows(), kv2.cols());
                    Mat dv = Mat::Zero(vv2.rows(), vv2.cols());
                    std::vector<double> dp(static_cast<std::size_t>(tk2));
                    for (int h = 0; h < n_head; ++h) {
                      const Eigen::Index c0 = h * dh;
                      for (Eigen::Index i = 0; i < tq2; ++i) {
                        const Eigen::Index last = causal ? i : tk2 - 1;
                        const double* p_row = &probs[static_cast<std::size_t>((h * tq2 + i) * tk2)];
                        double weighted = 0.0;
                        for (Eigen::Index j = 0; j <= last; ++j) {
                          double s = 0.0;
                          for (Eigen::Index c = 0; c < dh; ++c) s += g(i, c0 + c) * vv2(j, c0 + c);
                          dp[static_cast<std::size_t>(j)] = s;
                          weighted += p_row[j] * s;
                          for (Eigen::Index c = 0; c < dh; ++c) dv(j, c0 + c) += p_row[j] * g(i, c0 + c);
                        }
                        for (Eigen::Index j = 0; j <= last; ++j) {
                          const double ds = p_row[j] * (dp[static_cast<std::size_t>(j)] - weighted) * inv_sqrt;
                          if (ds == 0.0) continue;
                          for (Eigen::Index c = 0; c < dh; ++c) {
                            dq(i, c0 + c) += ds * kv2(j, c0 + c);
                            dk(j, c0 + c) += ds * qv2(i, c0 + c);
                          }
                        }
                      }
                    }
                    tp.accumulate(q, dq);
                    tp.accumulate(k, dk);
                    tp.accumulate(v, dv);
                  });
}

// ---- losses ------------------------------------------------------------------

Var cross_entropy(Var logits, int target) {
  Tape& t = tape_of(logits);
  const Mat& lv = logits.value();
  if (lv.rows() != 1) throw ValidationError("cross_entropy: expects a single logit row");
  if (target < 0 || target >= lv.cols()) throw ValidationError("cross_entropy: target out of range");
  double max_l = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < lv.cols(); ++j) max_l = std::max(max_l, lv(0, j));
  double denom = 0.0;
  Mat probs(1, lv.cols());
  for (Eigen::Index j = 0; j < lv.cols(); ++j) {
    probs(0, j) = std::exp(lv(0, j) - max_l);
    denom += probs(0, j);
  }
  probs /= denom;
  const double loss = max_l + std::log(denom) - lv(0, target);
  const Var parents[] = {logits};
  return t.record(scalar_mat(loss), parents, [logits, target, probs = std::move(probs)](Tape& tp, const Mat& g) {
    Mat d = probs;
    d(0, target) -= 1.0;
    tp.accumulate(logits, d * g(0, 0));
  });
}

Var masked_triplet(Var anchor, const Mat& table, int gt, double margin, TripletForm form) {
  Tape& t = tape_of(anchor);
  const Mat& av = anchor.value();
  const Eigen::Index n_cls = table.rows();
  if (av.rows() != 1 || av.cols() != table.cols()) throw ValidationError("masked_triplet: anchor shape mismatch");
  if (n_cls < 2) throw ValidationError("masked_triplet: needs at least two classes");
  if (gt < 0 || gt >= n_cls) throw ValidationError("masked_triplet: gt class out of range");
  const double sim_pos = av.row(0).dot(table.row(gt));
  const double inv_neg = 1.0 / static_cast<double>(n_cls - 1);
  double total = 0.0;
  Mat dir = Mat::Zero(1, av.cols());  // d loss / d anchor
  for (Eigen::Index i = 0; i < n_cls; ++i) {
    if (i == gt) continue;
    const double sim_neg = av.row(0).dot(table.row(i));
    const double term = form == TripletForm::kCorrected ? margin - sim_pos + sim_neg : sim_pos - sim_neg + margin;
    if (term > 0.0) {
      total += term;
      if (form == TripletForm::kCorrected) {
        dir += table.row(i) - table.row(gt);
      } else {
        dir += table.row(gt) - table.row(i);
      }
    }
  }
  dir *= inv_neg;
  const Var parents[] = {anchor};
  return t.record(scalar_mat(total * inv_neg), parents,
                  [anchor, dir = std::move(dir)](Tape& tp, const Mat& g) { tp.accumulate(anchor, dir * g(0, 0)); });
}

Var cosine_to(Var a, const Mat& target, double eps) {
  Tape& t = tape_of(a);
  const Mat& av = a.value();
  if (av.rows() != 1 || target.rows() != 1 || av.cols() != target.cols()) {
    throw ValidationError("cosine_to: shape mismatch");
  }
  const double na = av.norm();
  const double nb = target.norm();
  const double ca = std::max(na, eps);
  const double cb = std::max(nb, eps);
  const double cosv = av.row(0).dot(target.row(0)) / (ca * cb);
  Mat dir = target / (ca * cb);
  if (na > eps) dir -= av * (cosv / (na * na));
  const Var parents[] = {a};
  return t.record(scalar_mat(cosv), parents,
                  [a, dir = std::move(dir)](Tape& tp, const Mat& g) { tp.accumulate(a, dir * g(0, 0)); });
}

Var l1_mean_to(Var a, const Mat& target) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), target, "l1_mean_to");
  const Mat diff = a.value() - target;
  const auto n = static_cast<double>(diff.size());
  const double loss = diff.cwiseAbs().sum() / n;
  Mat sign = diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }) / n;
  const Var parents[] = {a};
  return t.record(scalar_mat(loss), parents,
                  [a, sign = std::move(sign)](Tape& tp, const Mat& g) { tp.accumulate(a, sign * g(0, 0)); });
}

}  // namespace vt4s::ad
