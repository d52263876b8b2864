#include "t2/autodiff.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "t2/util.hpp"

namespace t2::ad {

int Tape::push(Mat value, std::function<void(Tape&)> pull) {
  nodes_.push_back({std::move(value), std::move(pull)});
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::grad_slot(int id) {
  if (!grad_set_[id]) {
    grads_[id] = Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    grad_set_[id] = 1;
  }
  return grads_[id];
}

bool Tape::has_grad(int id) const { return !grad_set_.empty() && grad_set_[id]; }

const Mat& Tape::grad(int id) const {
  if (!has_grad(id)) throw InternalError("grad requested for node without gradient");
  return grads_[id];
}

int Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

int Tape::matmul(int a, int b) {
  if (cols(a) != rows(b)) throw InternalError("matmul: inner dimensions differ");
  Mat v = nodes_[a].value * nodes_[b].value;
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    const Mat& g = t.grads_[id];
    t.grad_slot(a).noalias() += g * t.nodes_[b].value.transpose();
    t.grad_slot(b).noalias() += t.nodes_[a].value.transpose() * g;
  };
  return id;
}

int Tape::transpose(int a) {
  int id = push(nodes_[a].value.transpose(), nullptr);
  nodes_[id].pull = [a, id](Tape& t) { t.grad_slot(a) += t.grads_[id].transpose(); };
  return id;
}

int Tape::add(int a, int b) {
  if (rows(a) != rows(b) || cols(a) != cols(b)) throw InternalError("add: shape mismatch");
  int id = push(nodes_[a].value + nodes_[b].value, nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    t.grad_slot(a) += t.grads_[id];
    t.grad_slot(b) += t.grads_[id];
  };
  return id;
}

int Tape::sub(int a, int b) {
  if (rows(a) != rows(b) || cols(a) != cols(b)) throw InternalError("sub: shape mismatch");
  int id = push(nodes_[a].value - nodes_[b].value, nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    t.grad_slot(a) += t.grads_[id];
    t.grad_slot(b) -= t.grads_[id];
  };
  return id;
}

int Tape::scale(int a, double s) {
  int id = push(nodes_[a].value * s, nullptr);
  nodes_[id].pull = [a, s, id](Tape& t) { t.grad_slot(a) += s * t.grads_[id]; };
  return id;
}

int Tape::cmul(int a, int b) {
  if (rows(a) != rows(b) || cols(a) != cols(b)) throw InternalError("cmul: shape mismatch");
  int id = push(nodes_[a].value.cwiseProduct(nodes_[b].value), nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    t.grad_slot(a) += t.grads_[id].cwiseProduct(t.nodes_[b].value);
    t.grad_slot(b) += t.grads_[id].cwiseProduct(t.nodes_[a].value);
  };
  return id;
}

int Tape::relu(int a) {
  int id = push(nodes_[a].value.cwiseMax(0.0), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    t.grad_slot(a) += t.grads_[id].cwiseProduct(
        (t.nodes_[a].value.array() > 0.0).cast<double>().matrix());
  };
  return id;
}

int Tape::add_row(int a, int bias_row) {
  if (rows(bias_row) != 1 || cols(bias_row) != cols(a)) {
    throw InternalError("add_row: bias must be 1 x cols(a)");
  }
  Mat v = nodes_[a].value;
  v.rowwise() += nodes_[bias_row].value.row(0);
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [a, bias_row, id](Tape& t) {
    t.grad_slot(a) += t.grads_[id];
    t.grad_slot(bias_row) += t.grads_[id].colwise().sum();
  };
  return id;
}

int Tape::mask01(int a, const BoolGrid& grid) {
  if (rows(a) != grid.rows() || cols(a) != grid.cols()) {
    throw InternalError("mask01: grid shape mismatch");
  }
  Mat m = grid.cast<double>().matrix();
  int id = push(nodes_[a].value.cwiseProduct(m), nullptr);
  nodes_[id].pull = [a, m, id](Tape& t) { t.grad_slot(a) += t.grads_[id].cwiseProduct(m); };
  return id;
}

namespace {

// Row softmax over finite entries; rows whose allowed set is empty come
// out all-zero.
Mat masked_row_softmax(const Mat& scores, const BoolGrid* allowed) {
  Mat p = Mat::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (allowed && !(*allowed)(i, j)) continue;
      mx = std::max(mx, scores(i, j));
    }
    if (!std::isfinite(mx)) continue;  // fully masked row
    double sum = 0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (allowed && !(*allowed)(i, j)) continue;
      double e = std::exp(scores(i, j) - mx);
      p(i, j) = e;
      sum += e;
    }
    p.row(i) /= sum;
  }
  return p;
}

void softmax_backward_rows(const Mat& p, const Mat& gout, Mat& gin) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double dot = p.row(i).dot(gout.row(i));
    gin.row(i) += (p.row(i).array() * (gout.row(i).array() - dot)).matrix();
  }
}

}  // namespace

int Tape::softmax_rows(int a) {
  Mat p = masked_row_softmax(nodes_[a].value, nullptr);
  int id = push(std::move(p), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    softmax_backward_rows(t.nodes_[id].value, t.grads_[id], t.grad_slot(a));
  };
  return id;
}

int Tape::softmax_rows_masked(int scores, const BoolGrid& allowed) {
  if (rows(scores) != allowed.rows() || cols(scores) != allowed.cols()) {
    throw InternalError("softmax_rows_masked: mask shape mismatch");
  }
  Mat p = masked_row_softmax(nodes_[scores].value, &allowed);
  int id = push(std::move(p), nullptr);
  nodes_[id].pull = [scores, id](Tape& t) {
    // p is zero at masked entries so the standard softmax pullback
    // already routes no gradient there
    softmax_backward_rows(t.nodes_[id].value, t.grads_[id], t.grad_slot(scores));
  };
  return id;
}

int Tape::gather_rows(int table, std::vector<int> rows_idx) {
  Mat v(static_cast<Eigen::Index>(rows_idx.size()), cols(table));
  for (std::size_t i = 0; i < rows_idx.size(); ++i) {
    if (rows_idx[i] < 0 || rows_idx[i] >= rows(table)) {
      throw InternalError("gather_rows: index " + std::to_string(rows_idx[i]) +
                          " out of range for table with " + std::to_string(rows(table)) +
                          " rows");
    }
    v.row(static_cast<Eigen::Index>(i)) = nodes_[table].value.row(rows_idx[i]);
  }
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [table, rows_idx = std::move(rows_idx), id](Tape& t) {
    Mat& g = t.grad_slot(table);
    for (std::size_t i = 0; i < rows_idx.size(); ++i) {
      g.row(rows_idx[i]) += t.grads_[id].row(static_cast<Eigen::Index>(i));
    }
  };
  return id;
}

int Tape::mean_rows(int a, std::vector<int> subset) {
  if (subset.empty()) throw InternalError("mean_rows: empty subset");
  Mat v = Mat::Zero(1, cols(a));
  for (int r : subset) {
    if (r < 0 || r >= rows(a)) throw InternalError("mean_rows: row index out of range");
    v += nodes_[a].value.row(r);
  }
  v /= static_cast<double>(subset.size());
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [a, subset = std::move(subset), id](Tape& t) {
    Mat& g = t.grad_slot(a);
    const Mat scaled = t.grads_[id] / static_cast<double>(subset.size());
    for (int r : subset) g.row(r) += scaled.row(0);
  };
  return id;
}

int Tape::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw InternalError("concat_cols: no parts");
  Eigen::Index r = rows(parts[0]);
  Eigen::Index total = 0;
  for (int p : parts) {
    if (rows(p) != r) throw InternalError("concat_cols: row mismatch");
    total += cols(p);
  }
  Mat v(r, total);
  Eigen::Index off = 0;
  for (int p : parts) {
    v.middleCols(off, cols(p)) = nodes_[p].value;
    off += cols(p);
  }
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [parts, id](Tape& t) {
    Eigen::Index off = 0;
    for (int p : parts) {
      Eigen::Index w = t.cols(p);
      t.grad_slot(p) += t.grads_[id].middleCols(off, w);
      off += w;
    }
  };
  return id;
}

int Tape::sum_all(int a) {
  Mat v(1, 1);
  v(0, 0) = nodes_[a].value.sum();
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    t.grad_slot(a).array() += t.grads_[id](0, 0);
  };
  return id;
}

int Tape::cross_entropy(int logits, int target) {
  if (rows(logits) != 1) throw InternalError("cross_entropy: logits must be a row vector");
  if (target < 0 || target >= cols(logits)) {
    throw InternalError("cross_entropy: target " + std::to_string(target) +
                        " out of range for " + std::to_string(cols(logits)) + " logits");
  }
  const Mat& z = nodes_[logits].value;
  double mx = z.maxCoeff();
  double lse = mx + std::log((z.array() - mx).exp().sum());
  Mat v(1, 1);
  v(0, 0) = lse - z(0, target);
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [logits, target, mx, lse, id](Tape& t) {
    const Mat& z = t.nodes_[logits].value;
    Mat p = (z.array() - lse).exp().matrix();
    p(0, target) -= 1.0;
    t.grad_slot(logits) += t.grads_[id](0, 0) * p;
  };
  return id;
}

int Tape::info_nce(int z) {
  if (rows(z) != cols(z)) throw InternalError("info_nce: similarity matrix must be square");
  const Mat& m = nodes_[z].value;
  const Eigen::Index n = m.rows();
  double loss = 0;
  for (Eigen::Index u = 0; u < n; ++u) {
    double rmax = m.row(u).maxCoeff();
    double rlse = rmax + std::log((m.row(u).array() - rmax).exp().sum());
    double cmax = m.col(u).maxCoeff();
    double clse = cmax + std::log((m.col(u).array() - cmax).exp().sum());
    loss += (rlse - m(u, u)) + (clse - m(u, u));
  }
  loss /= static_cast<double>(n);
  Mat v(1, 1);
  v(0, 0) = loss;
  int id = push(std::move(v), nullptr);
  nodes_[id].pull = [z, id](Tape& t) {
    const Mat& m = t.nodes_[z].value;
    const Eigen::Index n = m.rows();
    Mat g = Mat::Zero(n, n);
    for (Eigen::Index u = 0; u < n; ++u) {
      double rmax = m.row(u).maxCoeff();
      Eigen::RowVectorXd pr = (m.row(u).array() - rmax).exp();
      pr /= pr.sum();
      g.row(u) += pr;
      double cmax = m.col(u).maxCoeff();
      Eigen::VectorXd pc = (m.col(u).array() - cmax).exp();
      pc /= pc.sum();
      g.col(u) += pc;
      g(u, u) -= 2.0;
    }
    t.grad_slot(z) += (t.grads_[id](0, 0) / static_cast<double>(n)) * g;
  };
  return id;
}

int Tape::dropout(int a, double rate, std::uint64_t seed, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw InternalError("dropout: rate must be < 1");
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Mat keep(rows(a), cols(a));
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < keep.rows(); ++i)
    for (Eigen::Index j = 0; j < keep.cols(); ++j)
      keep(i, j) = unit(rng) < rate ? 0.0 : scale;
  int id = push(nodes_[a].value.cwiseProduct(keep), nullptr);
  nodes_[id].pull = [a, keep = std::move(keep), id](Tape& t) {
    t.grad_slot(a) += t.grads_[id].cwiseProduct(keep);
  };
  return id;
}

int Tape::propagate_table(int e0, const SignedGraph& graph, int k, LayerMeanRule rule,
                          const Mat* cached) {
  Mat v = cached ? *cached : t2::propagate(graph, nodes_[e0].value, k, rule);
  int id = push(std::move(v), nullptr);
  // the propagation operator is symmetric, so the adjoint is the
  // operator itself applied to the incoming gradient
  nodes_[id].pull = [e0, &graph, k, rule, id](Tape& t) {
    t.grad_slot(e0) += t2::propagate(graph, t.grads_[id], k, rule);
  };
  return id;
}

void Tape::backward(int root) {
  if (rows(root) != 1 || cols(root) != 1) {
    throw InternalError("backward: root must be a 1x1 scalar node");
  }
  grads_.assign(nodes_.size(), Mat());
  grad_set_.assign(nodes_.size(), 0);
  grad_slot(root)(0, 0) = 1.0;
  for (int id = root; id >= 0; --id) {
    if (!grad_set_[id] || !nodes_[id].pull) continue;
    nodes_[id].pull(*this);
  }
}

}  // namespace t2::ad
