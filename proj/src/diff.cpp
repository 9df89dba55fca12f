#include "occlab/diff.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace occlab::diff {

namespace {

bool any_requires_grad(const std::vector<Value>& vs) {
  for (const auto& v : vs)
    if (v.requires_grad()) return true;
  return false;
}

Value finish(Mat value, std::vector<Value> parents, std::function<void(Node&)> pull) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (any_requires_grad(parents)) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->pull = std::move(pull);
  }
  return Value(node);
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Value Value::constant(Mat m) {
  auto node = std::make_shared<Node>();
  node->value = std::move(m);
  return Value(node);
}

Value Value::param(Mat m) {
  auto node = std::make_shared<Node>();
  node->value = std::move(m);
  node->requires_grad = true;
  node->ensure_grad();
  return Value(node);
}

double Value::scalar() const {
  assert(node_ && node_->value.size() == 1);
  return node_->value(0, 0);
}

Value make_op(Mat value, std::vector<Value> parents, std::function<void(Node&)> pull) {
  return finish(std::move(value), std::move(parents), std::move(pull));
}

Value linear(const Value& x, const Value& weight, const Value& bias) {
  if (x.cols() != weight.rows())
    throw std::invalid_argument("linear: input cols != weight input dim");
  if (bias.rows() != 1 || bias.cols() != weight.cols())
    throw std::invalid_argument("linear: bias shape mismatch");
  Mat out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return finish(std::move(out), {x, weight, bias}, [](Node& n) {
    Node& xn = *n.parents[0];
    Node& wn = *n.parents[1];
    Node& bn = *n.parents[2];
    if (xn.requires_grad) {
      xn.ensure_grad();
      xn.grad.noalias() += n.grad * wn.value.transpose();
    }
    if (wn.requires_grad) {
      wn.ensure_grad();
      wn.grad.noalias() += xn.value.transpose() * n.grad;
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad.row(0) += n.grad.colwise().sum();
    }
  });
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dim mismatch");
  return finish(a.value() * b.value(), {a, b}, [](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad.noalias() += n.grad * bn.value.transpose();
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad.noalias() += an.value.transpose() * n.grad;
    }
  });
}

Value layer_norm(const Value& x, const Value& gain, const Value& shift, double eps) {
  const Mat& in = x.value();
  const auto R = in.rows(), C = in.cols();
  if (C < 2) throw std::invalid_argument("layer_norm: channel dim must be >= 2");
  Mat xhat(R, C);
  Eigen::VectorXd inv_std(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const double mu = in.row(r).mean();
    const double var = (in.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = (in.row(r).array() - mu) * is;
  }
  Mat out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += shift.value().row(0);
  return finish(std::move(out), {x, gain, shift},
                [xhat, inv_std](Node& n) {
                  Node& xn = *n.parents[0];
                  Node& gn = *n.parents[1];
                  Node& sn = *n.parents[2];
                  if (gn.requires_grad) {
                    gn.ensure_grad();
                    gn.grad.row(0) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
                  }
                  if (sn.requires_grad) {
                    sn.ensure_grad();
                    sn.grad.row(0) += n.grad.colwise().sum();
                  }
                  if (xn.requires_grad) {
                    xn.ensure_grad();
                    const auto C = n.value.cols();
                    for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
                      // dxhat = g .* gain; dx = is * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
                      Eigen::RowVectorXd dxhat =
                          (n.grad.row(r).array() * gn.value.row(0).array()).matrix();
                      const double m1 = dxhat.mean();
                      const double m2 = (dxhat.array() * xhat.row(r).array()).mean();
                      xn.grad.row(r) +=
                          inv_std(r) *
                          (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
                      (void)C;
                    }
                  }
                });
}

Value softmax(const Value& x) {
  const Mat& in = x.value();
  Mat out(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double mx = in.row(r).maxCoeff();
    Eigen::RowVectorXd e = (in.row(r).array() - mx).exp();
    out.row(r) = e / e.sum();
  }
  return finish(std::move(out), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
      const double dot = n.grad.row(r).dot(n.value.row(r));
      xn.grad.row(r) +=
          (n.value.row(r).array() * (n.grad.row(r).array() - dot)).matrix();
    }
  });
}

Value relu(const Value& x) {
  return finish(x.value().cwiseMax(0.0), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.array() +=
        n.grad.array() * (xn.value.array() > 0.0).cast<double>();
  });
}

Value sigmoid(const Value& x) {
  Mat out = x.value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return finish(std::move(out), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.array() += n.grad.array() * n.value.array() * (1.0 - n.value.array());
  });
}

Value softplus(const Value& x) {
  Mat out = x.value().unaryExpr(
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return finish(std::move(out), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.array() += n.grad.array() * xn.value.array().unaryExpr([](double v) {
      return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
  });
}

Value exp(const Value& x) {
  return finish(x.value().array().exp().matrix(), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.array() += n.grad.array() * n.value.array();
  });
}

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  return finish(a.value() + b.value(), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *n.parents[k];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad += n.grad;
    }
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  return finish(a.value() - b.value(), {a, b}, [](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad += n.grad;
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad -= n.grad;
    }
  });
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a, b, "mul");
  return finish(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad.array() += n.grad.array() * bn.value.array();
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad.array() += n.grad.array() * an.value.array();
    }
  });
}

Value div(const Value& a, const Value& b) {
  check_same_shape(a, b, "div");
  return finish(a.value().cwiseQuotient(b.value()), {a, b}, [](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad.array() += n.grad.array() / bn.value.array();
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad.array() -=
          n.grad.array() * an.value.array() / bn.value.array().square();
    }
  });
}

Value scale(const Value& a, double s) {
  return finish(a.value() * s, {a}, [s](Node& n) {
    Node& an = *n.parents[0];
    if (!an.requires_grad) return;
    an.ensure_grad();
    an.grad += s * n.grad;
  });
}

Value add_scalar(const Value& a, double s) {
  return finish(a.value().array() + s, {a}, [](Node& n) {
    Node& an = *n.parents[0];
    if (!an.requires_grad) return;
    an.ensure_grad();
    an.grad += n.grad;
  });
}

Value detach(const Value& x) { return Value::constant(x.value()); }

Value sum(const Value& x) {
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  return finish(std::move(out), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.array() += n.grad(0, 0);
  });
}

Value mean(const Value& x) {
  Mat out(1, 1);
  out(0, 0) = x.value().mean();
  const double inv_n = 1.0 / static_cast<double>(x.value().size());
  return finish(std::move(out), {x}, [inv_n](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.array() += n.grad(0, 0) * inv_n;
  });
}

Value mean_rows(const Value& x) {
  Mat out = x.value().colwise().mean();
  const double inv_r = 1.0 / static_cast<double>(x.rows());
  return finish(std::move(out), {x}, [inv_r](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const Eigen::RowVectorXd g = inv_r * n.grad.row(0);
    xn.grad.rowwise() += g;
  });
}

Value row_sum(const Value& x) {
  Mat out = x.value().rowwise().sum();
  return finish(std::move(out), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.colwise() += n.grad.col(0);
  });
}

Value cols(const Value& x, int j0, int count) {
  if (j0 < 0 || j0 + count > x.cols()) throw std::invalid_argument("cols: out of range");
  return finish(x.value().middleCols(j0, count), {x}, [j0, count](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.middleCols(j0, count) += n.grad;
  });
}

Value concat_cols(const Value& a, const Value& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Mat out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const int ac = static_cast<int>(a.cols());
  return finish(std::move(out), {a, b}, [ac](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad += n.grad.leftCols(ac);
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad += n.grad.rightCols(n.grad.cols() - ac);
    }
  });
}

Value gather_rows(const Value& x, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.value().row(idx[i]);
  return finish(std::move(out), {x}, [idx](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      xn.grad.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

Value scatter_rows(const Value& x, const std::vector<int>& idx, int total_rows) {
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw std::invalid_argument("scatter_rows: index count != row count");
  Mat out = Mat::Zero(total_rows, x.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) = x.value().row(static_cast<Eigen::Index>(i));
  return finish(std::move(out), {x}, [idx](Node& n) {
    Node& xn = *n.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      xn.grad.row(static_cast<Eigen::Index>(i)) += n.grad.row(idx[i]);
  });
}

Value rowwise_scale(const Value& x, const Value& s) {
  if (s.cols() != 1 || s.rows() != x.rows())
    throw std::invalid_argument("rowwise_scale: scale must be Rx1");
  Mat out = x.value().array().colwise() * s.value().col(0).array();
  return finish(std::move(out), {x, s}, [](Node& n) {
    Node& xn = *n.parents[0];
    Node& sn = *n.parents[1];
    if (xn.requires_grad) {
      xn.ensure_grad();
      xn.grad.array() += n.grad.array().colwise() * sn.value.col(0).array();
    }
    if (sn.requires_grad) {
      sn.ensure_grad();
      sn.grad.col(0) += (n.grad.array() * xn.value.array()).rowwise().sum().matrix();
    }
  });
}

void backward(const Value& loss) {
  if (!loss.defined() || loss.value().size() != 1)
    throw std::invalid_argument("backward: loss must be a defined 1x1 value");
  if (!loss.requires_grad()) return;

  static std::atomic<uint64_t> token_source{1};
  const uint64_t token = token_source.fetch_add(1);

  // Iterative post-order DFS; `order` ends up topologically sorted
  // (parents before children), so the reverse sweep visits each node once.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  loss.node()->visit_token = token;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && parent->visit_token != token) {
        parent->visit_token = token;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->ensure_grad();
  loss.node()->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->pull) n->pull(*n);
  }
}

}  // namespace occlab::diff
