#include "vqrl/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vqrl::diff {

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

ParamTensor::ParamTensor(Shape s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != shape_size(shape)) {
    throw std::invalid_argument("ParamTensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  }
  grad.assign(values.size(), 0.0);
}

ParamTensor ParamTensor::zeros(Shape s) {
  std::size_t n = shape_size(s);
  return ParamTensor(std::move(s), std::vector<double>(n, 0.0));
}

void ParamTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kInput: return "input";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kClip: return "clip";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(OpKind op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

bool is_row_broadcast(const Shape& a, const Shape& b) {
  return a.size() == 2 && b.size() == 1 && b[0] == a[1];
}

}  // namespace

int Tape::push(Node n) {
  eval(n);
  n.grad.assign(n.values.size(), 0.0);
  nodes_.push_back(std::move(n));
  ran_backward_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::at(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range("Tape: bad node id " + std::to_string(id));
  }
  return nodes_[id];
}

int Tape::leaf(ParamTensor& p) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.shape = p.shape;
  n.values = p.values;
  n.param = &p;
  return push(std::move(n));
}

int Tape::input(Shape shape, std::span<const double> values) {
  if (values.size() != shape_size(shape)) {
    throw std::invalid_argument("input: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  }
  Node n;
  n.kind = OpKind::kInput;
  n.shape = std::move(shape);
  n.values.assign(values.begin(), values.end());
  return push(std::move(n));
}

#define VQRL_BINOP(fn, op)                       \
  int Tape::fn(int a, int b) {                     \
    Node n;                                        \
    n.kind = op;                                   \
    n.a = a;                                       \
    n.b = b;                                       \
    return push(std::move(n));                     \
  }

VQRL_BINOP(matmul, OpKind::kMatMul)
VQRL_BINOP(add, OpKind::kAdd)
VQRL_BINOP(sub, OpKind::kSub)
VQRL_BINOP(mul, OpKind::kMul)
#undef VQRL_BINOP

#define VQRL_UNOP(fn, op)                        \
  int Tape::fn(int a) {                            \
    Node n;                                        \
    n.kind = op;                                   \
    n.a = a;                                       \
    return push(std::move(n));                     \
  }

VQRL_UNOP(tanh_, OpKind::kTanh)
VQRL_UNOP(relu, OpKind::kRelu)
VQRL_UNOP(exp_, OpKind::kExp)
VQRL_UNOP(log_, OpKind::kLog)
VQRL_UNOP(square, OpKind::kSquare)
VQRL_UNOP(sum, OpKind::kSum)
VQRL_UNOP(mean, OpKind::kMean)
#undef VQRL_UNOP

int Tape::scale(int a, double c) {
  Node n;
  n.kind = OpKind::kScale;
  n.a = a;
  n.p0 = c;
  return push(std::move(n));
}

int Tape::add_scalar(int a, double c) {
  Node n;
  n.kind = OpKind::kAddScalar;
  n.a = a;
  n.p0 = c;
  return push(std::move(n));
}

int Tape::clip(int a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip: lo > hi");
  Node n;
  n.kind = OpKind::kClip;
  n.a = a;
  n.p0 = lo;
  n.p1 = hi;
  return push(std::move(n));
}

int Tape::min_(int a, int b) { return sub(a, relu(sub(a, b))); }

void Tape::eval(Node& n) {
  switch (n.kind) {
    case OpKind::kLeaf:
      n.values = n.param->values;
      return;
    case OpKind::kInput:
      return;
    case OpKind::kMatMul: {
      const Node& A = at(n.a);
      const Node& B = at(n.b);
      if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0]) {
        shape_error(n.kind, A.shape, B.shape);
      }
      std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
      n.shape = {m, p};
      n.values.assign(m * p, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = A.values.data() + i * k;
        double* crow = n.values.data() + i * p;
        for (std::size_t kk = 0; kk < k; ++kk) {
          double av = arow[kk];
          const double* brow = B.values.data() + kk * p;
          for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
      }
      return;
    }
    case OpKind::kAdd: {
      const Node& A = at(n.a);
      const Node& B = at(n.b);
      n.shape = A.shape;
      n.values = A.values;
      if (A.shape == B.shape) {
        for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] += B.values[i];
      } else if (is_row_broadcast(A.shape, B.shape)) {
        std::size_t m = A.shape[0], c = A.shape[1];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) n.values[i * c + j] += B.values[j];
      } else {
        shape_error(n.kind, A.shape, B.shape);
      }
      return;
    }
    case OpKind::kSub:
    case OpKind::kMul: {
      const Node& A = at(n.a);
      const Node& B = at(n.b);
      if (A.shape != B.shape) shape_error(n.kind, A.shape, B.shape);
      n.shape = A.shape;
      n.values = A.values;
      if (n.kind == OpKind::kSub) {
        for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] -= B.values[i];
      } else {
        for (std::size_t i = 0; i < n.values.size(); ++i) n.values[i] *= B.values[i];
      }
      return;
    }
    case OpKind::kScale: {
      const Node& A = at(n.a);
      n.shape = A.shape;
      n.values = A.values;
      for (double& v : n.values) v *= n.p0;
      return;
    }
    case OpKind::kAddScalar: {
      const Node& A = at(n.a);
      n.shape = A.shape;
      n.values = A.values;
      for (double& v : n.values) v += n.p0;
      return;
    }
    case OpKind::kTanh:
    case OpKind::kRelu:
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kSquare:
    case OpKind::kClip: {
      const Node& A = at(n.a);
      n.shape = A.shape;
      n.values = A.values;
      switch (n.kind) {
        case OpKind::kTanh:
          for (double& v : n.values) v = std::tanh(v);
          break;
        case OpKind::kRelu:
          for (double& v : n.values) v = v > 0.0 ? v : 0.0;
          break;
        case OpKind::kExp:
          for (double& v : n.values) v = std::exp(v);
          break;
        case OpKind::kLog:
          for (double& v : n.values) v = std::log(v);
          break;
        case OpKind::kSquare:
          for (double& v : n.values) v = v * v;
          break;
        case OpKind::kClip:
          for (double& v : n.values) v = std::clamp(v, n.p0, n.p1);
          break;
        default:
          break;
      }
      return;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      const Node& A = at(n.a);
      n.shape = {1};
      double s = std::accumulate(A.values.begin(), A.values.end(), 0.0);
      if (n.kind == OpKind::kMean) s /= static_cast<double>(A.values.size());
      n.values.assign(1, s);
      return;
    }
  }
}

const Shape& Tape::shape(int id) const { return at(id).shape; }

std::span<const double> Tape::values(int id) const {
  const Node& n = at(id);
  return {n.values.data(), n.values.size()};
}

std::span<const double> Tape::grad(int id) const {
  if (!ran_backward_) {
    throw std::logic_error("Tape::grad: backward has not run");
  }
  const Node& n = at(id);
  return {n.grad.data(), n.grad.size()};
}

double Tape::value_scalar(int id) const {
  const Node& n = at(id);
  if (n.values.size() != 1) {
    throw std::invalid_argument("value_scalar: node has shape " + shape_str(n.shape));
  }
  return n.values[0];
}

void Tape::backward(int out, std::span<const double> seed) {
  Node& o = nodes_.at(out);
  if (!seed.empty() && seed.size() != o.values.size()) {
    throw std::invalid_argument("backward: seed size " + std::to_string(seed.size()) +
                                " vs output size " + std::to_string(o.values.size()));
  }
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  if (seed.empty()) {
    std::fill(o.grad.begin(), o.grad.end(), 1.0);
  } else {
    std::copy(seed.begin(), seed.end(), o.grad.begin());
  }

  for (int id = out; id >= 0; --id) {
    Node& n = nodes_[id];
    bool any = false;
    for (double g : n.grad) {
      if (g != 0.0) { any = true; break; }
    }
    if (!any) continue;
    switch (n.kind) {
      case OpKind::kLeaf:
      case OpKind::kInput:
        break;
      case OpKind::kMatMul: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = n.grad.data() + i * p;
          double* da = A.grad.data() + i * k;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double* brow = B.values.data() + kk * p;
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
            da[kk] += acc;
          }
        }
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = A.values.data() + i * k;
          const double* grow = n.grad.data() + i * p;
          for (std::size_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            double* db = B.grad.data() + kk * p;
            for (std::size_t j = 0; j < p; ++j) db[j] += av * grow[j];
          }
        }
        break;
      }
      case OpKind::kAdd: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t i = 0; i < n.grad.size(); ++i) A.grad[i] += n.grad[i];
        if (A.shape == B.shape) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) B.grad[i] += n.grad[i];
        } else {
          std::size_t m = A.shape[0], c = A.shape[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) B.grad[j] += n.grad[i * c + j];
        }
        break;
      }
      case OpKind::kSub: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          A.grad[i] += n.grad[i];
          B.grad[i] -= n.grad[i];
        }
        break;
      }
      case OpKind::kMul: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          A.grad[i] += n.grad[i] * B.values[i];
          B.grad[i] += n.grad[i] * A.values[i];
        }
        break;
      }
      case OpKind::kScale: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i) A.grad[i] += n.grad[i] * n.p0;
        break;
      }
      case OpKind::kAddScalar: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i) A.grad[i] += n.grad[i];
        break;
      }
      case OpKind::kTanh: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          A.grad[i] += n.grad[i] * (1.0 - n.values[i] * n.values[i]);
        break;
      }
      case OpKind::kRelu: {
        // Subgradient at 0 is 0.
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          if (A.values[i] > 0.0) A.grad[i] += n.grad[i];
        break;
      }
      case OpKind::kExp: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          A.grad[i] += n.grad[i] * n.values[i];
        break;
      }
      case OpKind::kLog: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          A.grad[i] += n.grad[i] / A.values[i];
        break;
      }
      case OpKind::kSquare: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          A.grad[i] += n.grad[i] * 2.0 * A.values[i];
        break;
      }
      case OpKind::kClip: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          if (A.values[i] > n.p0 && A.values[i] < n.p1) A.grad[i] += n.grad[i];
        break;
      }
      case OpKind::kSum: {
        Node& A = nodes_[n.a];
        double g = n.grad[0];
        for (double& ag : A.grad) ag += g;
        break;
      }
      case OpKind::kMean: {
        Node& A = nodes_[n.a];
        double g = n.grad[0] / static_cast<double>(A.grad.size());
        for (double& ag : A.grad) ag += g;
        break;
      }
    }
  }

  for (Node& n : nodes_) {
    if (n.kind == OpKind::kLeaf && n.param) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
    }
  }
  ran_backward_ = true;
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (n.kind == OpKind::kInput) continue;
    eval(n);
  }
}

std::vector<bool> Tape::relu_pattern() const {
  std::vector<bool> out;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::kRelu) {
      const Node& a = nodes_[n.a];
      for (double v : a.values) out.push_back(v > 0.0);
    } else if (n.kind == OpKind::kClip) {
      const Node& a = nodes_[n.a];
      for (double v : a.values) {
        out.push_back(v > n.p0);
        out.push_back(v < n.p1);
      }
    }
  }
  return out;
}

void Tape::reset() {
  nodes_.clear();
  ran_backward_ = false;
}

FiniteDiffResult finite_diff_check(
    const std::function<int(Tape&, std::vector<int>&)>& build,
    std::vector<ParamTensor*> params, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be > 0");

  auto eval_loss = [&](std::vector<bool>* pattern) {
    Tape tape;
    std::vector<int> ids;
    ids.reserve(params.size());
    for (ParamTensor* p : params) ids.push_back(tape.leaf(*p));
    int out = build(tape, ids);
    double loss = tape.value_scalar(out);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("finite_diff_check: non-finite loss");
    }
    if (pattern) *pattern = tape.relu_pattern();
    return loss;
  };

  // Analytic gradients.
  for (ParamTensor* p : params) p->zero_grad();
  {
    Tape tape;
    std::vector<int> ids;
    for (ParamTensor* p : params) ids.push_back(tape.leaf(*p));
    int out = build(tape, ids);
    if (!std::isfinite(tape.value_scalar(out))) {
      throw std::runtime_error("finite_diff_check: non-finite loss");
    }
    tape.backward(out);
  }

  FiniteDiffResult res;
  for (ParamTensor* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      double saved = p->values[i];
      std::vector<bool> pat_hi, pat_lo;
      p->values[i] = saved + h;
      double hi = eval_loss(&pat_hi);
      p->values[i] = saved - h;
      double lo = eval_loss(&pat_lo);
      p->values[i] = saved;
      if (pat_hi != pat_lo) {
        // Crossed a relu kink; the central difference is meaningless here.
        ++res.excluded_nondifferentiable;
        continue;
      }
      double numeric = (hi - lo) / (2.0 * h);
      double analytic = p->grad[i];
      double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      res.max_rel_error = std::max(res.max_rel_error,
                                   std::abs(analytic - numeric) / denom);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace vqrl::diff
