#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vqrl::diff {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

/// A parameter block with a gradient buffer of the same shape.
/// Gradients accumulate across backward passes until zero_grad().
struct ParamTensor {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;

  ParamTensor() = default;
  ParamTensor(Shape s, std::vector<double> v);
  static ParamTensor zeros(Shape s);

  std::size_t size() const { return values.size(); }
  void zero_grad();
};

enum class OpKind {
  kLeaf,
  kInput,
  kMatMul,
  kAdd,        // same shape, or [m,n] + [n] row broadcast
  kSub,
  kMul,        // elementwise
  kScale,      // x * p0
  kAddScalar,  // x + p0
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kClip,       // clip(x, p0, p1); zero gradient outside
  kSum,        // -> scalar
  kMean,       // -> scalar
};

const char* op_name(OpKind k);

/// Reverse-mode tape. Ops are recorded in topological order as they are
/// built; backward() walks the record in reverse. One tape per thread.
class Tape {
 public:
  /// Registers a trainable parameter. backward() accumulates into p.grad.
  int leaf(ParamTensor& p);
  /// Registers a non-parameter input; its gradient is retrievable via grad().
  int input(Shape shape, std::span<const double> values);
  int input_scalar(double v) { return input({1}, std::span<const double>(&v, 1)); }

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double c);
  int add_scalar(int a, double c);
  int tanh_(int a);
  int relu(int a);
  int exp_(int a);
  int log_(int a);
  int square(int a);
  int clip(int a, double lo, double hi);
  int sum(int a);
  int mean(int a);

  // Composites (no new primitives).
  int min_(int a, int b);  // a - relu(a - b)
  int neg(int a) { return scale(a, -1.0); }

  const Shape& shape(int id) const;
  std::span<const double> values(int id) const;
  std::span<const double> grad(int id) const;
  double value_scalar(int id) const;

  /// Reverse sweep from `out`, seeded with `seed` (or ones if empty).
  /// Leaf gradients are additionally accumulated into their ParamTensors.
  void backward(int out, std::span<const double> seed = {});

  /// Recomputes every node's values from the recorded inputs/leaves.
  void replay();

  /// Activation-region pattern of every relu and clip input element,
  /// concatenated in recording order. Used to detect kink crossings in
  /// finite differences.
  std::vector<bool> relu_pattern() const;

  /// Drops all nodes but keeps allocated capacity.
  void reset();

  std::size_t num_nodes() const { return nodes_.size(); }
  bool has_run_backward() const { return ran_backward_; }

 private:
  struct Node {
    OpKind kind;
    int a = -1;
    int b = -1;
    double p0 = 0.0;
    double p1 = 0.0;
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    ParamTensor* param = nullptr;
  };

  int push(Node n);
  void eval(Node& n);
  const Node& at(int id) const;

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded_nondifferentiable = 0;
};

/// Central-difference check of backward() against numeric gradients.
/// `build` constructs the graph on a fresh tape from the given leaves and
/// returns the scalar output id. Parameter entries whose +/-h evaluations
/// land on different sides of a relu kink are excluded from the maximum.
FiniteDiffResult finite_diff_check(
    const std::function<int(Tape&, std::vector<int>&)>& build,
    std::vector<ParamTensor*> params, double h);

}  // namespace vqrl::diff
