#include "stmaml/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace stmaml {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_recording = true;

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                           shape_str(b));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = prev_; }
bool grad_mode_enabled() { return g_recording; }

Node::~Node() {
  // Iterative teardown; recursive shared_ptr destruction can blow the
  // stack on long tapes.
  std::vector<std::shared_ptr<Node>> work;
  auto harvest = [&](std::vector<Tensor>& ins) {
    for (auto& t : ins) {
      if (t.node_ && t.node_.use_count() == 1) work.push_back(std::move(t.node_));
      t.node_.reset();
    }
    ins.clear();
  };
  harvest(inputs);
  while (!work.empty()) {
    std::shared_ptr<Node> n = std::move(work.back());
    work.pop_back();
    harvest(n->inputs);
  }
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(numel(shape), 0.0);
  return from(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double val) {
  std::vector<double> v(numel(shape), val);
  return from(std::move(shape), std::move(v));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size())
    throw std::runtime_error("Tensor::from: " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
  Tensor t;
  auto st = std::make_shared<Storage>();
  st->shape = std::move(shape);
  st->v = std::move(values);
  t.storage_ = std::move(st);
  return t;
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_ = std::make_shared<Node>();
  t.node_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  t.node_->op = "leaf";
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw std::runtime_error("Tensor::item: tensor has " + std::to_string(size()) + " elements");
  return storage_->v[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.storage_ = storage_;
  return t;
}

Tensor Tensor::releaf() const {
  Tensor t = Tensor::from(shape(), values());
  t.node_ = std::make_shared<Node>();
  t.node_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  t.node_->op = "leaf";
  return t;
}

std::uint64_t Tensor::node_id() const {
  if (!node_) throw std::runtime_error("Tensor: gradient query on a tensor detached from any tape");
  return node_->id;
}

Tensor record(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
              std::function<std::vector<Tensor>(const Tensor&, const Tensor&,
                                                const std::vector<Tensor>&)>
                  vjp) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  bool any_tracked = false;
  for (const auto& in : inputs)
    if (in.tracked()) any_tracked = true;
  if (g_recording && any_tracked) {
    out.node_ = std::make_shared<Node>();
    out.node_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    out.node_->op = op;
    out.node_->inputs = std::move(inputs);
    out.node_->vjp = std::move(vjp);
  }
  return out;
}

// ---- elementwise binary ----

namespace {
using Vjp = std::function<std::vector<Tensor>(const Tensor&, const Tensor&,
                                              const std::vector<Tensor>&)>;

Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, double (*f)(double, double),
                 Vjp vjp) {
  check_same_shape(op, a, b);
  std::vector<double> v(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(av[i], bv[i]);
  return record(op, a.shape(), std::move(v), {a, b}, std::move(vjp));
}

Tensor ew_unary(const char* op, const Tensor& a, double (*f)(double), Vjp vjp) {
  std::vector<double> v(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(av[i]);
  return record(op, a.shape(), std::move(v), {a}, std::move(vjp));
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
        return std::vector<Tensor>{g, g};
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
        return std::vector<Tensor>{g, neg(g)};
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>& in) {
        return std::vector<Tensor>{mul(g, in[1]), mul(g, in[0])};
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>& in) {
        Tensor ga = div(g, in[1]);
        Tensor gb = neg(div(mul(g, in[0]), mul(in[1], in[1])));
        return std::vector<Tensor>{ga, gb};
      });
}

Tensor neg(const Tensor& a) {
  return ew_unary(
      "neg", a, [](double x) { return -x; },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
        return std::vector<Tensor>{neg(g)};
      });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + c;
  return record("add_scalar", a.shape(), std::move(v), {a},
                [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{g};
                });
}

Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  return record("mul_scalar", a.shape(), std::move(v), {a},
                [c](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{mul_scalar(g, c)};
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    shape_error("matmul", a.shape(), b.shape());
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  std::vector<double> v(n * m, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) v[i * m + j] += aip * bv[p * m + j];
    }
  return record("matmul", {n, m}, std::move(v), {a, b},
                [](const Tensor& g, const Tensor&, const std::vector<Tensor>& in) {
                  Tensor ga = matmul(g, transpose(in[1]));
                  Tensor gb = matmul(transpose(in[0]), g);
                  return std::vector<Tensor>{ga, gb};
                });
}

Tensor transpose(const Tensor& m) {
  if (m.shape().size() != 2) throw std::runtime_error("transpose: rank-2 tensor required");
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> v(r * c);
  const auto& mv = m.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = mv[i * c + j];
  return record("transpose", {c, r}, std::move(v), {m},
                [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{transpose(g)};
                });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || sa.empty()) shape_error("concat", sa, sb);
  for (std::size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i]) shape_error("concat", sa, sb);
  const std::size_t la = sa.back(), lb = sb.back();
  Shape out = sa;
  out.back() = la + lb;
  const std::size_t rows = numel(sa) / std::max<std::size_t>(la, 1);
  std::vector<double> v(rows * (la + lb));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < la; ++j) v[r * (la + lb) + j] = av[r * la + j];
    for (std::size_t j = 0; j < lb; ++j) v[r * (la + lb) + la + j] = bv[r * lb + j];
  }
  return record("concat", out, std::move(v), {a, b},
                [la, lb](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{slice_last(g, 0, la), slice_last(g, la, lb)};
                });
}

namespace {
/// Inverse of slice_last: embed into a zero tensor whose last axis is total.
Tensor pad_last(const Tensor& t, std::size_t start, std::size_t total) {
  const Shape& s = t.shape();
  const std::size_t len = s.back();
  Shape out = s;
  out.back() = total;
  const std::size_t rows = numel(s) / std::max<std::size_t>(len, 1);
  std::vector<double> v(rows * total, 0.0);
  const auto& tv = t.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < len; ++j) v[r * total + start + j] = tv[r * len + j];
  return record("pad_last", out, std::move(v), {t},
                [start, len](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{slice_last(g, start, len)};
                });
}
}  // namespace

Tensor slice_last(const Tensor& t, std::size_t start, std::size_t len) {
  const Shape& s = t.shape();
  if (s.empty() || start + len > s.back())
    throw std::runtime_error("slice_last: range [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") outside axis of size " +
                             (s.empty() ? std::string("scalar") : std::to_string(s.back())));
  const std::size_t total = s.back();
  Shape out = s;
  out.back() = len;
  const std::size_t rows = numel(s) / total;
  std::vector<double> v(rows * len);
  const auto& tv = t.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < len; ++j) v[r * len + j] = tv[r * total + start + j];
  return record("slice_last", out, std::move(v), {t},
                [start, total](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{pad_last(g, start, total)};
                });
}

Tensor vstack(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[1])
    shape_error("vstack", a.shape(), b.shape());
  const std::size_t na = a.shape()[0], nb = b.shape()[0], d = a.shape()[1];
  std::vector<double> v;
  v.reserve((na + nb) * d);
  v.insert(v.end(), a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return record("vstack", {na + nb, d}, std::move(v), {a, b},
                [na, nb](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{slice_rows(g, 0, na), slice_rows(g, na, nb)};
                });
}

Tensor slice_rows(const Tensor& m, std::size_t start, std::size_t len) {
  if (m.shape().size() != 2 || start + len > m.shape()[0])
    throw std::runtime_error("slice_rows: range [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") outside " +
                             std::to_string(m.shape().size() == 2 ? m.shape()[0] : 0) + " rows");
  const std::size_t n = m.shape()[0], d = m.shape()[1];
  std::vector<double> v(m.values().begin() + static_cast<std::ptrdiff_t>(start * d),
                        m.values().begin() + static_cast<std::ptrdiff_t>((start + len) * d));
  return record("slice_rows", {len, d}, std::move(v), {m},
                [start, len, n, d](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  Tensor zeros_before = Tensor::zeros({start, d});
                  Tensor zeros_after = Tensor::zeros({n - start - len, d});
                  Tensor out = g;
                  if (start > 0) out = vstack(zeros_before, out);
                  if (n - start - len > 0) out = vstack(out, zeros_after);
                  return std::vector<Tensor>{out};
                });
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (numel(shape) != t.size()) shape_error("reshape", t.shape(), shape);
  std::vector<double> v = t.values();
  Shape prev = t.shape();
  return record("reshape", std::move(shape), std::move(v), {t},
                [prev](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{reshape(g, prev)};
                });
}

Tensor tile_rows(const Tensor& v, std::size_t n) {
  if (v.shape().size() != 1) throw std::runtime_error("tile_rows: rank-1 tensor required");
  const std::size_t d = v.shape()[0];
  std::vector<double> out(n * d);
  const auto& vv = v.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = vv[j];
  return record("tile_rows", {n, d}, std::move(out), {v},
                [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{sum_axis0(g)};
                });
}

Tensor sum_axis0(const Tensor& m) {
  if (m.shape().size() != 2) throw std::runtime_error("sum_axis0: rank-2 tensor required");
  const std::size_t n = m.shape()[0], d = m.shape()[1];
  std::vector<double> v(d, 0.0);
  const auto& mv = m.values();
  for (std::size_t i = 0; i < n; ++i)  // fixed left-to-right order
    for (std::size_t j = 0; j < d; ++j) v[j] += mv[i * d + j];
  return record("sum_axis0", {d}, std::move(v), {m},
                [n](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{tile_rows(g, n)};
                });
}

Tensor mean_axis0(const Tensor& m) {
  if (m.shape().size() != 2 || m.shape()[0] == 0)
    throw std::runtime_error("mean_axis0: non-empty rank-2 tensor required");
  return mul_scalar(sum_axis0(m), 1.0 / static_cast<double>(m.shape()[0]));
}

namespace {
Tensor broadcast_scalar(const Tensor& s, const Shape& shape) {
  if (s.size() != 1) throw std::runtime_error("broadcast_scalar: scalar required");
  std::vector<double> v(numel(shape), s.values()[0]);
  return record("broadcast_scalar", shape, std::move(v), {s},
                [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{sum_all(g)};
                });
}
}  // namespace

Tensor sum_all(const Tensor& t) {
  double s = 0.0;
  for (double x : t.values()) s += x;  // fixed left-to-right order
  Shape prev = t.shape();
  return record("sum_all", {}, {s}, {t},
                [prev](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{broadcast_scalar(g, prev)};
                });
}

Tensor mean_all(const Tensor& t) {
  if (t.size() == 0) throw std::runtime_error("mean_all: empty tensor");
  return mul_scalar(sum_all(t), 1.0 / static_cast<double>(t.size()));
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  if (m.shape().size() != 2 || v.shape().size() != 1 || m.shape()[1] != v.shape()[0])
    shape_error("add_rowwise", m.shape(), v.shape());
  const std::size_t n = m.shape()[0], d = m.shape()[1];
  std::vector<double> out(n * d);
  const auto& mv = m.values();
  const auto& vv = v.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = mv[i * d + j] + vv[j];
  return record("add_rowwise", {n, d}, std::move(out), {m, v},
                [](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{g, sum_axis0(g)};
                });
}

Tensor sigmoid(const Tensor& a) {
  return ew_unary(
      "sigmoid", a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](const Tensor& g, const Tensor& out, const std::vector<Tensor>&) {
        Tensor one_minus = add_scalar(neg(out), 1.0);
        return std::vector<Tensor>{mul(g, mul(out, one_minus))};
      });
}

Tensor tanh_t(const Tensor& a) {
  return ew_unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](const Tensor& g, const Tensor& out, const std::vector<Tensor>&) {
        Tensor one_minus_sq = add_scalar(neg(square(out)), 1.0);
        return std::vector<Tensor>{mul(g, one_minus_sq)};
      });
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.size());
  std::vector<double> mask(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = av[i] > 0.0 ? 1.0 : 0.0;
    v[i] = av[i] > 0.0 ? av[i] : 0.0;
  }
  Shape shape = a.shape();
  return record("relu", shape, std::move(v), {a},
                [mask, shape](const Tensor& g, const Tensor&, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{mul(g, Tensor::from(shape, mask))};
                });
}

Tensor exp_t(const Tensor& a) {
  return ew_unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](const Tensor& g, const Tensor& out, const std::vector<Tensor>&) {
        return std::vector<Tensor>{mul(g, out)};
      });
}

Tensor log_t(const Tensor& a) {
  return ew_unary(
      "log", a, [](double x) { return std::log(x); },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>& in) {
        return std::vector<Tensor>{div(g, in[0])};
      });
}

Tensor softplus(const Tensor& a) {
  return ew_unary(
      "softplus", a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>& in) {
        return std::vector<Tensor>{mul(g, sigmoid(in[0]))};
      });
}

Tensor square(const Tensor& a) {
  return ew_unary(
      "square", a, [](double x) { return x * x; },
      [](const Tensor& g, const Tensor&, const std::vector<Tensor>& in) {
        return std::vector<Tensor>{mul(g, mul_scalar(in[0], 2.0))};
      });
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  if (m.shape().size() != 2 || v.shape().size() != 1 || m.shape()[1] != v.shape()[0])
    shape_error("matvec", m.shape(), v.shape());
  Tensor col = reshape(v, {v.shape()[0], 1});
  return reshape(matmul(m, col), {m.shape()[0]});
}

// ---- reverse pass ----

class GradEngine {
 public:
  static std::vector<Tensor> run(const Tensor& output, const std::vector<Tensor>& wrt,
                                 bool create_graph) {
    if (output.size() != 1)
      throw std::runtime_error("grad: output must be scalar, got " +
                               std::to_string(output.size()) + " elements");
    for (const auto& w : wrt)
      if (!w.tracked())
        throw std::runtime_error("grad: wrt tensor is detached from any tape");
    if (!output.tracked()) {
      // Constant output: all gradients are zero.
      std::vector<Tensor> out;
      for (const auto& w : wrt) out.push_back(Tensor::zeros(w.shape()));
      return out;
    }

    // Reachable tensors, keyed by node id. Ids increase with creation order,
    // so descending id order is a reverse topological order.
    std::unordered_map<std::uint64_t, Tensor> tensors;
    std::vector<Tensor> stack{output};
    std::vector<std::uint64_t> order;
    while (!stack.empty()) {
      Tensor t = std::move(stack.back());
      stack.pop_back();
      const std::uint64_t id = t.node_->id;
      if (tensors.count(id)) continue;
      for (const auto& in : t.node_->inputs)
        if (in.tracked()) stack.push_back(in);
      order.push_back(id);
      tensors.emplace(id, std::move(t));
    }
    std::sort(order.begin(), order.end(), std::greater<>());

    std::unique_ptr<NoGradGuard> nograd;
    if (!create_graph) nograd = std::make_unique<NoGradGuard>();

    std::unordered_map<std::uint64_t, Tensor> adjoint;
    adjoint.emplace(output.node_->id, Tensor::full(output.shape(), 1.0));
    for (std::uint64_t id : order) {
      auto it = adjoint.find(id);
      if (it == adjoint.end()) continue;
      const Tensor& t = tensors.at(id);
      if (!t.node_->vjp) continue;  // leaf
      std::vector<Tensor> gs = t.node_->vjp(it->second, t, t.node_->inputs);
      const auto& ins = t.node_->inputs;
      for (std::size_t i = 0; i < ins.size(); ++i) {
        if (!ins[i].tracked()) continue;
        const std::uint64_t iid = ins[i].node_->id;
        auto ait = adjoint.find(iid);
        if (ait == adjoint.end())
          adjoint.emplace(iid, gs[i]);
        else
          ait->second = add(ait->second, gs[i]);
      }
    }

    std::vector<Tensor> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
      auto it = adjoint.find(w.node_->id);
      if (it == adjoint.end())
        result.push_back(Tensor::zeros(w.shape()));
      else
        result.push_back(create_graph ? it->second : it->second.detach());
    }
    return result;
  }
};

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt, bool create_graph) {
  return GradEngine::run(output, wrt, create_graph);
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double eps) {
  if (eps < 1e-7 || eps > 1e-3) throw std::runtime_error("finite_difference_check: eps out of [1e-7,1e-3]");
  Tensor xl = x.tracked() ? x : x.releaf();
  Tensor y = f(xl);
  std::vector<Tensor> g = grad(y, {xl});
  const std::vector<double>& analytic = g[0].values();

  // Recording stays enabled during re-evaluation: f may differentiate
  // internally (second-order checks probe a gradient-valued f).
  double max_rel = 0.0;
  std::vector<double> base = xl.values();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += eps;
    minus[i] -= eps;
    double fp = f(Tensor::from(xl.shape(), plus)).item();
    double fm = f(Tensor::from(xl.shape(), minus)).item();
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_difference_check: non-finite function value");
    double num = (fp - fm) / (2.0 * eps);
    double rel = std::abs(analytic[i] - num) / (std::abs(analytic[i]) + 1e-8);
    if (rel > max_rel) max_rel = rel;
  }
  return max_rel;
}

}  // namespace stmaml
