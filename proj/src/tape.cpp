#include "s2p/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace s2p {

namespace {

template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using MapCM = Eigen::Map<MatCM<T>>;
template <typename T>
using CMapCM = Eigen::Map<const MatCM<T>>;

// im2col for stride-1 square kernels. col is laid out row-major as
// (Cin*k*k) x (OH*OW), i.e. column-major (OH*OW) x (Cin*k*k).
template <typename T>
void im2col(const T* x, int ci, int h, int w, int k, int pad, T* col) {
  const int oh = h + 2 * pad - k + 1;
  const int ow = w + 2 * pad - k + 1;
  const std::int64_t plane = std::int64_t(oh) * ow;
  for (int c = 0; c < ci; ++c) {
    const T* src_plane = x + std::int64_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((std::int64_t(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + ky - pad;
          T* row = dst + std::int64_t(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::memset(row, 0, sizeof(T) * size_t(ow));
            continue;
          }
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(ow, w + pad - kx);
          if (x0 > 0) std::memset(row, 0, sizeof(T) * size_t(x0));
          if (x1 > x0)
            std::memcpy(row + x0, src_plane + std::int64_t(iy) * w + (x0 + kx - pad),
                        sizeof(T) * size_t(x1 - x0));
          if (x1 < ow) std::memset(row + x1, 0, sizeof(T) * size_t(ow - x1));
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* col, int ci, int h, int w, int k, int pad, T* gx) {
  const int oh = h + 2 * pad - k + 1;
  const int ow = w + 2 * pad - k + 1;
  const std::int64_t plane = std::int64_t(oh) * ow;
  for (int c = 0; c < ci; ++c) {
    T* dst_plane = gx + std::int64_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((std::int64_t(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(ow, w + pad - kx);
          const T* row = src + std::int64_t(oy) * ow;
          T* out = dst_plane + std::int64_t(iy) * w + (kx - pad);
          for (int ox = x0; ox < x1; ++ox) out[ox] += row[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
int Tape<T>::push(Ten v, bool needs, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(v);
  n.needs_grad = needs;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

template <typename T>
typename Tape<T>::Ten& Tape<T>::grad_buf(int id) {
  Node& n = nodes_[size_t(id)];
  if (!n.grad_init) {
    n.grad = Ten(n.value.shape());
    n.grad_init = true;
  }
  return n.grad;
}

template <typename T>
void Tape<T>::add_grad(int id, const Ten& g) {
  Ten& dst = grad_buf(id);
  const std::int64_t sz = dst.size();
  T* d = dst.data();
  const T* s = g.data();
  for (std::int64_t i = 0; i < sz; ++i) d[i] += s[i];
}

template <typename T>
const typename Tape<T>::Ten& Tape<T>::grad(int id) const {
  const Node& n = nodes_[size_t(id)];
  check_arg(n.grad_init, "gradient not computed for node ", id);
  return n.grad;
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
}

template <typename T>
int Tape<T>::leaf(Ten v) {
  return push(std::move(v), false);
}

template <typename T>
int Tape<T>::input(Ten v) {
  return push(std::move(v), true);
}

template <typename T>
int Tape<T>::param(const ParamPtr& p) {
  int id = push(p->value, p->trainable);
  nodes_[size_t(id)].bound = p;
  return id;
}

template <typename T>
void Tape<T>::backward(int root) {
  check_arg(root >= 0 && root < int(nodes_.size()), "backward: bad node id");
  check_arg(nodes_[size_t(root)].value.size() == 1, "backward root must be scalar");
  for (auto& n : nodes_) n.grad_init = false;
  grad_buf(root).fill(T(1));
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[size_t(id)];
    if (!n.grad_init || !n.needs_grad) continue;
    if (n.back) n.back(*this, id);
    if (n.bound && n.bound->trainable) {
      T* pg = n.bound->grad.data();
      const T* g = n.grad.data();
      for (std::int64_t i = 0; i < n.grad.size(); ++i) pg[i] += g[i];
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
int Tape<T>::add(int a, int b) {
  check_arg(val(a).shape() == val(b).shape(), "add: shape mismatch ",
            val(a).shape().str(), " vs ", val(b).shape().str());
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  const T* pb = val(b).data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Ten& g = t.grad(self);
    if (t.needs_grad(a)) t.add_grad(a, g);
    if (t.needs_grad(b)) t.add_grad(b, g);
  });
}

template <typename T>
int Tape<T>::sub(int a, int b) {
  check_arg(val(a).shape() == val(b).shape(), "sub: shape mismatch ",
            val(a).shape().str(), " vs ", val(b).shape().str());
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  const T* pb = val(b).data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
  bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Ten& g = t.grad(self);
    if (t.needs_grad(a)) t.add_grad(a, g);
    if (t.needs_grad(b)) {
      Ten& gb = t.grad_buf(b);
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
int Tape<T>::mul(int a, int b) {
  check_arg(val(a).shape() == val(b).shape(), "mul: shape mismatch");
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  const T* pb = val(b).data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& va = t.val(a);
    const Ten& vb = t.val(b);
    if (t.needs_grad(a)) {
      Ten& ga = t.grad_buf(a);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.needs_grad(b)) {
      Ten& gb = t.grad_buf(b);
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <typename T>
int Tape<T>::scale(int a, double s) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  const T ts = T(s);
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * ts;
  return push(std::move(out), needs_grad(a), [a, s](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    const T ts = T(s);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ts;
  });
}

template <typename T>
int Tape<T>::add_scalar(int a, double s) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  const T ts = T(s);
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + ts;
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    t.add_grad(a, t.grad(self));
  });
}

template <typename T>
int Tape<T>::relu(int a) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& va = t.val(a);
    Ten& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (va[i] > T(0)) ga[i] += g[i];
  });
}

template <typename T>
int Tape<T>::leaky_relu(int a, double slope) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  const T sl = T(slope);
  const std::int64_t sz = out.size();
#pragma omp parallel for schedule(static) if (sz > (1 << 16))
  for (std::int64_t i = 0; i < sz; ++i) po[i] = pa[i] > T(0) ? pa[i] : pa[i] * sl;
  return push(std::move(out), needs_grad(a), [a, slope](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& va = t.val(a);
    Ten& ga = t.grad_buf(a);
    const T sl = T(slope);
    const std::int64_t n = g.size();
#pragma omp parallel for schedule(static) if (n > (1 << 16))
    for (std::int64_t i = 0; i < n; ++i) ga[i] += va[i] > T(0) ? g[i] : g[i] * sl;
  });
}

template <typename T>
int Tape<T>::tanh_op(int a) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  const std::int64_t sz = out.size();
#pragma omp parallel for schedule(static) if (sz > (1 << 16))
  for (std::int64_t i = 0; i < sz; ++i) po[i] = std::tanh(pa[i]);
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& y = t.val(self);
    Ten& ga = t.grad_buf(a);
    const std::int64_t n = g.size();
#pragma omp parallel for schedule(static) if (n > (1 << 16))
    for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
int Tape<T>::softplus(int a) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const T x = pa[i];
    po[i] = x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& va = t.val(a);
    Ten& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const T x = va[i];
      const T sig = x > T(0) ? T(1) / (T(1) + std::exp(-x))
                             : std::exp(x) / (T(1) + std::exp(x));
      ga[i] += g[i] * sig;
    }
  });
}

template <typename T>
int Tape<T>::abs_op(int a) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = std::abs(pa[i]);
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& va = t.val(a);
    Ten& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      if (va[i] > T(0))
        ga[i] += g[i];
      else if (va[i] < T(0))
        ga[i] -= g[i];
    }
  });
}

template <typename T>
int Tape<T>::sqrt_op(int a) {
  Ten out(val(a).shape());
  const T* pa = val(a).data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    check_arg(pa[i] >= T(0), "sqrt_op: negative input");
    po[i] = std::sqrt(pa[i]);
  }
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& y = t.val(self);
    Ten& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (y[i] > T(0)) ga[i] += g[i] / (T(2) * y[i]);
  });
}

// ---------------------------------------------------------------------------
// layout
// ---------------------------------------------------------------------------

template <typename T>
int Tape<T>::concat_c(int a, int b) {
  const Shape& sa = val(a).shape();
  const Shape& sb = val(b).shape();
  check_arg(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
            "concat_c: incompatible shapes ", sa.str(), " vs ", sb.str());
  Ten out(Shape(sa.n, sa.c + sb.c, sa.h, sa.w));
  const std::int64_t pa = std::int64_t(sa.c) * sa.h * sa.w;
  const std::int64_t pb = std::int64_t(sb.c) * sb.h * sb.w;
  for (int n = 0; n < sa.n; ++n) {
    std::memcpy(out.sample(n), val(a).sample(n), sizeof(T) * size_t(pa));
    std::memcpy(out.sample(n) + pa, val(b).sample(n), sizeof(T) * size_t(pb));
  }
  bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b, pa, pb](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const int N = g.shape().n;
    if (t.needs_grad(a)) {
      Ten& ga = t.grad_buf(a);
      for (int n = 0; n < N; ++n) {
        const T* src = g.sample(n);
        T* dst = ga.sample(n);
        for (std::int64_t i = 0; i < pa; ++i) dst[i] += src[i];
      }
    }
    if (t.needs_grad(b)) {
      Ten& gb = t.grad_buf(b);
      for (int n = 0; n < N; ++n) {
        const T* src = g.sample(n) + pa;
        T* dst = gb.sample(n);
        for (std::int64_t i = 0; i < pb; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
int Tape<T>::slice_c(int a, int c0, int c1) {
  const Shape& s = val(a).shape();
  check_arg(0 <= c0 && c0 < c1 && c1 <= s.c, "slice_c: bad channel range");
  Ten out(Shape(s.n, c1 - c0, s.h, s.w));
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    std::memcpy(out.sample(n), val(a).sample(n) + c0 * plane,
                sizeof(T) * size_t((c1 - c0) * plane));
  return push(std::move(out), needs_grad(a), [a, c0, plane](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    const int N = g.shape().n;
    const std::int64_t blk = std::int64_t(g.shape().c) * plane;
    for (int n = 0; n < N; ++n) {
      const T* src = g.sample(n);
      T* dst = ga.sample(n) + c0 * plane;
      for (std::int64_t i = 0; i < blk; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
int Tape<T>::flatten(int a) {
  const Shape& s = val(a).shape();
  Ten out(Shape(s.n, int(s.size() / s.n), 1, 1));
  std::memcpy(out.data(), val(a).data(), sizeof(T) * size_t(s.size()));
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
int Tape<T>::concat_n(int a, int b) {
  const Shape& sa = val(a).shape();
  const Shape& sb = val(b).shape();
  check_arg(sa.c == sb.c && sa.h == sb.h && sa.w == sb.w,
            "concat_n: incompatible shapes ", sa.str(), " vs ", sb.str());
  Ten out(Shape(sa.n + sb.n, sa.c, sa.h, sa.w));
  const std::int64_t block_a = std::int64_t(sa.n) * out.sample_size();
  std::memcpy(out.data(), val(a).data(), sizeof(T) * size_t(block_a));
  std::memcpy(out.data() + block_a, val(b).data(),
              sizeof(T) * size_t(std::int64_t(sb.n) * out.sample_size()));
  bool ng = needs_grad(a) || needs_grad(b);
  const int na = sa.n;
  return push(std::move(out), ng, [a, b, na](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const std::int64_t ss = g.sample_size();
    if (t.needs_grad(a)) {
      Ten& ga = t.grad_buf(a);
      const T* src = g.data();
      for (std::int64_t i = 0; i < na * ss; ++i) ga[i] += src[i];
    }
    if (t.needs_grad(b)) {
      Ten& gb = t.grad_buf(b);
      const T* src = g.data() + na * ss;
      for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] += src[i];
    }
  });
}

template <typename T>
int Tape<T>::select_rows(int a, const std::vector<int>& rows) {
  const Shape& s = val(a).shape();
  check_arg(!rows.empty(), "select_rows: empty selection");
  for (int r : rows) check_arg(r >= 0 && r < s.n, "select_rows: index out of range");
  Ten out(Shape(int(rows.size()), s.c, s.h, s.w));
  const std::int64_t ss = out.sample_size();
  for (size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.sample(int(i)), val(a).sample(rows[i]), sizeof(T) * size_t(ss));
  return push(std::move(out), needs_grad(a), [a, rows](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    const std::int64_t ss = g.sample_size();
    for (size_t i = 0; i < rows.size(); ++i) {
      const T* src = g.sample(int(i));
      T* dst = ga.sample(rows[i]);
      for (std::int64_t j = 0; j < ss; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
int Tape<T>::detach(int a) {
  return push(val(a), false);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
int Tape<T>::mean_all(int a) {
  const std::int64_t sz = val(a).size();
  T acc = T(0);
  const T* pa = val(a).data();
  for (std::int64_t i = 0; i < sz; ++i) acc += pa[i];
  Ten out(Shape(1, 1, 1, 1));
  out[0] = acc / T(sz);
  return push(std::move(out), needs_grad(a), [a, sz](Tape& t, int self) {
    const T g = t.grad(self)[0] / T(sz);
    Ten& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
int Tape<T>::sum_all(int a) {
  const std::int64_t sz = val(a).size();
  T acc = T(0);
  const T* pa = val(a).data();
  for (std::int64_t i = 0; i < sz; ++i) acc += pa[i];
  Ten out(Shape(1, 1, 1, 1));
  out[0] = acc;
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const T g = t.grad(self)[0];
    Ten& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
int Tape<T>::sum_c(int a) {
  const Shape& s = val(a).shape();
  Ten out(Shape(s.n, 1, s.h, s.w));
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const T* src = val(a).sample(n);
    T* dst = out.sample(n);
    std::memset(dst, 0, sizeof(T) * size_t(plane));
    for (int c = 0; c < s.c; ++c)
      for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[c * plane + i];
  }
  return push(std::move(out), needs_grad(a), [a, plane](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    const Shape& s = ga.shape();
    for (int n = 0; n < s.n; ++n) {
      const T* src = g.sample(n);
      T* dst = ga.sample(n);
      for (int c = 0; c < s.c; ++c)
        for (std::int64_t i = 0; i < plane; ++i) dst[c * plane + i] += src[i];
    }
  });
}

template <typename T>
int Tape<T>::global_avg_pool(int a) {
  const Shape& s = val(a).shape();
  Ten out(Shape(s.n, s.c, 1, 1));
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = val(a).sample(n) + c * plane;
      T acc = T(0);
      for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
      out.at(n, c, 0, 0) = acc / T(plane);
    }
  return push(std::move(out), needs_grad(a), [a, plane](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    const Shape& s = ga.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T gv = g.at(n, c, 0, 0) / T(plane);
        T* dst = ga.sample(n) + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) dst[i] += gv;
      }
  });
}

// ---------------------------------------------------------------------------
// structured ops
// ---------------------------------------------------------------------------

template <typename T>
int Tape<T>::conv2d(int x, int w, int b, int pad) {
  const Shape& xs = val(x).shape();
  const Shape& ws = val(w).shape();
  const Shape& bs = val(b).shape();
  check_arg(ws.h == ws.w, "conv2d: kernel must be square");
  const int k = ws.h;
  check_arg(ws.c == xs.c, "conv2d: channel mismatch: input ", xs.str(),
            " weight ", ws.str());
  check_arg(bs.n == ws.n && bs.size() == ws.n, "conv2d: bad bias shape");
  const int oh = xs.h + 2 * pad - k + 1;
  const int ow = xs.w + 2 * pad - k + 1;
  check_arg(oh > 0 && ow > 0, "conv2d: kernel larger than padded input");

  const int N = xs.n, Ci = xs.c, Co = ws.n;
  const std::int64_t K = std::int64_t(Ci) * k * k;
  const std::int64_t P = std::int64_t(oh) * ow;

  Ten out(Shape(N, Co, oh, ow));
  {
    const T* xd = val(x).data();
    const T* wd = val(w).data();
    const T* bd = val(b).data();
    T* od = out.data();
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
      std::vector<T> col(size_t(K * P));
      im2col(xd + std::int64_t(n) * Ci * xs.h * xs.w, Ci, xs.h, xs.w, k, pad, col.data());
      // row-major views become transposed col-major maps
      CMapCM<T> colm(col.data(), P, K);
      CMapCM<T> wm(wd, K, Co);
      MapCM<T> ym(od + std::int64_t(n) * Co * P, P, Co);
      ym.noalias() = colm * wm;
      for (int c = 0; c < Co; ++c) ym.col(c).array() += bd[c];
    }
  }

  bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  const int H = xs.h, W = xs.w;
  return push(std::move(out), ng, [x, w, b, pad, k, K, P, H, W, Ci, Co, N](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const T* gd = g.data();
    const T* xd = t.val(x).data();
    const T* wd = t.val(w).data();
    const bool need_x = t.needs_grad(x);
    const bool need_w = t.needs_grad(w);
    const bool need_b = t.needs_grad(b);

    std::vector<std::vector<T>> dw_parts;
    std::vector<std::vector<T>> db_parts;
    if (need_w) dw_parts.assign(size_t(N), std::vector<T>());
    if (need_b) db_parts.assign(size_t(N), std::vector<T>());
    T* gxd = need_x ? t.grad_buf(x).data() : nullptr;

#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
      CMapCM<T> gym(gd + std::int64_t(n) * Co * P, P, Co);
      if (need_w) {
        std::vector<T> col(size_t(K * P));
        im2col(xd + std::int64_t(n) * Ci * H * W, Ci, H, W, k, pad, col.data());
        CMapCM<T> colm(col.data(), P, K);
        dw_parts[size_t(n)].resize(size_t(K) * Co);
        MapCM<T> dwm(dw_parts[size_t(n)].data(), K, Co);
        dwm.noalias() = colm.transpose() * gym;
      }
      if (need_b) {
        db_parts[size_t(n)].resize(size_t(Co));
        for (int c = 0; c < Co; ++c) {
          T acc = T(0);
          const T* gc = gd + (std::int64_t(n) * Co + c) * P;
          for (std::int64_t i = 0; i < P; ++i) acc += gc[i];
          db_parts[size_t(n)][size_t(c)] = acc;
        }
      }
      if (need_x) {
        std::vector<T> dcol(size_t(K * P));
        CMapCM<T> wm(wd, K, Co);
        MapCM<T> dcolm(dcol.data(), P, K);
        dcolm.noalias() = gym * wm.transpose();
        col2im_acc(dcol.data(), Ci, H, W, k, pad, gxd + std::int64_t(n) * Ci * H * W);
      }
    }
    // fixed-order reduction keeps results independent of thread scheduling
    if (need_w) {
      Ten& gw = t.grad_buf(w);
      for (int n = 0; n < N; ++n) {
        const T* part = dw_parts[size_t(n)].data();
        T* dst = gw.data();
        for (std::int64_t i = 0; i < std::int64_t(K) * Co; ++i) dst[i] += part[i];
      }
    }
    if (need_b) {
      Ten& gb = t.grad_buf(b);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Co; ++c) gb[c] += db_parts[size_t(n)][size_t(c)];
    }
  });
}

template <typename T>
int Tape<T>::linear(int x, int w, int b) {
  const Shape& xs = val(x).shape();
  const Shape& ws = val(w).shape();
  check_arg(xs.h == 1 && xs.w == 1, "linear: input must be (N,F,1,1)");
  check_arg(ws.c == xs.c && ws.h == 1 && ws.w == 1, "linear: weight mismatch ",
            ws.str(), " for input ", xs.str());
  check_arg(val(b).size() == ws.n, "linear: bad bias");
  const int N = xs.n, F = xs.c, O = ws.n;
  Ten out(Shape(N, O, 1, 1));
  {
    CMapCM<T> xm(val(x).data(), F, N);   // x^T
    CMapCM<T> wm(val(w).data(), F, O);   // w^T
    MapCM<T> ym(out.data(), O, N);       // y^T
    ym.noalias() = wm.transpose() * xm;
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) ym(o, n) += val(b)[o];
  }
  bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  return push(std::move(out), ng, [x, w, b, N, F, O](Tape& t, int self) {
    const Ten& g = t.grad(self);
    CMapCM<T> gym(g.data(), O, N);
    if (t.needs_grad(x)) {
      CMapCM<T> wm(t.val(w).data(), F, O);
      MapCM<T> gxm(t.grad_buf(x).data(), F, N);
      gxm.noalias() += wm * gym;
    }
    if (t.needs_grad(w)) {
      CMapCM<T> xm(t.val(x).data(), F, N);
      MapCM<T> gwm(t.grad_buf(w).data(), F, O);
      gwm.noalias() += xm * gym.transpose();
    }
    if (t.needs_grad(b)) {
      Ten& gb = t.grad_buf(b);
      for (int o = 0; o < O; ++o) {
        T acc = T(0);
        for (int n = 0; n < N; ++n) acc += gym(o, n);
        gb[o] += acc;
      }
    }
  });
}

template <typename T>
int Tape<T>::avg_pool2(int a) {
  const Shape& s = val(a).shape();
  check_arg(s.h % 2 == 0 && s.w % 2 == 0, "avg_pool2: odd spatial size ", s.str());
  const int oh = s.h / 2, ow = s.w / 2;
  Ten out(Shape(s.n, s.c, oh, ow));
  const Ten& v = val(a);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
          out.at(n, c, y, x) = (v.at(n, c, 2 * y, 2 * x) + v.at(n, c, 2 * y, 2 * x + 1) +
                                v.at(n, c, 2 * y + 1, 2 * x) + v.at(n, c, 2 * y + 1, 2 * x + 1)) *
                               T(0.25);
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    const Shape& os = g.shape();
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y = 0; y < os.h; ++y)
          for (int x = 0; x < os.w; ++x) {
            const T gv = g.at(n, c, y, x) * T(0.25);
            ga.at(n, c, 2 * y, 2 * x) += gv;
            ga.at(n, c, 2 * y, 2 * x + 1) += gv;
            ga.at(n, c, 2 * y + 1, 2 * x) += gv;
            ga.at(n, c, 2 * y + 1, 2 * x + 1) += gv;
          }
  });
}

template <typename T>
int Tape<T>::upsample2(int a) {
  const Shape& s = val(a).shape();
  Ten out(Shape(s.n, s.c, s.h * 2, s.w * 2));
  const Ten& v = val(a);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const T vv = v.at(n, c, y, x);
          out.at(n, c, 2 * y, 2 * x) = vv;
          out.at(n, c, 2 * y, 2 * x + 1) = vv;
          out.at(n, c, 2 * y + 1, 2 * x) = vv;
          out.at(n, c, 2 * y + 1, 2 * x + 1) = vv;
        }
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    Ten& ga = t.grad_buf(a);
    const Shape& s = ga.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x)
            ga.at(n, c, y, x) += g.at(n, c, 2 * y, 2 * x) + g.at(n, c, 2 * y, 2 * x + 1) +
                                 g.at(n, c, 2 * y + 1, 2 * x) + g.at(n, c, 2 * y + 1, 2 * x + 1);
  });
}

template <typename T>
int Tape<T>::pixel_norm(int a, double eps) {
  const Shape& s = val(a).shape();
  Ten out(s);
  const Ten& v = val(a);
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  const T te = T(eps);
#pragma omp parallel for schedule(static) if (s.n > 1)
  for (int n = 0; n < s.n; ++n) {
    const T* src = v.sample(n);
    T* dst = out.sample(n);
    for (std::int64_t i = 0; i < plane; ++i) {
      T ss = T(0);
      for (int c = 0; c < s.c; ++c) {
        const T x = src[c * plane + i];
        ss += x * x;
      }
      const T inv = T(1) / std::sqrt(ss / T(s.c) + te);
      for (int c = 0; c < s.c; ++c) dst[c * plane + i] = src[c * plane + i] * inv;
    }
  }
  return push(std::move(out), needs_grad(a), [a, eps, plane](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& v = t.val(a);
    Ten& ga = t.grad_buf(a);
    const Shape& s = v.shape();
    const T te = T(eps);
#pragma omp parallel for schedule(static) if (s.n > 1)
    for (int n = 0; n < s.n; ++n) {
      const T* x = v.sample(n);
      const T* gy = g.sample(n);
      T* gx = ga.sample(n);
      for (std::int64_t i = 0; i < plane; ++i) {
        T ss = T(0), dot = T(0);
        for (int c = 0; c < s.c; ++c) {
          const T xv = x[c * plane + i];
          ss += xv * xv;
          dot += gy[c * plane + i] * xv;
        }
        const T m = ss / T(s.c) + te;
        const T inv = T(1) / std::sqrt(m);
        const T inv3 = inv / m;  // s^{-3/2}
        for (int c = 0; c < s.c; ++c)
          gx[c * plane + i] += gy[c * plane + i] * inv - x[c * plane + i] * dot * inv3 / T(s.c);
      }
    }
  });
}

template <typename T>
int Tape<T>::minibatch_stddev(int a) {
  const Shape& s = val(a).shape();
  check_arg(s.n >= 2, "minibatch_stddev: batch size must be >= 2, got ", s.n);
  const Ten& v = val(a);
  const std::int64_t F = std::int64_t(s.c) * s.h * s.w;
  // population stddev per feature, averaged over all features
  T mean_sd = T(0);
  for (std::int64_t f = 0; f < F; ++f) {
    T mu = T(0);
    for (int n = 0; n < s.n; ++n) mu += v.data()[n * F + f];
    mu /= T(s.n);
    T var = T(0);
    for (int n = 0; n < s.n; ++n) {
      const T d = v.data()[n * F + f] - mu;
      var += d * d;
    }
    var /= T(s.n);
    mean_sd += std::sqrt(var);
  }
  mean_sd /= T(F);

  Ten out(Shape(s.n, s.c + 1, s.h, s.w));
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    std::memcpy(out.sample(n), v.sample(n), sizeof(T) * size_t(F));
    T* extra = out.sample(n) + F;
    for (std::int64_t i = 0; i < plane; ++i) extra[i] = mean_sd;
  }
  return push(std::move(out), needs_grad(a), [a, F, plane](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& v = t.val(a);
    Ten& ga = t.grad_buf(a);
    const Shape& s = v.shape();
    // passthrough for the original channels
    for (int n = 0; n < s.n; ++n) {
      const T* src = g.sample(n);
      T* dst = ga.sample(n);
      for (std::int64_t i = 0; i < F; ++i) dst[i] += src[i];
    }
    // total gradient hitting the broadcast scalar
    T gs = T(0);
    for (int n = 0; n < s.n; ++n) {
      const T* extra = g.sample(n) + F;
      for (std::int64_t i = 0; i < plane; ++i) gs += extra[i];
    }
    for (std::int64_t f = 0; f < F; ++f) {
      T mu = T(0);
      for (int n = 0; n < s.n; ++n) mu += v.data()[n * F + f];
      mu /= T(s.n);
      T var = T(0);
      for (int n = 0; n < s.n; ++n) {
        const T d = v.data()[n * F + f] - mu;
        var += d * d;
      }
      var /= T(s.n);
      const T sd = std::sqrt(var);
      if (sd <= T(0)) continue;  // subgradient 0 at zero variance
      const T coef = gs / (T(F) * T(s.n) * sd);
      for (int n = 0; n < s.n; ++n)
        ga.data()[n * F + f] += coef * (v.data()[n * F + f] - mu);
    }
  });
}

template <typename T>
int Tape<T>::gram(int a) {
  const Shape& s = val(a).shape();
  const std::int64_t hw = std::int64_t(s.h) * s.w;
  const T norm = T(1) / (T(s.c) * T(hw));
  Ten out(Shape(s.n, s.c, s.c, 1));
  for (int n = 0; n < s.n; ++n) {
    CMapCM<T> am(val(a).sample(n), hw, s.c);  // A^T
    MapCM<T> gm(out.sample(n), s.c, s.c);     // symmetric, layout-agnostic
    gm.noalias() = am.transpose() * am;
    gm *= norm;
  }
  return push(std::move(out), needs_grad(a), [a, hw, norm](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& v = t.val(a);
    Ten& ga = t.grad_buf(a);
    const Shape& s = v.shape();
    for (int n = 0; n < s.n; ++n) {
      CMapCM<T> am(v.sample(n), hw, s.c);
      CMapCM<T> ggm(g.sample(n), s.c, s.c);
      MatCM<T> sym = (ggm + ggm.transpose()) * norm;
      MapCM<T> gam(ga.sample(n), hw, s.c);
      gam.noalias() += am * sym;
    }
  });
}

template <typename T>
int Tape<T>::log_softmax_c(int a) {
  const Shape& s = val(a).shape();
  check_arg(s.h == 1 && s.w == 1, "log_softmax_c: expects (N,K,1,1)");
  Ten out(s);
  const Ten& v = val(a);
  for (int n = 0; n < s.n; ++n) {
    const T* src = v.sample(n);
    T* dst = out.sample(n);
    T m = src[0];
    for (int c = 1; c < s.c; ++c) m = std::max(m, src[c]);
    T lse = T(0);
    for (int c = 0; c < s.c; ++c) lse += std::exp(src[c] - m);
    lse = m + std::log(lse);
    for (int c = 0; c < s.c; ++c) dst[c] = src[c] - lse;
  }
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& y = t.val(self);
    Ten& ga = t.grad_buf(a);
    const Shape& s = y.shape();
    for (int n = 0; n < s.n; ++n) {
      const T* gy = g.sample(n);
      const T* yv = y.sample(n);
      T* gx = ga.sample(n);
      T gsum = T(0);
      for (int c = 0; c < s.c; ++c) gsum += gy[c];
      for (int c = 0; c < s.c; ++c) gx[c] += gy[c] - std::exp(yv[c]) * gsum;
    }
  });
}

template <typename T>
int Tape<T>::l2norm_rows(int a) {
  const Shape& s = val(a).shape();
  check_arg(s.h == 1 && s.w == 1, "l2norm_rows: expects (N,D,1,1)");
  Ten out(s);
  const Ten& v = val(a);
  for (int n = 0; n < s.n; ++n) {
    const T* src = v.sample(n);
    T* dst = out.sample(n);
    T ss = T(0);
    for (int c = 0; c < s.c; ++c) ss += src[c] * src[c];
    const T nrm = std::sqrt(ss);
    if (nrm > T(0))
      for (int c = 0; c < s.c; ++c) dst[c] = src[c] / nrm;
    else
      for (int c = 0; c < s.c; ++c) dst[c] = T(0);
  }
  return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
    const Ten& g = t.grad(self);
    const Ten& y = t.val(self);
    const Ten& v = t.val(a);
    Ten& ga = t.grad_buf(a);
    const Shape& s = y.shape();
    for (int n = 0; n < s.n; ++n) {
      const T* src = v.sample(n);
      T ss = T(0);
      for (int c = 0; c < s.c; ++c) ss += src[c] * src[c];
      const T nrm = std::sqrt(ss);
      if (nrm <= T(0)) continue;
      const T* gy = g.sample(n);
      const T* yv = y.sample(n);
      T* gx = ga.sample(n);
      T dot = T(0);
      for (int c = 0; c < s.c; ++c) dot += gy[c] * yv[c];
      for (int c = 0; c < s.c; ++c) gx[c] += (gy[c] - yv[c] * dot) / nrm;
    }
  });
}

template class Tape<float>;
template class Tape<double>;

}  // namespace s2p
