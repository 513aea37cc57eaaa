#include "edd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "edd/rng.hpp"
#include "edd/special.hpp"

namespace edd {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), values(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != shape_product(shape)) {
    shape_fail("tensor", "value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str());
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::row(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// === Tape ==================================================================

VarId Tape::leaf(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && recording();
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

VarId Tape::emit(Tensor value, std::initializer_list<VarId> parents,
                 std::function<void(Tape&, VarId)> back) {
  Node n;
  n.value = std::move(value);
  if (recording()) {
    for (VarId p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
    if (n.needs_grad) n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tensor& Tape::grad_buf(VarId id) {
  Node& n = nodes_[id];
  if (n.grad.values.empty()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

std::unordered_map<VarId, Tensor> Tape::backward(VarId loss) {
  if (!recording()) shape_fail("backward", "tape is in inference mode");
  if (nodes_[loss].value.numel() != 1) {
    shape_fail("backward",
               "loss must be scalar, got shape " + nodes_[loss].value.shape_str());
  }
  if (!nodes_[loss].needs_grad) {
    shape_fail("backward", "loss does not depend on any grad-enabled leaf");
  }
  grad_buf(loss).values[0] = 1.0;
  for (std::size_t i = loss + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back && has_grad(i)) n.back(*this, i);
  }
  std::unordered_map<VarId, Tensor> grads;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.is_leaf && n.needs_grad) {
      grads.emplace(i, has_grad(i) ? std::move(n.grad) : Tensor(n.value.shape));
    }
  }
  nodes_.clear();
  return grads;
}

// === primitives ============================================================

VarId Tape::conv1d(VarId x, VarId w, VarId b, std::size_t stride) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  if (xv.rank() != 3 || wv.rank() != 3) {
    shape_fail("conv1d", "expected input (B,C,T) and weight (F,C,K), got " +
                             xv.shape_str() + " and " + wv.shape_str());
  }
  const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
  const std::size_t F = wv.dim(0), K = wv.dim(2);
  if (wv.dim(1) != C) {
    shape_fail("conv1d", "channel mismatch: input " + xv.shape_str() +
                             " vs weight " + wv.shape_str());
  }
  if (bv.rank() != 1 || bv.dim(0) != F) {
    shape_fail("conv1d", "bias " + bv.shape_str() + " vs weight " + wv.shape_str());
  }
  if (stride == 0) shape_fail("conv1d", "stride must be positive");
  if (T < K) {
    shape_fail("conv1d", "input " + xv.shape_str() + " shorter than kernel " +
                             std::to_string(K));
  }
  const std::size_t To = (T - K) / stride + 1;

  Tensor out({B, F, To});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t f = 0; f < F; ++f) {
      double* orow = &out.values[(bi * F + f) * To];
      const double bias = bv.values[f];
      for (std::size_t t = 0; t < To; ++t) orow[t] = bias;
      for (std::size_t c = 0; c < C; ++c) {
        const double* irow = &xv.values[(bi * C + c) * T];
        const double* wrow = &wv.values[(f * C + c) * K];
        for (std::size_t k = 0; k < K; ++k) {
          const double wk = wrow[k];
          if (stride == 1) {
            const double* ip = irow + k;
            for (std::size_t t = 0; t < To; ++t) orow[t] += wk * ip[t];
          } else {
            for (std::size_t t = 0; t < To; ++t) orow[t] += wk * irow[t * stride + k];
          }
        }
      }
    }
  }
  return emit(std::move(out), {x, w, b}, [x, w, b, stride](Tape& tp, VarId self) {
    const Tensor& xv = tp.nodes_[x].value;
    const Tensor& wv = tp.nodes_[w].value;
    const Tensor& go = tp.nodes_[self].grad;
    const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
    const std::size_t F = wv.dim(0), K = wv.dim(2);
    const std::size_t To = go.dim(2);
    if (tp.nodes_[x].needs_grad) {
      Tensor& gx = tp.grad_buf(x);
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t f = 0; f < F; ++f) {
          const double* grow = &go.values[(bi * F + f) * To];
          for (std::size_t c = 0; c < C; ++c) {
            double* gxrow = &gx.values[(bi * C + c) * T];
            const double* wrow = &wv.values[(f * C + c) * K];
            for (std::size_t k = 0; k < K; ++k) {
              const double wk = wrow[k];
              if (stride == 1) {
                double* gp = gxrow + k;
                for (std::size_t t = 0; t < To; ++t) gp[t] += wk * grow[t];
              } else {
                for (std::size_t t = 0; t < To; ++t)
                  gxrow[t * stride + k] += wk * grow[t];
              }
            }
          }
        }
    }
    if (tp.nodes_[w].needs_grad) {
      Tensor& gw = tp.grad_buf(w);
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t f = 0; f < F; ++f) {
          const double* grow = &go.values[(bi * F + f) * To];
          for (std::size_t c = 0; c < C; ++c) {
            const double* irow = &xv.values[(bi * C + c) * T];
            double* gwrow = &gw.values[(f * C + c) * K];
            for (std::size_t k = 0; k < K; ++k) {
              double acc = 0.0;
              if (stride == 1) {
                const double* ip = irow + k;
                for (std::size_t t = 0; t < To; ++t) acc += grow[t] * ip[t];
              } else {
                for (std::size_t t = 0; t < To; ++t)
                  acc += grow[t] * irow[t * stride + k];
              }
              gwrow[k] += acc;
            }
          }
        }
    }
    if (tp.nodes_[b].needs_grad) {
      Tensor& gb = tp.grad_buf(b);
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t f = 0; f < F; ++f) {
          const double* grow = &go.values[(bi * F + f) * To];
          double acc = 0.0;
          for (std::size_t t = 0; t < To; ++t) acc += grow[t];
          gb.values[f] += acc;
        }
    }
  });
}

VarId Tape::affine(VarId x, VarId w, VarId b) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1)) {
    shape_fail("affine", "input " + xv.shape_str() + " vs weight " + wv.shape_str() +
                             " (expected (B,N) x (M,N))");
  }
  const std::size_t B = xv.dim(0), N = xv.dim(1), M = wv.dim(0);
  if (bv.rank() != 1 || bv.dim(0) != M) {
    shape_fail("affine", "bias " + bv.shape_str() + " vs weight " + wv.shape_str());
  }
  Tensor out({B, M});
  for (std::size_t i = 0; i < B; ++i) {
    const double* xr = &xv.values[i * N];
    double* orow = &out.values[i * M];
    for (std::size_t m = 0; m < M; ++m) {
      const double* wr = &wv.values[m * N];
      double acc = bv.values[m];
      for (std::size_t n = 0; n < N; ++n) acc += xr[n] * wr[n];
      orow[m] = acc;
    }
  }
  return emit(std::move(out), {x, w, b}, [x, w, b](Tape& tp, VarId self) {
    const Tensor& xv = tp.nodes_[x].value;
    const Tensor& wv = tp.nodes_[w].value;
    const Tensor& go = tp.nodes_[self].grad;
    const std::size_t B = xv.dim(0), N = xv.dim(1), M = wv.dim(0);
    if (tp.nodes_[x].needs_grad) {
      Tensor& gx = tp.grad_buf(x);
      for (std::size_t i = 0; i < B; ++i) {
        const double* gr = &go.values[i * M];
        double* gxr = &gx.values[i * N];
        for (std::size_t m = 0; m < M; ++m) {
          const double gm = gr[m];
          const double* wr = &wv.values[m * N];
          for (std::size_t n = 0; n < N; ++n) gxr[n] += gm * wr[n];
        }
      }
    }
    if (tp.nodes_[w].needs_grad) {
      Tensor& gw = tp.grad_buf(w);
      for (std::size_t i = 0; i < B; ++i) {
        const double* gr = &go.values[i * M];
        const double* xr = &xv.values[i * N];
        for (std::size_t m = 0; m < M; ++m) {
          const double gm = gr[m];
          double* gwr = &gw.values[m * N];
          for (std::size_t n = 0; n < N; ++n) gwr[n] += gm * xr[n];
        }
      }
    }
    if (tp.nodes_[b].needs_grad) {
      Tensor& gb = tp.grad_buf(b);
      for (std::size_t i = 0; i < B; ++i) {
        const double* gr = &go.values[i * M];
        for (std::size_t m = 0; m < M; ++m) gb.values[m] += gr[m];
      }
    }
  });
}

VarId Tape::relu(VarId x) {
  Tensor out = nodes_[x].value;
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  return emit(std::move(out), {x}, [x](Tape& tp, VarId self) {
    const Tensor& xv = tp.nodes_[x].value;
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i)
      if (xv.values[i] > 0.0) gx.values[i] += go.values[i];
  });
}

VarId Tape::dropout(VarId x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    shape_fail("dropout", "rate must be in [0,1), got " + std::to_string(p));
  }
  const Tensor& xv = nodes_[x].value;
  // Inverted dropout: kept units are scaled by 1/(1-p) at train time so the
  // inference path applies no rescaling at all.
  auto mask = std::make_shared<std::vector<double>>(xv.numel());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : *mask) m = rng.uniform() >= p ? keep_scale : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] *= (*mask)[i];
  return emit(std::move(out), {x}, [x, mask](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx.values[i] += go.values[i] * (*mask)[i];
  });
}

VarId Tape::max_pool_time(VarId x) {
  const Tensor& xv = nodes_[x].value;
  if (xv.rank() != 3) {
    shape_fail("max_pool_time", "expected (B,C,T), got " + xv.shape_str());
  }
  const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
  Tensor out({B, C});
  auto argmax = std::make_shared<std::vector<std::size_t>>(B * C);
  for (std::size_t i = 0; i < B * C; ++i) {
    const double* row = &xv.values[i * T];
    std::size_t best = 0;
    for (std::size_t t = 1; t < T; ++t)
      if (row[t] > row[best]) best = t;  // first max wins on ties
    (*argmax)[i] = best;
    out.values[i] = row[best];
  }
  return emit(std::move(out), {x}, [x, argmax, T](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < go.numel(); ++i)
      gx.values[i * T + (*argmax)[i]] += go.values[i];
  });
}

VarId Tape::softmax(VarId x, double temperature) {
  const Tensor& xv = nodes_[x].value;
  if (xv.rank() < 1 || xv.numel() == 0) {
    shape_fail("softmax", "empty input " + xv.shape_str());
  }
  if (!(temperature > 0.0)) {
    shape_fail("softmax",
               "temperature must be positive, got " + std::to_string(temperature));
  }
  const std::size_t K = xv.shape.back();
  const std::size_t R = xv.numel() / K;
  Tensor out(xv.shape);
  for (std::size_t r = 0; r < R; ++r) {
    const double* zr = &xv.values[r * K];
    double* orow = &out.values[r * K];
    double m = zr[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, zr[k]);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      orow[k] = std::exp((zr[k] - m) / temperature);
      s += orow[k];
    }
    const double inv = 1.0 / s;
    for (std::size_t k = 0; k < K; ++k) orow[k] *= inv;
  }
  return emit(std::move(out), {x}, [x, K, temperature](Tape& tp, VarId self) {
    const Tensor& ov = tp.nodes_[self].value;
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    const std::size_t R = ov.numel() / K;
    for (std::size_t r = 0; r < R; ++r) {
      const double* orow = &ov.values[r * K];
      const double* grow = &go.values[r * K];
      double dot = 0.0;
      for (std::size_t k = 0; k < K; ++k) dot += grow[k] * orow[k];
      double* gxr = &gx.values[r * K];
      for (std::size_t k = 0; k < K; ++k)
        gxr[k] += orow[k] * (grow[k] - dot) / temperature;
    }
  });
}

VarId Tape::sigmoid(VarId x) {
  Tensor out = nodes_[x].value;
  for (double& v : out.values) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return emit(std::move(out), {x}, [x](Tape& tp, VarId self) {
    const Tensor& ov = tp.nodes_[self].value;
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      const double s = ov.values[i];
      gx.values[i] += go.values[i] * s * (1.0 - s);
    }
  });
}

VarId Tape::exp(VarId x) {
  Tensor out = nodes_[x].value;
  for (double& v : out.values) v = std::exp(v);
  return emit(std::move(out), {x}, [x](Tape& tp, VarId self) {
    const Tensor& ov = tp.nodes_[self].value;
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx.values[i] += go.values[i] * ov.values[i];
  });
}

VarId Tape::log(VarId x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    if (!(xv.values[i] > 0.0)) {
      shape_fail("log", "non-positive input " + std::to_string(xv.values[i]) +
                            " at flat index " + std::to_string(i));
    }
    out.values[i] = std::log(xv.values[i]);
  }
  return emit(std::move(out), {x}, [x](Tape& tp, VarId self) {
    const Tensor& xv = tp.nodes_[x].value;
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx.values[i] += go.values[i] / xv.values[i];
  });
}

VarId Tape::neg(VarId x) {
  Tensor out = nodes_[x].value;
  for (double& v : out.values) v = -v;
  return emit(std::move(out), {x}, [x](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx.values[i] -= go.values[i];
  });
}

VarId Tape::add(VarId a, VarId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) shape_fail("add", av.shape_str() + " vs " + bv.shape_str());
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] += bv.values[i];
  return emit(std::move(out), {a, b}, [a, b](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    if (tp.nodes_[a].needs_grad) {
      Tensor& ga = tp.grad_buf(a);
      for (std::size_t i = 0; i < ga.numel(); ++i) ga.values[i] += go.values[i];
    }
    if (tp.nodes_[b].needs_grad) {
      Tensor& gb = tp.grad_buf(b);
      for (std::size_t i = 0; i < gb.numel(); ++i) gb.values[i] += go.values[i];
    }
  });
}

VarId Tape::sub(VarId a, VarId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) shape_fail("sub", av.shape_str() + " vs " + bv.shape_str());
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] -= bv.values[i];
  return emit(std::move(out), {a, b}, [a, b](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    if (tp.nodes_[a].needs_grad) {
      Tensor& ga = tp.grad_buf(a);
      for (std::size_t i = 0; i < ga.numel(); ++i) ga.values[i] += go.values[i];
    }
    if (tp.nodes_[b].needs_grad) {
      Tensor& gb = tp.grad_buf(b);
      for (std::size_t i = 0; i < gb.numel(); ++i) gb.values[i] -= go.values[i];
    }
  });
}

VarId Tape::mul(VarId a, VarId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) shape_fail("mul", av.shape_str() + " vs " + bv.shape_str());
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] *= bv.values[i];
  return emit(std::move(out), {a, b}, [a, b](Tape& tp, VarId self) {
    const Tensor& av = tp.nodes_[a].value;
    const Tensor& bv = tp.nodes_[b].value;
    const Tensor& go = tp.nodes_[self].grad;
    if (tp.nodes_[a].needs_grad) {
      Tensor& ga = tp.grad_buf(a);
      for (std::size_t i = 0; i < ga.numel(); ++i)
        ga.values[i] += go.values[i] * bv.values[i];
    }
    if (tp.nodes_[b].needs_grad) {
      Tensor& gb = tp.grad_buf(b);
      for (std::size_t i = 0; i < gb.numel(); ++i)
        gb.values[i] += go.values[i] * av.values[i];
    }
  });
}

VarId Tape::scale(VarId x, double c) {
  Tensor out = nodes_[x].value;
  for (double& v : out.values) v *= c;
  return emit(std::move(out), {x}, [x, c](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx.values[i] += go.values[i] * c;
  });
}

VarId Tape::shift(VarId x, double c) {
  Tensor out = nodes_[x].value;
  for (double& v : out.values) v += c;
  return emit(std::move(out), {x}, [x](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx.values[i] += go.values[i];
  });
}

VarId Tape::clamp(VarId x, double lo, double hi) {
  if (!(lo <= hi)) {
    shape_fail("clamp", "lo " + std::to_string(lo) + " > hi " + std::to_string(hi));
  }
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < xv.numel(); ++i)
    out.values[i] = std::min(std::max(xv.values[i], lo), hi);
  return emit(std::move(out), {x}, [x, lo, hi](Tape& tp, VarId self) {
    const Tensor& xv = tp.nodes_[x].value;
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    // Gradient passes through strictly inside the bounds, zero outside.
    for (std::size_t i = 0; i < gx.numel(); ++i)
      if (xv.values[i] > lo && xv.values[i] < hi) gx.values[i] += go.values[i];
  });
}

VarId Tape::lgamma(VarId x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < xv.numel(); ++i) out.values[i] = lgamma_pos(xv.values[i]);
  return emit(std::move(out), {x}, [x](Tape& tp, VarId self) {
    const Tensor& xv = tp.nodes_[x].value;
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx.values[i] += go.values[i] * digamma(xv.values[i]);
  });
}

VarId Tape::row_sum(VarId x) {
  const Tensor& xv = nodes_[x].value;
  if (xv.rank() < 2) shape_fail("row_sum", "expected rank >= 2, got " + xv.shape_str());
  const std::size_t K = xv.shape.back();
  const std::size_t R = xv.numel() / K;
  std::vector<std::size_t> oshape(xv.shape.begin(), xv.shape.end() - 1);
  Tensor out(std::move(oshape));
  for (std::size_t r = 0; r < R; ++r) {
    double acc = 0.0;
    const double* row = &xv.values[r * K];
    for (std::size_t k = 0; k < K; ++k) acc += row[k];
    out.values[r] = acc;
  }
  return emit(std::move(out), {x}, [x, K](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t r = 0; r < go.numel(); ++r) {
      const double g = go.values[r];
      double* row = &gx.values[r * K];
      for (std::size_t k = 0; k < K; ++k) row[k] += g;
    }
  });
}

VarId Tape::gather_rows(VarId x, const std::vector<std::size_t>& rows) {
  const Tensor& xv = nodes_[x].value;
  if (xv.rank() != 2) shape_fail("gather_rows", "expected (B,F), got " + xv.shape_str());
  const std::size_t B = xv.dim(0), F = xv.dim(1);
  for (std::size_t r : rows) {
    if (r >= B) {
      shape_fail("gather_rows",
                 "row " + std::to_string(r) + " out of range for " + xv.shape_str());
    }
  }
  Tensor out({rows.size(), F});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(&xv.values[rows[i] * F], F, &out.values[i * F]);
  auto idx = std::make_shared<std::vector<std::size_t>>(rows);
  return emit(std::move(out), {x}, [x, idx, F](Tape& tp, VarId self) {
    const Tensor& go = tp.nodes_[self].grad;
    Tensor& gx = tp.grad_buf(x);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const double* grow = &go.values[i * F];
      double* gxr = &gx.values[(*idx)[i] * F];
      for (std::size_t f = 0; f < F; ++f) gxr[f] += grow[f];
    }
  });
}

VarId Tape::sum(VarId x) {
  const Tensor& xv = nodes_[x].value;
  double acc = 0.0;
  for (double v : xv.values) acc += v;
  return emit(Tensor::scalar(acc), {x}, [x](Tape& tp, VarId self) {
    const double g = tp.nodes_[self].grad.values[0];
    Tensor& gx = tp.grad_buf(x);
    for (double& v : gx.values) v += g;
  });
}

VarId Tape::mean(VarId x) {
  const Tensor& xv = nodes_[x].value;
  if (xv.numel() == 0) shape_fail("mean", "empty input");
  const double n = static_cast<double>(xv.numel());
  double acc = 0.0;
  for (double v : xv.values) acc += v;
  return emit(Tensor::scalar(acc / n), {x}, [x, n](Tape& tp, VarId self) {
    const double g = tp.nodes_[self].grad.values[0] / n;
    Tensor& gx = tp.grad_buf(x);
    for (double& v : gx.values) v += g;
  });
}

}  // namespace edd
