#include "edd/transforms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace edd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// --- helpers -----------------------------------------------------------------

// Uniform random 3-D rotation from a normalized quaternion.
std::array<double, 9> random_rotation(Rng& rng) {
  double q[4];
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : q) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

// Natural cubic spline through (xs, ys); evaluates at arbitrary points.
// Small n (a handful of warp knots), so the tridiagonal solve is direct.
struct CubicSpline {
  std::vector<double> xs, ys, m;  // m: second derivatives at the knots

  CubicSpline(std::vector<double> x, std::vector<double> y)
      : xs(std::move(x)), ys(std::move(y)), m(xs.size(), 0.0) {
    const std::size_t n = xs.size();
    if (n < 3) return;  // two knots degenerate to a straight line (m = 0)
    std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = xs[i] - xs[i - 1];
      const double h1 = xs[i + 1] - xs[i];
      a[i] = h0 / 6.0;
      b[i] = (h0 + h1) / 3.0;
      c[i] = h1 / 6.0;
      d[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
    }
    // Thomas algorithm over the interior knots; natural ends (m = 0).
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double f = a[i] / b[i - 1];
      b[i] -= f * c[i - 1];
      d[i] -= f * d[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m[i] = (d[i] - c[i] * (i + 2 < n ? m[i + 1] : 0.0)) / b[i];
      if (i == 1) break;
    }
  }

  double operator()(double x) const {
    const std::size_t n = xs.size();
    std::size_t i = 1;
    while (i + 1 < n && x > xs[i]) ++i;
    const double h = xs[i] - xs[i - 1];
    const double t0 = (xs[i] - x) / h, t1 = (x - xs[i - 1]) / h;
    return t0 * ys[i - 1] + t1 * ys[i] +
           ((t0 * t0 * t0 - t0) * m[i - 1] + (t1 * t1 * t1 - t1) * m[i]) * h * h / 6.0;
  }
};

double lerp_sample(const double* row, std::size_t T, double pos) {
  if (pos <= 0.0) return row[0];
  if (pos >= static_cast<double>(T - 1)) return row[T - 1];
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  return row[lo] * (1.0 - frac) + row[lo + 1] * frac;
}

}  // namespace

std::string_view transform_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::noising: return "noising";
    case TransformKind::scaling: return "scaling";
    case TransformKind::rotation: return "rotation";
    case TransformKind::negation: return "negation";
    case TransformKind::time_reversal: return "time_reversal";
    case TransformKind::window_permutation: return "window_permutation";
    case TransformKind::time_warping: return "time_warping";
    case TransformKind::channel_shuffling: return "channel_shuffling";
  }
  fail("transform_name: unknown kind");
}

TransformKind transform_from_index(std::size_t index) {
  if (index >= kNumTransforms) {
    fail("transform_from_index: index " + std::to_string(index) + " out of range");
  }
  return static_cast<TransformKind>(index);
}

void TransformParams::validate() const {
  if (noise_sigma <= 0.0) fail("transform params: noise sigma must be > 0");
  if (!(scale_lo < scale_hi)) fail("transform params: scale range empty");
  if (scale_lo <= 0.0) fail("transform params: scale factors must be positive");
  if (permutation_segments < 2) fail("transform params: need >= 2 segments");
  if (warp_knots < 2) fail("transform params: need >= 2 warp knots");
  if (warp_strength <= 0.0 || warp_strength >= 1.0) {
    fail("transform params: warp strength must be in (0, 1)");
  }
}

SensorWindow apply_transform(TransformKind kind, const SensorWindow& x,
                             const TransformParams& params, Rng& rng) {
  params.validate();
  if (!x.values.all_finite()) fail("apply_transform: non-finite input window");
  const std::size_t C = x.channels(), T = x.timesteps();
  SensorWindow out = x;

  switch (kind) {
    case TransformKind::noising: {
      for (double& v : out.values.values) v += params.noise_sigma * rng.normal();
      break;
    }
    case TransformKind::scaling: {
      // One global factor; a draw of exactly 1 (excluded by the task
      // definition) is redrawn, though it has probability zero.
      double s;
      do {
        s = rng.uniform(params.scale_lo, params.scale_hi);
      } while (s == 1.0);
      for (double& v : out.values.values) v *= s;
      break;
    }
    case TransformKind::rotation: {
      // The same random rotation hits every 3-axis block: a device
      // re-orientation affects accelerometer and gyroscope alike.
      // Channels beyond the last full triple pass through unchanged.
      const auto R = random_rotation(rng);
      for (std::size_t block = 0; block + 3 <= C; block += 3) {
        for (std::size_t t = 0; t < T; ++t) {
          const double a = x.values.values[(block + 0) * T + t];
          const double b = x.values.values[(block + 1) * T + t];
          const double c = x.values.values[(block + 2) * T + t];
          out.values.values[(block + 0) * T + t] = R[0] * a + R[1] * b + R[2] * c;
          out.values.values[(block + 1) * T + t] = R[3] * a + R[4] * b + R[5] * c;
          out.values.values[(block + 2) * T + t] = R[6] * a + R[7] * b + R[8] * c;
        }
      }
      break;
    }
    case TransformKind::negation: {
      for (double& v : out.values.values) v = -v;
      break;
    }
    case TransformKind::time_reversal: {
      for (std::size_t c = 0; c < C; ++c)
        std::reverse(out.values.values.begin() + static_cast<std::ptrdiff_t>(c * T),
                     out.values.values.begin() + static_cast<std::ptrdiff_t>((c + 1) * T));
      break;
    }
    case TransformKind::window_permutation: {
      // Contiguous segments (sizes differing by at most one), reordered
      // identically across channels.
      const std::size_t n = std::min(params.permutation_segments, T);
      std::vector<std::size_t> bounds(n + 1, 0);
      for (std::size_t s = 0; s <= n; ++s) bounds[s] = s * T / n;
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t pos = 0;
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t b = order[s];
          for (std::size_t t = bounds[b]; t < bounds[b + 1]; ++t)
            out.values.values[c * T + pos++] = x.values.values[c * T + t];
        }
      }
      break;
    }
    case TransformKind::time_warping: {
      // A smooth random speed curve (cubic spline through warp_knots control
      // values around 1) is integrated into a monotone time map, rescaled to
      // the original span, and the signal is linearly resampled along it.
      const std::size_t n = params.warp_knots;
      std::vector<double> kx(n), ky(n);
      for (std::size_t i = 0; i < n; ++i) {
        kx[i] = static_cast<double>(i) * static_cast<double>(T - 1) /
                static_cast<double>(n - 1);
        ky[i] = std::max(0.1, 1.0 + params.warp_strength * rng.normal());
      }
      const CubicSpline speed(std::move(kx), std::move(ky));
      std::vector<double> warped(T, 0.0);
      for (std::size_t t = 1; t < T; ++t) {
        const double v = std::max(0.05, speed(static_cast<double>(t) - 0.5));
        warped[t] = warped[t - 1] + v;
      }
      const double rescale = static_cast<double>(T - 1) / warped[T - 1];
      for (double& w : warped) w *= rescale;
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = &x.values.values[c * T];
        double* dst = &out.values.values[c * T];
        for (std::size_t t = 0; t < T; ++t) dst[t] = lerp_sample(src, T, warped[t]);
      }
      break;
    }
    case TransformKind::channel_shuffling: {
      std::vector<std::size_t> perm(C);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm);
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(&x.values.values[perm[c] * T], T, &out.values.values[c * T]);
      break;
    }
  }
  return out;
}

PretextDataset build_pretext_dataset(const UnlabeledDataset& d,
                                     const TransformParams& params,
                                     std::uint64_t seed) {
  if (d.windows.empty()) fail("build_pretext_dataset: empty unlabeled dataset");
  params.validate();
  const Rng root(seed);

  PretextDataset out;
  out.num_originals = d.windows.size();
  out.pool.reserve(d.windows.size() * (1 + kNumTransforms));
  out.pool = d.windows;
  for (std::size_t k = 0; k < kNumTransforms; ++k) {
    const TransformKind kind = transform_from_index(k);
    for (std::size_t i = 0; i < d.windows.size(); ++i) {
      Rng wrng = root.split(transform_name(kind), i);
      out.pool.push_back(apply_transform(kind, d.windows[i], params, wrng));
    }
  }
  return out;
}

}  // namespace edd
