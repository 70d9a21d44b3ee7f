#pragma once

// Diagnostics: per-layer width statistics across seeds, Fourier spectra of
// image perturbations, and 1-D filter-normalized loss slices.

#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "data.hpp"
#include "nn.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace gearlab {

namespace detail {

// in-place radix-2 FFT; n must be a power of two
inline void fft(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw TensorError("fft: length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

inline void fft2(std::vector<std::complex<double>>& grid, int n) {
  std::vector<std::complex<double>> line(n);
  for (int r = 0; r < n; ++r) {
    std::copy(grid.begin() + static_cast<std::ptrdiff_t>(r) * n,
              grid.begin() + static_cast<std::ptrdiff_t>(r + 1) * n, line.begin());
    fft(line);
    std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::ptrdiff_t>(r) * n);
  }
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) line[r] = grid[static_cast<std::size_t>(r) * n + c];
    fft(line);
    for (int r = 0; r < n; ++r) grid[static_cast<std::size_t>(r) * n + c] = line[r];
  }
}

inline double luminance(const Image& im, int y, int x) {
  if (im.c == 1) return im.at(0, y, x);
  return 0.299 * im.at(0, y, x) + 0.587 * im.at(1, y, x) + 0.114 * im.at(2, y, x);
}

}  // namespace detail

struct SpectrumProfile {
  int n = 0;
  std::vector<double> magnitude;  // n*n grid, DC centered
  std::vector<double> radial;     // mean magnitude per integer radius bin
  double low_freq_fraction = 0.0; // energy within radius < n/4 over total
  double spatial_energy = 0.0;    // mean sum of squared pixel deltas
  double spectral_energy = 0.0;   // mean (1/n^2) sum |F|^2, equal by Parseval
};

// Mean magnitude spectrum of (modified - clean) on the luminance channel.
inline SpectrumProfile delta_spectrum(const std::vector<Image>& clean,
                                      const std::vector<Image>& modified) {
  if (clean.size() != modified.size() || clean.empty())
    throw TensorError("delta_spectrum: need equal nonempty image lists");
  const int n = clean[0].h;
  if (clean[0].w != n || (n != 16 && n != 32))
    throw TensorError("delta_spectrum: images must be square, 16x16 or 32x32");

  SpectrumProfile prof;
  prof.n = n;
  prof.magnitude.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> energy(static_cast<std::size_t>(n) * n, 0.0);

  std::vector<std::complex<double>> grid(static_cast<std::size_t>(n) * n);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto& a = clean[i];
    const auto& b = modified[i];
    if (a.h != n || a.w != n || b.h != n || b.w != n)
      throw TensorError("delta_spectrum: image shape mismatch");
    double sp = 0.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double d = detail::luminance(b, y, x) - detail::luminance(a, y, x);
        grid[static_cast<std::size_t>(y) * n + x] = d;
        sp += d * d;
      }
    prof.spatial_energy += sp;
    detail::fft2(grid, n);
    // DC-centered store
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const std::size_t src = static_cast<std::size_t>(y) * n + x;
        const std::size_t dst =
            static_cast<std::size_t>((y + n / 2) % n) * n + (x + n / 2) % n;
        const double m = std::abs(grid[src]);
        prof.magnitude[dst] += m;
        energy[dst] += m * m;
      }
  }
  const double inv = 1.0 / static_cast<double>(clean.size());
  for (auto& v : prof.magnitude) v *= inv;
  for (auto& v : energy) v *= inv;
  prof.spatial_energy *= inv;
  double total = 0.0, low = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double e = energy[static_cast<std::size_t>(y) * n + x];
      total += e;
      const double dy = y - n / 2, dx = x - n / 2;
      if (std::sqrt(dy * dy + dx * dx) < n / 4.0) low += e;
    }
  prof.spectral_energy = total / (static_cast<double>(n) * n);
  prof.low_freq_fraction = total > 0.0 ? low / total : 0.0;

  const int n_bins = n / 2 + 1;
  prof.radial.assign(n_bins, 0.0);
  std::vector<int> counts(n_bins, 0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dy = y - n / 2, dx = x - n / 2;
      const int r = static_cast<int>(std::lround(std::sqrt(dy * dy + dx * dx)));
      if (r < n_bins) {
        prof.radial[r] += prof.magnitude[static_cast<std::size_t>(y) * n + x];
        counts[r] += 1;
      }
    }
  for (int r = 0; r < n_bins; ++r)
    if (counts[r]) prof.radial[r] /= counts[r];
  return prof;
}

struct TopologyReport {
  std::vector<double> mean;  // per layer
  std::vector<double> stddev;
};

inline TopologyReport topology_report(const std::vector<Topology>& topos) {
  if (topos.empty()) throw TensorError("topology_report: no records");
  const std::size_t L = topos[0].widths.size();
  for (const auto& t : topos)
    if (t.widths.size() != L) throw TensorError("topology_report: mismatched depths");
  TopologyReport rep;
  rep.mean.assign(L, 0.0);
  rep.stddev.assign(L, 0.0);
  for (const auto& t : topos)
    for (std::size_t l = 0; l < L; ++l) rep.mean[l] += t.widths[l];
  for (auto& m : rep.mean) m /= static_cast<double>(topos.size());
  for (const auto& t : topos)
    for (std::size_t l = 0; l < L; ++l) {
      const double d = t.widths[l] - rep.mean[l];
      rep.stddev[l] += d * d;
    }
  for (auto& s : rep.stddev) s = std::sqrt(s / static_cast<double>(topos.size()));
  return rep;
}

inline std::string topology_report_csv(const TopologyReport& rep) {
  std::string out = "layer,mean_width,std_width\n";
  char buf[128];
  for (std::size_t l = 0; l < rep.mean.size(); ++l) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", l + 1, rep.mean[l], rep.stddev[l]);
    out += buf;
  }
  return out;
}

inline std::string topology_report_svg(const TopologyReport& rep) {
  const int L = static_cast<int>(rep.mean.size());
  const int bar_w = 40, gap = 15, h = 220, pad = 30;
  double max_w = 1.0;
  for (int l = 0; l < L; ++l) max_w = std::max(max_w, rep.mean[l] + rep.stddev[l]);
  const int width = pad * 2 + L * (bar_w + gap);
  char buf[512];
  std::string svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\">\n",
                width, h + 2 * pad);
  svg += buf;
  for (int l = 0; l < L; ++l) {
    const int x = pad + l * (bar_w + gap);
    const double bh = rep.mean[l] / max_w * h;
    const double eh = rep.stddev[l] / max_w * h;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%.1f\" width=\"%d\" height=\"%.1f\" fill=\"#4878a8\"/>\n",
                  x, pad + h - bh, bar_w, bh);
    svg += buf;
    if (eh > 0.0) {
      std::snprintf(buf, sizeof(buf),
                    "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#222\"/>\n",
                    x + bar_w / 2, pad + h - bh - eh, x + bar_w / 2, pad + h - bh + eh);
      svg += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-size=\"12\" text-anchor=\"middle\">%d</text>\n",
                  x + bar_w / 2, pad + h + 15, l + 1);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

struct LossSlice {
  std::vector<double> alpha;
  std::vector<double> loss;
};

namespace detail {

// random direction with each conv filter / head column rescaled to the norm
// of the corresponding network filter
inline std::vector<std::vector<double>> filter_normalized_direction(const Network& net,
                                                                    Rng& rng) {
  std::vector<std::vector<double>> dir;
  auto params = const_cast<Network&>(net).params();
  for (const auto& p : params) {
    std::vector<double> d(p->data.size());
    for (auto& v : d) v = rng.normal();
    dir.push_back(std::move(d));
  }
  auto normalize_rows = [](std::vector<double>& d, const std::vector<double>& w,
                           std::size_t row_len) {
    for (std::size_t r = 0; r * row_len < d.size(); ++r) {
      double dn = 0.0, wn = 0.0;
      for (std::size_t k = 0; k < row_len; ++k) {
        dn += d[r * row_len + k] * d[r * row_len + k];
        wn += w[r * row_len + k] * w[r * row_len + k];
      }
      dn = std::sqrt(dn);
      wn = std::sqrt(wn);
      const double scale = dn > 0.0 ? wn / dn : 0.0;
      for (std::size_t k = 0; k < row_len; ++k) d[r * row_len + k] *= scale;
    }
  };
  std::size_t pi = 0;
  for (std::size_t li = 0; li < net.conv_w.size(); ++li) {
    const auto& w = net.conv_w[li];
    const std::size_t row = w->data.size() / static_cast<std::size_t>(w->shape[0]);
    normalize_rows(dir[pi], w->data, row);
    ++pi;
    normalize_rows(dir[pi], net.conv_b[li]->data, net.conv_b[li]->data.size());
    ++pi;
  }
  // head: one filter per class column; treat each column as a filter
  {
    const int D = net.head_w->shape[0], C = net.head_w->shape[1];
    auto& d = dir[pi];
    const auto& w = net.head_w->data;
    for (int c = 0; c < C; ++c) {
      double dn = 0.0, wn = 0.0;
      for (int r = 0; r < D; ++r) {
        dn += d[static_cast<std::size_t>(r) * C + c] * d[static_cast<std::size_t>(r) * C + c];
        wn += w[static_cast<std::size_t>(r) * C + c] * w[static_cast<std::size_t>(r) * C + c];
      }
      dn = std::sqrt(dn);
      wn = std::sqrt(wn);
      const double scale = dn > 0.0 ? wn / dn : 0.0;
      for (int r = 0; r < D; ++r) d[static_cast<std::size_t>(r) * C + c] *= scale;
    }
    ++pi;
    normalize_rows(dir[pi], net.head_b->data, net.head_b->data.size());
  }
  return dir;
}

}  // namespace detail

// Cross-entropy along net + alpha*d for a filter-normalized random direction.
inline LossSlice loss_slice(const Network& net, const Dataset& data, int n_points,
                            std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  if (n_points < 2) throw TensorError("loss_slice: need at least 2 points");
  Rng rng = substream(seed, "loss-slice");
  auto dir = detail::filter_normalized_direction(net, rng);

  LossSlice slice;
  Network probe = net.clone();
  auto base = const_cast<Network&>(net).params();
  auto live = probe.params();
  std::vector<int> idx(data.n);
  for (int i = 0; i < data.n; ++i) idx[i] = i;
  auto labels = data.batch_labels(idx);
  for (int p = 0; p < n_points; ++p) {
    const double a = lo + (hi - lo) * p / (n_points - 1);
    for (std::size_t i = 0; i < live.size(); ++i)
      for (std::size_t k = 0; k < live[i]->data.size(); ++k)
        live[i]->data[k] = base[i]->data[k] + a * dir[i][k];
    double loss_sum = 0.0;
    const int bs = 256;
    for (int start = 0; start < data.n; start += bs) {
      const int end = std::min(start + bs, data.n);
      std::vector<int> bi(idx.begin() + start, idx.begin() + end);
      std::vector<int> bl(labels.begin() + start, labels.begin() + end);
      auto loss = softmax_cross_entropy(nullptr, forward(nullptr, probe, data.batch(bi)), bl);
      loss_sum += loss->data[0] * static_cast<double>(bi.size());
    }
    slice.alpha.push_back(a);
    slice.loss.push_back(loss_sum / data.n);
  }
  return slice;
}

inline std::string loss_slice_csv(const LossSlice& s) {
  std::string out = "alpha,loss\n";
  char buf[128];
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", s.alpha[i], s.loss[i]);
    out += buf;
  }
  return out;
}

inline std::string spectrum_csv(const SpectrumProfile& p) {
  std::string out = "radius,mean_magnitude\n";
  char buf[128];
  for (std::size_t r = 0; r < p.radial.size(); ++r) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", r, p.radial[r]);
    out += buf;
  }
  return out;
}

// plain-text PGM, magnitudes scaled to 0..255
inline std::string spectrum_pgm(const SpectrumProfile& p) {
  double mx = 0.0;
  for (double v : p.magnitude) mx = std::max(mx, v);
  std::string out = "P2\n" + std::to_string(p.n) + " " + std::to_string(p.n) + "\n255\n";
  for (int y = 0; y < p.n; ++y) {
    for (int x = 0; x < p.n; ++x) {
      const double v = p.magnitude[static_cast<std::size_t>(y) * p.n + x];
      const int g = mx > 0.0 ? static_cast<int>(std::lround(v / mx * 255.0)) : 0;
      out += std::to_string(g);
      out += (x + 1 == p.n) ? '\n' : ' ';
    }
  }
  return out;
}

}  // namespace gearlab
