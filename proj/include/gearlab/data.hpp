#pragma once

// Dataset generation, ingestion, and persistence. Pixels are CHW float64 in
// [0,1] in memory; containers store float32 pixel blocks with an FNV-64
// digest so cached corrupted test sets can be verified on reload.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rng.hpp"
#include "tensor.hpp"

namespace gearlab {

struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<double> pix;  // channel-major

  Image() = default;
  Image(int c_, int h_, int w_) : c(c_), h(h_), w(w_), pix(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

  double& at(int ch, int y, int x) { return pix[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return pix[(static_cast<std::size_t>(ch) * h + y) * w + x]; }

  void clamp01() {
    for (auto& v : pix) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
};

struct Dataset {
  int n = 0, c = 0, h = 0, w = 0;
  int num_classes = 0;
  std::vector<double> images;  // [n, c, h, w]
  std::vector<int> labels;
  std::string split;
  std::string provenance;

  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  Image get(int i) const {
    Image img(c, h, w);
    std::copy(images.begin() + static_cast<std::ptrdiff_t>(i * sample_size()),
              images.begin() + static_cast<std::ptrdiff_t>((i + 1) * sample_size()),
              img.pix.begin());
    return img;
  }

  void set(int i, const Image& img) {
    std::copy(img.pix.begin(), img.pix.end(),
              images.begin() + static_cast<std::ptrdiff_t>(i * sample_size()));
  }

  // batch tensor [B,C,H,W] from sample indices
  TensorPtr batch(const std::vector<int>& idx) const {
    auto t = make_tensor({static_cast<int>(idx.size()), c, h, w});
    for (std::size_t b = 0; b < idx.size(); ++b)
      std::copy(images.begin() + static_cast<std::ptrdiff_t>(idx[b] * sample_size()),
                images.begin() + static_cast<std::ptrdiff_t>((idx[b] + 1) * sample_size()),
                t->data.begin() + static_cast<std::ptrdiff_t>(b * sample_size()));
    return t;
  }

  std::vector<int> batch_labels(const std::vector<int>& idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) out[b] = labels[idx[b]];
    return out;
  }
};

namespace detail {

struct ShapeSpec {
  int cls;                 // 0 disk, 1 triangle, 2 bar
  double cx, cy, r, theta;
  double col[3];
};

inline bool inside_shape(const ShapeSpec& s, double x, double y) {
  double dx = x - s.cx, dy = y - s.cy;
  double ct = std::cos(s.theta), st = std::sin(s.theta);
  double u = ct * dx + st * dy, v = -st * dx + ct * dy;
  switch (s.cls) {
    case 0:  // disk
      return dx * dx + dy * dy <= s.r * s.r;
    case 1: {  // equilateral triangle, circumradius r
      // half-plane tests against the three edges
      for (int k = 0; k < 3; ++k) {
        double a = s.theta + 2.0 * M_PI * k / 3.0 + M_PI / 2.0;
        double nx = std::cos(a), ny = std::sin(a);
        if (nx * dx + ny * dy > 0.5 * s.r) return false;
      }
      return true;
    }
    default:  // bar: long thin rectangle
      return std::abs(u) <= 1.3 * s.r && std::abs(v) <= 0.35 * s.r;
  }
}

inline void render_shape_sample(Image& img, int cls, Rng& rng) {
  const int h = img.h, w = img.w;
  // textured background: muted base color plus two low-frequency waves
  double base[3];
  for (auto& b : base) b = rng.uniform(0.15, 0.55);
  double fx1 = rng.uniform(0.5, 1.5), fy1 = rng.uniform(0.5, 1.5), ph1 = rng.uniform(0, 2 * M_PI);
  double fx2 = rng.uniform(1.0, 2.5), fy2 = rng.uniform(1.0, 2.5), ph2 = rng.uniform(0, 2 * M_PI);
  double amp1 = rng.uniform(0.03, 0.10), amp2 = rng.uniform(0.02, 0.06);

  ShapeSpec s;
  s.cls = cls;
  s.r = rng.uniform(0.26, 0.40) * std::min(h, w);
  s.cx = rng.uniform(s.r * 0.9, w - s.r * 0.9);
  s.cy = rng.uniform(s.r * 0.9, h - s.r * 0.9);
  s.theta = rng.uniform(0.0, 2.0 * M_PI);
  // bright saturated foreground, well separated from the muted background
  int hot = static_cast<int>(rng.uniform_int(3));
  for (int k = 0; k < 3; ++k)
    s.col[k] = (k == hot) ? rng.uniform(0.75, 1.0) : rng.uniform(0.0, 0.30);

  const int SS = 3;  // subsamples per axis for anti-aliasing
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double tex = amp1 * std::cos(fx1 * x + ph1) * std::cos(fy1 * y) +
                   amp2 * std::cos(fx2 * x + fy2 * y + ph2);
      int hits = 0;
      for (int sy = 0; sy < SS; ++sy)
        for (int sx = 0; sx < SS; ++sx)
          if (inside_shape(s, x + (sx + 0.5) / SS, y + (sy + 0.5) / SS)) ++hits;
      double cov = static_cast<double>(hits) / (SS * SS);
      for (int ch = 0; ch < 3; ++ch) {
        double bg = base[ch] + tex + 0.02 * (rng.uniform() - 0.5);
        img.at(ch, y, x) = (1.0 - cov) * bg + cov * s.col[ch];
      }
    }
  }
  img.clamp01();
}

inline std::uint64_t fnv64(const void* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

// Procedural shapes dataset: anti-aliased colored disks / triangles / bars
// on textured backgrounds. Deterministic in seed; labels are exactly
// class-balanced when n is divisible by the class count.
inline std::pair<Dataset, Dataset> gen_shapes(std::uint64_t seed, int n_train, int n_test,
                                              int classes = 3, int size = 16) {
  if (size != 8 && size != 16 && size != 32)
    throw TensorError("gen_shapes: size must be one of {8,16,32}");
  if (classes < 2 || classes > 3)
    throw TensorError("gen_shapes: classes must be 2 or 3 (degenerate task otherwise)");
  if (n_train < classes || n_test < classes)
    throw TensorError("gen_shapes: too few samples for class balance");

  auto gen_split = [&](const std::string& split, int n) {
    Dataset ds;
    ds.n = n;
    ds.c = 3;
    ds.h = ds.w = size;
    ds.num_classes = classes;
    ds.split = split;
    ds.provenance = "shapes(seed=" + std::to_string(seed) + ")";
    ds.images.resize(static_cast<std::size_t>(n) * ds.sample_size());
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      int cls = i % classes;
      Rng rng = substream(seed, "shapes-" + split, static_cast<std::uint64_t>(i));
      Image img(3, size, size);
      detail::render_shape_sample(img, cls, rng);
      // quantize to float32 so in-memory data matches a container round-trip
      for (auto& v : img.pix) v = static_cast<double>(static_cast<float>(v));
      ds.labels[i] = cls;
      ds.set(i, img);
    }
    return ds;
  };
  return {gen_split("train", n_train), gen_split("test", n_test)};
}

// Standard CIFAR-10 binary format: records of 1 label byte + 3072 pixel
// bytes (full R plane, then G, then B; 32x32 row-major), scaled to [0,1].
inline Dataset read_cifar_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw TensorError("read_cifar_binary: cannot open '" + path + "'");
  std::int64_t len = f.tellg();
  f.seekg(0);
  const std::int64_t rec = 3073;
  if (len % rec != 0)
    throw TensorError("read_cifar_binary: file length " + std::to_string(len) +
                      " is not a multiple of 3073 (truncated file?)");
  Dataset ds;
  ds.n = static_cast<int>(len / rec);
  ds.c = 3;
  ds.h = ds.w = 32;
  ds.num_classes = 10;
  ds.split = "cifar";
  ds.images.resize(static_cast<std::size_t>(ds.n) * ds.sample_size());
  ds.labels.resize(ds.n);
  std::vector<unsigned char> buf(rec);
  for (int i = 0; i < ds.n; ++i) {
    f.read(reinterpret_cast<char*>(buf.data()), rec);
    if (!f) throw TensorError("read_cifar_binary: short read in '" + path + "'");
    if (buf[0] > 9)
      throw TensorError("read_cifar_binary: label byte " + std::to_string(buf[0]) +
                        " > 9 in record " + std::to_string(i));
    ds.labels[i] = buf[0];
    for (int k = 0; k < 3072; ++k)
      ds.images[i * ds.sample_size() + k] = buf[1 + k] / 255.0;
  }
  ds.provenance = "cifar10(" + path + ", digest=" +
                  detail::hex64(detail::fnv64(ds.images.data(), ds.images.size() * 8)) + ")";
  return ds;
}

// --- container: one-line JSON header + float32 pixels + int32 labels ---

inline void write_container(const Dataset& ds, const std::string& path) {
  std::vector<float> pix(ds.images.size());
  for (std::size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<float>(ds.images[i]);
  std::vector<std::int32_t> lab(ds.labels.begin(), ds.labels.end());
  std::uint64_t digest = detail::fnv64(pix.data(), pix.size() * 4);
  digest = detail::fnv64(lab.data(), lab.size() * 4, digest);

  nlohmann::json hdr;
  hdr["format"] = "gearlab-dataset-v1";
  hdr["shape"] = {ds.n, ds.c, ds.h, ds.w};
  hdr["classes"] = ds.num_classes;
  hdr["split"] = ds.split;
  hdr["provenance"] = ds.provenance;
  hdr["pixel_bytes"] = pix.size() * 4;
  hdr["label_bytes"] = lab.size() * 4;
  hdr["digest"] = detail::hex64(digest);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("write_container: cannot open '" + path + "' for writing");
  f << hdr.dump() << "\n";
  f.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size() * 4));
  f.write(reinterpret_cast<const char*>(lab.data()), static_cast<std::streamsize>(lab.size() * 4));
}

inline Dataset read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("read_container: cannot open '" + path + "'");
  std::string line;
  std::getline(f, line);
  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw TensorError("read_container: malformed header in '" + path + "': " + e.what());
  }
  if (hdr.value("format", "") != "gearlab-dataset-v1")
    throw TensorError("read_container: '" + path + "' is not a gearlab dataset");
  auto shape = hdr.at("shape").get<std::vector<int>>();
  Dataset ds;
  ds.n = shape[0];
  ds.c = shape[1];
  ds.h = shape[2];
  ds.w = shape[3];
  ds.num_classes = hdr.at("classes").get<int>();
  ds.split = hdr.value("split", "");
  ds.provenance = hdr.value("provenance", "");
  std::vector<float> pix(static_cast<std::size_t>(ds.n) * ds.sample_size());
  std::vector<std::int32_t> lab(ds.n);
  if (hdr.at("pixel_bytes").get<std::uint64_t>() != pix.size() * 4 ||
      hdr.at("label_bytes").get<std::uint64_t>() != lab.size() * 4)
    throw TensorError("read_container: block lengths inconsistent with shape in '" + path + "'");
  f.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size() * 4));
  f.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size() * 4));
  if (!f) throw TensorError("read_container: truncated blocks in '" + path + "'");
  std::uint64_t digest = detail::fnv64(pix.data(), pix.size() * 4);
  digest = detail::fnv64(lab.data(), lab.size() * 4, digest);
  if (detail::hex64(digest) != hdr.at("digest").get<std::string>())
    throw TensorError("read_container: digest mismatch in '" + path + "'");
  ds.images.assign(pix.begin(), pix.end());
  ds.labels.assign(lab.begin(), lab.end());
  return ds;
}

inline std::string dataset_digest(const Dataset& ds) {
  std::vector<float> pix(ds.images.size());
  for (std::size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<float>(ds.images[i]);
  std::uint64_t d = detail::fnv64(pix.data(), pix.size() * 4);
  std::vector<std::int32_t> lab(ds.labels.begin(), ds.labels.end());
  d = detail::fnv64(lab.data(), lab.size() * 4, d);
  return detail::hex64(d);
}

}  // namespace gearlab
