#pragma once

// Growable plain-convolutional classifier: topology description, parameter
// storage, forward pass, complexity accounting, and width-extension.
//
// Layer l (1-based) is a KxK convolution with topo.widths[l-1] output
// channels followed by the activation; layers listed in pool_after are
// followed by a 2x2 max-pool. A single dense head maps the flattened last
// feature map to class logits.

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rng.hpp"
#include "tensor.hpp"

namespace gearlab {

struct Topology {
  std::vector<int> widths;           // output channels per conv layer
  int kernel = 3;
  std::vector<int> pool_after;       // 1-based conv layer indices
  int num_classes = 3;
  std::array<int, 3> input_shape = {3, 16, 16};  // (channels, H, W)
  Act activation = Act::relu;

  int depth() const { return static_cast<int>(widths.size()); }

  int complexity() const {
    int c = 0;
    for (int w : widths) c += w;
    return c;
  }

  void validate() const {
    if (depth() < 2) throw TensorError("topology: depth must be >= 2");
    for (int w : widths)
      if (w < 1) throw TensorError("topology: all widths must be >= 1");
    if (kernel % 2 == 0 || kernel < 1) throw TensorError("topology: kernel must be odd");
    int h = input_shape[1], w = input_shape[2];
    std::set<int> pools(pool_after.begin(), pool_after.end());
    for (int l = 1; l <= depth(); ++l) {
      if (pools.count(l)) {
        if (h % 2 != 0 || w % 2 != 0)
          throw TensorError("topology: pool after layer " + std::to_string(l) +
                            " hits an odd spatial extent");
        h /= 2;
        w /= 2;
      }
      if (h < 1 || w < 1)
        throw TensorError("topology: spatial extent collapses below 1 before the head");
    }
  }

  // spatial extent feeding the dense head
  std::array<int, 2> final_spatial() const {
    int h = input_shape[1], w = input_shape[2];
    std::set<int> pools(pool_after.begin(), pool_after.end());
    for (int l = 1; l <= depth(); ++l)
      if (pools.count(l)) {
        h /= 2;
        w /= 2;
      }
    return {h, w};
  }
};

inline void to_json(nlohmann::json& j, const Topology& t) {
  j = nlohmann::json{{"widths", t.widths},
                     {"kernel", t.kernel},
                     {"pool_after", t.pool_after},
                     {"num_classes", t.num_classes},
                     {"input_shape", t.input_shape},
                     {"activation", t.activation == Act::relu ? "relu" : "swish"}};
}

inline void from_json(const nlohmann::json& j, Topology& t) {
  j.at("widths").get_to(t.widths);
  t.kernel = j.value("kernel", t.kernel);
  if (j.contains("pool_after")) j.at("pool_after").get_to(t.pool_after);
  t.num_classes = j.value("num_classes", t.num_classes);
  if (j.contains("input_shape")) j.at("input_shape").get_to(t.input_shape);
  std::string act = j.value("activation", std::string("relu"));
  if (act == "relu")
    t.activation = Act::relu;
  else if (act == "swish")
    t.activation = Act::swish;
  else
    throw TensorError("topology: unknown activation '" + act + "'");
}

struct Network {
  Topology topo;
  std::uint64_t seed = 0;
  std::vector<TensorPtr> conv_w;  // [w_l, c_in, K, K]
  std::vector<TensorPtr> conv_b;  // [w_l]
  TensorPtr head_w;               // [D, C]
  TensorPtr head_b;               // [C]

  std::vector<TensorPtr> params() const {
    std::vector<TensorPtr> p;
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
      p.push_back(conv_w[l]);
      p.push_back(conv_b[l]);
    }
    p.push_back(head_w);
    p.push_back(head_b);
    return p;
  }

  // deep copy (parameters are otherwise shared via TensorPtr)
  Network clone() const {
    Network n;
    n.topo = topo;
    n.seed = seed;
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
      n.conv_w.push_back(make_tensor(conv_w[l]->shape, conv_w[l]->data, true));
      n.conv_b.push_back(make_tensor(conv_b[l]->shape, conv_b[l]->data, true));
    }
    n.head_w = make_tensor(head_w->shape, head_w->data, true);
    n.head_b = make_tensor(head_b->shape, head_b->data, true);
    return n;
  }

  void zero_grad() const {
    for (auto& p : params()) p->zero_grad();
  }
};

inline Network build(const Topology& topo, std::uint64_t seed) {
  topo.validate();
  Network net;
  net.topo = topo;
  net.seed = seed;
  int c_in = topo.input_shape[0];
  const int K = topo.kernel;
  for (int l = 0; l < topo.depth(); ++l) {
    int f = topo.widths[l];
    Rng rng = substream(seed, "init", static_cast<std::uint64_t>(l));
    auto w = make_tensor({f, c_in, K, K}, true);
    double std_dev = std::sqrt(2.0 / (static_cast<double>(c_in) * K * K));
    for (auto& v : w->data) v = std_dev * rng.normal();
    net.conv_w.push_back(w);
    net.conv_b.push_back(make_tensor({f}, true));
    c_in = f;
  }
  auto sp = topo.final_spatial();
  int d = topo.widths.back() * sp[0] * sp[1];
  Rng rng = substream(seed, "init", static_cast<std::uint64_t>(topo.depth()));
  net.head_w = make_tensor({d, topo.num_classes}, true);
  double std_dev = std::sqrt(2.0 / d);
  for (auto& v : net.head_w->data) v = std_dev * rng.normal();
  net.head_b = make_tensor({topo.num_classes}, true);
  return net;
}

// logits [N, C]; pass tape = nullptr for inference
inline TensorPtr forward(Tape* tape, const Network& net, const TensorPtr& x) {
  std::set<int> pools(net.topo.pool_after.begin(), net.topo.pool_after.end());
  TensorPtr h = x;
  for (int l = 0; l < net.topo.depth(); ++l) {
    h = conv2d(tape, h, net.conv_w[l], net.conv_b[l]);
    h = activation(tape, h, net.topo.activation);
    if (pools.count(l + 1)) h = pool2x2(tape, h, Pool::max);
  }
  h = flatten(tape, h);
  return dense(tape, h, net.head_w, net.head_b);
}

inline int complexity(const Network& net) { return net.topo.complexity(); }

inline std::int64_t param_count(const Network& net) {
  std::int64_t n = 0;
  for (auto& p : net.params()) n += p->size();
  return n;
}

// Reference "full model" the Size(%) figures are reported against.
inline Topology reference_full_topology(const Topology& like) {
  Topology t = like;
  t.widths = {128, 128, 256, 256, 512, 512};
  t.pool_after = {2, 4, 6};
  return t;
}

inline std::int64_t reference_param_count(const Topology& like) {
  Topology full = reference_full_topology(like);
  std::int64_t n = 0;
  int c_in = full.input_shape[0];
  const int K = full.kernel;
  for (int w : full.widths) {
    n += static_cast<std::int64_t>(w) * c_in * K * K + w;
    c_in = w;
  }
  auto sp = full.final_spatial();
  n += static_cast<std::int64_t>(full.widths.back()) * sp[0] * sp[1] * full.num_classes +
       full.num_classes;
  return n;
}

// headline size fraction: parameter count over the reference full model's
inline double size_fraction(const Network& net) {
  return static_cast<double>(param_count(net)) /
         static_cast<double>(reference_param_count(net.topo));
}

// width-sum variant, reported alongside
inline double width_fraction(const Network& net) {
  Topology full = reference_full_topology(net.topo);
  return static_cast<double>(complexity(net)) /
         static_cast<double>(full.complexity());
}

// Closed-form per-sample forward FLOPs: 2x MAC count over conv and dense
// layers (bias and activation excluded).
inline double forward_flops(const Topology& topo) {
  double flops = 0.0;
  int c_in = topo.input_shape[0];
  int h = topo.input_shape[1], w = topo.input_shape[2];
  std::set<int> pools(topo.pool_after.begin(), topo.pool_after.end());
  const int K = topo.kernel;
  for (int l = 0; l < topo.depth(); ++l) {
    flops += 2.0 * c_in * topo.widths[l] * K * K * h * w;
    c_in = topo.widths[l];
    if (pools.count(l + 1)) {
      h /= 2;
      w /= 2;
    }
  }
  flops += 2.0 * static_cast<double>(c_in) * h * w * topo.num_classes;
  return flops;
}

// Monotone efficiency counters recorded over a run; wall-clock and energy
// have no desk-scale analogue, so steps / sample-passes / FLOPs stand in.
// Only training work is counted (evaluation passes are excluded).
struct Counters {
  long long steps = 0;            // optimizer steps
  long long forward_passes = 0;   // forward sample-passes
  double flops = 0.0;             // estimated training FLOPs
};

inline void to_json(nlohmann::json& j, const Counters& c) {
  j = nlohmann::json{{"steps", c.steps}, {"forward_passes", c.forward_passes}, {"flops", c.flops}};
}

inline void from_json(const nlohmann::json& j, Counters& c) {
  j.at("steps").get_to(c.steps);
  j.at("forward_passes").get_to(c.forward_passes);
  j.at("flops").get_to(c.flops);
}

// One appended output channel: incoming weights, bias, and the slice of the
// next layer's (or head's) weights that reads the new channel.
struct NeuronInit {
  std::vector<double> in_w;   // [c_in * K * K]
  double bias = 0.0;
  std::vector<double> out_w;  // next conv: [w_next * K * K]; head: [h*w * C]
};

// Appends |additions| channels to conv layer `layer` (1-based) and extends
// the next layer's input axis to match. Pre-existing values are preserved
// bitwise; only new slices are written.
inline Network widen(const Network& net, int layer,
                     const std::vector<NeuronInit>& additions) {
  const int L = net.topo.depth();
  if (layer < 1 || layer > L)
    throw TensorError("widen: layer " + std::to_string(layer) + " out of range [1," +
                      std::to_string(L) + "]");
  if (additions.empty()) return net.clone();
  const int li = layer - 1;
  const int K = net.topo.kernel;
  const int c_in = net.conv_w[li]->shape[1];
  const int w_old = net.topo.widths[li];
  const int n_add = static_cast<int>(additions.size());
  const bool last = (layer == L);
  auto sp = net.topo.final_spatial();
  const int spatial = sp[0] * sp[1];
  const int out_slice = last ? spatial * net.topo.num_classes
                             : net.topo.widths[li + 1] * K * K;
  for (const auto& a : additions) {
    if (static_cast<int>(a.in_w.size()) != c_in * K * K)
      throw TensorError("widen: incoming slice has " + std::to_string(a.in_w.size()) +
                        " values, expected " + std::to_string(c_in * K * K));
    if (static_cast<int>(a.out_w.size()) != out_slice)
      throw TensorError("widen: outgoing slice has " + std::to_string(a.out_w.size()) +
                        " values, expected " + std::to_string(out_slice));
  }

  Network out = net.clone();
  out.topo.widths[li] = w_old + n_add;

  // grow this layer's weight/bias
  auto& w = out.conv_w[li];
  w->shape[0] = w_old + n_add;
  for (const auto& a : additions)
    w->data.insert(w->data.end(), a.in_w.begin(), a.in_w.end());
  w->ensure_grad();
  auto& b = out.conv_b[li];
  b->shape[0] = w_old + n_add;
  for (const auto& a : additions) b->data.push_back(a.bias);
  b->ensure_grad();

  if (last) {
    // head input is the channel-major flatten, so new channels append
    // contiguous row blocks at the end
    auto& hw = out.head_w;
    const int C = net.topo.num_classes;
    hw->shape[0] += n_add * spatial;
    for (const auto& a : additions)
      hw->data.insert(hw->data.end(), a.out_w.begin(), a.out_w.end());
    hw->ensure_grad();
  } else {
    // next conv gains input channels; rebuild its weight with the new slices
    auto& nw = out.conv_w[li + 1];
    const int f_next = nw->shape[0];
    const int c_next_old = nw->shape[1];
    const int c_next_new = c_next_old + n_add;
    std::vector<double> nd(static_cast<std::size_t>(f_next) * c_next_new * K * K);
    for (int f = 0; f < f_next; ++f) {
      const double* src = nw->data.data() + static_cast<std::int64_t>(f) * c_next_old * K * K;
      double* dst = nd.data() + static_cast<std::int64_t>(f) * c_next_new * K * K;
      std::copy(src, src + static_cast<std::int64_t>(c_next_old) * K * K, dst);
      for (int a = 0; a < n_add; ++a)
        std::copy(additions[a].out_w.begin() + static_cast<std::int64_t>(f) * K * K,
                  additions[a].out_w.begin() + static_cast<std::int64_t>(f + 1) * K * K,
                  dst + (static_cast<std::int64_t>(c_next_old) + a) * K * K);
    }
    nw->shape[1] = c_next_new;
    nw->data = std::move(nd);
    nw->ensure_grad();
  }
  return out;
}

// --- checkpoint: one-line JSON header + raw little-endian float64 blocks ---

inline void save_checkpoint(const Network& net, const std::string& path,
                            const nlohmann::json& counters = nlohmann::json::object()) {
  nlohmann::json hdr;
  hdr["format"] = "gearlab-checkpoint-v1";
  hdr["topology"] = net.topo;
  hdr["seed"] = net.seed;
  hdr["counters"] = counters;
  std::vector<std::int64_t> lens;
  for (auto& p : net.params()) lens.push_back(p->size() * 8);
  hdr["block_bytes"] = lens;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("checkpoint: cannot open '" + path + "' for writing");
  f << hdr.dump() << "\n";
  for (auto& p : net.params())
    f.write(reinterpret_cast<const char*>(p->data.data()),
            static_cast<std::streamsize>(p->data.size() * 8));
}

inline Network load_checkpoint(const std::string& path,
                               nlohmann::json* counters = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("checkpoint: cannot open '" + path + "'");
  std::string line;
  std::getline(f, line);
  nlohmann::json hdr = nlohmann::json::parse(line);
  if (hdr.value("format", "") != "gearlab-checkpoint-v1")
    throw TensorError("checkpoint: bad header in '" + path + "'");
  Topology topo = hdr.at("topology").get<Topology>();
  Network net = build(topo, hdr.at("seed").get<std::uint64_t>());
  auto lens = hdr.at("block_bytes").get<std::vector<std::int64_t>>();
  auto params = net.params();
  if (lens.size() != params.size())
    throw TensorError("checkpoint: block count mismatch in '" + path + "'");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (lens[i] != params[i]->size() * 8)
      throw TensorError("checkpoint: block " + std::to_string(i) + " length mismatch");
    f.read(reinterpret_cast<char*>(params[i]->data.data()),
           static_cast<std::streamsize>(lens[i]));
    if (!f) throw TensorError("checkpoint: truncated file '" + path + "'");
  }
  if (counters) *counters = hdr.at("counters");
  return net;
}

}  // namespace gearlab
