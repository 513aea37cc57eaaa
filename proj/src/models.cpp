#include "edd/models.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace edd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

Tensor init_weight(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor w(std::move(shape));
  const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.values) v = stddev * rng.truncated_normal(2.0);
  return w;
}

}  // namespace

std::size_t ArchitectureConfig::receptive_field() const {
  std::size_t rf = 1;
  for (std::size_t k : kernel_widths) rf += k - 1;
  return rf;
}

std::vector<std::pair<std::string, Tensor*>> ModelParameters::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".weight", &conv[i].weight);
    out.emplace_back("conv" + std::to_string(i) + ".bias", &conv[i].bias);
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string p = "head" + std::to_string(h);
    out.emplace_back(p + ".hidden.weight", &heads[h].hidden.weight);
    out.emplace_back(p + ".hidden.bias", &heads[h].hidden.bias);
    out.emplace_back(p + ".out.weight", &heads[h].out.weight);
    out.emplace_back(p + ".out.bias", &heads[h].out.bias);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParameters::named_parameters()
    const {
  auto mut = const_cast<ModelParameters*>(this)->named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(name, t);
  return out;
}

std::vector<std::string> ModelParameters::frozen_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    if (conv[i].frozen) {
      out.push_back("conv" + std::to_string(i) + ".weight");
      out.push_back("conv" + std::to_string(i) + ".bias");
    }
  }
  return out;
}

ModelParameters build_base(const ArchitectureConfig& arch, double width_multiplier,
                           Rng& rng) {
  if (arch.base_filters.size() != arch.kernel_widths.size() ||
      arch.base_filters.empty()) {
    fail("build_base: filters/kernels size mismatch");
  }
  if (width_multiplier <= 0.0) fail("build_base: width multiplier must be positive");
  if (arch.input_length < arch.receptive_field()) {
    fail("build_base: input length " + std::to_string(arch.input_length) +
         " shorter than receptive field " + std::to_string(arch.receptive_field()));
  }
  ModelParameters m;
  m.arch = arch;
  m.width_multiplier = width_multiplier;
  std::size_t in_ch = arch.input_channels;
  for (std::size_t i = 0; i < arch.base_filters.size(); ++i) {
    const std::size_t filters = static_cast<std::size_t>(
        std::ceil(width_multiplier * static_cast<double>(arch.base_filters[i])));
    const std::size_t k = arch.kernel_widths[i];
    Layer layer;
    layer.kind = Layer::Kind::conv;
    layer.name = "conv" + std::to_string(i);
    layer.weight = init_weight({filters, in_ch, k}, in_ch * k, rng);
    layer.bias = Tensor({filters});
    m.conv.push_back(std::move(layer));
    in_ch = filters;
  }
  return m;
}

void add_head(ModelParameters& m, std::size_t outputs, Rng& rng) {
  if (m.conv.empty()) fail("add_head: model has no base");
  if (outputs == 0) fail("add_head: head needs at least one output");
  const std::size_t feats = m.conv.back().weight.dim(0);
  const std::size_t hidden = m.arch.hidden_units;
  ModelParameters::Head head;
  head.hidden.kind = Layer::Kind::dense;
  head.hidden.name = "hidden";
  head.hidden.weight = init_weight({hidden, feats}, feats, rng);
  head.hidden.bias = Tensor({hidden});
  head.out.kind = Layer::Kind::dense;
  head.out.name = "out";
  head.out.weight = init_weight({outputs, hidden}, hidden, rng);
  head.out.bias = Tensor({outputs});
  m.heads.push_back(std::move(head));
}

void transfer_base(const ModelParameters& src, ModelParameters& dst,
                   std::size_t freeze_layers) {
  if (src.conv.size() != dst.conv.size()) {
    fail("transfer_base: base depth differs (" + std::to_string(src.conv.size()) +
         " vs " + std::to_string(dst.conv.size()) + ")");
  }
  if (freeze_layers > dst.conv.size()) {
    fail("transfer_base: cannot freeze " + std::to_string(freeze_layers) + " of " +
         std::to_string(dst.conv.size()) + " layers");
  }
  for (std::size_t i = 0; i < src.conv.size(); ++i) {
    if (!src.conv[i].weight.same_shape(dst.conv[i].weight)) {
      fail("transfer_base: conv" + std::to_string(i) + " shape " +
           src.conv[i].weight.shape_str() + " vs " + dst.conv[i].weight.shape_str());
    }
    dst.conv[i].weight = src.conv[i].weight;
    dst.conv[i].bias = src.conv[i].bias;
    dst.conv[i].frozen = i < freeze_layers;
  }
}

// === graph building ==========================================================

VarId BoundModel::id(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end()) fail("bound model: unknown parameter '" + name + "'");
  return it->second;
}

BoundModel bind_model(Tape& tape, const ModelParameters& m, bool trainable) {
  BoundModel bm;
  bm.model = &m;
  for (std::size_t i = 0; i < m.conv.size(); ++i) {
    const bool grad = trainable && !m.conv[i].frozen;
    bm.ids["conv" + std::to_string(i) + ".weight"] = tape.leaf(m.conv[i].weight, grad);
    bm.ids["conv" + std::to_string(i) + ".bias"] = tape.leaf(m.conv[i].bias, grad);
  }
  for (std::size_t h = 0; h < m.heads.size(); ++h) {
    const std::string p = "head" + std::to_string(h);
    bm.ids[p + ".hidden.weight"] = tape.leaf(m.heads[h].hidden.weight, trainable);
    bm.ids[p + ".hidden.bias"] = tape.leaf(m.heads[h].hidden.bias, trainable);
    bm.ids[p + ".out.weight"] = tape.leaf(m.heads[h].out.weight, trainable);
    bm.ids[p + ".out.bias"] = tape.leaf(m.heads[h].out.bias, trainable);
  }
  return bm;
}

VarId forward_base(Tape& tape, const BoundModel& bm, VarId x, Rng* dropout_rng) {
  const ModelParameters& m = *bm.model;
  VarId h = x;
  for (std::size_t i = 0; i < m.conv.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    h = tape.relu(tape.conv1d(h, bm.id(p + ".weight"), bm.id(p + ".bias")));
    if (dropout_rng && m.arch.dropout > 0.0) {
      h = tape.dropout(h, m.arch.dropout, *dropout_rng);
    }
  }
  return tape.max_pool_time(h);
}

VarId forward_head_logits(Tape& tape, const BoundModel& bm, std::size_t head,
                          VarId features, Rng* /*dropout_rng*/) {
  if (head >= bm.model->heads.size()) {
    fail("forward_head_logits: head " + std::to_string(head) + " of " +
         std::to_string(bm.model->heads.size()));
  }
  const std::string p = "head" + std::to_string(head);
  VarId hidden = tape.relu(
      tape.affine(features, bm.id(p + ".hidden.weight"), bm.id(p + ".hidden.bias")));
  return tape.affine(hidden, bm.id(p + ".out.weight"), bm.id(p + ".out.bias"));
}

VarId forward_classifier_graph(Tape& tape, const BoundModel& bm, VarId x,
                               Rng* dropout_rng) {
  VarId feats = forward_base(tape, bm, x, dropout_rng);
  VarId logits = forward_head_logits(tape, bm, 0, feats, dropout_rng);
  return tape.softmax(logits);
}

VarId forward_dirichlet_graph(Tape& tape, const BoundModel& bm, VarId x,
                              double temperature, Rng* dropout_rng) {
  if (temperature < 1.0) {
    fail("forward_dirichlet_graph: temperature must be >= 1, got " +
         std::to_string(temperature));
  }
  VarId feats = forward_base(tape, bm, x, dropout_rng);
  VarId logits = forward_head_logits(tape, bm, 0, feats, dropout_rng);
  VarId scaled = tape.scale(logits, 1.0 / temperature);
  return tape.clamp(tape.exp(scaled), kAlphaClampLo, kAlphaClampHi);
}

// === plain-tensor forwards ===================================================

Tensor forward_classifier(const ModelParameters& m, const Tensor& x) {
  Tape tape(Tape::Mode::inference);
  BoundModel bm = bind_model(tape, m, false);
  VarId probs = forward_classifier_graph(tape, bm, tape.leaf(x), nullptr);
  return tape.value(probs);
}

Tensor forward_dirichlet_alpha(const ModelParameters& m, const Tensor& x,
                               double temperature) {
  Tape tape(Tape::Mode::inference);
  BoundModel bm = bind_model(tape, m, false);
  VarId alpha = forward_dirichlet_graph(tape, bm, tape.leaf(x), temperature, nullptr);
  const Tensor& a = tape.value(alpha);
  if (!a.all_finite()) fail("forward_dirichlet_alpha: non-finite concentrations");
  return a;
}

Tensor forward_pretext(const ModelParameters& m, const Tensor& x) {
  Tape tape(Tape::Mode::inference);
  BoundModel bm = bind_model(tape, m, false);
  VarId feats = forward_base(tape, bm, tape.leaf(x), nullptr);
  const std::size_t B = x.dim(0);
  Tensor out({B, m.heads.size()});
  for (std::size_t h = 0; h < m.heads.size(); ++h) {
    VarId p = tape.sigmoid(forward_head_logits(tape, bm, h, feats, nullptr));
    const Tensor& pv = tape.value(p);
    for (std::size_t b = 0; b < B; ++b) out.at2(b, h) = pv.values[b];
  }
  return out;
}

// === checkpointing ===========================================================

namespace {

constexpr char kModelMagic[4] = {'E', 'D', 'D', 'M'};
constexpr std::uint32_t kModelVersion = 1;

void write_u64(std::ofstream& f, std::uint64_t u) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
  f.write(reinterpret_cast<const char*>(buf), 8);
}

void write_u32(std::ofstream& f, std::uint32_t u) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
  f.write(reinterpret_cast<const char*>(buf), 4);
}

void write_f64(std::ofstream& f, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(f, bits);
}

std::uint64_t read_u64(std::ifstream& f) {
  unsigned char buf[8];
  f.read(reinterpret_cast<char*>(buf), 8);
  if (!f) fail("model checkpoint: truncated file");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return u;
}

std::uint32_t read_u32(std::ifstream& f) {
  unsigned char buf[4];
  f.read(reinterpret_cast<char*>(buf), 4);
  if (!f) fail("model checkpoint: truncated file");
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return u;
}

double read_f64(std::ifstream& f) {
  const std::uint64_t bits = read_u64(f);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_tensor(std::ofstream& f, const Tensor& t) {
  write_u32(f, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) write_u64(f, d);
  for (double v : t.values) write_f64(f, v);
}

Tensor read_tensor(std::ifstream& f) {
  const std::uint32_t rank = read_u32(f);
  std::vector<std::size_t> shape;
  for (std::uint32_t i = 0; i < rank; ++i)
    shape.push_back(static_cast<std::size_t>(read_u64(f)));
  Tensor t(std::move(shape));
  for (double& v : t.values) v = read_f64(f);
  return t;
}

}  // namespace

void save_model(const ModelParameters& m, const std::string& path,
                std::uint64_t rng_state) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail("model checkpoint: cannot open '" + tmp + "'");
    f.write(kModelMagic, 4);
    write_u32(f, kModelVersion);
    // Architecture descriptor.
    write_u64(f, m.arch.input_channels);
    write_u64(f, m.arch.input_length);
    write_u32(f, static_cast<std::uint32_t>(m.arch.base_filters.size()));
    for (std::size_t x : m.arch.base_filters) write_u64(f, x);
    for (std::size_t x : m.arch.kernel_widths) write_u64(f, x);
    write_u64(f, m.arch.hidden_units);
    write_f64(f, m.arch.dropout);
    write_f64(f, m.width_multiplier);
    write_u64(f, rng_state);
    // Layer payload: conv freeze flags, head count and sizes, then tensors.
    write_u32(f, static_cast<std::uint32_t>(m.conv.size()));
    for (const Layer& l : m.conv) {
      write_u32(f, l.frozen ? 1 : 0);
      write_tensor(f, l.weight);
      write_tensor(f, l.bias);
    }
    write_u32(f, static_cast<std::uint32_t>(m.heads.size()));
    for (const auto& h : m.heads) {
      write_tensor(f, h.hidden.weight);
      write_tensor(f, h.hidden.bias);
      write_tensor(f, h.out.weight);
      write_tensor(f, h.out.bias);
    }
    if (!f) fail("model checkpoint: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    fail("model checkpoint: rename to '" + path + "' failed");
  }
}

ModelParameters load_model(const std::string& path, std::uint64_t* rng_state) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("model checkpoint: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kModelMagic, 4) != 0) {
    fail("model checkpoint: bad magic in '" + path + "'");
  }
  if (read_u32(f) != kModelVersion) fail("model checkpoint: unsupported version");
  ModelParameters m;
  m.arch.input_channels = static_cast<std::size_t>(read_u64(f));
  m.arch.input_length = static_cast<std::size_t>(read_u64(f));
  const std::uint32_t depth = read_u32(f);
  m.arch.base_filters.resize(depth);
  m.arch.kernel_widths.resize(depth);
  for (auto& x : m.arch.base_filters) x = static_cast<std::size_t>(read_u64(f));
  for (auto& x : m.arch.kernel_widths) x = static_cast<std::size_t>(read_u64(f));
  m.arch.hidden_units = static_cast<std::size_t>(read_u64(f));
  m.arch.dropout = read_f64(f);
  m.width_multiplier = read_f64(f);
  const std::uint64_t state = read_u64(f);
  if (rng_state) *rng_state = state;
  const std::uint32_t n_conv = read_u32(f);
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    Layer l;
    l.kind = Layer::Kind::conv;
    l.name = "conv" + std::to_string(i);
    l.frozen = read_u32(f) != 0;
    l.weight = read_tensor(f);
    l.bias = read_tensor(f);
    m.conv.push_back(std::move(l));
  }
  const std::uint32_t n_heads = read_u32(f);
  for (std::uint32_t h = 0; h < n_heads; ++h) {
    ModelParameters::Head head;
    head.hidden.kind = Layer::Kind::dense;
    head.hidden.name = "hidden";
    head.hidden.weight = read_tensor(f);
    head.hidden.bias = read_tensor(f);
    head.out.kind = Layer::Kind::dense;
    head.out.name = "out";
    head.out.weight = read_tensor(f);
    head.out.bias = read_tensor(f);
    m.heads.push_back(std::move(head));
  }
  return m;
}

}  // namespace edd
