#include "glip/net.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace glip {

std::string to_string(HeadActivation h) { return h == HeadActivation::Sigmoid ? "sigmoid" : "identity"; }

HeadActivation parse_head_activation(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "identity") return HeadActivation::Identity;
  if (s == "sigmoid") return HeadActivation::Sigmoid;
  throw std::invalid_argument(concat("unknown head activation '", text, "'"));
}

HeadActivation head_for_loss(LossKind kind) {
  return is_probability_loss(kind) ? HeadActivation::Sigmoid : HeadActivation::Identity;
}

void NetworkConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("network in_channels must be >= 1");
  if (out_channels < 1) throw std::invalid_argument("network out_channels must be >= 1");
  if (depth < 1) throw std::invalid_argument(concat("network depth must be >= 1, got ", depth));
  if (depth > 12) throw std::invalid_argument(concat("network depth ", depth, " is unreasonably large"));
  if (base_channels < 1) throw std::invalid_argument("network base_channels must be >= 1");
  if (input_shape) check_spatial(*input_shape);
}

void NetworkConfig::check_spatial(const Index3& s) const {
  const int block = 1 << depth;
  for (int a = 0; a < 3; ++a)
    if (s[a] < block || s[a] % block != 0)
      throw std::invalid_argument(concat("input axis ", a, " of size ", s[a], " is not a positive multiple of 2^depth = ",
                                         block));
}

namespace {

struct ConvBlock {
  Conv3d c1, c2;
  std::optional<BatchNorm3d> n1, n2;
  Tensor a1, a2;

  ConvBlock(int cin, int cout, bool bn, const std::string& name)
      : c1(cin, cout, 3, name + ".conv1"), c2(cout, cout, 3, name + ".conv2") {
    if (bn) {
      n1.emplace(cout, name + ".bn1");
      n2.emplace(cout, name + ".bn2");
      // Batch norm removes any per-channel offset, so these stay at zero.
      c1.bias.trainable = c2.bias.trainable = false;
    }
  }

  Tensor forward(const Tensor& x, bool training) {
    a1 = c1.forward(x);
    if (n1) a1 = n1->forward(a1, training);
    relu_inplace(a1);
    a2 = c2.forward(a1);
    if (n2) a2 = n2->forward(a2, training);
    relu_inplace(a2);
    return a2;
  }

  Tensor backward(Tensor g, bool need_input_grad) {
    relu_backward_inplace(a2, g);
    if (n2) g = n2->backward(g);
    g = c2.backward(g);
    relu_backward_inplace(a1, g);
    if (n1) g = n1->backward(g);
    return c1.backward(g, need_input_grad);
  }

  void collect(std::vector<Param*>& out) {
    for (Param* p : {&c1.weight, &c1.bias}) out.push_back(p);
    if (n1) for (Param* p : {&n1->gamma, &n1->beta, &n1->running_mean, &n1->running_var}) out.push_back(p);
    for (Param* p : {&c2.weight, &c2.bias}) out.push_back(p);
    if (n2) for (Param* p : {&n2->gamma, &n2->beta, &n2->running_mean, &n2->running_var}) out.push_back(p);
  }

  void init(Rng& rng) {
    c1.init(rng);
    c2.init(rng);
  }
};

constexpr char kCheckpointMagic[8] = {'G', 'L', 'I', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
}

template <typename T>
T read_le(std::istream& is) {
  std::array<char, sizeof(T)> bytes{};
  if (!is.read(bytes.data(), sizeof(T))) throw std::runtime_error("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

struct Network::Impl {
  std::vector<ConvBlock> enc;
  std::optional<ConvBlock> bottleneck;
  std::vector<ConvBlock> dec;  // dec[l] produces level l
  std::optional<Conv3d> head;
  std::vector<Tensor> skips;
  std::vector<std::vector<std::uint32_t>> pool_idx;
  std::vector<Index3> pool_in_shape;
  Tensor output;
};

Network::Network(const NetworkConfig& cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
  auto& m = *impl_;
  auto ch = [&](int level) { return cfg_.base_channels << level; };
  int cin = cfg_.in_channels;
  for (int l = 0; l < cfg_.depth; ++l) {
    m.enc.emplace_back(cin, ch(l), cfg_.batch_norm, concat("enc", l));
    cin = ch(l);
  }
  m.bottleneck.emplace(cin, ch(cfg_.depth), cfg_.batch_norm, "bottleneck");
  for (int l = 0; l < cfg_.depth; ++l) m.dec.emplace_back(ch(l + 1) + ch(l), ch(l), cfg_.batch_norm, concat("dec", l));
  m.head.emplace(ch(0), cfg_.out_channels, 1, "head");

  Rng rng(mix_seed(cfg_.seed, 0x6e6574ULL));
  for (auto& b : m.enc) b.init(rng);
  m.bottleneck->init(rng);
  for (int l = cfg_.depth - 1; l >= 0; --l) m.dec[l].init(rng);
  m.head->init(rng);
}

Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

Tensor Network::forward(const Tensor& x, bool training) {
  if (x.c != cfg_.in_channels)
    throw std::invalid_argument(concat("network expects ", cfg_.in_channels, " input channels, got ", x.c));
  if (x.data.size() != x.numel()) throw std::invalid_argument("network input: data size does not match shape");
  cfg_.check_spatial(x.s);
  auto& m = *impl_;
  m.skips.clear();
  m.pool_idx.assign(cfg_.depth, {});
  m.pool_in_shape.assign(cfg_.depth, {});

  Tensor h = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    h = m.enc[l].forward(h, training);
    m.skips.push_back(h);
    m.pool_in_shape[l] = h.s;
    h = maxpool2_forward(h, m.pool_idx[l]);
  }
  h = m.bottleneck->forward(h, training);
  for (int l = cfg_.depth - 1; l >= 0; --l) h = m.dec[l].forward(concat_channels(upsample2_forward(h), m.skips[l]), training);
  h = m.head->forward(h);
  if (cfg_.head == HeadActivation::Sigmoid) sigmoid_inplace(h);
  m.output = h;
  return h;
}

void Network::backward(const Tensor& grad_output) {
  auto& m = *impl_;
  if (!grad_output.same_shape(m.output))
    throw std::invalid_argument("network backward: gradient shape " + shape_string(grad_output) + " does not match output " +
                                shape_string(m.output));
  Tensor g = grad_output;
  if (cfg_.head == HeadActivation::Sigmoid) sigmoid_backward_inplace(m.output, g);
  g = m.head->backward(g);
  std::vector<Tensor> skip_grads(cfg_.depth);
  for (int l = 0; l < cfg_.depth; ++l) {
    g = m.dec[l].backward(g, true);
    Tensor up, skip;
    split_channels(g, cfg_.base_channels << (l + 1), up, skip);
    skip_grads[l] = std::move(skip);
    g = upsample2_backward(up);
  }
  g = m.bottleneck->backward(g, true);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    g = maxpool2_backward(g, m.pool_idx[l], m.pool_in_shape[l]);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += skip_grads[l].data[i];
    g = m.enc[l].backward(g, l > 0);
  }
}

void Network::zero_grad() {
  for (Param* p : state()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

std::vector<Param*> Network::state() {
  auto& m = *impl_;
  std::vector<Param*> out;
  for (auto& b : m.enc) b.collect(out);
  m.bottleneck->collect(out);
  for (auto& b : m.dec) b.collect(out);
  out.push_back(&m.head->weight);
  out.push_back(&m.head->bias);
  return out;
}

std::vector<const Param*> Network::state() const {
  auto all = const_cast<Network*>(this)->state();
  return {all.begin(), all.end()};
}

std::vector<Param*> Network::parameters() {
  std::vector<Param*> out;
  for (Param* p : state())
    if (p->trainable) out.push_back(p);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Param* p : state())
    if (p->trainable) n += p->value.size();
  return n;
}

void Network::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_le<std::uint32_t>(os, kCheckpointVersion);
    const auto params = state();
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
      write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
      os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      write_le<std::uint64_t>(os, p->value.size());
      for (float v : p->value) write_le<float>(os, v);
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void Network::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  const auto version = read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw std::runtime_error(concat(path.string(), ": unknown checkpoint version ", version));
  auto params = state();
  const auto count = read_le<std::uint32_t>(is);
  if (count != params.size())
    throw std::runtime_error(concat(path.string(), ": checkpoint has ", count, " tensors, network has ", params.size()));
  for (Param* p : params) {
    const auto len = read_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("checkpoint: unexpected end of file");
    const auto size = read_le<std::uint64_t>(is);
    if (name != p->name || size != p->value.size())
      throw std::runtime_error(concat(path.string(), ": tensor ", name, "[", size, "] does not match ", p->name, "[",
                                      p->value.size(), "]"));
    for (auto& v : p->value) v = read_le<float>(is);
  }
}

Network build_network(const NetworkConfig& cfg) { return Network(cfg); }

void Adam::step(const std::vector<Param*>& params) {
  if (m_.empty()) {
    for (const Param* p : params) {
      m_.emplace_back(p->value.size(), 0.0f);
      v_.emplace_back(p->value.size(), 0.0f);
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const float step = static_cast<float>(lr_ / c1);
  const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
  const float inv_c2 = static_cast<float>(1.0 / c2), eps = static_cast<float>(eps_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

Tensor volumes_to_tensor(const std::vector<const Volume*>& volumes) {
  if (volumes.empty()) throw std::invalid_argument("volumes_to_tensor: empty batch");
  const Index3 s = volumes[0]->grid.shape;
  Tensor t = Tensor::zeros(static_cast<int>(volumes.size()), 1, s);
  for (std::size_t b = 0; b < volumes.size(); ++b) {
    if (volumes[b]->grid.shape != s) throw std::invalid_argument("volumes_to_tensor: volumes differ in shape");
    std::copy(volumes[b]->data.begin(), volumes[b]->data.end(), t.ptr(static_cast<int>(b), 0));
  }
  return t;
}

Batch tensor_to_batch(const Tensor& t) {
  Batch b;
  b.shape = {t.n, t.c, t.s};
  b.values.assign(t.data.begin(), t.data.end());
  return b;
}

Tensor batch_to_tensor(const Batch& b) {
  Tensor t = Tensor::zeros(b.shape.batch, b.shape.channels, b.shape.spatial);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(b.values[i]);
  return t;
}

}  // namespace glip
