#include "sbf/nn.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace sbf::nn {

template class DenseNet<double>;
template class Adam<double>;

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Normalize:
      return "normalize";
    case LayerKind::Dense:
      return "dense";
    case LayerKind::Relu:
      return "relu";
    case LayerKind::Tanh:
      return "tanh";
    case LayerKind::Scale:
      return "scale";
  }
  return "unknown";
}

namespace wire {

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw std::runtime_error("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void put_u8(std::ostream& os, std::uint8_t v) { put_le(os, v); }
void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
void put_f64(std::ostream& os, double v) { put_le(os, v); }
std::uint8_t get_u8(std::istream& is) { return get_le<std::uint8_t>(is); }
std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t get_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
double get_f64(std::istream& is) { return get_le<double>(is); }

}  // namespace wire

namespace {

constexpr char kMagic[8] = {'S', 'B', 'F', 'N', 'E', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_vector(std::ostream& os, const Net::Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) wire::put_f64(os, v[i]);
}

Net::Vector get_vector(std::istream& is, Eigen::Index n) {
  Net::Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = wire::get_f64(is);
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& os, const Net& net, const Optimizer* opt) {
  os.write(kMagic, sizeof kMagic);
  wire::put_u32(os, kVersion);
  wire::put_u32(os, static_cast<std::uint32_t>(net.input_dim()));
  wire::put_u32(os, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    wire::put_u8(os, static_cast<std::uint8_t>(l.kind));
    wire::put_u32(os, static_cast<std::uint32_t>(l.out));
    wire::put_f64(os, l.lo);
    wire::put_f64(os, l.hi);
  }
  wire::put_u64(os, static_cast<std::uint64_t>(net.param_count()));
  put_vector(os, net.params());
  wire::put_u8(os, opt ? 1 : 0);
  if (opt) {
    if (opt->m.size() != net.param_count()) throw std::invalid_argument("checkpoint: optimizer shape");
    wire::put_f64(os, opt->lr);
    wire::put_f64(os, opt->beta1);
    wire::put_f64(os, opt->beta2);
    wire::put_f64(os, opt->eps);
    wire::put_u64(os, opt->t);
    put_vector(os, opt->m);
    put_vector(os, opt->v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

bool load_checkpoint(std::istream& is, Net& net, Optimizer* opt) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  const std::uint32_t version = wire::get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Net loaded(static_cast<int>(wire::get_u32(is)));
  const std::uint32_t count = wire::get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = static_cast<LayerKind>(wire::get_u8(is));
    const auto out = static_cast<int>(wire::get_u32(is));
    const double lo = wire::get_f64(is);
    const double hi = wire::get_f64(is);
    switch (kind) {
      case LayerKind::Normalize:
        loaded.normalize(lo, hi);
        break;
      case LayerKind::Dense:
        loaded.dense(out);
        break;
      case LayerKind::Relu:
        loaded.relu();
        break;
      case LayerKind::Tanh:
        loaded.tanh();
        break;
      case LayerKind::Scale:
        loaded.scale(lo, hi);
        break;
      default:
        throw std::runtime_error("checkpoint: unknown layer kind");
    }
  }
  const auto n = static_cast<Eigen::Index>(wire::get_u64(is));
  if (n != loaded.param_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
  loaded.params() = get_vector(is, n);
  const bool has_opt = wire::get_u8(is) != 0;
  if (has_opt) {
    Optimizer o;
    o.lr = wire::get_f64(is);
    o.beta1 = wire::get_f64(is);
    o.beta2 = wire::get_f64(is);
    o.eps = wire::get_f64(is);
    o.t = wire::get_u64(is);
    o.m = get_vector(is, n);
    o.v = get_vector(is, n);
    if (opt) *opt = std::move(o);
  }
  net = std::move(loaded);
  return has_opt;
}

}  // namespace sbf::nn
