#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <zlib.h>

#include "flexpose/generator.hpp"

namespace flexpose::gen {

namespace {

constexpr char kMagic[4] = {'F', 'X', 'P', '1'};
constexpr uint32_t kVersion = 1;

// Little-endian byte buffer writer/reader. The on-disk format is pinned
// byte for byte, independent of host layout.
struct Writer {
  std::vector<uint8_t> buf;

  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(uint8_t v) { buf.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void array(const diff::Tensor& t) {
    u64(static_cast<uint64_t>(t.numel()));
    for (double v : t.data) f64(v);
  }
};

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  explicit Reader(const std::vector<uint8_t>& b) : buf(b) {}

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw std::runtime_error("checkpoint truncated");
  }
  uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  void array_into(diff::Tensor& t, const std::string& name) {
    const uint64_t n = u64();
    if (n != static_cast<uint64_t>(t.numel()))
      throw std::runtime_error("checkpoint array '" + name +
                               "' has wrong length");
    for (auto& v : t.data) v = f64();
  }
};

void write_block(Writer& w, const TransferBlock& b) {
  w.u8(static_cast<uint8_t>(b.kind));
  switch (b.kind) {
    case BlockKind::identity:
      break;
    case BlockKind::dense:
      w.array(b.dense);
      break;
    case BlockKind::low_rank:
      w.u32(static_cast<uint32_t>(b.lr_a.shape[0]));
      w.array(b.lr_a);
      w.array(b.lr_b);
      break;
    case BlockKind::nonlinear:
      w.array(b.nl_w1);
      w.array(b.nl_w2);
      break;
  }
}

void read_block(Reader& r, TransferBlock& b, int d_s) {
  const uint8_t kind = r.u8();
  if (kind > 3) throw std::runtime_error("checkpoint: unknown tau block kind");
  b.kind = static_cast<BlockKind>(kind);
  switch (b.kind) {
    case BlockKind::identity:
      break;
    case BlockKind::dense:
      b.dense = diff::Tensor({d_s, d_s});
      r.array_into(b.dense, "tau_dense");
      break;
    case BlockKind::low_rank: {
      const int rank = static_cast<int>(r.u32());
      if (rank < 1 || rank > d_s)
        throw std::runtime_error("checkpoint: bad low-rank rank");
      b.lr_a = diff::Tensor({rank, d_s});
      b.lr_b = diff::Tensor({d_s, rank});
      r.array_into(b.lr_a, "tau_lr_a");
      r.array_into(b.lr_b, "tau_lr_b");
      break;
    }
    case BlockKind::nonlinear:
      b.nl_w1 = diff::Tensor({d_s, d_s});
      b.nl_w2 = diff::Tensor({d_s, d_s});
      r.array_into(b.nl_w1, "tau_nl_w1");
      r.array_into(b.nl_w2, "tau_nl_w2");
      break;
  }
}

}  // namespace

void save_checkpoint(const Generator& g, const TransferMatrix* tau,
                     const std::string& path) {
  Generator& gm = const_cast<Generator&>(g);
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(g.cfg.d_z));
  w.u32(static_cast<uint32_t>(g.cfg.d_w));
  w.u32(static_cast<uint32_t>(g.cfg.layers));
  w.u32(static_cast<uint32_t>(g.cfg.d_h));
  w.u32(static_cast<uint32_t>(g.cfg.joints));
  w.u32(static_cast<uint32_t>(g.cfg.res));

  auto named = gm.named_parameters();
  w.u32(static_cast<uint32_t>(named.size()));
  for (auto& [name, t] : named) {
    w.str(name);
    w.array(*t);
  }

  if (tau) {
    w.u8(1);
    w.u32(static_cast<uint32_t>(tau->blocks.size()));
    for (const auto& b : tau->blocks) write_block(w, b);
  } else {
    w.u8(0);
  }

  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, w.buf.data(), static_cast<uInt>(w.buf.size())));
  w.u32(crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(w.buf.data()),
            static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());

  if (buf.size() < 8) throw std::runtime_error("checkpoint truncated");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic (not an FXP1 file)");

  // Validate the trailer before touching any payload.
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
  const uint32_t actual = static_cast<uint32_t>(
      crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
  if (stored != actual)
    throw std::runtime_error("checkpoint checksum mismatch");

  std::vector<uint8_t> payload(buf.begin(), buf.end() - 4);
  Reader r(payload);
  r.pos = 4;  // past magic
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));

  GeneratorConfig cfg;
  cfg.d_z = static_cast<int>(r.u32());
  cfg.d_w = static_cast<int>(r.u32());
  cfg.layers = static_cast<int>(r.u32());
  cfg.d_h = static_cast<int>(r.u32());
  cfg.joints = static_cast<int>(r.u32());
  cfg.res = static_cast<int>(r.u32());
  cfg.validate();

  Checkpoint ck;
  ck.generator = init_generator(cfg, 0);
  auto named = ck.generator.named_parameters();
  const uint32_t n_arrays = r.u32();
  if (n_arrays != named.size())
    throw std::runtime_error("checkpoint: unexpected array count");
  for (auto& [name, t] : named) {
    const std::string got = r.str();
    if (got != name)
      throw std::runtime_error("checkpoint: expected array '" + name +
                               "', found '" + got + "'");
    r.array_into(*t, name);
  }

  if (r.u8()) {
    TransferMatrix tau = TransferMatrix::identity(cfg);
    const uint32_t nblocks = r.u32();
    if (nblocks != tau.blocks.size())
      throw std::runtime_error("checkpoint: tau block count mismatch");
    for (auto& b : tau.blocks) read_block(r, b, cfg.d_s());
    ck.tau = std::move(tau);
  }
  if (r.pos != payload.size())
    throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

}  // namespace flexpose::gen
