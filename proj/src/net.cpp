#include "pdspeech/net.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pdspeech/rng.hpp"

namespace pdspeech {

namespace {
constexpr char kMagic[4] = {'P', 'D', 'N', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void fill_uniform(Rng& rng, ad::TensorPtr& t, double scale) {
  for (double& x : t->v) x = rng.uniform(-scale, scale);
}
}  // namespace

std::vector<ad::TensorPtr> PdNet::trainable() {
  return {conv1.weight, conv1.bias, bn1.gamma,  bn1.beta, conv2.weight,
          conv2.bias,   bn2.gamma,  bn2.beta,   fc.weight, fc.bias};
}

PdNet init_net(std::size_t chunk_len, std::uint64_t seed) {
  if (chunk_len < 3) raise(Err::ChunkTooShort, "chunk_len must be at least 3");
  PdNet net;
  net.chunk_len = chunk_len;
  net.init_seed = seed;
  net.conv1 = ad::make_conv(1, kConv1Channels, kKernel);
  net.bn1 = ad::make_batchnorm(kConv1Channels);
  net.conv2 = ad::make_conv(kConv1Channels, kConv2Channels, kKernel);
  net.bn2 = ad::make_batchnorm(kConv2Channels);
  net.fc = ad::make_affine(kConv2Channels * chunk_len, kClasses);

  Rng rng(seed);
  fill_uniform(rng, net.conv1.weight, std::sqrt(1.0 / (1.0 * kKernel)));
  fill_uniform(rng, net.conv2.weight, std::sqrt(1.0 / (kConv1Channels * kKernel)));
  fill_uniform(rng, net.fc.weight, std::sqrt(1.0 / static_cast<double>(net.fc.in)));
  return net;
}

NetForward net_forward(ad::Tape& tape, PdNet& net, const std::vector<ad::TensorPtr>& batch,
                       ad::BnMode mode) {
  if (batch.empty()) raise(Err::EmptyBatch, "net_forward on empty batch");
  for (const auto& x : batch) {
    if (x->shape.size() != 2 || x->dim(0) != 1 || x->dim(1) != net.chunk_len) {
      raise(Err::ShapeMismatch, "net input must be (1, chunk_len)");
    }
  }
  net.set_mode(mode);

  NetForward out;
  std::vector<ad::TensorPtr> h;
  h.reserve(batch.size());
  for (const auto& x : batch) h.push_back(tape.conv1d(x, net.conv1));
  h = tape.batchnorm(h, net.bn1);
  out.pre_relu1 = h;
  for (auto& t : h) t = tape.relu(t);
  for (auto& t : h) t = tape.conv1d(t, net.conv2);
  h = tape.batchnorm(h, net.bn2);
  out.pre_relu2 = h;

  out.a_last.reserve(batch.size());
  out.logits.reserve(batch.size());
  for (auto& t : h) {
    auto a = tape.relu(t);
    out.a_last.push_back(a);
    out.logits.push_back(tape.affine(tape.flatten(a), net.fc));
  }
  return out;
}

std::size_t net_param_count(std::size_t chunk_len) {
  return kConv1Channels * 1 * kKernel + kConv1Channels            // conv1 w, b
         + 2 * kConv1Channels * 2                                 // bn1 gamma/beta + running
         + kConv2Channels * kConv1Channels * kKernel + kConv2Channels  // conv2 w, b
         + 2 * kConv2Channels * 2                                 // bn2
         + kClasses * kConv2Channels * chunk_len + kClasses;      // fc w, b
}

std::uint32_t crc32_bytes(const unsigned char* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

void put_values(std::vector<unsigned char>& buf, const std::vector<double>& v) {
  for (double x : v) put_f64(buf, x);
}

std::uint32_t get_u32(const std::vector<unsigned char>& buf, std::size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::uint64_t get_u64(const std::vector<unsigned char>& buf, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

double get_f64(const std::vector<unsigned char>& buf, std::size_t& pos) {
  const std::uint64_t bits = get_u64(buf, pos);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void get_values(const std::vector<unsigned char>& buf, std::size_t& pos, std::vector<double>& v) {
  for (double& x : v) x = get_f64(buf, pos);
}

}  // namespace

void save_net(const PdNet& net, const std::string& path) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kFormatVersion);
  put_u64(buf, net.chunk_len);
  put_u64(buf, net.init_seed);
  put_u64(buf, net_param_count(net.chunk_len));
  put_values(buf, net.conv1.weight->v);
  put_values(buf, net.conv1.bias->v);
  put_values(buf, net.bn1.gamma->v);
  put_values(buf, net.bn1.beta->v);
  put_values(buf, net.bn1.running_mean);
  put_values(buf, net.bn1.running_var);
  put_values(buf, net.conv2.weight->v);
  put_values(buf, net.conv2.bias->v);
  put_values(buf, net.bn2.gamma->v);
  put_values(buf, net.bn2.beta->v);
  put_values(buf, net.bn2.running_mean);
  put_values(buf, net.bn2.running_var);
  put_values(buf, net.fc.weight->v);
  put_values(buf, net.fc.bias->v);
  put_u32(buf, crc32_bytes(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Err::MissingFile, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) raise(Err::MissingFile, "write failed for " + path);
}

PdNet load_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Err::MissingFile, "cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 4 + 4 + 8 + 8 + 8;
  if (buf.size() < kHeader + 4) raise(Err::CorruptFile, "model file truncated: " + path);
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    raise(Err::CorruptFile, "bad model magic in " + path);
  }
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(buf, pos);
  if (version != kFormatVersion) {
    raise(Err::VersionMismatch, "model format version " + std::to_string(version) +
                                    ", expected " + std::to_string(kFormatVersion));
  }
  const std::uint64_t chunk_len = get_u64(buf, pos);
  const std::uint64_t seed = get_u64(buf, pos);
  const std::uint64_t count = get_u64(buf, pos);
  if (chunk_len < 3) raise(Err::CorruptFile, "model chunk_len out of range");
  if (count != net_param_count(chunk_len)) {
    raise(Err::CorruptFile, "model parameter count mismatch");
  }
  const std::size_t expect = kHeader + count * 8 + 4;
  if (buf.size() != expect) raise(Err::CorruptFile, "model file truncated: " + path);
  const std::uint32_t stored_crc = [&] {
    std::size_t p = expect - 4;
    return get_u32(buf, p);
  }();
  if (crc32_bytes(buf.data(), expect - 4) != stored_crc) {
    raise(Err::CorruptFile, "model checksum mismatch in " + path);
  }

  PdNet net;
  net.chunk_len = chunk_len;
  net.init_seed = seed;
  net.conv1 = ad::make_conv(1, kConv1Channels, kKernel);
  net.bn1 = ad::make_batchnorm(kConv1Channels);
  net.conv2 = ad::make_conv(kConv1Channels, kConv2Channels, kKernel);
  net.bn2 = ad::make_batchnorm(kConv2Channels);
  net.fc = ad::make_affine(kConv2Channels * chunk_len, kClasses);
  get_values(buf, pos, net.conv1.weight->v);
  get_values(buf, pos, net.conv1.bias->v);
  get_values(buf, pos, net.bn1.gamma->v);
  get_values(buf, pos, net.bn1.beta->v);
  get_values(buf, pos, net.bn1.running_mean);
  get_values(buf, pos, net.bn1.running_var);
  get_values(buf, pos, net.conv2.weight->v);
  get_values(buf, pos, net.conv2.bias->v);
  get_values(buf, pos, net.bn2.gamma->v);
  get_values(buf, pos, net.bn2.beta->v);
  get_values(buf, pos, net.bn2.running_mean);
  get_values(buf, pos, net.bn2.running_var);
  get_values(buf, pos, net.fc.weight->v);
  get_values(buf, pos, net.fc.bias->v);
  return net;
}

}  // namespace pdspeech
