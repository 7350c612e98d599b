#include <fstream>
#include <iterator>

#include "byte_io.hpp"
#include "dpdl/error.hpp"
#include "dpdl/key_value.hpp"
#include "dpdl/training.hpp"

namespace dpdl {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'D', 'L', 'C', 'K', 'P', 'T'};

void put_matrix(detail::ByteWriter& w, const Matrix& m) {
  w.put<std::uint64_t>(m.rows);
  w.put<std::uint64_t>(m.cols);
  w.put_doubles(m.data);
}

Matrix get_matrix(detail::ByteReader& r) {
  Matrix m;
  m.rows = r.get<std::uint64_t>();
  m.cols = r.get<std::uint64_t>();
  if (m.cols != 0 && m.rows > r.remaining() / m.cols) throw CorruptionError("DPDLCKPT: truncated payload");
  m.data = r.get_doubles(m.rows * m.cols);
  return m;
}

void put_vector(detail::ByteWriter& w, std::span<const double> v) {
  w.put<std::uint64_t>(v.size());
  w.put_doubles(v);
}

std::vector<double> get_vector(detail::ByteReader& r) { return r.get_doubles(r.get<std::uint64_t>()); }

void put_head(detail::ByteWriter& w, const LinearHead& h) {
  put_vector(w, h.weights);
  w.put<double>(h.bias);
}

LinearHead get_head(detail::ByteReader& r) {
  LinearHead h;
  h.weights = get_vector(r);
  h.bias = r.get<double>();
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(Checkpoint::kVersion);
  w.put_string(train_config_to_text(ck.config));
  w.put<std::uint32_t>(ck.dims.height);
  w.put<std::uint32_t>(ck.dims.width);
  w.put<std::uint32_t>(ck.dims.channels);

  put_vector(w, ck.mgp.logits);
  put_matrix(w, ck.mgp.means);
  put_matrix(w, ck.mgp.log_variances);
  w.put<double>(ck.mgp.epsilon);

  put_head(w, ck.heads.anomaly);
  put_head(w, ck.heads.normal);
  put_head(w, ck.heads.residual);
  w.put<double>(ck.heads.topk_fraction);
  w.put<std::uint8_t>(ck.heads.residual_scale == ResidualScale::std_dev ? 0 : 1);

  w.put<std::uint64_t>(ck.optimizer.step);
  w.put<std::uint64_t>(ck.optimizer.first_moment.size());
  for (const auto& m : ck.optimizer.first_moment) put_vector(w, m);
  w.put<std::uint64_t>(ck.optimizer.second_moment.size());
  for (const auto& v : ck.optimizer.second_moment) put_vector(w, v);

  w.put_string(ck.rng_state);
  w.put<std::uint32_t>(ck.epoch);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic || !std::equal(kMagic, kMagic + sizeof kMagic, bytes.begin()))
    throw FormatError("DPDLCKPT: bad magic");
  detail::ByteReader r(bytes.subspan(sizeof kMagic), "DPDLCKPT");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw VersionError("DPDLCKPT: unsupported version " + std::to_string(version) + " (expected " +
                       std::to_string(Checkpoint::kVersion) + ")");

  Checkpoint ck;
  ck.config = train_config_from_map(parse_key_value(r.get_string()));
  ck.dims.height = r.get<std::uint32_t>();
  ck.dims.width = r.get<std::uint32_t>();
  ck.dims.channels = r.get<std::uint32_t>();

  ck.mgp.logits = get_vector(r);
  ck.mgp.means = get_matrix(r);
  ck.mgp.log_variances = get_matrix(r);
  ck.mgp.epsilon = r.get<double>();

  ck.heads.anomaly = get_head(r);
  ck.heads.normal = get_head(r);
  ck.heads.residual = get_head(r);
  ck.heads.topk_fraction = r.get<double>();
  const auto scale = r.get<std::uint8_t>();
  if (scale > 1) throw CorruptionError("DPDLCKPT: bad residual scale tag");
  ck.heads.residual_scale = scale == 0 ? ResidualScale::std_dev : ResidualScale::variance;

  ck.optimizer.step = r.get<std::uint64_t>();
  for (auto* moments : {&ck.optimizer.first_moment, &ck.optimizer.second_moment}) {
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / sizeof(std::uint64_t)) throw CorruptionError("DPDLCKPT: truncated payload");
    for (std::uint64_t i = 0; i < n; ++i) moments->push_back(get_vector(r));
  }

  ck.rng_state = r.get_string();
  ck.epoch = r.get<std::uint32_t>();
  if (r.remaining() != 0) throw CorruptionError("DPDLCKPT: trailing bytes");

  try {
    ck.mgp.validate();
    ck.heads.validate();
  } catch (const ValidationError& e) {
    throw CorruptionError(std::string("DPDLCKPT: ") + e.what());
  }
  if (ck.mgp.dim() != ck.dims.size() || ck.heads.anomaly.weights.size() != ck.dims.channels)
    throw CorruptionError("DPDLCKPT: parameter shapes do not match the feature dims");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace dpdl
