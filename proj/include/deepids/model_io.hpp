// Binary persistence for a trained detector: dataset schema vocabularies,
// normalization statistics, label taxonomy, projection, and network weights
// in one file. Fixed little-endian layout, "IDSM" magic, format version,
// and a trailing CRC-32 over everything before it.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "deepids/dataset.hpp"
#include "deepids/dbn.hpp"
#include "deepids/error.hpp"
#include "deepids/pca.hpp"

namespace deepids {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[4] = {'I', 'D', 'S', 'M'};

// Everything needed to score raw records: parse with schema, encode with
// norm_stats, project with pca, classify with net, name classes via taxonomy.
struct IdsModel {
  Schema schema;
  NormStats norm_stats;
  LabelTaxonomy taxonomy;
  pca::PcaModel pca;
  DbnParams net;
};

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = c & 1u ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

struct Writer {
  std::string buf;

  void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i)
      buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.append(s);
  }
  void vec(const Eigen::VectorXd& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  void mat(const Eigen::MatrixXd& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
};

struct Reader {
  const unsigned char* p;
  std::size_t left;

  void need(std::size_t n) {
    if (left < n) fail(errc::corrupt_model, "model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    --left;
    return *p++;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(*p++) << (8 * i);
    left -= 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(*p++) << (8 * i);
    left -= 8;
    return std::bit_cast<double>(bits);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
  Eigen::VectorXd vec() {
    const std::uint32_t n = u32();
    Eigen::VectorXd v(n);
    for (std::uint32_t i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
  Eigen::MatrixXd mat() {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    if (static_cast<std::uint64_t>(rows) * cols > (std::uint64_t{1} << 28))
      fail(errc::corrupt_model, "model matrix dimensions implausible");
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = f64();
    return m;
  }
};

inline void check_model(const IdsModel& m) {
  if (m.pca.mean.size() != static_cast<Eigen::Index>(encoded_width(m.schema)))
    fail(errc::corrupt_model, "projection width does not match schema encoding");
  if (m.pca.loading.cols() != m.net.grbm.W.rows())
    fail(errc::corrupt_model, "network input width does not match projection rank");
  if (m.net.num_classes() != m.taxonomy.num_classes())
    fail(errc::corrupt_model, "classifier head does not match taxonomy");
  std::size_t n_numeric = 0;
  for (const auto& c : m.schema.columns)
    if (c.kind == ColumnKind::numeric) ++n_numeric;
  if (m.norm_stats.mean.size() != n_numeric || m.norm_stats.stddev.size() != n_numeric)
    fail(errc::corrupt_model, "normalization statistics do not match schema");
}

}  // namespace detail

inline void save_model(const IdsModel& m, const std::string& path) {
  detail::check_model(m);
  detail::Writer w;
  w.buf.append(kModelMagic, 4);
  w.u32(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(m.schema.dataset_kind));

  w.u32(static_cast<std::uint32_t>(m.schema.columns.size()));
  for (std::size_t c = 0; c < m.schema.columns.size(); ++c) {
    w.u32(static_cast<std::uint32_t>(m.schema.vocab[c].size()));
    for (const auto& v : m.schema.vocab[c]) w.str(v);
  }

  w.u32(static_cast<std::uint32_t>(m.norm_stats.mean.size()));
  for (double x : m.norm_stats.mean) w.f64(x);
  for (double x : m.norm_stats.stddev) w.f64(x);

  w.u32(static_cast<std::uint32_t>(m.taxonomy.class_names.size()));
  for (const auto& n : m.taxonomy.class_names) w.str(n);
  w.u32(static_cast<std::uint32_t>(m.taxonomy.raw_to_class.size()));
  for (const auto& [raw, cls] : m.taxonomy.raw_to_class) {
    w.str(raw);
    w.u32(static_cast<std::uint32_t>(cls));
  }

  w.vec(m.pca.mean);
  w.mat(m.pca.loading);
  w.vec(m.pca.eigenvalues);
  w.vec(m.pca.singular_values);
  w.f64(m.pca.alpha);

  w.mat(m.net.grbm.W);
  w.vec(m.net.grbm.a);
  w.vec(m.net.grbm.b);
  w.vec(m.net.grbm.sigma);
  w.u32(static_cast<std::uint32_t>(m.net.rbms.size()));
  for (const auto& r : m.net.rbms) {
    w.mat(r.W);
    w.vec(r.a);
    w.vec(r.b);
  }
  w.mat(m.net.head_W);
  w.vec(m.net.head_b);

  const std::uint32_t crc =
      detail::crc32(reinterpret_cast<const unsigned char*>(w.buf.data()), w.buf.size());
  w.u32(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot open model file for writing: " + path);
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  out.flush();
  if (!out) fail(errc::io_error, "failed writing model file: " + path);
}

inline IdsModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::model_io, "cannot open model file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(errc::model_io, "failed reading model file: " + path);
  if (buf.size() < 4 + 4 + 4) fail(errc::corrupt_model, "model file truncated");

  const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(bytes[buf.size() - 4 + i]) << (8 * i);
  if (detail::crc32(bytes, buf.size() - 4) != stored)
    fail(errc::corrupt_model, "model file checksum mismatch");

  detail::Reader r{bytes, buf.size() - 4};
  if (std::memcmp(r.p, kModelMagic, 4) != 0)
    fail(errc::corrupt_model, "not a model file (bad magic)");
  r.p += 4;
  r.left -= 4;
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    fail(errc::version_mismatch, "model format version " + std::to_string(version) +
                                     " unsupported, expected " +
                                     std::to_string(kModelFormatVersion));

  IdsModel m;
  const std::uint8_t kind_raw = r.u8();
  if (kind_raw > static_cast<std::uint8_t>(DatasetKind::unswnb15))
    fail(errc::corrupt_model, "unknown dataset kind in model file");
  m.schema = build_schema(static_cast<DatasetKind>(kind_raw));

  const std::uint32_t ncols = r.u32();
  if (ncols != m.schema.columns.size())
    fail(errc::corrupt_model, "schema column count mismatch in model file");
  for (std::uint32_t c = 0; c < ncols; ++c) {
    const std::uint32_t nv = r.u32();
    m.schema.vocab[c].reserve(nv);
    for (std::uint32_t v = 0; v < nv; ++v) m.schema.vocab[c].push_back(r.str());
  }
  m.schema.rebuild_vocab_index();

  const std::uint32_t n_numeric = r.u32();
  m.norm_stats.mean.resize(n_numeric);
  m.norm_stats.stddev.resize(n_numeric);
  for (auto& x : m.norm_stats.mean) x = r.f64();
  for (auto& x : m.norm_stats.stddev) x = r.f64();

  const std::uint32_t n_classes = r.u32();
  for (std::uint32_t i = 0; i < n_classes; ++i)
    m.taxonomy.class_names.push_back(r.str());
  const std::uint32_t n_map = r.u32();
  for (std::uint32_t i = 0; i < n_map; ++i) {
    std::string raw = r.str();
    const std::uint32_t cls = r.u32();
    if (cls >= n_classes) fail(errc::corrupt_model, "taxonomy entry out of range");
    m.taxonomy.raw_to_class.emplace(std::move(raw), static_cast<int>(cls));
  }

  m.pca.mean = r.vec();
  m.pca.loading = r.mat();
  m.pca.eigenvalues = r.vec();
  m.pca.singular_values = r.vec();
  m.pca.alpha = r.f64();
  m.pca.rank = static_cast<int>(m.pca.loading.cols());

  m.net.grbm.W = r.mat();
  m.net.grbm.a = r.vec();
  m.net.grbm.b = r.vec();
  m.net.grbm.sigma = r.vec();
  const std::uint32_t n_rbms = r.u32();
  for (std::uint32_t i = 0; i < n_rbms; ++i) {
    RbmParams rbm;
    rbm.W = r.mat();
    rbm.a = r.vec();
    rbm.b = r.vec();
    m.net.rbms.push_back(std::move(rbm));
  }
  m.net.head_W = r.mat();
  m.net.head_b = r.vec();

  if (r.left != 0) fail(errc::corrupt_model, "trailing bytes in model file");
  detail::check_model(m);
  return m;
}

}  // namespace deepids
