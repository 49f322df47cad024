// KDD-format intrusion dataset handling: fixed column schemas, record
// parsing, attack-label taxonomies, and the z-score + one-hot encoder that
// turns raw records into the real matrix consumed by PCA and the network.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "deepids/error.hpp"

namespace deepids {

enum class DatasetKind : std::uint8_t { kdd99 = 0, nslkdd = 1, unswnb15 = 2 };

inline const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kdd99: return "kdd99";
    case DatasetKind::nslkdd: return "nslkdd";
    case DatasetKind::unswnb15: return "unswnb15";
  }
  return "?";
}

inline std::optional<DatasetKind> dataset_kind_from_string(std::string_view s) {
  if (s == "kdd99") return DatasetKind::kdd99;
  if (s == "nslkdd") return DatasetKind::nslkdd;
  if (s == "unswnb15") return DatasetKind::unswnb15;
  return std::nullopt;
}

enum class ColumnKind : std::uint8_t { numeric = 0, categorical = 1, label = 2, ignore = 3 };

struct Column {
  std::string name;
  ColumnKind kind;
};

// Fixed column layout of one dataset family. Categorical vocabularies are
// empty until fit_encoder has seen the training split; vocab_index mirrors
// vocab for O(1) lookup and is rebuilt after deserialization.
struct Schema {
  DatasetKind dataset_kind = DatasetKind::kdd99;
  std::vector<Column> columns;
  std::vector<std::vector<std::string>> vocab;
  std::vector<std::unordered_map<std::string, int>> vocab_index;

  std::size_t arity() const { return columns.size(); }

  std::size_t feature_count() const {
    std::size_t n = 0;
    for (const auto& c : columns)
      if (c.kind == ColumnKind::numeric || c.kind == ColumnKind::categorical) ++n;
    return n;
  }

  int label_column() const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].kind == ColumnKind::label) return static_cast<int>(i);
    return -1;
  }

  void rebuild_vocab_index() {
    vocab_index.assign(columns.size(), {});
    for (std::size_t c = 0; c < vocab.size() && c < columns.size(); ++c)
      for (std::size_t v = 0; v < vocab[c].size(); ++v)
        vocab_index[c].emplace(vocab[c][v], static_cast<int>(v));
  }
};

namespace detail {

// The 41 KDD feature columns shared by KDDcup 1999 and NSL-KDD.
// protocol_type/service/flag are symbolic; the remaining symbolic flags in
// the original .names file (land, logged_in, ...) are 0/1 in the data and
// are treated as numeric.
inline std::vector<Column> kdd_feature_columns() {
  auto num = [](const char* n) { return Column{n, ColumnKind::numeric}; };
  auto cat = [](const char* n) { return Column{n, ColumnKind::categorical}; };
  return {
      num("duration"), cat("protocol_type"), cat("service"), cat("flag"),
      num("src_bytes"), num("dst_bytes"), num("land"), num("wrong_fragment"),
      num("urgent"), num("hot"), num("num_failed_logins"), num("logged_in"),
      num("num_compromised"), num("root_shell"), num("su_attempted"),
      num("num_root"), num("num_file_creations"), num("num_shells"),
      num("num_access_files"), num("num_outbound_cmds"), num("is_host_login"),
      num("is_guest_login"), num("count"), num("srv_count"), num("serror_rate"),
      num("srv_serror_rate"), num("rerror_rate"), num("srv_rerror_rate"),
      num("same_srv_rate"), num("diff_srv_rate"), num("srv_diff_host_rate"),
      num("dst_host_count"), num("dst_host_srv_count"),
      num("dst_host_same_srv_rate"), num("dst_host_diff_srv_rate"),
      num("dst_host_same_src_port_rate"), num("dst_host_srv_diff_host_rate"),
      num("dst_host_serror_rate"), num("dst_host_srv_serror_rate"),
      num("dst_host_rerror_rate"), num("dst_host_srv_rerror_rate"),
  };
}

// UNSW-NB15 official train/test partition layout (the CSVs with a header
// line): id, 42 feature columns, attack_cat as the class label, and the
// binary label column which duplicates attack_cat and is ignored.
inline std::vector<Column> unsw_columns() {
  auto num = [](const char* n) { return Column{n, ColumnKind::numeric}; };
  auto cat = [](const char* n) { return Column{n, ColumnKind::categorical}; };
  std::vector<Column> cols;
  cols.push_back({"id", ColumnKind::ignore});
  cols.push_back(num("dur"));
  cols.push_back(cat("proto"));
  cols.push_back(cat("service"));
  cols.push_back(cat("state"));
  for (const char* n : {"spkts", "dpkts", "sbytes", "dbytes", "rate", "sttl",
                        "dttl", "sload", "dload", "sloss", "dloss", "sinpkt",
                        "dinpkt", "sjit", "djit", "swin", "stcpb", "dtcpb",
                        "dwin", "tcprtt", "synack", "ackdat", "smean", "dmean",
                        "trans_depth", "response_body_len", "ct_srv_src",
                        "ct_state_ttl", "ct_dst_ltm", "ct_src_dport_ltm",
                        "ct_dst_sport_ltm", "ct_dst_src_ltm", "is_ftp_login",
                        "ct_ftp_cmd", "ct_flw_http_mthd", "ct_src_ltm",
                        "ct_srv_dst", "is_sm_ips_ports"})
    cols.push_back(num(n));
  cols.push_back({"attack_cat", ColumnKind::label});
  cols.push_back({"label", ColumnKind::ignore});
  return cols;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Schema build_schema(DatasetKind kind) {
  Schema s;
  s.dataset_kind = kind;
  switch (kind) {
    case DatasetKind::kdd99:
      s.columns = detail::kdd_feature_columns();
      s.columns.push_back({"label", ColumnKind::label});
      break;
    case DatasetKind::nslkdd:
      s.columns = detail::kdd_feature_columns();
      s.columns.push_back({"label", ColumnKind::label});
      s.columns.push_back({"difficulty", ColumnKind::ignore});
      break;
    case DatasetKind::unswnb15:
      s.columns = detail::unsw_columns();
      break;
  }
  s.vocab.assign(s.columns.size(), {});
  s.vocab_index.assign(s.columns.size(), {});
  return s;
}

// One parsed dataset row. values holds one entry per feature column, in
// schema order; ignore/label columns never appear in it.
struct FeatureRecord {
  std::vector<std::variant<double, std::string>> values;
  std::string raw_label;
  bool has_label = false;
};

// Lowercase, trim, and strip the trailing '.' that KDDcup 1999 labels carry.
inline std::string canonical_label(std::string_view raw) {
  auto t = detail::trim(raw);
  if (!t.empty() && t.back() == '.') t.remove_suffix(1);
  std::string out(t);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Raw attack label -> class id. Class 0 is always "normal"; raw_to_class is
// keyed by canonical_label output and covers the attack types that appear
// only in the test splits.
struct LabelTaxonomy {
  std::vector<std::string> class_names;
  std::map<std::string, int> raw_to_class;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

inline LabelTaxonomy builtin_taxonomy(DatasetKind kind) {
  LabelTaxonomy t;
  auto add = [&t](int cls, std::initializer_list<const char*> raws) {
    for (const char* r : raws) t.raw_to_class.emplace(r, cls);
  };
  if (kind == DatasetKind::unswnb15) {
    t.class_names = {"normal",  "fuzzers",        "analysis",  "backdoors",
                     "dos",     "exploits",       "generic",   "reconnaissance",
                     "shellcode", "worms"};
    add(0, {"normal"});
    add(1, {"fuzzers"});
    add(2, {"analysis"});
    add(3, {"backdoor", "backdoors"});
    add(4, {"dos"});
    add(5, {"exploits"});
    add(6, {"generic"});
    add(7, {"reconnaissance"});
    add(8, {"shellcode"});
    add(9, {"worms"});
  } else {
    // Shared by KDDcup 1999 and NSL-KDD; covers the extra test-only attack
    // types of both.
    t.class_names = {"normal", "dos", "r2l", "u2r", "probe"};
    add(0, {"normal"});
    add(1, {"back", "land", "neptune", "pod", "smurf", "teardrop", "apache2",
            "mailbomb", "processtable", "udpstorm", "worm"});
    add(2, {"ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy",
            "warezclient", "warezmaster", "sendmail", "named", "snmpgetattack",
            "snmpguess", "xlock", "xsnoop", "httptunnel"});
    add(3, {"buffer_overflow", "loadmodule", "perl", "rootkit", "ps",
            "sqlattack", "xterm"});
    add(4, {"ipsweep", "nmap", "portsweep", "satan", "mscan", "saint"});
  }
  return t;
}

// Key-value taxonomy file: one "raw_label category" (or raw=category) pair
// per line, '#' comments. Class ids follow first appearance of each
// category, with "normal" forced to id 0.
inline LabelTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open taxonomy file: " + path);
  LabelTaxonomy t;
  t.class_names.push_back("normal");
  std::map<std::string, int> class_ids{{"normal", 0}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = detail::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto sep = sv.find_first_of(" \t=");
    if (sep == std::string_view::npos)
      fail(errc::bad_config, path + ":" + std::to_string(line_no) +
                                 ": expected 'raw_label category'");
    std::string raw = canonical_label(sv.substr(0, sep));
    std::string cat = canonical_label(sv.substr(sep + 1));
    if (raw.empty() || cat.empty())
      fail(errc::bad_config, path + ":" + std::to_string(line_no) +
                                 ": expected 'raw_label category'");
    auto [it, inserted] = class_ids.emplace(cat, static_cast<int>(t.class_names.size()));
    if (inserted) t.class_names.push_back(cat);
    t.raw_to_class[raw] = it->second;
  }
  bool has_normal = false;
  for (const auto& [raw, cls] : t.raw_to_class)
    if (cls == 0) has_normal = true;
  if (!has_normal)
    fail(errc::bad_config, path + ": taxonomy must map at least one raw label to 'normal'");
  return t;
}

inline int map_label(const std::string& raw, const LabelTaxonomy& taxonomy) {
  auto it = taxonomy.raw_to_class.find(canonical_label(raw));
  if (it == taxonomy.raw_to_class.end())
    fail(errc::unknown_label, "unknown label '" + raw + "'");
  return it->second;
}

namespace detail {

inline void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline double parse_numeric_field(std::string_view field, const std::string& col,
                                  std::size_t line_no) {
  auto t = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    fail(errc::numeric_parse, "line " + std::to_string(line_no) +
                                  ": non-numeric value '" + std::string(t) +
                                  "' in column " + col);
  return v;
}

}  // namespace detail

// Parses one comma-separated line. Accepted arities: the full schema width,
// the feature columns alone (unlabeled input, e.g. detect mode), or the
// feature columns followed by the label (labeled input without trailing
// ignore columns such as the NSL-KDD difficulty field).
inline FeatureRecord parse_record(std::string_view line, const Schema& schema,
                                  std::size_t line_no = 0) {
  thread_local std::vector<std::string_view> fields;
  detail::split_fields(line, fields);

  const std::size_t nfeat = schema.feature_count();
  enum class Layout { full, features_only, features_label } layout;
  if (fields.size() == schema.arity()) {
    layout = Layout::full;
  } else if (fields.size() == nfeat) {
    layout = Layout::features_only;
  } else if (fields.size() == nfeat + 1 && schema.label_column() >= 0) {
    layout = Layout::features_label;
  } else {
    fail(errc::arity_mismatch,
         "line " + std::to_string(line_no) + ": got " +
             std::to_string(fields.size()) + " fields, schema for " +
             to_string(schema.dataset_kind) + " accepts " +
             std::to_string(schema.arity()) + ", " + std::to_string(nfeat + 1) +
             " or " + std::to_string(nfeat));
  }

  FeatureRecord rec;
  rec.values.reserve(nfeat);
  std::size_t f = 0;
  for (const auto& col : schema.columns) {
    if (layout != Layout::full &&
        (col.kind == ColumnKind::ignore ||
         (col.kind == ColumnKind::label && layout == Layout::features_only)))
      continue;
    std::string_view field = fields[f++];
    switch (col.kind) {
      case ColumnKind::numeric:
        rec.values.emplace_back(detail::parse_numeric_field(field, col.name, line_no));
        break;
      case ColumnKind::categorical:
        rec.values.emplace_back(std::string(detail::trim(field)));
        break;
      case ColumnKind::label:
        rec.raw_label = std::string(detail::trim(field));
        rec.has_label = true;
        break;
      case ColumnKind::ignore:
        break;
    }
  }
  return rec;
}

// Inverse of parse_record for the feature+label layout; numerics use
// shortest round-trip formatting so parse(to_line(r)) == r.
inline std::string to_line(const FeatureRecord& rec, const Schema& schema) {
  std::string out;
  std::size_t v = 0;
  bool first = true;
  for (const auto& col : schema.columns) {
    if (col.kind == ColumnKind::numeric || col.kind == ColumnKind::categorical) {
      if (!first) out += ',';
      first = false;
      if (col.kind == ColumnKind::numeric) {
        char buf[32];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf,
                                       std::get<double>(rec.values[v]));
        out.append(buf, ptr);
      } else {
        out += std::get<std::string>(rec.values[v]);
      }
      ++v;
    }
  }
  if (rec.has_label) {
    out += ',';
    out += rec.raw_label;
  }
  return out;
}

// Reads every record of a file. A single header line is skipped when the
// first field equals the schema's first column name (the UNSW-NB15
// partition CSVs carry one); blank lines are ignored.
inline std::vector<FeatureRecord> read_records(const std::string& path,
                                               const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open dataset file: " + path);
  std::vector<FeatureRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    if (first_content_line) {
      first_content_line = false;
      auto comma = sv.find(',');
      auto head = detail::trim(sv.substr(0, comma));
      if (!schema.columns.empty() && head == schema.columns.front().name) continue;
    }
    records.push_back(parse_record(sv, schema, line_no));
  }
  return records;
}

// Deterministic uniform subsample without replacement, preserving original
// row order. No-op when max_rows is 0 or >= the record count.
inline void subsample_records(std::vector<FeatureRecord>& records,
                              std::size_t max_rows, std::uint64_t seed) {
  if (max_rows == 0 || records.size() <= max_rows) return;
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < max_rows; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  std::vector<FeatureRecord> kept;
  kept.reserve(max_rows);
  for (std::size_t i : idx) kept.push_back(std::move(records[i]));
  records.swap(kept);
}

// Per-numeric-feature standardization statistics, in schema order.
// stddev uses the (m-1) divisor and is stored as 0 for constant columns.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Builds categorical vocabularies (distinct values, first-seen order) and
// numeric statistics from the training split, and checks that every
// training label maps through the taxonomy.
inline NormStats fit_encoder(const std::vector<FeatureRecord>& records,
                             Schema& schema, const LabelTaxonomy& taxonomy) {
  if (records.empty()) fail(errc::empty_input, "fit_encoder: no training records");

  schema.vocab.assign(schema.columns.size(), {});
  schema.vocab_index.assign(schema.columns.size(), {});

  std::size_t n_numeric = 0;
  for (const auto& c : schema.columns)
    if (c.kind == ColumnKind::numeric) ++n_numeric;

  NormStats stats;
  stats.mean.assign(n_numeric, 0.0);
  stats.stddev.assign(n_numeric, 0.0);

  const double m = static_cast<double>(records.size());
  for (const auto& rec : records) {
    if (rec.values.size() != schema.feature_count())
      fail(errc::arity_mismatch, "fit_encoder: record width does not match schema");
    if (rec.has_label) map_label(rec.raw_label, taxonomy);
    std::size_t v = 0, num = 0, col = 0;
    for (const auto& c : schema.columns) {
      if (c.kind == ColumnKind::numeric) {
        stats.mean[num++] += std::get<double>(rec.values[v++]);
      } else if (c.kind == ColumnKind::categorical) {
        const auto& s = std::get<std::string>(rec.values[v++]);
        auto& index = schema.vocab_index[col];
        if (index.emplace(s, static_cast<int>(schema.vocab[col].size())).second)
          schema.vocab[col].push_back(s);
      }
      ++col;
    }
  }
  for (double& mu : stats.mean) mu /= m;

  if (records.size() > 1) {
    std::vector<double> ss(n_numeric, 0.0);
    for (const auto& rec : records) {
      std::size_t v = 0, num = 0;
      for (const auto& c : schema.columns) {
        if (c.kind == ColumnKind::numeric) {
          const double d = std::get<double>(rec.values[v]) - stats.mean[num];
          ss[num++] += d * d;
        }
        if (c.kind == ColumnKind::numeric || c.kind == ColumnKind::categorical) ++v;
      }
    }
    for (std::size_t i = 0; i < n_numeric; ++i)
      stats.stddev[i] = std::sqrt(ss[i] / (m - 1.0));
  }
  return stats;
}

inline std::size_t encoded_width(const Schema& schema) {
  std::size_t w = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (schema.columns[c].kind == ColumnKind::numeric) ++w;
    else if (schema.columns[c].kind == ColumnKind::categorical) w += schema.vocab[c].size();
  }
  return w;
}

inline std::vector<std::string> encoded_column_names(const Schema& schema) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& col = schema.columns[c];
    if (col.kind == ColumnKind::numeric) {
      names.push_back(col.name);
    } else if (col.kind == ColumnKind::categorical) {
      for (const auto& v : schema.vocab[c]) names.push_back(col.name + "=" + v);
    }
  }
  return names;
}

// Writes one encoded row into out (length encoded_width). Numeric columns
// are z-scored with the training statistics (constant columns become 0);
// categorical columns expand to a one-hot block, all zeros for values not
// in the training vocabulary.
inline void encode_features(const FeatureRecord& rec, const Schema& schema,
                            const NormStats& stats, Eigen::Ref<Eigen::VectorXd> out) {
  if (rec.values.size() != schema.feature_count())
    fail(errc::arity_mismatch, "encode: record width does not match schema");
  std::size_t v = 0, num = 0, w = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& col = schema.columns[c];
    if (col.kind == ColumnKind::numeric) {
      const double sd = stats.stddev[num];
      const double x = std::get<double>(rec.values[v]);
      out[static_cast<Eigen::Index>(w)] = sd > 0.0 ? (x - stats.mean[num]) / sd : 0.0;
      ++num;
      ++v;
      ++w;
    } else if (col.kind == ColumnKind::categorical) {
      const std::size_t block = schema.vocab[c].size();
      out.segment(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(block)).setZero();
      const auto& s = std::get<std::string>(rec.values[v]);
      auto it = schema.vocab_index[c].find(s);
      if (it != schema.vocab_index[c].end())
        out[static_cast<Eigen::Index>(w + it->second)] = 1.0;
      ++v;
      w += block;
    }
  }
}

// Dense encoded dataset with the label column mapped through the taxonomy.
struct EncodedMatrix {
  Eigen::MatrixXd data;
  std::vector<std::string> column_names;
  NormStats norm_stats;
  Eigen::VectorXi label_ids;
};

inline EncodedMatrix encode(const std::vector<FeatureRecord>& records,
                            const Schema& schema, const NormStats& stats,
                            const LabelTaxonomy& taxonomy) {
  EncodedMatrix m;
  const auto w = static_cast<Eigen::Index>(encoded_width(schema));
  m.data.resize(static_cast<Eigen::Index>(records.size()), w);
  m.label_ids.resize(static_cast<Eigen::Index>(records.size()));
  m.column_names = encoded_column_names(schema);
  m.norm_stats = stats;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Eigen::VectorXd row(w);
    encode_features(records[i], schema, stats, row);
    m.data.row(static_cast<Eigen::Index>(i)) = row.transpose();
    if (!records[i].has_label)
      fail(errc::unknown_label,
           "record " + std::to_string(i + 1) + " carries no label");
    m.label_ids[static_cast<Eigen::Index>(i)] = map_label(records[i].raw_label, taxonomy);
  }
  return m;
}

}  // namespace deepids
