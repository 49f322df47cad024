// Command layer: offline training and evaluation, online stream detection
// with normal-vs-suspicious routing, and the 3-component projection export.
// Command functions take streams so they can be driven from tests; path
// handling and exit codes live in the CLI binary.
#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deepids/dataset.hpp"
#include "deepids/dbn.hpp"
#include "deepids/error.hpp"
#include "deepids/metrics.hpp"
#include "deepids/model_io.hpp"
#include "deepids/pca.hpp"
#include "deepids/rbm.hpp"

namespace deepids {

struct RunConfig {
  DatasetKind dataset = DatasetKind::nslkdd;
  bool dataset_set = false;  // true when the flag or config key was given
  std::string train_path;
  std::string test_path;
  std::string input_path;
  std::string model_path;
  std::string report_path;
  std::string out_path;
  std::string taxonomy_path;

  double alpha = 0.95;
  std::vector<int> layers = {64, 32};
  double lr = 0.01;  // fine-tune learning rate
  int cd_k = 1;
  int epochs = 30;  // fine-tune epochs
  int batch = 128;
  std::uint64_t seed = 42;
  double pretrain_lr = 0.01;
  int pretrain_epochs = 10;
  std::uint64_t max_train_rows = 0;  // 0 = use every row
};

inline std::vector<int> parse_layer_list(std::string_view text) {
  std::vector<int> layers;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(',', start);
    const auto piece =
        detail::trim(text.substr(start, pos == std::string_view::npos ? text.size() - start
                                                                      : pos - start));
    int v = 0;
    auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), v);
    if (ec != std::errc{} || ptr != piece.data() + piece.size() || v < 1)
      fail(errc::bad_config, "bad layer list entry '" + std::string(piece) +
                                 "', expected positive integers like 64,32");
    layers.push_back(v);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (layers.empty()) fail(errc::bad_config, "layer list is empty");
  return layers;
}

// Flat key-value config text: one "key value" (or key=value) pair per line,
// keys identical to the CLI flag names, '#' starts a comment line.
inline std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto sv = detail::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    const auto sep = sv.find_first_of(" \t=");
    if (sep == std::string_view::npos)
      fail(errc::bad_config,
           path + ":" + std::to_string(line_no) + ": expected 'key value'");
    pairs.emplace_back(std::string(detail::trim(sv.substr(0, sep))),
                       std::string(detail::trim(sv.substr(sep + 1))));
  }
  return pairs;
}

namespace detail {

inline double parse_double_opt(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    fail(errc::bad_config, key + ": expected a number, got '" + value + "'");
  return v;
}

template <class Int>
Int parse_int_opt(const std::string& key, const std::string& value) {
  Int v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    fail(errc::bad_config, key + ": expected an integer, got '" + value + "'");
  return v;
}

}  // namespace detail

// Applies one config-file entry; key names match the CLI flags.
inline void apply_option(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset") {
    const auto kind = dataset_kind_from_string(value);
    if (!kind) fail(errc::bad_config, "dataset: unknown kind '" + value + "'");
    cfg.dataset = *kind;
    cfg.dataset_set = true;
  } else if (key == "train") {
    cfg.train_path = value;
  } else if (key == "test") {
    cfg.test_path = value;
  } else if (key == "input") {
    cfg.input_path = value;
  } else if (key == "model") {
    cfg.model_path = value;
  } else if (key == "report") {
    cfg.report_path = value;
  } else if (key == "out") {
    cfg.out_path = value;
  } else if (key == "taxonomy") {
    cfg.taxonomy_path = value;
  } else if (key == "alpha") {
    cfg.alpha = detail::parse_double_opt(key, value);
  } else if (key == "layers") {
    cfg.layers = parse_layer_list(value);
  } else if (key == "lr") {
    cfg.lr = detail::parse_double_opt(key, value);
  } else if (key == "cd-k") {
    cfg.cd_k = detail::parse_int_opt<int>(key, value);
  } else if (key == "epochs") {
    cfg.epochs = detail::parse_int_opt<int>(key, value);
  } else if (key == "batch") {
    cfg.batch = detail::parse_int_opt<int>(key, value);
  } else if (key == "seed") {
    cfg.seed = detail::parse_int_opt<std::uint64_t>(key, value);
  } else if (key == "pretrain-lr") {
    cfg.pretrain_lr = detail::parse_double_opt(key, value);
  } else if (key == "pretrain-epochs") {
    cfg.pretrain_epochs = detail::parse_int_opt<int>(key, value);
  } else if (key == "max-train-rows") {
    cfg.max_train_rows = detail::parse_int_opt<std::uint64_t>(key, value);
  } else if (key == "config") {
    fail(errc::bad_config, "config files cannot nest further config files");
  } else {
    fail(errc::bad_config, "unknown config key '" + key + "'");
  }
}

namespace detail {

template <class F>
decltype(auto) stage(const char* name, F&& f) {
  try {
    return std::forward<F>(f)();
  } catch (const Error& e) {
    fail(e.code(), std::string(name) + ": " + e.what());
  }
}

inline LabelTaxonomy taxonomy_for(const RunConfig& cfg) {
  return cfg.taxonomy_path.empty() ? builtin_taxonomy(cfg.dataset)
                                   : load_taxonomy(cfg.taxonomy_path);
}

inline void append_number(std::string& line, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  line.append(buf, ptr);
}

}  // namespace detail

struct TrainOutcome {
  std::string report_path;
  int pca_rank = 0;
  double final_accuracy = 0.0;  // training-split fraction correct after the last epoch
  bool accuracy_valid = false;  // false when fine-tune ran zero epochs
};

// Read -> encode -> project -> pretrain -> fine-tune -> persist. The GRBM
// noise scales are set to the per-component standard deviations of the
// projected training data (sqrt of the retained eigenvalues), which is the
// standardization the Gaussian visible layer assumes.
inline TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& console) {
  if (cfg.train_path.empty()) fail(errc::bad_config, "train: --train is required");
  if (cfg.model_path.empty()) fail(errc::bad_config, "train: --model is required");

  Schema schema = build_schema(cfg.dataset);
  const LabelTaxonomy taxonomy = detail::stage("taxonomy", [&] {
    return detail::taxonomy_for(cfg);
  });

  auto records = detail::stage("read", [&] {
    auto r = read_records(cfg.train_path, schema);
    subsample_records(r, cfg.max_train_rows, cfg.seed);
    return r;
  });

  const NormStats stats = detail::stage("fit-encoder", [&] {
    return fit_encoder(records, schema, taxonomy);
  });
  const EncodedMatrix enc = detail::stage("encode", [&] {
    return encode(records, schema, stats, taxonomy);
  });
  records.clear();
  records.shrink_to_fit();

  const pca::PcaModel projection = detail::stage("pca", [&] {
    return pca::fit(enc.data, cfg.alpha);
  });
  const Eigen::MatrixXd scores = pca::transform(projection, enc.data);
  const Eigen::VectorXd sigma =
      projection.eigenvalues.head(projection.rank).cwiseSqrt();

  CdConfig cd;
  cd.learning_rate = cfg.pretrain_lr;
  cd.k = cfg.cd_k;
  cd.batch_size = cfg.batch;
  cd.epochs = cfg.pretrain_epochs;
  cd.rng_seed = cfg.seed;

  PretrainReport pre_report;
  IdsModel model;
  model.net = detail::stage("pretrain", [&] {
    return pretrain(scores, cfg.layers, sigma, taxonomy.num_classes(), cd, &pre_report);
  });

  FineTuneConfig ft;
  ft.learning_rate = cfg.lr;
  ft.epochs = cfg.epochs;
  ft.batch_size = cfg.batch;
  ft.rng_seed = cfg.seed + 1;
  const FineTuneReport ft_report = detail::stage("fine-tune", [&] {
    return fine_tune(model.net, scores, enc.label_ids, ft);
  });

  model.schema = std::move(schema);
  model.norm_stats = stats;
  model.taxonomy = taxonomy;
  model.pca = projection;
  detail::stage("save", [&] {
    save_model(model, cfg.model_path);
    return 0;
  });

  TrainOutcome outcome;
  outcome.report_path =
      cfg.report_path.empty() ? cfg.model_path + ".train.txt" : cfg.report_path;
  outcome.pca_rank = projection.rank;
  if (!ft_report.accuracy.empty()) {
    outcome.final_accuracy = ft_report.accuracy.back();
    outcome.accuracy_valid = true;
  }

  std::ofstream rep(outcome.report_path, std::ios::trunc);
  if (!rep) fail(errc::io_error, "cannot write train report: " + outcome.report_path);
  rep << "dataset " << to_string(cfg.dataset) << '\n';
  rep << "train " << cfg.train_path << '\n';
  rep << "rows " << enc.data.rows() << '\n';
  rep << "encoded_width " << enc.data.cols() << '\n';
  rep << "alpha " << cfg.alpha << '\n';
  rep << "pca_rank " << projection.rank << '\n';
  rep << "layers";
  for (int h : cfg.layers) rep << ' ' << h;
  rep << '\n';
  rep << "classes " << taxonomy.num_classes() << '\n';
  rep << "cd_k " << cfg.cd_k << '\n';
  rep << "pretrain_lr " << cfg.pretrain_lr << '\n';
  rep << "pretrain_epochs " << cfg.pretrain_epochs << '\n';
  rep << "lr " << cfg.lr << '\n';
  rep << "epochs " << cfg.epochs << '\n';
  rep << "batch " << cfg.batch << '\n';
  rep << "seed " << cfg.seed << '\n';
  rep.precision(17);
  for (std::size_t l = 0; l < pre_report.layer_recon.size(); ++l) {
    rep << "pretrain_recon layer " << l;
    for (double e : pre_report.layer_recon[l]) rep << ' ' << e;
    rep << '\n';
  }
  for (std::size_t e = 0; e < ft_report.loss.size(); ++e)
    rep << "fine_tune epoch " << e << " loss " << ft_report.loss[e] << " acc "
        << ft_report.accuracy[e] << '\n';
  if (outcome.accuracy_valid)
    rep << "final_train_accuracy " << outcome.final_accuracy << '\n';
  rep.flush();
  if (!rep) fail(errc::io_error, "failed writing train report: " + outcome.report_path);

  console << "trained " << to_string(cfg.dataset) << ": " << enc.data.rows()
          << " rows, encoded width " << enc.data.cols() << ", pca rank "
          << projection.rank << ", layers";
  for (int h : cfg.layers) console << ' ' << h;
  console << ", classes " << taxonomy.num_classes() << '\n';
  if (outcome.accuracy_valid) {
    console.precision(6);
    console << "final training accuracy " << outcome.final_accuracy << '\n';
  }
  console << "model written to " << cfg.model_path << '\n';
  console << "report written to " << outcome.report_path << '\n';
  return outcome;
}

namespace detail {

// Shared by eval and detect so both produce the same scores for a record.
struct ScoringContext {
  const IdsModel& model;
  Eigen::VectorXd encoded;
  Eigen::VectorXd projected;
  ForwardWorkspace ws;

  explicit ScoringContext(const IdsModel& m)
      : model(m),
        encoded(static_cast<Eigen::Index>(encoded_width(m.schema))),
        projected(m.pca.rank) {
    ws.resize_for(m.net);
  }

  // Fills ws.probs; returns the predicted class id.
  int score(const FeatureRecord& rec) {
    encode_features(rec, model.schema, model.norm_stats, encoded);
    pca::transform_row(model.pca, encoded, projected);
    return predict_row(model.net, projected, ws);
  }
};

inline nlohmann::json ratio_json(const metrics::Ratio& r) {
  return metrics::to_json(r);
}

}  // namespace detail

// Scores a labeled split with a stored model. The text report goes to the
// console stream; a single machine-readable line per run is appended to the
// report file when one is configured. predictions, when non-null, receives
// the per-record class ids in input order.
inline metrics::MetricsReport cmd_eval(const RunConfig& cfg, std::ostream& console,
                                       std::vector<int>* predictions = nullptr) {
  if (cfg.model_path.empty()) fail(errc::bad_config, "eval: --model is required");
  if (cfg.test_path.empty()) fail(errc::bad_config, "eval: --test is required");

  const IdsModel model = detail::stage("load-model", [&] {
    return load_model(cfg.model_path);
  });
  if (cfg.dataset_set && cfg.dataset != model.schema.dataset_kind)
    fail(errc::schema_mismatch,
         std::string("model was trained for ") + to_string(model.schema.dataset_kind) +
             " but --dataset says " + to_string(cfg.dataset));

  const auto records = detail::stage("read", [&] {
    return read_records(cfg.test_path, model.schema);
  });
  if (records.empty()) fail(errc::empty_input, "eval: no records in " + cfg.test_path);

  detail::ScoringContext ctx(model);
  Eigen::VectorXi actual(static_cast<Eigen::Index>(records.size()));
  Eigen::VectorXi predicted(static_cast<Eigen::Index>(records.size()));
  detail::stage("score", [&] {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!records[i].has_label)
        fail(errc::unknown_label, "record " + std::to_string(i + 1) + " carries no label");
      actual[static_cast<Eigen::Index>(i)] = map_label(records[i].raw_label, model.taxonomy);
      predicted[static_cast<Eigen::Index>(i)] = ctx.score(records[i]);
    }
    return 0;
  });

  if (predictions)
    predictions->assign(predicted.data(), predicted.data() + predicted.size());

  const metrics::MetricsReport report =
      metrics::compute_metrics(actual, predicted, model.taxonomy.class_names);
  console.precision(6);
  metrics::write_text(console, report);

  if (!cfg.report_path.empty()) {
    nlohmann::json j;
    j["command"] = "eval";
    j["dataset"] = to_string(model.schema.dataset_kind);
    j["model"] = cfg.model_path;
    j["test"] = cfg.test_path;
    nlohmann::json dims = nlohmann::json::array();
    dims.push_back(model.net.input_dim());
    dims.push_back(model.net.grbm.W.cols());
    for (const auto& r : model.net.rbms) dims.push_back(r.W.cols());
    dims.push_back(model.net.num_classes());
    j["layers"] = std::move(dims);
    j["records"] = report.cm.total();
    j["acc"] = report.acc;
    j["acc_standard"] = report.acc_standard;
    j["ppv"] = detail::ratio_json(report.ppv);
    j["tpr"] = detail::ratio_json(report.tpr);
    std::ofstream rep(cfg.report_path, std::ios::app);
    if (!rep) fail(errc::io_error, "cannot append to report file: " + cfg.report_path);
    rep << j.dump() << '\n';
    if (!rep) fail(errc::io_error, "failed writing report file: " + cfg.report_path);
  }
  return report;
}

struct DetectSummary {
  std::uint64_t processed = 0;
  std::uint64_t suspicious = 0;
  std::uint64_t skipped = 0;
};

// Online loop: one verdict object per input record, in input order, to the
// verdict stream. Suspicious verdicts are additionally appended to the
// report file (the handoff to security control). Malformed lines are logged
// to the diagnostic stream, counted, and never abort the stream. Labels in
// the input, if present, are ignored.
inline DetectSummary cmd_detect(const RunConfig& cfg, std::istream& input,
                                std::ostream& verdicts, std::ostream& diag) {
  if (cfg.model_path.empty()) fail(errc::bad_config, "detect: --model is required");
  const IdsModel model = detail::stage("load-model", [&] {
    return load_model(cfg.model_path);
  });
  if (cfg.dataset_set && cfg.dataset != model.schema.dataset_kind)
    fail(errc::schema_mismatch,
         std::string("model was trained for ") + to_string(model.schema.dataset_kind) +
             " but --dataset says " + to_string(cfg.dataset));

  std::ofstream report;
  if (!cfg.report_path.empty()) {
    report.open(cfg.report_path, std::ios::app);
    if (!report) fail(errc::io_error, "cannot append to report file: " + cfg.report_path);
  }

  detail::ScoringContext ctx(model);
  DetectSummary summary;
  std::vector<double> probs(static_cast<std::size_t>(model.net.num_classes()));
  std::string line;
  std::size_t line_no = 0;
  bool first_content_line = true;
  while (std::getline(input, line)) {
    ++line_no;
    const auto sv = detail::trim(line);
    if (sv.empty()) continue;
    if (first_content_line) {
      first_content_line = false;
      const auto head = detail::trim(sv.substr(0, sv.find(',')));
      if (!model.schema.columns.empty() && head == model.schema.columns.front().name)
        continue;
    }
    int cls = 0;
    try {
      const FeatureRecord rec = parse_record(sv, model.schema, line_no);
      cls = ctx.score(rec);
    } catch (const Error& e) {
      diag << "detect: line " << line_no << ": " << e.what() << '\n';
      ++summary.skipped;
      continue;
    }
    for (int c = 0; c < model.net.num_classes(); ++c)
      probs[static_cast<std::size_t>(c)] = ctx.ws.probs[c];
    nlohmann::json j;
    j["index"] = summary.processed;
    j["class"] = model.taxonomy.class_names[static_cast<std::size_t>(cls)];
    j["disposition"] = cls == 0 ? "normal" : "suspicious";
    j["probabilities"] = probs;
    const std::string out_line = j.dump();
    verdicts << out_line << '\n';
    if (cls != 0) {
      ++summary.suspicious;
      if (report.is_open()) report << out_line << '\n';
    }
    ++summary.processed;
  }
  if (report.is_open()) {
    report.flush();
    if (!report) fail(errc::io_error, "failed writing report file: " + cfg.report_path);
  }
  diag << "detect: " << summary.processed << " records, " << summary.suspicious
       << " suspicious, " << summary.skipped << " malformed skipped\n";
  return summary;
}

// First three principal components per record, as csv for plotting. With a
// model, records are projected through its stored encoder and basis; without
// one, an encoder and a full-rank basis are fitted on the input itself.
inline std::uint64_t cmd_project(const RunConfig& cfg, std::ostream& out) {
  std::vector<FeatureRecord> records;
  Schema schema;
  NormStats stats;
  LabelTaxonomy taxonomy;
  pca::PcaModel projection;

  if (!cfg.model_path.empty()) {
    if (cfg.input_path.empty()) fail(errc::bad_config, "project: --input is required");
    IdsModel model = detail::stage("load-model", [&] {
      return load_model(cfg.model_path);
    });
    if (cfg.dataset_set && cfg.dataset != model.schema.dataset_kind)
      fail(errc::schema_mismatch,
           std::string("model was trained for ") + to_string(model.schema.dataset_kind) +
               " but --dataset says " + to_string(cfg.dataset));
    records = detail::stage("read", [&] {
      return read_records(cfg.input_path, model.schema);
    });
    schema = std::move(model.schema);
    stats = std::move(model.norm_stats);
    taxonomy = std::move(model.taxonomy);
    projection = std::move(model.pca);
  } else {
    const std::string& path = cfg.input_path.empty() ? cfg.train_path : cfg.input_path;
    if (path.empty())
      fail(errc::bad_config, "project: either --model with --input, or --train, is required");
    schema = build_schema(cfg.dataset);
    taxonomy = detail::stage("taxonomy", [&] { return detail::taxonomy_for(cfg); });
    records = detail::stage("read", [&] { return read_records(path, schema); });
    stats = detail::stage("fit-encoder", [&] {
      return fit_encoder(records, schema, taxonomy);
    });
    Eigen::MatrixXd data(static_cast<Eigen::Index>(records.size()),
                         static_cast<Eigen::Index>(encoded_width(schema)));
    Eigen::VectorXd row(data.cols());
    for (std::size_t i = 0; i < records.size(); ++i) {
      encode_features(records[i], schema, stats, row);
      data.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    // Full variance retention: the plot wants the leading components even
    // when a training run would have kept fewer.
    projection = detail::stage("pca", [&] { return pca::fit(data, 1.0); });
  }

  out << "pc1,pc2,pc3,class_id,class_name\n";
  Eigen::VectorXd encoded(static_cast<Eigen::Index>(encoded_width(schema)));
  std::uint64_t rows = 0;
  std::string line;
  for (const auto& rec : records) {
    encode_features(rec, schema, stats, encoded);
    const Eigen::Vector3d p = pca::project3(projection, encoded);
    int class_id = -1;
    std::string_view class_name;
    if (rec.has_label) {
      class_id = map_label(rec.raw_label, taxonomy);
      class_name = taxonomy.class_names[static_cast<std::size_t>(class_id)];
    }
    line.clear();
    detail::append_number(line, p[0]);
    line += ',';
    detail::append_number(line, p[1]);
    line += ',';
    detail::append_number(line, p[2]);
    line += ',';
    line += std::to_string(class_id);
    line += ',';
    line += class_name;
    out << line << '\n';
    ++rows;
  }
  if (!out) fail(errc::io_error, "failed writing projection output");
  return rows;
}

}  // namespace deepids
