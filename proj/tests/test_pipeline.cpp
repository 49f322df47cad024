#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepids/pipeline.hpp"
#include "support/checks.hpp"
#include "support/synth.hpp"

using namespace deepids;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DEEPIDS_CLI_BIN) + " " + args;
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

synth::Options test_corpus_options() {
  synth::Options opt;
  opt.rows_per_class = 60;
  opt.seed = 1234;
  return opt;
}

// One real training run shared by the eval / detect / project tests.
struct Trained {
  fs::path dir;
  fs::path train_csv;
  fs::path test_csv;
  fs::path model;
  RunConfig cfg;
  TrainOutcome outcome;
};

const Trained& trained() {
  static const Trained fixture = [] {
    Trained t;
    t.dir = synth::scratch_dir("pipeline");
    t.train_csv = t.dir / "train.csv";
    t.test_csv = t.dir / "test.csv";
    t.model = t.dir / "model.bin";

    synth::Options train_opt;
    train_opt.rows_per_class = 150;
    train_opt.seed = 7;
    synth::write_lines(t.train_csv, synth::kdd_lines(train_opt));
    synth::write_lines(t.test_csv, synth::kdd_lines(test_corpus_options()));

    t.cfg.dataset = DatasetKind::kdd99;
    t.cfg.dataset_set = true;
    t.cfg.train_path = t.train_csv.string();
    t.cfg.model_path = t.model.string();
    t.cfg.layers = {16, 8};
    t.cfg.pretrain_lr = 0.1;
    t.cfg.pretrain_epochs = 10;
    t.cfg.lr = 1.0;
    t.cfg.epochs = 300;
    t.cfg.batch = 32;

    std::ostringstream console;
    t.outcome = cmd_train(t.cfg, console);
    return t;
  }();
  return fixture;
}

}  // namespace

TEST_CASE("training on synthetic traffic yields an accurate detector") {
  const Trained& t = trained();
  CHECK(t.outcome.pca_rank >= 3);
  CHECK(t.outcome.accuracy_valid);
  CHECK(t.outcome.final_accuracy >= 0.9);
  CHECK(fs::exists(t.model));

  const std::string train_report = slurp(t.outcome.report_path);
  CHECK(train_report.find("final_train_accuracy") != std::string::npos);
  CHECK(train_report.find("pca_rank") != std::string::npos);
  CHECK(train_report.find("fine_tune epoch 299 ") != std::string::npos);

  RunConfig ev = t.cfg;
  ev.test_path = t.test_csv.string();
  ev.report_path = (t.dir / "eval.jsonl").string();
  fs::remove(ev.report_path);
  std::ostringstream console;
  const metrics::MetricsReport rep = cmd_eval(ev, console);
  CHECK(rep.acc_standard >= 0.9);
  CHECK(rep.acc >= 0.9);
  CHECK(rep.cm.total() == 240);
  CHECK(console.str().find("acc ") != std::string::npos);

  const auto report_lines = lines_of(slurp(ev.report_path));
  REQUIRE(report_lines.size() == 1);
  const nlohmann::json j = nlohmann::json::parse(report_lines[0]);
  CHECK(j["command"] == "eval");
  CHECK(j["dataset"] == "kdd99");
  CHECK(j["records"] == 240);
  REQUIRE(j["layers"].size() == 4);
  CHECK(j["layers"][0] == t.outcome.pca_rank);
  CHECK(j["layers"][1] == 16);
  CHECK(j["layers"][2] == 8);
  CHECK(j["layers"][3] == 5);
  CHECK(j["acc"] == rep.acc);
}

TEST_CASE("evaluating the training split reproduces the reported accuracy") {
  const Trained& t = trained();
  RunConfig ev = t.cfg;
  ev.test_path = t.train_csv.string();
  std::ostringstream console;
  const metrics::MetricsReport rep = cmd_eval(ev, console);
  CHECK(rep.acc_standard == t.outcome.final_accuracy);
}

TEST_CASE("identical configurations produce byte-identical models") {
  const auto dir = synth::scratch_dir("pipeline_determinism");
  synth::Options opt;
  opt.rows_per_class = 40;
  opt.seed = 21;
  const auto train_csv = dir / "train.csv";
  synth::write_lines(train_csv, synth::kdd_lines(opt));

  RunConfig cfg;
  cfg.dataset = DatasetKind::kdd99;
  cfg.dataset_set = true;
  cfg.train_path = train_csv.string();
  cfg.layers = {8, 4};
  cfg.pretrain_epochs = 3;
  cfg.epochs = 6;
  cfg.batch = 32;

  std::ostringstream sink;
  cfg.model_path = (dir / "a.bin").string();
  cmd_train(cfg, sink);
  cfg.model_path = (dir / "b.bin").string();
  cmd_train(cfg, sink);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));

  cfg.model_path = (dir / "c.bin").string();
  cfg.seed = 43;
  cmd_train(cfg, sink);
  CHECK(slurp(dir / "a.bin") != slurp(dir / "c.bin"));
}

TEST_CASE("a dataset flag that contradicts the model is refused") {
  const Trained& t = trained();
  RunConfig ev = t.cfg;
  ev.test_path = t.test_csv.string();
  ev.dataset = DatasetKind::nslkdd;
  ev.dataset_set = true;
  std::ostringstream sink;
  REQUIRE_FAILS_WITH(cmd_eval(ev, sink), errc::schema_mismatch);

  std::istringstream empty_in;
  REQUIRE_FAILS_WITH(cmd_detect(ev, empty_in, sink, sink), errc::schema_mismatch);
}

TEST_CASE("detect reproduces eval's predictions with and without labels") {
  const Trained& t = trained();

  RunConfig ev = t.cfg;
  ev.test_path = t.test_csv.string();
  std::vector<int> predictions;
  std::ostringstream sink;
  cmd_eval(ev, sink, &predictions);
  REQUIRE(predictions.size() == 240);

  RunConfig det = t.cfg;
  det.report_path = (t.dir / "suspicious.jsonl").string();
  fs::remove(det.report_path);

  std::istringstream labeled(slurp(t.test_csv));
  std::ostringstream labeled_verdicts, diag;
  const DetectSummary summary = cmd_detect(det, labeled, labeled_verdicts, diag);
  CHECK(summary.processed == 240);
  CHECK(summary.skipped == 0);

  const auto bare_lines = synth::strip_labels(synth::kdd_lines(test_corpus_options()));
  std::istringstream bare(join_lines(bare_lines));
  std::ostringstream bare_verdicts, diag2;
  RunConfig det_plain = t.cfg;
  cmd_detect(det_plain, bare, bare_verdicts, diag2);
  CHECK(labeled_verdicts.str() == bare_verdicts.str());

  const LabelTaxonomy taxonomy = builtin_taxonomy(DatasetKind::kdd99);
  const auto verdict_lines = lines_of(labeled_verdicts.str());
  REQUIRE(verdict_lines.size() == 240);
  std::uint64_t suspicious = 0;
  for (std::size_t i = 0; i < verdict_lines.size(); ++i) {
    const nlohmann::json j = nlohmann::json::parse(verdict_lines[i]);
    CHECK(j["index"] == i);
    const int cls = predictions[i];
    CHECK(j["class"] == taxonomy.class_names[static_cast<std::size_t>(cls)]);
    CHECK(j["disposition"] == (cls == 0 ? "normal" : "suspicious"));
    REQUIRE(j["probabilities"].size() == 5);
    double sum = 0.0;
    for (const auto& p : j["probabilities"]) sum += p.get<double>();
    CHECK(std::abs(sum - 1.0) < 1e-9);
    if (cls != 0) ++suspicious;
  }
  CHECK(summary.suspicious == suspicious);

  const auto flagged = lines_of(slurp(det.report_path));
  REQUIRE(flagged.size() == suspicious);
  for (const auto& line : flagged)
    CHECK(nlohmann::json::parse(line)["disposition"] == "suspicious");
}

TEST_CASE("detect skips malformed lines and keeps the stream alive") {
  const Trained& t = trained();
  auto rows = synth::strip_labels(synth::kdd_lines(test_corpus_options()));
  rows.resize(3);
  std::string broken = rows[2];
  broken[0] = 'x';

  const std::string input = rows[0] + "\n" + "\n" + "not,a,record\n" + rows[1] + "\n" +
                            broken + "\n";
  std::istringstream in(input);
  std::ostringstream verdicts, diag;
  const DetectSummary summary = cmd_detect(t.cfg, in, verdicts, diag);
  CHECK(summary.processed == 2);
  CHECK(summary.skipped == 2);

  const auto verdict_lines = lines_of(verdicts.str());
  REQUIRE(verdict_lines.size() == 2);
  CHECK(nlohmann::json::parse(verdict_lines[0])["index"] == 0);
  CHECK(nlohmann::json::parse(verdict_lines[1])["index"] == 1);

  const std::string log = diag.str();
  CHECK(log.find("line 3") != std::string::npos);
  CHECK(log.find("line 5") != std::string::npos);
  CHECK(log.find("2 records, ") != std::string::npos);
  CHECK(log.find("2 malformed skipped") != std::string::npos);
}

TEST_CASE("projection export writes three components per record") {
  const Trained& t = trained();

  RunConfig pr = t.cfg;
  pr.input_path = t.test_csv.string();
  std::ostringstream out;
  const std::uint64_t rows = cmd_project(pr, out);
  CHECK(rows == 240);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 241);
  CHECK(lines[0] == "pc1,pc2,pc3,class_id,class_name");

  // every data line carries a known class name; fields parse as numbers
  const LabelTaxonomy taxonomy = builtin_taxonomy(DatasetKind::kdd99);
  std::istringstream fields(lines[1]);
  std::string pc1, pc2, pc3, class_id, class_name;
  std::getline(fields, pc1, ',');
  std::getline(fields, pc2, ',');
  std::getline(fields, pc3, ',');
  std::getline(fields, class_id, ',');
  std::getline(fields, class_name, ',');
  CHECK(std::isfinite(std::stod(pc1)));
  CHECK(std::isfinite(std::stod(pc2)));
  CHECK(std::isfinite(std::stod(pc3)));
  CHECK(std::stoi(class_id) >= 0);
  bool known = false;
  for (const auto& name : taxonomy.class_names) known = known || name == class_name;
  CHECK(known);
}

TEST_CASE("projection handles unlabeled records and empty input") {
  const Trained& t = trained();
  const auto bare_csv = t.dir / "bare.csv";
  synth::write_lines(bare_csv, synth::strip_labels(synth::kdd_lines(test_corpus_options())));

  RunConfig pr = t.cfg;
  pr.input_path = bare_csv.string();
  std::ostringstream out;
  CHECK(cmd_project(pr, out) == 240);
  const auto lines = lines_of(out.str());
  REQUIRE(lines[1].size() > 4);
  CHECK(lines[1].substr(lines[1].size() - 4) == ",-1,");  // no class id, empty name

  const auto empty_csv = t.dir / "empty.csv";
  synth::write_lines(empty_csv, {});
  pr.input_path = empty_csv.string();
  std::ostringstream out2;
  CHECK(cmd_project(pr, out2) == 0);
  CHECK(lines_of(out2.str()).size() == 1);
}

TEST_CASE("projection can fit a basis directly on the input") {
  const Trained& t = trained();
  RunConfig pr;
  pr.dataset = DatasetKind::kdd99;
  pr.train_path = t.train_csv.string();
  std::ostringstream out;
  CHECK(cmd_project(pr, out) == 600);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 601);
  CHECK(lines[0] == "pc1,pc2,pc3,class_id,class_name");

  RunConfig missing;
  std::ostringstream sink;
  REQUIRE_FAILS_WITH(cmd_project(missing, sink), errc::bad_config);
  RunConfig no_input = t.cfg;  // model set, no --input
  REQUIRE_FAILS_WITH(cmd_project(no_input, sink), errc::bad_config);
}

TEST_CASE("config files parse flag names, comments, and both separators") {
  const auto dir = synth::scratch_dir("pipeline_config");
  const auto path = dir / "run.conf";
  {
    std::ofstream out(path, std::ios::trunc);
    out << "# training setup\n";
    out << "dataset kdd99\n";
    out << "epochs=2\n";
    out << "alpha 0.9\n";
    out << "layers 8,4\n";
    out << "\n";
    out << "seed\t99\n";
  }

  const auto pairs = read_config_file(path.string());
  REQUIRE(pairs.size() == 5);
  CHECK(pairs[0] == std::pair<std::string, std::string>{"dataset", "kdd99"});
  CHECK(pairs[1] == std::pair<std::string, std::string>{"epochs", "2"});

  RunConfig cfg;
  for (const auto& [key, value] : pairs) apply_option(cfg, key, value);
  CHECK(cfg.dataset == DatasetKind::kdd99);
  CHECK(cfg.dataset_set);
  CHECK(cfg.epochs == 2);
  CHECK(cfg.alpha == 0.9);
  CHECK(cfg.layers == std::vector<int>{8, 4});
  CHECK(cfg.seed == 99);

  REQUIRE_FAILS_WITH(read_config_file((dir / "absent.conf").string()), errc::io_error);
  const auto bad = dir / "bad.conf";
  {
    std::ofstream out(bad, std::ios::trunc);
    out << "justakey\n";
  }
  REQUIRE_FAILS_WITH(read_config_file(bad.string()), errc::bad_config);
}

TEST_CASE("option application rejects unknown keys and bad values") {
  RunConfig cfg;
  REQUIRE_FAILS_WITH(apply_option(cfg, "bogus", "1"), errc::bad_config);
  REQUIRE_FAILS_WITH(apply_option(cfg, "epochs", "abc"), errc::bad_config);
  REQUIRE_FAILS_WITH(apply_option(cfg, "alpha", "fast"), errc::bad_config);
  REQUIRE_FAILS_WITH(apply_option(cfg, "dataset", "netflow"), errc::bad_config);
  REQUIRE_FAILS_WITH(apply_option(cfg, "config", "more.conf"), errc::bad_config);

  CHECK(parse_layer_list("64,32") == std::vector<int>{64, 32});
  CHECK(parse_layer_list(" 10 , 5 ") == std::vector<int>{10, 5});
  REQUIRE_FAILS_WITH(parse_layer_list("64,0"), errc::bad_config);
  REQUIRE_FAILS_WITH(parse_layer_list("sixty"), errc::bad_config);
  REQUIRE_FAILS_WITH(parse_layer_list(""), errc::bad_config);
}

TEST_CASE("cli maps errors onto its documented exit codes") {
  const auto dir = synth::scratch_dir("cli");
  synth::Options opt;
  opt.rows_per_class = 12;
  opt.seed = 3;
  const auto train_csv = dir / "train.csv";
  synth::write_lines(train_csv, synth::kdd_lines(opt));
  const auto model = dir / "model.bin";
  const std::string quiet = " > /dev/null 2>&1";

  CHECK(run_cli("--help > /dev/null") == 0);
  CHECK(run_cli(quiet) == 1);              // no subcommand
  CHECK(run_cli("--nonsense" + quiet) == 1);

  const std::string train_args = "train --dataset kdd99 --train " + train_csv.string() +
                                 " --model " + model.string() +
                                 " --layers 4 --pretrain-epochs 1 --epochs 2 --batch 16";
  CHECK(run_cli(train_args + quiet) == 0);
  REQUIRE(fs::exists(model));

  CHECK(run_cli("eval --model " + model.string() + " --test " + train_csv.string() + quiet) == 0);
  CHECK(run_cli("eval --model " + model.string() + quiet) == 1);  // missing --test
  CHECK(run_cli("train --dataset netflow --train x --model y" + quiet) == 1);
  CHECK(run_cli("train --dataset kdd99 --train /nonexistent.csv --model " +
                (dir / "m2.bin").string() + quiet) == 2);
  CHECK(run_cli("eval --model /nonexistent.bin --test " + train_csv.string() + quiet) == 3);

  const auto garbage = dir / "garbage.bin";
  {
    std::ofstream out(garbage, std::ios::binary | std::ios::trunc);
    out << "this is not a model file, not even close";
  }
  CHECK(run_cli("eval --model " + garbage.string() + " --test " + train_csv.string() + quiet) == 3);

  const auto bare_csv = dir / "bare.csv";
  synth::write_lines(bare_csv, synth::strip_labels(synth::kdd_lines(opt)));
  const auto verdicts = dir / "verdicts.jsonl";
  CHECK(run_cli("detect --model " + model.string() + " --input " + bare_csv.string() +
                " --out " + verdicts.string() + " 2> /dev/null") == 0);
  CHECK(lines_of(slurp(verdicts)).size() == 48);

  // stdin is the default input stream
  CHECK(run_cli("detect --model " + model.string() + " < " + bare_csv.string() + quiet) == 0);
}

TEST_CASE("cli flags override config file entries") {
  const auto dir = synth::scratch_dir("cli_config");
  synth::Options opt;
  opt.rows_per_class = 12;
  opt.seed = 3;
  const auto train_csv = dir / "train.csv";
  synth::write_lines(train_csv, synth::kdd_lines(opt));

  const auto conf = dir / "run.conf";
  {
    std::ofstream out(conf, std::ios::trunc);
    out << "dataset kdd99\n";
    out << "train " << train_csv.string() << "\n";
    out << "layers 4\n";
    out << "pretrain-epochs 1\n";
    out << "epochs 5\n";
    out << "batch 16\n";
  }
  const std::string quiet = " > /dev/null 2>&1";

  const auto model_a = dir / "a.bin";
  CHECK(run_cli("train --config " + conf.string() + " --model " + model_a.string() + quiet) == 0);
  auto lines = lines_of(slurp(model_a.string() + ".train.txt"));
  CHECK(std::count(lines.begin(), lines.end(), "epochs 5") == 1);

  const auto model_b = dir / "b.bin";
  CHECK(run_cli("train --config " + conf.string() + " --model " + model_b.string() +
                " --epochs 1" + quiet) == 0);
  lines = lines_of(slurp(model_b.string() + ".train.txt"));
  CHECK(std::count(lines.begin(), lines.end(), "epochs 1") == 1);
  CHECK(std::count(lines.begin(), lines.end(), "epochs 5") == 0);
}
