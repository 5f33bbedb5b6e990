// SPDX-License-Identifier: Apache-2.0
//
// moelab: train-teacher | compress | calibrate | analyze | report
//
// Config is a single JSON file; command-line flags override individual
// fields. Exit codes: 0 success, 2 usage/config error, 3 numerical failure.

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moelab/common.hpp"
#include "moelab/compress.hpp"
#include "moelab/data.hpp"
#include "moelab/diagnostics.hpp"
#include "moelab/grad.hpp"
#include "moelab/kd.hpp"
#include "moelab/kernels.hpp"
#include "moelab/model.hpp"
#include "moelab/scenario.hpp"
#include "moelab/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moelab;

namespace {

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("MOELAB_LOG");
    if (!env || std::strcmp(env, "info") == 0) return LogLevel::info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::error;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[debug] " << msg << "\n";
}

struct TrainSection {
  std::size_t steps = 200;
  double lr = 1e-3;
  std::size_t batch_size = 8;
};

struct CompressionSection {
  std::string method = "prune";
  double retention = 0.625;
  double rank_ratio = 0.5;
  std::size_t target_count = 0;
};

struct RunConfig {
  ModelConfig model;
  CorpusConfig corpus;
  KDConfig kd;
  TrainSection train;
  CompressionSection compression;
  std::string output_dir = "out";
};

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " +
                                e.what());
  }
  return j;
}

RunConfig load_run_config(const std::string& path) {
  json j = load_json_file(path);
  RunConfig c;
  if (j.contains("model")) {
    const json& m = j["model"];
    c.model.vocab_size = m.value("vocab_size", std::size_t{0});
    c.model.d_model = m.value("d_model", std::size_t{0});
    c.model.d_ff = m.value("d_ff", std::size_t{0});
    c.model.n_layers = m.value("n_layers", std::size_t{0});
    c.model.n_experts = m.value("n_experts", std::size_t{0});
    c.model.top_k = m.value("top_k", std::size_t{0});
    c.model.seed = m.value("seed", std::uint64_t{0});
  }
  if (j.contains("corpus")) {
    const json& m = j["corpus"];
    c.corpus.vocab_size = m.value("vocab_size", c.model.vocab_size);
    c.corpus.seq_len = m.value("seq_len", std::size_t{32});
    c.corpus.n_sequences = m.value("n_sequences", std::size_t{64});
    c.corpus.markov_order = m.value("markov_order", std::size_t{1});
    c.corpus.seed = m.value("seed", c.model.seed);
    c.corpus.pad_fraction = m.value("pad_fraction", 0.0);
  } else {
    c.corpus.vocab_size = c.model.vocab_size;
    c.corpus.seq_len = 32;
    c.corpus.n_sequences = 64;
    c.corpus.seed = c.model.seed;
  }
  if (j.contains("kd")) {
    const json& m = j["kd"];
    c.kd.temperature = m.value("temperature", c.kd.temperature);
    c.kd.learning_rate = m.value("learning_rate", c.kd.learning_rate);
    c.kd.epochs = m.value("epochs", c.kd.epochs);
    c.kd.batch_size = m.value("batch_size", c.kd.batch_size);
    c.kd.grad_accum = m.value("grad_accum", c.kd.grad_accum);
    c.kd.max_seq_len = m.value("max_seq_len", c.kd.max_seq_len);
    c.kd.max_samples = m.value("max_samples", c.kd.max_samples);
    c.kd.epsilon = m.value("epsilon", c.kd.epsilon);
    c.kd.optimizer = m.value("optimizer", c.kd.optimizer);
  }
  if (j.contains("train")) {
    const json& m = j["train"];
    c.train.steps = m.value("steps", c.train.steps);
    c.train.lr = m.value("lr", c.train.lr);
    c.train.batch_size = m.value("batch_size", c.train.batch_size);
  }
  if (j.contains("compression")) {
    const json& m = j["compression"];
    c.compression.method = m.value("method", c.compression.method);
    c.compression.retention = m.value("retention", c.compression.retention);
    c.compression.rank_ratio = m.value("rank_ratio", c.compression.rank_ratio);
    c.compression.target_count =
        m.value("target_count", c.compression.target_count);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

void apply_seed(RunConfig& c, const std::optional<std::uint64_t>& seed) {
  if (!seed) return;
  c.model.seed = *seed;
  c.corpus.seed = *seed;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << body;
  if (!os) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------- commands

int cmd_train_teacher(const RunConfig& cfg) {
  cfg.model.validate();
  cfg.corpus.validate();
  fs::create_directories(cfg.output_dir);

  log_info("generating corpus (" + std::to_string(cfg.corpus.n_sequences) +
           " sequences)");
  TokenBatch corpus = generate_corpus(cfg.corpus);
  MoEModel model = init_model(cfg.model);

  log_info("training teacher for " + std::to_string(cfg.train.steps) +
           " steps");
  TeacherTrainResult result = train_teacher(model, corpus, cfg.train.steps,
                                            cfg.train.lr,
                                            cfg.train.batch_size);

  std::string log_path = cfg.output_dir + "/train_log.jsonl";
  std::string lines;
  for (std::size_t s = 0; s < result.loss_history.size(); ++s) {
    json row{{"step", s + 1}, {"ce_loss", result.loss_history[s]}};
    lines += row.dump() + "\n";
  }
  write_text(log_path, lines);
  save_checkpoint(result.model, cfg.output_dir + "/teacher.moec");
  log_info("wrote " + cfg.output_dir + "/teacher.moec");
  return 0;
}

int cmd_compress(const RunConfig& cfg, const std::string& teacher_path) {
  CompressionMethod method =
      compression_method_from_string(cfg.compression.method);
  MoEModel teacher = load_checkpoint(teacher_path);
  fs::create_directories(cfg.output_dir);

  MoEModel student;
  CompressionMap map{method, PruneMap{}};

  if (method == CompressionMethod::prune) {
    if (!(cfg.compression.retention > 0.0 && cfg.compression.retention <= 1.0))
      throw std::invalid_argument("retention must be in (0, 1]");
    CorpusConfig cc = cfg.corpus;
    cc.vocab_size = teacher.config.vocab_size;
    TokenBatch calib = generate_corpus(cc);
    auto [m, pm] = prune_experts(teacher, cfg.compression.retention, calib);
    student = std::move(m);
    map.map = std::move(pm);
  } else if (method == CompressionMethod::edit) {
    if (!(cfg.compression.rank_ratio > 0.0 && cfg.compression.rank_ratio <= 1.0))
      throw std::invalid_argument("rank_ratio must be in (0, 1]");
    auto [m, em] = edit_experts(teacher, cfg.compression.rank_ratio);
    student = std::move(m);
    map.map = std::move(em);
  } else {
    if (cfg.compression.target_count < 1)
      throw std::invalid_argument("target_count must be >= 1");
    CorpusConfig cc = cfg.corpus;
    cc.vocab_size = teacher.config.vocab_size;
    TokenBatch calib = generate_corpus(cc);
    auto [m, mm] = merge_experts(teacher, cfg.compression.target_count, calib);
    student = std::move(m);
    map.map = std::move(mm);
  }

  const std::string tag = to_string(method);
  save_checkpoint(student, cfg.output_dir + "/student_" + tag + ".moec");
  save_compression_map(map, cfg.output_dir + "/map_" + tag + ".json");
  log_info("wrote student_" + tag + ".moec and map_" + tag + ".json");
  return 0;
}

int cmd_calibrate(const RunConfig& cfg, const std::string& teacher_path,
                  const std::string& student_path) {
  MoEModel teacher = load_checkpoint(teacher_path);
  MoEModel student = load_checkpoint(student_path);
  if (teacher.config.vocab_size != student.config.vocab_size)
    throw std::invalid_argument("teacher/student vocabulary mismatch");
  fs::create_directories(cfg.output_dir);

  CorpusConfig cc = cfg.corpus;
  cc.vocab_size = teacher.config.vocab_size;
  TokenBatch corpus = generate_corpus(cc);

  log_info("calibrating router (optimizer " + cfg.kd.optimizer + ", lr " +
           std::to_string(cfg.kd.learning_rate) + ")");
  CalibrationResult result = calibrate_router(teacher, student, corpus, cfg.kd);

  std::string lines;
  for (const CalibrationStep& s : result.history) {
    json row{{"step", s.step}, {"kd_loss", s.kd_loss}, {"lr", s.lr}};
    lines += row.dump() + "\n";
  }
  write_text(cfg.output_dir + "/kd_log.jsonl", lines);

  std::string stem = fs::path(student_path).stem().string();
  std::string out_path = cfg.output_dir + "/" + stem + "_R.moec";
  save_checkpoint(result.student, out_path);
  log_info("wrote " + out_path);
  return 0;
}

int cmd_analyze(const RunConfig& cfg, const std::string& teacher_path,
                const std::string& student_path, const std::string& map_path) {
  MoEModel teacher = load_checkpoint(teacher_path);
  MoEModel student = load_checkpoint(student_path);
  if (teacher.layers.size() != student.layers.size())
    throw std::invalid_argument("teacher/student layer count mismatch");

  std::optional<CompressionMap> map;
  if (!map_path.empty()) {
    map = load_compression_map(map_path);
    // Structural compatibility with the student.
    for (std::size_t l = 0; l < student.layers.size(); ++l) {
      std::size_t expected = 0;
      if (map->method == CompressionMethod::prune) {
        const auto& pm = std::get<PruneMap>(map->map);
        if (pm.layers.size() != student.layers.size())
          throw std::invalid_argument("map/model layer count mismatch");
        expected = pm.layers[l].retained.size();
      } else if (map->method == CompressionMethod::edit) {
        const auto& em = std::get<EditMap>(map->map);
        if (em.layers.size() != student.layers.size())
          throw std::invalid_argument("map/model layer count mismatch");
        expected = em.layers[l].size();
      } else {
        const auto& mm = std::get<MergeMap>(map->map);
        if (mm.layers.size() != student.layers.size())
          throw std::invalid_argument("map/model layer count mismatch");
        expected = mm.layers[l].clusters.size();
      }
      if (expected != student.layers[l].n_experts())
        throw std::invalid_argument("map/model expert count mismatch at layer " +
                                    std::to_string(l));
    }
  }

  CorpusConfig cc = cfg.corpus;
  cc.vocab_size = teacher.config.vocab_size;
  TokenBatch corpus = generate_corpus(cc);

  log_info("tracing teacher and student over " +
           std::to_string(corpus.size()) + " sequences");
  ForwardResult t_fwd = forward(teacher, corpus, {.record_io = true});
  ForwardResult s_fwd = forward(student, corpus, {.record_io = true});

  RoutingComparison cmp =
      compare_traces(t_fwd.trace, s_fwd.trace, map ? &*map : nullptr);
  std::vector<double> entropy = routing_entropy(s_fwd.trace);

  std::vector<LayerReport> reports(teacher.layers.size());
  for (std::size_t l = 0; l < reports.size(); ++l) {
    reports[l].mean_l1 = cmp.mean_l1[l];
    reports[l].overlap_ratio = cmp.mean_overlap[l];
    reports[l].mean_entropy = entropy[l];
    reports[l].token_count = cmp.token_count[l];
  }

  // Scenario census and same-input decomposition spot checks need a map.
  ScenarioCensus census;
  json spot{{"samples", json::array()}, {"max_residual", 0.0}};
  CompressionMap effective_map =
      map ? *map
          : CompressionMap{CompressionMethod::edit,
                           EditMap{{student.layers.size(),
                                    std::vector<EditMap::ExpertEdit>(
                                        student.layers.empty()
                                            ? 0
                                            : student.layers[0].n_experts())}}};
  census = scenario_census(teacher, student, effective_map, corpus);

  // N random same-input instances: the teacher's recorded layer input is fed
  // to both layers and the discrepancy split is checked against the recorded
  // outputs.
  {
    struct Site {
      std::size_t s, l, t;
    };
    std::vector<Site> sites;
    for (std::size_t s = 0; s < corpus.size(); ++s)
      for (std::size_t t = 0; t < corpus[s].tokens.size(); ++t)
        if (corpus[s].mask[t])
          for (std::size_t l = 0; l < teacher.layers.size(); ++l)
            sites.push_back({s, l, t});
    Rng rng(cfg.corpus.seed ^ 0xDEC0ull);
    for (std::size_t i = sites.size(); i > 1; --i)
      std::swap(sites[i - 1], sites[rng.uniform_index(i)]);
    const std::size_t n_spot = std::min<std::size_t>(100, sites.size());

    double max_residual = 0.0;
    for (std::size_t i = 0; i < n_spot; ++i) {
      const Site& site = sites[i];
      const LayerTokenTrace& te = t_fwd.trace.entries[site.s][site.l][site.t];
      auto [y, se] =
          moe_layer_forward(student.layers[site.l], te.input, true);

      DiscrepancyDecomposition dec;
      if (effective_map.method == CompressionMethod::prune) {
        dec = decompose_prune(
            te, se, teacher.layers[site.l],
            std::get<PruneMap>(effective_map.map).layers[site.l].retained);
      } else if (effective_map.method == CompressionMethod::edit) {
        dec = decompose_edit(te, se, teacher.layers[site.l],
                             student.layers[site.l]);
      } else {
        const auto& ml = std::get<MergeMap>(effective_map.map).layers[site.l];
        dec = decompose_merge(te, se, teacher.layers[site.l],
                              student.layers[site.l], ml.phi, ml.k_merge);
      }
      double residual = std::abs(dec.total - dec.recombined_norm());
      max_residual = std::max(max_residual, residual);
      spot["samples"].push_back(json{{"layer", site.l},
                                     {"label", to_string(dec.label)},
                                     {"total", dec.total},
                                     {"recombined", dec.recombined_norm()},
                                     {"residual", residual}});
    }
    spot["max_residual"] = max_residual;
  }

  double kd = evaluate_kd_loss(teacher, student, corpus);

  double mean_l1 = 0.0, mean_overlap = 0.0, mean_entropy = 0.0;
  for (const LayerReport& r : reports) {
    mean_l1 += r.mean_l1;
    mean_overlap += r.overlap_ratio;
    mean_entropy += r.mean_entropy;
  }
  if (!reports.empty()) {
    mean_l1 /= static_cast<double>(reports.size());
    mean_overlap /= static_cast<double>(reports.size());
    mean_entropy /= static_cast<double>(reports.size());
  }

  json scenarios = json::object();
  for (const auto& layer : census.per_layer)
    for (const auto& [label, count] : layer)
      scenarios[label] = scenarios.value(label, std::size_t{0}) + count;

  json summary{{"student", fs::path(student_path).stem().string()},
               {"method", map ? to_string(map->method) : "none"},
               {"kd_loss", kd},
               {"mean_l1", mean_l1},
               {"mean_overlap", mean_overlap},
               {"mean_entropy", mean_entropy},
               {"n_layers", reports.size()},
               {"token_count", census.token_count},
               {"scenarios", scenarios},
               {"decomposition_max_residual", spot["max_residual"]}};

  fs::create_directories(cfg.output_dir);
  emit_report(reports, cfg.output_dir, summary.dump(2));

  std::string census_csv = "layer,label,count\n";
  for (std::size_t l = 0; l < census.per_layer.size(); ++l)
    for (const auto& [label, count] : census.per_layer[l])
      census_csv += std::to_string(l) + "," + label + "," +
                    std::to_string(count) + "\n";
  write_text(cfg.output_dir + "/census.csv", census_csv);
  write_text(cfg.output_dir + "/decomposition.json", spot.dump(2) + "\n");
  log_info("report written to " + cfg.output_dir);
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& output_dir) {
  struct Row {
    std::string dir, student, method;
    double kd_loss, mean_overlap, mean_l1;
    std::string scenarios;
  };
  std::vector<Row> rows;
  for (const std::string& dir : run_dirs) {
    std::string path = dir + "/summary.json";
    if (!fs::exists(path))
      throw std::invalid_argument("missing summary.json in run dir: " + dir);
    json j = load_json_file(path);
    std::string sc;
    if (j.contains("scenarios"))
      for (auto it = j["scenarios"].begin(); it != j["scenarios"].end(); ++it) {
        if (!sc.empty()) sc += ";";
        sc += it.key() + ":" + std::to_string(it.value().get<std::size_t>());
      }
    rows.push_back({dir, j.value("student", std::string{}),
                    j.value("method", std::string{}), j.value("kd_loss", 0.0),
                    j.value("mean_overlap", 0.0), j.value("mean_l1", 0.0), sc});
  }

  // Fixed column order.
  std::string csv = "run,student,method,kd_loss,mean_overlap,mean_l1,scenarios\n";
  for (const Row& r : rows)
    csv += r.dir + "," + r.student + "," + r.method + "," +
           format_f64(r.kd_loss) + "," + format_f64(r.mean_overlap) + "," +
           format_f64(r.mean_l1) + "," + r.scenarios + "\n";

  std::string txt;
  {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-24s %-10s %14s %14s %14s\n", "student",
                  "method", "kd_loss", "mean_overlap", "mean_l1");
    txt += buf;
    for (const Row& r : rows) {
      std::snprintf(buf, sizeof buf, "%-24s %-10s %14.6g %14.6g %14.6g\n",
                    r.student.c_str(), r.method.c_str(), r.kd_loss,
                    r.mean_overlap, r.mean_l1);
      txt += buf;
    }
    // Pair each student X with its calibrated X_R counterpart.
    for (const Row& base : rows) {
      for (const Row& cal : rows) {
        if (cal.student != base.student + "_R") continue;
        std::snprintf(buf, sizeof buf,
                      "%s vs %s: kd_loss %.6g -> %.6g (delta %.6g), "
                      "overlap %.6g -> %.6g\n",
                      base.student.c_str(), cal.student.c_str(), base.kd_loss,
                      cal.kd_loss, cal.kd_loss - base.kd_loss,
                      base.mean_overlap, cal.mean_overlap);
        txt += buf;
      }
    }
  }

  fs::create_directories(output_dir);
  write_text(output_dir + "/report.csv", csv);
  write_text(output_dir + "/report.txt", txt);
  std::cout << txt;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoE compression laboratory"};
  app.require_subcommand(1);

  std::string config_path, teacher_path, student_path, map_path;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string output_dir_flag;
  std::vector<std::string> run_dirs;
  std::string report_out = ".";

  // Per-command flag overrides (flags win over config file values).
  std::optional<std::size_t> steps_flag;
  std::optional<double> lr_flag;
  std::optional<std::string> method_flag;
  std::optional<double> retention_flag, rank_ratio_flag;
  std::optional<std::size_t> target_flag;
  std::optional<double> kd_temp_flag, kd_lr_flag;
  std::optional<std::size_t> kd_epochs_flag, kd_batch_flag, kd_accum_flag,
      kd_seq_flag, kd_samples_flag;
  std::optional<std::string> kd_opt_flag;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", config_path, "run config JSON");
    if (config_required) opt->required();
    cmd->add_option("--seed", seed, "override model and corpus seeds");
    cmd->add_option("--threads", threads, "worker count cap (0 = machine)");
    cmd->add_option("--output-dir", output_dir_flag, "override output_dir");
  };

  CLI::App* train = app.add_subcommand("train-teacher", "train the teacher");
  add_common(train, true);
  train->add_option("--steps", steps_flag, "training steps");
  train->add_option("--lr", lr_flag, "learning rate");

  CLI::App* compress = app.add_subcommand("compress", "compress a teacher");
  add_common(compress, true);
  compress->add_option("--teacher", teacher_path, "teacher checkpoint")
      ->required();
  compress->add_option("--method", method_flag, "prune|edit|merge");
  compress->add_option("--retention", retention_flag, "prune retention");
  compress->add_option("--rank-ratio", rank_ratio_flag, "edit rank ratio");
  compress->add_option("--target", target_flag, "merge cluster count");

  CLI::App* calibrate = app.add_subcommand("calibrate", "router distillation");
  add_common(calibrate, true);
  calibrate->add_option("--teacher", teacher_path, "teacher checkpoint")
      ->required();
  calibrate->add_option("--student", student_path, "student checkpoint")
      ->required();
  calibrate->add_option("--temperature", kd_temp_flag, "KD temperature");
  calibrate->add_option("--lr", kd_lr_flag, "learning rate");
  calibrate->add_option("--epochs", kd_epochs_flag, "epochs");
  calibrate->add_option("--batch-size", kd_batch_flag, "batch size");
  calibrate->add_option("--grad-accum", kd_accum_flag, "accumulation steps");
  calibrate->add_option("--max-seq-len", kd_seq_flag, "sequence truncation");
  calibrate->add_option("--max-samples", kd_samples_flag, "sample cap");
  calibrate->add_option("--optimizer", kd_opt_flag, "adam|sgd");

  CLI::App* analyze = app.add_subcommand("analyze", "routing drift report");
  add_common(analyze, true);
  analyze->add_option("--teacher", teacher_path, "teacher checkpoint")
      ->required();
  analyze->add_option("--student", student_path, "student checkpoint")
      ->required();
  analyze->add_option("--map", map_path, "compression map JSON");

  CLI::App* report = app.add_subcommand("report", "compare run directories");
  report->add_option("dirs", run_dirs, "analyze output directories")
      ->required();
  report->add_option("--output-dir", report_out, "where to write the table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    set_max_threads(threads);
    log_debug("kernel backend: " + kernels::backend());

    if (report->parsed()) return cmd_report(run_dirs, report_out);

    RunConfig cfg = load_run_config(config_path);
    apply_seed(cfg, seed);
    if (!output_dir_flag.empty()) cfg.output_dir = output_dir_flag;

    if (train->parsed()) {
      if (steps_flag) cfg.train.steps = *steps_flag;
      if (lr_flag) cfg.train.lr = *lr_flag;
      return cmd_train_teacher(cfg);
    }
    if (compress->parsed()) {
      if (method_flag) cfg.compression.method = *method_flag;
      if (retention_flag) cfg.compression.retention = *retention_flag;
      if (rank_ratio_flag) cfg.compression.rank_ratio = *rank_ratio_flag;
      if (target_flag) cfg.compression.target_count = *target_flag;
      return cmd_compress(cfg, teacher_path);
    }
    if (calibrate->parsed()) {
      if (kd_temp_flag) cfg.kd.temperature = *kd_temp_flag;
      if (kd_lr_flag) cfg.kd.learning_rate = *kd_lr_flag;
      if (kd_epochs_flag) cfg.kd.epochs = *kd_epochs_flag;
      if (kd_batch_flag) cfg.kd.batch_size = *kd_batch_flag;
      if (kd_accum_flag) cfg.kd.grad_accum = *kd_accum_flag;
      if (kd_seq_flag) cfg.kd.max_seq_len = *kd_seq_flag;
      if (kd_samples_flag) cfg.kd.max_samples = *kd_samples_flag;
      if (kd_opt_flag) cfg.kd.optimizer = *kd_opt_flag;
      return cmd_calibrate(cfg, teacher_path, student_path);
    }
    if (analyze->parsed())
      return cmd_analyze(cfg, teacher_path, student_path, map_path);
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const format_error& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
