#include "mlml/commands.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <string>

#include "mlml/error.hpp"
#include "mlml/model.hpp"

namespace mlml {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Shortest representation that reads back to the same double.
void put_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_width(const EmbeddingModel& model, const Dataset& ds, const fs::path& source) {
  if (ds.feature_dim() != model.config().input_dim)
    throw DimensionError("checkpoint expects " + std::to_string(model.config().input_dim) +
                         " features but " + source.string() + " has " +
                         std::to_string(ds.feature_dim()));
}

// Label count for a standalone dataset file: the checkpoint records it, and a
// manifest next to the file is the fallback.
int label_count_for(const LoadedCheckpoint& ckpt, const fs::path& dataset) {
  if (ckpt.metadata.contains("label_count")) return ckpt.metadata.at("label_count").get<int>();
  return dataset_label_count(dataset.parent_path());
}

}  // namespace

int dataset_label_count(const fs::path& data_dir) {
  const fs::path manifest = data_dir / files::kManifest;
  if (!fs::exists(manifest))
    throw ConfigError("paths.data_dir: no " + std::string(files::kManifest) + " in " +
                      data_dir.string());
  const json j = read_json(manifest);
  if (!j.contains("label_count") || !j.at("label_count").is_number_integer())
    throw FormatError(manifest.string() + ": missing label_count");
  return j.at("label_count").get<int>();
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.synthetic.validate();
  const Splits splits = generate_synthetic(cfg.synthetic);
  ensure_directory(out_dir);
  save_jsonl(splits.train, out_dir / files::kTrain);
  save_jsonl(splits.validation, out_dir / files::kValidation);
  save_jsonl(splits.test, out_dir / files::kTest);
  json manifest{{"kind", "mlml-manifest"},
                {"command", "gen-data"},
                {"label_count", cfg.synthetic.label_count},
                {"feature_dim", cfg.synthetic.feature_dim},
                {"sizes",
                 {{"train", splits.train.size()},
                  {"validation", splits.validation.size()},
                  {"test", splits.test.size()}}},
                {"seed", cfg.synthetic.seed},
                {"config", to_json(cfg)}};
  write_json(out_dir / files::kManifest, manifest);
}

TrainResult cmd_train(const RunConfig& cfg) {
  const fs::path& data = cfg.paths.data_dir;
  if (!fs::is_directory(data))
    throw ConfigError("paths.data_dir: dataset directory " + data.string() + " does not exist");
  for (const char* name : {files::kTrain, files::kValidation})
    if (!fs::exists(data / name))
      throw ConfigError("paths.data_dir: missing " + (data / name).string());
  const int label_count = dataset_label_count(data);
  const Dataset train_set = load_jsonl(data / files::kTrain, label_count);
  const Dataset validation = load_jsonl(data / files::kValidation, label_count);

  RunConfig resolved = cfg;
  resolved.encoder.input_dim = train_set.feature_dim();
  resolved.encoder.head_count = 0;

  const fs::path& run = cfg.paths.run_dir;
  ensure_directory(run);
  json report_extra{{"regime", std::string(regime_name(cfg.train.regime))},
                    {"pretrain", cfg.train.pretrain}};

  TrainResult result;
  try {
    result = train(train_set, validation, resolved.train, resolved.encoder);
  } catch (const TrainingAborted& e) {
    json report = to_json(e.report());
    report.update(report_extra);
    report["error"] = e.what();
    write_json(run / files::kReport, report);
    throw;
  }

  const json ckpt_meta{{"label_count", label_count},
                       {"regime", std::string(regime_name(cfg.train.regime))},
                       {"train_seed", cfg.train.seed}};
  json best_meta = ckpt_meta;
  best_meta["iteration"] = result.report.best_iteration;
  json final_meta = ckpt_meta;
  final_meta["iteration"] = cfg.train.iterations;
  save_checkpoint(result.best, run / files::kBestCheckpoint, best_meta);
  save_checkpoint(result.last, run / files::kFinalCheckpoint, final_meta);

  json report = to_json(result.report);
  report.update(report_extra);
  report["best_checkpoint"] = files::kBestCheckpoint;
  write_json(run / files::kReport, report);
  write_json(run / files::kTiming, {{"wall_clock_seconds", result.report.wall_clock_seconds}});

  json manifest{{"kind", "mlml-manifest"},
                {"command", "train"},
                {"seed", cfg.train.seed},
                {"config", to_json(resolved)},
                {"label_count", label_count},
                {"best_iteration", result.report.best_iteration},
                {"best_checkpoint", files::kBestCheckpoint},
                {"final_checkpoint", files::kFinalCheckpoint},
                {"history", report.at("records")}};
  manifest["best_val_nmi"] = report.at("best_val_nmi");
  write_json(run / files::kManifest, manifest);
  return result;
}

MetricsReport cmd_eval(const fs::path& checkpoint, const fs::path& data_dir,
                       const EvalOptions& opts) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const int label_count = dataset_label_count(data_dir);
  const fs::path test_path = data_dir / files::kTest;
  const Dataset test = load_jsonl(test_path, label_count);
  require_width(ckpt.model, test, test_path);

  const Matrix emb = ckpt.model.embed_all(test.feature_matrix());
  const auto labels = test.label_sets();
  MetricsReport report;
  report.nmi = clustering_nmi(emb, labels, opts.seed);
  report.clusters = partition_by_label_set(labels).k;
  report.recall_at = recall_at_ks(emb, labels, opts.recall_ks);

  if (opts.classification) {
    const fs::path train_path = data_dir / files::kTrain;
    const Dataset train_set = load_jsonl(train_path, label_count);
    require_width(ckpt.model, train_set, train_path);
    const Matrix train_emb = ckpt.model.embed_all(train_set.feature_matrix());
    LogisticOptions lo;
    lo.l2 = opts.probe_l2;
    report.classification =
        logistic_probe(train_emb, abnormal_targets(train_set.label_sets()), emb,
                       abnormal_targets(labels), lo);
    report.has_classification = true;
  }
  return report;
}

void cmd_embed(const fs::path& checkpoint, const fs::path& dataset, const fs::path& out) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const Dataset ds = load_jsonl(dataset, label_count_for(ckpt, dataset));
  require_width(ckpt.model, ds, dataset);
  const Matrix emb = ckpt.model.embed_all(ds.feature_matrix());

  std::string text = "id";
  for (std::size_t c = 0; c < emb.cols(); ++c) text += ",e" + std::to_string(c);
  text += '\n';
  for (std::size_t r = 0; r < emb.rows(); ++r) {
    text += ds[r].id;
    for (double v : emb.row(r)) {
      text += ',';
      put_number(text, v);
    }
    text += '\n';
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!(f << text)) throw Error("cannot write " + out.string());
}

Projection cmd_project(const fs::path& checkpoint, const fs::path& dataset,
                       const fs::path& out) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const Dataset ds = load_jsonl(dataset, label_count_for(ckpt, dataset));
  require_width(ckpt.model, ds, dataset);
  const Projection proj = project_2d(ckpt.model.embed_all(ds.feature_matrix()));

  std::string text = "id,x,y,labels\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    text += ds[r].id;
    text += ',';
    put_number(text, proj.coords(r, 0));
    text += ',';
    put_number(text, proj.coords(r, 1));
    text += ',';
    text += ds[r].labels.to_string(';');
    text += '\n';
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!(f << text)) throw Error("cannot write " + out.string());
  return proj;
}

}  // namespace mlml
