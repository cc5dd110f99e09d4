// mlml: generate synthetic data, train embeddings, evaluate and export them.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mlml/commands.hpp"
#include "mlml/config.hpp"
#include "mlml/error.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Config file contents, unwrapped if it is a manifest, ready for flag overrides.
json base_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = mlml::read_config_file(path);
  if (j.is_object() && j.value("kind", "") == "mlml-manifest" && j.contains("config"))
    j = j.at("config");
  if (!j.is_object()) throw mlml::ConfigError("config: expected a JSON object");
  return j;
}

template <class T>
void override_key(json& j, const CLI::Option* opt, const char* section, const char* key,
                  const T& value) {
  if (opt->count() > 0) j[section][key] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-label metric learning toolkit"};
  app.require_subcommand(1);
  app.footer(
      "Settings precedence: command-line flags, then the --config file, then\n"
      "$MLML_RUN_DIR (run directory only), then built-in defaults.\n"
      "Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.");

  std::string config_path;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write synthetic train/val/test JSONL files");
  std::string gen_out;
  std::uint64_t gen_seed = 1;
  std::size_t gen_train = 0, gen_val = 0, gen_test = 0;
  double gen_sigma = 0.0;
  gen->add_option("--config", config_path, "JSON run config");
  auto* gen_out_opt = gen->add_option("--out", gen_out, "Output directory (paths.data_dir)");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "synthetic.seed");
  auto* gen_train_opt = gen->add_option("--train-size", gen_train, "synthetic.train_size");
  auto* gen_val_opt = gen->add_option("--val-size", gen_val, "synthetic.validation_size");
  auto* gen_test_opt = gen->add_option("--test-size", gen_test, "synthetic.test_size");
  auto* gen_sigma_opt = gen->add_option("--noise-sigma", gen_sigma, "synthetic.noise_sigma");

  // train
  auto* tr = app.add_subcommand("train", "Train an embedding model");
  std::string tr_data, tr_run, tr_loss;
  int tr_iters = 0, tr_pre_iters = 0, tr_eval_every = 0, tr_decay = 0, tr_threads = 1;
  std::size_t tr_batch = 0, tr_hard_k = 0;
  double tr_lr = 0.0, tr_margin = 0.0;
  std::uint64_t tr_seed = 1;
  bool tr_pretrain = false;
  tr->add_option("--config", config_path, "JSON run config or a previous run's manifest");
  auto* tr_data_opt = tr->add_option("--data", tr_data, "Dataset directory (paths.data_dir)");
  auto* tr_run_opt = tr->add_option("--run-dir", tr_run, "Output directory (paths.run_dir)");
  auto* tr_loss_opt = tr->add_option("--loss", tr_loss, "contrastive|triplet|ml2|ml2plus")
                          ->check(CLI::IsMember({"contrastive", "triplet", "ml2", "ml2plus"}));
  auto* tr_pretrain_opt = tr->add_flag("--pretrain", tr_pretrain, "Pre-train the trunk with label heads");
  auto* tr_pre_iters_opt =
      tr->add_option("--pretrain-iterations", tr_pre_iters, "train.pretrain_iterations");
  auto* tr_iters_opt = tr->add_option("--iterations", tr_iters, "train.iterations");
  auto* tr_batch_opt = tr->add_option("--batch-size", tr_batch, "train.batch_size");
  auto* tr_lr_opt = tr->add_option("--lr", tr_lr, "train.lr0");
  auto* tr_margin_opt = tr->add_option("--margin", tr_margin, "train.margin");
  auto* tr_decay_opt = tr->add_option("--decay-period", tr_decay, "train.decay_period");
  auto* tr_eval_opt = tr->add_option("--eval-every", tr_eval_every, "train.eval_every");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "train.seed and encoder.seed");
  auto* tr_hard_opt = tr->add_option("--hard-class-k", tr_hard_k, "train.hard_class_k (0 = off)");
  auto* tr_threads_opt = tr->add_option("--threads", tr_threads, "Worker threads (default 1)");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset's test split");
  std::string ev_ckpt, ev_data, ev_out;
  std::uint64_t ev_seed = 1;
  ev->add_option("--config", config_path, "JSON run config");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  auto* ev_data_opt = ev->add_option("--data", ev_data, "Dataset directory (paths.data_dir)");
  auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "eval.seed (k-means)");
  ev->add_option("--out", ev_out, "Write the report here instead of stdout");

  // embed / project
  auto* em = app.add_subcommand("embed", "Export embeddings as CSV");
  auto* pr = app.add_subcommand("project", "Export a 2D principal-component projection as CSV");
  std::string io_ckpt, io_dataset, io_out;
  for (auto* sub : {em, pr}) {
    sub->add_option("--checkpoint", io_ckpt, "Checkpoint file")->required();
    sub->add_option("--dataset", io_dataset, "JSONL dataset file")->required();
    sub->add_option("--out", io_out, "CSV output path")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      json j = base_config(config_path);
      override_key(j, gen_seed_opt, "synthetic", "seed", gen_seed);
      override_key(j, gen_train_opt, "synthetic", "train_size", gen_train);
      override_key(j, gen_val_opt, "synthetic", "validation_size", gen_val);
      override_key(j, gen_test_opt, "synthetic", "test_size", gen_test);
      override_key(j, gen_sigma_opt, "synthetic", "noise_sigma", gen_sigma);
      override_key(j, gen_out_opt, "paths", "data_dir", gen_out);
      const mlml::RunConfig cfg = mlml::parse_run_config(j);
      mlml::cmd_gen_data(cfg, cfg.paths.data_dir);
      std::cerr << "wrote dataset to " << cfg.paths.data_dir.string() << '\n';
    } else if (*tr) {
      json j = base_config(config_path);
      override_key(j, tr_loss_opt, "train", "regime", tr_loss);
      override_key(j, tr_pretrain_opt, "train", "pretrain", tr_pretrain);
      override_key(j, tr_pre_iters_opt, "train", "pretrain_iterations", tr_pre_iters);
      override_key(j, tr_iters_opt, "train", "iterations", tr_iters);
      override_key(j, tr_batch_opt, "train", "batch_size", tr_batch);
      override_key(j, tr_lr_opt, "train", "lr0", tr_lr);
      override_key(j, tr_margin_opt, "train", "margin", tr_margin);
      override_key(j, tr_decay_opt, "train", "decay_period", tr_decay);
      override_key(j, tr_eval_opt, "train", "eval_every", tr_eval_every);
      override_key(j, tr_seed_opt, "train", "seed", tr_seed);
      override_key(j, tr_seed_opt, "encoder", "seed", tr_seed);
      override_key(j, tr_hard_opt, "train", "hard_class_k", tr_hard_k);
      override_key(j, tr_threads_opt, "train", "threads", tr_threads);
      override_key(j, tr_data_opt, "paths", "data_dir", tr_data);
      override_key(j, tr_run_opt, "paths", "run_dir", tr_run);
      // A --loss flag picks that regime's default batch size unless one is given.
      if (tr_loss_opt->count() > 0 && tr_batch_opt->count() == 0 && j["train"].is_object())
        j["train"].erase("batch_size");
      const mlml::RunConfig cfg = mlml::parse_run_config(j);
      const auto result = mlml::cmd_train(cfg);
      std::cerr << "best iteration " << result.report.best_iteration;
      if (result.report.best_val_nmi) std::cerr << ", val NMI " << *result.report.best_val_nmi;
      std::cerr << "; run written to " << cfg.paths.run_dir.string() << '\n';
    } else if (*ev) {
      json j = base_config(config_path);
      override_key(j, ev_seed_opt, "eval", "seed", ev_seed);
      override_key(j, ev_data_opt, "paths", "data_dir", ev_data);
      const mlml::RunConfig cfg = mlml::parse_run_config(j);
      const auto report = mlml::cmd_eval(ev_ckpt, cfg.paths.data_dir, cfg.eval);
      const std::string text = mlml::to_json(report).dump(2) + "\n";
      if (ev_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(ev_out, std::ios::binary | std::ios::trunc);
        if (!(f << text)) throw mlml::Error("cannot write " + ev_out);
      }
    } else if (*em) {
      mlml::cmd_embed(io_ckpt, io_dataset, io_out);
    } else if (*pr) {
      const auto proj = mlml::cmd_project(io_ckpt, io_dataset, io_out);
      if (proj.degenerate)
        std::cerr << "warning: embeddings have zero variance; projection is all zeros\n";
    }
  } catch (const mlml::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
