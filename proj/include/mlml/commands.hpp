#pragma once

// The operations behind each CLI subcommand. They read and write files only
// through the paths given and throw mlml::Error subclasses on failure.

#include <filesystem>
#include <optional>

#include "mlml/config.hpp"
#include "mlml/eval.hpp"
#include "mlml/trainer.hpp"

namespace mlml {

namespace files {
inline constexpr const char* kTrain = "train.jsonl";
inline constexpr const char* kValidation = "val.jsonl";
inline constexpr const char* kTest = "test.jsonl";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kTiming = "timing.json";
inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kFinalCheckpoint = "final.ckpt";
}  // namespace files

/// Writes train/val/test JSONL files and a manifest into `out_dir`.
void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Loads the dataset directory named in cfg.paths.data_dir, trains, and fills
/// cfg.paths.run_dir with best.ckpt, final.ckpt, report.json, timing.json and
/// manifest.json. A missing dataset directory is a ConfigError. On a training
/// failure the partial report is still written before TrainingAborted
/// propagates.
TrainResult cmd_train(const RunConfig& cfg);

/// Scores a checkpoint on the test split of `data_dir`: NMI and Recall@K on
/// the test embeddings, plus the logistic probe fitted on the train split's
/// embeddings. Throws DimensionError naming both widths when the checkpoint
/// and data disagree.
MetricsReport cmd_eval(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& data_dir, const EvalOptions& opts);

/// CSV with header id,e0,...,e{m-1}; one row per record of `dataset`.
void cmd_embed(const std::filesystem::path& checkpoint,
               const std::filesystem::path& dataset, const std::filesystem::path& out);

/// CSV with header id,x,y,labels; labels joined with ';'. Returns the
/// projection so callers can report the degenerate flag.
Projection cmd_project(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& dataset,
                       const std::filesystem::path& out);

/// Label count of a dataset directory, read from its manifest.
int dataset_label_count(const std::filesystem::path& data_dir);

}  // namespace mlml
