#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hccr/gnt.hpp"
#include "hccr/gradcheck.hpp"
#include "hccr/model.hpp"
#include "hccr/pack.hpp"
#include "hccr/preprocess.hpp"
#include "hccr/train.hpp"

namespace {

int cmd_import_gnt(const std::vector<std::string>& paths) {
  const std::string out_path = paths.back();
  std::vector<hccr::GntRecord> records;
  for (std::size_t i = 0; i + 1 < paths.size(); ++i) {
    const auto bytes = hccr::read_file_bytes(paths[i]);
    auto file_records = hccr::parse_gnt(bytes);
    std::printf("%s: %zu records\n", paths[i].c_str(), file_records.size());
    for (auto& r : file_records) records.push_back(std::move(r));
  }

  // class indices by first appearance
  std::vector<std::uint16_t> label_table;
  auto class_of = [&](std::uint16_t tag) {
    for (std::size_t i = 0; i < label_table.size(); ++i) {
      if (label_table[i] == tag) return static_cast<std::int64_t>(i);
    }
    label_table.push_back(tag);
    return static_cast<std::int64_t>(label_table.size() - 1);
  };

  std::vector<hccr::PreprocessedSample> samples;
  samples.reserve(records.size());
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      hccr::PreprocessedSample s;
      s.image = hccr::preprocess(records[i]);
      s.label = class_of(records[i].tag_code);
      samples.push_back(std::move(s));
    } catch (const hccr::DegenerateSampleError&) {
      std::fprintf(stderr, "warning: skipping degenerate record %zu (tag 0x%04X): no ink\n", i,
                   records[i].tag_code);
      ++skipped;
    }
  }
  hccr::pack_write(samples, label_table, out_path);
  std::printf("%s: %zu samples, %zu classes (%zu degenerate records skipped)\n", out_path.c_str(),
              samples.size(), label_table.size(), skipped);
  return 0;
}

int cmd_stats(const std::string& path) {
  const hccr::DatasetPack pack = hccr::pack_read(path);
  const hccr::PackStats st = hccr::dataset_stats(pack);
  std::printf("classes %lld\n", static_cast<long long>(st.classes));
  std::printf("samples %lld\n", static_cast<long long>(st.total));
  std::printf("per-class min %lld  mean %.1f  max %lld\n",
              static_cast<long long>(st.min_per_class), st.mean_per_class,
              static_cast<long long>(st.max_per_class));
  return 0;
}

int cmd_gradcheck(bool full, std::uint64_t seed) {
  const int trials = full ? 100 : 20;
  std::printf("finite-difference gradient suite, %d trials per op\n", trials);
  bool ok = true;
  for (const auto& rep : hccr::gradient_suite(trials, seed)) {
    const bool pass = rep.max_rel_err <= 1e-4;
    ok = ok && pass;
    std::printf("%-30s max rel err %.3e  trials %-4d %s%s\n", rep.op.c_str(), rep.max_rel_err,
                rep.trials, pass ? "ok" : "FAIL",
                rep.kink_events ? "  (kink warning)" : "");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CPU trainer for handwritten-character CNNs with similarity-ranking losses"};
  app.require_subcommand(1);

  // import-gnt
  auto* import_cmd = app.add_subcommand("import-gnt", "Parse GNT files into a dataset pack");
  std::vector<std::string> import_paths;
  import_cmd->add_option("paths", import_paths, "input .gnt files, then the output .pack")
      ->required()
      ->expected(-2);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a deterministic synthetic glyph pack");
  std::string synth_out;
  std::int64_t synth_classes = 10, synth_per_class = 40;
  std::uint64_t synth_seed = 7;
  synth_cmd->add_option("out", synth_out, "output .pack path")->required();
  synth_cmd->add_option("--classes", synth_classes, "number of classes (>= 2)");
  synth_cmd->add_option("--per-class", synth_per_class, "samples per class (>= 2)");
  synth_cmd->add_option("--seed", synth_seed, "sample-variation seed");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Summarize a dataset pack");
  std::string stats_path;
  stats_cmd->add_option("pack", stats_path, "pack path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model variant on a pack");
  std::string variant_str, train_pack, train_heldout, train_out, train_metrics;
  hccr::TrainConfig tc;
  std::vector<std::int64_t> conv_channels, fc_widths;
  train_cmd->add_option("--variant", variant_str, "loss variant: a (softmax), b (+euclidean), c (+variance)")
      ->required()
      ->check(CLI::IsMember({"a", "b", "c"}));
  train_cmd->add_option("--pack", train_pack, "training pack")->required();
  train_cmd->add_option("--heldout", train_heldout, "held-out pack for eval lines");
  train_cmd->add_option("--steps", tc.steps, "SGD steps");
  train_cmd->add_option("--lr", tc.learning_rate, "learning rate");
  train_cmd->add_option("--seed", tc.seed, "run seed");
  train_cmd->add_option("--out", train_out, "checkpoint output path");
  train_cmd->add_option("--metrics", train_metrics, "metrics JSONL output path");
  train_cmd->add_option("--lambda", tc.variant.lambda, "similarity term weight");
  train_cmd->add_option("--batch-size", tc.sampler.batch_size, "variant a batch size");
  train_cmd->add_option("--classes-per-batch", tc.sampler.classes_per_batch,
                        "classes per batch (variants b, c)");
  train_cmd->add_option("--samples-per-class", tc.sampler.samples_per_class,
                        "samples per class (variant c)");
  train_cmd->add_option("--eval-every", tc.eval_every, "evaluate every N steps (0 = off)");
  train_cmd->add_option("--early-stop-loss", tc.early_stop_loss,
                        "stop when trailing mean loss drops below this (0 = off)");
  train_cmd->add_option("--conv-channels", conv_channels, "conv stage widths")->delimiter(',');
  train_cmd->add_option("--fc-widths", fc_widths, "FC widths")->delimiter(',');
  train_cmd->add_option("--dropout", tc.model.dropout_prob, "dropout probability");
  train_cmd->add_option("--leaky-slope", tc.model.leaky_slope, "leaky ReLU negative slope");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Recognition rate of a checkpoint on a pack");
  std::string eval_ckpt, eval_pack;
  std::vector<std::int64_t> eval_conv, eval_fc;
  double eval_dropout = 0.25, eval_slope = 0.01;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--pack", eval_pack, "evaluation pack")->required();
  eval_cmd->add_option("--conv-channels", eval_conv, "conv stage widths used at training")
      ->delimiter(',');
  eval_cmd->add_option("--fc-widths", eval_fc, "FC widths used at training")->delimiter(',');
  eval_cmd->add_option("--dropout", eval_dropout, "dropout used at training");
  eval_cmd->add_option("--leaky-slope", eval_slope, "slope used at training");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Run the gradient-check suites");
  bool grad_full = false;
  std::uint64_t grad_seed = 42;
  grad_cmd->add_flag("--full", grad_full, "100 trials per op instead of 20");
  grad_cmd->add_option("--seed", grad_seed, "suite seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*import_cmd) {
      if (import_paths.size() < 2) {
        std::fprintf(stderr, "error: import-gnt needs at least one input and an output\n");
        return 1;
      }
      return cmd_import_gnt(import_paths);
    }
    if (*synth_cmd) {
      hccr::synth_dataset(synth_classes, synth_per_class, synth_seed).write(synth_out);
      std::printf("%s: %lld classes x %lld samples, seed %llu\n", synth_out.c_str(),
                  static_cast<long long>(synth_classes), static_cast<long long>(synth_per_class),
                  static_cast<unsigned long long>(synth_seed));
      return 0;
    }
    if (*stats_cmd) return cmd_stats(stats_path);
    if (*train_cmd) {
      tc.variant.kind = variant_str == "a"   ? hccr::LossKind::kSoftmaxOnly
                        : variant_str == "b" ? hccr::LossKind::kSoftmaxPlusEuclidean
                                             : hccr::LossKind::kSoftmaxPlusVariance;
      tc.pack_path = train_pack;
      tc.heldout_path = train_heldout;
      tc.checkpoint_out = train_out;
      tc.metrics_out = train_metrics;
      if (!conv_channels.empty()) tc.model.conv_channels = conv_channels;
      if (!fc_widths.empty()) tc.model.fc_widths = fc_widths;
      tc.model.num_classes = hccr::pack_read(train_pack).num_classes();
      const hccr::TrainResult result = hccr::train(tc);
      for (const auto& rec : result.history) {
        if (rec.recognition_rate) {
          std::printf("step %lld  loss %.4f (ce %.4f, sim %.4f)  recognition %.4f  [%.1fs]\n",
                      static_cast<long long>(rec.step), rec.total_loss, rec.ce_loss, rec.sim_loss,
                      *rec.recognition_rate, rec.wall_seconds);
        }
      }
      std::printf("trained %lld steps\n", static_cast<long long>(result.steps_run));
      return 0;
    }
    if (*eval_cmd) {
      const hccr::DatasetPack pack = hccr::pack_read(eval_pack);
      hccr::ModelConfig cfg;
      if (!eval_conv.empty()) cfg.conv_channels = eval_conv;
      if (!eval_fc.empty()) cfg.fc_widths = eval_fc;
      cfg.dropout_prob = eval_dropout;
      cfg.leaky_slope = eval_slope;
      cfg.num_classes = pack.num_classes();
      const hccr::ModelParams params = hccr::load_checkpoint(eval_ckpt, cfg);
      std::printf("recognition rate %.4f\n", hccr::evaluate(params, pack));
      return 0;
    }
    if (*grad_cmd) return cmd_gradcheck(grad_full, grad_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
