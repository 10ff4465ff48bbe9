// Command-line front end: synth, partition, train, eval, predict, ablate.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "corereg/commands.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> depth;
  std::optional<std::size_t> groups;
  std::optional<std::size_t> exemplars;
  std::optional<std::size_t> node_dim;
  std::optional<std::size_t> epochs;
  std::optional<double> theta;
  std::optional<std::string> policy;
  std::optional<std::string> mode;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "seed for generation, splits, init and exemplar draws");
    app->add_option("--depth", depth, "tree depth d (2^d groups)");
    app->add_option("--groups", groups, "group count R for the partition report (power of two)");
    app->add_option("--exemplars", exemplars, "exemplars M voted per test sample (default 10)");
    app->add_option("--node-dim", node_dim, "node feature width (default 256)");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--theta", theta, "R-l2 tolerance theta (default 0)");
    app->add_option("--policy", policy, "exemplar policy")
        ->check(CLI::IsMember({"category", "category+dd"}));
    app->add_option("--mode", mode, "tree input mode")
        ->check(CLI::IsMember({"contrastive", "absolute"}));
  }

  corereg::RunConfig resolve() const {
    corereg::RunConfig cfg =
        config_path.empty() ? corereg::RunConfig{} : corereg::load_run_config(config_path);
    if (seed) cfg.apply_seed(*seed);
    if (depth) cfg.train.tree.depth = *depth;
    if (groups) cfg.groups = *groups;
    if (exemplars) cfg.exemplars = *exemplars;
    if (node_dim) cfg.train.tree.node_feature_dim = *node_dim;
    if (epochs) cfg.train.epochs = *epochs;
    if (theta) cfg.theta = *theta;
    if (policy) cfg.set_policy(*policy);
    if (mode) cfg.train.mode = corereg::regression_mode_from_string(*mode);
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive group-aware regression tree for quality-score prediction"};
  app.require_subcommand(1);
  Overrides ov;

  std::string out, data, checkpoint, log, test, pool, out_dir;
  std::optional<std::size_t> n_samples, feature_dim;
  std::optional<double> noise;

  auto* synth = app.add_subcommand("synth", "write a synthetic JSON-lines dataset");
  ov.attach(synth);
  synth->add_option("--out", out, "output dataset path")->required();
  synth->add_option("--n", n_samples, "number of samples");
  synth->add_option("--dim", feature_dim, "feature dimension D");
  synth->add_option("--noise", noise, "feature noise standard deviation");

  auto* part = app.add_subcommand("partition", "quantile vs uniform group counts as CSV");
  ov.attach(part);
  part->add_option("--data", data, "training dataset")->required();
  part->add_option("--out", out, "output CSV")->required();

  auto* tr = app.add_subcommand("train", "train a tree and write a checkpoint");
  ov.attach(tr);
  tr->add_option("--data", data, "training dataset")->required();
  tr->add_option("--out", checkpoint, "checkpoint path")->required();
  tr->add_option("--log", log, "training log CSV (epoch,J,J_cls,J_reg)");

  auto* ev = app.add_subcommand("eval", "score a test set and write report, predictions, curves");
  ov.attach(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  ev->add_option("--data", test, "test dataset with known scores")->required();
  ev->add_option("--pool", pool, "training dataset used as exemplar pool")->required();
  ev->add_option("--out-dir", out_dir, "output directory")->required();

  auto* pr = app.add_subcommand("predict", "write predictions as JSON lines");
  ov.attach(pr);
  pr->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  pr->add_option("--data", test, "samples to score")->required();
  pr->add_option("--pool", pool, "training dataset used as exemplar pool")->required();
  pr->add_option("--out", out, "output JSON-lines path")->required();

  auto* ab = app.add_subcommand("ablate", "baseline vs tree-only vs contrastive tree on one split");
  ov.attach(ab);
  ab->add_option("--data", data, "full dataset (split internally)")->required();
  ab->add_option("--out", out, "output JSON report")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(corereg::ExitCode::config);
  }

  try {
    corereg::RunConfig cfg = ov.resolve();
    std::string msg;
    if (*synth) {
      if (n_samples) cfg.synth.n_samples = *n_samples;
      if (feature_dim) cfg.synth.feature_dim = *feature_dim;
      if (noise) cfg.synth.noise_std = *noise;
      msg = corereg::cmd_synth(cfg, out);
    } else if (*part) {
      msg = corereg::cmd_partition(cfg, data, out);
    } else if (*tr) {
      msg = corereg::cmd_train(cfg, data, checkpoint, log);
    } else if (*ev) {
      msg = corereg::cmd_eval(cfg, checkpoint, test, pool, out_dir);
    } else if (*pr) {
      msg = corereg::cmd_predict(cfg, checkpoint, test, pool, out);
    } else if (*ab) {
      msg = corereg::cmd_ablate(cfg, data, out);
    }
    std::cout << msg << '\n';
  } catch (const corereg::Error& e) {
    std::cerr << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
