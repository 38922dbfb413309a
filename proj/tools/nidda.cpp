#include <CLI11.hpp>
#include <fmt/format.h>
#include <iostream>
#include <json.hpp>
#include <map>

#include "nidda/error.hpp"
#include "nidda/pipeline.hpp"
#include "nidda/table_io.hpp"

namespace {

using nidda::pipeline::PipelineConfig;
namespace fs = std::filesystem;

/// --config plus one string flag per config key, shared by every subcommand.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    for (const auto& key : PipelineConfig::keys()) {
      app->add_option("--" + key, values[key], "config key " + key);
    }
  }

  PipelineConfig resolve(const CLI::App* app, std::map<std::string, std::string> extra = {}) const {
    PipelineConfig cfg;
    if (!config_file.empty()) cfg = PipelineConfig::from_json(nidda::io::read_text(config_file));
    std::map<std::string, std::string> overrides;
    for (const auto& [key, value] : values) {
      if (app->count("--" + key) > 0) overrides[key] = value;
    }
    for (auto& [k, v] : extra) overrides[k] = v;
    cfg.apply_overrides(overrides);
    return cfg;
  }
};

int fail(const char* kind, const std::string& message, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  for (auto& [k, v] : extra.items()) j["error"][k] = v;
  std::cerr << j.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nidda: small-sample network intrusion detection with data augmentation"};
  app.require_subcommand(1);

  ConfigFlags pre_flags, pgm_flags, dgnn_flags, full_flags, train_flags, eval_flags, repro_flags;

  auto* preprocess = app.add_subcommand("preprocess", "parse, encode and normalize the raw KDD files");
  pre_flags.attach(preprocess);

  auto* augment = app.add_subcommand("augment", "data augmentation");
  augment->require_subcommand(1);

  auto* pgm = augment->add_subcommand("pgm", "Poisson-Gamma synthesis from a seeds CSV");
  std::string pgm_seeds, pgm_out, pgm_n, pgm_burnin;
  pgm->add_option("--seeds", pgm_seeds, "seed samples CSV")->required()->check(CLI::ExistingFile);
  pgm->add_option("--out", pgm_out, "synthesised CSV")->required();
  pgm->add_option("--n", pgm_n, "number of synthesised samples (alias of --n_synth)");
  pgm->add_option("--burnin", pgm_burnin, "burn-in iterations (alias of --burn_in)");
  pgm_flags.attach(pgm);

  auto* dgnn = augment->add_subcommand("dgnn", "adversarial refinement of synthesised samples");
  std::string dg_seeds, dg_synth, dg_out, dg_ckpt, dg_hist;
  dgnn->add_option("--seeds", dg_seeds, "seed samples CSV")->required()->check(CLI::ExistingFile);
  dgnn->add_option("--synth", dg_synth, "synthesised samples CSV")->required()->check(CLI::ExistingFile);
  dgnn->add_option("--out", dg_out, "augmented CSV")->required();
  dgnn->add_option("--checkpoint", dg_ckpt, "network checkpoint JSON")->required();
  dgnn->add_option("--history", dg_hist, "loss history CSV (default: <out>.loss_history.csv)");
  dgnn_flags.attach(dgnn);

  auto* full = augment->add_subcommand("full", "partition, PGM and DGNN for configured attack types");
  std::string full_attack = "all";
  full->add_option("--attack", full_attack, "attack type, or 'all'");
  full_flags.attach(full);

  auto* train = app.add_subcommand("train", "train one classifier and save it");
  std::string tr_experiment = "binary", tr_attack, tr_classifier = "svm", tr_aug = "pgm+dgnn", tr_out;
  train->add_option("--experiment", tr_experiment, "binary, multiclass-svm or multiclass-dnn");
  train->add_option("--attack", tr_attack, "attack type (binary experiment)");
  train->add_option("--classifier", tr_classifier, "lr, svm or dnn");
  train->add_option("--augmentation", tr_aug, "none, pgm or pgm+dgnn");
  train->add_option("--model-out", tr_out, "model JSON")->required();
  train_flags.attach(train);

  auto* evaluate = app.add_subcommand("evaluate", "score a saved classifier on the reduced test split");
  std::string ev_model, ev_report;
  evaluate->add_option("--model", ev_model, "model JSON from `train`")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--report", ev_report, "metrics CSV")->required();
  eval_flags.attach(evaluate);

  auto* reproduce = app.add_subcommand("reproduce", "run a full experiment table");
  std::string rep_experiment = "binary";
  reproduce->add_option("--experiment", rep_experiment, "binary, multiclass-svm or multiclass-dnn")->required();
  repro_flags.attach(reproduce);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  }

  namespace pl = nidda::pipeline;
  try {
    if (*preprocess) {
      const auto summary = pl::cmd_preprocess(pre_flags.resolve(preprocess));
      std::cout << summary.to_text();
    } else if (*pgm) {
      std::map<std::string, std::string> extra;
      if (!pgm_n.empty()) extra["n_synth"] = pgm_n;
      if (!pgm_burnin.empty()) extra["burn_in"] = pgm_burnin;
      pl::run_pgm_file(pgm_flags.resolve(pgm, extra), pgm_seeds, pgm_out);
    } else if (*dgnn) {
      const fs::path hist = dg_hist.empty() ? fs::path(dg_out + ".loss_history.csv") : fs::path(dg_hist);
      pl::run_dgnn_file(dgnn_flags.resolve(dgnn), dg_seeds, dg_synth, dg_out, dg_ckpt, hist);
    } else if (*full) {
      for (const auto& o : pl::cmd_augment(full_flags.resolve(full), full_attack)) {
        std::cout << fmt::format("{}: {} seeds, {} synthesised, {} augmented -> {}\n", o.attack_type,
                                 o.seeds.rows(), o.synthesised.rows(), o.augmented.rows(), o.directory.string());
      }
    } else if (*train) {
      pl::TrainRequest req;
      req.experiment = pl::experiment_from_string(tr_experiment);
      req.attack_type = tr_attack;
      req.classifier = pl::classifier_from_string(tr_classifier);
      req.augmentation = pl::augmentation_from_string(tr_aug);
      req.model_out = tr_out;
      pl::cmd_train(train_flags.resolve(train), req);
    } else if (*evaluate) {
      const auto r = pl::cmd_evaluate(eval_flags.resolve(evaluate), ev_model, ev_report);
      std::cout << nidda::io::read_text(ev_report);
    } else if (*reproduce) {
      const auto cfg = repro_flags.resolve(reproduce);
      const auto rep = pl::cmd_reproduce(cfg, pl::experiment_from_string(rep_experiment));
      for (const auto& d : rep.diagnostics) std::cerr << d << "\n";
      std::cout << nidda::io::read_text(fs::path(cfg.output_dir) / "reports" /
                                        (std::string(pl::to_string(rep.experiment)) + ".csv"));
    }
  } catch (const nidda::ParseError& e) {
    return fail(e.kind(), e.what(), {{"line", e.line()}, {"column", e.column()}});
  } catch (const nidda::EncodeError& e) {
    return fail(e.kind(), e.what(), {{"column", e.column()}});
  } catch (const nidda::DivergenceError& e) {
    return fail(e.kind(), e.what(), {{"history_path", e.history_path()}});
  } catch (const nidda::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
