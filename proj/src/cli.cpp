#include "ctune/cli.hpp"

#include <CLI11.hpp>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ctune/hybrid.hpp"
#include "ctune/importance.hpp"
#include "ctune/loop.hpp"
#include "ctune/persistence.hpp"
#include "ctune/report.hpp"
#include "ctune/rng.hpp"

namespace ctune {

namespace {

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
  std::vector<std::string> overrides = g.overrides;
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (!g.config_path.empty()) return load_experiment_config(g.config_path, overrides);
  json j = to_json(ExperimentConfig::desk_reference());
  apply_overrides(j, overrides);
  return experiment_from_json(j);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t\r") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "old", "new", "all", "learned" or a comma list of class names.
ClassSet parse_classes(const std::string& spec, const ClassCatalog& catalog, const ClassSet& learned) {
  ClassSet out;
  for (const auto& item : split_list(spec)) {
    if (item == "old") {
      out.insert(catalog.old_classes().begin(), catalog.old_classes().end());
    } else if (item == "new") {
      out.insert(catalog.new_classes().begin(), catalog.new_classes().end());
    } else if (item == "all") {
      const auto all = catalog.all_ids();
      out.insert(all.begin(), all.end());
    } else if (item == "learned") {
      out.insert(learned.begin(), learned.end());
    } else {
      out.insert(catalog.id_of(item));
    }
  }
  if (out.empty()) throw ContractError("empty class list '" + spec + "'");
  return out;
}

Checkpoint load_model(const std::string& path, const ExperimentConfig& config) {
  return load_checkpoint(path, config.arch, config.catalog.all_ids());
}

std::vector<Scan> load_scans(const std::string& dir) { return load_dataset(dir).scans; }

const Regime& find_regime(const ExperimentConfig& config, const std::string& name) {
  if (config.regimes.empty()) throw ContractError("config defines no regimes");
  if (name.empty()) return config.regimes.front();
  for (const auto& r : config.regimes) {
    if (r.name == name) return r;
  }
  throw ContractError("unknown regime '" + name + "'");
}

std::string dsc_json(const std::map<ClassId, double>& values, const ClassCatalog& catalog) {
  json j = json::object();
  double sum = 0.0;
  for (const auto& [k, v] : values) {
    j[catalog.name(k)] = v;
    sum += v;
  }
  j["mean"] = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  return j.dump(2);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual tuning of a class-conditioned segmentation model on synthetic phantoms", "ctune"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "experiment config (JSON); defaults to the packaged desk config");
  app.add_option("--set", g.overrides, "override a config key, e.g. --set base_training.epochs=10");
  app.add_option("--seed", g.seed, "root seed (overrides the config's seed)");

  std::function<void()> action;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a phantom dataset");
  std::string gen_out, gen_split = "base";
  std::size_t gen_round = 1;
  std::optional<std::size_t> gen_n;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--split", gen_split, "base | test | validation | pool")
      ->check(CLI::IsMember({"base", "test", "validation", "pool"}));
  gen->add_option("--round", gen_round, "pool round (1-based)");
  gen->add_option("--n", gen_n, "number of scans (defaults to the split size)");
  gen->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      std::uint64_t seed = config.base_data_seed();
      std::size_t n = config.base_train_size;
      if (gen_split == "test") {
        seed = config.test_data_seed();
        n = config.test_size;
      } else if (gen_split == "validation") {
        seed = config.validation_data_seed();
        n = config.validation_size;
      } else if (gen_split == "pool") {
        if (gen_round < 1 || gen_round > config.rounds.size()) throw ContractError("--round out of range");
        seed = config.pool_seed(gen_round - 1);
        n = config.rounds[gen_round - 1].pool_size;
      }
      const auto data = generate_dataset(seed, gen_n.value_or(n), config.phantom, config.catalog);
      save_dataset(gen_out, data.scans, config.catalog);
      out << "wrote " << data.scans.size() << " scans to " << gen_out << " (manifest " << data.manifest.digest()
          << ")\n";
    };
  });

  // train-base
  auto* base = app.add_subcommand("train-base", "train the base model on the old classes");
  std::string base_data, base_out, base_val;
  base->add_option("--data", base_data, "training dataset directory")->required();
  base->add_option("--validation", base_val, "validation dataset directory");
  base->add_option("--out", base_out, "checkpoint path")->required();
  base->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      const auto scans = load_scans(base_data);
      std::vector<Scan> val;
      if (!base_val.empty()) val = load_scans(base_val);
      BaseModel model = train_base(config, scans, val.empty() ? nullptr : &val);
      Checkpoint ck;
      ck.params = std::move(model.params);
      ck.provenance = {config_digest(config), config.base_training.epochs, 0, "base", config.catalog.old_classes()};
      save_checkpoint(base_out, ck);
      const auto& last = model.history.epochs.back();
      out << "trained " << model.history.epochs.size() << " epochs, final loss " << last.mean_loss << "; wrote "
          << base_out << "\n";
    };
  });

  // infer
  auto* infer = app.add_subcommand("infer", "predict masks and store them under the 'predicted' tag");
  std::string inf_ckpt, inf_data, inf_out, inf_classes = "learned";
  infer->add_option("--checkpoint", inf_ckpt)->required();
  infer->add_option("--data", inf_data)->required();
  infer->add_option("--out", inf_out, "output dataset directory")->required();
  infer->add_option("--classes", inf_classes, "classes to predict (names, old, new, all, learned)");
  infer->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      const Checkpoint ck = load_model(inf_ckpt, config);
      const ClassSet classes = parse_classes(inf_classes, config.catalog, ck.provenance.learned_classes);
      auto scans = load_scans(inf_data);
      for (auto& s : scans) {
        s.annotations[std::string(kTagPredicted)] =
            binarize_predictions(predict(ck.params, s.image, classes), config.threshold);
      }
      save_dataset(inf_out, scans, config.catalog);
      out << "predicted " << classes.size() << " classes on " << scans.size() << " scans\n";
    };
  });

  // score
  auto* score = app.add_subcommand("score", "importance scores for every scan");
  std::string sc_ckpt, sc_data, sc_out, sc_classes = "learned,new";
  score->add_option("--checkpoint", sc_ckpt)->required();
  score->add_option("--data", sc_data)->required();
  score->add_option("--out", sc_out, "scores CSV path")->required();
  score->add_option("--classes", sc_classes, "classes entering the scores");
  score->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      const Checkpoint ck = load_model(sc_ckpt, config);
      const ClassSet classes = parse_classes(sc_classes, config.catalog, ck.provenance.learned_classes);
      const auto augmentations = default_augmentations();
      std::vector<ScanScore> scores;
      for (const auto& s : load_scans(sc_data)) {
        const auto probs = predict(ck.params, s.image, classes);
        ScanScore sc;
        sc.scan_id = s.scan_id;
        sc.u = uncertainty_score(probs);
        sc.c = consistency_score(ck.params, s.image, classes, augmentations);
        sc.o = overlap_score(binarize_predictions(probs, config.threshold));
        sc.importance = importance(sc.u, sc.c, sc.o, config.weights);
        scores.push_back(sc);
      }
      write_text_file(sc_out, render_scores_csv(scores));
      out << "scored " << scores.size() << " scans\n";
    };
  });

  // select
  auto* select = app.add_subcommand("select", "pick the k most important scans");
  std::string sel_scores, sel_out;
  std::size_t sel_k = 0;
  select->add_option("--scores", sel_scores)->required();
  select->add_option("--k", sel_k)->required();
  select->add_option("--out", sel_out, "write the ids here as well");
  select->callback([&] {
    action = [&] {
      resolve_config(g);
      const auto table = read_scores_csv(sel_scores);
      const auto ids = select_for_revision(table.scores, sel_k);
      std::string text;
      for (const auto& id : ids) text += id + "\n";
      if (!sel_out.empty()) write_text_file(sel_out, text);
      out << text;
    };
  });

  // revise
  auto* revise = app.add_subcommand("revise", "simulated expert revision of selected scans");
  std::string rev_data, rev_out, rev_ids, rev_classes = "new";
  revise->add_option("--data", rev_data)->required();
  revise->add_option("--ids", rev_ids, "file with one scan id per line, or a comma list")->required();
  revise->add_option("--classes", rev_classes, "classes the expert annotates");
  revise->add_option("--out", rev_out)->required();
  revise->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      const ClassSet classes = parse_classes(rev_classes, config.catalog, {});
      std::vector<std::string> ids;
      if (fs::exists(rev_ids)) {
        std::istringstream in(read_text_file(rev_ids));
        std::string line;
        while (std::getline(in, line)) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (!line.empty()) ids.push_back(line);
        }
      } else {
        ids = split_list(rev_ids);
      }
      auto scans = load_scans(rev_data);
      std::size_t done = 0;
      for (const auto& id : ids) {
        auto it = std::find_if(scans.begin(), scans.end(), [&](const Scan& s) { return s.scan_id == id; });
        if (it == scans.end()) throw ContractError("revise: unknown scan id " + id);
        it->annotations[std::string(kTagRevised)] = oracle_revise(*it, AnnotationSet{}, classes);
        ++done;
      }
      save_dataset(rev_out, scans, config.catalog);
      out << "revised " << done << " scans\n";
    };
  });

  // merge
  auto* merge = app.add_subcommand("merge", "combine predicted and revised annotations into hybrid sets");
  std::string mg_data, mg_out;
  merge->add_option("--data", mg_data)->required();
  merge->add_option("--out", mg_out)->required();
  merge->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      auto scans = load_scans(mg_data);
      std::size_t merged = 0;
      for (auto& s : scans) {
        auto rev = s.annotations.find(std::string(kTagRevised));
        if (rev == s.annotations.end()) continue;
        auto pred = s.annotations.find(std::string(kTagPredicted));
        const AnnotationSet predicted = pred == s.annotations.end() ? AnnotationSet{} : pred->second;
        s.annotations[std::string(kTagHybrid)] = merge_hybrid(predicted, rev->second);
        ++merged;
      }
      save_dataset(mg_out, scans, config.catalog);
      out << "merged " << merged << " scans\n";
    };
  });

  // tune
  auto* tune = app.add_subcommand("tune", "continual tuning on revised (and reused) scans");
  std::string tn_ckpt, tn_data, tn_out, tn_regime, tn_scores, tn_classes, tn_val;
  tune->add_option("--checkpoint", tn_ckpt)->required();
  tune->add_option("--data", tn_data, "dataset with revised/hybrid/predicted annotations")->required();
  tune->add_option("--out", tn_out, "output checkpoint path")->required();
  tune->add_option("--regime", tn_regime, "regime name from the config (default: the first)");
  tune->add_option("--scores", tn_scores, "scores CSV used to pick reuse scans");
  tune->add_option("--classes", tn_classes, "revised classes (default: those present in revised sets)");
  tune->add_option("--validation", tn_val, "validation dataset directory");
  tune->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      const Regime& regime = find_regime(config, tn_regime);
      TuningConfig tuning = regime.tuning;
      if (g.seed) tuning.seed = derive_seed(*g.seed, 0x7u);
      const Checkpoint ck = load_model(tn_ckpt, config);
      const auto scans = load_scans(tn_data);

      std::vector<Scan> revised, rest;
      ClassSet present;
      for (const auto& s : scans) {
        auto it = s.annotations.find(std::string(kTagRevised));
        if (it != s.annotations.end()) {
          revised.push_back(s);
          for (const auto& [k, ch] : it->second.channels) {
            if (ch.provenance == Provenance::expert_revised) present.insert(k);
          }
        } else {
          rest.push_back(s);
        }
      }
      const ClassSet classes = tn_classes.empty() ? present : parse_classes(tn_classes, config.catalog, {});
      if (classes.empty()) throw ContractError("tune: no revised classes found");

      std::vector<Scan> reuse;
      if (tuning.data_strategy == DataStrategy::hybrid && tuning.reuse_fraction > 0.0) {
        if (tn_scores.empty()) throw ContractError("tune: --scores is required when reuse_fraction > 0");
        const auto table = read_scores_csv(tn_scores);
        std::vector<ScanScore> previous;
        for (const auto& sc : table.scores) {
          if (std::any_of(rest.begin(), rest.end(), [&](const Scan& s) { return s.scan_id == sc.scan_id; })) {
            previous.push_back(sc);
          }
        }
        for (const auto& id : select_reuse(previous, tuning.reuse_fraction)) {
          reuse.push_back(*std::find_if(rest.begin(), rest.end(), [&](const Scan& s) { return s.scan_id == id; }));
        }
      } else if (tuning.data_strategy == DataStrategy::full) {
        reuse = rest;
      }
      const DatasetView view = build_training_view(revised, reuse, tuning.data_strategy);

      ModelParams start = ck.params;
      if (tuning.data_strategy == DataStrategy::full) {
        start = init_model(config.model_seed(), config.arch, config.catalog);
        tuning.freeze_shared = false;
      }
      const Partition partition = tuning_partition(start, tuning, classes);
      std::vector<Scan> val;
      if (!tn_val.empty()) val = load_scans(tn_val);
      TrainOptions opts;
      opts.validation = val.empty() ? nullptr : &val;
      opts.validation_classes = config.catalog.all_ids();
      TrainResult result = train(std::move(start), view, tuning, partition, opts);

      Checkpoint next;
      next.params = std::move(result.params);
      next.optimizer = std::move(result.optimizer);
      ClassSet learned = ck.provenance.learned_classes;
      learned.insert(classes.begin(), classes.end());
      next.provenance = {config_digest(config), tuning.epochs, ck.provenance.round + 1, regime.name, learned};
      save_checkpoint(tn_out, next);
      out << "tuned on " << view.size() << " scans for " << tuning.epochs << " epochs ("
          << partition.trainable.size() << " trainable tensors); wrote " << tn_out << "\n";
    };
  });

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "per-class test DSC of a checkpoint");
  std::string ev_ckpt, ev_data, ev_out, ev_classes = "all";
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--data", ev_data)->required();
  eval->add_option("--classes", ev_classes);
  eval->add_option("--out", ev_out, "also write the JSON here");
  eval->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      const Checkpoint ck = load_model(ev_ckpt, config);
      const ClassSet classes = parse_classes(ev_classes, config.catalog, ck.provenance.learned_classes);
      const std::string text =
          dsc_json(evaluate(ck.params, load_scans(ev_data), classes, config.threshold), config.catalog) + "\n";
      if (!ev_out.empty()) write_text_file(ev_out, text);
      out << text;
    };
  });

  // loop
  auto* loop = app.add_subcommand("loop", "run the full experiment: base model then every regime and round");
  std::string lp_out, lp_regimes, lp_resume;
  std::size_t lp_start = 1;
  bool lp_print = false;
  loop->add_option("--out", lp_out, "run directory");
  loop->add_option("--regimes", lp_regimes, "comma list of regimes to run (default: all)");
  loop->add_option("--resume-from", lp_resume, "checkpoint to start from instead of training a base model");
  loop->add_option("--start-round", lp_start, "first round to run when resuming (1-based)");
  loop->add_flag("--print-config", lp_print, "print the resolved config as JSON and exit");
  loop->callback([&] {
    action = [&] {
      const auto config = resolve_config(g);
      if (lp_print) {
        out << to_json(config).dump(2) << "\n";
        return;
      }
      if (lp_out.empty()) throw ContractError("loop: --out is required");
      ExperimentOptions opts;
      opts.out_dir = lp_out;
      opts.regimes = split_list(lp_regimes);
      opts.start_round = lp_start;
      if (!lp_resume.empty()) {
        Checkpoint ck = load_model(lp_resume, config);
        opts.start_params = std::move(ck.params);
        opts.start_learned = ck.provenance.learned_classes;
      } else if (lp_start != 1) {
        throw ContractError("loop: --start-round needs --resume-from");
      }
      opts.log = [&](const std::string& msg) { err << "[loop] " << msg << "\n"; };
      const auto result = run_experiment(config, opts);
      std::size_t failed = 0;
      for (const auto& r : result.records) failed += r.status != "ok";
      out << "ran " << result.records.size() << " rounds (" << failed << " failed); report at "
          << (fs::path(lp_out) / "report.csv").string() << "\n";
    };
  });

  // report
  auto* report = app.add_subcommand("report", "DSC-vs-epoch curves from run directories");
  std::vector<std::string> rp_runs;
  std::string rp_out = "report";
  report->add_option("--runs", rp_runs, "run directories")->required();
  report->add_option("--out", rp_out, "output directory");
  report->callback([&] {
    action = [&] {
      resolve_config(g);
      std::vector<fs::path> dirs(rp_runs.begin(), rp_runs.end());
      for (const auto& p : write_report(dirs, rp_out)) out << p.string() << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (action) action();
    return 0;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ctune
