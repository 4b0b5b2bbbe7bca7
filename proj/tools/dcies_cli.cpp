// Command-line front end. Every subcommand reads the experiment config; the
// staged subcommands exchange files under the output directory.

#include <CLI11.hpp>

#include <iostream>
#include <numeric>

#include "dcies/config.hpp"
#include "dcies/harness.hpp"
#include "dcies/io.hpp"
#include "dcies/kernels.hpp"
#include "dcies/report.hpp"
#include "dcies/rng.hpp"

namespace fs = std::filesystem;
using namespace dcies;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_timestamp = false;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

std::string combo_name(const std::string& rep, ProbeClass p, std::uint64_t seed) {
  return rep + "_" + to_string(p) + "_seed" + std::to_string(seed);
}

fs::path ladder_path(const ExperimentConfig& cfg, const std::string& rep, ProbeClass p, std::uint64_t seed) {
  return cfg.output_dir / "ladders" / (combo_name(rep, p, seed) + ".json");
}

fs::path checkpoint_path(const ExperimentConfig& cfg, const std::string& rep, ProbeClass p, std::uint64_t seed,
                         Index factor) {
  return cfg.output_dir / "probes" / combo_name(rep, p, seed) / ("factor" + std::to_string(factor) + ".cbor");
}

void cmd_generate(const ExperimentConfig& cfg) {
  for (const auto& rep : cfg.representations) {
    if (!rep.mixing) continue;
    for (auto seed : cfg.seeds) {
      const auto raw = make_synthetic_dataset(cfg.synthetic, seeded_mixing(*rep.mixing, seed), seed);
      const auto dir = cfg.output_dir / "data" / rep.name / ("seed" + std::to_string(seed));
      io::write_dataset(dir, raw);
      std::cout << "wrote " << dir.string() << "\n";
    }
  }
}

void cmd_train(const ExperimentConfig& cfg) {
  for (const auto& rep : cfg.representations)
    for (auto seed : cfg.seeds) {
      const auto data = build_dataset(cfg, rep, seed);
      std::vector<Index> factors(static_cast<std::size_t>(data.factor_count()));
      std::iota(factors.begin(), factors.end(), Index{0});
      for (auto probe : cfg.probes) {
        std::optional<std::size_t> keep_index;
        if (!cfg.importance_capacity.best) keep_index = cfg.importance_capacity.index;
        const auto lr = train_ladder(data, ladder_for(cfg, probe, data), factors, cfg.training, run_seed(seed, probe),
                                     cfg.importance_capacity.best ? KeepProbes::best : KeepProbes::none, keep_index);
        io::write_text(ladder_path(cfg, rep.name, probe, seed), ladder_result_to_json(lr).dump(2) + "\n");
        for (const auto& fl : lr.factors) {
          const auto t = importance_index(cfg, fl);
          save_probe(checkpoint_path(cfg, rep.name, probe, seed, fl.factor), *fl.probes[t], fl.seeds[t]);
        }
        std::cout << "trained " << combo_name(rep.name, probe, seed) << "\n";
      }
    }
}

LadderResult read_ladder(const ExperimentConfig& cfg, const std::string& rep, ProbeClass p, std::uint64_t seed) {
  const auto path = ladder_path(cfg, rep, p, seed);
  try {
    return ladder_result_from_json(json::parse(io::read_text(path)));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

ExperimentResult staged_runs(const ExperimentConfig& cfg, bool with_importance) {
  ExperimentResult result;
  for (const auto& rep : cfg.representations)
    for (auto seed : cfg.seeds) {
      const auto data = build_dataset(cfg, rep, seed);
      for (auto probe : cfg.probes) {
        try {
          const auto lr = read_ladder(cfg, rep.name, probe, seed);
          if (with_importance) {
            std::vector<FittedProbe> chosen;
            for (const auto& fl : lr.factors) chosen.push_back(load_probe(checkpoint_path(cfg, rep.name, probe, seed, fl.factor)));
            result.runs.push_back(score_run(cfg, data, rep.name, probe, seed, lr, chosen));
          } else {
            RunResult r;
            r.representation = rep.name;
            r.probe = probe;
            r.seed = seed;
            for (const auto& s : data.factor_specs()) r.factor_names.push_back(s.name);
            r.curves = curves_for(cfg, lr, data);
            result.runs.push_back(std::move(r));
          }
        } catch (const std::exception& e) {
          result.failures.push_back(RunFailure{rep.name, probe, seed, e.what()});
        }
      }
    }
  return result;
}

void cmd_score(const ExperimentConfig& cfg, const Common& c) {
  auto result = staged_runs(cfg, true);
  if (result.runs.empty()) throw Error("no combination could be scored");
  result.aggregates = aggregate_runs(result.runs);
  const auto doc = scores_to_json(result.runs, result.aggregates, result.failures,
                                  c.no_timestamp ? std::string{} : utc_timestamp());
  io::write_text(cfg.output_dir / "scores.json", doc.dump(2) + "\n");
  for (const auto& r : result.runs)
    io::write_importance(cfg.output_dir / "importance" / (combo_name(r.representation, r.probe, r.seed) + ".csv"),
                         r.importance, json{{"representation", r.representation}, {"seed", r.seed}});
  std::cout << "wrote " << (cfg.output_dir / "scores.json").string() << "\n";
}

void cmd_curves(const ExperimentConfig& cfg) {
  auto result = staged_runs(cfg, false);
  ExperimentResult only_curves;
  only_curves.runs = std::move(result.runs);
  io::write_text(cfg.output_dir / "curves.csv", curves_csv(only_curves.runs));
  std::vector<std::pair<std::string, ProbeClass>> seen;
  for (const auto& r : only_curves.runs) {
    if (std::find(seen.begin(), seen.end(), std::make_pair(r.representation, r.probe)) != seen.end()) continue;
    seen.emplace_back(r.representation, r.probe);
    std::vector<const RunResult*> group;
    for (const auto& g : only_curves.runs)
      if (g.representation == r.representation && g.probe == r.probe) group.push_back(&g);
    for (std::size_t k = 0; k < r.curves.size(); ++k)
      io::write_text(cfg.output_dir / "plots" /
                         (r.representation + "_" + to_string(r.probe) + "_" + to_string(r.curves[k].scale) + ".svg"),
                     loss_capacity_svg(group, k, r.representation + " / " + to_string(r.probe) + " probes"));
  }
  std::cout << "wrote " << (cfg.output_dir / "curves.csv").string() << "\n";
}

void cmd_downstream(const ExperimentConfig& cfg) {
  std::vector<DownstreamRecord> records;
  for (const auto& rep : cfg.representations)
    for (auto seed : cfg.seeds) {
      const auto data = build_dataset(cfg, rep, seed);
      const auto tasks = make_downstream_tasks(data, cfg.downstream.n_reg, cfg.downstream.n_cls,
                                               derive_seed(seed, {hash_name("tasks")}));
      for (auto p : cfg.downstream.probes) {
        auto rec = downstream_performance(data, tasks, p, cfg, seed);
        rec.representation = rep.name;
        std::cout << rep.name << " " << to_string(p) << " seed " << seed << ": " << rec.mean << "\n";
        records.push_back(std::move(rec));
      }
    }
  io::write_text(cfg.output_dir / "downstream.json", downstream_to_json(records).dump(2) + "\n");
}

void cmd_report(const ExperimentConfig& cfg) {
  const auto scores = json::parse(io::read_text(cfg.output_dir / "scores.json"));
  const auto down = downstream_from_json(json::parse(io::read_text(cfg.output_dir / "downstream.json")));
  std::vector<RunResult> runs;
  for (const auto& r : scores.at("runs")) runs.push_back(run_from_json(r));
  const auto corr = correlate_runs(runs, down, cfg.downstream.cross_pairing);
  io::write_text(cfg.output_dir / "correlations.json", correlations_to_json(corr).dump(2) + "\n");
  for (const auto& e : corr.entries)
    if (e.task_type == "all")
      std::cout << e.score << " (" << e.scoring_probe << " vs " << e.downstream_probe << "): pearson " << e.pearson
                << " (p " << e.pearson_p << "), spearman " << e.spearman << " (p " << e.spearman_p << ")\n";
}

void cmd_run(const ExperimentConfig& cfg, const Common& c) {
  const auto result = run_experiment(cfg);
  emit_report(result, cfg.output_dir, ReportOptions{!c.no_timestamp, true});
  for (const auto& a : result.aggregates)
    std::cout << a.representation << " " << to_string(a.probe) << ": D " << a.D.mean << " C " << a.C.mean << " I "
              << a.I.mean << " E " << a.E.mean << " S " << a.S.mean << "\n";
  for (const auto& f : result.failures)
    std::cerr << "failed: " << combo_name(f.representation, f.probe, f.seed) << ": " << f.error << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-capacity and importance based evaluation of learned representations"};
  app.require_subcommand(1);
  Common common;
  const std::pair<const char*, const char*> subs[] = {
      {"generate", "write synthetic datasets"},
      {"train-probes", "train probe ladders and save checkpoints"},
      {"score", "importance and scores from saved ladders"},
      {"curves", "loss-capacity curves and plots from saved ladders"},
      {"downstream", "low-capacity downstream performance"},
      {"report", "correlate scores with downstream performance"},
      {"run", "end-to-end pipeline"}};
  for (const auto& [name, help] : subs) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", common.config, "experiment config (TOML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "run a single seed instead of the configured list");
    sub->add_option("--out", common.out, "output directory override");
    sub->add_flag("--no-timestamp", common.no_timestamp, "omit generated_at from scores.json");
  }
  CLI11_PARSE(app, argc, argv);

  kernels::configure_threads_from_env();
  try {
    const auto cfg = load(common);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "generate") cmd_generate(cfg);
    else if (name == "train-probes") cmd_train(cfg);
    else if (name == "score") cmd_score(cfg, common);
    else if (name == "curves") cmd_curves(cfg);
    else if (name == "downstream") cmd_downstream(cfg);
    else if (name == "report") cmd_report(cfg);
    else cmd_run(cfg, common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
