// c2po: generate, train, eval, grad-check, sweep and compare from one config file.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "c2po/config.hpp"
#include "c2po/datagen.hpp"
#include "c2po/gradcheck.hpp"
#include "c2po/metrics.hpp"
#include "c2po/trainer.hpp"

namespace fs = std::filesystem;
using namespace c2po;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

ExperimentConfig resolve(const Common& c) {
  auto overrides = c.sets;
  if (c.seed_given) {
    overrides.push_back("task.seed=" + std::to_string(c.seed));
    overrides.push_back("train.seed=" + std::to_string(c.seed));
  }
  if (!c.out.empty()) overrides.push_back("output.dir=" + c.out);
  auto cfg = load_experiment_config(c.config, overrides);
  fs::create_directories(cfg.output_dir);
  std::ofstream os(fs::path(cfg.output_dir) / "resolved.ini");
  write_ini(os, to_sections(cfg));
  return cfg;
}

std::ofstream open_out(const ExperimentConfig& cfg, const std::string& name) {
  std::ofstream os(fs::path(cfg.output_dir) / name);
  if (!os) throw std::runtime_error("cannot write " + (fs::path(cfg.output_dir) / name).string());
  return os;
}

void write_json(const ExperimentConfig& cfg, const std::string& name, const nlohmann::json& j) {
  open_out(cfg, name) << j.dump(2) << '\n';
}

void write_metrics(const ExperimentConfig& cfg, const std::string& run, const MetricsReport& m) {
  if (cfg.wants("json")) write_json(cfg, "metrics.json", to_json(m));
  if (cfg.wants("csv")) {
    auto os = open_out(cfg, "metrics.csv");
    os << metrics_csv_header() << '\n';
    write_metrics_csv_rows(os, run, m);
  }
}

int cmd_generate(const Common& c) {
  const auto cfg = resolve(c);
  const auto ds = experiment_dataset(cfg);
  save_triples(ds, (fs::path(cfg.output_dir) / "triples.jsonl").string());
  save_vocab(ds.vocab, (fs::path(cfg.output_dir) / "vocab.json").string());
  std::cout << "wrote " << ds.triples.size() << " triples (" << ds.count(Split::Train) << " train, "
            << ds.count(Split::InDomainTest) << " in-domain, " << ds.count(Split::AntiShortcutTest)
            << " anti-shortcut) to " << cfg.output_dir << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& resume) {
  const auto cfg = resolve(c);
  const auto ds = experiment_dataset(cfg);
  auto trainer = resume.empty() ? Trainer(prepare_base_policy(ds, cfg.train), ds, cfg.train)
                                : Trainer::load_checkpoint(resume, ds, cfg.train);
  trainer.run();
  const auto dir = fs::path(cfg.output_dir);
  trainer.save_checkpoint((dir / "checkpoint.json").string());
  save_policy(trainer.policy(), (dir / "policy.json").string());
  save_policy(trainer.reference(), (dir / "reference.json").string());
  if (cfg.wants("json")) write_json(cfg, "history.json", to_json(trainer.history()));
  if (cfg.wants("csv")) {
    auto os = open_out(cfg, "history.csv");
    write_history_csv(os, trainer.history());
  }
  const auto& last = trainer.history().back();
  if (last.metrics) write_metrics(cfg, to_string(cfg.train.objective), *last.metrics);
  std::cout << to_string(cfg.train.objective) << ": " << last.step << " steps, train zones active/latent/fair = "
            << last.zones.active << '/' << last.zones.latent << '/' << last.zones.fair;
  if (last.metrics)
    std::cout << ", accuracy " << last.metrics->accuracy << ", anti-shortcut " << last.metrics->anti_shortcut_accuracy
              << ", bias " << last.metrics->bias;
  std::cout << '\n';
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint) {
  const auto cfg = resolve(c);
  const auto ds = experiment_dataset(cfg);
  std::ifstream is(checkpoint);
  if (!is) throw LoadError("cannot open " + checkpoint);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("corrupt checkpoint " + checkpoint + ": " + e.what());
  }
  const bool state = j.contains("format") && j["format"] == "c2po-train-state";
  const Policy policy = policy_from_json(state ? j.at("policy") : j);
  if (!(policy.vocab == ds.vocab)) throw DomainError("checkpoint vocabulary does not match the dataset");
  const auto m = evaluate(policy, ds, EvalConfig{cfg.train.loss.score, cfg.train.loss.delta_margin, cfg.train.positive_token});
  write_metrics(cfg, fs::path(checkpoint).stem().string(), m);
  std::cout << "accuracy " << m.accuracy << ", anti-shortcut " << m.anti_shortcut_accuracy << ", gap "
            << m.generalization_gap << ", bias " << m.bias << '\n';
  return 0;
}

int cmd_gradcheck(const Common& c, std::size_t instances) {
  const auto cfg = resolve(c);
  GradCheckOptions opt;
  opt.instances = instances;
  opt.seed = cfg.train.seed;
  const auto rows = run_gradcheck_suite(opt);
  auto os = open_out(cfg, "gradcheck.csv");
  write_gradcheck_csv(os, rows);
  write_gradcheck_csv(std::cout, rows);
  bool ok = true;
  for (const auto& r : rows) ok &= r.pass;
  return ok ? 0 : 1;
}

int cmd_sweep(const Common& c) {
  const auto cfg = resolve(c);
  const auto ds = experiment_dataset(cfg);
  const Policy base = prepare_base_policy(ds, cfg.train);
  const auto cells = sweep(cfg.train, cfg.sweep_lambdas, cfg.sweep_deltas, ds, base);
  {
    auto os = open_out(cfg, "sweep.csv");
    write_sweep_csv(os, cells);
  }
  write_sweep_csv(std::cout, cells);
  if (cfg.wants("json")) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& cell : cells)
      rows.push_back({{"lambda", cell.lambda},
                      {"delta", cell.delta},
                      {"ok", cell.ok},
                      {"error", cell.error},
                      {"steps", cell.steps},
                      {"metrics", cell.metrics ? to_json(*cell.metrics) : nlohmann::json(nullptr)}});
    write_json(cfg, "sweep.json", {{"schema", "c2po-sweep"}, {"version", 1}, {"cells", rows}});
  }
  return 0;
}

int cmd_compare(const Common& c, std::vector<std::string> objectives) {
  const auto cfg = resolve(c);
  if (objectives.empty()) objectives = cfg.compare_objectives;
  const auto ds = experiment_dataset(cfg);
  const Policy base = prepare_base_policy(ds, cfg.train);
  const char* header =
      "objective,steps,accuracy,anti_shortcut_accuracy,generalization_gap,fped,fned,bias,train_fair_fraction,"
      "train_latent_fraction,train_active_fraction";
  std::ostringstream table;
  table << header << '\n';
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& name : objectives) {
    TrainConfig tc = cfg.train;
    tc.objective = objective_from_string(name);
    const auto res = train(base, ds, tc);
    const auto& last = res.history.back();
    const auto& z = last.zones;
    table << to_string(tc.objective) << ',' << last.step;
    if (last.metrics) {
      const auto& m = *last.metrics;
      table << ',' << format_double(m.accuracy) << ',' << format_double(m.anti_shortcut_accuracy) << ','
            << format_double(m.generalization_gap) << ',' << format_double(m.fped) << ',' << format_double(m.fned)
            << ',' << format_double(m.bias);
    } else {
      table << ",,,,,,";
    }
    table << ',' << format_double(z.fraction(BiasZone::FairAlignment)) << ','
          << format_double(z.fraction(BiasZone::LatentSensitivity)) << ','
          << format_double(z.fraction(BiasZone::ActiveBias)) << '\n';
    rows.push_back({{"objective", to_string(tc.objective)},
                    {"steps", last.step},
                    {"train_zone_fractions",
                     {{"active_bias", z.fraction(BiasZone::ActiveBias)},
                      {"latent_sensitivity", z.fraction(BiasZone::LatentSensitivity)},
                      {"fair_alignment", z.fraction(BiasZone::FairAlignment)}}},
                    {"metrics", last.metrics ? to_json(*last.metrics) : nlohmann::json(nullptr)}});
  }
  open_out(cfg, "compare.csv") << table.str();
  if (cfg.wants("json")) write_json(cfg, "compare.json", {{"schema", "c2po-compare"}, {"version", 1}, {"rows", rows}});
  std::cout << table.str();
  return 0;
}

int fail(const char* type, const std::string& msg, int code) {
  std::cerr << nlohmann::json{{"error", {{"type", type}, {"message", msg}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal-contrastive preference optimization laboratory"};
  app.require_subcommand(1);
  Common common;
  std::string resume, checkpoint;
  std::vector<std::string> objectives;
  std::size_t instances = 100;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI configuration file");
    sub->add_option("--out", common.out, "output directory (overrides output.dir)");
    sub->add_option("--set", common.sets, "override a leaf key: section.key=value")->take_all();
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { common.seed = s, common.seed_given = true; }, "task and training seed");
  };
  auto* gen = app.add_subcommand("generate", "write synthetic triples");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "train one objective, write checkpoints and history");
  add_common(tr);
  tr->add_option("--resume", resume, "continue from a training checkpoint");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the configured dataset");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "policy or training checkpoint")->required();
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every analytic gradient");
  add_common(gc);
  gc->add_option("--instances", instances, "random instances per check");
  auto* sw = app.add_subcommand("sweep", "lambda x delta grid of C2PO runs");
  add_common(sw);
  auto* cmp = app.add_subcommand("compare", "train several objectives on the same data and seed");
  add_common(cmp);
  cmp->add_option("--objectives", objectives, "objectives to compare (default: compare.objectives)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_generate(common);
    if (*tr) return cmd_train(common, resume);
    if (*ev) return cmd_eval(common, checkpoint);
    if (*gc) return cmd_gradcheck(common, instances);
    if (*sw) return cmd_sweep(common);
    if (*cmp) return cmd_compare(common, objectives);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), 3);
  } catch (const LoadError& e) {
    return fail("load", e.what(), 3);
  } catch (const DomainError& e) {
    return fail("domain", e.what(), 4);
  } catch (const TrainingDiverged& e) {
    return fail("diverged", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 1;
}
