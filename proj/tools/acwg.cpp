// acwg: command-line front end of the pipeline.
//
//   acwg synth --out runs/demo --seed 3
//   acwg run --config runs/demo/config.json
//   acwg eval --config runs/demo/config.json --model base --attack
//   acwg show-groups --out runs/demo --limit 5
//   acwg replay --manifest runs/demo/manifest.json --out runs/demo-replay
//
// Exit codes: 0 ok, 2 usage or invalid config, 3 missing upstream artifact,
// 1 anything else. Failures print one json error record on stderr.

#include "acwg/json_io.hpp"
#include "acwg/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

using namespace acwg;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kDependency = 3 };

int fail(int code, const std::string& kind, const std::string& message, const std::string& artifact = {}) {
  json rec = {{"error", kind}, {"message", message}};
  if (!artifact.empty()) rec["artifact"] = artifact;
  std::cerr << rec.dump() << std::endl;
  return code;
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<double> lambda;
  std::optional<int> beam_width, max_group_len, num_groups;
  std::optional<std::string> loss_form, ablation;
  bool fresh = false, cont = false, remine = false;
  // eval only
  std::optional<std::string> model;
  bool accuracy = false, lfr = false, attack = false, fairness = false;
  std::vector<int> budgets;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "pipeline config (json)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "global seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "worker threads (0 = default)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda", o.lambda, "contrastive weight");
  cmd->add_option("--beam-width", o.beam_width, "beam width K");
  cmd->add_option("--max-group-len", o.max_group_len, "maximum group length");
  cmd->add_option("--num-groups", o.num_groups, "groups per sample l");
  cmd->add_option("--loss-form", o.loss_form, "canonical|literal")->check(CLI::IsMember({"canonical", "literal"}));
  cmd->add_option("--ablation", o.ablation, "none|wo-voting|wo-wordgroups")
      ->check(CLI::IsMember({"none", "wo-voting", "wo-wordgroups"}));
  auto* fresh = cmd->add_flag("--fresh", o.fresh, "start ACWG from a fresh backbone");
  auto* cont = cmd->add_flag("--continue", o.cont, "start ACWG from M' (default)");
  fresh->excludes(cont);
  cmd->add_flag("--remine", o.remine, "re-mine groups before every epoch");
}

void add_eval(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--model", o.model, "base|acwg")->check(CLI::IsMember({"base", "acwg"}));
  cmd->add_flag("--accuracy", o.accuracy, "domain accuracy");
  cmd->add_flag("--lfr", o.lfr, "label flipping rate");
  cmd->add_flag("--attack", o.attack, "greedy substitution attack");
  cmd->add_flag("--fairness", o.fairness, "PCR / FPED / FNED");
  cmd->add_option("--budgets", o.budgets, "attack budgets")->delimiter(',');
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c = load_pipeline_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = fs::absolute(*o.out).lexically_normal();
  if (o.jobs) c.jobs = *o.jobs;
  if (o.lambda) c.acwg.lambda = *o.lambda;
  if (o.beam_width) c.search.beam_width = *o.beam_width;
  if (o.max_group_len) c.search.max_group_len = *o.max_group_len;
  if (o.num_groups) c.search.num_groups = *o.num_groups;
  if (o.loss_form) c.acwg.loss_form = parse_loss_form(*o.loss_form);
  if (o.ablation) c.acwg.ablation = parse_ablation(*o.ablation);
  if (o.fresh) c.fresh = true;
  if (o.cont) c.fresh = false;
  if (o.remine) c.remine = true;
  if (o.model) c.eval.model = parse_eval_model(*o.model);
  // Naming any section restricts the report to the named ones.
  if (o.accuracy || o.lfr || o.attack || o.fairness) {
    c.eval.accuracy = o.accuracy;
    c.eval.lfr = o.lfr;
    c.eval.attack = o.attack;
    c.eval.fairness = o.fairness;
  }
  if (!o.budgets.empty()) c.eval.attack_budgets = o.budgets;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACWG: counterfactual word-group mining and contrastive training"};
  app.require_subcommand(1);

  Overrides o;
  const std::vector<std::pair<const char*, const char*>> stages = {
      {"train-base", "train the ERM model M'"},
      {"mine", "integrated gradients, candidate words and word-group search"},
      {"augment", "build positive and counterfactual samples from the groups"},
      {"train-acwg", "joint cross-entropy and contrastive training"},
      {"eval", "accuracy, LFR, attack and fairness reports"},
      {"run", "train-base, mine, augment, train-acwg and eval of both models"},
  };
  std::map<std::string, CLI::App*> cmds;
  for (const auto& [name, help] : stages) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, o);
    if (std::string(name) == "eval") add_eval(cmd, o);
    cmds[name] = cmd;
  }

  SynthConfig synth;
  std::string synth_out, synth_config;
  auto* synth_cmd = app.add_subcommand("synth", "write the synthetic dataset and a config for it");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "generator and pipeline seed");
  synth_cmd->add_option("--config", synth_config, "generator settings (json)")->check(CLI::ExistingFile);

  std::string show_out;
  std::vector<std::string> show_ids;
  std::size_t show_limit = 10;
  auto* show_cmd = app.add_subcommand("show-groups", "print mined word-groups next to their samples");
  show_cmd->add_option("--out", show_out, "pipeline output directory")->required();
  show_cmd->add_option("--id", show_ids, "sample ids (repeatable)");
  show_cmd->add_option("--limit", show_limit, "samples to show when no id is given");

  std::string manifest, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "re-execute a run from its manifest and compare outputs");
  replay_cmd->add_option("--manifest", manifest, "manifest.json of the original run")->required();
  replay_cmd->add_option("--out", replay_out, "fresh output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (synth_cmd->parsed()) {
      if (!synth_config.empty()) {
        const auto seed = synth.seed;
        const bool seed_given = synth_cmd->count("--seed") > 0;
        synth = synth_config_from_json(json::parse(read_text_file(synth_config)), synth);
        if (seed_given) synth.seed = seed;
      }
      cmd_synth(synth, synth_out);
      std::printf("wrote %s\n", (fs::path(synth_out) / "config.json").c_str());
      return kOk;
    }
    if (show_cmd->parsed()) {
      std::fputs(format_group_views(show_groups(show_out, show_ids, show_limit)).c_str(), stdout);
      return kOk;
    }
    if (replay_cmd->parsed()) {
      const ReplayResult r = replay_manifest(manifest, replay_out);
      for (const auto& s : r.stages) std::printf("replayed %s\n", s.c_str());
      for (const auto& m : r.mismatches) std::printf("MISMATCH %s\n", m.c_str());
      if (!r.mismatches.empty()) return fail(kOther, "replay", std::to_string(r.mismatches.size()) + " outputs differ");
      std::printf("all outputs identical\n");
      return kOk;
    }

    PipelineConfig config;
    try {
      config = resolve(o);
    } catch (const ContractError& e) {
      return fail(kUsage, "config", e.what());
    }
    if (cmds["train-base"]->parsed()) cmd_train_base(config);
    else if (cmds["mine"]->parsed()) cmd_mine(config);
    else if (cmds["augment"]->parsed()) cmd_augment(config);
    else if (cmds["train-acwg"]->parsed()) cmd_train_acwg(config);
    else if (cmds["eval"]->parsed()) cmd_eval(config);
    else cmd_run_all(config);
    return kOk;
  } catch (const DependencyError& e) {
    return fail(kDependency, "dependency", e.what(), e.artifact());
  } catch (const ContractError& e) {
    return fail(kUsage, "contract", e.what());
  } catch (const DataError& e) {
    return fail(kOther, "data", e.what());
  } catch (const NumericError& e) {
    return fail(kOther, "numeric", e.what());
  } catch (const std::exception& e) {
    return fail(kOther, "internal", e.what());
  }
}
