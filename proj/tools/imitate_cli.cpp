// imitate: dataset generation, training, fine-tuning, evaluation and the
// live takeover session, driven by one JSON manifest.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "imitate/experiment.hpp"
#include "imitate/session.hpp"

namespace fs = std::filesystem;
using namespace imitate;
using nlohmann::json;

namespace {

constexpr const char* kOutputEnv = "IMITATE_OUTPUT_DIR";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

ExperimentManifest effective_manifest(const Common& c) {
  ExperimentManifest m = c.config.empty() ? default_manifest() : load_manifest(c.config);
  if (const char* dir = std::getenv(kOutputEnv); dir && *dir) m.output_dir = dir;
  if (c.seed) {
    m.seed = *c.seed;
    m.train.shuffle_seed = *c.seed;
  }
  return m;
}

fs::path out_root(const ExperimentManifest& m) { return fs::path(m.output_dir); }

std::vector<std::int64_t> read_seeds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open seeds file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<std::int64_t> seeds;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      seeds = json::parse(text).get<std::vector<std::int64_t>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kUsage, "seeds file: " + std::string(e.what()));
    }
  } else {
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
      try {
        seeds.push_back(std::stoll(tok));
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::kUsage, "seeds file: bad entry '" + tok + "'");
      }
    }
  }
  return seeds;
}

std::vector<NamedPolicy> read_policies(const std::vector<std::string>& entries,
                                       const ExperimentManifest& m) {
  std::vector<NamedPolicy> out;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    std::string name, path;
    if (eq != std::string::npos) {
      name = e.substr(0, eq);
      path = e.substr(eq + 1);
    } else if (e.find('/') == std::string::npos && e.find('.') == std::string::npos) {
      name = e;
      path = (out_root(m) / "policies" / (e + ".bin")).string();
    } else {
      name = fs::path(e).stem().string();
      path = e;
    }
    out.push_back({name, load_params(path)});
  }
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imitation learning with on-the-spot expert corrections"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "JSON manifest; flags override its entries")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "Master seed");

  // manifest
  auto* manifest_cmd = app.add_subcommand("manifest", "Print the effective manifest and its digest");

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "Generate the baseline demonstration dataset");
  std::optional<int> mk_games;
  std::optional<double> mk_noise;
  std::string mk_out;
  mk->add_option("--games", mk_games, "Expert games")->check(CLI::PositiveNumber);
  mk->add_option("--noise", mk_noise, "Label noise rate")->check(CLI::Range(0.0, 1.0));
  mk->add_option("--out", mk_out, "Dataset directory");

  // train-bc
  auto* tb = app.add_subcommand("train-bc", "Behavioural cloning on the baseline dataset");
  std::optional<int> tb_epochs;
  std::string tb_data, tb_out, tb_log;
  tb->add_option("--epochs", tb_epochs, "Training epochs")->check(CLI::PositiveNumber);
  tb->add_option("--data", tb_data, "Dataset directory");
  tb->add_option("--out", tb_out, "Policy file");
  tb->add_option("--log", tb_log, "Training log (JSON lines)");

  // finetune
  auto* ft = app.add_subcommand("finetune", "Fine-tune the BC policy");
  std::string ft_algo, ft_policy, ft_data, ft_out, ft_log;
  std::optional<int> ft_iterations, ft_epochs, ft_games;
  ft->add_option("--algo", ft_algo, "dagger | hg-dagger | hdd")
      ->required()
      ->check(CLI::IsMember({"dagger", "hg-dagger", "hdd"}));
  ft->add_option("--policy", ft_policy, "BC policy file");
  ft->add_option("--data", ft_data, "Baseline dataset directory");
  ft->add_option("--iterations", ft_iterations, "DAgger / HG-DAgger iterations")->check(CLI::PositiveNumber);
  ft->add_option("--epochs-per-iter", ft_epochs, "Epochs after each iteration")->check(CLI::PositiveNumber);
  ft->add_option("--games", ft_games, "HDD games")->check(CLI::PositiveNumber);
  ft->add_option("--out", ft_out, "Policy file");
  ft->add_option("--log", ft_log, "Training log (JSON lines)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Fixed-seed evaluation and report");
  std::vector<std::string> ev_policies{"bc", "dagger", "hg-dagger", "hdd"};
  int ev_games = 0;
  std::string ev_seeds, ev_out, ev_figures;
  ev->add_option("--policies", ev_policies, "name=path entries, paths, or names under <out>/policies")
      ->delimiter(',');
  ev->add_option("--games", ev_games, "Games per agent (default: every evaluation map)");
  ev->add_option("--seeds", ev_seeds, "Evaluation seeds (JSON array or whitespace separated)");
  ev->add_option("--out", ev_out, "Report path");
  ev->add_option("--figures", ev_figures, "Directory for figure CSVs");

  // serve
  auto* sv = app.add_subcommand("serve", "Live session with a human expert over WebSocket");
  std::string sv_policy, sv_map, sv_mode = "hdd", sv_save, sv_logdir;
  ServeOptions sv_opts;
  SessionConfig sv_cfg;
  sv->add_option("--policy", sv_policy, "Policy file")->required();
  sv->add_option("--map", sv_map, "Map file or generator spec")->required();
  sv->add_option("--mode", sv_mode, "hdd | hg-dagger | observe")
      ->check(CLI::IsMember({"hdd", "hg-dagger", "observe"}));
  sv->add_option("--host", sv_opts.host, "Bind address");
  sv->add_option("--port", sv_opts.port, "Port (0 picks a free one)");
  sv->add_option("--tick-rate", sv_cfg.tick_rate, "Ticks per second, 0 = unthrottled")
      ->check(CLI::NonNegativeNumber);
  sv->add_option("--episodes", sv_cfg.max_episodes, "Stop after this many episodes (0 = never)");
  sv->add_option("--save-policy", sv_save, "Write the policy here on shutdown");
  sv->add_option("--log-dir", sv_logdir, "Episode log directory");
  sv->add_flag("--probs", sv_cfg.send_probs, "Attach action probabilities to state messages");

  // run
  auto* run = app.add_subcommand("run", "Whole pipeline: dataset, BC, three fine-tunes, evaluation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    ExperimentManifest m = effective_manifest(common);
    const fs::path root = out_root(m);
    const fs::path dataset_dir = root / "dataset";
    const auto policy_path = [&](std::string_view name) {
      return root / "policies" / (std::string(name) + ".bin");
    };
    const auto log_path = [&](std::string_view name) {
      return root / "logs" / (std::string(name) + ".jsonl");
    };

    if (manifest_cmd->parsed()) {
      print_json({{"manifest", manifest_to_json(m)}, {"digest", manifest_digest(m)}});
      return 0;
    }

    if (mk->parsed()) {
      if (mk_games) m.dataset_games = *mk_games;
      if (mk_noise) m.noise_rate = *mk_noise;
      const fs::path dir = mk_out.empty() ? dataset_dir : fs::path(mk_out);
      const auto r = run_make_dataset(m, dir);
      print_json({{"dataset", dir.string()},
                  {"transitions", r.dataset.size()},
                  {"digest", digest_hex(r.dataset.checksum())},
                  {"manifest_digest", manifest_digest(m)}});
      return 0;
    }

    if (tb->parsed()) {
      if (tb_epochs) m.train.epochs = *tb_epochs;
      const Dataset d = read_dataset_dir(tb_data.empty() ? dataset_dir : fs::path(tb_data));
      const fs::path out = tb_out.empty() ? policy_path("bc") : fs::path(tb_out);
      const auto r = run_train_bc(m, d, out, tb_log.empty() ? log_path("bc") : fs::path(tb_log));
      print_json({{"policy", out.string()},
                  {"epochs", r.loss_curve.size()},
                  {"first_loss", r.loss_curve.front()},
                  {"final_loss", r.loss_curve.back()}});
      return 0;
    }

    if (ft->parsed()) {
      const auto algo = *parse_algo(ft_algo);
      if (ft_iterations) m.finetune.iterations = *ft_iterations;
      if (ft_epochs) m.finetune.epochs_per_iteration = *ft_epochs;
      if (ft_games) m.finetune.games = *ft_games;
      const Dataset d = read_dataset_dir(ft_data.empty() ? dataset_dir : fs::path(ft_data));
      const PolicyParams bc = load_params(ft_policy.empty() ? policy_path("bc") : fs::path(ft_policy));
      const fs::path out = ft_out.empty() ? policy_path(algo_name(algo)) : fs::path(ft_out);
      const auto r = run_finetune(m, algo, bc, d, out,
                                  ft_log.empty() ? log_path(algo_name(algo)) : fs::path(ft_log));
      json summary = {{"policy", out.string()},
                      {"algo", algo_name(algo)},
                      {"bc_size", r.bc_size},
                      {"final_size", r.final_size},
                      {"ratio", static_cast<double>(r.final_size) / static_cast<double>(r.bc_size)},
                      {"added_transitions", r.added_transitions},
                      {"bc_digest_unchanged", r.bc_digest_before == r.bc_digest_after},
                      {"bc_prefix_intact", r.bc_prefix_intact}};
      if (algo == FinetuneAlgo::kHdd) summary["corrections"] = r.corrections.size();
      print_json(summary);
      return 0;
    }

    if (ev->parsed()) {
      if (!ev_seeds.empty()) {
        m.eval_seeds = read_seeds(ev_seeds);
        const std::size_t needed = ev_games > 0 ? static_cast<std::size_t>(ev_games) : m.eval_maps.size();
        if (m.eval_seeds.size() < needed) {
          throw Error(ErrorCode::kUsage, "seeds file has " + std::to_string(m.eval_seeds.size()) +
                                             " entries, need " + std::to_string(needed));
        }
      }
      const auto agents = read_policies(ev_policies, m);
      const auto report = run_evaluate(m, agents, ev_games);
      const fs::path out = ev_out.empty() ? root / "report.json" : fs::path(ev_out);
      const fs::path figs = ev_figures.empty() ? out.parent_path() / "figures" : fs::path(ev_figures);
      write_report(report, manifest_digest(m), out, figs);
      json summary = json::object();
      for (const auto& a : report.agents) {
        summary[a.name] = {{"successes", a.successes},
                           {"long_collisions", a.long_collisions},
                           {"stuck_seconds", a.total_stuck_seconds}};
      }
      print_json({{"report", out.string()}, {"agents", summary}});
      return 0;
    }

    if (sv->parsed()) {
      sv_cfg.mode = *parse_session_mode(sv_mode);
      sv_cfg.finetune = m.finetune;
      sv_cfg.first_seed = static_cast<std::int64_t>(m.seed);
      if (!sv_logdir.empty()) sv_cfg.episode_log_dir = sv_logdir;
      SessionCore core(load_params(sv_policy), resolve_map(sv_map), sv_cfg);
      sv_opts.on_listening = [&](unsigned short port) {
        std::cerr << "listening on ws://" << sv_opts.host << ":" << port << " mode "
                  << session_mode_name(sv_cfg.mode) << std::endl;
      };
      serve(core, sv_cfg, sv_opts);
      if (!sv_save.empty()) {
        write_policy_artifact(core.policy(), sv_save, manifest_digest(m),
                              {{"kind", "session"},
                               {"mode", session_mode_name(sv_cfg.mode)},
                               {"corrections", core.corrections().size()},
                               {"episodes", core.records().size()}});
      }
      return 0;
    }

    if (run->parsed()) {
      const auto r = run_pipeline(m, root);
      print_json({{"dataset_transitions", r.dataset.dataset.size()},
                  {"bc_loss", {r.bc.loss_curve.front(), r.bc.loss_curve.back()}},
                  {"dagger_ratio", static_cast<double>(r.dagger.final_size) / r.dagger.bc_size},
                  {"hg_dagger_ratio", static_cast<double>(r.hg_dagger.final_size) / r.hg_dagger.bc_size},
                  {"hdd_corrective_transitions", r.hdd.added_transitions},
                  {"report", (root / "report.json").string()},
                  {"manifest_digest", manifest_digest(m)}});
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
