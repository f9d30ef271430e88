#include <algorithm>
#include <chrono>
#include <iostream>
#include <fstream>
#include <map>

#include "CLI11.hpp"
#include "mccdic/degrade.hpp"
#include "mccdic/dict_learn.hpp"
#include "mccdic/phantom.hpp"
#include "mccdic_cli/cli.hpp"

namespace mccdic::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Invocation {
  std::vector<std::string> argv;
  Clock::time_point start = Clock::now();
};

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

KeyValues option_values(const CLI::App& app) {
  KeyValues kv;
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
      if (res.empty() || (opt->get_type_size() == 0 && value.empty())) value = "true";
    } else {
      value = opt->get_default_str();
    }
    kv[opt->get_lnames().front()] = value;
  }
  return kv;
}

void write_manifest(const fs::path& path, const std::string& command, const Invocation& inv,
                    KeyValues params, std::vector<std::string> inputs, std::vector<std::string> outputs) {
  RunManifest m;
  m.command = command;
  m.argv = inv.argv;
  m.params = std::move(params);
  m.inputs = std::move(inputs);
  m.outputs = std::move(outputs);
  m.wall_clock_s = std::chrono::duration<double>(Clock::now() - inv.start).count();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  m.save(path);
}

fs::path sibling_manifest(const fs::path& output) { return fs::path(output.string() + ".manifest"); }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// ---- phantom --------------------------------------------------------------

struct PhantomArgs {
  std::size_t size = 128;
  std::size_t n_ellipses = 6;
  bool inconsistent = false;
  std::uint64_t seed = 0;
  std::string prefix = "phantom";
  bool pgm = false;
};

void cmd_phantom(const CLI::App& app, const PhantomArgs& a, const Invocation& inv) {
  const auto pair = make_phantom_pair(random_phantom_spec(a.size, a.n_ellipses, a.inconsistent, a.seed));
  ensure_parent(a.prefix);
  std::vector<std::string> outputs{a.prefix + "_ref.mct", a.prefix + "_target.mct"};
  save_mct(outputs[0], pair.reference);
  save_mct(outputs[1], pair.target);
  if (a.inconsistent) {
    outputs.push_back(a.prefix + "_mask.mct");
    save_mct(outputs.back(), pair.inconsistent_mask);
  }
  if (a.pgm) {
    outputs.push_back(a.prefix + "_ref.pgm");
    save_pgm(outputs.back(), pair.reference);
    outputs.push_back(a.prefix + "_target.pgm");
    save_pgm(outputs.back(), pair.target);
  }
  write_manifest(a.prefix + ".manifest", "phantom", inv, option_values(app), {}, outputs);
  for (const auto& o : outputs) std::cout << o << '\n';
}

// ---- degrade --------------------------------------------------------------

struct DegradeArgs {
  std::string mode = "sr";
  DegradeParams params;
  std::string in, out, mask_out, upsampled_out;
};

void cmd_degrade(const CLI::App& app, DegradeArgs a, const Invocation& inv) {
  a.params.mode = parse_mode(a.mode);
  if (a.params.mode == DegradeMode::none) throw std::invalid_argument("degrade: mode must be sr or recon");
  const Tensor hr = load_mct(a.in);
  if (hr.rank() != 2) throw ShapeError("degrade: input must be a 2-D image");
  const Degraded d = degrade_image(hr, a.params);
  ensure_parent(a.out);
  std::vector<std::string> outputs{a.out};
  if (a.params.mode == DegradeMode::sr) {
    save_mct(a.out, d.side);
    if (!a.upsampled_out.empty()) {
      ensure_parent(a.upsampled_out);
      save_mct(a.upsampled_out, d.target);
      outputs.push_back(a.upsampled_out);
    }
    if (!a.mask_out.empty()) throw std::invalid_argument("degrade: --mask-out applies to recon mode only");
  } else {
    save_mct(a.out, d.target);
    if (!a.mask_out.empty()) {
      ensure_parent(a.mask_out);
      save_mct(a.mask_out, d.side);
      outputs.push_back(a.mask_out);
    }
  }
  write_manifest(sibling_manifest(a.out), "degrade", inv, option_values(app), {a.in}, outputs);
}

// ---- learn ----------------------------------------------------------------

struct LearnArgs {
  std::string corpus, out, log;
  LearnConfig cfg;
  std::vector<std::size_t> widths{8, 12};
  std::string mode = "none";
  DegradeParams degrade;
  double step = -1.0;
  bool no_final_refit = false;
  double lambda = -1.0;
};

// Pairs are `<name>_ref.mct` + `<name>_target.mct`, with an optional
// `<name>_gt.mct` supervising the reconstruction banks.
std::vector<TrainingPair> load_corpus(const fs::path& dir, const DegradeParams& degrade,
                                      std::vector<std::string>& inputs) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("learn: corpus directory " + dir.string() + " not found");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string f = entry.path().filename().string();
    const std::string suffix = "_ref.mct";
    if (f.size() > suffix.size() && f.ends_with(suffix)) names.push_back(f.substr(0, f.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw std::invalid_argument("learn: no *_ref.mct files in " + dir.string());
  std::vector<TrainingPair> corpus;
  for (const auto& n : names) {
    const fs::path ref = dir / (n + "_ref.mct"), target = dir / (n + "_target.mct"), gt = dir / (n + "_gt.mct");
    if (!fs::exists(target)) throw std::invalid_argument("learn: missing " + target.string());
    TrainingPair p{load_mct(ref), load_mct(target), Tensor()};
    inputs.push_back(ref.string());
    inputs.push_back(target.string());
    if (fs::exists(gt)) {
      p.ground_truth = load_mct(gt);
      inputs.push_back(gt.string());
    } else {
      p.ground_truth = p.target;
    }
    if (degrade.mode != DegradeMode::none) p.target = degrade_image(p.target, degrade).target;
    corpus.push_back(std::move(p));
  }
  return corpus;
}

void cmd_learn(const CLI::App& app, LearnArgs a, const Invocation& inv) {
  a.degrade.mode = parse_mode(a.mode);
  a.cfg.widths = a.widths;
  if (a.step >= 0.0) a.cfg.step = a.step;
  a.cfg.final_refit = !a.no_final_refit;
  if (a.lambda >= 0.0) a.cfg.solver.lambda_u = a.cfg.solver.lambda_v = a.cfg.solver.lambda_c = a.lambda;
  a.cfg.solver.scale_levels = a.widths.size();
  std::vector<std::string> inputs;
  const auto corpus = load_corpus(a.corpus, a.degrade, inputs);
  const LearnResult result = learn(corpus, a.cfg);
  save_dictionaries(a.out, result.dicts);
  std::vector<std::string> outputs{a.out};
  if (!a.log.empty()) {
    ensure_parent(a.log);
    std::ofstream os(a.log);
    os << "epoch,objective,objective_after,recon_loss,recon_loss_after,step_dict,step_recon\n";
    for (const auto& e : result.log) {
      os << e.epoch << ',' << number(e.objective) << ',' << number(e.objective_after) << ','
         << number(e.recon_loss) << ',' << number(e.recon_loss_after) << ',' << number(e.step_dict) << ','
         << number(e.step_recon) << '\n';
    }
    outputs.push_back(a.log);
  }
  write_manifest(fs::path(a.out) / "manifest.txt", "learn", inv, option_values(app), inputs, outputs);
}

// ---- solve ----------------------------------------------------------------

struct SolveArgs {
  std::string ref, target, dict, out, trace, components;
  SolverConfig cfg;
  std::string prox = "soft";
  double eta_u = 0.0, eta_v = 0.0, eta_c = 0.0;
};

void cmd_solve(const CLI::App& app, SolveArgs a, const Invocation& inv) {
  a.cfg.prox = parse_prox(a.prox);
  if (a.cfg.prox == ProxKind::plugin) throw std::invalid_argument("solve: plugin prox is library-only");
  if (a.eta_u > 0.0) a.cfg.eta_u = a.eta_u;
  if (a.eta_v > 0.0) a.cfg.eta_v = a.eta_v;
  if (a.eta_c > 0.0) a.cfg.eta_c = a.eta_c;
  const Tensor x1 = load_mct(a.ref), x2 = load_mct(a.target);
  const ModelDictionaries dicts = load_dictionaries(a.dict);
  a.cfg.scale_levels = dicts.levels();
  const SolveResult solved = iterate(dicts, x1, x2, a.cfg);
  ensure_parent(a.out);
  save_mct(a.out, reconstruct(solved.state, dicts));
  std::vector<std::string> outputs{a.out};
  if (!a.trace.empty()) {
    ensure_parent(a.trace);
    write_trace_csv(a.trace, solved.trace);
    outputs.push_back(a.trace);
  }
  if (!a.components.empty()) {
    const fs::path dir(a.components);
    fs::create_directories(dir);
    const Components parts = decompose(solved.state, dicts);
    const std::pair<const char*, const Tensor*> images[] = {{"common_ref", &parts.common_ref},
                                                             {"unique_ref", &parts.unique_ref},
                                                             {"common_target", &parts.common_target},
                                                             {"unique_target", &parts.unique_target}};
    KeyValues scales;
    for (const auto& [name, image] : images) {
      save_mct(dir / (std::string(name) + ".mct"), *image);
      const PgmScale s = save_pgm(dir / (std::string(name) + ".pgm"), *image);
      scales[std::string(name) + ".min"] = number(s.min);
      scales[std::string(name) + ".max"] = number(s.max);
    }
    save_key_values(dir / "pgm_scale.txt", scales);
    outputs.push_back(a.components);
  }
  write_manifest(sibling_manifest(a.out), "solve", inv, option_values(app), {a.ref, a.target, a.dict}, outputs);
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string rec, gt, report, name = "rec";
};

void cmd_eval(const CLI::App& app, const EvalArgs& a, const Invocation& inv) {
  const Tensor rec = load_mct(a.rec), gt = load_mct(a.gt);
  ensure_parent(a.report);
  write_report_csv(a.report, {{a.name, {rec, gt}}});
  std::ifstream is(a.report);
  std::cout << is.rdbuf();
  write_manifest(sibling_manifest(a.report), "eval", inv, option_values(app), {a.rec, a.gt}, {a.report});
}

// ---- pipeline -------------------------------------------------------------

void cmd_pipeline(const CLI::App& app, const std::string& config, const Invocation& inv) {
  const fs::path path(config);
  if (!fs::exists(path)) throw std::invalid_argument("pipeline: config " + config + " not found");
  const PipelineConfig cfg = PipelineConfig::from_key_values(load_key_values(path), path.parent_path());
  const PipelineResult r = run_pipeline(cfg);
  KeyValues params = option_values(app);
  for (const auto& [k, v] : cfg.to_key_values()) params["config." + k] = v;
  write_manifest(cfg.out_dir / "manifest.txt", "pipeline", inv, params, {config}, r.outputs);
  std::cout << "baseline psnr " << number(r.psnr_baseline) << " dB, mccdic psnr " << number(r.psnr) << " dB\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Multi-contrast convolutional dictionary restoration", "mccdic"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Invocation inv;
  inv.argv.assign(args.begin() + (args.empty() ? 0 : 1), args.end());

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "Generate a reference/target phantom pair");
  phantom->add_option("--size", pa.size, "Image side length")->capture_default_str();
  phantom->add_option("--n-ellipses", pa.n_ellipses, "Ellipses including the outer head")->capture_default_str();
  phantom->add_flag("--inconsistent", pa.inconsistent, "Add one ellipse to the reference only");
  phantom->add_option("--seed", pa.seed, "Random seed")->capture_default_str();
  phantom->add_option("--out-prefix", pa.prefix, "Writes <prefix>_ref.mct, <prefix>_target.mct")->capture_default_str();
  phantom->add_flag("--pgm", pa.pgm, "Also write PGM previews");

  DegradeArgs da;
  auto* degrade = app.add_subcommand("degrade", "Simulate a low-resolution or undersampled target");
  degrade->add_option("--mode", da.mode, "sr or recon")->capture_default_str();
  degrade->add_option("--scale", da.params.scale, "SR scale factor")->capture_default_str();
  degrade->add_option("--accel", da.params.accel, "Cartesian acceleration")->capture_default_str();
  degrade->add_option("--center-frac", da.params.center_frac, "Fully sampled center fraction")->capture_default_str();
  degrade->add_option("--seed", da.params.mask_seed, "Mask seed")->capture_default_str();
  degrade->add_option("--in", da.in, "High-quality image")->required();
  degrade->add_option("--out", da.out, "LR image (sr) or zero-filled image (recon)")->required();
  degrade->add_option("--mask-out", da.mask_out, "Sampling mask (recon)");
  degrade->add_option("--upsampled-out", da.upsampled_out, "Zero-padded full-size image (sr)");

  LearnArgs la;
  auto* learn_cmd = app.add_subcommand("learn", "Learn dictionaries from a corpus directory");
  learn_cmd->add_option("--corpus", la.corpus, "Directory of <name>_ref.mct/<name>_target.mct[/<name>_gt.mct]")->required();
  learn_cmd->add_option("--out", la.out, "Dictionary directory")->required();
  learn_cmd->add_option("--epochs", la.cfg.epochs, "Epochs")->capture_default_str();
  learn_cmd->add_option("--seed", la.cfg.seed, "Initialization seed")->capture_default_str();
  learn_cmd->add_option("--log", la.log, "Per-epoch CSV log");
  learn_cmd->add_option("--widths", la.widths, "Channel count per level")->delimiter(',')->capture_default_str();
  learn_cmd->add_option("--filter-size", la.cfg.filter_size, "Odd filter side")->capture_default_str();
  learn_cmd->add_option("--T", la.cfg.solver.stages, "Solver stages per inference")->capture_default_str();
  learn_cmd->add_option("--lambda", la.lambda, "Shared sparsity weight (default 1e-3)");
  learn_cmd->add_option("--batch-size", la.cfg.batch_size, "Pairs per dictionary step (0 = all)")->capture_default_str();
  learn_cmd->add_option("--step", la.step, "Fixed dictionary step (default: adaptive)");
  learn_cmd->add_option("--dict-steps", la.cfg.dict_steps, "Image-side steps per batch")->capture_default_str();
  learn_cmd->add_option("--recon-steps", la.cfg.recon_steps, "Reconstruction-bank steps per batch")->capture_default_str();
  learn_cmd->add_option("--recon-base-steps", la.cfg.recon_base_steps, "Finest-level reconstruction steps")->capture_default_str();
  learn_cmd->add_flag("--no-final-refit", la.no_final_refit, "Skip the final reconstruction refit");
  learn_cmd->add_flag("--warm-start", la.cfg.warm_start, "Start inference from the previous epoch");
  learn_cmd->add_option("--mode", la.mode, "Degrade targets on load: none, sr or recon")->capture_default_str();
  learn_cmd->add_option("--scale", la.degrade.scale, "SR scale factor")->capture_default_str();
  learn_cmd->add_option("--accel", la.degrade.accel, "Cartesian acceleration")->capture_default_str();
  learn_cmd->add_option("--center-frac", la.degrade.center_frac, "Fully sampled center fraction")->capture_default_str();
  learn_cmd->add_option("--mask-seed", la.degrade.mask_seed, "Mask seed")->capture_default_str();

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Decompose a pair and reconstruct the target");
  solve->add_option("--ref", sa.ref, "Reference image x1")->required();
  solve->add_option("--target", sa.target, "Degraded target x2 at full size")->required();
  solve->add_option("--dict", sa.dict, "Dictionary directory")->required();
  solve->add_option("--T", sa.cfg.stages, "Stages")->capture_default_str();
  solve->add_option("--lambda-u", sa.cfg.lambda_u, "Sparsity weight on U")->capture_default_str();
  solve->add_option("--lambda-v", sa.cfg.lambda_v, "Sparsity weight on V")->capture_default_str();
  solve->add_option("--lambda-c", sa.cfg.lambda_c, "Sparsity weight on C")->capture_default_str();
  solve->add_option("--eta-u", sa.eta_u, "Step on U (default 0.99/||Du||^2)");
  solve->add_option("--eta-v", sa.eta_v, "Step on V (default 0.99/||Hv||^2)");
  solve->add_option("--eta-c", sa.eta_c, "Step on C (default 0.99/||Lc||^2)");
  solve->add_option("--prox", sa.prox, "soft or identity")->capture_default_str();
  solve->add_flag("--tied,!--untied", sa.cfg.tied, "Use exact adjoints (default) or stored analysis banks");
  solve->add_option("--out", sa.out, "Restored target")->required();
  solve->add_option("--trace", sa.trace, "Objective trace CSV");
  solve->add_option("--dump-components", sa.components, "Directory for common/unique component images");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM/RMSE of a reconstruction");
  eval->add_option("--rec", ea.rec, "Reconstruction")->required();
  eval->add_option("--gt", ea.gt, "Ground truth")->required();
  eval->add_option("--report", ea.report, "Output CSV")->required();
  eval->add_option("--name", ea.name, "Row label")->capture_default_str();

  std::string config;
  auto* pipeline = app.add_subcommand("pipeline", "Run phantom -> degrade -> learn -> solve -> eval");
  pipeline->add_option("config", config, "key = value config file")->required();

  std::string manifest;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest, "Manifest file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, err;
    const int code = app.exit(e, out, err);
    std::cout << out.str();
    std::cerr << err.str();
    return code;
  }

  try {
    if (phantom->parsed()) cmd_phantom(*phantom, pa, inv);
    if (degrade->parsed()) cmd_degrade(*degrade, da, inv);
    if (learn_cmd->parsed()) cmd_learn(*learn_cmd, la, inv);
    if (solve->parsed()) cmd_solve(*solve, sa, inv);
    if (eval->parsed()) cmd_eval(*eval, ea, inv);
    if (pipeline->parsed()) cmd_pipeline(*pipeline, config, inv);
    if (replay->parsed()) {
      const RunManifest m = RunManifest::load(manifest);
      if (!m.argv.empty() && m.argv.front() == "replay") throw std::invalid_argument("replay: manifest records a replay");
      std::vector<std::string> again{"mccdic"};
      again.insert(again.end(), m.argv.begin(), m.argv.end());
      return run(again);
    }
  } catch (const std::exception& e) {
    std::cerr << "mccdic: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace mccdic::cli
