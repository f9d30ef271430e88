#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "mccdic/dict_learn.hpp"
#include "mccdic/metrics.hpp"
#include "mccdic/phantom.hpp"
#include "mccdic_cli/cli.hpp"

namespace mccdic::cli {

namespace fs = std::filesystem;

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(key + ": expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v.front() != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw std::invalid_argument(key + ": empty entry");
    out.push_back(parse_uint(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw std::invalid_argument(key + ": no widths given");
  return out;
}

std::string join_widths(const std::vector<std::size_t>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

std::string mode_name(DegradeMode m) {
  switch (m) {
    case DegradeMode::none: return "none";
    case DegradeMode::sr: return "sr";
    case DegradeMode::recon: return "recon";
  }
  return "?";
}

// Records every path written so that a failed run can be rolled back.
class OutputTracker {
 public:
  explicit OutputTracker(fs::path root) : root_(std::move(root)), created_root_(!fs::exists(root_)) {
    fs::create_directories(root_);
  }
  fs::path file(const std::string& name) {
    const fs::path p = root_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    written_.push_back(p);
    return p;
  }
  void rollback() noexcept {
    std::error_code ec;
    if (created_root_) {
      fs::remove_all(root_, ec);
      return;
    }
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) fs::remove_all(*it, ec);
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : written_) out.push_back(p.lexically_relative(root_).string());
    return out;
  }

 private:
  fs::path root_;
  bool created_root_;
  std::vector<fs::path> written_;
};

void check_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t)) throw std::domain_error(what + " contains non-finite values");
}

}  // namespace

PipelineConfig PipelineConfig::from_key_values(const KeyValues& kv, const fs::path& base_dir) {
  PipelineConfig c;
  bool have_out = false;
  for (const auto& [key, v] : kv) {
    if (key == "out_dir") {
      c.out_dir = fs::path(v).is_absolute() ? fs::path(v) : base_dir / v;
      have_out = true;
    } else if (key == "seed") {
      c.seed = parse_uint(key, v);
    } else if (key == "size") {
      c.size = parse_uint(key, v);
    } else if (key == "n_ellipses") {
      c.n_ellipses = parse_uint(key, v);
    } else if (key == "inconsistent") {
      c.inconsistent = parse_bool(key, v);
    } else if (key == "mode") {
      c.degrade.mode = parse_mode(v);
    } else if (key == "scale") {
      c.degrade.scale = parse_uint(key, v);
    } else if (key == "accel") {
      c.degrade.accel = parse_double(key, v);
    } else if (key == "center_frac") {
      c.degrade.center_frac = parse_double(key, v);
    } else if (key == "mask_seed") {
      c.degrade.mask_seed = parse_uint(key, v);
    } else if (key == "train_pairs") {
      c.train_pairs = parse_uint(key, v);
    } else if (key == "epochs") {
      c.epochs = static_cast<int>(parse_uint(key, v));
    } else if (key == "batch_size") {
      c.batch_size = parse_uint(key, v);
    } else if (key == "widths") {
      c.widths = parse_widths(key, v);
    } else if (key == "filter_size") {
      c.filter_size = parse_uint(key, v);
    } else if (key == "recon_base_steps") {
      c.recon_base_steps = static_cast<int>(parse_uint(key, v));
    } else if (key == "dict") {
      c.dict = fs::path(v).is_absolute() ? fs::path(v) : base_dir / v;
    } else if (key == "stages") {
      c.solver.stages = static_cast<int>(parse_uint(key, v));
    } else if (key == "lambda_u") {
      c.solver.lambda_u = parse_double(key, v);
    } else if (key == "lambda_v") {
      c.solver.lambda_v = parse_double(key, v);
    } else if (key == "lambda_c") {
      c.solver.lambda_c = parse_double(key, v);
    } else if (key == "eta_u") {
      c.solver.eta_u = parse_double(key, v);
    } else if (key == "eta_v") {
      c.solver.eta_v = parse_double(key, v);
    } else if (key == "eta_c") {
      c.solver.eta_c = parse_double(key, v);
    } else if (key == "prox") {
      c.solver.prox = parse_prox(v);
    } else if (key == "tied") {
      c.solver.tied = parse_bool(key, v);
    } else if (key == "dump_components") {
      c.dump_components = parse_bool(key, v);
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  if (!have_out) throw std::invalid_argument("config: out_dir is required");
  if (c.size == 0) throw std::invalid_argument("config: size must be positive");
  if (c.solver.prox == ProxKind::plugin) throw std::invalid_argument("config: plugin prox is library-only");
  c.solver.validate();
  return c;
}

KeyValues PipelineConfig::to_key_values() const {
  KeyValues kv;
  kv["out_dir"] = out_dir.string();
  kv["seed"] = std::to_string(seed);
  kv["size"] = std::to_string(size);
  kv["n_ellipses"] = std::to_string(n_ellipses);
  kv["inconsistent"] = inconsistent ? "true" : "false";
  kv["mode"] = mode_name(degrade.mode);
  kv["scale"] = std::to_string(degrade.scale);
  kv["accel"] = number(degrade.accel);
  kv["center_frac"] = number(degrade.center_frac);
  kv["mask_seed"] = std::to_string(degrade.mask_seed);
  kv["train_pairs"] = std::to_string(train_pairs);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["widths"] = join_widths(widths);
  kv["filter_size"] = std::to_string(filter_size);
  kv["recon_base_steps"] = std::to_string(recon_base_steps);
  if (dict) kv["dict"] = dict->string();
  kv["stages"] = std::to_string(solver.stages);
  kv["lambda_u"] = number(solver.lambda_u);
  kv["lambda_v"] = number(solver.lambda_v);
  kv["lambda_c"] = number(solver.lambda_c);
  if (solver.eta_u) kv["eta_u"] = number(*solver.eta_u);
  if (solver.eta_v) kv["eta_v"] = number(*solver.eta_v);
  if (solver.eta_c) kv["eta_c"] = number(*solver.eta_c);
  kv["prox"] = to_string(solver.prox);
  kv["tied"] = solver.tied ? "true" : "false";
  kv["dump_components"] = dump_components ? "true" : "false";
  return kv;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  OutputTracker out(cfg.out_dir);
  std::string stage = "setup";
  auto save = [&](const std::string& name, const Tensor& t) {
    check_finite(t, name);
    save_mct(out.file(name), t);
  };
  PipelineResult result;
  try {
    stage = "phantom";
    const auto test_pair = make_phantom_pair(random_phantom_spec(cfg.size, cfg.n_ellipses, cfg.inconsistent, cfg.seed));
    save("ref.mct", test_pair.reference);
    save("gt.mct", test_pair.target);
    if (cfg.inconsistent) save("inconsistent_mask.mct", test_pair.inconsistent_mask);

    stage = "degrade";
    const Degraded degraded = degrade_image(test_pair.target, cfg.degrade);
    save("target.mct", degraded.target);
    if (cfg.degrade.mode == DegradeMode::sr) save("lr.mct", degraded.side);
    if (cfg.degrade.mode == DegradeMode::recon) save("mask.mct", degraded.side);

    stage = "learn";
    ModelDictionaries dicts;
    if (cfg.dict) {
      dicts = load_dictionaries(cfg.dict->string());
    } else if (cfg.train_pairs > 0) {
      std::vector<TrainingPair> corpus;
      for (std::size_t i = 0; i < cfg.train_pairs; ++i) {
        const auto p = make_phantom_pair(random_phantom_spec(cfg.size, cfg.n_ellipses, false, cfg.seed + 1000 + i));
        corpus.push_back({p.reference, degrade_image(p.target, cfg.degrade).target, p.target});
      }
      LearnConfig lc;
      lc.epochs = cfg.epochs;
      lc.solver = cfg.solver;
      lc.solver.tied = true;
      lc.solver.scale_levels = cfg.widths.size();
      lc.batch_size = cfg.batch_size;
      lc.seed = cfg.seed;
      lc.widths = cfg.widths;
      lc.filter_size = cfg.filter_size;
      lc.recon_base_steps = cfg.recon_base_steps;
      const LearnResult learned = learn(corpus, lc);
      dicts = learned.dicts;
      std::ofstream log(out.file("learn.csv"));
      log << "epoch,objective,objective_after,recon_loss,recon_loss_after,step_dict,step_recon\n";
      for (const auto& e : learned.log) {
        log << e.epoch << ',' << number(e.objective) << ',' << number(e.objective_after) << ','
            << number(e.recon_loss) << ',' << number(e.recon_loss_after) << ',' << number(e.step_dict) << ','
            << number(e.step_recon) << '\n';
      }
    } else {
      dicts = ModelDictionaries::random(cfg.widths, cfg.filter_size, cfg.seed);
    }
    save_dictionaries(out.file("dict").string(), dicts);

    stage = "solve";
    SolverConfig sc = cfg.solver;
    sc.scale_levels = dicts.levels();
    const SolveResult solved = iterate(dicts, test_pair.reference, degraded.target, sc);
    const Tensor rec = reconstruct(solved.state, dicts);
    save("rec.mct", rec);
    write_trace_csv(out.file("trace.csv"), solved.trace);

    stage = "eval";
    const std::string baseline_name = cfg.degrade.mode == DegradeMode::sr      ? "zero_padded"
                                      : cfg.degrade.mode == DegradeMode::recon ? "zero_filled"
                                                                               : "input";
    write_report_csv(out.file("report.csv"),
                     {{baseline_name, {degraded.target, test_pair.target}}, {"mccdic", {rec, test_pair.target}}});
    result.psnr_baseline = psnr(degraded.target, test_pair.target);
    result.psnr = psnr(rec, test_pair.target);
    result.ssim_baseline = ssim(degraded.target, test_pair.target);
    result.ssim = ssim(rec, test_pair.target);

    stage = "decompose";
    if (cfg.dump_components) {
      const Components parts = decompose(solved.state, dicts);
      const std::pair<const char*, const Tensor*> images[] = {
          {"common_ref", &parts.common_ref},       {"unique_ref", &parts.unique_ref},
          {"common_target", &parts.common_target}, {"unique_target", &parts.unique_target},
          {"ref", &test_pair.reference},           {"gt", &test_pair.target},
          {"target", &degraded.target},             {"rec", &rec}};
      KeyValues scales;
      for (const auto& [name, image] : images) {
        check_finite(*image, name);
        const std::string base = std::string("components/") + name;
        if (std::string_view(name).starts_with("common") || std::string_view(name).starts_with("unique")) {
          save_mct(out.file(base + ".mct"), *image);
        }
        const PgmScale s = save_pgm(out.file(base + ".pgm"), *image);
        scales[std::string(name) + ".min"] = number(s.min);
        scales[std::string(name) + ".max"] = number(s.max);
      }
      save_key_values(out.file("components/pgm_scale.txt"), scales);
    }
  } catch (const std::exception& e) {
    out.rollback();
    throw StageError(stage, e.what());
  }
  result.outputs = out.names();
  return result;
}

}  // namespace mccdic::cli
