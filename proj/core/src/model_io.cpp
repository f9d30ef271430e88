#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "mccdic/io.hpp"
#include "mccdic/solver.hpp"

namespace mccdic {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "dict.toml";
constexpr const char* kFormat = "mccdic-dict-1";

std::string join(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void save_ms(const fs::path& dir, const std::string& name, const MultiScaleDictionary& d,
             KeyValues& kv) {
  const auto banks = d.banks();
  for (std::size_t i = 0; i < banks.size(); ++i) {
    const std::string bank = name + (i == 0 ? "_base" : "_up" + std::to_string(i - 1));
    save_mct(dir / ("bank_" + bank + ".mct"), banks[i]->filters());
    kv["bank." + bank] = "n=" + std::to_string(banks[i]->size()) +
                         " K=" + std::to_string(banks[i]->count()) +
                         " p=" + std::to_string(banks[i]->channels()) +
                         " level=" + std::to_string(i);
  }
}

MultiScaleDictionary load_ms(const fs::path& dir, const std::string& name, std::size_t levels) {
  auto base = DictionaryBank(load_mct(dir / ("bank_" + name + "_base.mct")));
  std::vector<DictionaryBank> up;
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    up.emplace_back(load_mct(dir / ("bank_" + name + "_up" + std::to_string(l) + ".mct")));
  }
  return MultiScaleDictionary(std::move(base), std::move(up));
}

const std::string& require(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("dictionary manifest: missing key '" + key + "'");
  return it->second;
}

}  // namespace

void save_dictionaries(const std::string& dir_name, const ModelDictionaries& dicts) {
  dicts.validate();
  const fs::path dir(dir_name);
  fs::create_directories(dir);
  KeyValues kv;
  kv["format"] = kFormat;
  kv["filter_size"] = std::to_string(dicts.filter_size());
  kv["levels"] = std::to_string(dicts.levels());
  kv["widths"] = join(dicts.widths());
  kv["tied"] = dicts.tied() ? "true" : "false";
  const std::pair<const MultiScalePair*, const char*> ops[] = {
      {&dicts.Dc, "Dc"}, {&dicts.Du, "Du"}, {&dicts.Hc, "Hc"},
      {&dicts.Hv, "Hv"}, {&dicts.Qc, "Qc"}, {&dicts.Qv, "Qv"}};
  std::string names;
  for (const auto& [pair, name] : ops) {
    save_ms(dir, name, pair->synthesis(), kv);
    if (!pair->tied()) save_ms(dir, std::string(name) + "_adj", pair->analysis(), kv);
    names += std::string(names.empty() ? "" : ",") + name;
  }
  if (dicts.Lc_analysis) {
    save_ms(dir, "Lc_adj_ref", dicts.Lc_analysis->first, kv);
    save_ms(dir, "Lc_adj_target", dicts.Lc_analysis->second, kv);
  }
  kv["names"] = names;
  save_key_values(dir / kManifest, kv);
}

ModelDictionaries load_dictionaries(const std::string& dir_name) {
  const fs::path dir(dir_name);
  const auto kv = load_key_values(dir / kManifest);
  if (require(kv, "format") != kFormat) throw FormatError("dictionary manifest: unknown format");
  const std::size_t levels = std::stoul(require(kv, "levels"));
  const bool tied = require(kv, "tied") == "true";
  ModelDictionaries d;
  const std::pair<MultiScalePair*, const char*> ops[] = {
      {&d.Dc, "Dc"}, {&d.Du, "Du"}, {&d.Hc, "Hc"}, {&d.Hv, "Hv"}, {&d.Qc, "Qc"}, {&d.Qv, "Qv"}};
  for (const auto& [pair, name] : ops) {
    *pair = MultiScalePair(load_ms(dir, name, levels));
    const std::string adj = std::string(name) + "_adj";
    if (!tied && fs::exists(dir / ("bank_" + adj + "_base.mct"))) {
      *pair = MultiScalePair(pair->synthesis(), load_ms(dir, adj, levels));
    }
  }
  if (!tied && fs::exists(dir / "bank_Lc_adj_ref_base.mct")) {
    d.Lc_analysis.emplace(load_ms(dir, "Lc_adj_ref", levels), load_ms(dir, "Lc_adj_target", levels));
  }
  d.validate();
  return d;
}

}  // namespace mccdic
