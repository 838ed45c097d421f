#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "freqadv/errors.hpp"

namespace freqadv::cli {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

double as_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return d;
}

long long as_int(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return i;
}

std::size_t as_count(const std::string& v) {
  const long long i = as_int(v);
  if (i < 0) throw std::invalid_argument(v);
  return static_cast<std::size_t>(i);
}

template <class F>
Setter number(F f) {
  return [f](RunConfig& c, const std::string& v) { f(c, as_double(v)); };
}
template <class F>
Setter count(F f) {
  return [f](RunConfig& c, const std::string& v) { f(c, as_count(v)); };
}

const std::map<std::string, std::map<std::string, Setter>>& keys() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"dataset",
       {
           {"per_cell", count([](RunConfig& c, std::size_t v) { c.dataset.per_cell = v; })},
           {"snr_min", {}},
           {"snr_max", {}},
           {"snr_step", {}},
           {"frame_len", count([](RunConfig& c, std::size_t v) { c.dataset.frame_len = v; })},
           {"sample_rate_hz", number([](RunConfig& c, double v) { c.dataset.sample_rate_hz = v; })},
           {"sps", count([](RunConfig& c, std::size_t v) { c.dataset.pulse.sps = v; })},
           {"rrc_rolloff", number([](RunConfig& c, double v) { c.dataset.pulse.rrc_rolloff = v; })},
           {"rrc_span_symbols", count([](RunConfig& c, std::size_t v) { c.dataset.pulse.rrc_span_symbols = v; })},
           {"gfsk_bt", number([](RunConfig& c, double v) { c.dataset.pulse.gfsk_bt = v; })},
           {"gfsk_index", number([](RunConfig& c, double v) { c.dataset.pulse.gfsk_index = v; })},
           {"fsk2_index", number([](RunConfig& c, double v) { c.dataset.pulse.fsk2_index = v; })},
           {"direct_path_freq_offset_hz",
            number([](RunConfig& c, double v) { c.dataset.channel.direct_path_freq_offset_hz = v; })},
           {"indirect_delay_s", number([](RunConfig& c, double v) { c.dataset.channel.indirect_delay_s = v; })},
           {"indirect_max_doppler_hz",
            number([](RunConfig& c, double v) { c.dataset.channel.indirect_max_doppler_hz = v; })},
           {"avg_path_gain_db", number([](RunConfig& c, double v) { c.dataset.channel.avg_path_gain_db = v; })},
           {"rician_k", number([](RunConfig& c, double v) { c.dataset.channel.rician_k = v; })},
       }},
      {"train",
       {
           {"arch", [](RunConfig& c, const std::string& v) { c.arch = models::parse_arch(v); }},
           {"optimizer",
            [](RunConfig& c, const std::string& v) { c.train.optimizer.kind = training::parse_optimizer(v); }},
           {"learning_rate", number([](RunConfig& c, double v) { c.train.optimizer.learning_rate = v; })},
           {"rho", number([](RunConfig& c, double v) { c.train.optimizer.rho = v; })},
           {"beta1", number([](RunConfig& c, double v) { c.train.optimizer.beta1 = v; })},
           {"beta2", number([](RunConfig& c, double v) { c.train.optimizer.beta2 = v; })},
           {"eps", number([](RunConfig& c, double v) { c.train.optimizer.eps = v; })},
           {"batch_size", count([](RunConfig& c, std::size_t v) { c.train.batch_size = v; })},
           {"max_epochs", count([](RunConfig& c, std::size_t v) { c.train.max_epochs = v; })},
           {"patience", count([](RunConfig& c, std::size_t v) { c.train.patience = v; })},
       }},
      {"attack",
       {
           {"epsilon", number([](RunConfig& c, double v) { c.attack.epsilon = v; })},
           {"pgd_step", number([](RunConfig& c, double v) { c.attack.pgd_step = v; })},
           {"pgd_iters", count([](RunConfig& c, std::size_t v) { c.attack.pgd_iters = v; })},
           {"uap_max_passes", count([](RunConfig& c, std::size_t v) { c.attack.uap.max_passes = v; })},
           {"uap_fool_target", number([](RunConfig& c, double v) { c.attack.uap.fool_target = v; })},
           {"uap_max_examples", count([](RunConfig& c, std::size_t v) { c.attack.uap_max_examples = v; })},
           {"zeta", number([](RunConfig& c, double v) { c.attack.budget.zeta = v; })},
           {"alpha", number([](RunConfig& c, double v) { c.attack.budget.alpha = v; })},
           {"steps", count([](RunConfig& c, std::size_t v) { c.attack.budget.steps = v; })},
           {"loss_eps", number([](RunConfig& c, double v) { c.attack.budget.loss_eps = v; })},
           {"focus_bandwidth_hz", number([](RunConfig& c, double v) { c.attack.band.focus_bandwidth_hz = v; })},
           {"meta_train", count([](RunConfig& c, std::size_t v) { c.attack.schedule.meta_train = v; })},
           {"meta_inner_steps", count([](RunConfig& c, std::size_t v) { c.attack.schedule.inner_steps = v; })},
           {"meta_tasks", count([](RunConfig& c, std::size_t v) { c.attack.schedule.tasks = v; })},
           {"split", [](RunConfig& c, const std::string& v) { c.attack_split = v; }},
           {"snr",
            [](RunConfig& c, const std::string& v) {
              if (v == "all") {
                c.attack_snr.reset();
              } else {
                c.attack_snr = static_cast<int>(as_int(v));
              }
            }},
           {"max_examples", count([](RunConfig& c, std::size_t v) { c.attack_max_examples = v; })},
       }},
      {"eval",
       {
           {"split", [](RunConfig& c, const std::string& v) { c.eval_split = v; }},
       }},
  };
  return table;
}

void check_split_name(const std::string& s, const std::string& key) {
  if (s != "train" && s != "valid" && s != "test" && s != "all") {
    throw ConfigError("config " + key + ": split must be train, valid, test or all, got '" + s + "'");
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  int snr_min = -20, snr_max = 18, snr_step = 2;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (item.parents.size() != 1) {
      throw ConfigError("config key '" + item.fullname() + "' is outside [dataset], [train], [attack] or [eval]");
    }
    const std::string& section = item.parents[0];
    const auto sec = keys().find(section);
    if (sec == keys().end()) throw ConfigError("config: unknown section [" + section + "]");
    const auto key = sec->second.find(item.name);
    if (key == sec->second.end()) throw ConfigError("config: unknown key " + where(section, item.name));
    if (item.inputs.size() != 1) throw ConfigError("config " + where(section, item.name) + " needs one value");
    const std::string& value = item.inputs[0];
    try {
      if (section == "dataset" && item.name == "snr_min") {
        snr_min = static_cast<int>(as_int(value));
      } else if (section == "dataset" && item.name == "snr_max") {
        snr_max = static_cast<int>(as_int(value));
      } else if (section == "dataset" && item.name == "snr_step") {
        snr_step = static_cast<int>(as_int(value));
      } else {
        key->second(cfg, value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError("config " + where(section, item.name) + ": " + e.what());
    } catch (const std::exception&) {
      throw ConfigError("config " + where(section, item.name) + ": bad value '" + value + "'");
    }
  }
  if (snr_step <= 0 || snr_min > snr_max || snr_min < -128 || snr_max > 127) {
    throw ConfigError("config [dataset]: need snr_step > 0 and -128 <= snr_min <= snr_max <= 127");
  }
  cfg.dataset.snrs.clear();
  for (int s = snr_min; s <= snr_max; s += snr_step) cfg.dataset.snrs.push_back(s);
  check_split_name(cfg.attack_split, "[attack] split");
  check_split_name(cfg.eval_split, "[eval] split");
  cfg.dataset.channel.validate();
  cfg.attack.band.length = cfg.dataset.frame_len;
  cfg.attack.band.sample_rate_hz = cfg.dataset.sample_rate_hz;
  cfg.attack.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.dataset.seed = seed;
  cfg.train.seed = seed;
  cfg.attack.seed = seed;
  cfg.attack.uap.seed = seed;
  cfg.attack.schedule.seed = seed;
}

std::vector<std::size_t> split_indices(const data::Dataset& ds, std::uint64_t seed, const std::string& name) {
  if (name == "all") {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  auto s = data::split_dataset(ds, seed);
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "'");
}

}  // namespace freqadv::cli
