#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "freqadv/checkpoint.hpp"
#include "freqadv/errors.hpp"
#include "freqadv/metrics.hpp"
#include "freqadv/parallel.hpp"
#include "freqadv/rng.hpp"

namespace freqadv::cli {

namespace fs = std::filesystem;
using models::Arch;
using models::Network;

namespace {

constexpr const char* kRecordsHeader = "index,label,snr_db,clean_pred,adv_pred,success,linf";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

struct LoadedData {
  data::Dataset ds;
  data::Manifest manifest;
};

LoadedData load_data(const std::string& path) {
  LoadedData d{data::load_dataset(path), data::load_manifest(path + ".manifest")};
  data::verify_manifest(d.manifest, d.ds);
  return d;
}

Network<double> load_model(const std::string& path) { return models::load_checkpoint(path).model.cast<double>(); }

std::vector<std::size_t> choose_examples(const RunConfig& cfg, const LoadedData& d) {
  auto idx = split_indices(d.ds, d.manifest.seed, cfg.attack_split);
  if (cfg.attack_snr) idx = data::select_snr(d.ds, idx, *cfg.attack_snr);
  if (cfg.attack_max_examples > 0 && idx.size() > cfg.attack_max_examples) {
    SeededRng rng(cfg.attack.seed);
    for (std::size_t i = 0; i < cfg.attack_max_examples; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    idx.resize(cfg.attack_max_examples);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

data::Dataset to_dataset(const data::Dataset& like, std::span<const std::size_t> indices, const Tensor<double>& frames) {
  data::Dataset out;
  out.frame_len = like.frame_len;
  out.sample_rate_hz = like.sample_rate_hz;
  const std::size_t per = 2 * like.frame_len;
  std::vector<float> f(per);
  for (std::size_t e = 0; e < indices.size(); ++e) {
    for (std::size_t i = 0; i < per; ++i) f[i] = static_cast<float>(frames[e * per + i]);
    out.push_back(like.labels[indices[e]], like.snrs[indices[e]], f);
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected key=value in " + path.string(), no);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<std::size_t> read_record_indices(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) throw FormatError("bad header in " + path.string(), 1);
  std::vector<std::size_t> idx;
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    try {
      idx.push_back(std::stoull(line.substr(0, line.find(','))));
    } catch (const std::exception&) {
      throw FormatError("bad record index in " + path.string(), no);
    }
  }
  return idx;
}

std::vector<int> present_snrs(const data::Dataset& ds, std::span<const std::size_t> idx) {
  std::set<int> s;
  for (auto i : idx) s.insert(ds.snrs[i]);
  return {s.begin(), s.end()};
}

// ---- subcommands ----

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  int jobs = 0;

  RunConfig load() const {
    RunConfig cfg = config.empty() ? parse_config("") : load_config(config);
    apply_seed(cfg, seed);
    set_threads(jobs);
    return cfg;
  }
};

void cmd_gen(const Common& common, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = common.load();
  const auto ds = data::generate_dataset(cfg.dataset);
  const auto manifest =
      data::save_dataset(out_path, ds, data::make_manifest(ds, cfg.dataset.seed, cfg.dataset.channel.digest()));
  out << "wrote " << ds.size() << " records to " << out_path << " payload_digest=" << manifest.payload_digest << "\n";
}

training::TrainResult train_one(const RunConfig& cfg, const LoadedData& d, Arch arch, training::OptimizerKind opt,
                                std::uint64_t seed, const std::string& path, std::ostream& out) {
  training::TrainConfig tc = cfg.train;
  tc.optimizer.kind = opt;
  tc.seed = seed;
  const auto split = data::split_dataset(d.ds, d.manifest.seed);
  const auto label = std::string(models::arch_name(arch)) + "/" + std::string(training::optimizer_name(opt));
  auto r = training::train(Network<float>::build(arch, seed), d.ds, split.train, split.valid, tc,
                           [&](const training::EpochStats& e) {
                             out << label << " epoch " << e.epoch << " loss " << metrics::format_number(e.train_loss)
                                 << " train_acc " << metrics::format_number(e.train_accuracy) << " valid_acc "
                                 << metrics::format_number(e.valid_accuracy) << "\n";
                           });
  models::save_checkpoint(path, r.model,
                              {std::string(training::optimizer_name(opt)), seed, r.best_valid_accuracy,
                               r.history.size(), r.best_epoch});
  std::string csv = "epoch,train_loss,train_accuracy,valid_accuracy\n";
  for (const auto& e : r.history) {
    csv += std::to_string(e.epoch) + "," + metrics::format_number(e.train_loss) + "," +
           metrics::format_number(e.train_accuracy) + "," + metrics::format_number(e.valid_accuracy) + "\n";
  }
  write_text(path + ".history.csv", csv);
  return r;
}

void cmd_train(const Common& common, const std::string& dataset, const std::string& arch,
               const std::string& optimizer, const std::string& out_path, std::ostream& out) {
  RunConfig cfg = common.load();
  if (!arch.empty()) cfg.arch = models::parse_arch(arch);
  if (!optimizer.empty()) cfg.train.optimizer.kind = training::parse_optimizer(optimizer);
  const auto d = load_data(dataset);
  const auto r = train_one(cfg, d, cfg.arch, cfg.train.optimizer.kind, cfg.train.seed, out_path, out);
  out << "best valid accuracy " << metrics::format_number(r.best_valid_accuracy) << " at epoch " << r.best_epoch
      << ", wrote " << out_path << "\n";
}

void cmd_collection(const Common& common, const std::string& dataset, const std::string& out_dir, std::ostream& out) {
  const RunConfig cfg = common.load();
  const auto d = load_data(dataset);
  make_dir(out_dir);
  const training::OptimizerKind opts[] = {training::OptimizerKind::rmsprop, training::OptimizerKind::adam,
                                          training::OptimizerKind::adamax};
  std::uint64_t k = 0;
  std::string listing;
  auto one = [&](Arch arch, training::OptimizerKind opt) {
    const std::string name = std::string(models::arch_name(arch)) + "-" + std::string(training::optimizer_name(opt));
    const auto path = (fs::path(out_dir) / (name + ".amcm")).string();
    const auto r = train_one(cfg, d, arch, opt, splitmix64(cfg.train.seed ^ ++k), path, out);
    listing += name + ".amcm valid_accuracy=" + metrics::format_number(r.best_valid_accuracy) + "\n";
  };
  for (Arch arch : models::collection_archs())
    for (auto opt : opts) one(arch, opt);
  one(Arch::googlenet_analog, training::OptimizerKind::adam);
  write_text(fs::path(out_dir) / "collection.txt", listing);
  out << "wrote 12 collection checkpoints and the googlenet_analog target to " << out_dir << "\n";
}

struct Collection {
  std::vector<Network<double>> members;
  std::optional<Network<double>> target;
};

Collection load_collection_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("collection directory " + dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".amcm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Collection c;
  for (const auto& f : files) {
    auto net = load_model(f.string());
    if (net.arch() == Arch::googlenet_analog) {
      c.target = std::move(net);
    } else {
      c.members.push_back(std::move(net));
    }
  }
  return c;
}

void cmd_attack(const Common& common, const std::string& attack, const std::string& checkpoint_path,
                const std::string& collection_dir, const std::string& victim_path, const std::string& dataset,
                const std::string& out_dir, std::ostream& out) {
  RunConfig cfg = common.load();
  cfg.attack.kind = attacks::parse_attack(attack);
  const bool meta = cfg.attack.kind == attacks::AttackKind::meta_sffaa;
  if (meta && collection_dir.empty()) throw UsageError("meta-sffaa needs --collection-dir");
  if (!meta && checkpoint_path.empty()) throw UsageError(std::string(attack) + " needs --checkpoint");

  const auto d = load_data(dataset);
  Collection coll;
  attacks::ModelCollection surrogates;
  std::optional<Network<double>> model, victim;
  if (meta) {
    coll = load_collection_dir(collection_dir);
    surrogates = attacks::make_collection(coll.members);
  } else {
    model = load_model(checkpoint_path);
  }
  if (!victim_path.empty()) {
    victim = load_model(victim_path);
  } else if (meta) {
    if (!coll.target) throw UsageError("no --victim given and no googlenet_analog checkpoint in " + collection_dir);
    victim = *coll.target;
  }
  attacks::AttackTargets targets;
  targets.model = model ? &*model : nullptr;
  targets.collection = meta ? &surrogates : nullptr;
  targets.victim = victim ? &*victim : nullptr;

  const auto idx = choose_examples(cfg, d);
  std::vector<std::size_t> craft;
  if (cfg.attack.kind == attacks::AttackKind::uap) craft = data::split_dataset(d.ds, d.manifest.seed).train;
  const auto rep = attacks::attack_batch(cfg.attack, targets, d.ds, idx, craft);

  make_dir(out_dir);
  const fs::path dir(out_dir);
  const auto adv = to_dataset(d.ds, idx, rep.adversarial);
  data::save_dataset((dir / "adversarial.amc").string(), adv,
                     data::make_manifest(adv, d.manifest.seed, d.manifest.channel_digest));
  std::string records = std::string(kRecordsHeader) + "\n", timing = "index,seconds\n";
  std::size_t fooled = 0;
  double worst = 0;
  for (const auto& r : rep.records) {
    records += std::to_string(r.index) + "," + std::to_string(r.label) + "," + std::to_string(r.snr_db) + "," +
               std::to_string(r.clean_pred) + "," + std::to_string(r.adv_pred) + "," + (r.success ? "1" : "0") + "," +
               metrics::format_number(r.linf) + "\n";
    timing += std::to_string(r.index) + "," + metrics::format_number(r.seconds) + "\n";
    fooled += r.success;
    worst = std::max(worst, r.linf);
  }
  write_text(dir / "records.csv", records);
  write_text(dir / "timing.csv", timing);

  const auto& a = cfg.attack;
  std::ostringstream info;
  info << "attack=" << attacks::attack_name(a.kind) << "\n"
       << "dataset_payload_digest=" << d.manifest.payload_digest << "\n"
       << "examples=" << rep.records.size() << "\n"
       << "seed=" << a.seed << "\n"
       << "epsilon=" << metrics::format_number(a.epsilon) << "\n"
       << "pgd_step=" << metrics::format_number(a.pgd_step) << "\n"
       << "pgd_iters=" << a.pgd_iters << "\n"
       << "zeta=" << metrics::format_number(a.budget.zeta) << "\n"
       << "alpha=" << metrics::format_number(a.budget.alpha) << "\n"
       << "steps=" << a.budget.steps << "\n"
       << "focus_bandwidth_hz=" << metrics::format_number(a.band.focus_bandwidth_hz) << "\n"
       << "meta_train=" << a.schedule.meta_train << "\n"
       << "meta_inner_steps=" << a.schedule.inner_steps << "\n"
       << "meta_tasks=" << a.schedule.tasks << "\n"
       << "success_rate="
       << metrics::format_number(rep.records.empty() ? 0.0 : static_cast<double>(fooled) / rep.records.size()) << "\n"
       << "max_linf=" << metrics::format_number(worst) << "\n";
  write_text(dir / "attack.txt", info.str());
  out << attacks::attack_name(a.kind) << ": " << fooled << "/" << rep.records.size() << " misclassified, max linf "
      << metrics::format_number(worst) << ", wrote " << out_dir << "\n";
}

void cmd_eval(const Common& common, const std::string& checkpoint_path, const std::string& dataset,
              const std::vector<std::string>& adversarial, const std::string& out_dir, std::ostream& out) {
  const RunConfig cfg = common.load();
  const auto d = load_data(dataset);
  const auto model = load_model(checkpoint_path);
  attacks::BandSpec band = cfg.attack.band;

  const auto idx = split_indices(d.ds, d.manifest.seed, cfg.eval_split);
  const auto snr_order = present_snrs(d.ds, idx);
  auto snrs_of = [&](std::span<const std::size_t> ii) {
    std::vector<int> s;
    for (auto i : ii) s.push_back(d.ds.snrs[i]);
    return s;
  };
  std::vector<metrics::AccuracyRow> acc;
  {
    const auto pred = attacks::classify(model, data::gather<double>(d.ds, idx));
    const auto t = metrics::accuracy_by_snr("clean", data::gather_labels(d.ds, idx), pred, snrs_of(idx), snr_order);
    acc.insert(acc.end(), t.rows.begin(), t.rows.end());
  }
  std::vector<metrics::MetricRow> rows;
  std::vector<metrics::NamedProfile> profiles;
  for (const auto& adv_dir : adversarial) {
    const fs::path dir(adv_dir);
    const auto info = read_key_values(dir / "attack.txt");
    const auto name = info.count("attack") ? info.at("attack") : dir.filename().string();
    const auto aidx = read_record_indices(dir / "records.csv");
    const auto adv = data::load_dataset((dir / "adversarial.amc").string());
    if (adv.size() != aidx.size()) throw FormatError("adversarial.amc and records.csv disagree in " + adv_dir, 0);
    for (auto i : aidx)
      if (i >= d.ds.size()) throw FormatError("record index beyond the dataset in " + adv_dir, 0);
    std::vector<std::size_t> all(adv.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto adv_frames = data::gather<double>(adv, all);
    const auto clean_frames = data::gather<double>(d.ds, aidx);
    const auto pred = attacks::classify(model, adv_frames);
    const auto t = metrics::accuracy_by_snr(name, data::gather_labels(d.ds, aidx), pred, snrs_of(aidx),
                                            present_snrs(d.ds, aidx));
    acc.insert(acc.end(), t.rows.begin(), t.rows.end());
    rows.push_back(metrics::summarize(name, clean_frames, adv_frames, band));
    if (!aidx.empty()) {
      Tensor<double> delta = adv_frames;
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= clean_frames[i];
      profiles.push_back({name, metrics::spectrum_profile(delta, band)});
    }
  }
  make_dir(out_dir);
  write_text(fs::path(out_dir) / "accuracy.csv", metrics::accuracy_csv(acc));
  write_text(fs::path(out_dir) / "metrics.csv", metrics::metrics_csv(rows));
  write_text(fs::path(out_dir) / "profile.csv", metrics::profile_csv(profiles));
  out << "evaluated " << idx.size() << " clean examples and " << adversarial.size() << " attack runs, wrote "
      << out_dir << "\n";
}

void cmd_report(const std::vector<std::string>& eval_dirs, const std::string& out_dir, std::ostream& out) {
  // (attack, snr) -> pooled correct count and n
  std::map<std::pair<std::string, int>, std::pair<double, std::size_t>> acc;
  std::vector<std::string> attack_order;
  std::map<std::string, std::pair<metrics::MetricRow, std::size_t>> met;
  std::vector<std::string> metric_order;
  auto remember = [](std::vector<std::string>& order, const std::string& a) {
    if (std::find(order.begin(), order.end(), a) == order.end()) order.push_back(a);
  };
  for (const auto& d : eval_dirs) {
    for (const auto& r : metrics::parse_accuracy_csv(read_text(fs::path(d) / "accuracy.csv"))) {
      auto& slot = acc[{r.attack, r.snr_db}];
      slot.first += r.accuracy * static_cast<double>(r.n);
      slot.second += r.n;
      remember(attack_order, r.attack);
    }
    const auto mpath = fs::path(d) / "metrics.csv";
    if (!fs::exists(mpath)) continue;
    for (const auto& r : metrics::parse_metrics_csv(read_text(mpath))) {
      auto& slot = met[r.attack];
      if (slot.second == 0) slot.first = metrics::MetricRow{r.attack};
      slot.first.mean_fd += r.mean_fd;
      slot.first.mean_oser_db += r.mean_oser_db;
      slot.first.in_energy += r.in_energy;
      slot.first.out_energy += r.out_energy;
      ++slot.second;
      remember(metric_order, r.attack);
    }
  }
  std::vector<metrics::AccuracyRow> rows;
  std::set<int> snrs;
  for (const auto& a : attack_order) {
    for (const auto& [key, v] : acc) {
      if (key.first != a) continue;
      rows.push_back({key.second, a, v.second ? v.first / static_cast<double>(v.second) : 0.0, v.second});
      snrs.insert(key.second);
    }
  }
  std::vector<metrics::MetricRow> mrows;
  for (const auto& a : metric_order) {
    auto [r, n] = met.at(a);
    const double k = static_cast<double>(n);
    r.mean_fd /= k;
    r.mean_oser_db /= k;
    r.in_energy /= k;
    r.out_energy /= k;
    mrows.push_back(r);
  }
  // wide table: one row per SNR, one column per attack
  std::string wide = "snr_db";
  for (const auto& a : attack_order) wide += "," + a;
  wide += "\n";
  for (int s : snrs) {
    wide += std::to_string(s);
    for (const auto& a : attack_order) {
      const auto it = acc.find({a, s});
      wide += ",";
      if (it != acc.end() && it->second.second > 0) {
        wide += metrics::format_number(it->second.first / static_cast<double>(it->second.second));
      }
    }
    wide += "\n";
  }
  make_dir(out_dir);
  write_text(fs::path(out_dir) / "accuracy.csv", metrics::accuracy_csv(rows));
  write_text(fs::path(out_dir) / "metrics.csv", metrics::metrics_csv(mrows));
  write_text(fs::path(out_dir) / "accuracy_by_attack.csv", wide);
  out << "merged " << eval_dirs.size() << " eval directories into " << out_dir << "\n";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
      dynamic_cast<const CLI::ParseError*>(&e)) {
    return 1;
  }
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const MetricError*>(&e)) {
    return 2;
  }
  return 2;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-focused adversarial attacks on modulation classifiers", "freqadv"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config, "INI config with [dataset], [train], [attack], [eval] sections");
  app.add_option("--seed", common.seed, "master seed for every random stage")->capture_default_str();
  app.add_option("--jobs", common.jobs, "worker threads, 0 for the OpenMP default")->check(CLI::NonNegativeNumber);

  std::string out_path, dataset, arch, optimizer, out_dir, attack, ckpt, coll_dir, victim;
  std::vector<std::string> adv_dirs, eval_dirs;

  auto* gen = app.add_subcommand("gen", "synthesize a dataset and its manifest");
  gen->add_option("--out", out_path, "dataset file")->required();

  auto* train = app.add_subcommand("train", "train one classifier");
  train->add_option("--dataset", dataset)->required();
  train->add_option("--arch", arch, "overrides [train] arch");
  train->add_option("--optimizer", optimizer, "overrides [train] optimizer");
  train->add_option("--out", out_path, "checkpoint file")->required();

  auto* coll = app.add_subcommand("collection", "train the 4x3 surrogate collection and the black-box target");
  coll->add_option("--dataset", dataset)->required();
  coll->add_option("--out-dir", out_dir)->required();

  auto* atk = app.add_subcommand("attack", "attack a dataset split");
  atk->add_option("--attack", attack, "fgsm, pgd, uap, sffaa or meta-sffaa")->required();
  atk->add_option("--checkpoint", ckpt, "white-box model");
  atk->add_option("--collection-dir", coll_dir, "surrogates for meta-sffaa");
  atk->add_option("--victim", victim, "model that scores success (defaults to the attacked model)");
  atk->add_option("--dataset", dataset)->required();
  atk->add_option("--out", out_dir, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "accuracy, FD, OSER and spectrum profiles");
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--adversarial", adv_dirs, "attack output directories");
  ev->add_option("--out", out_dir)->required();

  auto* rep = app.add_subcommand("report", "merge eval directories");
  rep->add_option("--eval-dirs", eval_dirs)->required();
  rep->add_option("--out", out_dir)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) cmd_gen(common, out_path, out);
    if (train->parsed()) cmd_train(common, dataset, arch, optimizer, out_path, out);
    if (coll->parsed()) cmd_collection(common, dataset, out_dir, out);
    if (atk->parsed()) cmd_attack(common, attack, ckpt, coll_dir, victim, dataset, out_dir, out);
    if (ev->parsed()) cmd_eval(common, ckpt, dataset, adv_dirs, out_dir, out);
    if (rep->parsed()) cmd_report(eval_dirs, out_dir, out);
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return 2;
  }
  return 0;
}

}  // namespace freqadv::cli
