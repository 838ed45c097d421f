// End-to-end acceptance run. Criteria 4 to 8 drive the command line harness
// on the desk dataset; 10 repeats that run in a second directory and compares
// every CSV. Prints one PASS/FAIL line per criterion; exits 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "freqadv/attacks.hpp"
#include "freqadv/autodiff.hpp"
#include "freqadv/checkpoint.hpp"
#include "freqadv/dataset.hpp"
#include "freqadv/metrics.hpp"
#include "freqadv/rng.hpp"
#include "freqadv/signal.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace freqadv;
using ad::Tape;
using ad::Var;
using Tn = Tensor<double>;

namespace {

constexpr double kBudget = 0.1;
constexpr std::size_t kCollectionEpochs = 10;
constexpr std::size_t kUapCraftExamples = 2000;
constexpr const char* kMarker = ".freqadv-acceptance";

double now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Line {
  std::string title;
  Outcome outcome;
  double seconds = 0;
  double limit = 0;  // 0 = no runtime target
  bool ran = false;
};

// ---- criterion 1 ----

using Chain = std::function<Var(Tape<double>&, Var)>;

struct FdError {
  double rel = 0;       // max |a - n| / max(1e-8, |n|)
  double at = 0;        // |n| where rel was reached
  double abs_err = 0;   // max |a - n| / max |n|
  void merge(const FdError& o) {
    if (o.rel > rel) {
      rel = o.rel;
      at = o.at;
    }
    abs_err = std::max(abs_err, o.abs_err);
  }
};

// Central differences against the tape gradient.
FdError fd_error(const Chain& fn, const Tn& p, double h = 1e-5) {
  Tape<double> t;
  const Var x = t.leaf(p, true);
  const Tn g = t.backward(fn(t, x))[x];
  auto f = [&](const Tn& q) {
    Tape<double> u;
    return u.value(fn(u, u.leaf(q)))[0];
  };
  FdError e;
  double diff = 0, scale = 0;
  Tn q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = p[i] + h;
    const double fp = f(q);
    q[i] = p[i] - h;
    const double fm = f(q);
    q[i] = p[i];
    const double n = (fp - fm) / (2 * h);
    const double r = std::abs(g[i] - n) / std::max(1e-8, std::abs(n));
    if (r > e.rel) {
      e.rel = r;
      e.at = std::abs(n);
    }
    diff = std::max(diff, std::abs(g[i] - n));
    scale = std::max(scale, std::abs(n));
  }
  e.abs_err = diff / std::max(1e-8, scale);
  return e;
}

std::vector<testutil::cplx> as_complex(const double* iq, std::size_t L) {
  std::vector<testutil::cplx> c(L);
  for (std::size_t n = 0; n < L; ++n) c[n] = {iq[n], iq[L + n]};
  return c;
}

Outcome numeric_core(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const attacks::BandSpec band;
  const auto bins = band.bins();
  const std::size_t L = band.length, P = 2 * bins.size();
  FdError smooth, linear;

  for (int i = 0; i < 100; ++i) {
    const Tn w = testutil::random_tensor({8, 10}, gen, 0.5), b = testutil::random_tensor({8}, gen, 0.1);
    const int label[] = {i % 8};
    smooth.merge(fd_error([&](Tape<double>& t, Var x) {
      return ad::cross_entropy(t, ad::softmax(t, ad::dense(t, x, t.leaf(w), t.leaf(b))), label);
    }, testutil::random_tensor({10}, gen)));

    smooth.merge(fd_error([&](Tape<double>& t, Var s) {
      return ad::sum_squares(t, ad::clip_bounded(t, ad::band_idft(t, s, bins, L), 1e3));
    }, testutil::random_tensor({P}, gen, 2.0)));

    // the attack chain without its kinks
    const Tn x = testutil::random_tensor({2, L}, gen, 0.7);
    const Tn k = testutil::random_tensor({4, 2, 3}, gen, 1.0), kb = testutil::random_tensor({4}, gen, 0.1);
    const Tn dw = testutil::random_tensor({8, 4}, gen, 1.0), db = testutil::random_tensor({8}, gen, 0.1);
    smooth.merge(fd_error([&](Tape<double>& t, Var s) {
      Var v = ad::add(t, t.leaf(x), ad::clip_bounded(t, ad::band_idft(t, s, bins, L), 1e3));
      v = ad::reshape(t, v, {1, 2, L});
      v = ad::global_avg_pool(t, ad::conv1d(t, v, t.leaf(k), t.leaf(kb), ad::Padding::same));
      v = ad::dense(t, v, t.leaf(dw), t.leaf(db));
      return ad::confidence_penalty(t, ad::softmax(t, v), label, 1e-6);
    }, testutil::random_tensor({P}, gen, 4.0)));

    // ensemble averaging
    const Tn w2 = testutil::random_tensor({8, 10}, gen, 0.5);
    smooth.merge(fd_error([&](Tape<double>& t, Var x) {
      const Var parts[] = {ad::dense(t, x, t.leaf(w), t.leaf(b)), ad::dense(t, x, t.leaf(w2), t.leaf(b))};
      return ad::cross_entropy(t, ad::softmax(t, ad::scale(t, ad::mean_of(t, std::span<const Var>(parts)), 0.5)),
                               label);
    }, testutil::random_tensor({10}, gen)));

    linear.merge(fd_error([&](Tape<double>& t, Var x) {
      return ad::sum(t, ad::dense(t, x, t.leaf(w), t.leaf(b)));
    }, testutil::random_tensor({10}, gen)));
  }

  // band_idft then a forward DFT returns the embedded spectrum
  double roundtrip = 0, band_parseval = 0;
  for (int i = 0; i < 100; ++i) {
    const Tn s = testutil::random_tensor({P}, gen, 3.0);
    Tape<double> t;
    const Tn y = t.value(ad::band_idft(t, t.leaf(s), bins, L));
    const auto X = testutil::direct_dft(as_complex(y.data().data(), L));
    std::vector<testutil::cplx> want(L);
    for (std::size_t j = 0; j < bins.size(); ++j) want[bins[j]] = {s[2 * j], s[2 * j + 1]};
    double ex = 0, ek = 0;
    for (std::size_t k = 0; k < L; ++k) {
      roundtrip = std::max(roundtrip, std::abs(X[k] - want[k]));
      ek += std::norm(want[k]);
      ex += y[k] * y[k] + y[L + k] * y[L + k];
    }
    band_parseval = std::max(band_parseval, std::abs(ex - ek / static_cast<double>(L)));
  }

  double fast = 0;
  for (int i = 0; i < 100; ++i) {
    const Tn r = testutil::random_tensor({2, L}, gen);
    const auto x = as_complex(r.data().data(), L);
    const auto a = signal::dft(x), b = testutil::direct_dft(x);
    const auto ai = signal::idft(x), bi = testutil::direct_idft(x);
    for (std::size_t k = 0; k < L; ++k) fast = std::max({fast, std::abs(a[k] - b[k]), std::abs(ai[k] - bi[k])});
  }

  data::GenerateConfig gc;
  gc.per_cell = 100;
  gc.seed = seed;
  const auto ds = data::generate_dataset(gc);
  double parseval = 0;
  for (std::size_t e = 0; e < ds.size(); ++e) {
    const auto f = ds.frame(e);
    std::vector<testutil::cplx> x(L);
    double ex = 0;
    for (std::size_t n = 0; n < L; ++n) {
      x[n] = {f[n], f[L + n]};
      ex += std::norm(x[n]);
    }
    double ek = 0;
    for (const auto& v : signal::dft(x)) ek += std::norm(v);
    parseval = std::max(parseval, std::abs(ex - ek / static_cast<double>(L)) / ex);
  }

  Outcome o;
  o.pass = smooth.rel <= 1e-6 && linear.rel <= 1e-10 && roundtrip <= 1e-10 && band_parseval <= 1e-10 && fast <= 1e-10 &&
           parseval <= 1e-9;
  o.detail = "smooth chains " + num(smooth.rel) + " (<=1e-6; worst at |grad| " + num(smooth.at) +
             ", max abs error / max |grad| " + num(smooth.abs_err) + "), linear " + num(linear.rel) +
             " (<=1e-10; worst at |grad| " + num(linear.at) + ", scaled " + num(linear.abs_err) + "), band roundtrip " +
             num(roundtrip) + ", fast vs direct DFT " + num(fast) + " (<=1e-10), Parseval " + num(parseval) +
             " over " + std::to_string(ds.size()) + " frames (<=1e-9)";
  return o;
}

// ---- criterion 2 ----

Outcome metric_oracles(std::uint64_t seed) {
  double hand_oser = 0, hand_fd = 0;
  {
    attacks::BandSpec tiny;
    tiny.length = 8;
    Tn d({2, 8});
    for (std::size_t n = 0; n < 8; n += 2) d[n] = 0.25;
    hand_oser = std::abs(metrics::oser_db(d, tiny) - 10.0 * std::log10(0.5));
    const Tn x({4}, {1, -1, 1, -1});
    const Tn xa({4}, {1.1, -0.9, 1.1, -0.9});
    hand_fd = std::abs(metrics::fitting_difference(x, xa) - 0.01);
  }
  std::mt19937_64 gen(seed);
  const attacks::BandSpec band;
  const std::size_t L = band.length, nb = band.half_count();
  double oser = 0, fd = 0;
  for (int i = 0; i < 100; ++i) {
    // mix a band-limited part with a weaker broadband one
    Tn d = testutil::random_tensor({2, L}, gen, 0.01 * (1 + i % 7));
    const auto X = testutil::direct_dft(as_complex(d.data().data(), L));
    double in = 0, out = 0;
    for (std::size_t k = 0; k < L; ++k) (k >= nb && k < L - nb ? out : in) += std::norm(X[k]);
    oser = std::max(oser, std::abs(metrics::oser_db(d, band) - 10.0 * std::log10(out / (in + out))));

    const Tn x = testutil::random_tensor({2, L}, gen);
    Tn xa = x;
    for (std::size_t j = 0; j < xa.size(); ++j) xa[j] += d[j];
    double mean = 0;
    for (double v : x.data()) mean += v;
    mean /= static_cast<double>(x.size());
    double a = 0, b = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      a += (x[j] - xa[j]) * (x[j] - xa[j]);
      b += (x[j] - mean) * (x[j] - mean);
    }
    fd = std::max(fd, std::abs(metrics::fitting_difference(x, xa) - a / b));
  }
  Outcome o;
  o.pass = hand_oser <= 1e-9 && hand_fd <= 1e-9 && oser <= 1e-9 && fd <= 1e-9;
  o.detail = "hand OSER off by " + num(hand_oser) + ", hand FD off by " + num(hand_fd) + ", 100 random OSER " +
             num(oser) + " dB, FD " + num(fd) + " (all <=1e-9)";
  return o;
}

// ---- criteria 4 to 8: one pipeline run ----

class Runner {
 public:
  Runner(fs::path dir, std::uint64_t seed) : dir_(std::move(dir)), seed_(seed), log_(dir_ / "pipeline.log") {}

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  // Runs one command, returns its wall time.
  double operator()(std::vector<std::string> args) {
    args.push_back("--seed");
    args.push_back(std::to_string(seed_));
    std::ostringstream err;
    log_ << "$ freqadv";
    for (const auto& a : args) log_ << " " << a;
    log_ << "\n";
    const double t0 = now();
    const int code = cli::run(args, log_, err);
    const double dt = now() - t0;
    log_ << err.str() << "(" << num(dt) << " s)\n" << std::flush;
    if (code != 0) throw std::runtime_error("freqadv " + args.front() + " exited " + std::to_string(code) + ": " + err.str());
    std::cerr << "  " << dir_.filename().string() << ": " << args.front() << " " << args[1] << " " << args[2] << " ("
              << num(dt) << " s)\n";
    return dt;
  }

 private:
  fs::path dir_;
  std::uint64_t seed_;
  std::ofstream log_;
};

struct PipelineResult {
  std::vector<metrics::AccuracyRow> clean, snr0, snr10, transfer;
  std::vector<metrics::MetricRow> sample;
  double clean_seconds = 0, transfer_seconds = 0, total_seconds = 0;
};

const char* const kWhiteBox[] = {"fgsm", "pgd", "uap", "sffaa"};

PipelineResult run_pipeline(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  const std::string base = "[dataset]\nper_cell = 100\n\n[attack]\nuap_max_examples = " +
                           std::to_string(kUapCraftExamples) + "\n";
  spit(dir / "desk.ini", base);
  spit(dir / "snr0.ini", base + "snr = 0\n");
  spit(dir / "snr10.ini", base + "snr = 10\n");
  spit(dir / "sample.ini", base + "max_examples = 80\n");
  spit(dir / "collection.ini", base + "\n[train]\nmax_epochs = " + std::to_string(kCollectionEpochs) + "\n");

  Runner run(dir, seed);
  const auto ini = [&](const char* name) { return run.path(std::string(name) + ".ini"); };
  const auto data = run.path("desk.amc"), base_ckpt = run.path("baseline.amcm");
  const double t0 = now();
  PipelineResult r;

  r.clean_seconds += run({"gen", "--config", ini("desk"), "--out", data});
  r.clean_seconds += run({"train", "--config", ini("desk"), "--dataset", data, "--out", base_ckpt});
  r.clean_seconds += run({"eval", "--config", ini("desk"), "--checkpoint", base_ckpt, "--dataset", data, "--out",
                          run.path("eval_clean")});

  auto white_box = [&](const char* cfg, const std::string& tag) {
    std::vector<std::string> ev = {"eval", "--config", ini(cfg), "--checkpoint", base_ckpt, "--dataset", data,
                                   "--out", run.path("eval_" + tag), "--adversarial"};
    for (const char* a : kWhiteBox) {
      const auto out = run.path("atk/" + std::string(a) + "_" + tag);
      run({"attack", "--attack", a, "--config", ini(cfg), "--checkpoint", base_ckpt, "--dataset", data, "--out", out});
      ev.push_back(out);
    }
    run(ev);
  };
  white_box("snr0", "snr0");
  white_box("snr10", "snr10");
  white_box("sample", "sample");

  const auto coll = run.path("collection");
  const auto target = run.path("collection/googlenet_analog-adam.amcm");
  r.transfer_seconds += run({"collection", "--config", ini("collection"), "--dataset", data, "--out-dir", coll});
  r.transfer_seconds += run({"attack", "--attack", "meta-sffaa", "--config", ini("snr10"), "--collection-dir", coll,
                             "--dataset", data, "--out", run.path("atk/meta_transfer")});
  r.transfer_seconds += run({"attack", "--attack", "sffaa", "--config", ini("snr10"), "--checkpoint",
                             run.path("collection/baseline_cnn-adam.amcm"), "--victim", target, "--dataset", data,
                             "--out", run.path("atk/sffaa_transfer")});
  r.transfer_seconds += run({"eval", "--config", ini("snr10"), "--checkpoint", target, "--dataset", data, "--out",
                             run.path("eval_transfer"), "--adversarial", run.path("atk/sffaa_transfer"),
                             run.path("atk/meta_transfer")});

  r.clean = metrics::parse_accuracy_csv(slurp(dir / "eval_clean/accuracy.csv"));
  r.snr0 = metrics::parse_accuracy_csv(slurp(dir / "eval_snr0/accuracy.csv"));
  r.snr10 = metrics::parse_accuracy_csv(slurp(dir / "eval_snr10/accuracy.csv"));
  r.transfer = metrics::parse_accuracy_csv(slurp(dir / "eval_transfer/accuracy.csv"));
  r.sample = metrics::parse_metrics_csv(slurp(dir / "eval_sample/metrics.csv"));
  r.total_seconds = now() - t0;
  return r;
}

double accuracy(const std::vector<metrics::AccuracyRow>& rows, const std::string& attack, int snr) {
  for (const auto& r : rows)
    if (r.attack == attack && r.snr_db == snr) return r.accuracy;
  throw std::runtime_error("no accuracy row for " + attack + " at " + std::to_string(snr) + " dB");
}

const metrics::MetricRow& metric(const std::vector<metrics::MetricRow>& rows, const std::string& attack) {
  for (const auto& r : rows)
    if (r.attack == attack) return r;
  throw std::runtime_error("no metrics row for " + attack);
}

Outcome clean_floor(const PipelineResult& p) {
  double sum = 0;
  int n = 0;
  for (const auto& r : p.clean)
    if (r.snr_db >= 10) sum += r.accuracy, ++n;
  const double mean = n ? sum / n : 0;
  return {n > 0 && mean >= 0.70, "mean clean test accuracy over " + std::to_string(n) + " SNRs >= 10 dB is " +
                                      num(mean) + " (>=0.70)"};
}

Outcome white_box_order(const PipelineResult& p) {
  Outcome o{true, ""};
  for (const auto* rows : {&p.snr0, &p.snr10}) {
    const int snr = rows == &p.snr0 ? 0 : 10;
    const double clean = accuracy(*rows, "clean", snr), uap = accuracy(*rows, "uap", snr),
                 fgsm = accuracy(*rows, "fgsm", snr), pgd = accuracy(*rows, "pgd", snr),
                 sffaa = accuracy(*rows, "sffaa", snr);
    const bool ok = sffaa + 0.02 <= pgd && pgd + 0.02 <= fgsm && fgsm + 0.02 <= uap && uap + 0.02 <= clean;
    o.pass = o.pass && ok;
    o.detail += std::to_string(snr) + " dB: sffaa " + num(sffaa) + ", pgd " + num(pgd) + ", fgsm " + num(fgsm) +
                ", uap " + num(uap) + ", clean " + num(clean) + (ok ? "" : " (order broken)") + "; ";
    if (snr == 0) {
      o.pass = o.pass && sffaa <= 0.25;
      if (sffaa > 0.25) o.detail += "sffaa above 0.25 at 0 dB; ";
    }
  }
  o.detail.resize(o.detail.size() - 2);
  return o;
}

Outcome oser_separation(const PipelineResult& p) {
  const double s = metric(p.sample, "sffaa").mean_oser_db;
  Outcome o{s <= -15, "mean OSER on 80 examples: sffaa " + num(s) + " dB (<=-15)"};
  for (const char* a : {"fgsm", "pgd", "uap"}) {
    const double v = metric(p.sample, a).mean_oser_db;
    o.pass = o.pass && v >= -8;
    o.detail += std::string(", ") + a + " " + num(v) + " dB";
  }
  o.detail += " (>=-8)";
  return o;
}

Outcome fd_order(const PipelineResult& p) {
  const double s = metric(p.sample, "sffaa").mean_fd, g = metric(p.sample, "pgd").mean_fd,
               f = metric(p.sample, "fgsm").mean_fd, u = metric(p.sample, "uap").mean_fd;
  return {s < g && g <= f && s / f <= 0.5, "mean FD on 80 examples: sffaa " + num(s) + " < pgd " + num(g) +
                                               " <= fgsm " + num(f) + ", sffaa/fgsm " + num(s / f) +
                                               " (<=0.5); uap " + num(u)};
}

Outcome transfer(const PipelineResult& p) {
  const double single = accuracy(p.transfer, "sffaa", 10), meta = accuracy(p.transfer, "meta-sffaa", 10),
               clean = accuracy(p.transfer, "clean", 10);
  return {meta + 0.05 <= single, "googlenet_analog at 10 dB: meta-sffaa " + num(meta) + ", single-model sffaa " +
                                     num(single) + " (needs 0.05 lower), clean " + num(clean)};
}

// ---- criterion 3 ----

Outcome budget_invariant(const fs::path& dir, std::uint64_t seed) {
  const auto ds = data::load_dataset((dir / "desk.amc").string());
  const auto manifest = data::load_manifest((dir / "desk.amc.manifest").string());
  const auto split = data::split_dataset(ds, manifest.seed);
  auto idx = split.test;
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(seed));
  idx.resize(std::min<std::size_t>(1000, idx.size()));
  std::sort(idx.begin(), idx.end());

  const auto model = models::load_checkpoint((dir / "baseline.amcm").string()).model.cast<double>();
  std::vector<models::Network<double>> members;
  std::optional<models::Network<double>> target;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "collection"))
    if (e.path().extension() == ".amcm") files.push_back(e.path());
  std::sort(files.begin(), files.end());  // same member order as the command line
  for (const auto& f : files) {
    auto net = models::load_checkpoint(f.string()).model.cast<double>();
    if (net.arch() == models::Arch::googlenet_analog) {
      target = std::move(net);
    } else {
      members.push_back(std::move(net));
    }
  }
  const auto coll = attacks::make_collection(members);
  const auto clean = data::gather<double>(ds, idx);

  Outcome o{true, ""};
  for (auto kind : attacks::kAllAttacks) {
    attacks::AttackConfig cfg;
    cfg.kind = kind;
    cfg.seed = seed;
    cfg.uap.seed = seed;
    cfg.schedule.seed = seed;
    cfg.uap_max_examples = kUapCraftExamples;
    attacks::AttackTargets t;
    t.model = &model;
    if (kind == attacks::AttackKind::meta_sffaa) {
      t.model = nullptr;
      t.collection = &coll;
      t.victim = target ? &*target : nullptr;
    }
    const double t0 = now();
    const auto rep = attacks::attack_batch(cfg, t, ds, idx, split.train);
    double worst = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      worst = std::max({worst, std::abs(rep.perturbations[i]), std::abs(rep.adversarial[i] - clean[i])});
    }
    const bool ok = rep.records.size() == idx.size() && worst <= kBudget + 1e-7;
    o.pass = o.pass && ok;
    o.detail += std::string(attacks::attack_name(kind)) + " " + num(worst) + " (" + num(now() - t0) + " s), ";
    std::cerr << "  budget: " << attacks::attack_name(kind) << " on " << idx.size() << " examples, max linf "
              << num(worst) << " (" << num(now() - t0) << " s)\n";
  }
  o.detail = "max linf over " + std::to_string(idx.size()) + " examples per attack: " + o.detail +
             "bound 0.1000001";
  return o;
}

// ---- criterion 9 ----

Outcome degenerate(const fs::path& dir, std::uint64_t seed) {
  const auto ds = data::load_dataset((dir / "desk.amc").string());
  const auto manifest = data::load_manifest((dir / "desk.amc.manifest").string());
  const auto model = models::load_checkpoint((dir / "baseline.amcm").string()).model.cast<double>();
  auto idx = data::select_snr(ds, data::split_dataset(ds, manifest.seed).test, 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(seed));
  idx.resize(20);
  auto frame = [&](std::size_t i) { return data::gather<double>(ds, std::vector<std::size_t>{i}).reshaped({2, 128}); };

  // duplicated checkpoint: meta-sffaa against sffaa for the same number of updates
  std::size_t meta_same = 0;
  const models::Network<double> copies[] = {model, model, model, model};
  const auto coll = attacks::make_collection(copies);
  attacks::TaskSchedule schedule;
  schedule.seed = seed;
  attacks::AttackBudget long_budget;
  long_budget.steps = schedule.total_updates();
  for (std::size_t j = 0; j < 3; ++j) {
    const auto x = frame(idx[j]);
    const int label = ds.labels[idx[j]];
    std::vector<std::vector<double>> a, b;
    const auto ra = attacks::meta_sffaa(coll, x, label, {}, {}, schedule, seed + j,
                                        [&](std::size_t, std::span<const double> s, const Tn&, double) {
                                          a.emplace_back(s.begin(), s.end());
                                        });
    const auto rb = attacks::sffaa(model, x, label, long_budget, {}, seed + j,
                                   [&](std::size_t, std::span<const double> s, const Tn&, double) {
                                     b.emplace_back(s.begin(), s.end());
                                   });
    meta_same += a.size() == 765 && a == b && ra.spectrum == rb.spectrum &&
                 std::ranges::equal(ra.perturbation.data(), rb.perturbation.data());
  }

  std::size_t pgd_same = 0, uap_fooled = 0;
  for (auto i : idx) {
    const auto x = frame(i);
    const int label = ds.labels[i];
    pgd_same += std::ranges::equal(attacks::pgd(model, x, label, kBudget, kBudget, 1).data(),
                                   attacks::fgsm(model, x, label, kBudget).data());
    attacks::UapConfig uc;
    uc.seed = seed;
    const auto u = attacks::uap(model, x.reshaped({1, 2, 128}), std::vector<int>{label}, uc);
    uap_fooled += u.fooling_rate == 1.0 && testutil::max_abs(u.perturbation) <= kBudget;
  }
  return {meta_same == 3 && pgd_same == idx.size() && uap_fooled == idx.size(),
          "meta over a duplicated checkpoint matches 765 sffaa steps bitwise on " + std::to_string(meta_same) +
              "/3 examples; one saturating pgd step equals fgsm on " + std::to_string(pgd_same) + "/" +
              std::to_string(idx.size()) + "; singleton uap fools " + std::to_string(uap_fooled) + "/" +
              std::to_string(idx.size())};
}

// ---- criterion 10 ----

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    // timing.csv holds wall-clock seconds
    if (e.path().extension() == ".csv" && e.path().filename() != "timing.csv") {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return out;
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  const auto fa = csv_files(a), fb = csv_files(b);
  std::vector<std::string> differ;
  for (const auto& [name, text] : fa) {
    const auto it = fb.find(name);
    if (it == fb.end() || it->second != text) differ.push_back(name);
  }
  for (const auto& [name, text] : fb)
    if (!fa.count(name)) differ.push_back(name);
  std::string detail = std::to_string(fa.size()) + " CSV files compared, " + std::to_string(differ.size()) + " differ";
  for (std::size_t i = 0; i < differ.size() && i < 5; ++i) detail += (i ? ", " : ": ") + differ[i];
  return {!fa.empty() && differ.empty(), detail};
}

void prepare_workdir(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !fs::exists(dir / kMarker)) {
    throw std::runtime_error(dir.string() + " exists and was not made by this program; pick another --work");
  }
  fs::create_directories(dir);
  spit(dir / kMarker, "");
  for (const char* sub : {"run_a", "run_b"}) fs::remove_all(dir / sub);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("freqadv acceptance run");
  std::string work = "acceptance_work";
  std::uint64_t seed = 1;
  app.add_option("--work", work, "scratch directory for both pipeline runs")->capture_default_str();
  bool core_only = false;
  app.add_option("--seed", seed, "master seed")->capture_default_str();
  app.add_flag("--core-only", core_only, "run criteria 1 and 2 only, no training");
  CLI11_PARSE(app, argc, argv);

  std::map<int, Line> lines = {
      {1, {"numeric core", {}, 0, 60}},       {2, {"metric oracles", {}, 0, 60}},
      {3, {"budget invariant", {}, 0, 300}},  {4, {"clean-model floor", {}, 0, 600}},
      {5, {"white-box ordering", {}, 0, 0}},  {6, {"OSER separation", {}, 0, 0}},
      {7, {"FD ordering", {}, 0, 0}},         {8, {"meta-sffaa transfer", {}, 0, 900}},
      {9, {"degenerate equivalences", {}, 0, 60}}, {10, {"determinism", {}, 0, 0}},
  };
  auto timed = [&](int id, const std::function<Outcome()>& f) {
    const double t0 = now();
    try {
      lines[id].outcome = f();
    } catch (const std::exception& e) {
      lines[id].outcome = {false, std::string("error: ") + e.what()};
    }
    lines[id].seconds = now() - t0;
    lines[id].ran = true;
    std::cerr << "criterion " << id << " done (" << num(lines[id].seconds) << " s)\n";
  };

  const double start = now();
  const fs::path root(work);
  try {
    prepare_workdir(root);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  timed(1, [&] { return numeric_core(seed); });
  timed(2, [&] { return metric_oracles(seed); });

  std::optional<PipelineResult> first;
  if (core_only) {
    std::erase_if(lines, [](const auto& kv) { return !kv.second.ran; });
  } else try {
    first = run_pipeline(root / "run_a", seed);
  } catch (const std::exception& e) {
    for (int id : {4, 5, 6, 7, 8}) lines[id] = {lines[id].title, {false, std::string("error: ") + e.what()}, 0, lines[id].limit, true};
  }
  if (first) {
    timed(4, [&] { return clean_floor(*first); });
    lines[4].seconds = first->clean_seconds;
    timed(5, [&] { return white_box_order(*first); });
    timed(6, [&] { return oser_separation(*first); });
    timed(7, [&] { return fd_order(*first); });
    timed(8, [&] { return transfer(*first); });
    lines[8].seconds = first->transfer_seconds;
    timed(3, [&] { return budget_invariant(root / "run_a", seed); });
    timed(9, [&] { return degenerate(root / "run_a", seed); });
    timed(10, [&] {
      run_pipeline(root / "run_b", seed);
      return determinism(root / "run_a", root / "run_b");
    });
  } else if (!core_only) {
    for (int id : {3, 9, 10}) lines[id] = {lines[id].title, {false, "skipped: the pipeline failed"}, 0, lines[id].limit, true};
  }

  bool all = true;
  for (auto& [id, l] : lines) {
    bool pass = l.outcome.pass;
    std::string detail = l.outcome.detail;
    if (pass && l.limit > 0 && l.seconds > l.limit) {
      pass = false;
      detail += "; runtime over target";
    }
    all = all && pass;
    std::cout << "criterion " << id << " " << l.title << ": " << (pass ? "PASS" : "FAIL") << " | " << detail
              << " | " << num(l.seconds) << " s" << (l.limit > 0 ? " (target " + num(l.limit) + " s)" : "") << "\n";
  }
  std::cout << "total " << num(now() - start) << " s\n";
  return all ? 0 : 1;
}
