#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "freqadv/errors.hpp"
#include "freqadv/metrics.hpp"
#include "test_util.hpp"

using namespace freqadv;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

const char* kSmall = R"([dataset]
per_cell = 10
snr_min = 0
snr_max = 10
snr_step = 10

[train]
max_epochs = 2

[attack]
max_examples = 6
steps = 8
meta_tasks = 2
meta_inner_steps = 3
uap_max_passes = 1
)";

}  // namespace

TEST_CASE("config defaults carry the published values") {
  const auto c = cli::parse_config("");
  CHECK(c.attack.budget.steps == 50);
  CHECK(c.attack.budget.zeta == 0.1);
  CHECK(c.attack.budget.alpha == 0.05);
  CHECK(c.attack.budget.loss_eps == 1e-6);
  CHECK(c.attack.epsilon == 0.1);
  CHECK(c.attack.pgd_step == 0.02);
  CHECK(c.attack.pgd_iters == 10);
  CHECK(c.attack.schedule.tasks == 15);
  CHECK(c.attack.schedule.meta_train == 3);
  CHECK(c.attack.schedule.inner_steps == 50);
  CHECK(c.attack.band.focus_bandwidth_hz == 1e6);
  CHECK(c.dataset.sample_rate_hz == 8e6);
  CHECK(c.dataset.frame_len == 128);
  CHECK(c.dataset.snrs.size() == 20);
  CHECK(c.dataset.snrs.front() == -20);
  CHECK(c.dataset.snrs.back() == 18);
  CHECK(c.dataset.channel.avg_path_gain_db == -5.9);
  CHECK(c.dataset.channel.rician_k == 10.0);
  CHECK(c.train.optimizer.learning_rate == 1e-3);
  CHECK(c.train.batch_size == 128);
  CHECK(c.train.max_epochs == 30);
  CHECK(c.train.patience == 5);
}

TEST_CASE("config parsing") {
  const auto c = cli::parse_config("[attack]\nsteps = 7\nsnr = 10\n\n[train]\narch = vgg_small\noptimizer=adamax\n");
  CHECK(c.attack.budget.steps == 7);
  CHECK(c.attack_snr == 10);
  CHECK(c.arch == models::Arch::vgg_small);
  CHECK(c.train.optimizer.kind == training::OptimizerKind::adamax);
  CHECK_THROWS_AS(cli::parse_config("[attack]\nstepz = 7\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[model]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("steps = 7\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[attack]\nsteps = seven\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[attack]\nsteps = -1\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[attack]\nzeta = 0\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[eval]\nsplit = holdout\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[train]\narch = resnet50\n"), ConfigError);
  CHECK_THROWS_AS(cli::load_config("/nonexistent/x.ini"), IoError);
}

TEST_CASE("usage errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({}).code == 1);
  CHECK(run({"gen"}).code == 1);  // --out is required
  const auto r = run({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: usage:", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("pipeline") {
  testutil::TempDir dir("cli");
  const auto ini = dir.file("small.ini");
  spit(ini, kSmall);
  const auto data = dir.file("d.amc");

  SUBCASE("gen is reproducible") {
    REQUIRE(run({"gen", "--config", ini, "--out", data, "--seed", "4"}).code == 0);
    const auto m1 = slurp(data + ".manifest");
    REQUIRE(run({"gen", "--config", ini, "--out", dir.file("e.amc"), "--seed", "4"}).code == 0);
    CHECK(slurp(dir.file("e.amc.manifest")) == m1);
    CHECK(slurp(dir.file("e.amc")) == slurp(data));
    REQUIRE(run({"gen", "--config", ini, "--out", dir.file("f.amc"), "--seed", "5"}).code == 0);
    CHECK(slurp(dir.file("f.amc.manifest")) != m1);
  }
  SUBCASE("exit codes") {
    REQUIRE(run({"gen", "--config", ini, "--out", data}).code == 0);
    spit(dir.file("bad.ini"), "[attack]\nwhatever = 1\n");
    auto r = run({"gen", "--config", dir.file("bad.ini"), "--out", dir.file("x.amc")});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: config:", 0) == 0);
    r = run({"train", "--dataset", dir.file("missing.amc"), "--out", dir.file("m.amcm")});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: io:", 0) == 0);
    auto bytes = slurp(data);
    bytes[0] = 'X';
    spit(dir.file("corrupt.amc"), bytes);
    spit(dir.file("corrupt.amc.manifest"), slurp(data + ".manifest"));
    r = run({"train", "--dataset", dir.file("corrupt.amc"), "--out", dir.file("m.amcm")});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: format:", 0) == 0);
    spit(dir.file("diverge.ini"), std::string(kSmall) + "\n[train]\nlearning_rate = 1e30\noptimizer = rmsprop\n");
    // second [train] section is merged by the INI reader
    r = run({"train", "--config", dir.file("diverge.ini"), "--dataset", data, "--out", dir.file("m.amcm")});
    CHECK(r.code == 3);
    CHECK(r.err.rfind("error: numeric:", 0) == 0);
    r = run({"attack", "--attack", "meta-sffaa", "--dataset", data, "--out", dir.file("a")});
    CHECK(r.code == 1);
    r = run({"attack", "--attack", "cw", "--checkpoint", "x", "--dataset", data, "--out", dir.file("a")});
    CHECK(r.code == 1);
  }
  SUBCASE("train, attack, eval and report") {
    REQUIRE(run({"gen", "--config", ini, "--out", data, "--seed", "2"}).code == 0);
    const auto ckpt = dir.file("m.amcm");
    auto r = run({"train", "--config", ini, "--dataset", data, "--out", ckpt, "--seed", "2"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(ckpt + ".meta"));
    CHECK(fs::exists(ckpt + ".history.csv"));

    auto attack = [&](const std::string& name, const std::string& out) {
      return run({"attack", "--config", ini, "--attack", name, "--checkpoint", ckpt, "--dataset", data, "--out",
                  out, "--seed", "2"});
    };
    for (const char* a : {"fgsm", "pgd", "uap", "sffaa"}) {
      CAPTURE(a);
      REQUIRE(attack(a, dir.file(std::string("atk_") + a)).code == 0);
    }
    // every record satisfies the budget
    std::istringstream recs(slurp(dir.file("atk_sffaa/records.csv")));
    std::string line;
    std::getline(recs, line);
    std::size_t rows = 0;
    while (std::getline(recs, line)) {
      ++rows;
      CHECK(std::stod(line.substr(line.rfind(',') + 1)) <= 0.1);
    }
    CHECK(rows == 6);

    REQUIRE(run({"eval", "--config", ini, "--checkpoint", ckpt, "--dataset", data, "--adversarial",
                 dir.file("atk_fgsm"), dir.file("atk_pgd"), "--out", dir.file("ev1")})
                .code == 0);
    REQUIRE(run({"eval", "--config", ini, "--checkpoint", ckpt, "--dataset", data, "--adversarial",
                 dir.file("atk_sffaa"), dir.file("atk_uap"), "--out", dir.file("ev2")})
                .code == 0);
    const auto acc1 = metrics::parse_accuracy_csv(slurp(dir.file("ev1/accuracy.csv")));
    const auto acc2 = metrics::parse_accuracy_csv(slurp(dir.file("ev2/accuracy.csv")));
    REQUIRE(run({"report", "--eval-dirs", dir.file("ev1"), dir.file("ev2"), "--out", dir.file("rep")}).code == 0);
    const auto merged = metrics::parse_accuracy_csv(slurp(dir.file("rep/accuracy.csv")));
    std::set<std::pair<std::string, int>> keys;
    for (const auto* t : {&acc1, &acc2})
      for (const auto& row : *t) keys.insert({row.attack, row.snr_db});
    CHECK(merged.size() == keys.size());
    for (const auto& row : merged) CHECK(keys.count({row.attack, row.snr_db}) == 1);
    CHECK(metrics::parse_metrics_csv(slurp(dir.file("rep/metrics.csv"))).size() == 4);

    // rerun with the same seeds: identical bytes
    REQUIRE(attack("sffaa", dir.file("again")).code == 0);
    CHECK(slurp(dir.file("again/records.csv")) == slurp(dir.file("atk_sffaa/records.csv")));
    CHECK(slurp(dir.file("again/adversarial.amc")) == slurp(dir.file("atk_sffaa/adversarial.amc")));
    REQUIRE(run({"eval", "--config", ini, "--checkpoint", ckpt, "--dataset", data, "--adversarial",
                 dir.file("atk_sffaa"), dir.file("atk_uap"), "--out", dir.file("ev3")})
                .code == 0);
    for (const char* f : {"accuracy.csv", "metrics.csv", "profile.csv"})
      CHECK(slurp(dir.file(std::string("ev3/") + f)) == slurp(dir.file(std::string("ev2/") + f)));
  }
  SUBCASE("collection and meta-sffaa") {
    spit(ini, std::string(kSmall) + "\n[train]\nmax_epochs = 1\n");
    REQUIRE(run({"gen", "--config", ini, "--out", data}).code == 0);
    const auto coll = dir.file("coll");
    REQUIRE(run({"collection", "--config", ini, "--dataset", data, "--out-dir", coll}).code == 0);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(coll)) n += e.path().extension() == ".amcm";
    CHECK(n == 13);
    CHECK(fs::exists(coll + "/googlenet_analog-adam.amcm"));
    const auto r = run({"attack", "--config", ini, "--attack", "meta-sffaa", "--collection-dir", coll, "--dataset",
                        data, "--out", dir.file("meta")});
    REQUIRE(r.code == 0);
    CHECK(slurp(dir.file("meta/attack.txt")).find("attack=meta-sffaa") != std::string::npos);
  }
}
