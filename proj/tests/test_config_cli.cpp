#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "fsed/cli.hpp"
#include "fsed/data/synthetic.hpp"
#include "support.hpp"

namespace fsed {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fsed_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string value_of(const ExperimentConfig& c, const std::string& key) {
  for (const auto& [k, v] : c.to_pairs()) {
    if (k == key) return v;
  }
  ADD_FAILURE() << "no key " << key;
  return {};
}

/// Two valid values for a key, both different from its default.
std::pair<std::string, std::string> alternatives(const std::string& key, const std::string& def) {
  static const std::map<std::string, std::pair<std::string, std::string>> special = {
      {"data.noise", {"mixed", "mixed"}},
      {"model.head", {"proto", "proto"}},
      {"train.lr_schedule", {"step", "final_fraction"}},
      {"eval.split", {"val", "train"}},
      {"model.encoder.blocks", {"16/2,16/2", "8/4"}},
      {"eval.shots", {"1,2", "3"}},
      {"split.exclude", {"class0", "class1,class2"}},
  };
  if (auto it = special.find(key); it != special.end()) return it->second;
  if (def == "on") return {"off", "off"};
  if (def == "off") return {"on", "on"};
  if (!def.empty() && std::all_of(def.begin(), def.end(), ::isdigit)) {
    return {std::to_string(std::stoull(def) + 3), std::to_string(std::stoull(def) + 5)};
  }
  try {
    std::size_t used = 0;
    const double x = std::stod(def, &used);
    if (used == def.size()) return {detail::real_text(x * 0.5 + 0.125), detail::real_text(x * 0.25 + 0.0625)};
  } catch (const std::exception&) {
  }
  return {"first_" + key, "second_" + key};
}

TEST(Config, TextRoundTrip) {
  ExperimentConfig c;
  c.seed = 42;
  c.set("data.n_mels", "64");
  c.set("model.encoder.blocks", "16/2,16/2,16/2");
  c.set("model.tpn.alpha", "0.5");
  c.set("split.exclude", "b, a");
  c.set("eval.shots", "1,5,10");
  EXPECT_EQ(ExperimentConfig::parse(c.text()).text(), c.text());
  EXPECT_EQ(value_of(c, "split.exclude"), "a,b");
}

TEST(Config, FileThenSetPrecedenceForEveryKey) {
  const auto keys = ExperimentConfig::keys();
  EXPECT_GE(keys.size(), 60u);
  for (const auto& key : keys) {
    const std::string def = value_of(ExperimentConfig{}, key);
    const auto [from_file, from_set] = alternatives(key, def);
    ExperimentConfig c;
    std::istringstream file(key + " = " + from_file + "\n");
    c.merge(file, "f.cfg");
    ExperimentConfig direct;
    direct.set(key, from_file);
    EXPECT_EQ(value_of(c, key), value_of(direct, key)) << key;
    EXPECT_NE(value_of(c, key), def) << key;
    c.set_assignment(key + "=" + from_set);
    ExperimentConfig expect;
    expect.set(key, from_set);
    EXPECT_EQ(value_of(c, key), value_of(expect, key)) << key;
  }
}

TEST(Config, FlagsSitBetweenFileAndSet) {
  const auto dir = scratch("precedence");
  std::ofstream(dir / "c.cfg") << "seed = 1\ntask.n_way = 3\nmodel.head = proto\nmodel.ta = off\n"
                                  "train.augmentation = off\nmodel.attention = off\ndata.noise = clean\n"
                                  "task.k_shot = 2\neval.episodes = 9\ndata.manifest = a.csv\n"
                                  "eval.shots = 1\nout = x\n";
  cli::Flags f;
  f.config = (dir / "c.cfg").string();
  ExperimentConfig file_only = cli::resolve_config(f);
  EXPECT_EQ(file_only.seed, 1u);
  EXPECT_EQ(file_only.task.n_way, 3u);
  f.seed = 7;
  f.n_way = 10;
  f.k_shot = 5;
  f.episodes = 11;
  f.head = "tpn";
  f.ta = "on";
  f.da = "on";
  f.attention = "on";
  f.noise = "mixed";
  f.manifest = "b.csv";
  f.shots = "2,4";
  f.out = "y";
  f.exclude_domain = "animals";
  ExperimentConfig flags = cli::resolve_config(f);
  EXPECT_EQ(flags.seed, 7u);
  EXPECT_EQ(flags.task.n_way, 10u);
  EXPECT_EQ(flags.task.k_shot, 5u);
  EXPECT_EQ(flags.eval_episodes, 11u);
  EXPECT_EQ(flags.model.head, nn::HeadKind::tpn);
  EXPECT_TRUE(flags.model.task_adaptive.enabled);
  EXPECT_TRUE(flags.train.use_augmentation);
  EXPECT_TRUE(flags.model.encoder.attention);
  EXPECT_EQ(flags.prepare.noise, data::NoiseMode::mixed);
  EXPECT_EQ(flags.manifest, "b.csv");
  EXPECT_EQ(flags.sweep_shots, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(flags.out_dir, "y");
  EXPECT_EQ(flags.exclude_domain, "animals");
  EXPECT_TRUE(flags.split.domain_mismatch);
  f.sets = {"seed=9", "task.n_way=4", "model.head=proto", "out=z"};
  ExperimentConfig sets = cli::resolve_config(f);
  EXPECT_EQ(sets.seed, 9u);
  EXPECT_EQ(sets.task.n_way, 4u);
  EXPECT_EQ(sets.model.head, nn::HeadKind::proto);
  EXPECT_EQ(sets.out_dir, "z");
}

TEST(Config, Errors) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("no.such.key", "1"), std::invalid_argument);
  EXPECT_THROW(c.set("model.n_mels", "64"), std::invalid_argument);
  EXPECT_THROW(c.set("task.n_way", "-1"), std::invalid_argument);
  EXPECT_THROW(c.set("eval.split", "holdout"), std::invalid_argument);
  EXPECT_THROW(c.set_assignment("seed"), std::invalid_argument);
  std::istringstream dup("seed = 1\n\n# x\nseed = 2\n");
  try {
    c.merge(dup, "d.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("d.cfg:4:"), std::string::npos) << e.what();
  }
  std::istringstream unknown("bogus = 1\n");
  EXPECT_THROW(c.merge(unknown), ParseError);
  std::istringstream no_eq("seed 1\n");
  EXPECT_THROW(c.merge(no_eq), ParseError);
  EXPECT_THROW(c.merge_file("/nonexistent/c.cfg"), IoError);
}

TEST(Config, DerivedValues) {
  ExperimentConfig c;
  c.seed = 5;
  c.set("data.n_mels", "64");
  c.set("data.clip_seconds", "1");
  c.set("task.n_way", "10");
  const ModelConfig m = c.model_config();
  EXPECT_EQ(m.n_mels, 64u);
  EXPECT_EQ(m.n_frames, 32u);
  EXPECT_EQ(m.n_way, 10u);
  EXPECT_EQ(m.init_seed, derive_seed(5, "model"));
  EXPECT_EQ(ExperimentConfig{}.n_frames(), 157u);
  EXPECT_EQ(c.train_config().task.n_way, 10u);
  EXPECT_NE(c.split_spec().seed, c.train_config().seed);
}

TEST(Cli, HelpListsExactlyTheFlags) {
  const std::string help = cli::help_text();
  std::set<std::string> in_help;
  const std::regex flag("--[a-z][a-z-]*");
  for (auto it = std::sregex_iterator(help.begin(), help.end(), flag); it != std::sregex_iterator(); ++it) {
    in_help.insert(it->str());
  }
  const std::set<std::string> declared(cli::flag_names().begin(), cli::flag_names().end());
  EXPECT_EQ(in_help, declared);
  for (const char* cmd : {"prepare", "train", "eval", "sweep"}) {
    EXPECT_NE(help.find(cmd), std::string::npos) << cmd;
  }
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"train", "--bogus"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  const CliRun r = run({"train", "--head", "knn"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--head"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, PipelineErrorsExitOne) {
  const CliRun r = run({"train", "--out", scratch("noman").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error: train:"), std::string::npos) << r.err;
  EXPECT_EQ(run({"prepare", "--manifest", "/nonexistent.csv", "--out", "x"}).code, 1);
  EXPECT_EQ(run({"train", "--set", "nope=1"}).code, 1);
  EXPECT_EQ(run({"train", "--checkpoint", "a.ckpt"}).code, 1);
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("pipeline");
    data::SyntheticCorpusSpec spec;
    spec.n_classes = 6;
    spec.clips_per_class = 6;
    spec.clip_seconds = 0.5;
    data::write_synthetic_corpus(dir_ / "audio", data::generate_tone_corpus(spec), 16000);
    std::ofstream(dir_ / "c.cfg")
        << "data.manifest = " << (dir_ / "audio" / "manifest.csv").string() << "\n"
        << "data.cache_dir = " << (dir_ / "cache").string() << "\n"
        << "data.n_mels = 16\ndata.window = 256\ndata.hop = 128\ndata.clip_seconds = 0.5\n"
        << "split.train = 3\nsplit.val = 0\nsplit.test = 3\n"
        << "task.n_way = 2\ntask.k_shot = 1\ntask.queries_per_class = 2\n"
        << "model.encoder.blocks = 4/2,4/2\nmodel.encoder.reduction = 2\n"
        << "model.ta.m2 = 2\nmodel.ta.m3 = 2\nmodel.ta.reshaper_m3 = 2\nmodel.tpn.alpha = 0.5\n"
        << "train.max_epochs = 1\ntrain.episodes_per_epoch = 2\naug.time_param = 2\naug.freq_param = 2\n"
        << "eval.episodes = 3\n";
  }
  static std::string cfg() { return (dir_ / "c.cfg").string(); }
  static fs::path dir_;
};
fs::path CliPipeline::dir_;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TEST_F(CliPipeline, PrepareTrainEvalSweep) {
  CliRun r = run({"prepare", "--config", cfg()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("prepared 36 clips (36 computed)"), std::string::npos) << r.out;
  r = run({"prepare", "--config", cfg(), "--out", (dir_ / "elsewhere").string()});
  EXPECT_NE(r.out.find("(0 computed) in " + (dir_ / "cache").string()), std::string::npos) << r.out;

  for (const char* name : {"a", "b"}) {
    r = run({"train", "--config", cfg(), "--seed", "3", "--out", (dir_ / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"split.csv", "metrics.csv", "best.ckpt", "last.ckpt"}) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  r = run({"train", "--config", cfg(), "--seed", "4", "--out", (dir_ / "c").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir_ / "a" / "best.ckpt"), slurp(dir_ / "c" / "best.ckpt"));
  EXPECT_EQ(ExperimentConfig::parse(slurp(dir_ / "a" / "config.cfg")).seed, 3u);

  const std::string ckpt = (dir_ / "a" / "best.ckpt").string();
  r = run({"eval", "--config", cfg(), "--checkpoint", ckpt, "--out", (dir_ / "eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "model,N,K,n_episodes,mean_acc,ci95");
  EXPECT_NE(r.out.find("best,2,1,3,"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "episodes.csv"));
  EXPECT_EQ(run({"eval", "--config", cfg(), "--checkpoint", ckpt}).out, r.out);

  r = run({"eval", "--config", cfg(), "--checkpoint", ckpt, "--n-way", "3"});
  EXPECT_EQ(r.code, 1);
  r = run({"eval", "--config", cfg(), "--checkpoint", ckpt, "--set", "data.n_mels=8"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("16x"), std::string::npos) << r.err;
  EXPECT_EQ(run({"eval", "--config", cfg()}).code, 1);

  r = run({"sweep", "--config", cfg(), "--checkpoint", ckpt, "--checkpoint",
           (dir_ / "c" / "best.ckpt").string(), "--shots", "1,3,5", "--out", (dir_ / "sweep").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("k=5"), std::string::npos) << r.err;
  for (const char* f : {"results.csv", "episodes.csv", "sweep.svg", "sweep.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "sweep" / f)) << f;
  }
  int rows = 0;
  std::istringstream in(r.out);
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 1 + 2 * 2);
}

TEST_F(CliPipeline, DomainMismatchNeedsDomainFile) {
  CliRun r = run({"train", "--config", cfg(), "--exclude-domain", "high", "--out", (dir_ / "dm").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("domain_file"), std::string::npos) << r.err;
  std::ofstream(dir_ / "domains.csv") << "label,domain\n"
                                      << data::synthetic_label(4) << ",high\n"
                                      << data::synthetic_label(5) << ",high\n";
  r = run({"train", "--config", cfg(), "--exclude-domain", "high", "--set",
           "data.domain_file=" + (dir_ / "domains.csv").string(), "--set", "split.test=0", "--out",
           (dir_ / "dm").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string split = slurp(dir_ / "dm" / "split.csv");
  EXPECT_NE(split.find(data::synthetic_label(4) + ",test"), std::string::npos) << split;
  EXPECT_NE(split.find(data::synthetic_label(5) + ",test"), std::string::npos) << split;
  r = run({"eval", "--config", cfg(), "--checkpoint", (dir_ / "dm" / "best.ckpt").string(),
           "--exclude-domain", "high", "--set", "data.domain_file=" + (dir_ / "domains.csv").string(),
           "--set", "split.test=0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("auc,"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace fsed
