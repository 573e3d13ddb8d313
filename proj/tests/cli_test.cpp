#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "matner/corpus.hpp"

using namespace matner;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / ("matner-cli-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd =
        std::string(MATNER_CLI_PATH) + " " + args + " 2>" + path("stderr.log");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read_all(const std::string& p) const {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  void write_all(const std::string& p, const std::string& text) const {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
  }

  // Small corpus every model can memorize quickly.
  void write_tiny_corpus(const std::string& p, int n = 12) const {
    std::ostringstream out;
    for (int i = 0; i < n; ++i) {
      out << "# doc:d" << (i / 4) << "\n";
      if (i % 2 == 0)
        out << "graphene\tB-material\nis\tO\ngood\tO\n\n";
      else
        out << "made\tO\nby\tO\npyrolysis\tB-process\n\n";
    }
    write_all(p, out.str());
  }

  std::filesystem::path dir_;
};

std::string tiny_train_flags(int epochs = 40) {
  return "--epochs " + std::to_string(epochs) +
         " --lstm-units 8 --max-len 8 --embedding-dim 8 --learning-rate 0.05 "
         "--spatial-dropout 0 --recurrent-dropout 0 --validation-split 0 --test-fraction 0 "
         "--no-early-stopping --seed 7";
}

}  // namespace

TEST_F(CliTest, SynthDeterministicAndParseable) {
  ASSERT_EQ(run("synth --seed 5 --n 40 --out " + path("a.iob")), 0);
  ASSERT_EQ(run("synth --seed 5 --n 40 --out " + path("b.iob")), 0);
  EXPECT_EQ(read_all(path("a.iob")), read_all(path("b.iob")));
  const Corpus c = parse_iob(read_all(path("a.iob")));
  EXPECT_EQ(c.size(), 40u);
}

TEST_F(CliTest, SynthZeroSentencesIsUsageError) {
  EXPECT_EQ(run("synth --seed 5 --n 0 --out " + path("x.iob")), 1);
}

TEST_F(CliTest, TrainIsByteDeterministic) {
  write_tiny_corpus(path("c.iob"));
  const std::string flags = tiny_train_flags(3);
  ASSERT_EQ(run("train --corpus " + path("c.iob") + " --out " + path("m1.bundle") + " " + flags),
            0);
  ASSERT_EQ(run("train --corpus " + path("c.iob") + " --out " + path("m2.bundle") + " " + flags),
            0);
  const std::string a = read_all(path("m1.bundle"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read_all(path("m2.bundle")));
  EXPECT_FALSE(read_all(path("m1.bundle.history")).empty());
  EXPECT_FALSE(read_all(path("m1.bundle.config")).empty());
}

TEST_F(CliTest, MissingCorpusIsDataError) {
  EXPECT_EQ(run("train --corpus " + path("absent.iob") + " --out " + path("m.bundle")), 2);
  EXPECT_EQ(run("stats --corpus " + path("absent.iob")), 2);
}

TEST_F(CliTest, PaperAlgoPresetResolvesLiterals) {
  write_tiny_corpus(path("c.iob"));
  ASSERT_EQ(run("train --corpus " + path("c.iob") + " --out " + path("m.bundle") +
                " --preset paper-algo --epochs 0 --lstm-units 8"),
            0);
  const std::string cfg = read_all(path("m.bundle.config"));
  EXPECT_NE(cfg.find("max_len = 90"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("test_fraction = 0.1"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("batch_size = 16"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("max_epochs = 0"), std::string::npos) << cfg;  // flag overrides preset
  EXPECT_NE(cfg.find("preset = paper-algo"), std::string::npos) << cfg;
}

TEST_F(CliTest, PaperTextPresetUsesSixtyAndTwentyPercent) {
  write_tiny_corpus(path("c.iob"));
  ASSERT_EQ(run("stats --corpus " + path("c.iob") + " --preset paper-text --out " +
                path("stats.txt")),
            0);
  const std::string text = read_all(path("stats.txt"));
  EXPECT_NE(text.find("# max_len = 60"), std::string::npos) << text;
  EXPECT_NE(text.find("# test_fraction = 0.2"), std::string::npos) << text;
}

TEST_F(CliTest, UnknownPresetAndConfigKeyAreUsageErrors) {
  write_tiny_corpus(path("c.iob"));
  EXPECT_EQ(run("stats --corpus " + path("c.iob") + " --preset paper-vibes"), 1);
  write_all(path("bad.cfg"), "no_such_key = 5\n");
  EXPECT_EQ(run("stats --corpus " + path("c.iob") + " --config " + path("bad.cfg")), 1);
}

TEST_F(CliTest, ConfigFileBelowFlagsPrecedence) {
  write_tiny_corpus(path("c.iob"));
  write_all(path("ok.cfg"), "max_len = 33\nbatch_size = 4\n");
  ASSERT_EQ(run("stats --corpus " + path("c.iob") + " --config " + path("ok.cfg") +
                " --max-len 44 --out " + path("s.txt")),
            0);
  const std::string text = read_all(path("s.txt"));
  EXPECT_NE(text.find("# max_len = 44"), std::string::npos) << text;     // flag wins
  EXPECT_NE(text.find("# batch_size = 4"), std::string::npos) << text;   // file applies
}

TEST_F(CliTest, TrainedModelEvaluatesPerfectlyOnItsOwnCorpus) {
  write_tiny_corpus(path("c.iob"));
  ASSERT_EQ(run("train --corpus " + path("c.iob") + " --out " + path("m.bundle") + " " +
                tiny_train_flags()),
            0);
  ASSERT_EQ(run("eval --model " + path("m.bundle") + " --corpus " + path("c.iob") + " --out " +
                path("report.txt")),
            0);
  const std::string report = read_all(path("report.txt"));
  EXPECT_NE(report.find("f1\t1.000000"), std::string::npos) << report;
  for (const char* key : {"precision\t", "recall\t", "counts.tp\t", "per_type.material.f1\t",
                          "token_accuracy.masked\t", "# tool = matner"})
    EXPECT_NE(report.find(key), std::string::npos) << key;
}

TEST_F(CliTest, EvalEmptyCorpusIsDataError) {
  write_tiny_corpus(path("c.iob"));
  ASSERT_EQ(run("train --corpus " + path("c.iob") + " --out " + path("m.bundle") + " " +
                tiny_train_flags(1)),
            0);
  write_all(path("empty.iob"), "");
  EXPECT_EQ(run("eval --model " + path("m.bundle") + " --corpus " + path("empty.iob")), 2);
  write_all(path("badtag.iob"), "x\tB-alloy\n");
  EXPECT_EQ(run("eval --model " + path("m.bundle") + " --corpus " + path("badtag.iob")), 2);
}

TEST_F(CliTest, PredictRoundTripsThroughParser) {
  write_tiny_corpus(path("c.iob"));
  ASSERT_EQ(run("train --corpus " + path("c.iob") + " --out " + path("m.bundle") + " " +
                tiny_train_flags()),
            0);
  write_all(path("input.txt"), "graphene is good\nmade by pyrolysis\n");
  ASSERT_EQ(run("predict --model " + path("m.bundle") + " --input " + path("input.txt") +
                " --out " + path("pred.iob")),
            0);
  const std::string out = read_all(path("pred.iob"));
  const Corpus parsed = parse_iob(out);
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed.sentences[0].tokens,
            (std::vector<std::string>{"graphene", "is", "good"}));
  // the memorizing model tags its own training data correctly
  EXPECT_EQ(parsed.sentences[0].tags[0], "B-material");
  EXPECT_EQ(parsed.sentences[1].tags[2], "B-process");
}

TEST_F(CliTest, PredictEmptyInputGivesEmptyOutput) {
  write_tiny_corpus(path("c.iob"));
  ASSERT_EQ(run("train --corpus " + path("c.iob") + " --out " + path("m.bundle") + " " +
                tiny_train_flags(1)),
            0);
  write_all(path("empty.txt"), "");
  EXPECT_EQ(run("predict --model " + path("m.bundle") + " --input " + path("empty.txt") +
                " --out " + path("pred.iob")),
            0);
  EXPECT_TRUE(read_all(path("pred.iob")).empty());
}

TEST_F(CliTest, CrossvalWritesFoldAndAggregateRows) {
  write_tiny_corpus(path("c.iob"), 12);
  const std::string flags =
      "--epochs 10 --lstm-units 8 --max-len 8 --embedding-dim 8 --learning-rate 0.05 "
      "--spatial-dropout 0 --recurrent-dropout 0 --validation-split 0 --no-early-stopping "
      "--seed 3 --k 2";
  ASSERT_EQ(run("crossval --corpus " + path("c.iob") + " --out " + path("cv.txt") + " " + flags),
            0);
  const std::string report = read_all(path("cv.txt"));
  EXPECT_NE(report.find("fold\tprecision\trecall\tf1\ttoken_accuracy"), std::string::npos);
  EXPECT_NE(report.find("\nmean\t"), std::string::npos);
  EXPECT_NE(report.find("\nstddev_f1\t"), std::string::npos);
  int fold_rows = 0;
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) ++fold_rows;
  EXPECT_EQ(fold_rows, 2);

  ASSERT_EQ(run("crossval --corpus " + path("c.iob") + " --out " + path("cv2.txt") + " " + flags),
            0);
  EXPECT_EQ(report, read_all(path("cv2.txt")));  // seeded rerun identical
}

TEST_F(CliTest, CrossvalDefaultsToFiveFolds) {
  write_tiny_corpus(path("c.iob"), 15);
  ASSERT_EQ(run("crossval --corpus " + path("c.iob") + " --out " + path("cv5.txt") +
                " --epochs 5 --lstm-units 8 --max-len 8 --embedding-dim 8 --learning-rate 0.05 "
                "--spatial-dropout 0 --recurrent-dropout 0 --validation-split 0 "
                "--no-early-stopping --seed 3"),
            0);
  const std::string report = read_all(path("cv5.txt"));
  int fold_rows = 0;
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) ++fold_rows;
  EXPECT_EQ(fold_rows, 5);
}

TEST_F(CliTest, CrossvalKOneIsUsageError) {
  write_tiny_corpus(path("c.iob"));
  EXPECT_EQ(run("crossval --corpus " + path("c.iob") + " --k 1"), 1);
}

TEST_F(CliTest, StatsDeterministicRows) {
  ASSERT_EQ(run("synth --seed 1 --n 100 --out " + path("s.iob")), 0);
  ASSERT_EQ(run("stats --corpus " + path("s.iob") + " --out " + path("st1.txt")), 0);
  ASSERT_EQ(run("stats --corpus " + path("s.iob") + " --out " + path("st2.txt")), 0);
  const std::string a = read_all(path("st1.txt"));
  EXPECT_EQ(a, read_all(path("st2.txt")));
  for (const char* key : {"documents\t", "entity_sentences\t", "annotated_words\t",
                          "material_sentences\t", "process_sentences\t"})
    EXPECT_NE(a.find(key), std::string::npos) << key;
}

TEST_F(CliTest, StatsEmptyFileIsDataError) {
  write_all(path("empty.iob"), "");
  EXPECT_EQ(run("stats --corpus " + path("empty.iob")), 2);
}

TEST_F(CliTest, VersionFlagPrintsToolVersion) {
  EXPECT_EQ(run("--version >" + path("v.txt")), 0);
  EXPECT_NE(read_all(path("v.txt")).find("matner 1.0.0"), std::string::npos);
}
