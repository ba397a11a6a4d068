#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "c2po/config.hpp"
#include "test_util.hpp"

using namespace c2po;

namespace {

const char* kIni = R"(# lexical overlap, short run
[task]
family = lexical_overlap
n_train = 200
n_test = 50
rho = 0.8

[train]
objective = dpo
epochs = 5
learning_rate = 0.02

[loss]
lambda_balance = 0.5

[baseline]
beta = 0.2

[sweep]
lambdas = 0.5, 1.0
deltas = 1

[output]
dir = results
formats = json
)";

}  // namespace

TEST(Config, DefaultsWithoutFile) {
  const auto c = load_experiment_config("");
  EXPECT_EQ(c.train.objective, Objective::C2PO);
  EXPECT_EQ(c.train.loss.lambda_balance, 0.7);
  EXPECT_EQ(c.train.loss.delta_margin, 1.0);
  EXPECT_EQ(c.train.loss.score.beta, 0.1);
  EXPECT_EQ(c.task.n_train, 1000u);
  EXPECT_EQ(c.output_dir, "out");
  EXPECT_TRUE(c.wants("csv"));
}

TEST(Config, ParsesIniFile) {
  std::istringstream is(kIni);
  const auto c = experiment_from_sections(parse_ini(is));
  EXPECT_EQ(c.task.family, TaskFamily::LexicalOverlap);
  EXPECT_EQ(c.task.n_train, 200u);
  EXPECT_EQ(c.task.rho, 0.8);
  EXPECT_EQ(c.train.objective, Objective::DPO);
  EXPECT_EQ(c.train.epochs, 5u);
  EXPECT_EQ(c.train.learning_rate, 0.02);
  EXPECT_EQ(c.train.loss.lambda_balance, 0.5);
  EXPECT_EQ(c.train.baseline.beta, 0.2);
  EXPECT_EQ(c.sweep_lambdas, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(c.sweep_deltas, (std::vector<double>{1.0}));
  EXPECT_EQ(c.output_dir, "results");
  EXPECT_FALSE(c.wants("csv"));
  EXPECT_TRUE(c.wants("json"));
}

TEST(Config, OverridesTakePrecedence) {
  testutil::TempDir dir("config_override");
  const auto path = dir.file("c.ini");
  {
    std::ofstream os(path);
    os << kIni;
  }
  const auto c = load_experiment_config(path, {"train.epochs=9", "loss.hinge_variant=linear", "task.seed=5"});
  EXPECT_EQ(c.train.epochs, 9u);
  EXPECT_EQ(c.train.loss.hinge_variant, HingeVariant::LinearHinge);
  EXPECT_EQ(c.task.seed, 5u);
  EXPECT_EQ(c.train.learning_rate, 0.02);
  EXPECT_THROW(load_experiment_config(path, {"epochs=3"}), ConfigError);
}

TEST(Config, ListsEveryViolation) {
  std::istringstream is(R"([task]
rho = 2
[train]
batch_size = 0
colour = blue
[loss]
lambda_balance = -0.1
[extras]
x = 1
)");
  try {
    experiment_from_sections(parse_ini(is));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* needle : {"task.rho", "train.batch_size", "train.colour", "loss.lambda_balance", "[extras]"})
      EXPECT_NE(msg.find(needle), std::string::npos) << needle << " missing from: " << msg;
    EXPECT_NE(msg.find("5 problems"), std::string::npos) << msg;
  }
}

TEST(Config, TypeErrorsAreViolations) {
  EXPECT_THROW(load_experiment_config("", {"train.epochs=three"}), ConfigError);
  EXPECT_THROW(load_experiment_config("", {"loss.beta=abc"}), ConfigError);
  EXPECT_THROW(load_experiment_config("", {"train.objective=ppo"}), ConfigError);
  EXPECT_THROW(load_experiment_config("", {"output.formats=xml"}), ConfigError);
  EXPECT_THROW(load_experiment_config("", {"sweep.deltas=0"}), ConfigError);
}

TEST(Config, MalformedIniIsParseError) {
  std::istringstream is("[task\nrho = 1\n");
  EXPECT_THROW(parse_ini(is), ParseError);
  EXPECT_THROW(load_experiment_config("/nonexistent/c2po.ini"), ConfigError);
}

TEST(Config, WrittenConfigReadsBackIdentically) {
  std::istringstream is(kIni);
  const auto c = experiment_from_sections(parse_ini(is));
  std::ostringstream os;
  write_ini(os, to_sections(c));
  std::istringstream back(os.str());
  const auto d = experiment_from_sections(parse_ini(back));
  EXPECT_EQ(to_sections(d), to_sections(c));
}

TEST(Config, ExternalDataset) {
  testutil::TempDir dir("config_data");
  TaskSpec s;
  s.n_train = 20;
  s.n_test = 10;
  const auto ds = gen_task(s);
  save_triples(ds, dir.file("t.jsonl"));
  save_vocab(ds.vocab, dir.file("v.json"));
  const auto c = load_experiment_config("", {"data.triples=" + dir.file("t.jsonl"), "data.vocab=" + dir.file("v.json")});
  EXPECT_EQ(experiment_dataset(c), ds);
}
