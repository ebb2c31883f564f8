#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cove/cove.hpp"

namespace fs = std::filesystem;
using namespace cove;

namespace {

const std::string kBin = COVE_CLI_BIN;
const std::string kData = COVE_DATA_DIR;

int run(const std::string& args) {
  const std::string cmd = kBin + " " + args + " >cli_tmp/stdout.txt 2>cli_tmp/stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

struct CliFixture {
  CliFixture() {
    fs::create_directories("cli_tmp");
    if (!fs::exists("cli_tmp/toy.cvds")) {
      REQUIRE(run("ingest --input " + kData + "/toy_sessions.csv --output cli_tmp/toy.cvds") ==
              0);
    }
  }
};

}  // namespace

TEST_CASE_METHOD(CliFixture, "ingest writes a snapshot equal to the in-memory build") {
  Dataset direct = build_dataset(
      load_interactions(kData + "/toy_sessions.csv", ColumnMapping{}), 3, 5);
  Dataset from_cli = load_snapshot("cli_tmp/toy.cvds");
  CHECK(from_cli.num_users() == direct.num_users());
  CHECK(from_cli.num_items() == direct.num_items());
  CHECK(from_cli.num_interactions() == direct.num_interactions());
  CHECK(from_cli.user_ids == direct.user_ids);
  CHECK(from_cli.item_ids == direct.item_ids);
  const std::string out = slurp("cli_tmp/stdout.txt");
}

TEST_CASE_METHOD(CliFixture, "ingest reports row counts and stats") {
  REQUIRE(run("ingest --input " + kData + "/toy_interactions.csv --output cli_tmp/tiny.cvds"
              " --min-sessions 1 --min-item-interactions 1") == 0);
  const std::string out = slurp("cli_tmp/stdout.txt");
  CHECK(out.find("rows: 12") != std::string::npos);
  CHECK(out.find("users: 4") != std::string::npos);
  CHECK(out.find("sessions: 6") != std::string::npos);
  CHECK(out.find("items: 5") != std::string::npos);
}

TEST_CASE_METHOD(CliFixture, "missing input file exits with the data code") {
  CHECK(run("ingest --input cli_tmp/nope.csv --output cli_tmp/x.cvds") == 3);
}

TEST_CASE_METHOD(CliFixture, "corrupted snapshot magic exits with the data code") {
  {
    std::ofstream os("cli_tmp/corrupt.cvds", std::ios::binary);
    os << "JUNKJUNKJUNK";
  }
  CHECK(run("train --data cli_tmp/corrupt.cvds --experts bpr --epochs 1") == 3);
  CHECK(slurp("cli_tmp/stderr.txt").find("cli_tmp/corrupt.cvds") != std::string::npos);
}

TEST_CASE_METHOD(CliFixture, "invalid learning rate exits with the config code") {
  CHECK(run("train --data cli_tmp/toy.cvds --experts bpr --lr 0.5 --epochs 1") == 2);
}

TEST_CASE_METHOD(CliFixture, "unknown flag exits with the config code") {
  CHECK(run("train --data cli_tmp/toy.cvds --frobnicate") == 2);
}

TEST_CASE_METHOD(CliFixture, "train + evaluate pipeline via config file") {
  {
    std::ofstream os("cli_tmp/train.cfg");
    os << "[data]\n"
          "data = cli_tmp/toy.cvds\n"
          "split_seed = 7\n"
          "[train]\n"
          "experts = gru,bpr\n"
          "variant = score\n"
          "loss = bpr-max\n"
          "learning_rate = 0.05\n"
          "batch_size = 32\n"
          "epochs = 2\n"
          "seed = 11\n"
          "patience = 10\n"
          "out_dir = cli_tmp/run1\n";
  }
  REQUIRE(run("train --config cli_tmp/train.cfg") == 0);
  CHECK(fs::exists("cli_tmp/run1/model.cvmd"));
  CHECK(fs::exists("cli_tmp/run1/train_log.txt"));

  // deterministic rerun: identical checkpoint bytes
  const auto bytes1 = slurp("cli_tmp/run1/model.cvmd");
  REQUIRE(run("train --config cli_tmp/train.cfg") == 0);
  CHECK(slurp("cli_tmp/run1/model.cvmd") == bytes1);

  REQUIRE(run("evaluate --checkpoint cli_tmp/run1/model.cvmd --data cli_tmp/toy.cvds"
              " --mode test --out cli_tmp/report") == 0);
  CHECK(fs::exists("cli_tmp/report.txt"));
  CHECK(fs::exists("cli_tmp/report.csv"));
  const std::string rep = slurp("cli_tmp/report.txt");
  CHECK(rep.find("mrr: ") != std::string::npos);
  CHECK(rep.find("ndcg@10: ") != std::string::npos);

  // gate-k = n equals the default (0 -> all experts)
  REQUIRE(run("evaluate --checkpoint cli_tmp/run1/model.cvmd --data cli_tmp/toy.cvds"
              " --mode test --gate-k 2 --out cli_tmp/report_k2") == 0);
  CHECK(slurp("cli_tmp/report_k2.csv") == slurp("cli_tmp/report.csv"));

  // validation and test modes use distinct held-out sets
  REQUIRE(run("evaluate --checkpoint cli_tmp/run1/model.cvmd --data cli_tmp/toy.cvds"
              " --mode validation --out cli_tmp/report_val") == 0);
  CHECK(slurp("cli_tmp/report_val.csv") != slurp("cli_tmp/report.csv"));

  // plot the training log
  REQUIRE(run("plot --input cli_tmp/run1/train_log.txt --output cli_tmp/series.csv") == 0);
  const std::string series = slurp("cli_tmp/series.csv");
  CHECK(series.rfind("epoch,loss,val_mrr", 0) == 0);
  CHECK(series.find("\n1,") != std::string::npos);
  CHECK(series.find("\n2,") != std::string::npos);
}

TEST_CASE_METHOD(CliFixture, "COVE_SEED overrides the config seed") {
  {
    std::ofstream os("cli_tmp/seed.cfg");
    os << "data = cli_tmp/toy.cvds\nexperts = bpr\nepochs = 1\nseed = 1\n"
          "batch_size = 32\nout_dir = cli_tmp/seedrun\n";
  }
  REQUIRE(run("train --config cli_tmp/seed.cfg") == 0);
  const auto seed1 = slurp("cli_tmp/seedrun/model.cvmd");
  const std::string env_cmd = "COVE_SEED=2 " + kBin +
                              " train --config cli_tmp/seed.cfg >cli_tmp/stdout.txt 2>&1";
  REQUIRE(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
  const auto seed2 = slurp("cli_tmp/seedrun/model.cvmd");
  CHECK(seed1 != seed2);
  // explicit --seed beats the environment
  const std::string flag_cmd = "COVE_SEED=2 " + kBin +
                               " train --config cli_tmp/seed.cfg --seed 1"
                               " >cli_tmp/stdout.txt 2>&1";
  REQUIRE(WEXITSTATUS(std::system(flag_cmd.c_str())) == 0);
  CHECK(slurp("cli_tmp/seedrun/model.cvmd") == seed1);
}

TEST_CASE_METHOD(CliFixture, "analyze-preferences on twin checkpoints gives all ties") {
  {
    std::ofstream os("cli_tmp/an.cfg");
    os << "data = cli_tmp/toy.cvds\nexperts = bpr\nepochs = 1\nseed = 3\n"
          "batch_size = 32\nout_dir = cli_tmp/anrun\n";
  }
  REQUIRE(run("train --config cli_tmp/an.cfg") == 0);
  REQUIRE(run("analyze-preferences --bpr cli_tmp/anrun/model.cvmd"
              " --gru cli_tmp/anrun/model.cvmd --data cli_tmp/toy.cvds"
              " --out cli_tmp/prefs") == 0);
  const std::string out = slurp("cli_tmp/stdout.txt");
  CHECK(out.find("corpus_mean_bit: 0.5000") != std::string::npos);
  CHECK(fs::exists("cli_tmp/prefs_bits.csv"));
  const std::string hist = slurp("cli_tmp/prefs_hist.csv");
  CHECK(hist.rfind("bin,count", 0) == 0);

  // histogram reshapes through plot
  REQUIRE(run("plot --input cli_tmp/prefs_hist.csv --output cli_tmp/hist_series.csv") == 0);
  CHECK(slurp("cli_tmp/hist_series.csv").rfind("bin,count", 0) == 0);

  // missing plot input is a data error
  CHECK(run("plot --input cli_tmp/absent.csv --output cli_tmp/x.csv") == 3);
}

TEST_CASE_METHOD(CliFixture, "compare annotates metrics with paired t-tests") {
  {
    std::ofstream os("cli_tmp/cmp.cfg");
    os << "data = cli_tmp/toy.cvds\nexperts = fpmc\nepochs = 4\nseed = 5\n"
          "batch_size = 32\nout_dir = cli_tmp/cmprunA\n";
  }
  REQUIRE(run("train --config cli_tmp/cmp.cfg") == 0);
  {
    std::ofstream os("cli_tmp/cmp2.cfg");
    os << "data = cli_tmp/toy.cvds\nexperts = bpr\nepochs = 1\nseed = 5\n"
          "batch_size = 32\nout_dir = cli_tmp/cmprunB\n";
  }
  REQUIRE(run("train --config cli_tmp/cmp2.cfg") == 0);
  REQUIRE(run("compare --checkpoint-a cli_tmp/cmprunA/model.cvmd"
              " --checkpoint-b cli_tmp/cmprunB/model.cvmd --data cli_tmp/toy.cvds"
              " --out cli_tmp/cmp.csv") == 0);
  const std::string table = slurp("cli_tmp/cmp.csv");
  CHECK(table.rfind("metric,a,b,t,p,significant", 0) == 0);
  CHECK(table.find("mrr,") != std::string::npos);
}
