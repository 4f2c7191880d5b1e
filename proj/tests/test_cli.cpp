#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = FAIRMETRIC_CLI;
const fs::path kData = FAIRMETRIC_DATA_DIR;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fairmetric_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = kCli.string() + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_text() const { return slurp(dir_ / "stderr.txt"); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::binary) << text;
    return dir_ / name;
  }

  fs::path small_config(const std::string& extra = "") const {
    return write("small.ini", "[experiment]\ntrain_size = 60\ntest_size = 30\nn_repeats = 3\ntriplet_subsample = 800\n"
                              "seed = 5\n" + extra +
                                  "[lmnn]\nmax_iter = 60\n[mmc]\nmax_iter = 60\n[lsml]\nmax_iter = 200\n"
                                  "[data]\ndefendants = " + (kData / "sample_defendants.csv").string() +
                                  "\nsurvey = " + (kData / "sample_survey.csv").string() + "\nlabels = survey\n");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run(""), 1); }

TEST_F(Cli, IngestWritesCanonicalCopies) {
  const auto out = dir_ / "ing";
  ASSERT_EQ(run("ingest --defendants " + (kData / "sample_defendants.csv").string() + " --survey " +
                (kData / "sample_survey.csv").string() + " --out-dir " + out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "defendants.csv"));
  EXPECT_TRUE(fs::exists(out / "survey.csv"));
  EXPECT_NE(slurp(out / "summary.txt").find("encoded_dim = 11"), std::string::npos);
}

TEST_F(Cli, IngestMissingFileWritesNothing) {
  const auto out = dir_ / "ing";
  EXPECT_EQ(run("ingest --defendants " + (dir_ / "nope.csv").string() + " --out-dir " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out / "defendants.csv"));
  EXPECT_NE(stderr_text().find("nope.csv"), std::string::npos);
}

TEST_F(Cli, IngestSchemaMismatchNamesColumn) {
  const auto defs = write("d.csv",
                          "id,age,sex,juv_fel_count,juv_misd_count,priors_count,c_charge_degree,charge_category,race,"
                          "compas_decile\nA,30,Male,0,0,1,F,arson,Other,4\n");
  const auto out = dir_ / "ing";
  EXPECT_EQ(run("ingest --defendants " + defs.string() + " --out-dir " + out.string()), 2);
  EXPECT_NE(stderr_text().find("charge_category"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "defendants.csv"));
}

TEST_F(Cli, ReportSurveyOnEmptyFileFails) {
  const auto empty = write("empty.csv", "");
  EXPECT_EQ(run("report-survey --survey " + empty.string() + " --out-dir " + (dir_ / "rs").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "rs" / "table_bail_rate.txt"));
}

TEST_F(Cli, ReportSurveyWritesTables) {
  const auto out = dir_ / "rs";
  ASSERT_EQ(run("report-survey --survey " + (kData / "sample_survey.csv").string() + " --out-dir " + out.string()), 0);
  for (const char* f : {"table_bail_rate.txt", "table_bail_rate.csv", "table_confidence_accuracy.txt",
                        "table_confidence_accuracy.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_EQ(run("report-survey --survey x.csv --confidence-threshold 9"), 1);
}

TEST_F(Cli, BadConfigIsExitOne) {
  const auto cfg = write("bad.ini", "[experiment]\ntrain_size = many\n[data]\ndefendants = x.csv\n");
  EXPECT_EQ(run("experiment --config " + cfg.string()), 1);
  const auto big = write("big.ini", "[experiment]\ntrain_size = 5000\n[data]\ndefendants = " +
                                        (kData / "sample_defendants.csv").string() + "\n");
  EXPECT_EQ(run("experiment --config " + big.string() + " --out-dir " + (dir_ / "o").string()), 1);
  EXPECT_FALSE(fs::exists(dir_ / "o" / "report.csv"));
}

TEST_F(Cli, ExperimentIsByteIdenticalAcrossRunsAndThreads) {
  const auto cfg = small_config();
  ASSERT_EQ(run("experiment --config " + cfg.string() + " --out-dir " + (dir_ / "a").string()), 0);
  ASSERT_EQ(run("experiment --config " + cfg.string() + " --out-dir " + (dir_ / "b").string() + " --threads 3"), 0);
  for (const char* f : {"report.csv", "report.txt", "metrics/LSML_r0.txt", "metrics/MMC_r2.txt"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_EQ(slurp(dir_ / "a" / "report.csv").substr(0, 23), "metric,loss,mean,std,n\n");
  ASSERT_EQ(run("experiment --config " + cfg.string() + " --out-dir " + (dir_ / "c").string() + " --seed 6"), 0);
  EXPECT_NE(slurp(dir_ / "a" / "report.csv"), slurp(dir_ / "c" / "report.csv"));
}

TEST_F(Cli, SweepWritesGrid) {
  const auto cfg = small_config("mode = sweep\nsigma_train_list = 0, 1\nsigma_test_list = 0, 1, 2\n");
  ASSERT_EQ(run("experiment --config " + cfg.string() + " --out-dir " + (dir_ / "s").string()), 0);
  const auto csv = slurp(dir_ / "s" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 3);
}

TEST_F(Cli, TripletsDump) {
  const auto cfg = small_config();
  ASSERT_EQ(run("triplets --config " + cfg.string() + " --sigma 3 --out " + (dir_ / "t.csv").string()), 0);
  const auto text = slurp(dir_ / "t.csv");
  EXPECT_EQ(text.substr(0, 6), "a,b,c\n");
}
