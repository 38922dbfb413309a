#include <doctest.h>

#include <cstdlib>
#include <json.hpp>
#include <sys/wait.h>

#include "nidda/table_io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nidda::io::read_text;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run nidda_cli(const std::string& args, const fs::path& work) {
  const fs::path out = work / "stdout.txt", err = work / "stderr.txt";
  const std::string cmd = std::string("\"") + NIDDA_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(out);
  r.err = read_text(err);
  return r;
}

nlohmann::json error_of(const Run& r) { return nlohmann::json::parse(r.err).at("error"); }

std::string data_flags(const fs::path& out) {
  return " --train_path \"" + nidda::test::fixture("kdd_train_fixture.gz") + "\" --test_path \"" +
         nidda::test::fixture("kdd_test_fixture.txt") + "\" --output_dir \"" + out.string() + "\"";
}

const std::string kSmall =
    " --n_synth 200 --burn_in 50 --pretrain_iters 20 --finetune_iters 5 --d_steps 2 --g_steps 1"
    " --normals_linear 300 --linear_epochs 5 --repeats 2";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  const auto work = nidda::test::scratch_dir("cli_usage");
  auto r = nidda_cli("", work);
  CHECK(r.code == 2);
  CHECK(error_of(r)["kind"] == "usage");
  r = nidda_cli("preprocess --no-such-flag 1", work);
  CHECK(r.code == 2);
  r = nidda_cli("reproduce", work);
  CHECK(r.code == 2);
  CHECK(nidda_cli("--help", work).code == 0);
}

TEST_CASE("runtime errors are JSON on stderr with exit 1") {
  const auto work = nidda::test::scratch_dir("cli_errors");
  auto r = nidda_cli("preprocess --train_path \"" + (work / "missing.gz").string() + "\" --output_dir \"" +
                         (work / "out").string() + "\"",
                     work);
  CHECK(r.code == 1);
  CHECK(error_of(r)["kind"] == "config");

  r = nidda_cli("reproduce --experiment binary --output_dir \"" + (work / "out").string() + "\"", work);
  CHECK(r.code == 1);
  CHECK(error_of(r)["message"].get<std::string>().find("nidda preprocess") != std::string::npos);

  r = nidda_cli("preprocess --m lots", work);
  CHECK(r.code == 1);
  CHECK(error_of(r)["kind"] == "config");

  nidda::io::write_text(work / "bad.txt", "0,tcp,http,SF,1,2\n");
  r = nidda_cli("preprocess --train_path \"" + (work / "bad.txt").string() + "\" --test_path \"" +
                    nidda::test::fixture("kdd_test_fixture.txt") + "\" --output_dir \"" + (work / "out").string() + "\"",
                work);
  CHECK(r.code == 1);
  CHECK(error_of(r)["kind"] == "parse");
  CHECK(error_of(r)["line"] == 1);

  nidda::io::write_text(work / "cfg.json", R"({"unknown": 1})");
  r = nidda_cli("preprocess --config \"" + (work / "cfg.json").string() + "\"", work);
  CHECK(r.code == 1);
  CHECK(error_of(r)["message"].get<std::string>().find("unknown") != std::string::npos);
}

TEST_CASE("file-level augmentation commands") {
  const auto work = nidda::test::scratch_dir("cli_files");
  Eigen::MatrixXd seeds(30, 3);
  for (Eigen::Index i = 0; i < seeds.rows(); ++i) seeds.row(i) << double(i % 4), 2.0, double(i % 7);
  nidda::io::write_matrix_csv(work / "seeds.csv", seeds, {"a", "b", "c"}, {});
  auto r = nidda_cli("augment pgm --seeds \"" + (work / "seeds.csv").string() + "\" --out \"" +
                         (work / "synth.csv").string() + "\" --n 120 --burnin 20",
                     work);
  REQUIRE(r.code == 0);
  const auto synth = nidda::io::read_matrix_csv(work / "synth.csv");
  CHECK(synth.rows() == 120);
  CHECK((synth.col(1).array() >= 0).all());

  const std::string dgnn = "augment dgnn --seeds \"" + (work / "seeds.csv").string() + "\" --synth \"" +
                           (work / "synth.csv").string() + "\" --out \"" + (work / "aug.csv").string() +
                           "\" --checkpoint \"" + (work / "gan.json").string() +
                           "\" --pretrain_iters 10 --finetune_iters 5 --batch 8 --augment_target 64 --m 30";
  r = nidda_cli(dgnn, work);
  REQUIRE(r.code == 0);
  CHECK(nidda::io::read_matrix_csv(work / "aug.csv").rows() == 64);
  CHECK(fs::exists(work / "aug.csv.loss_history.csv"));
  CHECK(nlohmann::json::parse(read_text(work / "gan.json"))["format"] == "nidda-gan");

  r = nidda_cli(dgnn + " --divergence_limit 1e-9 --history \"" + (work / "h.csv").string() + "\"", work);
  CHECK(r.code == 1);
  const auto e = error_of(r);
  CHECK(e["kind"] == "divergence");
  CHECK(e["history_path"] == (work / "h.csv").string());
  CHECK(fs::exists(work / "h.csv"));
}

TEST_CASE("full pipeline through the command line") {
  const auto work = nidda::test::scratch_dir("cli_full");
  const auto out = work / "out";
  auto r = nidda_cli("preprocess" + data_flags(out) + kSmall, work);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("NORMAL") != std::string::npos);

  r = nidda_cli("augment full --attack mailbomb" + data_flags(out) + kSmall + " --attack_types mailbomb,saint", work);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "augment" / "mailbomb" / "augmented.csv"));
  CHECK(!fs::exists(out / "augment" / "saint"));
  r = nidda_cli("augment full" + data_flags(out) + kSmall + " --attack_types mailbomb,saint", work);
  REQUIRE(r.code == 0);

  r = nidda_cli("reproduce --experiment binary" + data_flags(out) + kSmall + " --attack_types mailbomb,saint", work);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("NID-DA-SVM") != std::string::npos);
  CHECK(fs::exists(out / "reports" / "binary.json"));

  // The same settings from a config file.
  nlohmann::json cfg;
  cfg["train_path"] = nidda::test::fixture("kdd_train_fixture.gz");
  cfg["test_path"] = nidda::test::fixture("kdd_test_fixture.txt");
  cfg["output_dir"] = out.string();
  cfg["attack_types"] = {"mailbomb", "saint"};
  cfg["linear_epochs"] = 5;
  cfg["normals_linear"] = 300;
  cfg["repeats"] = 2;
  cfg["n_synth"] = 200;
  cfg["burn_in"] = 50;
  cfg["pretrain_iters"] = 20;
  cfg["finetune_iters"] = 5;
  cfg["d_steps"] = 2;
  cfg["g_steps"] = 1;
  nidda::io::write_text(work / "cfg.json", cfg.dump());
  const std::string before = read_text(out / "reports" / "binary.csv");
  r = nidda_cli("reproduce --experiment binary --config \"" + (work / "cfg.json").string() + "\"", work);
  REQUIRE(r.code == 0);
  CHECK(read_text(out / "reports" / "binary.csv") == before);

  const auto model = work / "model.json";
  r = nidda_cli("train --attack saint --classifier lr --augmentation none --model-out \"" + model.string() +
                    "\" --config \"" + (work / "cfg.json").string() + "\"",
                work);
  REQUIRE(r.code == 0);
  r = nidda_cli("evaluate --model \"" + model.string() + "\" --report \"" + (work / "eval.csv").string() +
                    "\" --config \"" + (work / "cfg.json").string() + "\"",
                work);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("saint,NID-LR") != std::string::npos);
}
