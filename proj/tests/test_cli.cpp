#define DOCTEST_CONFIG_IMPLEMENT
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "doctest.h"
#include "nodule/dataset.hpp"
#include "nodule/eval.hpp"
#include "nodule/volume.hpp"
#include "oracles.hpp"

namespace {

std::string g_cli;

int run(const std::string& args, std::string* output = nullptr) {
  const std::string out_file = "/tmp/nodule_cli_out_" + std::to_string(::getpid());
  const std::string cmd = g_cli + " " + args + " >" + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(out_file, std::ios::binary);
    output->assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  std::remove(out_file.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cli: usage errors exit 1") {
  CHECK(run("frobnicate") == 1);
  CHECK(run("project --in missing.rvol") == 1);  // missing required flags
  CHECK(run("--help") == 0);
}

TEST_CASE("cli: synth is deterministic and project matches the library path") {
  oracle::TempDir dir("cli");
  const std::string d1 = dir.file("a");
  const std::string d2 = dir.file("b");
  CHECK(run("synth --count 6 --side 9 --seed 7 --out " + d1) == 0);
  CHECK(run("synth --count 6 --side 9 --seed 7 --out " + d2) == 0);
  CHECK(slurp(d1 + "/manifest.csv") == slurp(d2 + "/manifest.csv"));
  CHECK(slurp(d1 + "/n00002.rvol") == slurp(d2 + "/n00002.rvol"));

  // project one volume and compare channel 0 with the in-process tensor
  const std::string tensor_path = dir.file("t.ptn");
  CHECK(run("project --in " + d1 + "/n00002.rvol --center 4,4,4 --side 9 --out " +
            tensor_path + " --png " + dir.file("t")) == 0);
  const nodule::ProjectionTensor got = nodule::load_tensor(tensor_path);
  const nodule::ProjectionTensor want =
      nodule::sample_tensor("n00002.rvol", {4, 4, 4}, d1, 9, 0.5);
  REQUIRE(got.side == want.side);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < got.channels[c].pix.size(); ++i) {
      // stored as f32, so compare at f32 precision
      CHECK(got.channels[c].pix[i] ==
            doctest::Approx(want.channels[c].pix[i]).epsilon(1e-6));
    }
  }
  CHECK(!slurp(dir.file("t_c0.png")).empty());

  // exit 2 on malformed volume data
  std::ofstream bad(dir.file("bad.rvol"), std::ios::binary);
  bad << "XXXX";
  bad.close();
  CHECK(run("project --in " + dir.file("bad.rvol") + " --center 1,1,1 --side 3 --out " +
            dir.file("q.ptn")) == 2);
}

TEST_CASE("cli: --seed and --config are accepted by every subcommand") {
  oracle::TempDir dir("cliuni");
  CHECK(run("synth --count 2 --side 9 --seed 3 --out " + dir.file("d") + " --config x") == 0);

  std::ofstream cfg(dir.file("exp.cfg"));
  cfg << "patch_side = 9\nresample_mm = 0.5\n";
  cfg.close();
  // --config supplies the patch side; --seed is accepted on a pure stage
  CHECK(run("project --in " + dir.file("d") + "/n00000.rvol --center 4,4,4 --config " +
            dir.file("exp.cfg") + " --seed 1 --out " + dir.file("t.ptn")) == 0);
  const nodule::ProjectionTensor t = nodule::load_tensor(dir.file("t.ptn"));
  CHECK(t.side == 9);
  CHECK(run("augment --in " + dir.file("t.ptn") + " --out " + dir.file("a") +
            " --count 2 --config " + dir.file("exp.cfg")) == 0);
}

TEST_CASE("cli: augment writes count tensors deterministically") {
  oracle::TempDir dir("cliaug");
  CHECK(run("synth --count 1 --side 9 --seed 3 --out " + dir.file("d")) == 0);
  CHECK(run("project --in " + dir.file("d") + "/n00000.rvol --center 4,4,4 --side 9 --out " +
            dir.file("t.ptn")) == 0);
  CHECK(run("augment --in " + dir.file("t.ptn") + " --out " + dir.file("a") +
            " --count 5 --seed 9") == 0);
  CHECK(run("augment --in " + dir.file("t.ptn") + " --out " + dir.file("b") +
            " --count 5 --seed 9") == 0);
  for (int i = 0; i < 5; ++i) {
    const std::string name = "/aug_000" + std::to_string(i) + ".ptn";
    const std::string bytes = slurp(dir.file("a") + name);
    CHECK(!bytes.empty());
    CHECK(bytes == slurp(dir.file("b") + name));
  }
}

TEST_CASE("cli: train, features, regress chain") {
  oracle::TempDir dir("clitrain");
  CHECK(run("synth --count 24 --side 9 --seed 5 --out " + dir.file("d")) == 0);

  std::ofstream cfg(dir.file("exp.cfg"));
  cfg << "patch_side = 9\n"
      << "augment_count = 2\n"
      << "cnn_channels = 4,4,4,4,4\n"
      << "cnn_fc = 8,4,2\n"
      << "cnn_iterations = 20\n"
      << "cnn_batch = 8\n"
      << "threads = 2\n";
  cfg.close();

  CHECK(run("train --manifest " + dir.file("d") + "/manifest.csv --config " + dir.file("exp.cfg") +
            " --seed 2 --out " + dir.file("net.nnc") + " --loss-csv " + dir.file("loss.csv")) == 0);
  CHECK(!slurp(dir.file("net.nnc")).empty());
  CHECK(slurp(dir.file("loss.csv")).rfind("iteration,loss", 0) == 0);

  CHECK(run("features --model " + dir.file("net.nnc") + " --manifest " + dir.file("d") +
            "/manifest.csv --out " + dir.file("f.csv")) == 0);
  const nodule::FeatureTable table = nodule::load_feature_csv(dir.file("f.csv"));
  CHECK(table.x.cols == 8);
  CHECK(table.ids.size() >= 10);

  CHECK(run("regress --method gp --train " + dir.file("f.csv") + " --test " + dir.file("f.csv") +
            " --out " + dir.file("p.csv")) == 0);
  const std::string preds = slurp(dir.file("p.csv"));
  CHECK(preds.rfind("id,mean,variance", 0) == 0);

  for (const std::string method : {"lasso", "enet", "svr"}) {
    CHECK(run("regress --method " + method + " --train " + dir.file("f.csv") + " --test " +
              dir.file("f.csv") + " --out " + dir.file("p_" + method + ".csv")) == 0);
  }
}

TEST_CASE("cli: numeric failures exit 3") {
  oracle::TempDir dir("clinum");
  std::ofstream f(dir.file("dup.csv"));
  f << "id,score,f0\n"
    << "a,2,1.0\n"
    << "b,4,1.0\n";
  f.close();
  std::string output;
  const int code = run("regress --method gp --sigma-n 0 --length-scale 1.0 --train " +
                           dir.file("dup.csv") + " --test " + dir.file("dup.csv") + " --out " +
                           dir.file("p.csv"),
                       &output);
  CHECK(code == 3);
  CHECK(output.find("numeric error") != std::string::npos);

  // the same inputs through the median heuristic are a data error instead
  CHECK(run("regress --method gp --train " + dir.file("dup.csv") + " --test " +
            dir.file("dup.csv") + " --out " + dir.file("p.csv")) == 2);
}

TEST_CASE("cli: evaluate then report renders one row per method") {
  oracle::TempDir dir("clieval");
  CHECK(run("synth --count 30 --side 9 --seed 11 --out " + dir.file("d")) == 0);
  std::ofstream cfg(dir.file("exp.cfg"));
  cfg << "manifest = " << dir.file("d") << "/manifest.csv\n"
      << "folds = 2\n"
      << "seed = 4\n"
      << "patch_side = 9\n"
      << "augment_count = 2\n"
      << "cnn_channels = 4,4,4,4,4\n"
      << "cnn_fc = 8,4,2\n"
      << "cnn_iterations = 15\n"
      << "cnn_batch = 8\n"
      << "subsample = 50\n"
      << "threads = 2\n"
      << "rows = gp:attr,gp:fused\n";
  cfg.close();

  std::string table;
  CHECK(run("evaluate --config " + dir.file("exp.cfg") + " --out " + dir.file("r.json"),
            &table) == 0);
  CHECK(table.find("gp") != std::string::npos);

  // byte-identical after a second run with the same config
  CHECK(run("evaluate --config " + dir.file("exp.cfg") + " --out " + dir.file("r2.json")) == 0);
  CHECK(slurp(dir.file("r.json")) == slurp(dir.file("r2.json")));

  std::string rendered;
  CHECK(run("report " + dir.file("r.json"), &rendered) == 0);
  CHECK(rendered.find("attr") != std::string::npos);
  CHECK(rendered.find("fused") != std::string::npos);
}

int main(int argc, char** argv) {
  doctest::Context context;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("--cli=", 0) == 0) g_cli = arg.substr(6);
  }
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: test_cli --cli=/path/to/nodule\n");
    return 1;
  }
  context.applyCommandLine(argc, argv);
  return context.run();
}
