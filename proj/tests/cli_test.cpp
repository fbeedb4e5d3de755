#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "redstore/cli.hpp"
#include "redstore/dataset.hpp"
#include "redstore/image.hpp"

using namespace redstore;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("redstore_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("usage errors exit nonzero") {
  CHECK(run_cli({}) != 0);
  CHECK(run_cli({"frobnicate"}) != 0);
  CHECK(run_cli({"train"}) != 0);                                // missing required flags
  CHECK(run_cli({"train", "--profile", "huge", "--out", "x"}) != 0);
  CHECK(run_cli({"attack", "--method", "fgsm", "--in", "a", "--out", "b", "--weights", "w"}) !=
        0);
}

TEST_CASE("run refuses to start without weights") {
  TempDir tmp;
  CHECK(run_cli({"run", "--profile", "standard", "--attack", "none", "--trials", "2", "--out",
                 tmp.file("r.csv"), "--weights-dir", tmp.file("missing")}) != 0);
  CHECK_FALSE(fs::exists(tmp.file("r.csv")));
}

TEST_CASE("report surfaces an empty input as a diagnostic") {
  TempDir tmp;
  const std::string csv = tmp.file("empty.csv");
  {
    std::ofstream f(csv);
    f << "trial,seed,model,attack,command_category,true_category,target_category,"
         "terminal_state,purchased_id,purchased_category,correct,redirected_to_adversarial,"
         "attack_iterations\n";
  }
  CHECK(run_cli({"report", "--in", csv, "--format", "csv", "--out", tmp.file("out.csv")}) != 0);
}

TEST_CASE("train, attack, run, report: tiny end-to-end flow with byte-stable outputs") {
  TempDir tmp;
  const std::string weights = tmp.file("standard.svlm");

  // tiny but real training run through the CLI
  CHECK(run_cli({"train", "--profile", "standard", "--out", weights, "--seed", "3",
                 "--per-category", "40", "--epochs", "2"}) == 0);
  REQUIRE(fs::exists(weights));

  // identical seed reproduces identical bytes
  const std::string weights2 = tmp.file("standard2.svlm");
  CHECK(run_cli({"train", "--profile", "standard", "--out", weights2, "--seed", "3",
                 "--per-category", "40", "--epochs", "2"}) == 0);
  CHECK(slurp(weights) == slurp(weights2));

  // craft an attack against a generated product photo
  const std::string clean = tmp.file("clean.ppm");
  write_ppm(clean, generate_product_image("sweater", 11, 192));
  const std::string adv1 = tmp.file("adv1.ppm");
  const std::string adv2 = tmp.file("adv2.ppm");
  CHECK(run_cli({"attack", "--method", "bim", "--in", clean, "--out", adv1, "--weights",
                 weights, "--target", "pants", "--true", "sweater", "--epsilon", "16",
                 "--alpha", "1", "--iters", "25", "--seed", "5"}) == 0);
  CHECK(run_cli({"attack", "--method", "bim", "--in", clean, "--out", adv2, "--weights",
                 weights, "--target", "pants", "--true", "sweater", "--epsilon", "16",
                 "--alpha", "1", "--iters", "25", "--seed", "5"}) == 0);
  CHECK(slurp(adv1) == slurp(adv2));

  // integer and fractional budgets mean the same thing
  const std::string adv3 = tmp.file("adv3.ppm");
  CHECK(run_cli({"attack", "--method", "bim", "--in", clean, "--out", adv3, "--weights",
                 weights, "--target", "pants", "--true", "sweater", "--epsilon",
                 "0.06274509803921569", "--alpha", "0.00392156862745098", "--iters", "25",
                 "--seed", "5"}) == 0);
  CHECK(slurp(adv1) == slurp(adv3));

  // the perturbation respects the byte-budget semantics
  Tensor clean_img = read_ppm(clean);
  Tensor adv_img = read_ppm(adv1);
  CHECK((adv_img.data - clean_img.data).cwiseAbs().maxCoeff() <= 16.0 / 255.0 + 1e-12);

  // end-to-end trials plus both report formats, byte-stable across reruns
  const std::string trials1 = tmp.file("r1.csv");
  const std::string trials2 = tmp.file("r2.csv");
  CHECK(run_cli({"run", "--profile", "standard", "--attack", "bim", "--trials", "3", "--seed",
                 "9", "--out", trials1, "--weights-dir", tmp.path.string(), "--jobs", "2"}) ==
        0);
  CHECK(run_cli({"run", "--profile", "standard", "--attack", "bim", "--trials", "3", "--seed",
                 "9", "--out", trials2, "--weights-dir", tmp.path.string(), "--jobs", "1"}) ==
        0);
  CHECK(slurp(trials1) == slurp(trials2));  // order-deterministic despite scheduling

  const std::string report_csv = tmp.file("report.csv");
  const std::string report_md = tmp.file("report.md");
  CHECK(run_cli({"report", "--in", trials1, "--format", "csv", "--out", report_csv}) == 0);
  CHECK(run_cli({"report", "--in", trials1, "--format", "markdown", "--out", report_md}) == 0);
  CHECK(slurp(report_csv).rfind("model,attack,n,", 0) == 0);
  CHECK(slurp(report_md).find("| BIM |") != std::string::npos);
}

TEST_CASE("spectral attack via the CLI rejects a target category") {
  TempDir tmp;
  const std::string clean = tmp.file("clean.ppm");
  write_ppm(clean, generate_product_image("sweater", 2, 64));
  CHECK(run_cli({"attack", "--method", "spectral", "--in", clean, "--out", tmp.file("a.ppm"),
                 "--weights", tmp.path.string(), "--target", "pants"}) != 0);
}
