#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "varpred/image_io.hpp"

using namespace varpred;
using namespace varpred::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("VARPRED_TEST_TMP");
  fs::path dir = fs::path(root ? root : fs::temp_directory_path().string() + "/varpred-unit") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "vpctl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json tiny_config(const std::string& model) {
  return {{"train",
           {{"model", model},
            {"width", 2},
            {"batch_size", 8},
            {"steps", 3},
            {"dataset", "synthetic-small"},
            {"log_every", 1}}},
          {"vp_metric", {{"samples", 600}, {"train_ratio", 0.05}, {"trials", 2}}},
          {"factorvae_metric", {{"train_votes", 20}, {"eval_votes", 10}, {"batch_size", 8}, {"std_samples", 200}}}};
}

}  // namespace

TEST_CASE("schema command prints a JSON schema") {
  const Result r = run({"schema"});
  REQUIRE(r.code == 0);
  const json schema = json::parse(r.out);
  CHECK(schema["$schema"] == "http://json-schema.org/draft-07/schema#");
  CHECK(schema["properties"].contains("train"));
  CHECK(schema["additionalProperties"] == false);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"eval"}).code == 2);
  CHECK(run({"eval", "--checkpoint", "x", "--metric", "inception"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("config errors exit with code 2 and name the key") {
  const fs::path dir = scratch_dir("cli-config");
  json cfg = tiny_config("gan");
  cfg["train"]["bogus"] = 1;
  write(dir / "bad.json", cfg);
  const Result r = run({"train", "--config", (dir / "bad.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("bogus") != std::string::npos);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(run({"train", "--config", (dir / "broken.json").string()}).code == 2);
  CHECK(run({"train", "--config", (dir / "missing.json").string()}).code == 2);
}

TEST_CASE("gen-data writes the default grid reproducibly") {
  const fs::path dir = scratch_dir("cli-gen");
  const Result a = run({"gen-data", "--seed", "3", "--out", (dir / "a.vpds").string(), "--csv"});
  REQUIRE(a.code == 0);
  CHECK(json::parse(a.out)["images"] == 36864);
  CHECK(fs::exists(dir / "a.vpds.config.json"));
  CHECK(fs::exists(dir / "a.vpds.factors.csv"));
  REQUIRE(run({"gen-data", "--seed", "3", "--out", (dir / "b.vpds").string()}).code == 0);
  CHECK(slurp(dir / "a.vpds") == slurp(dir / "b.vpds"));
  CHECK(load_dataset(dir / "a.vpds").size() == 36864);
}

TEST_CASE("gen-data rejects an invalid spec") {
  const fs::path dir = scratch_dir("cli-gen-bad");
  write(dir / "spec.json", {{"factors", {{{"name", "s"}, {"cardinality", 2}, {"role", "shape"}}}}, {"max_radius", 0.9}});
  const Result r = run({"gen-data", "--spec", (dir / "spec.json").string(), "--out", (dir / "x.vpds").string()});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  CHECK_FALSE(fs::exists(dir / "x.vpds"));
}

TEST_CASE("train, resume, eval and traverse") {
  const fs::path dir = scratch_dir("cli-train");
  write(dir / "vpgan.json", tiny_config("vpgan"));
  const fs::path run_dir = dir / "vpgan";
  const Result t = run({"train", "--config", (dir / "vpgan.json").string(), "--out", run_dir.string()});
  REQUIRE(t.code == 0);
  CHECK(fs::exists(run_dir / "losses.csv"));
  CHECK(fs::exists(run_dir / "experiment.json"));
  CHECK(slurp(run_dir / "losses.csv").find("vp_bound") != std::string::npos);

  const Result resumed = run({"train", "--config", (dir / "vpgan.json").string(), "--out", run_dir.string(),
                              "--resume", "--steps", "5"});
  REQUIRE(resumed.code == 0);
  CHECK(json::parse(resumed.out)["resumed_from"] == 3);
  CHECK(json::parse(resumed.out)["steps_completed"] == 5);

  const std::string ckpt = (run_dir / "checkpoints" / "latest.vpck").string();
  const Result e1 = run({"eval", "--config", (dir / "vpgan.json").string(), "--checkpoint", ckpt, "--metric", "vp",
                         "--seed", "4", "--out", (dir / "e1").string()});
  REQUIRE(e1.code == 0);
  const double score = json::parse(e1.out)["score"];
  CHECK(score >= 0.0);
  CHECK(score <= 1.0);
  REQUIRE(run({"eval", "--config", (dir / "vpgan.json").string(), "--checkpoint", ckpt, "--metric", "vp", "--seed",
               "4", "--out", (dir / "e2").string()})
              .code == 0);
  CHECK(slurp(dir / "e1" / "eval-vp.json") == slurp(dir / "e2" / "eval-vp.json"));

  const Result fv = run({"eval", "--config", (dir / "vpgan.json").string(), "--checkpoint", ckpt, "--metric",
                         "factorvae", "--out", (dir / "e3").string()});
  CHECK(fv.code == 3);
  CHECK(fv.err.find("encoder") != std::string::npos);

  const fs::path png = dir / "grid.png";
  const Result tr = run({"traverse", "--checkpoint", ckpt, "--dims", "0,2", "--range=-2,2", "--steps", "4", "--out",
                         png.string()});
  REQUIRE(tr.code == 0);
  const Tensor<float> img = read_png(png);
  CHECK(img.shape() == Shape{1, 2 * 33 + 1, 4 * 33 + 1});
  CHECK(run({"traverse", "--checkpoint", ckpt, "--dims", "9", "--out", (dir / "bad.png").string()}).code == 2);

  CHECK(run({"eval", "--checkpoint", (dir / "nope.vpck").string(), "--out", (dir / "e4").string()}).code == 3);
}

TEST_CASE("plain GAN training logs no VP term") {
  const fs::path dir = scratch_dir("cli-gan");
  write(dir / "gan.json", tiny_config("gan"));
  REQUIRE(run({"train", "--config", (dir / "gan.json").string(), "--out", (dir / "run").string()}).code == 0);
  CHECK(slurp(dir / "run" / "losses.csv").find("vp_bound") == std::string::npos);
}

TEST_CASE("factorvae evaluation of a VAE checkpoint") {
  const fs::path dir = scratch_dir("cli-vae");
  write(dir / "vae.json", tiny_config("betavae"));
  REQUIRE(run({"train", "--config", (dir / "vae.json").string(), "--out", (dir / "run").string()}).code == 0);
  const Result r = run({"eval", "--config", (dir / "vae.json").string(), "--checkpoint",
                        (dir / "run" / "checkpoints" / "latest.vpck").string(), "--metric", "factorvae", "--out",
                        (dir / "eval").string()});
  if (r.code == 0) {
    const double s = json::parse(r.out)["score"];
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  } else {
    // An untrained encoder may collapse every dimension.
    CHECK(r.code == 3);
    CHECK(r.err.find("collapsed") != std::string::npos);
  }
}

TEST_CASE("correlate pre-scored manifests") {
  const fs::path dir = scratch_dir("cli-corr");
  json models = json::array();
  const std::vector<double> vp = {0.2, 0.4, 0.5, 0.9};
  for (std::size_t i = 0; i < vp.size(); ++i) {
    models.push_back({{"id", "m" + std::to_string(i)},
                      {"beta", double(i + 1)},
                      {"tags", i == 3 ? json::array({"high-beta"}) : json::array()},
                      {"vp_score", vp[i]},
                      {"factorvae_score", vp[i]}});
  }
  write(dir / "manifest.json", {{"models", models}});
  const Result r = run({"correlate", "--manifest", (dir / "manifest.json").string(), "--exclude-tag", "high-beta",
                        "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const json out = json::parse(r.out);
  CHECK(out["pcc"].get<double>() == doctest::Approx(1.0));
  CHECK(out["pcc_excluding"].get<double>() == doctest::Approx(1.0));
  CHECK(out["excluded_count"] == 1);
  CHECK(fs::exists(dir / "out" / "correlation.csv"));
  CHECK(fs::exists(dir / "out" / "scatter.dat"));

  models.erase(models.begin());
  models.erase(models.begin());
  write(dir / "short.json", models);
  CHECK(run({"correlate", "--manifest", (dir / "short.json").string(), "--out", (dir / "out2").string()}).code == 2);
}
