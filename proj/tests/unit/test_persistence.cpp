#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "varpred/checkpoint.hpp"
#include "varpred/error.hpp"
#include "varpred/random.hpp"

using namespace varpred;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("VARPRED_TEST_TMP");
  fs::path dir = fs::path(root ? root : fs::temp_directory_path().string() + "/varpred-unit") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Tensor<float> random_tensor(Shape shape, Seed seed) {
  Tensor<float> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

}  // namespace

TEST_CASE("generator checkpoints reproduce outputs bitwise") {
  const fs::path dir = scratch_dir("generator");
  for (InputMode mode : {InputMode::flat, InputMode::hierarchical}) {
    GeneratorConfig cfg;
    cfg.width = 4;
    cfg.input_mode = mode;
    cfg.seed = 4;
    Generator<float> g(cfg);
    save_checkpoint(g, dir / "g.vpck");
    const Generator<float> back = load_generator(dir / "g.vpck");
    const Tensor<float> z = random_tensor({5, 6}, 1);
    CHECK(back.forward(z) == g.forward(z));
    CHECK(back.config().input_mode == mode);
    CHECK(checkpoint_kind(dir / "g.vpck") == kKindGenerator);
  }
}

TEST_CASE("other model checkpoints round trip") {
  const fs::path dir = scratch_dir("models");
  DiscriminatorConfig dc;
  dc.width = 4;
  Discriminator<float> d(dc);
  save_checkpoint(d, dir / "d.vpck");
  const Tensor<float> x = random_tensor({3, 1, 32, 32}, 2);
  CHECK(load_discriminator(dir / "d.vpck").forward(x) == d.forward(x));

  RecognizerConfig rc;
  rc.width = 4;
  Recognizer<float> q(rc);
  save_checkpoint(q, dir / "q.vpck");
  const Tensor<float> pair = random_tensor({3, 2, 32, 32}, 3);
  CHECK(load_recognizer(dir / "q.vpck").forward(pair) == q.forward(pair));

  EncoderDecoderConfig ec;
  ec.width = 4;
  EncoderDecoder<float> vae(ec);
  save_checkpoint(vae, dir / "vae.vpck");
  const EncoderDecoder<float> vae_back = load_encoder_decoder(dir / "vae.vpck");
  CHECK(vae_back.encode(x).first == vae.encode(x).first);
  // A VAE checkpoint also serves as a generator (its decoder).
  const Tensor<float> z = random_tensor({2, 6}, 4);
  CHECK(load_generator(dir / "vae.vpck").forward(z) == vae.decoder().forward(z));
}

TEST_CASE("loading the wrong kind is a model-kind error") {
  const fs::path dir = scratch_dir("kind");
  DiscriminatorConfig dc;
  dc.width = 2;
  Discriminator<float> d(dc);
  save_checkpoint(d, dir / "d.vpck");
  CHECK_THROWS_AS(load_generator(dir / "d.vpck"), ModelKindError);
  CHECK_THROWS_AS(load_encoder_decoder(dir / "d.vpck"), ModelKindError);
}

TEST_CASE("damaged checkpoints raise persistence errors") {
  const fs::path dir = scratch_dir("damaged");
  GeneratorConfig cfg;
  cfg.width = 2;
  Generator<float> g(cfg);
  save_checkpoint(g, dir / "g.vpck");
  fs::copy_file(dir / "g.vpck", dir / "t.vpck");
  fs::resize_file(dir / "t.vpck", fs::file_size(dir / "t.vpck") / 2);
  CHECK_THROWS_AS(load_generator(dir / "t.vpck"), PersistenceError);
  CHECK_THROWS_AS(load_generator(dir / "missing.vpck"), PersistenceError);
  std::ofstream(dir / "empty.vpck");
  CHECK_THROWS_AS(load_generator(dir / "empty.vpck"), PersistenceError);
}

TEST_CASE("container layout, versioning and magic") {
  const fs::path dir = scratch_dir("container");
  Container c;
  c.meta["note"] = "hello";
  c.add("w", Tensor<float>({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6}));
  c.add("ids", {4}, std::vector<std::int32_t>{7, -1, 0, 3});
  write_container(dir / "c.bin", kCheckpointMagic, c);
  const Container back = read_container(dir / "c.bin", kCheckpointMagic);
  CHECK(back.meta["note"] == "hello");
  CHECK(back.tensor("w") == c.tensor("w"));
  CHECK(back.get("ids").i32 == std::vector<std::int32_t>{7, -1, 0, 3});
  CHECK_THROWS_AS(back.tensor("ids"), PersistenceError);
  CHECK_THROWS_AS(back.get("absent"), PersistenceError);
  CHECK_THROWS_AS(read_container(dir / "c.bin", kDatasetMagic), PersistenceError);

  // Rewrite the header with a future format version.
  std::ifstream in(dir / "c.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string from = "\"format_version\":1";
  const auto at = bytes.find(from);
  REQUIRE(at != std::string::npos);
  bytes.replace(at, from.size(), "\"format_version\":9");
  std::ofstream(dir / "v9.bin", std::ios::binary) << bytes;
  CHECK_THROWS_AS(read_container(dir / "v9.bin", kCheckpointMagic), PersistenceError);
}

TEST_CASE("fingerprints are stable and key-order independent") {
  const nlohmann::json a = {{"x", 1}, {"y", {1, 2}}};
  const nlohmann::json b = nlohmann::json::parse(R"({"y":[1,2],"x":1})");
  CHECK(fingerprint(a) == fingerprint(b));
  CHECK(fingerprint(a) != fingerprint(nlohmann::json{{"x", 2}, {"y", {1, 2}}}));
}
