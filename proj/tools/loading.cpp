#include "loading.hpp"

#include "varpred/checkpoint.hpp"
#include "varpred/container.hpp"

namespace varpred::cli {

LoadedGenerator load_image_generator(const std::filesystem::path& path) {
  const Container c = read_container(path, kCheckpointMagic);
  const std::string kind = c.meta.value("kind", "");
  Prior prior = Prior::uniform;
  if (kind == kKindTrainingState && c.meta.contains("prior")) {
    prior = parse_prior(c.meta["prior"].get<std::string>());
  } else if (kind == kKindEncoderDecoder) {
    prior = Prior::normal;
  }
  return {load_generator(path), prior};
}

}  // namespace varpred::cli
