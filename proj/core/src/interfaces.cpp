#include "varpred/interfaces.hpp"

#include <algorithm>

namespace varpred {

namespace {

template <class F>
Tensor<float> chunked(const Tensor<float>& input, int chunk, F&& fn) {
  const int n = input.dim(0);
  Tensor<float> out;
  std::size_t written = 0;
  for (int begin = 0; begin < n; begin += chunk) {
    const int end = std::min(n, begin + chunk);
    const Tensor<float> part = fn(input.slice_rows(begin, end));
    if (begin == 0) {
      Shape s = part.shape();
      s[0] = n;
      out = Tensor<float>(s);
    }
    std::copy(part.storage().begin(), part.storage().end(), out.data() + written);
    written += part.size();
  }
  return out;
}

}  // namespace

Tensor<float> generate_batched(const ImageGenerator& g, const Tensor<float>& z, int chunk) {
  return chunked(z, chunk, [&](const Tensor<float>& part) { return g.generate(part); });
}

Tensor<float> encode_batched(const LatentEncoder& e, const Tensor<float>& images, int chunk) {
  return chunked(images, chunk, [&](const Tensor<float>& part) { return e.encode(part); });
}

}  // namespace varpred
