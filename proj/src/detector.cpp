#include "molmix/detector.hpp"

namespace molmix {

std::vector<std::vector<int>> DecoderDetector::detect(const Matrix& z) const {
  const auto probs = decoder_.decode(params_, z);
  std::vector<std::vector<int>> out;
  for (const auto& p : probs) {
    std::vector<int> symbols(p.rows());
    for (std::size_t k = 0; k < p.rows(); ++k) symbols[k] = molmix::detect(p.row_span(k));
    out.push_back(std::move(symbols));
  }
  return out;
}

}  // namespace molmix
