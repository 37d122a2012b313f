#pragma once

#include <vector>

#include "molmix/networks.hpp"

namespace molmix {

/// Maps a K x R batch of sensor outputs to per-user symbol decisions
/// (result[user][item]).
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::size_t users() const = 0;
  virtual std::vector<std::vector<int>> detect(const Matrix& z) const = 0;
};

/// Decoder network in eval mode followed by per-user argmax.
class DecoderDetector final : public Detector {
 public:
  DecoderDetector(ParamStore params, DecoderNet decoder)
      : params_(std::move(params)), decoder_(std::move(decoder)) {}
  explicit DecoderDetector(const EndToEndModel& model)
      : DecoderDetector(model.params, model.decoder) {}

  std::size_t users() const override { return decoder_.alphabet_sizes().size(); }
  std::vector<std::vector<int>> detect(const Matrix& z) const override;

 private:
  ParamStore params_;
  DecoderNet decoder_;
};

}  // namespace molmix
