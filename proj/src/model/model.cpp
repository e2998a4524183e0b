#include "trunet/model/model.hpp"

#include "trunet/errors.hpp"

namespace trunet {

namespace {

constexpr std::array<const char*, 4> kDecoderNames{"decoder1", "decoder2", "decoder3", "decoder4"};

}  // namespace

Layout model_layout(const ModelConfig& config) {
  config.validate();
  Layout l = encoder_layout(config);
  const std::int64_t c = config.bottleneck_channels();
  if (config.use_transformer) {
    l.append(transformer_layout("bridge.transformer", c, config.tokens(), config.ffn_ratio));
  }
  if (config.use_dilated) l.append(dilated_conv_block_layout("bridge.dilated", c));
  const auto stages = config.stage_channels();
  const std::array<std::int64_t, 4> skip_channels{stages[1], stages[0], config.stem_channels(), 3};
  const auto dec = config.decoder_channels();
  std::int64_t cin = config.bridge_channels();
  for (int i = 0; i < 4; ++i) {
    l.append(decoder_block_layout(kDecoderNames[i], cin, skip_channels[i], dec[i]));
    cin = dec[i];
  }
  l.append(segmentation_head_layout("head", cin));
  return l;
}

std::int64_t param_count(const ModelConfig& config) { return model_layout(config).scalar_count(); }

template <typename T>
TransResUNet<T>::TransResUNet(ModelConfig config)
    : config_(config), layout_(model_layout(config_)) {}

template <typename T>
ModelOutput<T> TransResUNet<T>::forward(ForwardContext<T>& ctx, const Var<T>& image) const {
  ModelOutput<T> out;
  EncoderFeatures<T> enc = encoder_forward(ctx, config_, image);
  out.bottleneck = enc.bottleneck;
  std::vector<Var<T>> branches;
  if (config_.use_transformer) {
    branches.push_back(transformer_encoder_block(ctx, "bridge.transformer", config_, enc.bottleneck));
  }
  if (config_.use_dilated) branches.push_back(dilated_conv_block(ctx, "bridge.dilated", enc.bottleneck));
  if (branches.empty()) {
    out.bridge = enc.bottleneck;
  } else if (branches.size() == 1) {
    out.bridge = branches.front();
  } else {
    out.bridge = concat_channels(branches);
  }
  Var<T> x = out.bridge;
  const auto dec = config_.decoder_channels();
  for (int i = 0; i < 4; ++i) {
    x = decoder_block(ctx, kDecoderNames[i], x, enc.skips[3 - i], dec[i]);
    out.decoder[i] = x;
  }
  out.probabilities = segmentation_head(ctx, "head", x);
  return out;
}

template class TransResUNet<float>;
template class TransResUNet<double>;

}  // namespace trunet
