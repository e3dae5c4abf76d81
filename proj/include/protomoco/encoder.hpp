#ifndef PROTOMOCO_ENCODER_HPP
#define PROTOMOCO_ENCODER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "protomoco/nn.hpp"
#include "protomoco/tape.hpp"
#include "protomoco/tensor.hpp"

namespace protomoco {

/// Small configurable embedding network. The conv variant is
/// conv -> relu -> avgpool -> conv -> relu -> avgpool -> flatten -> dense;
/// the mlp variant is flatten -> dense -> relu -> dense. No bias terms
/// anywhere; weights are He-initialized.
struct EncoderConfig {
  enum class Kind { Conv, Mlp };

  Kind kind = Kind::Conv;
  int channels = 1;
  int height = 32;
  int width = 32;

  // conv variant
  int conv1_filters = 8;
  int conv1_kernel = 3;
  int conv2_filters = 16;
  int conv2_kernel = 4;
  int pool = 2;

  // mlp variant
  int mlp_hidden = 128;

  int embed_dim = 64;

  // projection head (two-layer, relu between, no bias); the reference
  // full-scale setup uses a 2048-wide hidden layer, scaled down here
  int head_hidden = 128;
  int proj_dim = 64;
};

template <typename Scalar>
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg) : cfg_(cfg) {
    if (cfg_.embed_dim < 1 || cfg_.head_hidden < 1 || cfg_.proj_dim < 1) {
      throw ConfigError("encoder dims must be positive");
    }
    if (cfg_.kind == EncoderConfig::Kind::Conv) {
      const int h1 = cfg_.height - cfg_.conv1_kernel + 1;
      const int w1 = cfg_.width - cfg_.conv1_kernel + 1;
      if (h1 < 1 || w1 < 1) {
        throw DimensionError("encoder: first kernel " + std::to_string(cfg_.conv1_kernel) +
                             " exceeds input " + std::to_string(cfg_.height) + "x" +
                             std::to_string(cfg_.width));
      }
      if (h1 % cfg_.pool || w1 % cfg_.pool) {
        throw DimensionError("encoder: first conv output " + std::to_string(h1) + "x" +
                             std::to_string(w1) + " not divisible by pool " +
                             std::to_string(cfg_.pool));
      }
      const int h2 = h1 / cfg_.pool - cfg_.conv2_kernel + 1;
      const int w2 = w1 / cfg_.pool - cfg_.conv2_kernel + 1;
      if (h2 < 1 || w2 < 1) {
        throw DimensionError("encoder: second kernel " + std::to_string(cfg_.conv2_kernel) +
                             " exceeds pooled map " + std::to_string(h1 / cfg_.pool) + "x" +
                             std::to_string(w1 / cfg_.pool));
      }
      if (h2 % cfg_.pool || w2 % cfg_.pool) {
        throw DimensionError("encoder: second conv output " + std::to_string(h2) + "x" +
                             std::to_string(w2) + " not divisible by pool " +
                             std::to_string(cfg_.pool));
      }
      out_h_ = h2 / cfg_.pool;
      out_w_ = w2 / cfg_.pool;
      flat_dim_ = cfg_.conv2_filters * out_h_ * out_w_;
    } else {
      flat_dim_ = cfg_.channels * cfg_.height * cfg_.width;
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  int embed_dim() const { return cfg_.embed_dim; }
  int proj_dim() const { return cfg_.proj_dim; }
  int flat_dim() const { return flat_dim_; }

  /// Registers and He-initializes encoder plus projection-head weights,
  /// deterministically from the seed.
  void init_params(ParameterSet<Scalar>& ps, std::uint64_t seed) const {
    SplitMix64 base(seed);
    int stream = 0;
    auto next_seed = [&] { return base.derived(static_cast<std::uint64_t>(stream++)).seed(); };
    if (cfg_.kind == EncoderConfig::Kind::Conv) {
      const int fan1 = cfg_.channels * cfg_.conv1_kernel * cfg_.conv1_kernel;
      ps.add("enc.conv1", he_init<Scalar>(
                              {cfg_.conv1_filters, cfg_.channels, cfg_.conv1_kernel, cfg_.conv1_kernel},
                              fan1, next_seed()));
      const int fan2 = cfg_.conv1_filters * cfg_.conv2_kernel * cfg_.conv2_kernel;
      ps.add("enc.conv2", he_init<Scalar>(
                              {cfg_.conv2_filters, cfg_.conv1_filters, cfg_.conv2_kernel, cfg_.conv2_kernel},
                              fan2, next_seed()));
      ps.add("enc.dense", he_init<Scalar>({cfg_.embed_dim, flat_dim_}, flat_dim_, next_seed()));
    } else {
      ps.add("enc.fc1", he_init<Scalar>({cfg_.mlp_hidden, flat_dim_}, flat_dim_, next_seed()));
      ps.add("enc.fc2", he_init<Scalar>({cfg_.embed_dim, cfg_.mlp_hidden}, cfg_.mlp_hidden, next_seed()));
    }
    ps.add("head.w1", he_init<Scalar>({cfg_.head_hidden, cfg_.embed_dim}, cfg_.embed_dim, next_seed()));
    ps.add("head.w2", he_init<Scalar>({cfg_.proj_dim, cfg_.head_hidden}, cfg_.head_hidden, next_seed()));
  }

  /// Embedding psi(x) as a column vector [embed_dim x 1] on the tape.
  Var<Scalar> embed(Tape<Scalar>& tape, const Tensor<Scalar>& image,
                    const ParameterSet<Scalar>& params) const {
    check_input(image);
    Var<Scalar> x = tape.constant(image);
    if (cfg_.kind == EncoderConfig::Kind::Conv) {
      auto c1 = avgpool2d(relu(conv2d(x, tape.param("enc.conv1", params), 1)), cfg_.pool);
      auto c2 = avgpool2d(relu(conv2d(c1, tape.param("enc.conv2", params), 1)), cfg_.pool);
      auto flat = reshape(c2, {flat_dim_, 1});
      return matmul(tape.param("enc.dense", params), flat);
    }
    auto flat = reshape(x, {flat_dim_, 1});
    auto h = relu(matmul(tape.param("enc.fc1", params), flat));
    return matmul(tape.param("enc.fc2", params), h);
  }

  /// Embedding without a tape, for evaluation paths.
  Tensor<Scalar> embed_value(const Tensor<Scalar>& image, const ParameterSet<Scalar>& params) const {
    Tape<Scalar> scratch;
    return embed(scratch, image, params).value();
  }

 private:
  void check_input(const Tensor<Scalar>& image) const {
    const std::vector<int> want = {cfg_.channels, cfg_.height, cfg_.width};
    if (image.shape() != want) {
      throw DimensionError("encoder input " + image.shape_string() + " does not match configured " +
                           Tensor<Scalar>::shape_to_string(want));
    }
  }

  EncoderConfig cfg_;
  int flat_dim_ = 0;
  int out_h_ = 0;
  int out_w_ = 0;
};

}  // namespace protomoco

#endif  // PROTOMOCO_ENCODER_HPP
