#pragma once

#include "talkgen/core/tensor.hpp"
#include "talkgen/train/config.hpp"

namespace talkgen::nets {

// Geometry shared by every network in one pipeline. Serialized as the
// [arch] config section; its hash is the cross-checkpoint compatibility key.
struct ArchConfig {
  Index image_size = 64;       // generator / detector working resolution
  Index num_keypoints = 10;    // N
  Index fusion_size = 64;      // W = H of the fusion tensor
  Index embed_dim = 256;       // D_e, spatial embedding size
  Index lstm_hidden = 128;
  Index encoder_width = 8;     // ResNet-34 stem width for E_I / E_A
  Index hourglass3d_base = 16;
  Index hourglass3d_levels = 3;
  Index detector_base = 24;
  Index detector_levels = 3;
  Index dense_motion_base = 24;
  Index dense_motion_levels = 3;
  Index generator_base = 32;
  Index generator_res_blocks = 6;
  double kp_temperature = 0.1;      // heatmap softmax temperature
  double kp_gaussian_variance = 0.01;
  bool no_jacobian = false;         // ablation: jacobians pinned to identity
  bool no_set = false;              // ablation: zero spatial-embedding transition

  static ArchConfig from_config(const train::Config& c) {
    ArchConfig a;
    a.image_size = c.get_int("arch", "image_size", a.image_size);
    a.num_keypoints = c.get_int("arch", "num_keypoints", a.num_keypoints);
    a.fusion_size = c.get_int("arch", "fusion_size", a.fusion_size);
    a.embed_dim = c.get_int("arch", "embed_dim", a.embed_dim);
    a.lstm_hidden = c.get_int("arch", "lstm_hidden", a.lstm_hidden);
    a.encoder_width = c.get_int("arch", "encoder_width", a.encoder_width);
    a.hourglass3d_base = c.get_int("arch", "hourglass3d_base", a.hourglass3d_base);
    a.hourglass3d_levels = c.get_int("arch", "hourglass3d_levels", a.hourglass3d_levels);
    a.detector_base = c.get_int("arch", "detector_base", a.detector_base);
    a.detector_levels = c.get_int("arch", "detector_levels", a.detector_levels);
    a.dense_motion_base = c.get_int("arch", "dense_motion_base", a.dense_motion_base);
    a.dense_motion_levels = c.get_int("arch", "dense_motion_levels", a.dense_motion_levels);
    a.generator_base = c.get_int("arch", "generator_base", a.generator_base);
    a.generator_res_blocks = c.get_int("arch", "generator_res_blocks", a.generator_res_blocks);
    a.kp_temperature = c.get_num("arch", "kp_temperature", a.kp_temperature);
    a.kp_gaussian_variance = c.get_num("arch", "kp_gaussian_variance", a.kp_gaussian_variance);
    a.no_jacobian = c.get_bool("arch", "no_jacobian", a.no_jacobian);
    a.no_set = c.get_bool("arch", "no_set", a.no_set);
    return a;
  }

  void to_config(train::Config& c) const {
    auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      return std::string(buf);
    };
    c.set("arch", "image_size", std::to_string(image_size));
    c.set("arch", "num_keypoints", std::to_string(num_keypoints));
    c.set("arch", "fusion_size", std::to_string(fusion_size));
    c.set("arch", "embed_dim", std::to_string(embed_dim));
    c.set("arch", "lstm_hidden", std::to_string(lstm_hidden));
    c.set("arch", "encoder_width", std::to_string(encoder_width));
    c.set("arch", "hourglass3d_base", std::to_string(hourglass3d_base));
    c.set("arch", "hourglass3d_levels", std::to_string(hourglass3d_levels));
    c.set("arch", "detector_base", std::to_string(detector_base));
    c.set("arch", "detector_levels", std::to_string(detector_levels));
    c.set("arch", "dense_motion_base", std::to_string(dense_motion_base));
    c.set("arch", "dense_motion_levels", std::to_string(dense_motion_levels));
    c.set("arch", "generator_base", std::to_string(generator_base));
    c.set("arch", "generator_res_blocks", std::to_string(generator_res_blocks));
    c.set("arch", "kp_temperature", num(kp_temperature));
    c.set("arch", "kp_gaussian_variance", num(kp_gaussian_variance));
    // ablation switches are run-time behavior, not geometry; they are kept
    // out of the compatibility hash on purpose.
  }
};

}  // namespace talkgen::nets
