// Copyright 2026 The Mango Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mango/core/io.hpp"
#include "mango/core/nn.hpp"
#include "mango/morphable.hpp"

namespace mango::renderer {

using morphable::CameraPose;

inline constexpr Index kAppearanceDim = 16;
inline constexpr Index kBaseFeatureDim = 16;

// Gaussian attributes as autograd tensors so every field can carry gradients.
struct GaussianSet {
  ag::Tensor mu;          // G x 3
  ag::Tensor rot;         // G x 4, (w, x, y, z), unit norm
  ag::Tensor scale;       // G x 3, log-space
  ag::Tensor opacity;     // G x 1, in [0, 1]
  ag::Tensor appearance;  // G x C

  Index size() const { return mu.defined() ? mu.rows() : 0; }
  Index channels() const { return appearance.defined() ? appearance.cols() : kAppearanceDim; }
  // Throws ArgumentError on shape mismatch, non-unit quaternion, opacity outside [0, 1] or non-finite values.
  void validate() const;
  static GaussianSet empty(Index channels = kAppearanceDim);
  static GaussianSet from_values(const Mat& mu, const Mat& rot, const Mat& log_scale, const Mat& opacity,
                                 const Mat& appearance);
};

GaussianSet concat(const GaussianSet& a, const GaussianSet& b);

// ---- image encoder ----

// Maps an (H*W) x 3 image to a pyramid of feature maps; every op is differentiable so the
// same network serves the perceptual loss.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual Index feature_dim() const = 0;
  // Returns one tensor per level; level k has resolution (H >> (k+1)) x (W >> (k+1)).
  virtual std::vector<ag::Tensor> pyramid(const ag::Tensor& image, int height, int width) const = 0;
};

using ImageEncoderFactory = std::function<std::unique_ptr<ImageEncoder>()>;
void register_image_encoder(const std::string& id, ImageEncoderFactory factory);
std::unique_ptr<ImageEncoder> make_image_encoder(const std::string& id);

class DeskImageEncoder : public ImageEncoder {
 public:
  explicit DeskImageEncoder(uint64_t seed = 0x1a6e);
  Index feature_dim() const override { return 64; }
  std::vector<ag::Tensor> pyramid(const ag::Tensor& image, int height, int width) const override;

 private:
  nn::Conv3x3 c1_, c2_, c3_;
};

struct RefEncoding {
  Mat feature_map;  // (Hf*Wf) x d_f
  int feature_height = 0;
  int feature_width = 0;
  RowVec identity;  // f_id
};

RefEncoding encode_reference(const io::Image& image, const std::string& encoder_id);

// Bilinear sample of a row-major (H*W) x C map at pixel coordinates scaled by `stride`;
// coordinates outside the map are clamped to the edge.
Mat sample_bilinear(const Mat& map, int height, int width, const Mat& pixels, double stride);

// ---- splatting ----

struct SplatResult {
  ag::Tensor features;  // (H*W) x C
  ag::Tensor alpha;     // (H*W) x 1
};

inline constexpr double kDilation = 0.3;    // pixels^2 added to the projected covariance
inline constexpr double kCutoffSigma = 3.0;  // Mahalanobis radius of the footprint
inline constexpr double kNearPlane = 1e-3;

SplatResult splat(const GaussianSet& gaussians, const CameraPose& camera);

// ---- attachment and animation ----

struct TriangleFrames {
  Mat barycenters;                         // F x 3
  std::vector<Eigen::Matrix3d> rotations;  // columns: edge, in-plane normal, face normal
};
TriangleFrames triangle_frames(const morphable::MorphableModel& model, const Mat& vertices);
double mean_edge_length(const morphable::MorphableModel& model, const Mat& vertices);

// Gaussians carried by the mesh. Template Gaussians sit on vertices; UV Gaussians sit on
// triangle barycenters plus an offset expressed in the reference triangle frame.
struct MeshGaussians {
  GaussianSet templ;   // one per vertex
  GaussianSet uv;      // one per triangle
  ag::Tensor uv_offset;  // F x 3, world offsets at the reference pose
  Mat ref_vertices;      // V x 3
  TriangleFrames ref_frames;
};

GaussianSet animate_template(const GaussianSet& templ, const Mat& ref_vertices, const ag::Tensor& new_vertices);
GaussianSet animate_uv(const GaussianSet& uv, const ag::Tensor& offset, const morphable::MorphableModel& model,
                       const TriangleFrames& ref_frames, const ag::Tensor& new_vertices);
// Both sets animated and concatenated for one joint depth-sorted pass.
GaussianSet animate(const MeshGaussians& gaussians, const morphable::MorphableModel& model,
                    const ag::Tensor& new_vertices);

// ---- stage-2 model ----

struct Stage2Config {
  std::string encoder_id = "desk";
  Index hidden = 64;     // D_v width
  Index uv_hidden = 64;  // D_uv width
  Index uv_grid_width = 32;
  Index refiner_width = 16;
  double template_scale_factor = 0.6;  // of the mean edge length
  uint64_t seed = 2;
};

struct Stage2Weights {
  double pho = 1.0;
  double per = 0.025;
};

struct Stage2Loss {
  ag::Tensor total;
  double pho = 0.0;
  double per = 0.0;
};

class Stage2Model {
 public:
  Stage2Model() = default;
  Stage2Model(const Stage2Config& config, const morphable::MorphableModel& model);

  const Stage2Config& config() const { return config_; }
  nn::ParameterSet parameters() const;

  // Decodes both Gaussian sets for the identity in `ref`; `ref_vertices` are the decoded
  // reference mesh vertices (V x 3).
  MeshGaussians build(const RefEncoding& ref, const Mat& ref_vertices, const CameraPose& camera) const;
  GaussianSet build_template(const RefEncoding& ref, const Mat& ref_vertices, const CameraPose& camera) const;
  // Returns the UV set and the decoded offsets.
  std::pair<GaussianSet, ag::Tensor> build_uv(const RefEncoding& ref, const Mat& ref_vertices,
                                              const CameraPose& camera) const;

  // (H*W) x 3 in [0, 1]: sigmoid(coarse RGB + residual).
  ag::Tensor refine(const ag::Tensor& features, int height, int width) const;
  ag::Tensor render(const MeshGaussians& gaussians, const ag::Tensor& vertices, const CameraPose& camera) const;

  Stage2Loss loss(const ag::Tensor& pred, const Mat& gt, int height, int width,
                  const Stage2Weights& weights = {}) const;

  void zero_uv_decoder();
  void zero_refiner_output();

  void save(const std::filesystem::path& dir) const;
  static Stage2Model load(const std::filesystem::path& dir, const morphable::MorphableModel& model);

  const ImageEncoder& encoder() const { return *encoder_; }

 private:
  void init(const morphable::MorphableModel& model);

  Stage2Config config_;
  std::shared_ptr<const morphable::MorphableModel> model_;
  std::shared_ptr<ImageEncoder> encoder_;
  std::vector<Index> uv_cells_;  // grid cell of each triangle
  Index uv_rows_ = 0;

  ag::Tensor base_features_;  // f_b, V x d_b
  nn::Linear dv1_, dv2_, dv3_;
  nn::Conv3x3 duv1_, duv2_, duv3_;
  nn::Conv3x3 ref_in_, ref_down1_, ref_down2_, ref_up1_, ref_up2_, ref_out_;
};

// L_pho plus weighted multi-scale encoder feature MSE.
Stage2Loss stage2_loss(const ag::Tensor& pred, const Mat& gt, int height, int width, const ImageEncoder& encoder,
                       const Stage2Weights& weights = {});

io::Image to_image(const Mat& pixels, int height, int width);

}  // namespace mango::renderer
