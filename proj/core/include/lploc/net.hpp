#pragma once

#include <cstdint>
#include <vector>

#include "lploc/grid.hpp"

namespace lploc {

// Channel-major dense activation block used by the nets and the trainer.
// Activations are double so analytic gradients can be checked against
// finite differences well below the 1e-6 floor; weights stay 32-bit.
struct Tensor {
    int ch = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int ch_, int h_, int w_)
        : ch(ch_), h(h_), w(w_), v(static_cast<std::size_t>(ch_) * h_ * w_, 0.0) {}

    double& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
    double at(int c, int y, int x) const { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
    std::size_t size() const { return v.size(); }
};

Tensor tensor_from_grid(const BevGrid& g);
BevGrid grid_from_tensor(const Tensor& t, const BevGrid& georef_like);

struct NetConfig {
    int in_channels = 1;
    std::vector<int> channels;  // output channels per layer
    int kernel = 3;
    int pooling_stages = 0;

    int layers() const { return static_cast<int>(channels.size()); }
    void validate() const;
};

// Tiny online net: one conv around each pooling/upsampling stage plus a
// final projection down to one channel.
NetConfig tiny_config(int in_channels = 1);
// Deeper, wider variant used as the accuracy end of the size ladder.
NetConfig big_config(int in_channels = 1);

struct ConvLayer {
    std::vector<float> w;  // [out][in][k][k]
    std::vector<float> b;  // [out]
};

struct StackCache {
    // inputs[i] is what conv i consumed (after pool/upsample plumbing);
    // pre_act[i] is conv i's output before the nonlinearity.
    std::vector<Tensor> inputs;
    std::vector<Tensor> pre_act;
    int pad_h = 0, pad_w = 0;  // zero padding applied to reach a pool-friendly size
    int orig_h = 0, orig_w = 0;
};

struct StackGrads {
    std::vector<std::vector<double>> dw;
    std::vector<std::vector<double>> db;

    void accumulate(const StackGrads& other);
    void scale(double s);
    double max_abs() const;
};

// A small convolutional embedding network. Same-padding convolutions with a
// rectified-linear unit after every layer except the last; the first
// `pooling_stages` layers are followed by 2x average pooling and the last
// `pooling_stages` layers are preceded by 2x bilinear upsampling, so output
// spatial dims equal input dims.
class ConvStack {
public:
    ConvStack() = default;
    ConvStack(const NetConfig& cfg, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    std::vector<ConvLayer>& layers() { return layers_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }

    Tensor forward(const Tensor& in) const;
    Tensor forward(const Tensor& in, StackCache* cache) const;
    BevGrid forward(const BevGrid& in) const;

    // Reverse-mode pass; accumulates parameter grads, returns d(input).
    Tensor backward(const Tensor& d_out, const StackCache& cache,
                    StackGrads& grads) const;

    StackGrads zero_grads() const;
    std::size_t param_count() const;
    std::uint64_t digest() const;

private:
    NetConfig cfg_;
    std::vector<ConvLayer> layers_;
    bool frozen_ = false;
};

// Learning-free baseline: the intensity channel unchanged.
BevGrid identity_embed(const BevGrid& grid);

// Weighted fusion of the coarse backbone features into the fine embedding:
// crop to the fine extent, 1x1 conv to one channel, bilinear upsample to the
// fine resolution, then fine + mix_weight * upsampled.
struct FusionParams {
    std::vector<float> conv_w;  // one weight per coarse channel
    float conv_b = 0.0f;
    float mix_weight = 0.0f;
};

BevGrid fuse_multires(const BevGrid& fine_feat, const BevGrid& coarse_feat,
                      const FusionParams& fusion);

// Plumbing shared with the trainer.
Tensor conv1x1(const Tensor& in, const FusionParams& fusion);
Tensor upsample2x(const Tensor& in);
Tensor upsample_transpose(const Tensor& d_out, int factor, int in_h, int in_w);
Tensor avgpool2(const Tensor& in);
Tensor avgpool2_transpose(const Tensor& d_out, int in_h, int in_w);
Tensor upsample_tensor(const Tensor& in, int factor);

}  // namespace lploc
