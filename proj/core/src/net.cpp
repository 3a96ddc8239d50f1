#include "lploc/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lploc/digest.hpp"
#include "lploc/rng.hpp"

namespace lploc {

namespace {

Tensor conv2d_same(const Tensor& in, const ConvLayer& layer, int out_ch, int k) {
    const int half = k / 2;
    Tensor out(out_ch, in.h, in.w);
    for (int oc = 0; oc < out_ch; ++oc) {
        const float* wbase = layer.w.data() +
                             static_cast<std::size_t>(oc) * in.ch * k * k;
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                double acc = layer.b[oc];
                for (int ic = 0; ic < in.ch; ++ic) {
                    const float* wk = wbase + static_cast<std::size_t>(ic) * k * k;
                    for (int dy = 0; dy < k; ++dy) {
                        const int sy = y + dy - half;
                        if (sy < 0 || sy >= in.h) continue;
                        const double* row =
                            in.v.data() + (static_cast<std::size_t>(ic) * in.h + sy) * in.w;
                        for (int dx = 0; dx < k; ++dx) {
                            const int sx = x + dx - half;
                            if (sx < 0 || sx >= in.w) continue;
                            acc += static_cast<double>(wk[dy * k + dx]) * row[sx];
                        }
                    }
                }
                out.at(oc, y, x) = acc;
            }
        }
    }
    return out;
}

void relu_inplace(Tensor& t) {
    for (auto& v : t.v) {
        if (v < 0.0) v = 0.0;
    }
}

Tensor pad_to(const Tensor& in, int h, int w) {
    if (in.h == h && in.w == w) return in;
    Tensor out(in.ch, h, w);
    for (int c = 0; c < in.ch; ++c) {
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                out.at(c, y, x) = in.at(c, y, x);
            }
        }
    }
    return out;
}

Tensor crop_to(const Tensor& in, int h, int w) {
    if (in.h == h && in.w == w) return in;
    Tensor out(in.ch, h, w);
    for (int c = 0; c < in.ch; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out.at(c, y, x) = in.at(c, y, x);
            }
        }
    }
    return out;
}

double upsample_src(int i, int factor, int n) {
    double s = (i + 0.5) / factor - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > n - 1.0) s = n - 1.0;
    return s;
}

}  // namespace

Tensor tensor_from_grid(const BevGrid& g) {
    Tensor t(g.channels(), g.rows(), g.cols());
    for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = g.data()[i];
    return t;
}

BevGrid grid_from_tensor(const Tensor& t, const BevGrid& georef_like) {
    BevGrid g(t.h, t.w, t.ch, georef_like.resolution(), georef_like.origin_x(),
              georef_like.origin_y());
    for (std::size_t i = 0; i < t.v.size(); ++i) {
        g.data()[i] = static_cast<float>(t.v[i]);
    }
    return g;
}

void NetConfig::validate() const {
    if (channels.empty()) {
        throw std::invalid_argument("NetConfig: at least one layer required");
    }
    for (int c : channels) {
        if (c < 1) throw std::invalid_argument("NetConfig: channels must be >= 1");
    }
    if (kernel < 1 || kernel % 2 == 0) {
        throw std::invalid_argument("NetConfig: kernel must be odd");
    }
    if (in_channels < 1) {
        throw std::invalid_argument("NetConfig: in_channels must be >= 1");
    }
    if (pooling_stages < 0 || 2 * pooling_stages > layers()) {
        throw std::invalid_argument("NetConfig: pooling stages exceed layer budget");
    }
}

NetConfig tiny_config(int in_channels) {
    NetConfig cfg;
    cfg.in_channels = in_channels;
    cfg.channels = {8, 8, 8, 8, 1};
    cfg.kernel = 3;
    cfg.pooling_stages = 2;
    return cfg;
}

NetConfig big_config(int in_channels) {
    NetConfig cfg;
    cfg.in_channels = in_channels;
    cfg.channels = {16, 16, 16, 16, 16, 16, 16, 16, 16, 16, 1};
    cfg.kernel = 3;
    cfg.pooling_stages = 3;
    return cfg;
}

ConvStack::ConvStack(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(split_seed(seed, 0x6e657477));
    int in_ch = cfg.in_channels;
    for (int i = 0; i < cfg.layers(); ++i) {
        const int out_ch = cfg.channels[i];
        ConvLayer layer;
        layer.w.resize(static_cast<std::size_t>(out_ch) * in_ch * cfg.kernel * cfg.kernel);
        layer.b.assign(out_ch, 0.0f);
        const double scale = std::sqrt(2.0 / (in_ch * cfg.kernel * cfg.kernel));
        for (auto& w : layer.w) {
            w = static_cast<float>(rng.gaussian() * scale);
        }
        layers_.push_back(std::move(layer));
        in_ch = out_ch;
    }
}

Tensor ConvStack::forward(const Tensor& in) const { return forward(in, nullptr); }

Tensor ConvStack::forward(const Tensor& in, StackCache* cache) const {
    if (in.ch != cfg_.in_channels) {
        throw std::invalid_argument("ConvStack: input channel mismatch");
    }
    const int L = cfg_.layers();
    const int p = cfg_.pooling_stages;
    const int mult = 1 << p;
    const int hp = (in.h + mult - 1) / mult * mult;
    const int wp = (in.w + mult - 1) / mult * mult;

    Tensor x = pad_to(in, hp, wp);
    if (cache) {
        cache->inputs.clear();
        cache->pre_act.clear();
        cache->orig_h = in.h;
        cache->orig_w = in.w;
        cache->pad_h = hp - in.h;
        cache->pad_w = wp - in.w;
    }
    for (int i = 0; i < L; ++i) {
        if (i >= L - p) {
            x = upsample2x(x);
        }
        if (cache) cache->inputs.push_back(x);
        Tensor y = conv2d_same(x, layers_[i], cfg_.channels[i], cfg_.kernel);
        if (cache) cache->pre_act.push_back(y);
        if (i + 1 < L) relu_inplace(y);
        if (i < p) {
            y = avgpool2(y);
        }
        x = std::move(y);
    }
    return crop_to(x, in.h, in.w);
}

BevGrid ConvStack::forward(const BevGrid& in) const {
    Tensor out = forward(tensor_from_grid(in));
    return grid_from_tensor(out, in);
}

Tensor ConvStack::backward(const Tensor& d_out, const StackCache& cache,
                           StackGrads& grads) const {
    const int L = cfg_.layers();
    const int p = cfg_.pooling_stages;
    const int k = cfg_.kernel;
    const int half = k / 2;

    Tensor d = pad_to(d_out, cache.orig_h + cache.pad_h, cache.orig_w + cache.pad_w);
    for (int i = L - 1; i >= 0; --i) {
        const Tensor& input = cache.inputs[i];
        const Tensor& pre = cache.pre_act[i];
        if (i < p) {
            d = avgpool2_transpose(d, pre.h, pre.w);
        }
        if (i + 1 < L) {
            // relu mask
            for (std::size_t j = 0; j < d.v.size(); ++j) {
                if (pre.v[j] <= 0.0) d.v[j] = 0.0;
            }
        }
        const int out_ch = cfg_.channels[i];
        Tensor d_in(input.ch, input.h, input.w);
        auto& dw = grads.dw[i];
        auto& db = grads.db[i];
        for (int oc = 0; oc < out_ch; ++oc) {
            const std::size_t wbase = static_cast<std::size_t>(oc) * input.ch * k * k;
            for (int y = 0; y < d.h; ++y) {
                for (int x = 0; x < d.w; ++x) {
                    const double g = d.at(oc, y, x);
                    if (g == 0.0) continue;
                    db[oc] += g;
                    for (int ic = 0; ic < input.ch; ++ic) {
                        const std::size_t kbase = wbase + static_cast<std::size_t>(ic) * k * k;
                        for (int dy = 0; dy < k; ++dy) {
                            const int sy = y + dy - half;
                            if (sy < 0 || sy >= input.h) continue;
                            for (int dx = 0; dx < k; ++dx) {
                                const int sx = x + dx - half;
                                if (sx < 0 || sx >= input.w) continue;
                                dw[kbase + dy * k + dx] += g * input.at(ic, sy, sx);
                                d_in.at(ic, sy, sx) +=
                                    g * layers_[i].w[kbase + dy * k + dx];
                            }
                        }
                    }
                }
            }
        }
        d = std::move(d_in);
        if (i >= L - p) {
            // conv i consumed an upsampled tensor; push the gradient back
            // through the 2x bilinear upsample.
            d = upsample_transpose(d, 2, d.h / 2, d.w / 2);
        }
    }
    return crop_to(d, cache.orig_h, cache.orig_w);
}

StackGrads ConvStack::zero_grads() const {
    StackGrads g;
    g.dw.resize(layers_.size());
    g.db.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        g.dw[i].assign(layers_[i].w.size(), 0.0);
        g.db[i].assign(layers_[i].b.size(), 0.0);
    }
    return g;
}

std::size_t ConvStack::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.w.size() + l.b.size();
    return n;
}

std::uint64_t ConvStack::digest() const {
    Digest d;
    d.update_value(cfg_.in_channels);
    d.update_value(cfg_.kernel);
    d.update_value(cfg_.pooling_stages);
    for (int c : cfg_.channels) d.update_value(c);
    for (const auto& l : layers_) {
        d.update_span(std::span<const float>(l.w));
        d.update_span(std::span<const float>(l.b));
    }
    return d.value();
}

void StackGrads::accumulate(const StackGrads& other) {
    for (std::size_t i = 0; i < dw.size(); ++i) {
        for (std::size_t j = 0; j < dw[i].size(); ++j) dw[i][j] += other.dw[i][j];
        for (std::size_t j = 0; j < db[i].size(); ++j) db[i][j] += other.db[i][j];
    }
}

void StackGrads::scale(double s) {
    for (auto& v : dw) {
        for (auto& x : v) x *= s;
    }
    for (auto& v : db) {
        for (auto& x : v) x *= s;
    }
}

double StackGrads::max_abs() const {
    double m = 0.0;
    for (const auto& v : dw) {
        for (double x : v) m = std::max(m, std::abs(x));
    }
    for (const auto& v : db) {
        for (double x : v) m = std::max(m, std::abs(x));
    }
    return m;
}

BevGrid identity_embed(const BevGrid& grid) {
    BevGrid out(grid.rows(), grid.cols(), 1, grid.resolution(), grid.origin_x(),
                grid.origin_y());
    const auto src = grid.channel(grid.intensity_channel());
    std::copy(src.begin(), src.end(), out.channel(0).begin());
    return out;
}

Tensor conv1x1(const Tensor& in, const FusionParams& fusion) {
    if (static_cast<int>(fusion.conv_w.size()) != in.ch) {
        throw std::invalid_argument("conv1x1: weight count != input channels");
    }
    Tensor out(1, in.h, in.w);
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            double acc = fusion.conv_b;
            for (int c = 0; c < in.ch; ++c) {
                acc += static_cast<double>(fusion.conv_w[c]) * in.at(c, y, x);
            }
            out.at(0, y, x) = acc;
        }
    }
    return out;
}

Tensor upsample_tensor(const Tensor& in, int factor) {
    if (factor == 1) return in;
    Tensor out(in.ch, in.h * factor, in.w * factor);
    for (int c = 0; c < in.ch; ++c) {
        for (int y = 0; y < out.h; ++y) {
            const double sv = upsample_src(y, factor, in.h);
            const int r0 = static_cast<int>(sv);
            const int r1 = std::min(r0 + 1, in.h - 1);
            const double ay = sv - r0;
            for (int x = 0; x < out.w; ++x) {
                const double su = upsample_src(x, factor, in.w);
                const int c0 = static_cast<int>(su);
                const int c1 = std::min(c0 + 1, in.w - 1);
                const double ax = su - c0;
                out.at(c, y, x) =
                    (1 - ay) * ((1 - ax) * in.at(c, r0, c0) + ax * in.at(c, r0, c1)) +
                    ay * ((1 - ax) * in.at(c, r1, c0) + ax * in.at(c, r1, c1));
            }
        }
    }
    return out;
}

Tensor upsample2x(const Tensor& in) { return upsample_tensor(in, 2); }

Tensor upsample_transpose(const Tensor& d_out, int factor, int in_h, int in_w) {
    Tensor d_in(d_out.ch, in_h, in_w);
    for (int c = 0; c < d_out.ch; ++c) {
        for (int y = 0; y < d_out.h; ++y) {
            const double sv = upsample_src(y, factor, in_h);
            const int r0 = static_cast<int>(sv);
            const int r1 = std::min(r0 + 1, in_h - 1);
            const double ay = sv - r0;
            for (int x = 0; x < d_out.w; ++x) {
                const double su = upsample_src(x, factor, in_w);
                const int c0 = static_cast<int>(su);
                const int c1 = std::min(c0 + 1, in_w - 1);
                const double ax = su - c0;
                const double g = d_out.at(c, y, x);
                d_in.at(c, r0, c0) += g * (1 - ay) * (1 - ax);
                d_in.at(c, r0, c1) += g * (1 - ay) * ax;
                d_in.at(c, r1, c0) += g * ay * (1 - ax);
                d_in.at(c, r1, c1) += g * ay * ax;
            }
        }
    }
    return d_in;
}

Tensor avgpool2(const Tensor& in) {
    Tensor out(in.ch, in.h / 2, in.w / 2);
    for (int c = 0; c < in.ch; ++c) {
        for (int y = 0; y < out.h; ++y) {
            for (int x = 0; x < out.w; ++x) {
                out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                          in.at(c, 2 * y + 1, 2 * x) +
                                          in.at(c, 2 * y + 1, 2 * x + 1));
            }
        }
    }
    return out;
}

Tensor avgpool2_transpose(const Tensor& d_out, int in_h, int in_w) {
    Tensor d_in(d_out.ch, in_h, in_w);
    for (int c = 0; c < d_out.ch; ++c) {
        for (int y = 0; y < d_out.h; ++y) {
            for (int x = 0; x < d_out.w; ++x) {
                const double g = 0.25 * d_out.at(c, y, x);
                d_in.at(c, 2 * y, 2 * x) = g;
                d_in.at(c, 2 * y, 2 * x + 1) = g;
                d_in.at(c, 2 * y + 1, 2 * x) = g;
                d_in.at(c, 2 * y + 1, 2 * x + 1) = g;
            }
        }
    }
    return d_in;
}

BevGrid fuse_multires(const BevGrid& fine_feat, const BevGrid& coarse_feat,
                      const FusionParams& fusion) {
    const double eps = 1e-6;
    const double fine_min_x = fine_feat.origin_x();
    const double fine_min_y = fine_feat.origin_y();
    const double fine_max_x = fine_min_x + fine_feat.extent_x();
    const double fine_max_y = fine_min_y + fine_feat.extent_y();
    if (fine_min_x < coarse_feat.origin_x() - eps ||
        fine_min_y < coarse_feat.origin_y() - eps ||
        fine_max_x > coarse_feat.origin_x() + coarse_feat.extent_x() + eps ||
        fine_max_y > coarse_feat.origin_y() + coarse_feat.extent_y() + eps) {
        throw std::invalid_argument("fuse_multires: coarse extent does not cover fine");
    }
    const double ratio = coarse_feat.resolution() / fine_feat.resolution();
    const int factor = static_cast<int>(std::round(ratio));
    if (factor < 1 || std::abs(ratio - factor) > 1e-6) {
        throw std::invalid_argument("fuse_multires: resolutions not integer-related");
    }

    const BevGrid cropped =
        crop(coarse_feat, Rect{fine_min_x, fine_min_y, fine_max_x, fine_max_y});
    Tensor proj = conv1x1(tensor_from_grid(cropped), fusion);
    Tensor up = upsample_tensor(proj, factor);
    if (up.h != fine_feat.rows() || up.w != fine_feat.cols()) {
        throw std::invalid_argument("fuse_multires: upsampled dims do not match fine");
    }

    BevGrid out(fine_feat.rows(), fine_feat.cols(), 1, fine_feat.resolution(),
                fine_feat.origin_x(), fine_feat.origin_y());
    const auto fine_ch = fine_feat.channel(0);
    for (int y = 0; y < out.rows(); ++y) {
        for (int x = 0; x < out.cols(); ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * out.cols() + x;
            out.at(0, y, x) = static_cast<float>(
                fine_ch[i] + static_cast<double>(fusion.mix_weight) * up.at(0, y, x));
        }
    }
    return out;
}

}  // namespace lploc
