#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "facekit/errors.hpp"
#include "facekit/image.hpp"
#include "facekit/rng.hpp"

namespace facekit::net {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Batched feature maps: `data` has one row per channel and one column per
// (sample, y, x) position, column index = n*(h*w) + y*w + x. Column-major
// storage makes each spatial position contiguous for the im2col GEMMs.
template <typename Scalar>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    Mat<Scalar> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_) {
        data.setZero(c_, static_cast<Eigen::Index>(n_) * h_ * w_);
    }
    Eigen::Index positions() const {
        return static_cast<Eigen::Index>(n) * h * w;
    }
};

template <typename Scalar>
struct Param {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    std::string name;
    bool is_norm_param = false;  // batch-norm scale/shift

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// ---------------------------------------------------------------------------
// Layers. Each layer caches what its backward pass needs; a single logical
// training thread owns the whole network, so no synchronization.
// ---------------------------------------------------------------------------

template <typename Scalar>
class Conv2d {
public:
    Conv2d(int in_c, int out_c, int kernel, int stride, int pad,
           std::uint64_t seed, const std::string& name)
        : in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
        weight_.name = name + ".weight";
        const int fan_in = in_c * kernel * kernel;
        weight_.value.resize(out_c, fan_in);
        Rng rng(seed);
        const double std = std::sqrt(2.0 / fan_in);  // He initialization
        for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
            weight_.value.data()[i] = static_cast<Scalar>(rng.normal(0.0, std));
        weight_.zero_grad();
    }

    int out_h(int in_h) const { return (in_h + 2 * pad_ - k_) / stride_ + 1; }

    Tensor4<Scalar> forward(const Tensor4<Scalar>& x) {
        in_shape_ = {x.n, x.c, x.h, x.w};
        const int oh = out_h(x.h), ow = out_h(x.w);
        im2col(x, oh, ow);
        Tensor4<Scalar> y(x.n, out_c_, oh, ow);
        y.data.noalias() = weight_.value * col_;
        return y;
    }

    Tensor4<Scalar> backward(const Tensor4<Scalar>& dy) {
        weight_.grad.noalias() += dy.data * col_.transpose();
        Mat<Scalar> dcol = weight_.value.transpose() * dy.data;
        return col2im(dcol, dy.h, dy.w);
    }

    Param<Scalar>& weight() { return weight_; }

private:
    void im2col(const Tensor4<Scalar>& x, int oh, int ow) {
        const Eigen::Index cols = static_cast<Eigen::Index>(x.n) * oh * ow;
        col_.setZero(static_cast<Eigen::Index>(in_c_) * k_ * k_, cols);
        const Eigen::Index plane = static_cast<Eigen::Index>(x.h) * x.w;
        Eigen::Index col_idx = 0;
        for (int n = 0; n < x.n; ++n) {
            const Eigen::Index base = n * plane;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++col_idx) {
                    Scalar* dst = col_.col(col_idx).data();
                    for (int ic = 0; ic < in_c_; ++ic)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            for (int kx = 0; kx < k_; ++kx, ++dst) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                                    *dst = x.data(ic, base + iy * x.w + ix);
                            }
                        }
                }
        }
    }

    Tensor4<Scalar> col2im(const Mat<Scalar>& dcol, int oh, int ow) const {
        Tensor4<Scalar> dx(in_shape_[0], in_shape_[1], in_shape_[2],
                           in_shape_[3]);
        const int h = in_shape_[2], w = in_shape_[3];
        const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
        Eigen::Index col_idx = 0;
        for (int n = 0; n < in_shape_[0]; ++n) {
            const Eigen::Index base = n * plane;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++col_idx) {
                    const Scalar* src = dcol.col(col_idx).data();
                    for (int ic = 0; ic < in_c_; ++ic)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            for (int kx = 0; kx < k_; ++kx, ++src) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    dx.data(ic, base + iy * w + ix) += *src;
                            }
                        }
                }
        }
        return dx;
    }

    int in_c_, out_c_, k_, stride_, pad_;
    Param<Scalar> weight_;
    Mat<Scalar> col_;
    std::array<int, 4> in_shape_{};
};

template <typename Scalar>
class BatchNorm {
public:
    BatchNorm(int channels, const std::string& name, double momentum = 0.9,
              double eps = 1e-5)
        : momentum_(momentum), eps_(eps) {
        gamma_.name = name + ".gamma";
        gamma_.is_norm_param = true;
        gamma_.value = Mat<Scalar>::Ones(channels, 1);
        gamma_.zero_grad();
        beta_.name = name + ".beta";
        beta_.is_norm_param = true;
        beta_.value = Mat<Scalar>::Zero(channels, 1);
        beta_.zero_grad();
        running_mean_ = Mat<Scalar>::Zero(channels, 1);
        running_var_ = Mat<Scalar>::Ones(channels, 1);
    }

    Tensor4<Scalar> forward(const Tensor4<Scalar>& x, bool training) {
        Tensor4<Scalar> y(x.n, x.c, x.h, x.w);
        const Eigen::Index cols = x.data.cols();
        if (training) {
            mean_ = x.data.rowwise().mean();
            Mat<Scalar> centered = x.data.colwise() - mean_.col(0);
            var_ = centered.array().square().rowwise().mean().matrix();
            inv_std_ = (var_.array() + Scalar(eps_)).rsqrt().matrix();
            xhat_ = (centered.array().colwise() * inv_std_.col(0).array())
                        .matrix();
            running_mean_ = Scalar(momentum_) * running_mean_ +
                            Scalar(1 - momentum_) * mean_;
            // Unbiased variance for the running estimate.
            const Scalar unbias =
                cols > 1 ? Scalar(cols) / Scalar(cols - 1) : Scalar(1);
            running_var_ = Scalar(momentum_) * running_var_ +
                           Scalar(1 - momentum_) * unbias * var_;
            y.data = ((xhat_.array().colwise() * gamma_.value.col(0).array())
                          .colwise() +
                      beta_.value.col(0).array())
                         .matrix();
        } else {
            Mat<Scalar> inv =
                (running_var_.array() + Scalar(eps_)).rsqrt().matrix();
            Mat<Scalar> xh = ((x.data.colwise() - running_mean_.col(0))
                                  .array()
                                  .colwise() *
                              inv.col(0).array())
                                 .matrix();
            y.data = ((xh.array().colwise() * gamma_.value.col(0).array())
                          .colwise() +
                      beta_.value.col(0).array())
                         .matrix();
        }
        return y;
    }

    Tensor4<Scalar> backward(const Tensor4<Scalar>& dy) {
        gamma_.grad.col(0) +=
            (dy.data.array() * xhat_.array()).rowwise().sum().matrix();
        beta_.grad.col(0) += dy.data.rowwise().sum();

        Mat<Scalar> dy_mean = dy.data.rowwise().mean();
        Mat<Scalar> dyxhat_mean =
            (dy.data.array() * xhat_.array()).rowwise().mean().matrix();
        Tensor4<Scalar> dx(dy.n, dy.c, dy.h, dy.w);
        // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy*xhat))
        dx.data = (((dy.data.colwise() - dy_mean.col(0)).array() -
                    xhat_.array().colwise() * dyxhat_mean.col(0).array())
                       .colwise() *
                   (gamma_.value.col(0).array() * inv_std_.col(0).array()))
                      .matrix();
        return dx;
    }

    Param<Scalar>& gamma() { return gamma_; }
    Param<Scalar>& beta() { return beta_; }
    Mat<Scalar>& running_mean() { return running_mean_; }
    Mat<Scalar>& running_var() { return running_var_; }

private:
    double momentum_, eps_;
    Param<Scalar> gamma_, beta_;
    Mat<Scalar> running_mean_, running_var_;
    Mat<Scalar> mean_, var_, inv_std_, xhat_;
};

template <typename Scalar>
class ReLU {
public:
    Tensor4<Scalar> forward(const Tensor4<Scalar>& x) {
        mask_ = (x.data.array() > Scalar(0)).template cast<Scalar>().matrix();
        Tensor4<Scalar> y(x.n, x.c, x.h, x.w);
        y.data = x.data.cwiseMax(Scalar(0));
        return y;
    }
    Tensor4<Scalar> backward(const Tensor4<Scalar>& dy) {
        Tensor4<Scalar> dx(dy.n, dy.c, dy.h, dy.w);
        dx.data = dy.data.cwiseProduct(mask_);
        return dx;
    }

private:
    Mat<Scalar> mask_;
};

// conv-bn-relu-conv-bn + projection skip, relu on the sum.
template <typename Scalar>
class ResidualBlock {
public:
    ResidualBlock(int in_c, int out_c, int stride, std::uint64_t seed,
                  const std::string& name)
        : conv1_(in_c, out_c, 3, stride, 1, derive_seed(seed, "conv1"),
                 name + ".conv1"),
          bn1_(out_c, name + ".bn1"),
          conv2_(out_c, out_c, 3, 1, 1, derive_seed(seed, "conv2"),
                 name + ".conv2"),
          bn2_(out_c, name + ".bn2"),
          project_(in_c != out_c || stride != 1) {
        if (project_) {
            proj_conv_ = std::make_unique<Conv2d<Scalar>>(
                in_c, out_c, 1, stride, 0, derive_seed(seed, "proj"),
                name + ".proj");
            proj_bn_ = std::make_unique<BatchNorm<Scalar>>(out_c,
                                                           name + ".proj_bn");
        }
    }

    Tensor4<Scalar> forward(const Tensor4<Scalar>& x, bool training) {
        Tensor4<Scalar> main = relu1_.forward(bn1_.forward(conv1_.forward(x), training));
        main = bn2_.forward(conv2_.forward(main), training);
        Tensor4<Scalar> skip =
            project_ ? proj_bn_->forward(proj_conv_->forward(x), training) : x;
        main.data += skip.data;
        return relu_out_.forward(main);
    }

    Tensor4<Scalar> backward(const Tensor4<Scalar>& dy) {
        Tensor4<Scalar> d = relu_out_.backward(dy);
        Tensor4<Scalar> dmain =
            conv1_.backward(bn1_.backward(relu1_.backward(
                conv2_.backward(bn2_.backward(d)))));
        Tensor4<Scalar> dskip =
            project_ ? proj_conv_->backward(proj_bn_->backward(d)) : d;
        dmain.data += dskip.data;
        return dmain;
    }

    void collect(std::vector<Param<Scalar>*>& params,
                 std::vector<Mat<Scalar>*>& buffers) {
        params.push_back(&conv1_.weight());
        params.push_back(&bn1_.gamma());
        params.push_back(&bn1_.beta());
        params.push_back(&conv2_.weight());
        params.push_back(&bn2_.gamma());
        params.push_back(&bn2_.beta());
        buffers.push_back(&bn1_.running_mean());
        buffers.push_back(&bn1_.running_var());
        buffers.push_back(&bn2_.running_mean());
        buffers.push_back(&bn2_.running_var());
        if (project_) {
            params.push_back(&proj_conv_->weight());
            params.push_back(&proj_bn_->gamma());
            params.push_back(&proj_bn_->beta());
            buffers.push_back(&proj_bn_->running_mean());
            buffers.push_back(&proj_bn_->running_var());
        }
    }

private:
    Conv2d<Scalar> conv1_;
    BatchNorm<Scalar> bn1_;
    Conv2d<Scalar> conv2_;
    BatchNorm<Scalar> bn2_;
    ReLU<Scalar> relu1_, relu_out_;
    bool project_;
    std::unique_ptr<Conv2d<Scalar>> proj_conv_;
    std::unique_ptr<BatchNorm<Scalar>> proj_bn_;
};

// ---------------------------------------------------------------------------
// Encoder: stem conv -> residual stages -> global average pool -> linear
// projection to the embedding dimension.
// ---------------------------------------------------------------------------

struct StageSpec {
    int channels = 32;
    int blocks = 1;
    int stride = 2;
};

struct EncoderSpec {
    int input_size = 112;
    int stem_channels = 16;
    int stem_kernel = 5;
    int stem_stride = 4;
    std::vector<StageSpec> stages = {{32, 2, 2}, {64, 2, 2}};
    int embedding_dim = 128;

    // Compact configuration for CPU-scale experiments.
    static EncoderSpec desk_scale() { return EncoderSpec{}; }

    // Deep 50-layer-class configuration for GPU users; same code path,
    // only the shape table differs.
    static EncoderSpec full_scale() {
        EncoderSpec s;
        s.stem_channels = 64;
        s.stem_kernel = 3;
        s.stem_stride = 1;
        s.stages = {{64, 3, 2}, {128, 4, 2}, {256, 14, 2}, {512, 3, 2}};
        s.embedding_dim = 512;
        return s;
    }

    void validate() const {
        if (input_size <= 0 || stem_channels <= 0 || embedding_dim <= 0)
            throw ValidationError("encoder: non-positive dimension");
        if (stages.empty()) throw ValidationError("encoder: no stages");
        for (const auto& st : stages)
            if (st.channels <= 0 || st.blocks <= 0 || st.stride <= 0)
                throw ValidationError("encoder: bad stage spec");
    }
};

template <typename Scalar>
class Encoder {
public:
    Encoder(const EncoderSpec& spec, std::uint64_t seed) : spec_(spec) {
        spec.validate();
        stem_ = std::make_unique<Conv2d<Scalar>>(
            3, spec.stem_channels, spec.stem_kernel, spec.stem_stride,
            spec.stem_kernel / 2, derive_seed(seed, "stem"), "stem");
        stem_bn_ = std::make_unique<BatchNorm<Scalar>>(spec.stem_channels,
                                                       "stem_bn");
        int in_c = spec.stem_channels;
        for (std::size_t s = 0; s < spec.stages.size(); ++s) {
            const auto& st = spec.stages[s];
            for (int b = 0; b < st.blocks; ++b) {
                const int stride = b == 0 ? st.stride : 1;
                const std::string name =
                    "stage" + std::to_string(s) + ".block" + std::to_string(b);
                blocks_.push_back(std::make_unique<ResidualBlock<Scalar>>(
                    in_c, st.channels, stride,
                    derive_seed(seed, name), name));
                in_c = st.channels;
            }
        }
        final_channels_ = in_c;
        fc_.name = "fc.weight";
        fc_.value.resize(spec.embedding_dim, in_c);
        Rng rng(derive_seed(seed, "fc"));
        const double std = std::sqrt(1.0 / in_c);
        for (Eigen::Index i = 0; i < fc_.value.size(); ++i)
            fc_.value.data()[i] = static_cast<Scalar>(rng.normal(0.0, std));
        fc_.zero_grad();
    }

    // Input: images already normalized to [-1,1]. Returns n x D embeddings
    // (unnormalized; callers L2-normalize for the margin head / metric).
    Mat<Scalar> forward(const Tensor4<Scalar>& input, bool training) {
        Tensor4<Scalar> x =
            stem_relu_.forward(stem_bn_->forward(stem_->forward(input), training));
        for (auto& b : blocks_) x = b->forward(x, training);
        pooled_shape_ = {x.n, x.c, x.h, x.w};
        // Global average pool -> (n x c).
        pooled_.resize(x.n, x.c);
        const Eigen::Index hw = static_cast<Eigen::Index>(x.h) * x.w;
        for (int n = 0; n < x.n; ++n)
            pooled_.row(n) =
                x.data.middleCols(n * hw, hw).rowwise().mean().transpose();
        return pooled_ * fc_.value.transpose();
    }

    void backward(const Mat<Scalar>& d_embedding) {
        fc_.grad.noalias() += d_embedding.transpose() * pooled_;
        Mat<Scalar> dpooled = d_embedding * fc_.value;  // n x c
        const auto [n, c, h, w] = pooled_shape_;
        Tensor4<Scalar> dx(n, c, h, w);
        const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
        const Scalar inv = Scalar(1) / Scalar(hw);
        for (int i = 0; i < n; ++i) {
            Mat<Scalar> column = dpooled.row(i).transpose() * inv;  // c x 1
            dx.data.middleCols(i * hw, hw).colwise() = column.col(0);
        }
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
            dx = (*it)->backward(dx);
        stem_->backward(stem_bn_->backward(stem_relu_.backward(dx)));
    }

    std::vector<Param<Scalar>*> parameters() {
        std::vector<Param<Scalar>*> params;
        std::vector<Mat<Scalar>*> buffers;
        collect(params, buffers);
        return params;
    }
    std::vector<Mat<Scalar>*> buffers() {
        std::vector<Param<Scalar>*> params;
        std::vector<Mat<Scalar>*> buffers;
        collect(params, buffers);
        return buffers;
    }

    const EncoderSpec& spec() const { return spec_; }
    int final_channels() const { return final_channels_; }

private:
    void collect(std::vector<Param<Scalar>*>& params,
                 std::vector<Mat<Scalar>*>& buffers) {
        params.push_back(&stem_->weight());
        params.push_back(&stem_bn_->gamma());
        params.push_back(&stem_bn_->beta());
        buffers.push_back(&stem_bn_->running_mean());
        buffers.push_back(&stem_bn_->running_var());
        for (auto& b : blocks_) b->collect(params, buffers);
        params.push_back(&fc_);
    }

    EncoderSpec spec_;
    std::unique_ptr<Conv2d<Scalar>> stem_;
    std::unique_ptr<BatchNorm<Scalar>> stem_bn_;
    ReLU<Scalar> stem_relu_;
    std::vector<std::unique_ptr<ResidualBlock<Scalar>>> blocks_;
    Param<Scalar> fc_;
    Mat<Scalar> pooled_;
    std::array<int, 4> pooled_shape_{};
    int final_channels_ = 0;
};

// Converts a [0,1] image into a network input plane with the (x-0.5)/0.5
// normalization applied.
template <typename Scalar>
void fill_input(Tensor4<Scalar>& t, int sample, const Image& img) {
    if (img.width != img.height)
        throw ValidationError("fill_input: non-square image");
    const Eigen::Index hw = static_cast<Eigen::Index>(img.width) * img.height;
    const Eigen::Index base = static_cast<Eigen::Index>(sample) * hw;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const Eigen::Index col = base + static_cast<Eigen::Index>(y) * img.width + x;
            for (int c = 0; c < 3; ++c)
                t.data(c, col) =
                    Scalar((img.at(x, y, c) - 0.5f) / 0.5f);
        }
}

}  // namespace facekit::net
