#include "vapdiff/codec.hpp"

#include <algorithm>
#include <cmath>

namespace vapdiff {

CodecMode codec_mode_from_string(const std::string& s) {
    if (s == "identity") return CodecMode::identity;
    if (s == "autoencoder") return CodecMode::autoencoder;
    throw ValidationError("codec.mode: unknown value '" + s + "' (expected identity|autoencoder)");
}

std::string to_string(CodecMode m) {
    return m == CodecMode::identity ? "identity" : "autoencoder";
}

LatentDims CodecSpec::latent_dims() const {
    if (mode == CodecMode::identity) {
        return image_dims;
    }
    return {latent_channels, image_dims.height / downsample, image_dims.width / downsample};
}

void CodecSpec::validate() const {
    if (image_dims.channels != 3 || image_dims.height < 1 || image_dims.width < 1) {
        throw ValidationError("codec.image_dims: expected positive 3-channel shape");
    }
    if (mode == CodecMode::autoencoder) {
        if (downsample < 1 || latent_channels < 1 || hidden < 1) {
            throw ValidationError("codec: downsample/latent_channels/hidden must be positive");
        }
        if (image_dims.height % downsample != 0 || image_dims.width % downsample != 0) {
            throw ValidationError("codec.downsample: image dims " + image_dims.str() +
                                  " not divisible by factor " + std::to_string(downsample));
        }
    }
}

LatentCodec::LatentCodec(CodecSpec spec, uint64_t seed) : spec_(spec) {
    spec_.validate();
    if (spec_.mode == CodecMode::autoencoder) {
        RandomStream rng = RandomStream::child(seed, {fnv1a64("codec")});
        enc1_.init(patch_dim(), spec_.hidden, rng);
        enc2_.init(spec_.hidden, spec_.latent_channels, rng);
        dec1_.init(spec_.latent_channels, spec_.hidden, rng);
        dec2_.init(spec_.hidden, patch_dim(), rng);
    } else {
        fitted_ = true;
    }
}

int LatentCodec::patch_count() const {
    const auto& d = spec_.image_dims;
    return (d.height / spec_.downsample) * (d.width / spec_.downsample);
}

int LatentCodec::patch_dim() const {
    return spec_.image_dims.channels * spec_.downsample * spec_.downsample;
}

void LatentCodec::require_image(const Image& img) const {
    const auto& d = spec_.image_dims;
    if (img.channels != d.channels || img.height != d.height || img.width != d.width) {
        throw ValidationError("codec: image shape " + img.dims().str() +
                              " does not match spec " + d.str());
    }
    for (double v : img.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("codec: pixel values must lie in [0,1]");
        }
    }
}

std::vector<double> LatentCodec::image_to_patch_rows(const Image& img) const {
    const int f = spec_.downsample;
    const int ph = spec_.image_dims.height / f;
    const int pw = spec_.image_dims.width / f;
    const int pd = patch_dim();
    std::vector<double> rows(static_cast<size_t>(ph) * pw * pd);
    for (int py = 0; py < ph; ++py) {
        for (int px = 0; px < pw; ++px) {
            double* row = rows.data() + (static_cast<size_t>(py) * pw + px) * pd;
            int idx = 0;
            for (int c = 0; c < img.channels; ++c) {
                for (int dy = 0; dy < f; ++dy) {
                    for (int dx = 0; dx < f; ++dx) {
                        // Center pixels to [-1, 1] before the MLP.
                        row[idx++] = img.at(c, py * f + dy, px * f + dx) * 2.0 - 1.0;
                    }
                }
            }
        }
    }
    return rows;
}

LatentTensor LatentCodec::encode_image(const Image& img) const {
    require_image(img);
    if (spec_.mode == CodecMode::identity) {
        LatentTensor out = LatentTensor::zeros(spec_.image_dims);
        for (size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = img.data[i] * 2.0 - 1.0;
        }
        return out;
    }
    const int np = patch_count();
    const int pd = patch_dim();
    const int hd = spec_.hidden;
    const int lc = spec_.latent_channels;
    std::vector<double> rows = image_to_patch_rows(img);
    std::vector<double> h(static_cast<size_t>(np) * hd);
    matmul_raw(rows.data(), enc1_.w.value().data(), h.data(), np, pd, hd);
    for (int i = 0; i < np; ++i) {
        for (int j = 0; j < hd; ++j) {
            double& v = h[static_cast<size_t>(i) * hd + j];
            v += enc1_.b.value()[j];
            v = v > 0.0 ? v : 0.0;
        }
    }
    std::vector<double> z(static_cast<size_t>(np) * lc);
    matmul_raw(h.data(), enc2_.w.value().data(), z.data(), np, hd, lc);
    const LatentDims ld = latent_dims();
    LatentTensor out = LatentTensor::zeros(ld);
    for (int p = 0; p < np; ++p) {
        const int py = p / ld.width;
        const int px = p % ld.width;
        for (int l = 0; l < lc; ++l) {
            const double v = z[static_cast<size_t>(p) * lc + l] + enc2_.b.value()[l];
            out.data[(static_cast<size_t>(l) * ld.height + py) * ld.width + px] =
                (v - latent_shift_) / latent_scale_;
        }
    }
    return out;
}

Image LatentCodec::decode_latent(const LatentTensor& latent) const {
    const LatentDims ld = latent_dims();
    if (!(latent.dims == ld)) {
        throw ValidationError("codec: latent shape " + latent.dims.str() +
                              " does not match spec " + ld.str());
    }
    if (spec_.mode == CodecMode::identity) {
        Image img = Image::zeros(3, ld.height, ld.width);
        for (size_t i = 0; i < img.data.size(); ++i) {
            img.data[i] = std::clamp((latent.data[i] + 1.0) * 0.5, 0.0, 1.0);
        }
        return img;
    }
    const int np = patch_count();
    const int hd = spec_.hidden;
    const int lc = spec_.latent_channels;
    const int pd = patch_dim();
    std::vector<double> z(static_cast<size_t>(np) * lc);
    for (int p = 0; p < np; ++p) {
        const int py = p / ld.width;
        const int px = p % ld.width;
        for (int l = 0; l < lc; ++l) {
            z[static_cast<size_t>(p) * lc + l] =
                latent.data[(static_cast<size_t>(l) * ld.height + py) * ld.width + px] *
                    latent_scale_ +
                latent_shift_;
        }
    }
    std::vector<double> h(static_cast<size_t>(np) * hd);
    matmul_raw(z.data(), dec1_.w.value().data(), h.data(), np, lc, hd);
    for (int i = 0; i < np; ++i) {
        for (int j = 0; j < hd; ++j) {
            double& v = h[static_cast<size_t>(i) * hd + j];
            v += dec1_.b.value()[j];
            v = v > 0.0 ? v : 0.0;
        }
    }
    std::vector<double> rows(static_cast<size_t>(np) * pd);
    matmul_raw(h.data(), dec2_.w.value().data(), rows.data(), np, hd, pd);
    const int f = spec_.downsample;
    Image img = Image::zeros(3, spec_.image_dims.height, spec_.image_dims.width);
    for (int p = 0; p < np; ++p) {
        const int py = p / ld.width;
        const int px = p % ld.width;
        const double* row = rows.data() + static_cast<size_t>(p) * pd;
        int idx = 0;
        for (int c = 0; c < 3; ++c) {
            for (int dy = 0; dy < f; ++dy) {
                for (int dx = 0; dx < f; ++dx) {
                    const double v = row[idx++] + dec2_.b.value()[c * f * f + dy * f + dx];
                    img.at(c, py * f + dy, px * f + dx) = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
                }
            }
        }
    }
    return img;
}

CodecFitReport LatentCodec::fit(const std::vector<Image>& images, int epochs, double lr) {
    if (spec_.mode != CodecMode::autoencoder) {
        throw UnsupportedModeError("fit_codec: codec is in identity mode and has no parameters");
    }
    if (images.empty() || epochs < 1) {
        throw ValidationError("fit_codec: need at least one image and one epoch");
    }
    const int np = patch_count();
    const int pd = patch_dim();
    const int rows_total = static_cast<int>(images.size()) * np;
    std::vector<double> all_rows;
    all_rows.reserve(static_cast<size_t>(rows_total) * pd);
    for (const auto& img : images) {
        require_image(img);
        auto rows = image_to_patch_rows(img);
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    }
    Tensor x = Tensor::from_values(rows_total, pd, all_rows);

    ParamList params = parameters();
    AdamOptimizer opt;
    opt.lr = lr;
    CodecFitReport report;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        opt.zero_grad(params);
        Tensor z = enc2_(relu(enc1_(x)));
        Tensor rec = dec2_(relu(dec1_(z)));
        Tensor loss = mse(rec, x);
        // Loss is in [-1,1] units; report in [0,1] pixel units.
        const double pixel_mse = loss.item() * 0.25;
        report.per_epoch_mse.push_back(pixel_mse);
        if (epoch == 0) {
            report.initial_mse = pixel_mse;
        }
        loss.backward();
        opt.step(params);
    }
    {
        // Final pass to measure and to standardize the latent distribution.
        NoGradGuard ng;
        Tensor z = enc2_(relu(enc1_(x)));
        Tensor rec = dec2_(relu(dec1_(z)));
        report.final_mse = mse(rec, x).item() * 0.25;
        double mean = 0.0;
        for (double v : z.value()) {
            mean += v;
        }
        mean /= static_cast<double>(z.value().size());
        double var = 0.0;
        for (double v : z.value()) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(z.value().size());
        latent_shift_ = mean;
        latent_scale_ = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
    }
    fitted_ = true;
    return report;
}

ParamList LatentCodec::parameters() const {
    ParamList out;
    if (spec_.mode == CodecMode::autoencoder) {
        enc1_.collect(out, "codec.enc1");
        enc2_.collect(out, "codec.enc2");
        dec1_.collect(out, "codec.dec1");
        dec2_.collect(out, "codec.dec2");
    }
    return out;
}

void LatentCodec::set_standardization(double shift, double scale) {
    latent_shift_ = shift;
    latent_scale_ = scale;
}

}  // namespace vapdiff
