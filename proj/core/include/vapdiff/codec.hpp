#pragma once

#include <vector>

#include "vapdiff/image.hpp"
#include "vapdiff/nn.hpp"
#include "vapdiff/schedule.hpp"

namespace vapdiff {

enum class CodecMode { identity, autoencoder };

CodecMode codec_mode_from_string(const std::string& s);
std::string to_string(CodecMode m);

struct CodecSpec {
    CodecMode mode = CodecMode::identity;
    LatentDims image_dims{3, 32, 32};
    int downsample = 4;       // autoencoder only
    int latent_channels = 4;  // autoencoder only
    int hidden = 32;          // autoencoder MLP width

    LatentDims latent_dims() const;
    void validate() const;
};

struct CodecFitReport {
    double initial_mse = 0.0;
    double final_mse = 0.0;
    std::vector<double> per_epoch_mse;
};

// Maps images to the diffusion latent space and back. Identity mode rescales
// pixels to [-1, 1]; autoencoder mode is a trainable per-patch MLP with a
// fitted latent standardization so latents are roughly unit scale.
class LatentCodec {
public:
    LatentCodec() = default;
    LatentCodec(CodecSpec spec, uint64_t seed);

    const CodecSpec& spec() const { return spec_; }
    LatentDims latent_dims() const { return spec_.latent_dims(); }

    LatentTensor encode_image(const Image& img) const;
    Image decode_latent(const LatentTensor& latent) const;

    // Full-batch reconstruction training over all patches of the dataset.
    // One epoch is one optimizer step over the full patch set.
    CodecFitReport fit(const std::vector<Image>& images, int epochs, double lr = 1e-2);
    bool fitted() const { return fitted_; }

    ParamList parameters() const;
    // Standardization constants, serialized with checkpoints.
    double latent_shift() const { return latent_shift_; }
    double latent_scale() const { return latent_scale_; }
    void set_standardization(double shift, double scale);
    void mark_fitted() { fitted_ = true; }

private:
    void require_image(const Image& img) const;
    std::vector<double> image_to_patch_rows(const Image& img) const;
    int patch_count() const;
    int patch_dim() const;

    CodecSpec spec_;
    LinearLayer enc1_, enc2_, dec1_, dec2_;
    double latent_shift_ = 0.0;
    double latent_scale_ = 1.0;
    bool fitted_ = false;
};

}  // namespace vapdiff
