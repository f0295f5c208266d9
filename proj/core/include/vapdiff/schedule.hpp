#pragma once

#include <string>
#include <vector>

#include "vapdiff/common.hpp"

namespace vapdiff {

// Plain numeric tensor for latents, separate from the autograd graph.
struct LatentDims {
    int channels = 0;
    int height = 0;
    int width = 0;

    int count() const { return channels * height * width; }
    bool operator==(const LatentDims&) const = default;
    std::string str() const;
};

struct LatentTensor {
    LatentDims dims;
    std::vector<double> data;

    static LatentTensor zeros(LatentDims d);
    static LatentTensor standard_normal(LatentDims d, RandomStream& rng);
    bool finite() const { return all_finite(data); }
};

enum class ScheduleKind { linear, constant };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Noise schedule over steps t = 1..T (1-based, matching the forward process
// definition; storage is 0-based behind the accessors).
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> betas;       // betas[t-1] in (0,1)
    std::vector<double> alpha_bars;  // alpha_bars[t-1] = prod_{s<=t} (1 - beta_s)

    double beta_at(int t) const;       // 1-based
    double alpha_bar_at(int t) const;  // 1-based
    void validate() const;
};

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_start, double beta_end);

// Closed-form jump to step t: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
LatentTensor forward_diffuse(const LatentTensor& x0, int t, const LatentTensor& eps,
                             const NoiseSchedule& sched);

// Single forward step t-1 -> t: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * z.
LatentTensor forward_step(const LatentTensor& x_prev, int t, const LatentTensor& z,
                          const NoiseSchedule& sched);

// Mean squared error between predicted and true noise.
double diffusion_loss(const LatentTensor& eps_pred, const LatentTensor& eps);

// Ancestral reverse step; z is ignored at t = 1 (last step is noiseless).
LatentTensor reverse_step(const LatentTensor& xt, const LatentTensor& eps_pred, int t,
                          const LatentTensor& z, const NoiseSchedule& sched);

}  // namespace vapdiff
