#include "vapdiff/schedule.hpp"

#include <cmath>

namespace vapdiff {

std::string LatentDims::str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

LatentTensor LatentTensor::zeros(LatentDims d) {
    return {d, std::vector<double>(static_cast<size_t>(d.count()), 0.0)};
}

LatentTensor LatentTensor::standard_normal(LatentDims d, RandomStream& rng) {
    LatentTensor t = zeros(d);
    rng.fill_normal(t.data);
    return t;
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "constant") return ScheduleKind::constant;
    throw ValidationError("schedule.kind: unknown value '" + s + "' (expected linear|constant)");
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::linear ? "linear" : "constant";
}

double NoiseSchedule::beta_at(int t) const {
    if (t < 1 || t > steps) {
        throw ValidationError("step index t=" + std::to_string(t) + " out of range [1, " +
                              std::to_string(steps) + "]");
    }
    return betas[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t < 1 || t > steps) {
        throw ValidationError("step index t=" + std::to_string(t) + " out of range [1, " +
                              std::to_string(steps) + "]");
    }
    return alpha_bars[static_cast<size_t>(t - 1)];
}

void NoiseSchedule::validate() const {
    if (steps < 1 || betas.size() != static_cast<size_t>(steps) ||
        alpha_bars.size() != static_cast<size_t>(steps)) {
        throw ValidationError("schedule: inconsistent step count");
    }
    double prev = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double b = betas[t - 1];
        const double ab = alpha_bars[t - 1];
        if (!(b > 0.0 && b < 1.0)) {
            throw ValidationError("schedule: betas[" + std::to_string(t) + "] out of (0,1)");
        }
        if (!(ab > 0.0 && ab < 1.0) || ab >= prev) {
            throw ValidationError("schedule: alpha_bars not strictly decreasing in (0,1) at t=" +
                                  std::to_string(t));
        }
        const double expect = prev * (1.0 - b);
        if (std::abs(ab - expect) > 1e-12 * std::abs(expect)) {
            throw ValidationError("schedule: alpha_bars[" + std::to_string(t) +
                                  "] inconsistent with running product");
        }
        prev = ab;
    }
}

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_start, double beta_end) {
    if (steps < 1) {
        throw ValidationError("schedule.steps: must be >= 1, got " + std::to_string(steps));
    }
    if (!(beta_start > 0.0 && beta_start < 1.0)) {
        throw ValidationError("schedule.beta_start: must lie in (0,1), got " +
                              std::to_string(beta_start));
    }
    if (!(beta_end > 0.0 && beta_end < 1.0)) {
        throw ValidationError("schedule.beta_end: must lie in (0,1), got " +
                              std::to_string(beta_end));
    }
    if (beta_start > beta_end) {
        throw ValidationError("schedule.beta_start: must not exceed beta_end");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.betas.resize(steps);
    s.alpha_bars.resize(steps);
    for (int t = 0; t < steps; ++t) {
        double beta = beta_start;
        if (kind == ScheduleKind::linear && steps > 1) {
            beta = beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                    static_cast<double>(steps - 1);
        }
        s.betas[t] = beta;
    }
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        prod *= 1.0 - s.betas[t];
        s.alpha_bars[t] = prod;
    }
    s.validate();
    return s;
}

namespace {

void check_shapes(const LatentTensor& a, const LatentTensor& b, const char* op) {
    if (!(a.dims == b.dims)) {
        throw ValidationError(std::string(op) + ": latent shape mismatch (" + a.dims.str() +
                              " vs " + b.dims.str() + ")");
    }
}

}  // namespace

LatentTensor forward_diffuse(const LatentTensor& x0, int t, const LatentTensor& eps,
                             const NoiseSchedule& sched) {
    check_shapes(x0, eps, "forward_diffuse");
    const double abar = sched.alpha_bar_at(t);
    const double cs = std::sqrt(abar);
    const double cn = std::sqrt(1.0 - abar);
    LatentTensor out = LatentTensor::zeros(x0.dims);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = cs * x0.data[i] + cn * eps.data[i];
    }
    return out;
}

LatentTensor forward_step(const LatentTensor& x_prev, int t, const LatentTensor& z,
                          const NoiseSchedule& sched) {
    check_shapes(x_prev, z, "forward_step");
    const double beta = sched.beta_at(t);
    const double cs = std::sqrt(1.0 - beta);
    const double cn = std::sqrt(beta);
    LatentTensor out = LatentTensor::zeros(x_prev.dims);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = cs * x_prev.data[i] + cn * z.data[i];
    }
    return out;
}

double diffusion_loss(const LatentTensor& eps_pred, const LatentTensor& eps) {
    check_shapes(eps_pred, eps, "diffusion_loss");
    double s = 0.0;
    for (size_t i = 0; i < eps.data.size(); ++i) {
        const double d = eps.data[i] - eps_pred.data[i];
        s += d * d;
    }
    return s / static_cast<double>(eps.data.size());
}

LatentTensor reverse_step(const LatentTensor& xt, const LatentTensor& eps_pred, int t,
                          const LatentTensor& z, const NoiseSchedule& sched) {
    check_shapes(xt, eps_pred, "reverse_step");
    check_shapes(xt, z, "reverse_step");
    if (!eps_pred.finite()) {
        throw NumericError("reverse_step: non-finite noise prediction at t=" + std::to_string(t));
    }
    const double beta = sched.beta_at(t);
    const double abar = sched.alpha_bar_at(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    const double noise_coeff = beta / std::sqrt(1.0 - abar);
    const double sigma = t > 1 ? std::sqrt(beta) : 0.0;
    LatentTensor out = LatentTensor::zeros(xt.dims);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = inv_sqrt_alpha * (xt.data[i] - noise_coeff * eps_pred.data[i]) +
                      sigma * z.data[i];
    }
    return out;
}

}  // namespace vapdiff
