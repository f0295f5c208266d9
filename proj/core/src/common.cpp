#include "vapdiff/common.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace vapdiff {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t fnv1a64(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

RandomStream::RandomStream(uint64_t seed) : eng_(splitmix64(seed)) {}

RandomStream RandomStream::child(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t h = splitmix64(seed);
    for (uint64_t w : path) {
        h = splitmix64(h ^ splitmix64(w));
    }
    return RandomStream(h);
}

uint64_t RandomStream::next_u64() {
    return eng_();
}

double RandomStream::uniform() {
    // 53-bit mantissa from the top bits.
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RandomStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

size_t RandomStream::uniform_index(size_t n) {
    if (n == 0) {
        throw ValidationError("uniform_index: n must be positive");
    }
    // Rejection sampling over the largest multiple of n.
    uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    uint64_t x = 0;
    do {
        x = eng_();
    } while (x >= limit);
    return static_cast<size_t>(x % n);
}

void RandomStream::fill_normal(std::vector<double>& out) {
    for (double& x : out) {
        x = normal();
    }
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ValidationError("cannot write file: " + path);
    }
    out << content;
}

}  // namespace vapdiff
