#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vapdiff {

// Input validation failures: bad config values, shape mismatches, out-of-range
// arguments. CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation requested in a mode that does not support it.
class UnsupportedModeError : public ValidationError {
public:
    explicit UnsupportedModeError(const std::string& msg) : ValidationError(msg) {}
};

// Malformed persisted files (bank, manifest, checkpoint). Exit code 1.
class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& msg) : ValidationError(msg) {}
};

// Numeric failures at runtime: non-finite activations, diverged losses. Exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// External-service failures: client timeouts, exhausted retries. Exit code 3.
class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed responses from an otherwise reachable service. Exit code 3.
class ProtocolError : public TransportError {
public:
    explicit ProtocolError(const std::string& msg) : TransportError(msg) {}
};

uint64_t splitmix64(uint64_t x);

// FNV-1a over bytes; used for config hashes and the hash-based text provider.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);

// Deterministic random stream. All randomness in the project flows through
// this class so results are reproducible independent of the platform's
// <random> distribution implementations. Normal draws use Box-Muller.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed);

    // Derives an independent stream from (seed, path words). Used to give each
    // module / training step its own stream so adding a consumer does not
    // shift the draws of another.
    static RandomStream child(uint64_t seed, std::initializer_list<uint64_t> path);

    uint64_t next_u64();
    double uniform();              // [0, 1)
    double uniform(double lo, double hi);
    double normal();               // standard normal
    size_t uniform_index(size_t n);  // [0, n), unbiased
    void fill_normal(std::vector<double>& out);

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

bool all_finite(const std::vector<double>& v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace vapdiff
