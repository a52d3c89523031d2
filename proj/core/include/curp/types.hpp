#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace curp {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimNotDivisible : Error { using Error::Error; };
struct VocabTooSmall : Error { using Error::Error; };
struct DimMismatch : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct TooFewPoints : Error { using Error::Error; };
struct TooFewRows : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct EmptyBatch : Error { using Error::Error; };
struct EmptyPool : Error { using Error::Error; };
struct EmptyResponse : Error { using Error::Error; };
struct TokenOutOfRange : Error { using Error::Error; };

// codec errors
struct BadMagic : Error { using Error::Error; };
struct CrcMismatch : Error { using Error::Error; };
struct Truncated : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };
struct SpecInconsistent : Error { using Error::Error; };

// protocol errors
struct UnknownFrameType : Error { using Error::Error; };
struct CodebookMismatch : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };
struct ConnectionClosed : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles. Small and dependency-free; everything in
// this library is desk scale.
// ---------------------------------------------------------------------------

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    std::span<double> row(std::size_t i) {
        return {data.data() + i * cols, cols};
    }
    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * cols, cols};
    }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool operator==(const Matrix& o) const = default;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct CodebookSpec {
    std::uint32_t dim = 0;           // full embedding dimension
    std::uint32_t num_subspaces = 0; // L
    std::uint32_t vocab_size = 0;    // K
    std::uint32_t sub_dim = 0;       // dim / L
};

CodebookSpec make_spec(std::uint32_t dim, std::uint32_t num_subspaces,
                       std::uint32_t vocab_size);
const CodebookSpec& validate_spec(const CodebookSpec& spec);

struct Codebook {
    CodebookSpec spec;
    Matrix entries; // vocab_size x sub_dim, one shared table for all subspaces
};

struct EmbeddingPool {
    Matrix data; // count x dim

    std::size_t count() const { return data.rows; }
    std::size_t dim() const { return data.cols; }
};

struct PQCode {
    std::vector<std::uint32_t> indices; // length L, each < vocab_size

    void validate(const CodebookSpec& spec) const;
};

struct PccConfig {
    double lambda_quant = 1.0;
    double lambda_div = 0.15;
    double lambda_usage = 1.0;
    double tau = 1.0;
    double soft_count_temp = 1.0;
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    std::uint32_t batch_size = 8;
    std::uint32_t accum_steps = 4;
    std::uint32_t epochs = 1;
    std::uint64_t seed = 0;
};

void validate_config(const PccConfig& cfg);

struct UserRecord {
    std::string user_id;
    Matrix histories; // J x dim, already encoded
    std::vector<std::uint32_t> query_tokens;
    std::vector<std::uint32_t> response_tokens;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Splits a d-dim row into L contiguous sub-vectors; concatenation of the
// returned views reproduces the input exactly.
std::vector<std::span<const double>> split_subspaces(std::span<const double> e,
                                                     const CodebookSpec& spec);

} // namespace curp
