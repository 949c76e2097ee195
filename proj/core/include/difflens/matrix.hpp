#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace difflens {

// Dense row-major float32 matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const float> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
    std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

    float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

    std::span<const float> values() const noexcept { return values_; }
    std::span<float> values() noexcept { return values_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> values_;
};

// EMB1 matrix file: "EMB1", u32 LE rows, u32 LE cols, rows*cols binary32 LE.
inline constexpr char kEmb1Magic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmb1HeaderSize = 12;

std::vector<std::uint8_t> encode_emb1(const Matrix& m);
void write_emb1(const std::filesystem::path& path, const Matrix& m);

struct Emb1Issue {
    std::string message;
    std::size_t offset = 0;  // byte offset into the file
    long row = -1;           // -1 when not tied to a cell
    long col = -1;
};

// Collects every problem (non-finite values capped at `max_issues`) and
// returns the matrix only when no issue was found.
std::optional<Matrix> try_decode_emb1(std::span<const std::uint8_t> bytes, std::vector<Emb1Issue>& issues,
                                      std::size_t max_issues = 16);

// Strict decode. Throws Error(validation) naming the byte offset of the
// first problem (bad magic, short payload, trailing bytes, non-finite value).
Matrix decode_emb1(std::span<const std::uint8_t> bytes, const std::string& name);
Matrix read_emb1(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace difflens
