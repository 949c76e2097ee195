#include "difflens/matrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <string>

#include "difflens/error.hpp"

namespace difflens {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw Error(ErrorKind::invalid_argument, "matrix value count does not match shape");
    }
}

std::vector<std::uint8_t> encode_emb1(const Matrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kEmb1HeaderSize + m.values().size() * 4);
    out.insert(out.end(), std::begin(kEmb1Magic), std::end(kEmb1Magic));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (float v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

std::optional<Matrix> try_decode_emb1(std::span<const std::uint8_t> bytes, std::vector<Emb1Issue>& issues,
                                      std::size_t max_issues) {
    if (bytes.size() < kEmb1HeaderSize) {
        issues.push_back({"truncated header (" + std::to_string(bytes.size()) + " bytes)", 0});
        return std::nullopt;
    }
    if (!std::equal(std::begin(kEmb1Magic), std::end(kEmb1Magic), bytes.begin())) {
        issues.push_back({"bad magic, expected EMB1", 0});
        return std::nullopt;
    }
    const std::size_t rows = get_u32(bytes.data() + 4);
    const std::size_t cols = get_u32(bytes.data() + 8);
    const std::size_t expected = kEmb1HeaderSize + rows * cols * 4;
    if (bytes.size() != expected) {
        issues.push_back({"payload size " + std::to_string(bytes.size()) + " does not match header " +
                              std::to_string(rows) + "x" + std::to_string(cols) + " (expected " +
                              std::to_string(expected) + " bytes)",
                          std::min(bytes.size(), expected)});
        return std::nullopt;
    }
    std::vector<float> values(rows * cols);
    const std::uint8_t* p = bytes.data() + kEmb1HeaderSize;
    std::size_t found = 0;
    for (std::size_t i = 0; i < values.size(); ++i, p += 4) {
        const float v = std::bit_cast<float>(get_u32(p));
        if (!std::isfinite(v)) {
            if (found++ < max_issues) {
                const auto r = static_cast<long>(i / cols);
                const auto c = static_cast<long>(i % cols);
                issues.push_back({"non-finite value at row " + std::to_string(r) + ", col " + std::to_string(c),
                                  kEmb1HeaderSize + i * 4, r, c});
            }
            continue;
        }
        values[i] = v;
    }
    if (found > 0) return std::nullopt;
    return Matrix(rows, cols, std::move(values));
}

Matrix decode_emb1(std::span<const std::uint8_t> bytes, const std::string& name) {
    std::vector<Emb1Issue> issues;
    auto m = try_decode_emb1(bytes, issues, 1);
    if (!m) {
        const auto& first = issues.front();
        throw Error(ErrorKind::validation, first.message, name + "@" + std::to_string(first.offset));
    }
    return std::move(*m);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open file", path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw Error(ErrorKind::io, "short read", path.string());
    }
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open file for writing", path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "write failed", path.string());
}

void write_emb1(const std::filesystem::path& path, const Matrix& m) { write_file_bytes(path, encode_emb1(m)); }

Matrix read_emb1(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_emb1(bytes, path.filename().string());
}

}  // namespace difflens
