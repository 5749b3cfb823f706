#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "cmr/errors.hpp"

namespace cmr {

// Little-endian binary writer/reader for the versioned container files
// (topic model, network checkpoint, triples cache).
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }

    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { scalar(v); }
    void u64(std::uint64_t v) { scalar(v); }
    void i64(std::int64_t v) { scalar(static_cast<std::uint64_t>(v)); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        scalar(bits);
    }

    void magic(const char tag[8]) { raw(tag, 8); }

    void matrix(const Eigen::MatrixXd& m) {
        i64(m.rows());
        i64(m.cols());
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }

    void vector(const Eigen::VectorXd& v) {
        i64(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
    }

    void string(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    template <class T>
    void scalar(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        raw(buf, sizeof(T));
    }

    void raw(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed: " + path_);
    }

    std::ofstream out_;
    std::string path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open: " + path);
    }

    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    std::uint64_t u64() { return scalar<std::uint64_t>(); }
    std::int64_t i64() { return static_cast<std::int64_t>(scalar<std::uint64_t>()); }
    double f64() {
        const std::uint64_t bits = scalar<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void expect_magic(const char tag[8]) {
        char buf[8];
        raw(buf, 8);
        if (std::memcmp(buf, tag, 8) != 0) {
            throw UnsupportedFormat(path_ + ": unrecognized file header");
        }
    }

    Eigen::MatrixXd matrix() {
        const auto rows = i64();
        const auto cols = i64();
        if (rows < 0 || cols < 0) throw UnsupportedFormat(path_ + ": negative matrix extent");
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
        return m;
    }

    Eigen::VectorXd vector() {
        const auto n = i64();
        if (n < 0) throw UnsupportedFormat(path_ + ": negative vector extent");
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = f64();
        return v;
    }

    std::string string() {
        const auto n = u64();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    const std::string& path() const { return path_; }

private:
    template <class T>
    T scalar() {
        unsigned char buf[sizeof(T)];
        raw(buf, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }

    void raw(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw TruncatedFile(path_ + ": unexpected end of file");
        }
    }

    std::ifstream in_;
    std::string path_;
};

}  // namespace cmr
