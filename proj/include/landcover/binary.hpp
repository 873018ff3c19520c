#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "landcover/error.hpp"

namespace landcover {

// Little-endian fixed-width encoding used by checkpoint files.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void u64(std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    os_.write(buf, 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* data, std::size_t n) { os_.write(data, static_cast<std::streamsize>(n)); }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  void matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
    }
  }
  void vector(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  std::uint64_t u64() {
    unsigned char buf[8];
    read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = bounded(u64());
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void raw(char* data, std::size_t n) { read(data, n); }
  std::vector<double> doubles() {
    const std::uint64_t n = bounded(u64());
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  Eigen::MatrixXd matrix() {
    const auto rows = static_cast<Eigen::Index>(bounded(u64()));
    const auto cols = static_cast<Eigen::Index>(bounded(u64()));
    if (rows != 0 && static_cast<std::uint64_t>(cols) > kLimit / static_cast<std::uint64_t>(rows)) {
      throw IoError("checkpoint: matrix too large");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = f64();
    }
    return m;
  }
  Eigen::VectorXd vector() {
    const auto n = static_cast<Eigen::Index>(bounded(u64()));
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = f64();
    return v;
  }

 private:
  static constexpr std::uint64_t kLimit = 1ULL << 34;

  static std::uint64_t bounded(std::uint64_t n) {
    if (n > kLimit) throw IoError("checkpoint: corrupt length field");
    return n;
  }

  void read(char* data, std::size_t n) {
    is_.read(data, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw IoError("checkpoint: unexpected end of file");
  }

  std::istream& is_;
};

}  // namespace landcover
