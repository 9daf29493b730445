#pragma once

// Binary named-tensor blobs shared by checkpoint files and encoder weight
// files: [u32 name_len][name][u64 rows][u64 cols][row-major doubles].

#include "bitag/graph.hpp"

#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bitag::io {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("tensor_io: truncated stream");
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("tensor_io: truncated stream");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("tensor_io: truncated stream");
  return s;
}

inline void write_mat(std::ostream& out, const ad::Mat& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}
inline ad::Mat read_mat(std::istream& in) {
  auto rows = static_cast<Eigen::Index>(read_u64(in));
  auto cols = static_cast<Eigen::Index>(read_u64(in));
  ad::Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(r, c) = v;
    }
  if (!in) throw std::runtime_error("tensor_io: truncated stream");
  return m;
}

inline void write_named_tensors(std::ostream& out,
                                const std::vector<ad::Parameter*>& params) {
  write_u64(out, params.size());
  for (const ad::Parameter* p : params) {
    write_string(out, p->name);
    write_mat(out, p->value);
  }
}

// Restore values into parameters by name; every parameter must be present
// with a matching shape.
inline void read_named_tensors_into(std::istream& in,
                                    const std::vector<ad::Parameter*>& params) {
  std::map<std::string, ad::Mat> blobs;
  std::uint64_t n = read_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = read_string(in);
    blobs.emplace(std::move(name), read_mat(in));
  }
  for (ad::Parameter* p : params) {
    auto it = blobs.find(p->name);
    if (it == blobs.end())
      throw std::runtime_error("tensor_io: missing tensor \"" + p->name + "\"");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw std::runtime_error("tensor_io: shape mismatch for \"" + p->name + "\"");
    p->value = it->second;
  }
}

}  // namespace bitag::io
