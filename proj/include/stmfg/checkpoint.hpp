#ifndef STMFG_CHECKPOINT_HPP
#define STMFG_CHECKPOINT_HPP

// Text container of named tensors; see docs/checkpoint.md for the layout.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "stmfg/errors.hpp"
#include "stmfg/model.hpp"

namespace stmfg {

inline constexpr const char* kCheckpointMagic = "stmfg-checkpoint 1";

using NamedTensors = std::vector<std::pair<std::string, Matrix>>;

namespace detail {

inline std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const NamedTensors& tensors) {
  os << kCheckpointMagic << '\n' << tensors.size() << '\n';
  for (const auto& [name, m] : tensors) {
    detail::require(!name.empty() && name.find_first_of(" \t\n") == std::string::npos,
                    "write_checkpoint: tensor names must be non-empty and contain no whitespace");
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        if (c > 0) os << ' ';
        os << detail::shortest(m(r, c));
      }
      os << '\n';
    }
  }
}

inline NamedTensors read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) throw DataError("checkpoint: bad header");
  std::size_t count = 0;
  if (!(is >> count)) throw DataError("checkpoint: missing tensor count");
  NamedTensors out;
  for (std::size_t t = 0; t < count; ++t) {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    if (!(is >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw DataError("checkpoint: bad header for tensor " + std::to_string(t));
    }
    Matrix m(rows, cols);
    for (Index k = 0; k < m.size(); ++k) {
      std::string tok;
      if (!(is >> tok)) throw DataError("checkpoint: truncated tensor " + name);
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size()) {
        throw DataError("checkpoint: bad value '" + tok + "' in tensor " + name);
      }
      m.data()[k] = v;
    }
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  NamedTensors named;
  for (const auto& [name, t] : params.named()) named.emplace_back(name, t.value());
  write_checkpoint(os, named);
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

/// Overwrites the values of params with the tensors stored at path. Names and
/// shapes must match exactly.
inline void load_checkpoint(const std::string& path, ModelParams& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  const NamedTensors stored = read_checkpoint(is);
  auto targets = params.named();
  if (stored.size() != targets.size()) throw DataError("checkpoint: tensor count does not match the model");
  for (std::size_t i = 0; i < stored.size(); ++i) {
    auto& [name, t] = targets[i];
    const auto& [sname, m] = stored[i];
    if (sname != name || m.rows() != t.rows() || m.cols() != t.cols()) {
      throw DataError("checkpoint: expected " + name + " " + detail::shape_str(t) + ", found " + sname + " " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    t.mutable_value() = m;
  }
}

}  // namespace stmfg

#endif  // STMFG_CHECKPOINT_HPP
