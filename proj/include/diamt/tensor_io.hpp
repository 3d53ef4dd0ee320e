#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diamt/common.hpp"
#include "diamt/kvconfig.hpp"

namespace diamt {

/// Shared binary container for checkpoints, probes, bases, and projectors.
///
/// Byte layout:
///   - UTF-8 header: `key = value` lines, including a generated
///     `tensors = name:rows:cols,...` line, terminated by one blank line;
///   - raw little-endian float32 tensor data, row-major, concatenated in
///     the order declared by the `tensors` line.
struct TensorFile {
  KVConfig header;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void add(const std::string& name, const Matrix& m);
  const Matrix& get(const std::string& name) const;

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);
};

/// Full-precision sidecar used for exact training resume (doubles, plus
/// arbitrary extra state streams). Same layout but float64 payload.
struct ResumeFile {
  KVConfig header;
  std::vector<std::pair<std::string, Matrix>> tensors;
  std::string blob;  // opaque extra state (e.g. serialized RNG)

  void add(const std::string& name, const Matrix& m);
  const Matrix& get(const std::string& name) const;

  void save(const std::string& path) const;
  static ResumeFile load(const std::string& path);
};

}  // namespace diamt
