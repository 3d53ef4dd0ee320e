#include "diamt/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace diamt {
namespace {

std::string tensor_index_line(
    const std::vector<std::pair<std::string, Matrix>>& tensors) {
  std::ostringstream line;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (i) line << ',';
    line << tensors[i].first << ':' << tensors[i].second.rows() << ':'
         << tensors[i].second.cols();
  }
  return line.str();
}

struct Shape {
  std::string name;
  long rows, cols;
};

std::vector<Shape> parse_index_line(const std::string& line) {
  std::vector<Shape> shapes;
  if (strip(line).empty()) return shapes;
  for (const auto& entry : split_on(line, ',')) {
    auto parts = split_on(strip(entry), ':');
    if (parts.size() != 3)
      throw ConfigError("bad tensor index entry: " + entry);
    shapes.push_back({parts[0], std::stol(parts[1]), std::stol(parts[2])});
  }
  return shapes;
}

std::string read_header_text(std::istream& in, const std::string& path) {
  std::string header, line;
  while (std::getline(in, line)) {
    if (strip(line).empty()) return header;
    header += line;
    header += '\n';
  }
  throw ConfigError(path + ": missing blank line after header");
}

template <typename Scalar, typename File>
void save_impl(const File& file, const std::string& path,
               const std::string& blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write: " + path);
  KVConfig header = file.header;
  header.set("tensors", tensor_index_line(file.tensors));
  if (!blob.empty()) header.set("blob_bytes", std::to_string(blob.size()));
  out << header.serialize() << "\n";
  std::vector<Scalar> buf;
  for (const auto& [name, m] : file.tensors) {
    buf.resize(m.size());
    // Row-major on disk.
    for (long r = 0; r < m.rows(); ++r)
      for (long c = 0; c < m.cols(); ++c)
        buf[r * m.cols() + c] = static_cast<Scalar>(m(r, c));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(Scalar)));
  }
  if (!blob.empty()) out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw RuntimeFailure("write failed: " + path);
}

template <typename Scalar, typename File>
File load_impl(const std::string& path, std::string* blob_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);
  File file;
  file.header = KVConfig::parse(read_header_text(in, path));
  const auto shapes = parse_index_line(file.header.get_string("tensors", ""));
  std::vector<Scalar> buf;
  for (const auto& s : shapes) {
    Matrix m(s.rows, s.cols);
    buf.resize(static_cast<std::size_t>(s.rows) * s.cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(Scalar)));
    if (!in) throw ConfigError(path + ": truncated tensor data for " + s.name);
    for (long r = 0; r < s.rows; ++r)
      for (long c = 0; c < s.cols; ++c)
        m(r, c) = static_cast<double>(buf[r * s.cols + c]);
    file.tensors.emplace_back(s.name, std::move(m));
  }
  if (blob_out) {
    const long n = file.header.get_int("blob_bytes", 0);
    blob_out->resize(n);
    if (n > 0) {
      in.read(blob_out->data(), n);
      if (!in) throw ConfigError(path + ": truncated blob");
    }
  }
  return file;
}

template <typename File>
const Matrix& get_impl(const File& file, const std::string& name) {
  for (const auto& [n, m] : file.tensors)
    if (n == name) return m;
  throw ConfigError("tensor not found: " + name);
}

}  // namespace

void TensorFile::add(const std::string& name, const Matrix& m) {
  tensors.emplace_back(name, m);
}

const Matrix& TensorFile::get(const std::string& name) const {
  return get_impl(*this, name);
}

void TensorFile::save(const std::string& path) const {
  save_impl<float>(*this, path, "");
}

TensorFile TensorFile::load(const std::string& path) {
  return load_impl<float, TensorFile>(path, nullptr);
}

void ResumeFile::add(const std::string& name, const Matrix& m) {
  tensors.emplace_back(name, m);
}

const Matrix& ResumeFile::get(const std::string& name) const {
  return get_impl(*this, name);
}

void ResumeFile::save(const std::string& path) const {
  save_impl<double>(*this, path, blob);
}

ResumeFile ResumeFile::load(const std::string& path) {
  std::string blob;
  auto f = load_impl<double, ResumeFile>(path, &blob);
  f.blob = std::move(blob);
  return f;
}

}  // namespace diamt
