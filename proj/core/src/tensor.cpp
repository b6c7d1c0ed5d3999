#include "av/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "av/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor file I/O assumes a little-endian host");

namespace av {

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, double fill_value) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_product(shape_)), fill_value);
}

Tensor Tensor::scalar(double v) {
  Tensor t(std::vector<int64_t>{});
  t.data_.assign(1, v);
  return t;
}

int64_t Tensor::offset(std::initializer_list<int64_t> idx) const {
  int64_t off = 0;
  size_t d = 0;
  for (int64_t i : idx) {
    off = off * shape_[d] + i;
    ++d;
  }
  return off;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  for (size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::min() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::min(m, v);
  return m;
}

double Tensor::max() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::max(m, v);
  return m;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {
constexpr char kMagic[4] = {'A', 'V', 'T', 'N'};
constexpr uint8_t kFormatVersion = 1;
}  // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor& t, TensorDType dtype) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open tensor file for writing: " + path.string());

  f.write(kMagic, 4);
  const uint8_t header[4] = {kFormatVersion, static_cast<uint8_t>(dtype),
                             static_cast<uint8_t>(t.rank()), 0};
  f.write(reinterpret_cast<const char*>(header), 4);
  for (int64_t d : t.shape()) {
    const uint64_t u = static_cast<uint64_t>(d);
    f.write(reinterpret_cast<const char*>(&u), 8);
  }

  const int64_t n = t.size();
  switch (dtype) {
    case TensorDType::f64:
      f.write(reinterpret_cast<const char*>(t.data()), n * 8);
      break;
    case TensorDType::f32: {
      std::vector<float> buf(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
      f.write(reinterpret_cast<const char*>(buf.data()), n * 4);
      break;
    }
    case TensorDType::u8: {
      std::vector<uint8_t> buf(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) {
        const double v = std::clamp(t[i], 0.0, 1.0);
        buf[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
      f.write(reinterpret_cast<const char*>(buf.data()), n);
      break;
    }
  }
  if (!f) throw IoError("short write on tensor file: " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open tensor file: " + path.string());

  char magic[4];
  uint8_t header[4];
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(header), 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a tensor file: " + path.string());
  if (header[0] != kFormatVersion)
    throw IoError("unsupported tensor file version in " + path.string());
  const auto dtype = static_cast<TensorDType>(header[1]);
  const int rank = header[2];

  std::vector<int64_t> shape(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    uint64_t u = 0;
    f.read(reinterpret_cast<char*>(&u), 8);
    shape[static_cast<size_t>(i)] = static_cast<int64_t>(u);
  }
  if (!f) throw IoError("truncated tensor header: " + path.string());

  Tensor t(shape);
  const int64_t n = t.size();
  switch (dtype) {
    case TensorDType::f64:
      f.read(reinterpret_cast<char*>(t.data()), n * 8);
      break;
    case TensorDType::f32: {
      std::vector<float> buf(static_cast<size_t>(n));
      f.read(reinterpret_cast<char*>(buf.data()), n * 4);
      for (int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
      break;
    }
    case TensorDType::u8: {
      std::vector<uint8_t> buf(static_cast<size_t>(n));
      f.read(reinterpret_cast<char*>(buf.data()), n);
      for (int64_t i = 0; i < n; ++i) t[i] = buf[static_cast<size_t>(i)] / 255.0;
      break;
    }
    default:
      throw IoError("unknown dtype code in tensor file: " + path.string());
  }
  if (!f) throw IoError("truncated tensor payload: " + path.string());
  return t;
}

}  // namespace av
