#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

namespace av {

// Dense row-major tensor of doubles. The single numeric carrier for
// waveform blocks, spectrogram planes, video volumes, network activations
// and parameters.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, double fill_value);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double v);

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Multi-index accessors; index arithmetic only, no bounds checks in release.
  int64_t offset(std::initializer_list<int64_t> idx) const;
  double& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
  double at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(offset(idx))];
  }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double sum() const;
  double min() const;
  double max() const;
  double abs_max() const;
  bool all_finite() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

int64_t shape_product(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

// --- Flat binary tensor file -------------------------------------------
//
// Layout (all integers little-endian):
//   bytes 0..3   magic "AVTN"
//   byte  4      format version (1)
//   byte  5      dtype code: 0 = float64, 1 = float32, 2 = uint8
//   byte  6      rank
//   byte  7      reserved (0)
//   rank x u64   dimensions
//   payload      row-major values
//
// uint8 payloads encode values in [0, 1] as round(v * 255).
enum class TensorDType : uint8_t { f64 = 0, f32 = 1, u8 = 2 };

void write_tensor_file(const std::filesystem::path& path, const Tensor& t,
                       TensorDType dtype = TensorDType::f64);
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace av
