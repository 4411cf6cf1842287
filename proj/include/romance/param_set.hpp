#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace romance {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Named list of real matrices. Shapes are fixed once an entry is added;
/// values may only be replaced by matrices of identical shape.
class ParamSet {
 public:
  static constexpr int kFormatVersion = 1;

  std::size_t add(std::string name, Mat value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Mat& value(std::size_t i) const { return values_.at(i); }
  const std::vector<Mat>& values() const { return values_; }

  void assign(std::size_t i, const Mat& value);
  /// In-place update; `delta` must match the entry's shape.
  void add_to(std::size_t i, const Mat& delta);

  std::size_t scalar_count() const;
  bool all_finite() const;

  /// FNV-1a over names, shapes and raw bytes; used to prove parameters
  /// were not touched.
  std::uint64_t digest() const;

  /// Zero matrices with the same shapes, one per entry.
  std::vector<Mat> zeros_like() const;

  nlohmann::json to_json() const;
  static ParamSet from_json(const nlohmann::json& j);

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
};

void save_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace romance
