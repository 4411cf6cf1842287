#include "romance/param_set.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "romance/error.hpp"

namespace romance {

namespace {

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
}

}  // namespace

std::size_t ParamSet::add(std::string name, Mat value) {
  if (!value.allFinite()) throw ConfigError("parameter '" + name + "' is not finite");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

void ParamSet::assign(std::size_t i, const Mat& value) {
  Mat& dst = values_.at(i);
  if (dst.rows() != value.rows() || dst.cols() != value.cols())
    throw ConfigError("shape mismatch assigning parameter '" + names_[i] + "'");
  dst = value;
}

void ParamSet::add_to(std::size_t i, const Mat& delta) {
  Mat& dst = values_.at(i);
  if (dst.rows() != delta.rows() || dst.cols() != delta.cols())
    throw ConfigError("shape mismatch updating parameter '" + names_[i] + "'");
  dst += delta;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& v : values_)
    if (!v.allFinite()) return false;
  return true;
}

std::uint64_t ParamSet::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    fnv_mix(h, names_[i].data(), names_[i].size());
    const std::int64_t shape[2] = {values_[i].rows(), values_[i].cols()};
    fnv_mix(h, shape, sizeof(shape));
    fnv_mix(h, values_[i].data(), sizeof(double) * static_cast<std::size_t>(values_[i].size()));
  }
  return h;
}

std::vector<Mat> ParamSet::zeros_like() const {
  std::vector<Mat> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(Mat::Zero(v.rows(), v.cols()));
  return out;
}

nlohmann::json ParamSet::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Mat& m = values_[i];
    entries.push_back({{"name", names_[i]},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  return {{"format_version", kFormatVersion}, {"entries", entries}};
}

ParamSet ParamSet::from_json(const nlohmann::json& j) {
  if (j.value("format_version", -1) != kFormatVersion)
    throw ConfigError("unsupported ParamSet format_version");
  ParamSet ps;
  for (const auto& e : j.at("entries")) {
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    const auto data = e.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw ConfigError("ParamSet entry '" + e.at("name").get<std::string>() + "' has wrong data length");
    Mat m(rows, cols);
    std::memcpy(m.data(), data.data(), sizeof(double) * data.size());
    ps.add(e.at("name").get<std::string>(), std::move(m));
  }
  return ps;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols())
      return false;
    if (values_[i] != other.values_[i]) return false;
  }
  return true;
}

void save_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace romance
