#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace coopgrid {

/// Flat container of named float64 arrays, little-endian:
///
///   magic "CGCK", u32 version (1), u32 array count, then per array:
///   u32 name length, name bytes, u32 rank, rank x u32 extents,
///   prod(extents) x f64 values in row-major order.
///
/// Names are unique; arrays keep insertion order.
class Checkpoint {
 public:
  struct Array {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<double> values;
  };

  void put(const std::string& name, const Eigen::MatrixXd& m);
  void put(const std::string& name, const Eigen::VectorXd& v);
  void put_scalar(const std::string& name, double x);

  bool has(const std::string& name) const;
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  double scalar(const std::string& name) const;

  const std::vector<Array>& arrays() const { return arrays_; }

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  const Array& find(const std::string& name) const;
  void add(Array a);
  std::vector<Array> arrays_;
};

}  // namespace coopgrid
