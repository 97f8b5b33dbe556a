#include "coopgrid/checkpoint.hpp"

#include "coopgrid/binary_io.hpp"
#include "coopgrid/errors.hpp"

#include <fstream>

namespace coopgrid {

namespace {
constexpr char kMagic[4] = {'C', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void Checkpoint::add(Array a) {
  for (auto& existing : arrays_) {
    if (existing.name == a.name) {
      existing = std::move(a);
      return;
    }
  }
  arrays_.push_back(std::move(a));
}

void Checkpoint::put(const std::string& name, const Eigen::MatrixXd& m) {
  Array a{name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  a.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.values.push_back(m(r, c));
  }
  add(std::move(a));
}

void Checkpoint::put(const std::string& name, const Eigen::VectorXd& v) {
  add({name, {static_cast<std::uint32_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())});
}

void Checkpoint::put_scalar(const std::string& name, double x) { add({name, {}, {x}}); }

bool Checkpoint::has(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return true;
  }
  return false;
}

const Checkpoint::Array& Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return a;
  }
  throw IoError("checkpoint has no array named '" + name + "'", name);
}

Eigen::MatrixXd Checkpoint::matrix(const std::string& name) const {
  const Array& a = find(name);
  if (a.shape.size() != 2) throw IoError("array '" + name + "' is not a matrix", name);
  Eigen::MatrixXd m(a.shape[0], a.shape[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a.values[static_cast<std::size_t>(r * m.cols() + c)];
  }
  return m;
}

Eigen::VectorXd Checkpoint::vector(const std::string& name) const {
  const Array& a = find(name);
  if (a.shape.size() != 1) throw IoError("array '" + name + "' is not a vector", name);
  return Eigen::Map<const Eigen::VectorXd>(a.values.data(), static_cast<Eigen::Index>(a.values.size()));
}

double Checkpoint::scalar(const std::string& name) const {
  const Array& a = find(name);
  if (!a.shape.empty()) throw IoError("array '" + name + "' is not a scalar", name);
  return a.values.at(0);
}

void Checkpoint::write(std::ostream& out) const {
  using namespace binary;
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(arrays_.size()));
  for (const auto& a : arrays_) {
    put_string(out, a.name);
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_u32(out, d);
    for (double v : a.values) put_f64(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint Checkpoint::read(std::istream& in) {
  using namespace binary;
  char magic[4];
  read_exact(in, magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) throw IoError("not a checkpoint file (bad magic)");
  const auto version = get_u32(in);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get_u32(in);
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    Array a;
    a.name = get_string(in);
    const auto rank = get_u32(in);
    if (rank > 8) throw IoError("implausible array rank in checkpoint", a.name);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(get_u32(in));
      n *= a.shape.back();
    }
    if (n > (std::size_t{1} << 28)) throw IoError("implausible array size in checkpoint", a.name);
    a.values.resize(n);
    for (auto& v : a.values) v = get_f64(in);
    ck.add(std::move(a));
  }
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing", path);
  write(out);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint", path);
  try {
    return read(in);
  } catch (const IoError& e) {
    throw IoError(e.what(), path);
  }
}

}  // namespace coopgrid
