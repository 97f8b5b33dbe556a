#include "coopgrid/grid_io.hpp"

#include "coopgrid/binary_io.hpp"
#include "coopgrid/errors.hpp"

#include <fstream>

namespace coopgrid {

namespace {
constexpr char kMagic[4] = {'C', 'G', 'R', 'D'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_grid(std::ostream& out, const SemanticGrid& grid) {
  using namespace binary;
  const auto& g = grid.geometry();
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(g.height));
  put_u32(out, static_cast<std::uint32_t>(g.width));
  put_f64(out, g.meters_per_cell);
  put_u32(out, static_cast<std::uint32_t>(g.ego_row));
  put_u32(out, static_cast<std::uint32_t>(g.ego_col));
  put_string(out, std::string(kClassOrder));
  const auto& cells = grid.cells();
  for (Eigen::Index i = 0; i < cells.rows(); ++i) {
    for (int k = 0; k < kNumChannels; ++k) put_f32(out, static_cast<float>(cells(i, k)));
  }
  if (!out) throw IoError("failed to write grid");
}

SemanticGrid read_grid(std::istream& in) {
  using namespace binary;
  char magic[4];
  read_exact(in, magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) throw IoError("not a grid file (bad magic)");
  if (get_u32(in) != kVersion) throw IoError("unsupported grid file version");
  GridGeometry g;
  g.height = static_cast<int>(get_u32(in));
  g.width = static_cast<int>(get_u32(in));
  g.meters_per_cell = get_f64(in);
  g.ego_row = static_cast<int>(get_u32(in));
  g.ego_col = static_cast<int>(get_u32(in));
  if (get_string(in, 1024) != kClassOrder) throw IoError("grid file uses an unknown class order");
  if (g.height <= 0 || g.width <= 0 || static_cast<long long>(g.height) * g.width > (1LL << 26)) {
    throw IoError("grid dimensions out of range");
  }
  SemanticGrid::CellMatrix cells(g.cell_count(), kNumChannels);
  for (Eigen::Index i = 0; i < cells.rows(); ++i) {
    for (int k = 0; k < kNumChannels; ++k) cells(i, k) = get_f32(in);
  }
  return SemanticGrid(g, std::move(cells));
}

void save_grid(const std::string& path, const SemanticGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open grid file for writing", path);
  write_grid(out, grid);
}

SemanticGrid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grid file", path);
  return read_grid(in);
}

}  // namespace coopgrid
