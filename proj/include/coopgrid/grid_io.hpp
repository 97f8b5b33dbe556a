#pragma once

#include "coopgrid/evidential_grid.hpp"

#include <iosfwd>
#include <string>

namespace coopgrid {

/// Binary grid container, all integers and floats little-endian:
///
///   offset  size  field
///   0       4     magic "CGRD"
///   4       4     u32 format version (1)
///   8       4     u32 height
///   12      4     u32 width
///   16      8     f64 meters_per_cell
///   24      4     u32 ego_row
///   28      4     u32 ego_col
///   32      4     u32 length N of the class-order string
///   36      N     class-order string (kClassOrder, ASCII, no terminator)
///   36+N    ...   height*width cells, row-major, 6 x f32 each
///
/// Cells are read back through the checked SemanticGrid constructor, which
/// absorbs the float32 rounding by renormalization.
void write_grid(std::ostream& out, const SemanticGrid& grid);
SemanticGrid read_grid(std::istream& in);

void save_grid(const std::string& path, const SemanticGrid& grid);
SemanticGrid load_grid(const std::string& path);

}  // namespace coopgrid
