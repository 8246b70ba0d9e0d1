#pragma once

#include <vector>

#include "cdgan/data.hpp"
#include "cdgan/error.hpp"
#include "cdgan/image_io.hpp"
#include "cdgan/tensor.hpp"

namespace cdgan {

// Tiles single-image tensors (1, 3, S, S) into a rows x columns RGB image.
// Cells keep model resolution and touch without padding.
inline Image8 make_grid(const std::vector<std::vector<Tensor<float>>>& rows) {
  if (rows.empty() || rows.front().empty()) {
    throw InputError("make_grid: no cells");
  }
  const std::size_t cols = rows.front().size();
  const Shape cell = rows.front().front().shape();
  Image8 grid{static_cast<int>(cols) * cell.w, static_cast<int>(rows.size()) * cell.h, 3, {}};
  grid.pixels.assign(static_cast<std::size_t>(grid.width) * grid.height * 3, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw InputError("make_grid: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      const Tensor<float>& t = rows[r][c];
      if (t.shape() != cell) throw InputError("make_grid: cell shape " + to_string(t.shape()) + " differs");
      const Image8 img = tensor_to_image(t);
      for (int y = 0; y < cell.h; ++y) {
        for (int x = 0; x < cell.w; ++x) {
          for (int ch = 0; ch < 3; ++ch) {
            grid.at(static_cast<int>(c) * cell.w + x, static_cast<int>(r) * cell.h + y, ch) = img.at(x, y, ch);
          }
        }
      }
    }
  }
  return grid;
}

}  // namespace cdgan
