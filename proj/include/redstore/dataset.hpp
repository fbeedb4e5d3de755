#pragma once

#include <string>
#include <vector>

#include "redstore/tensor.hpp"

namespace redstore {

// Categories with procedural silhouettes. The set is extensible in
// principle; these three ship with renderers.
const std::vector<std::string>& default_categories();

// Deterministic procedural product photo: a category-specific silhouette
// with randomized color, scale (+-20%), translation (+-10%) and background
// noise, rasterized at dim x dim (dim >= 64) and snapped to the 1/255 grid.
Tensor generate_product_image(const std::string& category, std::uint64_t seed, std::size_t dim);

struct DatasetSpec {
  std::vector<std::string> categories;
  std::size_t per_category = 2000;

  std::size_t size() const { return categories.size() * per_category; }
};

DatasetSpec default_dataset_spec();

// Sample `index` of the stream derived from (spec, seed): category cycles
// through the list, the image seed is derived per index. Indices past
// spec.size() are valid and serve as held-out data.
struct DatasetSample {
  Tensor image;
  std::size_t label;
};
DatasetSample dataset_sample(const DatasetSpec& spec, std::uint64_t seed, std::size_t index,
                             std::size_t dim);

}  // namespace redstore
