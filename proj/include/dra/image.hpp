#pragma once

#include "dra/tensor.hpp"

namespace dra {

// Images are Tensors of shape [3,h,w] with values in [0,1].
using ImageTensor = Tensor;

// Throws std::invalid_argument if t is not a finite [3,h,w] tensor in [0,1].
void check_image(const ImageTensor& t);

ImageTensor make_image(std::size_t h, std::size_t w, double value = 0.0);

// Bilinear resampling with half-pixel center alignment. A scale of 1.0
// reproduces the input exactly.
ImageTensor bilinear_resize(const ImageTensor& img, std::size_t out_h, std::size_t out_w);

// Channel means over all pixels (used by tests and the normality oracle).
double image_mean(const ImageTensor& img);

} // namespace dra
