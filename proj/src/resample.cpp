// SPDX-License-Identifier: Apache-2.0
#include "segrefine/resample.hpp"

namespace segrefine {

SoftMask resample_mask(const SoftMask& mask, std::size_t target_h, std::size_t target_w) {
    if (target_h == mask.height() && target_w == mask.width()) return mask;
    return SoftMask(target_h, target_w,
                    resample_nearest<float>(mask.values(), mask.height(), mask.width(), 1,
                                            target_h, target_w));
}

BinaryMask resample_mask(const BinaryMask& mask, std::size_t target_h, std::size_t target_w) {
    if (target_h == mask.height() && target_w == mask.width()) return mask;
    return BinaryMask(target_h, target_w,
                      resample_nearest<std::uint8_t>(mask.bits(), mask.height(), mask.width(), 1,
                                                     target_h, target_w));
}

ImageTensor resample_image(const ImageTensor& img, std::size_t target_h, std::size_t target_w) {
    if (target_h == img.height() && target_w == img.width()) return img;
    return ImageTensor(target_h, target_w, img.channels(),
                       resample_nearest<double>(img.data(), img.height(), img.width(),
                                                img.channels(), target_h, target_w));
}

}  // namespace segrefine
