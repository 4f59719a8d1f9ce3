#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace facekit {

// Interleaved RGB image with float pixels in [0, 1]. All pixel math in the
// toolkit happens on this representation; 8-bit quantization only occurs at
// file boundaries (PPM/JPEG).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // size = width * height * 3, RGB interleaved

    Image() = default;
    Image(int w, int h, float fill = 0.f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    float& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height;
    }
};

// Bilinear sample at continuous coordinates; pixel centers sit on integer
// coordinates. Out-of-bounds reads return 0 (zero fill).
float bilinear_sample(const Image& img, float x, float y, int c);

Image resize_bilinear(const Image& img, int new_w, int new_h);
Image flip_horizontal(const Image& img);
Image to_grayscale(const Image& img);

// Separable Gaussian blur, reflect-101 borders, radius = ceil(3*sigma).
Image gaussian_blur(const Image& img, float sigma);
// Directional box kernel of `length` taps at `angle_rad`, reflect-101 borders.
Image motion_blur(const Image& img, int length, float angle_rad);

// 8-bit quantized JPEG round trip in memory at the given quality (1-100).
Image jpeg_roundtrip(const Image& img, int quality);

std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality);
Image decode_jpeg(const std::uint8_t* bytes, std::size_t size);

// PPM (P6, 8-bit) is the toolkit's native lossless format.
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

// Reads PPM or JPEG based on file magic.
Image read_image(const std::string& path);

inline std::uint8_t to_byte(float v) {
    float s = v * 255.f + 0.5f;
    if (s < 0.f) s = 0.f;
    if (s > 255.f) s = 255.f;
    return static_cast<std::uint8_t>(s);
}

}  // namespace facekit
