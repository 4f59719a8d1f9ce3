#include "facekit/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <jpeglib.h>

#include "facekit/errors.hpp"

namespace facekit {

float bilinear_sample(const Image& img, float x, float y, int c) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const float fx = x - static_cast<float>(x0);
    const float fy = y - static_cast<float>(y0);

    auto tap = [&](int xi, int yi) -> float {
        if (xi < 0 || yi < 0 || xi >= img.width || yi >= img.height) return 0.f;
        return img.at(xi, yi, c);
    };

    const float v00 = tap(x0, y0);
    const float v10 = tap(x0 + 1, y0);
    const float v01 = tap(x0, y0 + 1);
    const float v11 = tap(x0 + 1, y0 + 1);
    return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) +
           v01 * (1 - fx) * fy + v11 * fx * fy;
}

Image resize_bilinear(const Image& img, int new_w, int new_h) {
    Image out(new_w, new_h);
    // Align pixel centers of the two grids (the usual half-pixel convention).
    const float sx = static_cast<float>(img.width) / new_w;
    const float sy = static_cast<float>(img.height) / new_h;
    for (int y = 0; y < new_h; ++y) {
        const float src_y =
            std::clamp((y + 0.5f) * sy - 0.5f, 0.f, img.height - 1.f);
        for (int x = 0; x < new_w; ++x) {
            const float src_x =
                std::clamp((x + 0.5f) * sx - 0.5f, 0.f, img.width - 1.f);
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = bilinear_sample(img, src_x, src_y, c);
        }
    }
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
    return out;
}

Image to_grayscale(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const float g = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) +
                            0.114f * img.at(x, y, 2);
            out.at(x, y, 0) = out.at(x, y, 1) = out.at(x, y, 2) = g;
        }
    return out;
}

namespace {

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

}  // namespace

Image gaussian_blur(const Image& img, float sigma) {
    if (sigma <= 0.f) return img;
    const int radius = static_cast<int>(std::ceil(3.f * sigma));
    std::vector<float> kernel(2 * radius + 1);
    float sum = 0.f;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5f * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (float& k : kernel) k /= sum;

    Image tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           img.at(reflect101(x + i, img.width), y, c);
                tmp.at(x, y, c) = acc;
            }
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           tmp.at(x, reflect101(y + i, img.height), c);
                out.at(x, y, c) = acc;
            }
    return out;
}

Image motion_blur(const Image& img, int length, float angle_rad) {
    if (length <= 1) return img;
    const float dx = std::cos(angle_rad);
    const float dy = std::sin(angle_rad);
    const float w = 1.f / static_cast<float>(length);
    const float half = (length - 1) / 2.f;

    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.f;
                for (int i = 0; i < length; ++i) {
                    const float t = static_cast<float>(i) - half;
                    const int xi =
                        reflect101(x + static_cast<int>(std::lround(t * dx)),
                                   img.width);
                    const int yi =
                        reflect101(y + static_cast<int>(std::lround(t * dy)),
                                   img.height);
                    acc += img.at(xi, yi, c);
                }
                out.at(x, y, c) = acc * w;
            }
    return out;
}

// --------------------------------------------------------------------------
// JPEG via libjpeg. Errors are routed through setjmp so a corrupt stream
// surfaces as an exception instead of exit().
// --------------------------------------------------------------------------

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

std::vector<std::uint8_t> to_bytes(const Image& img) {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(img.width) *
                                  img.height * 3);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.data[i]);
    return buf;
}

}  // namespace

std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality) {
    jpeg_compress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;

    unsigned char* out_buf = nullptr;
    unsigned long out_size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        if (out_buf) free(out_buf);
        throw RuntimeError("jpeg: encoding failed");
    }

    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &out_buf, &out_size);
    cinfo.image_width = static_cast<JDIMENSION>(img.width);
    cinfo.image_height = static_cast<JDIMENSION>(img.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, std::clamp(quality, 1, 100), TRUE);
    jpeg_start_compress(&cinfo, TRUE);

    const auto bytes = to_bytes(img);
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(&bytes[cinfo.next_scanline * stride]);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);

    std::vector<std::uint8_t> result(out_buf, out_buf + out_size);
    free(out_buf);
    return result;
}

Image decode_jpeg(const std::uint8_t* bytes, std::size_t size) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw RuntimeError("jpeg: decoding failed");
    }

    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes, static_cast<unsigned long>(size));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    Image img(static_cast<int>(cinfo.output_width),
              static_cast<int>(cinfo.output_height));
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        const int y = static_cast<int>(cinfo.output_scanline);
        JSAMPROW rp = row.data();
        jpeg_read_scanlines(&cinfo, &rp, 1);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = row[x * 3 + c] / 255.f;
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

Image jpeg_roundtrip(const Image& img, int quality) {
    const auto bytes = encode_jpeg(img, quality);
    return decode_jpeg(bytes.data(), bytes.size());
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open for writing: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    const auto bytes = to_bytes(img);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw RuntimeError("write failed: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw ValidationError("not a P6 PPM: " + path);

    auto next_int = [&]() -> int {
        // Skip whitespace and '#' comments between header tokens.
        int ch = f.get();
        while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '#') {
            if (ch == '#')
                while (ch != '\n' && ch != EOF) ch = f.get();
            ch = f.get();
        }
        int v = 0;
        bool any = false;
        while (ch >= '0' && ch <= '9') {
            v = v * 10 + (ch - '0');
            any = true;
            ch = f.get();
        }
        if (!any) throw ValidationError("malformed PPM header: " + path);
        return v;
    };

    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw ValidationError("unsupported PPM maxval: " + path);

    Image img(w, h);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw ValidationError("truncated PPM: " + path);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.data[i] = bytes[i] / 255.f;
    return img;
}

Image read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open: " + path);
    unsigned char magic[2] = {0, 0};
    f.read(reinterpret_cast<char*>(magic), 2);
    f.close();
    if (magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
    if (magic[0] == 0xFF && magic[1] == 0xD8) {
        std::ifstream jf(path, std::ios::binary);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(jf)),
                                        std::istreambuf_iterator<char>());
        return decode_jpeg(bytes.data(), bytes.size());
    }
    throw ValidationError("unrecognized image format: " + path);
}

}  // namespace facekit
