#pragma once

#include <array>
#include <string>
#include <vector>

#include "facekit/image.hpp"

namespace facekit::align {

// Five facial key points in pixel coordinates:
// left eye, right eye, nose tip, left mouth corner, right mouth corner.
struct LandmarkSet {
    std::array<std::array<double, 2>, 5> points{};

    double x(int i) const { return points[i][0]; }
    double y(int i) const { return points[i][1]; }
};

// 2D similarity: p -> scale * R(angle) * p + t. The linear block is
// [a -b; b a] with a = s*cos(angle), b = s*sin(angle); its determinant is
// s^2 > 0, so the map is always a proper (reflection-free) similarity.
struct SimilarityTransform {
    double a = 1.0, b = 0.0;   // scale * (cos, sin)
    double tx = 0.0, ty = 0.0;

    double scale() const;
    double rotation() const;  // radians in (-pi, pi]

    std::array<double, 2> apply(double x, double y) const {
        return {a * x - b * y + tx, b * x + a * y + ty};
    }
    LandmarkSet apply(const LandmarkSet& lm) const;

    SimilarityTransform inverse() const;

    static SimilarityTransform from_parts(double scale, double angle_rad,
                                          double tx, double ty);
};

// Least-squares similarity registration mapping src onto dst (the classic
// closed-form point-set solution). The returned transform attains the global
// minimum of sum ||T(src_i) - dst_i||^2 over all similarity transforms.
// Throws ValidationError when the source points are coincident or collinear;
// the fit is ill-conditioned there.
SimilarityTransform estimate_similarity_transform(const LandmarkSet& src,
                                                  const LandmarkSet& dst);

double mean_squared_residual(const SimilarityTransform& t,
                             const LandmarkSet& src, const LandmarkSet& dst);

constexpr int kAlignedSize = 112;

// Canonical 5-point positions on the 112x112 crop. This is a toolkit
// convention (the usual InsightFace-style layout), not a measured value;
// override per dataset when a different template is wanted.
LandmarkSet default_template();

// Resamples the source image onto a kAlignedSize square grid. `out_to_src`
// maps output pixel coordinates into the source image; callers aligning a
// face pass estimate_similarity_transform(landmarks, template).inverse().
// Bilinear sampling, out-of-bounds pixels fill with 0.
// Throws on a non-invertible (zero-scale) transform.
Image warp_and_crop(const Image& src, const SimilarityTransform& out_to_src,
                    int out_size = kAlignedSize);

// Convenience: estimate + warp in one step; returns the aligned crop and the
// forward (source -> template) transform used.
struct AlignedFace {
    Image image;                 // out_size x out_size, values in [0,1]
    SimilarityTransform to_template;
    std::string source_path;
};

AlignedFace align_face(const Image& src, const LandmarkSet& landmarks,
                       const LandmarkSet& template_points,
                       int out_size = kAlignedSize);

// Per-channel affine map x -> (x - 0.5) / 0.5 taking [0,1] pixels to [-1,1].
// Input pixels must already be in [0,1]; anything else is rejected.
Image normalize_image(const Image& aligned);

// Landmark CSV: header "path,x1,y1,...,x5,y5", one row per image.
struct LandmarkFile {
    std::vector<std::pair<std::string, LandmarkSet>> rows;
};

LandmarkFile read_landmark_csv(const std::string& path);
void write_landmark_csv(const LandmarkFile& file, const std::string& path);

}  // namespace facekit::align
