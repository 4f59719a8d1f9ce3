#include "facekit/align.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "facekit/errors.hpp"

namespace facekit::align {

double SimilarityTransform::scale() const { return std::hypot(a, b); }

double SimilarityTransform::rotation() const { return std::atan2(b, a); }

LandmarkSet SimilarityTransform::apply(const LandmarkSet& lm) const {
    LandmarkSet out;
    for (int i = 0; i < 5; ++i) {
        const auto p = apply(lm.x(i), lm.y(i));
        out.points[i] = {p[0], p[1]};
    }
    return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
    const double s2 = a * a + b * b;
    if (s2 < 1e-24)
        throw ValidationError("similarity transform: zero scale, not invertible");
    SimilarityTransform inv;
    inv.a = a / s2;
    inv.b = -b / s2;
    inv.tx = -(inv.a * tx - inv.b * ty);
    inv.ty = -(inv.b * tx + inv.a * ty);
    return inv;
}

SimilarityTransform SimilarityTransform::from_parts(double scale,
                                                    double angle_rad, double tx,
                                                    double ty) {
    SimilarityTransform t;
    t.a = scale * std::cos(angle_rad);
    t.b = scale * std::sin(angle_rad);
    t.tx = tx;
    t.ty = ty;
    return t;
}

SimilarityTransform estimate_similarity_transform(const LandmarkSet& src,
                                                  const LandmarkSet& dst) {
    for (int i = 0; i < 5; ++i)
        if (!std::isfinite(src.x(i)) || !std::isfinite(src.y(i)) ||
            !std::isfinite(dst.x(i)) || !std::isfinite(dst.y(i)))
            throw ValidationError("similarity fit: non-finite landmark");

    double sx = 0, sy = 0, dx = 0, dy = 0;
    for (int i = 0; i < 5; ++i) {
        sx += src.x(i);
        sy += src.y(i);
        dx += dst.x(i);
        dy += dst.y(i);
    }
    sx /= 5;
    sy /= 5;
    dx /= 5;
    dy /= 5;

    // With the linear block parameterized as [a -b; b a] the objective is an
    // unconstrained convex quadratic in (a, b, tx, ty); the normal equations
    // below give the global least-squares optimum directly.
    double num_a = 0, num_b = 0, denom = 0;
    double cxx = 0, cxy = 0, cyy = 0;  // centered source second moments
    for (int i = 0; i < 5; ++i) {
        const double px = src.x(i) - sx;
        const double py = src.y(i) - sy;
        const double qx = dst.x(i) - dx;
        const double qy = dst.y(i) - dy;
        num_a += px * qx + py * qy;
        num_b += px * qy - py * qx;
        denom += px * px + py * py;
        cxx += px * px;
        cxy += px * py;
        cyy += py * py;
    }

    if (denom < 1e-18)
        throw ValidationError("similarity fit: coincident source points");
    // Collinearity check via the smaller eigenvalue of the source scatter.
    const double tr = cxx + cyy;
    const double det = cxx * cyy - cxy * cxy;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double lambda_min = tr / 2.0 - disc;
    if (lambda_min <= 1e-12 * tr)
        throw ValidationError("similarity fit: collinear source points");

    SimilarityTransform t;
    t.a = num_a / denom;
    t.b = num_b / denom;
    t.tx = dx - (t.a * sx - t.b * sy);
    t.ty = dy - (t.b * sx + t.a * sy);
    return t;
}

double mean_squared_residual(const SimilarityTransform& t,
                             const LandmarkSet& src, const LandmarkSet& dst) {
    double acc = 0;
    for (int i = 0; i < 5; ++i) {
        const auto p = t.apply(src.x(i), src.y(i));
        const double ex = p[0] - dst.x(i);
        const double ey = p[1] - dst.y(i);
        acc += ex * ex + ey * ey;
    }
    return acc / 5.0;
}

LandmarkSet default_template() {
    // The common 112x112 five-point layout used by margin-loss face
    // recognition pipelines.
    LandmarkSet t;
    t.points = {{{38.2946, 51.6963},
                 {73.5318, 51.5014},
                 {56.0252, 71.7366},
                 {41.5493, 92.3655},
                 {70.7299, 92.2041}}};
    return t;
}

Image warp_and_crop(const Image& src, const SimilarityTransform& out_to_src,
                    int out_size) {
    if (out_to_src.scale() < 1e-12)
        throw ValidationError("warp: non-invertible transform (zero scale)");
    Image out(out_size, out_size);
    for (int y = 0; y < out_size; ++y)
        for (int x = 0; x < out_size; ++x) {
            const auto p = out_to_src.apply(static_cast<double>(x),
                                            static_cast<double>(y));
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = bilinear_sample(src, static_cast<float>(p[0]),
                                                  static_cast<float>(p[1]), c);
        }
    return out;
}

AlignedFace align_face(const Image& src, const LandmarkSet& landmarks,
                       const LandmarkSet& template_points, int out_size) {
    AlignedFace out;
    out.to_template = estimate_similarity_transform(landmarks, template_points);
    out.image = warp_and_crop(src, out.to_template.inverse(), out_size);
    return out;
}

Image normalize_image(const Image& aligned) {
    Image out(aligned.width, aligned.height);
    for (std::size_t i = 0; i < aligned.data.size(); ++i) {
        const float v = aligned.data[i];
        if (!(v >= 0.f && v <= 1.f))
            throw ValidationError("normalize: pixel value " + std::to_string(v) +
                                  " outside [0,1]");
        out.data[i] = (v - 0.5f) / 0.5f;
    }
    return out;
}

LandmarkFile read_landmark_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw RuntimeError("cannot open: " + path);
    LandmarkFile file;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(f, line)) throw ValidationError("landmarks: empty file");
    ++line_no;
    if (line.ends_with("\r")) line.pop_back();
    if (line != "path,x1,y1,x2,y2,x3,y3,x4,y4,x5,y5")
        throw ParseError("landmarks: bad header '" + line + "'", line_no);
    while (std::getline(f, line)) {
        ++line_no;
        if (line.ends_with("\r")) line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        if (!std::getline(ss, field, ','))
            throw ParseError("landmarks: missing path", line_no);
        LandmarkSet lm;
        for (int i = 0; i < 10; ++i) {
            std::string tok;
            if (!std::getline(ss, tok, ','))
                throw ParseError("landmarks: expected 10 coordinates", line_no);
            try {
                lm.points[i / 2][i % 2] = std::stod(tok);
            } catch (const std::exception&) {
                throw ParseError("landmarks: bad number '" + tok + "'", line_no);
            }
        }
        std::string extra;
        if (std::getline(ss, extra, ','))
            throw ParseError("landmarks: trailing fields", line_no);
        file.rows.emplace_back(field, lm);
    }
    return file;
}

void write_landmark_csv(const LandmarkFile& file, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw RuntimeError("cannot open for writing: " + path);
    f << "path,x1,y1,x2,y2,x3,y3,x4,y4,x5,y5\n";
    f.setf(std::ios::fmtflags(0), std::ios::floatfield);
    f.precision(17);
    for (const auto& [p, lm] : file.rows) {
        f << p;
        for (int i = 0; i < 5; ++i) f << ',' << lm.x(i) << ',' << lm.y(i);
        f << '\n';
    }
}

}  // namespace facekit::align
