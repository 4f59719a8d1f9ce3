#pragma once

#include <string>
#include <vector>

#include "facekit/align.hpp"
#include "facekit/image.hpp"
#include "facekit/sampler.hpp"

namespace facekit::toy {

// Procedural stand-in for an external renderer, for CPU-scale end-to-end
// runs. Faces are parametric cartoons: identity traits (from the identity
// seed and trait ids) set the geometry and colors, the scene record drives
// pose, lighting, expression, accessories. Output is deterministic in the
// manifest record alone.
struct RenderResult {
    Image image;
    align::LandmarkSet landmarks;  // exact positions of the drawn features
};

RenderResult render_scene(const sampler::SceneConfig& scene);

// Renders every record into out_dir/<identity>/<identity>_<k>.ppm (k =
// sample_index + 1, zero-padded to 4) and writes out_dir/landmarks.csv with
// one row per image. Returns the landmark table it wrote.
align::LandmarkFile render_manifest(const sampler::DatasetManifest& manifest,
                                    const std::string& out_dir);

}  // namespace facekit::toy
