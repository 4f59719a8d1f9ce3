#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace facekit::verify {

// One labeled pair in the standard verification-protocol layout. Image refs
// are "<name>_<index zero-padded to 4>" strings.
struct VerificationPair {
    std::string ref_a;
    std::string ref_b;
    bool same = false;
    int fold = 0;
};

std::string image_ref(const std::string& name, int index);

// Standard pairs file: header "<folds> <pairs-per-class-per-fold>", then per
// fold a block of genuine 3-token lines followed by impostor 4-token lines.
// Fold membership is by block order.
std::vector<VerificationPair> parse_pairs_file(const std::string& path);
std::vector<VerificationPair> parse_pairs_text(const std::string& text);
void write_pairs_file(const std::vector<VerificationPair>& pairs,
                      const std::string& path);

// Seeded pair construction over a closed identity set (1-based sample
// indices, LFW-style). Genuine pairs never repeat an (image, image) pair
// within the file; impostor pairs draw distinct identities.
std::vector<VerificationPair> generate_pairs(
    const std::vector<std::string>& names, int samples_per_name, int folds,
    int pairs_per_class_per_fold, std::uint64_t seed);

struct DistanceRecord {
    bool same = false;
    int fold = 0;
    double distance = 0.0;
};

using EmbeddingTable = std::map<std::string, Eigen::VectorXf>;

// Euclidean distance between the (already L2-normalized) embeddings of each
// pair. Missing embeddings are an error naming the image ref. With `cosine`
// the distance is 1 - cos; both are monotone in the angle.
enum class Metric { L2, Cosine };

std::vector<DistanceRecord> pair_distances(
    const std::vector<VerificationPair>& pairs, const EmbeddingTable& embeddings,
    Metric metric = Metric::L2);

// Fraction of records where (distance < threshold) matches the same label.
double threshold_accuracy(const std::vector<DistanceRecord>& records,
                          double threshold);

// Candidate-threshold policy for the per-fold sweep.
struct SweepPolicy {
    enum class Mode {
        Grid,       // fixed grid over [lo, hi]
        Midpoints,  // midpoints of adjacent distinct train distances
    };
    Mode mode = Mode::Grid;
    double grid_lo = 0.0;
    double grid_hi = 2.0;  // L2 range on normalized embeddings
    double grid_step = 0.001;
};

struct FoldResult {
    int fold = 0;
    double threshold = 0.0;
    double accuracy = 0.0;
};

struct AccuracyReport {
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // population std over folds
};

// The k-fold protocol: for each fold, pick the accuracy-maximizing threshold
// on the other folds (ties resolve to the smallest threshold), then score
// the held-out fold at that threshold.
AccuracyReport ten_fold_accuracy(const std::vector<DistanceRecord>& records,
                                 const SweepPolicy& policy = {},
                                 int expected_folds = 10);

nlohmann::json report_to_json(const AccuracyReport& report);

// Embedding cache: binary file of (id, D floats) records plus a text index
// "<id>\t<byte-offset>" with a "D" header line.
void write_embedding_cache(const EmbeddingTable& table, int dim,
                           const std::string& bin_path,
                           const std::string& index_path);
EmbeddingTable read_embedding_cache(const std::string& bin_path,
                                    const std::string& index_path);

}  // namespace facekit::verify
