#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "facekit/augment.hpp"
#include "facekit/image.hpp"
#include "facekit/margin.hpp"
#include "facekit/net.hpp"

namespace facekit::train {

using net::Mat;

struct TrainConfig {
    int batch_size = 256;
    int epochs = 24;
    std::vector<int> lr_milestones = {10, 18, 22};
    double lr_decay = 0.1;
    // Optimizer defaults are the usual recipe for this loss family; none of
    // them are published values, change freely via config.
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    bool augment_enabled = true;
    augment::AugmentationConfig augmentation;

    void validate() const;
};

// base_lr * decay^(number of milestones <= epoch).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// ---------------------------------------------------------------------------
// Training data. Images are aligned [0,1] crops; labels are dense class ids.
// ---------------------------------------------------------------------------

class TrainingSet {
public:
    virtual ~TrainingSet() = default;
    virtual std::size_t size() const = 0;
    virtual int num_classes() const = 0;
    virtual const Image& image(std::size_t idx) const = 0;
    virtual int label(std::size_t idx) const = 0;
};

class MemoryTrainingSet : public TrainingSet {
public:
    void add(Image img, int label);
    std::size_t size() const override { return images_.size(); }
    int num_classes() const override { return num_classes_; }
    const Image& image(std::size_t idx) const override { return images_[idx]; }
    int label(std::size_t idx) const override { return labels_[idx]; }

private:
    std::vector<Image> images_;
    std::vector<int> labels_;
    int num_classes_ = 0;
};

// Loads a folder-per-identity directory of aligned crops (PPM/JPEG). Class
// ids are assigned by sorted folder name. `max_identities` > 0 keeps only
// the first k folders after a seeded shuffle (used by the finetune sweep).
MemoryTrainingSet load_image_directory(const std::string& dir,
                                       int max_identities = 0,
                                       std::uint64_t subset_seed = 0);

// ---------------------------------------------------------------------------
// Model = encoder + margin head.
// ---------------------------------------------------------------------------

struct Model {
    net::EncoderSpec encoder_spec;
    std::unique_ptr<net::Encoder<float>> encoder;
    margin::MarginConfig margin_cfg;
    Mat<float> head;  // raw class weights, C x D; normalized at use

    int num_classes() const { return static_cast<int>(head.rows()); }
};

Model make_model(const net::EncoderSpec& spec,
                 const margin::MarginConfig& margin_cfg, int num_classes,
                 std::uint64_t seed);

// Drops the old head entirely and installs a freshly initialized one sized
// to the new class count. No rows are carried over.
void replace_head(Model& model, int num_classes, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Optimizer & parameter groups.
// ---------------------------------------------------------------------------

struct ParamGroup {
    std::string name;  // "backbone" or "head"
    double lr = 0.1;   // group base rate; the schedule multiplies on top
};

std::vector<ParamGroup> make_scratch_param_groups(double base_lr);
// Backbone at base/100, head at base/10 - the finetune policy.
std::vector<ParamGroup> make_finetune_param_groups(double base_lr);

// group.lr * decay^(number of milestones <= epoch).
double group_lr_at_epoch(const ParamGroup& group, const TrainConfig& cfg,
                         int epoch);

struct OptimizerState {
    // Momentum buffers: one per encoder parameter (collect order), then one
    // for the head.
    std::vector<Mat<float>> momentum;
};

// ---------------------------------------------------------------------------
// Fit.
// ---------------------------------------------------------------------------

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;  // backbone group rate after the schedule
    double loss = 0.0;
};

struct FitOptions {
    std::string run_dir;  // empty = no persistence
    int checkpoint_every = 1;
    nlohmann::json config_snapshot;  // written into checkpoints when present
};

struct FitResult {
    std::vector<EpochMetrics> history;
};

// Runs epochs [start_epoch, cfg.epochs). Deterministic for a fixed config
// and seed: data order reshuffles per epoch from an epoch-derived seed and
// augmentation streams derive from (seed, epoch, sample), so a resumed run
// continues bit-for-bit where the interrupted one left off.
FitResult fit(Model& model, OptimizerState& opt, const TrainingSet& data,
              const TrainConfig& cfg, const std::vector<ParamGroup>& groups,
              const FitOptions& opts = {}, int start_epoch = 0);

// Eval-mode embeddings, L2-normalized rows (no augmentation here, ever).
Mat<float> extract_embeddings(Model& model, const std::vector<Image>& images,
                              int batch_size = 64);

// ---------------------------------------------------------------------------
// Checkpoints: binary file, atomic write-then-rename. Exact float bits
// round-trip, so resume reproduces the uninterrupted run.
// ---------------------------------------------------------------------------

struct Checkpoint {
    Model model;
    OptimizerState opt;
    TrainConfig train_cfg;
    int epoch = 0;  // epochs completed
    nlohmann::json config_snapshot;
};

void save_checkpoint(Model& model, const OptimizerState& opt,
                     const TrainConfig& cfg, int epoch,
                     const nlohmann::json& config_snapshot,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json encoder_spec_to_json(const net::EncoderSpec& spec);
net::EncoderSpec encoder_spec_from_json(const nlohmann::json& j);
nlohmann::json augmentation_to_json(const augment::AugmentationConfig& cfg);
augment::AugmentationConfig augmentation_from_json(const nlohmann::json& j);
nlohmann::json margin_config_to_json(const margin::MarginConfig& cfg);
margin::MarginConfig margin_config_from_json(const nlohmann::json& j);

}  // namespace facekit::train
