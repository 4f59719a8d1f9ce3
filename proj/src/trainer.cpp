#include "facekit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>

#include "facekit/errors.hpp"

namespace facekit::train {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValidationError("train: batch_size < 1");
    if (epochs < 0) throw ValidationError("train: epochs < 0");
    if (lr_decay <= 0.0 || lr_decay >= 1.0)
        throw ValidationError("train: lr_decay outside (0,1)");
    if (base_lr < 0.0) throw ValidationError("train: base_lr < 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValidationError("train: momentum outside [0,1)");
    if (weight_decay < 0.0) throw ValidationError("train: weight_decay < 0");
    int prev = -1;
    for (int m : lr_milestones) {
        if (m <= prev)
            throw ValidationError("train: milestones must be strictly increasing");
        if (m >= epochs && epochs > 0)
            throw ValidationError("train: milestone " + std::to_string(m) +
                                  " >= epochs");
        prev = m;
    }
    augmentation.validate();
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 0 || epoch >= std::max(cfg.epochs, 1))
        throw ValidationError("lr_at_epoch: epoch " + std::to_string(epoch) +
                              " out of range");
    double lr = cfg.base_lr;
    for (int m : cfg.lr_milestones)
        if (m <= epoch) lr *= cfg.lr_decay;
    return lr;
}

double group_lr_at_epoch(const ParamGroup& group, const TrainConfig& cfg,
                         int epoch) {
    double lr = group.lr;
    for (int m : cfg.lr_milestones)
        if (m <= epoch) lr *= cfg.lr_decay;
    return lr;
}

std::vector<ParamGroup> make_scratch_param_groups(double base_lr) {
    return {{"backbone", base_lr}, {"head", base_lr}};
}

std::vector<ParamGroup> make_finetune_param_groups(double base_lr) {
    return {{"backbone", base_lr / 100.0}, {"head", base_lr / 10.0}};
}

// ---------------------------------------------------------------------------
// Data.
// ---------------------------------------------------------------------------

void MemoryTrainingSet::add(Image img, int label) {
    if (label < 0) throw ValidationError("training set: negative label");
    images_.push_back(std::move(img));
    labels_.push_back(label);
    num_classes_ = std::max(num_classes_, label + 1);
}

MemoryTrainingSet load_image_directory(const std::string& dir,
                                       int max_identities,
                                       std::uint64_t subset_seed) {
    if (!fs::is_directory(dir))
        throw ValidationError("image directory not found: " + dir);
    std::vector<std::string> folders;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) folders.push_back(e.path().filename().string());
    std::sort(folders.begin(), folders.end());
    if (max_identities > 0 &&
        static_cast<std::size_t>(max_identities) < folders.size()) {
        Rng rng(derive_seed(subset_seed, "identity-subset"));
        for (std::size_t i = folders.size() - 1; i > 0; --i)
            std::swap(folders[i], folders[rng.uniform_index(i + 1)]);
        folders.resize(static_cast<std::size_t>(max_identities));
        std::sort(folders.begin(), folders.end());
    }
    if (folders.empty())
        throw ValidationError("image directory has no identity folders: " + dir);

    MemoryTrainingSet set;
    int label = 0;
    for (const auto& f : folders) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(dir) / f))
            if (e.is_regular_file()) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& file : files) set.add(read_image(file), label);
        ++label;
    }
    return set;
}

// ---------------------------------------------------------------------------
// Model.
// ---------------------------------------------------------------------------

Model make_model(const net::EncoderSpec& spec,
                 const margin::MarginConfig& margin_cfg, int num_classes,
                 std::uint64_t seed) {
    Model m;
    m.encoder_spec = spec;
    m.encoder = std::make_unique<net::Encoder<float>>(
        spec, derive_seed(seed, "encoder"));
    m.margin_cfg = margin_cfg;
    if (num_classes > 0) replace_head(m, num_classes, seed);
    return m;
}

void replace_head(Model& model, int num_classes, std::uint64_t seed) {
    if (num_classes < 1) throw ValidationError("head: num_classes < 1");
    model.head.resize(num_classes, model.encoder_spec.embedding_dim);
    Rng rng(derive_seed(seed, "head"));
    for (Eigen::Index i = 0; i < model.head.size(); ++i)
        model.head.data()[i] = static_cast<float>(rng.normal(0.0, 0.01));
}

// ---------------------------------------------------------------------------
// Row normalization with gradient.
// ---------------------------------------------------------------------------

namespace {

struct RowNormCache {
    Mat<float> normalized;
    std::vector<float> norms;
};

RowNormCache normalize_rows_cached(const Mat<float>& x) {
    RowNormCache c;
    c.normalized = x;
    c.norms.resize(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        float n = x.row(i).norm();
        if (n < 1e-12f) n = 1e-12f;
        c.norms[static_cast<std::size_t>(i)] = n;
        c.normalized.row(i) /= n;
    }
    return c;
}

// d/dx of x/|x|: (g - xhat * (xhat . g)) / |x|
Mat<float> normalize_rows_backward(const RowNormCache& c,
                                   const Mat<float>& dnormalized) {
    Mat<float> dx = dnormalized;
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
        const float dot = c.normalized.row(i).dot(dnormalized.row(i));
        dx.row(i) =
            (dnormalized.row(i) - c.normalized.row(i) * dot) /
            c.norms[static_cast<std::size_t>(i)];
    }
    return dx;
}

void check_dense_labels(const TrainingSet& data) {
    const int c = data.num_classes();
    std::vector<char> seen(static_cast<std::size_t>(c), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int y = data.label(i);
        if (y < 0 || y >= c)
            throw ValidationError("fit: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(c) + ")");
        seen[static_cast<std::size_t>(y)] = 1;
    }
    for (int y = 0; y < c; ++y)
        if (!seen[static_cast<std::size_t>(y)])
            throw ValidationError("fit: class " + std::to_string(y) +
                                  " has no samples (labels must be dense)");
}

void atomic_write(const std::string& path,
                  const std::function<void(std::ofstream&)>& writer) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw RuntimeError("cannot open for writing: " + tmp);
        writer(f);
        f.flush();
        if (!f) throw RuntimeError("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

}  // namespace

// ---------------------------------------------------------------------------
// Fit.
// ---------------------------------------------------------------------------

FitResult fit(Model& model, OptimizerState& opt, const TrainingSet& data,
              const TrainConfig& cfg, const std::vector<ParamGroup>& groups,
              const FitOptions& opts, int start_epoch) {
    cfg.validate();
    model.margin_cfg.validate();
    if (groups.size() != 2 || groups[0].name != "backbone" ||
        groups[1].name != "head")
        throw ValidationError("fit: expected [backbone, head] param groups");
    if (data.size() == 0) throw ValidationError("fit: empty training set");
    check_dense_labels(data);
    if (model.head.rows() != data.num_classes())
        throw ValidationError(
            "fit: head sized for " + std::to_string(model.head.rows()) +
            " classes, data has " + std::to_string(data.num_classes()));

    auto params = model.encoder->parameters();
    if (opt.momentum.empty()) {
        for (auto* p : params)
            opt.momentum.push_back(
                Mat<float>::Zero(p->value.rows(), p->value.cols()));
        opt.momentum.push_back(
            Mat<float>::Zero(model.head.rows(), model.head.cols()));
    }
    if (opt.momentum.size() != params.size() + 1)
        throw ValidationError("fit: optimizer state does not match model");

    std::ofstream metrics;
    if (!opts.run_dir.empty()) {
        fs::create_directories(opts.run_dir);
        fs::create_directories(fs::path(opts.run_dir) / "checkpoints");
        metrics.open(fs::path(opts.run_dir) / "metrics.jsonl",
                     start_epoch == 0 ? std::ios::trunc : std::ios::app);
    }

    const int input_size = model.encoder_spec.input_size;
    const std::size_t n = data.size();
    FitResult result;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr_backbone = group_lr_at_epoch(groups[0], cfg, epoch);
        const double lr_head = group_lr_at_epoch(groups[1], cfg, epoch);

        // Per-epoch derived order; resuming an interrupted run sees the
        // same permutation.
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, "order", static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t batch_start = 0; batch_start < n;
             batch_start += static_cast<std::size_t>(cfg.batch_size)) {
            const int bs = static_cast<int>(
                std::min<std::size_t>(cfg.batch_size, n - batch_start));
            net::Tensor4<float> input(bs, 3, input_size, input_size);
            std::vector<int> labels(static_cast<std::size_t>(bs));
            for (int i = 0; i < bs; ++i) {
                const std::size_t idx = order[batch_start + i];
                const Image& src = data.image(idx);
                if (src.width != input_size || src.height != input_size)
                    throw ValidationError("fit: image size mismatch");
                if (cfg.augment_enabled) {
                    const std::uint64_t aug_seed = derive_seed(
                        cfg.seed, "augment",
                        static_cast<std::uint64_t>(epoch) * n + idx);
                    net::fill_input(input, i,
                                    augment::augment(src, cfg.augmentation,
                                                     aug_seed));
                } else {
                    net::fill_input(input, i, src);
                }
                labels[static_cast<std::size_t>(i)] = data.label(idx);
            }

            for (auto* p : params) p->zero_grad();

            Mat<float> emb_raw = model.encoder->forward(input, true);
            RowNormCache emb_n = normalize_rows_cached(emb_raw);
            RowNormCache head_n = normalize_rows_cached(model.head);

            Mat<float> d_emb_n, d_head_n;
            const float loss = margin::arcface_loss<float>(
                emb_n.normalized, head_n.normalized, labels, model.margin_cfg,
                &d_emb_n, &d_head_n);

            if (!std::isfinite(loss)) {
                const float in_mean = input.data.mean();
                const float in_max = input.data.cwiseAbs().maxCoeff();
                const float emb_max = emb_raw.cwiseAbs().maxCoeff();
                throw RuntimeError(
                    "fit: non-finite loss at epoch " + std::to_string(epoch) +
                    ", step " + std::to_string(batch_start / cfg.batch_size) +
                    " (batch mean " + std::to_string(in_mean) + ", batch max " +
                    std::to_string(in_max) + ", embedding max " +
                    std::to_string(emb_max) + ")");
            }

            Mat<float> d_emb_raw = normalize_rows_backward(emb_n, d_emb_n);
            Mat<float> d_head_raw = normalize_rows_backward(head_n, d_head_n);
            model.encoder->backward(d_emb_raw);

            // SGD with momentum; weight decay folded into the gradient.
            const float mu = static_cast<float>(cfg.momentum);
            const float wd = static_cast<float>(cfg.weight_decay);
            for (std::size_t p = 0; p < params.size(); ++p) {
                auto& v = opt.momentum[p];
                v = mu * v + params[p]->grad + wd * params[p]->value;
                params[p]->value -= static_cast<float>(lr_backbone) * v;
            }
            auto& vh = opt.momentum.back();
            vh = mu * vh + d_head_raw + wd * model.head;
            model.head -= static_cast<float>(lr_head) * vh;

            loss_sum += static_cast<double>(loss) * bs;
            seen += static_cast<std::size_t>(bs);
        }

        EpochMetrics em{epoch, lr_backbone, loss_sum / static_cast<double>(seen)};
        result.history.push_back(em);
        if (metrics.is_open()) {
            json line{{"epoch", em.epoch}, {"lr", em.lr}, {"loss", em.loss},
                      {"lr_head", lr_head}};
            metrics << line.dump() << "\n";
            metrics.flush();
        }
        if (!opts.run_dir.empty() && opts.checkpoint_every > 0 &&
            ((epoch + 1) % opts.checkpoint_every == 0 ||
             epoch + 1 == cfg.epochs)) {
            const std::string path =
                (fs::path(opts.run_dir) / "checkpoints" /
                 ("epoch_" + std::to_string(epoch + 1)))
                    .string();
            save_checkpoint(model, opt, cfg, epoch + 1, opts.config_snapshot,
                            path);
        }
    }
    return result;
}

Mat<float> extract_embeddings(Model& model, const std::vector<Image>& images,
                              int batch_size) {
    const int input_size = model.encoder_spec.input_size;
    const int d = model.encoder_spec.embedding_dim;
    Mat<float> out(static_cast<Eigen::Index>(images.size()), d);
    for (std::size_t start = 0; start < images.size();
         start += static_cast<std::size_t>(batch_size)) {
        const int bs = static_cast<int>(
            std::min<std::size_t>(batch_size, images.size() - start));
        net::Tensor4<float> input(bs, 3, input_size, input_size);
        for (int i = 0; i < bs; ++i) {
            const Image& img = images[start + i];
            if (img.width != input_size || img.height != input_size)
                throw ValidationError("embeddings: image size mismatch");
            net::fill_input(input, i, img);
        }
        Mat<float> emb = model.encoder->forward(input, false);
        for (int i = 0; i < bs; ++i) {
            float norm = emb.row(i).norm();
            if (norm < 1e-12f) norm = 1e-12f;
            out.row(static_cast<Eigen::Index>(start) + i) = emb.row(i) / norm;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'K', 'C', 'K', '0', '0', '0', '1'};

void write_mat(std::ofstream& f, const Mat<float>& m) {
    f.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
}

void read_mat(std::ifstream& f, Mat<float>& m) {
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!f) throw ValidationError("checkpoint: truncated tensor data");
}

}  // namespace

void save_checkpoint(Model& model, const OptimizerState& opt,
                     const TrainConfig& cfg, int epoch,
                     const json& config_snapshot, const std::string& path) {
    auto params = model.encoder->parameters();
    auto buffers = model.encoder->buffers();

    json header{{"epoch", epoch},
                {"train_config", train_config_to_json(cfg)},
                {"encoder_spec", encoder_spec_to_json(model.encoder_spec)},
                {"margin", margin_config_to_json(model.margin_cfg)},
                {"num_classes", model.num_classes()},
                // Data order and augmentation streams derive from
                // (seed, epoch), so this pair is the complete RNG state.
                {"rng", {{"scheme", "per-epoch-derived"}, {"seed", cfg.seed}}},
                {"config_snapshot", config_snapshot}};
    const std::string header_text = header.dump();

    atomic_write(path, [&](std::ofstream& f) {
        f.write(kMagic, sizeof(kMagic));
        const std::uint64_t len = header_text.size();
        f.write(reinterpret_cast<const char*>(&len), sizeof(len));
        f.write(header_text.data(), static_cast<std::streamsize>(len));
        for (auto* p : params) write_mat(f, p->value);
        for (auto* b : buffers) write_mat(f, *b);
        write_mat(f, model.head);
        for (const auto& m : opt.momentum) write_mat(f, m);
    });
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError("not a checkpoint file: " + path);
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header_text(len, '\0');
    f.read(header_text.data(), static_cast<std::streamsize>(len));
    if (!f) throw ValidationError("checkpoint: truncated header");
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("checkpoint: bad header: ") +
                              e.what());
    }

    Checkpoint ck;
    ck.epoch = header.at("epoch").get<int>();
    ck.train_cfg = train_config_from_json(header.at("train_config"));
    ck.config_snapshot = header.value("config_snapshot", json(nullptr));
    const auto spec = encoder_spec_from_json(header.at("encoder_spec"));
    const auto mcfg = margin_config_from_json(header.at("margin"));
    const int classes = header.at("num_classes").get<int>();
    ck.model = make_model(spec, mcfg, classes, /*seed=*/0);

    auto params = ck.model.encoder->parameters();
    auto buffers = ck.model.encoder->buffers();
    for (auto* p : params) read_mat(f, p->value);
    for (auto* b : buffers) read_mat(f, *b);
    read_mat(f, ck.model.head);
    for (auto* p : params) {
        Mat<float> m(p->value.rows(), p->value.cols());
        read_mat(f, m);
        ck.opt.momentum.push_back(std::move(m));
    }
    Mat<float> mh(ck.model.head.rows(), ck.model.head.cols());
    read_mat(f, mh);
    ck.opt.momentum.push_back(std::move(mh));
    return ck;
}

// ---------------------------------------------------------------------------
// JSON bridging.
// ---------------------------------------------------------------------------

json train_config_to_json(const TrainConfig& cfg) {
    return {{"batch_size", cfg.batch_size},
            {"epochs", cfg.epochs},
            {"lr_milestones", cfg.lr_milestones},
            {"lr_decay", cfg.lr_decay},
            {"base_lr", cfg.base_lr},
            {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay},
            {"seed", cfg.seed},
            {"augment_enabled", cfg.augment_enabled},
            {"augmentation", augmentation_to_json(cfg.augmentation)}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.lr_milestones = j.at("lr_milestones").get<std::vector<int>>();
    cfg.lr_decay = j.at("lr_decay").get<double>();
    cfg.base_lr = j.at("base_lr").get<double>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.augment_enabled = j.at("augment_enabled").get<bool>();
    cfg.augmentation = augmentation_from_json(j.at("augmentation"));
    return cfg;
}

json encoder_spec_to_json(const net::EncoderSpec& spec) {
    json stages = json::array();
    for (const auto& s : spec.stages)
        stages.push_back({{"channels", s.channels},
                          {"blocks", s.blocks},
                          {"stride", s.stride}});
    return {{"input_size", spec.input_size},
            {"stem_channels", spec.stem_channels},
            {"stem_kernel", spec.stem_kernel},
            {"stem_stride", spec.stem_stride},
            {"stages", stages},
            {"embedding_dim", spec.embedding_dim}};
}

net::EncoderSpec encoder_spec_from_json(const json& j) {
    net::EncoderSpec spec;
    spec.input_size = j.at("input_size").get<int>();
    spec.stem_channels = j.at("stem_channels").get<int>();
    spec.stem_kernel = j.at("stem_kernel").get<int>();
    spec.stem_stride = j.at("stem_stride").get<int>();
    spec.stages.clear();
    for (const auto& s : j.at("stages"))
        spec.stages.push_back({s.at("channels").get<int>(),
                               s.at("blocks").get<int>(),
                               s.at("stride").get<int>()});
    spec.embedding_dim = j.at("embedding_dim").get<int>();
    return spec;
}

json augmentation_to_json(const augment::AugmentationConfig& cfg) {
    return {{"flip_prob", cfg.flip_prob},
            {"grayscale_prob", cfg.grayscale_prob},
            {"gaussian_blur_prob", cfg.gaussian_blur_prob},
            {"gaussian_noise_prob", cfg.gaussian_noise_prob},
            {"motion_blur_prob", cfg.motion_blur_prob},
            {"jpeg_prob", cfg.jpeg_prob},
            {"down_up_prob", cfg.down_up_prob},
            {"color_jitter_prob", cfg.color_jitter_prob},
            {"brightness", cfg.brightness},
            {"contrast", cfg.contrast},
            {"hue", cfg.hue},
            {"saturation", cfg.saturation},
            {"blur_sigma", {cfg.blur_sigma_lo, cfg.blur_sigma_hi}},
            {"noise_std", {cfg.noise_std_lo, cfg.noise_std_hi}},
            {"motion_length", {cfg.motion_length_lo, cfg.motion_length_hi}},
            {"jpeg_quality", {cfg.jpeg_quality_lo, cfg.jpeg_quality_hi}},
            {"down_up", {cfg.down_up_lo, cfg.down_up_hi}}};
}

augment::AugmentationConfig augmentation_from_json(const json& j) {
    augment::AugmentationConfig cfg;
    cfg.flip_prob = j.at("flip_prob").get<double>();
    cfg.grayscale_prob = j.at("grayscale_prob").get<double>();
    cfg.gaussian_blur_prob = j.at("gaussian_blur_prob").get<double>();
    cfg.gaussian_noise_prob = j.at("gaussian_noise_prob").get<double>();
    cfg.motion_blur_prob = j.at("motion_blur_prob").get<double>();
    cfg.jpeg_prob = j.at("jpeg_prob").get<double>();
    cfg.down_up_prob = j.at("down_up_prob").get<double>();
    cfg.color_jitter_prob = j.at("color_jitter_prob").get<double>();
    cfg.brightness = j.at("brightness").get<double>();
    cfg.contrast = j.at("contrast").get<double>();
    cfg.hue = j.at("hue").get<double>();
    cfg.saturation = j.at("saturation").get<double>();
    cfg.blur_sigma_lo = j.at("blur_sigma")[0].get<double>();
    cfg.blur_sigma_hi = j.at("blur_sigma")[1].get<double>();
    cfg.noise_std_lo = j.at("noise_std")[0].get<double>();
    cfg.noise_std_hi = j.at("noise_std")[1].get<double>();
    cfg.motion_length_lo = j.at("motion_length")[0].get<int>();
    cfg.motion_length_hi = j.at("motion_length")[1].get<int>();
    cfg.jpeg_quality_lo = j.at("jpeg_quality")[0].get<int>();
    cfg.jpeg_quality_hi = j.at("jpeg_quality")[1].get<int>();
    cfg.down_up_lo = j.at("down_up")[0].get<double>();
    cfg.down_up_hi = j.at("down_up")[1].get<double>();
    return cfg;
}

json margin_config_to_json(const margin::MarginConfig& cfg) {
    return {{"margin", cfg.margin},
            {"scale", cfg.scale},
            {"easy_margin", cfg.easy_margin}};
}

margin::MarginConfig margin_config_from_json(const json& j) {
    margin::MarginConfig cfg;
    cfg.margin = j.at("margin").get<double>();
    cfg.scale = j.at("scale").get<double>();
    cfg.easy_margin = j.at("easy_margin").get<bool>();
    return cfg;
}

}  // namespace facekit::train
