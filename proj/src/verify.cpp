#include "facekit/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "facekit/errors.hpp"

namespace facekit::verify {

using nlohmann::json;

std::string image_ref(const std::string& name, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_%04d", index);
    return name + buf;
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream is(line);
    std::string t;
    while (is >> t) toks.push_back(t);
    return toks;
}

int parse_index(const std::string& tok, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("pairs: bad image index '" + tok + "'", line_no);
    }
}

}  // namespace

std::vector<VerificationPair> parse_pairs_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(is, line)) throw ValidationError("pairs: empty file");
    ++line_no;
    auto header = tokenize(line);
    if (header.size() != 2)
        throw ParseError("pairs: header must be '<folds> <pairs-per-class>'",
                         line_no);
    const int folds = parse_index(header[0], line_no);
    const int per_class = parse_index(header[1], line_no);
    if (folds < 1 || per_class < 1)
        throw ParseError("pairs: non-positive header counts", line_no);

    std::vector<VerificationPair> pairs;
    pairs.reserve(static_cast<std::size_t>(folds) * 2 * per_class);
    const std::size_t expected =
        static_cast<std::size_t>(folds) * 2 * per_class;

    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto toks = tokenize(line);
        if (pairs.size() >= expected)
            throw ParseError("pairs: more lines than the header declares",
                             line_no);
        VerificationPair p;
        // Fold membership by block order: fold f owns lines
        // [f*2*per_class, (f+1)*2*per_class).
        p.fold = static_cast<int>(pairs.size() / (2 * per_class));
        if (toks.size() == 3) {
            p.same = true;
            p.ref_a = image_ref(toks[0], parse_index(toks[1], line_no));
            p.ref_b = image_ref(toks[0], parse_index(toks[2], line_no));
        } else if (toks.size() == 4) {
            p.same = false;
            p.ref_a = image_ref(toks[0], parse_index(toks[1], line_no));
            p.ref_b = image_ref(toks[2], parse_index(toks[3], line_no));
        } else {
            throw ParseError("pairs: expected 3 or 4 tokens, got " +
                                 std::to_string(toks.size()),
                             line_no);
        }
        pairs.push_back(std::move(p));
    }

    if (pairs.size() != expected)
        throw ValidationError(
            "pairs: header declares " + std::to_string(expected) +
            " pairs, file has " + std::to_string(pairs.size()));
    // Within each fold the first half must be genuine, the second impostor.
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const bool should_be_same =
            static_cast<int>(i % (2 * per_class)) < per_class;
        if (pairs[i].same != should_be_same)
            throw ValidationError(
                "pairs: line " + std::to_string(i + 2) +
                " breaks the genuine/impostor block layout");
    }
    return pairs;
}

std::vector<VerificationPair> parse_pairs_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw RuntimeError("cannot open: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_pairs_text(ss.str());
}

void write_pairs_file(const std::vector<VerificationPair>& pairs,
                      const std::string& path) {
    if (pairs.empty()) throw ValidationError("pairs: nothing to write");
    std::set<int> folds;
    std::size_t genuine = 0;
    for (const auto& p : pairs) {
        folds.insert(p.fold);
        genuine += p.same;
    }
    const int n_folds = static_cast<int>(folds.size());
    if (pairs.size() % (2 * folds.size()) != 0 ||
        genuine * 2 != pairs.size())
        throw ValidationError("pairs: folds must be equal-sized and balanced");
    const int per_class = static_cast<int>(pairs.size() / (2 * folds.size()));

    // Re-derive "<name> <idx>" from refs of the form name_0001.
    auto split_ref = [](const std::string& ref) {
        const auto pos = ref.rfind('_');
        if (pos == std::string::npos || pos + 1 >= ref.size())
            throw ValidationError("pairs: ref '" + ref + "' not name_index");
        return std::pair<std::string, int>(ref.substr(0, pos),
                                           std::stoi(ref.substr(pos + 1)));
    };

    std::ofstream f(path);
    if (!f) throw RuntimeError("cannot open for writing: " + path);
    f << n_folds << "\t" << per_class << "\n";
    for (int fold = 0; fold < n_folds; ++fold) {
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& p : pairs) {
                if (p.fold != fold || p.same != (pass == 0)) continue;
                const auto [na, ia] = split_ref(p.ref_a);
                const auto [nb, ib] = split_ref(p.ref_b);
                if (p.same)
                    f << na << "\t" << ia << "\t" << ib << "\n";
                else
                    f << na << "\t" << ia << "\t" << nb << "\t" << ib << "\n";
            }
        }
    }
}

std::vector<VerificationPair> generate_pairs(
    const std::vector<std::string>& names, int samples_per_name, int folds,
    int pairs_per_class_per_fold, std::uint64_t seed) {
    if (names.size() < 2)
        throw ValidationError("generate_pairs: need at least two identities");
    if (samples_per_name < 2)
        throw ValidationError("generate_pairs: need >= 2 samples per identity");
    facekit::Rng rng(derive_seed(seed, "pairs"));
    std::set<std::string> used;
    auto key = [](const VerificationPair& p) {
        return p.ref_a < p.ref_b ? p.ref_a + "|" + p.ref_b
                                 : p.ref_b + "|" + p.ref_a;
    };

    std::vector<VerificationPair> pairs;
    for (int fold = 0; fold < folds; ++fold) {
        for (int i = 0; i < pairs_per_class_per_fold; ++i) {
            for (int attempt = 0;; ++attempt) {
                if (attempt > 10000)
                    throw ValidationError(
                        "generate_pairs: identity pool too small for the "
                        "requested pair count");
                const auto& name = names[rng.uniform_index(names.size())];
                const int a = 1 + static_cast<int>(
                                      rng.uniform_index(samples_per_name));
                int b = 1 + static_cast<int>(
                                rng.uniform_index(samples_per_name - 1));
                if (b >= a) ++b;
                VerificationPair p{image_ref(name, a), image_ref(name, b), true,
                                   fold};
                if (used.insert(key(p)).second) {
                    pairs.push_back(std::move(p));
                    break;
                }
            }
        }
        for (int i = 0; i < pairs_per_class_per_fold; ++i) {
            for (int attempt = 0;; ++attempt) {
                if (attempt > 10000)
                    throw ValidationError(
                        "generate_pairs: identity pool too small for the "
                        "requested pair count");
                const auto na = rng.uniform_index(names.size());
                auto nb = rng.uniform_index(names.size() - 1);
                if (nb >= na) ++nb;
                VerificationPair p{
                    image_ref(names[na],
                              1 + static_cast<int>(
                                      rng.uniform_index(samples_per_name))),
                    image_ref(names[nb],
                              1 + static_cast<int>(
                                      rng.uniform_index(samples_per_name))),
                    false, fold};
                if (used.insert(key(p)).second) {
                    pairs.push_back(std::move(p));
                    break;
                }
            }
        }
    }
    return pairs;
}

std::vector<DistanceRecord> pair_distances(
    const std::vector<VerificationPair>& pairs, const EmbeddingTable& embeddings,
    Metric metric) {
    std::vector<DistanceRecord> records;
    records.reserve(pairs.size());
    for (const auto& p : pairs) {
        const auto a = embeddings.find(p.ref_a);
        if (a == embeddings.end())
            throw ValidationError("missing embedding for image '" + p.ref_a + "'");
        const auto b = embeddings.find(p.ref_b);
        if (b == embeddings.end())
            throw ValidationError("missing embedding for image '" + p.ref_b + "'");
        DistanceRecord r;
        r.same = p.same;
        r.fold = p.fold;
        if (metric == Metric::L2) {
            r.distance = static_cast<double>((a->second - b->second).norm());
        } else {
            r.distance = 1.0 - static_cast<double>(a->second.dot(b->second));
        }
        if (!std::isfinite(r.distance))
            throw ValidationError("non-finite distance for pair " + p.ref_a +
                                  " / " + p.ref_b);
        records.push_back(r);
    }
    return records;
}

double threshold_accuracy(const std::vector<DistanceRecord>& records,
                          double threshold) {
    if (records.empty())
        throw ValidationError("threshold_accuracy: no records");
    std::size_t correct = 0;
    for (const auto& r : records)
        correct += ((r.distance < threshold) == r.same);
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

namespace {

std::vector<double> candidate_thresholds(
    const std::vector<DistanceRecord>& train, const SweepPolicy& policy) {
    std::vector<double> out;
    if (policy.mode == SweepPolicy::Mode::Grid) {
        const auto steps = static_cast<std::size_t>(
            std::floor((policy.grid_hi - policy.grid_lo) / policy.grid_step) + 1);
        out.reserve(steps);
        for (std::size_t i = 0; i < steps; ++i)
            out.push_back(policy.grid_lo + policy.grid_step * static_cast<double>(i));
        return out;
    }
    // Midpoints of adjacent distinct distances, plus sentinels below and
    // above everything (accept-none / accept-all).
    std::vector<double> d;
    d.reserve(train.size());
    for (const auto& r : train) d.push_back(r.distance);
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    out.push_back(d.front() - 1.0);
    for (std::size_t i = 0; i + 1 < d.size(); ++i)
        out.push_back((d[i] + d[i + 1]) / 2.0);
    out.push_back(d.back() + 1.0);
    return out;
}

}  // namespace

AccuracyReport ten_fold_accuracy(const std::vector<DistanceRecord>& records,
                                 const SweepPolicy& policy,
                                 int expected_folds) {
    if (records.empty()) throw ValidationError("ten_fold_accuracy: no records");
    std::set<int> folds_present;
    for (const auto& r : records) folds_present.insert(r.fold);
    for (int f = 0; f < expected_folds; ++f)
        if (!folds_present.count(f))
            throw ValidationError("ten_fold_accuracy: fold " +
                                  std::to_string(f) + " is missing");

    AccuracyReport report;
    for (int f = 0; f < expected_folds; ++f) {
        std::vector<DistanceRecord> train, held_out;
        for (const auto& r : records)
            (r.fold == f ? held_out : train).push_back(r);
        if (train.empty() || held_out.empty())
            throw ValidationError("ten_fold_accuracy: empty fold split");

        const auto candidates = candidate_thresholds(train, policy);
        double best_t = candidates.front();
        double best_acc = -1.0;
        for (double t : candidates) {
            const double acc = threshold_accuracy(train, t);
            if (acc > best_acc) {  // ties keep the smallest threshold
                best_acc = acc;
                best_t = t;
            }
        }
        report.folds.push_back({f, best_t, threshold_accuracy(held_out, best_t)});
    }

    double sum = 0.0;
    for (const auto& fr : report.folds) sum += fr.accuracy;
    report.mean_accuracy = sum / static_cast<double>(report.folds.size());
    double sq = 0.0;
    for (const auto& fr : report.folds) {
        const double d = fr.accuracy - report.mean_accuracy;
        sq += d * d;
    }
    report.std_accuracy =
        std::sqrt(sq / static_cast<double>(report.folds.size()));
    return report;
}

json report_to_json(const AccuracyReport& report) {
    json folds = json::array();
    for (const auto& f : report.folds)
        folds.push_back({{"fold", f.fold},
                         {"threshold", f.threshold},
                         {"accuracy", f.accuracy}});
    return {{"folds", folds},
            {"mean_accuracy", report.mean_accuracy},
            {"std_accuracy", report.std_accuracy}};
}

void write_embedding_cache(const EmbeddingTable& table, int dim,
                           const std::string& bin_path,
                           const std::string& index_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw RuntimeError("cannot open for writing: " + bin_path);
    std::ofstream idx(index_path);
    if (!idx) throw RuntimeError("cannot open for writing: " + index_path);
    idx << "D\t" << dim << "\n";
    std::uint64_t offset = 0;
    for (const auto& [id, vec] : table) {
        if (vec.size() != dim)
            throw ValidationError("embedding cache: dim mismatch for '" + id +
                                  "'");
        const std::uint32_t len = static_cast<std::uint32_t>(id.size());
        bin.write(reinterpret_cast<const char*>(&len), sizeof(len));
        bin.write(id.data(), len);
        bin.write(reinterpret_cast<const char*>(vec.data()),
                  static_cast<std::streamsize>(sizeof(float) * dim));
        idx << id << "\t" << offset << "\n";
        offset += sizeof(len) + len + sizeof(float) * static_cast<std::uint64_t>(dim);
    }
    if (!bin || !idx) throw RuntimeError("embedding cache: write failed");
}

EmbeddingTable read_embedding_cache(const std::string& bin_path,
                                    const std::string& index_path) {
    std::ifstream idx(index_path);
    if (!idx) throw RuntimeError("cannot open: " + index_path);
    std::string header;
    if (!std::getline(idx, header) || header.rfind("D\t", 0) != 0)
        throw ValidationError("embedding index: missing 'D' header");
    const int dim = std::stoi(header.substr(2));
    if (dim <= 0) throw ValidationError("embedding index: bad dimension");

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw RuntimeError("cannot open: " + bin_path);

    EmbeddingTable table;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(idx, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos)
            throw ParseError("embedding index: missing offset", line_no);
        const std::string id = line.substr(0, tab);
        const std::uint64_t offset = std::stoull(line.substr(tab + 1));
        bin.seekg(static_cast<std::streamoff>(offset));
        std::uint32_t len = 0;
        bin.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string stored(len, '\0');
        bin.read(stored.data(), len);
        if (!bin || stored != id)
            throw ValidationError("embedding cache: record for '" + id +
                                  "' does not match the index");
        Eigen::VectorXf vec(dim);
        bin.read(reinterpret_cast<char*>(vec.data()),
                 static_cast<std::streamsize>(sizeof(float) * dim));
        if (!bin)
            throw ValidationError("embedding cache: truncated record for '" +
                                  id + "'");
        table.emplace(id, std::move(vec));
    }
    return table;
}

}  // namespace facekit::verify
