#include "gridsage/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "gridsage/errors.hpp"
#include "gridsage/rng.hpp"

namespace fs = std::filesystem;

namespace gridsage {

void SyntheticConfig::validate() const {
    if (image_size < 16) throw InvalidInputError("synthetic image size must be >= 16");
    if (num_classes < 2 || num_classes > 10)
        throw InvalidInputError("synthetic class count must be in [2, 10]");
    if (samples_per_class < 0) throw InvalidInputError("samples per class must be >= 0");
    if (speckle_sigma < 0.0) throw InvalidInputError("speckle level must be >= 0");
    if (shadow_offset < 0) throw InvalidInputError("shadow offset must be >= 0");
}

LoadedDataset load_dataset(const std::string& root) {
    if (!fs::is_directory(root)) throw InvalidInputError("dataset root is not a directory: " + root);

    std::vector<std::string> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw InvalidInputError("dataset root has no class subdirectories: " + root);

    LoadedDataset ds;
    ds.manifest.class_names = class_dirs;
    ds.manifest.counts.assign(class_dirs.size(), 0);

    std::vector<std::string> dim_offenders;
    for (std::size_t ci = 0; ci < class_dirs.size(); ++ci) {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(fs::path(root) / class_dirs[ci])) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (ext == ".pgm") {
                files.push_back(entry.path().string());
            } else if (ext == ".png") {
                throw IoError("PNG input is not supported by this build, convert to PGM: " +
                              entry.path().string());
            }
        }
        std::sort(files.begin(), files.end());
        for (const std::string& f : files) {
            Sample s;
            s.image = read_pgm(f);
            s.label = static_cast<int>(ci);
            s.source = f;
            if (ds.manifest.height == 0) {
                ds.manifest.height = s.image.height;
                ds.manifest.width = s.image.width;
            } else if (s.image.height != ds.manifest.height ||
                       s.image.width != ds.manifest.width) {
                dim_offenders.push_back(f + " (" + std::to_string(s.image.height) + "x" +
                                        std::to_string(s.image.width) + ")");
            }
            ds.samples.push_back(std::move(s));
            ds.manifest.counts[ci]++;
        }
    }
    if (!dim_offenders.empty()) {
        std::string msg = "dataset images disagree on dimensions (expected " +
                          std::to_string(ds.manifest.height) + "x" +
                          std::to_string(ds.manifest.width) + "):";
        for (const std::string& o : dim_offenders) msg += "\n  " + o;
        throw IntegrityError(msg);
    }
    if (ds.samples.empty()) throw InvalidInputError("dataset root contains no PGM images: " + root);
    return ds;
}

namespace {

// Shape archetypes on a [-1, 1]^2 canvas, half-extent a.
bool in_shape(int archetype, double r, double c, double a) {
    const double third = a / 3.0;
    switch (archetype) {
        case 0:  // box
            return std::abs(r) <= a * 0.9 && std::abs(c) <= a * 0.9;
        case 1:  // disc
            return r * r + c * c <= a * a;
        case 2:  // lshape
            return (c >= -a && c <= -a + 2 * third && std::abs(r) <= a) ||
                   (r >= a - 2 * third && r <= a && std::abs(c) <= a);
        case 3:  // cross
            return (std::abs(c) <= third && std::abs(r) <= a) ||
                   (std::abs(r) <= third && std::abs(c) <= a);
        case 4:  // diamond
            return std::abs(r) + std::abs(c) <= a;
        case 5:  // ring
            return r * r + c * c <= a * a && r * r + c * c >= (a * 0.55) * (a * 0.55);
        case 6:  // hbar
            return std::abs(r) <= third && std::abs(c) <= a;
        case 7:  // vbar
            return std::abs(c) <= third && std::abs(r) <= a;
        case 8:  // tee
            return (r >= -a && r <= -a + 2 * third && std::abs(c) <= a) ||
                   (std::abs(c) <= third && r >= -a && r <= a);
        case 9:  // ushape
            return (std::abs(c) >= a - 2 * third && std::abs(c) <= a && std::abs(r) <= a) ||
                   (r >= a - 2 * third && r <= a && std::abs(c) <= a);
        default:
            return false;
    }
}

const char* kArchetypeNames[10] = {"box",     "disc", "lshape", "cross", "diamond",
                                   "ring",    "hbar", "vbar",   "tee",   "ushape"};

constexpr double kBackground = 0.30;
constexpr double kObject = 0.85;
constexpr double kShadow = 0.06;

Image render_sample(const SyntheticConfig& cfg, int archetype, Rng& rng) {
    const int size = cfg.image_size;
    Image img(size, size, kBackground);

    // Per-sample geometry jitter keeps the task non-trivial for a raw-pixel
    // centroid classifier.
    const double jitter = size / 18.0;
    const double cr = size / 2.0 + rng.uniform(-jitter, jitter);
    const double cc = size / 2.0 + rng.uniform(-jitter, jitter);
    const double a = size * 0.22 * rng.uniform(0.9, 1.1);

    std::vector<char> mask(static_cast<std::size_t>(size) * size, 0);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            if (in_shape(archetype, r - cr, c - cc, a))
                mask[static_cast<std::size_t>(r) * size + c] = 1;

    const int off = cfg.shadow_offset;
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * size + c;
            if (mask[i]) {
                img.values[i] = kObject;
            } else if (r >= off && c >= off &&
                       mask[static_cast<std::size_t>(r - off) * size + (c - off)]) {
                img.values[i] = kShadow;
            }
        }
    }

    if (cfg.speckle_sigma > 0.0) {
        const double s = cfg.speckle_sigma;
        for (double& v : img.values) {
            const double factor = std::exp(s * rng.normal() - 0.5 * s * s);  // mean-1, positive
            v = std::clamp(v * factor, 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace

std::vector<std::string> synthetic_class_names(int num_classes) {
    std::vector<std::string> names;
    for (int i = 0; i < num_classes; ++i)
        names.push_back("c" + std::to_string(i) + "_" + kArchetypeNames[i]);
    return names;
}

std::vector<Sample> generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const Rng base(cfg.seed);
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(cfg.num_classes) * cfg.samples_per_class);
    const std::vector<std::string> names = synthetic_class_names(cfg.num_classes);
    for (int cls = 0; cls < cfg.num_classes; ++cls) {
        for (int i = 0; i < cfg.samples_per_class; ++i) {
            // Independent stream per sample: generation order never matters.
            Rng rng = base.fork(static_cast<std::uint64_t>(cls) * 1000003ULL +
                                static_cast<std::uint64_t>(i));
            Sample s;
            s.image = render_sample(cfg, cls, rng);
            s.label = cls;
            s.source = "synthetic:" + names[cls] + ":" + std::to_string(i);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

DatasetManifest synthetic_manifest(const SyntheticConfig& cfg) {
    cfg.validate();
    DatasetManifest m;
    m.class_names = synthetic_class_names(cfg.num_classes);
    m.counts.assign(static_cast<std::size_t>(cfg.num_classes), cfg.samples_per_class);
    m.height = cfg.image_size;
    m.width = cfg.image_size;
    return m;
}

SplitResult split(const std::vector<Sample>& samples, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw InvalidInputError("test fraction must be in (0, 1)");
    if (samples.empty()) throw InvalidInputError("cannot split an empty dataset");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);

    Rng rng(seed);
    std::set<std::size_t> test_idx;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2)
            throw StratificationError("class " + std::to_string(label) + " has only " +
                                      std::to_string(idx.size()) +
                                      " sample(s); need at least 2 to stratify");
        rng.shuffle(idx);
        const auto n_test = static_cast<std::size_t>(
            std::lround(static_cast<double>(idx.size()) * test_fraction));
        for (std::size_t k = 0; k < n_test; ++k) test_idx.insert(idx[k]);
    }

    SplitResult res;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (test_idx.count(i))
            res.test.push_back(samples[i]);
        else
            res.train.push_back(samples[i]);
    }
    return res;
}

}  // namespace gridsage
