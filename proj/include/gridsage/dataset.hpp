#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridsage/image.hpp"

namespace gridsage {

struct Sample {
    Image image;
    int label = 0;
    std::string source;  // file path, or a synthetic id
};

struct DatasetManifest {
    std::vector<std::string> class_names;
    std::vector<int> counts;  // per class
    int height = 0;
    int width = 0;
};

// Desk-scale stand-in dataset: per-class geometric targets with an offset
// dark shadow region on a mid-gray background, multiplied by mean-1 positive
// speckle noise. Deterministic per seed; sample geometry jitters per draw.
struct SyntheticConfig {
    int image_size = 32;       // square images
    int num_classes = 3;       // 2..10 shape archetypes
    int samples_per_class = 87;
    double speckle_sigma = 0.2;
    int shadow_offset = 3;     // cast direction is down-right
    std::uint64_t seed = 7;

    void validate() const;
};

struct LoadedDataset {
    std::vector<Sample> samples;
    DatasetManifest manifest;
};

// Loads root/<class_name>/*.pgm. Classes sorted lexicographically define the
// label indices; samples are path-sorted within a class.
LoadedDataset load_dataset(const std::string& root);

std::vector<std::string> synthetic_class_names(int num_classes);
std::vector<Sample> generate_synthetic(const SyntheticConfig& cfg);
DatasetManifest synthetic_manifest(const SyntheticConfig& cfg);

struct SplitResult {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// Stratified split: per class, a seeded shuffle sends round(n_c * fraction)
// samples to the test side. Both outputs keep the original sample order.
SplitResult split(const std::vector<Sample>& samples, double test_fraction, std::uint64_t seed);

}  // namespace gridsage
