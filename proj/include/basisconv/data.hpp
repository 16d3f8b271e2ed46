#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "basisconv/tensor.hpp"

namespace basisconv {

struct LabeledSample {
    Tensor3 image;
    int label = 0;
};

enum class Split { train, test };

struct LabeledDataset {
    std::vector<LabeledSample> samples;
    int class_count = 0;
    Split split = Split::train;

    std::size_t size() const { return samples.size(); }
};

/// Synthetic classification set: each class is a fixed oriented bar or
/// checkerboard template (frequency and orientation depend on the class, phase
/// on the seed) plus i.i.d. Gaussian pixel noise, clamped to [0, 1].
LabeledDataset synth_dataset(int classes, int per_class, int rows, int cols, int channels,
                             std::uint64_t seed, double noise_sigma = 0.3,
                             Split split = Split::train);

/// Train/test pair drawn in one pass so both splits share the class templates
/// while their noise stays disjoint.
std::pair<LabeledDataset, LabeledDataset> synth_split(int classes, int train_per_class,
                                                      int test_per_class, int rows, int cols,
                                                      int channels, std::uint64_t seed,
                                                      double noise_sigma = 0.3);

/// Reader for the common binary image-batch format: 3073-byte records, one
/// label byte then 32x32 R, G, B planes. Pixels are scaled to [0, 1].
LabeledDataset load_cifar10_binary(const std::string& path);

/// Subtract the per-channel mean over the whole set; returns the means.
std::vector<double> normalize_channel_means(LabeledDataset& data);
void denormalize_channel_means(LabeledDataset& data, const std::vector<double>& means);

}  // namespace basisconv
