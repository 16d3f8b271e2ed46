#include "basisconv/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace basisconv {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

LabeledDataset synth_dataset(int classes, int per_class, int rows, int cols, int channels,
                             std::uint64_t seed, double noise_sigma, Split split) {
    if (classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
    if (per_class < 1) throw std::invalid_argument("synth_dataset: need at least 1 sample per class");
    if (rows < 1 || cols < 1 || channels < 1)
        throw std::invalid_argument("synth_dataset: bad sample shape");
    if (noise_sigma < 0.0) throw std::invalid_argument("synth_dataset: negative noise sigma");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // One template per class: an oriented sinusoidal bar pattern for even
    // classes, a checkerboard-like product of two waves for odd ones. Frequency
    // and orientation are class-specific; phases come from the seed.
    std::vector<Tensor3> templates;
    templates.reserve(classes);
    for (int c = 0; c < classes; ++c) {
        const double theta = kPi * static_cast<double>(c) / classes;
        const double freq = 2.0 * kPi / (4.0 + static_cast<double>(c % 5));
        const bool bars = c % 2 == 0;
        const double phase = uphase(rng);
        Tensor3 t(rows, cols, channels);
        for (int m = 0; m < rows; ++m)
            for (int n = 0; n < cols; ++n) {
                const double u = m * std::cos(theta) + n * std::sin(theta);
                const double v = -m * std::sin(theta) + n * std::cos(theta);
                for (int l = 0; l < channels; ++l) {
                    const double chphase = phase + kPi * static_cast<double>(l) / channels;
                    const double wave = bars ? std::sin(freq * u + chphase)
                                             : std::sin(freq * u + chphase) * std::sin(freq * v);
                    t.at(m, n, l) = 0.5 + 0.45 * wave;
                }
            }
        templates.push_back(std::move(t));
    }

    LabeledDataset data;
    data.class_count = classes;
    data.split = split;
    data.samples.reserve(static_cast<std::size_t>(classes) * per_class);
    for (int c = 0; c < classes; ++c)
        for (int s = 0; s < per_class; ++s) {
            LabeledSample sample;
            sample.label = c;
            sample.image = templates[c];
            for (double& v : sample.image.data)
                v = std::clamp(v + noise_sigma * gauss(rng), 0.0, 1.0);
            data.samples.push_back(std::move(sample));
        }
    return data;
}

std::pair<LabeledDataset, LabeledDataset> synth_split(int classes, int train_per_class,
                                                      int test_per_class, int rows, int cols,
                                                      int channels, std::uint64_t seed,
                                                      double noise_sigma) {
    LabeledDataset all = synth_dataset(classes, train_per_class + test_per_class, rows, cols,
                                       channels, seed, noise_sigma, Split::train);
    LabeledDataset train, test;
    train.class_count = test.class_count = classes;
    train.split = Split::train;
    test.split = Split::test;
    const int per = train_per_class + test_per_class;
    for (int c = 0; c < classes; ++c)
        for (int s = 0; s < per; ++s) {
            LabeledSample& sample = all.samples[static_cast<std::size_t>(c) * per + s];
            (s < train_per_class ? train : test).samples.push_back(std::move(sample));
        }
    return {std::move(train), std::move(test)};
}

LabeledDataset load_cifar10_binary(const std::string& path) {
    constexpr int kRecord = 3073;
    constexpr int kSide = 32;
    constexpr int kPlane = kSide * kSide;

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % kRecord != 0)
        throw std::runtime_error(path + ": size " + std::to_string(bytes.size()) +
                                 " is not a multiple of 3073-byte records");

    LabeledDataset data;
    data.class_count = 10;
    data.split = Split::train;
    const std::size_t records = bytes.size() / kRecord;
    data.samples.reserve(records);
    for (std::size_t r = 0; r < records; ++r) {
        const unsigned char* rec = &bytes[r * kRecord];
        if (rec[0] > 9)
            throw std::runtime_error(path + ": record " + std::to_string(r) + " has label byte " +
                                     std::to_string(rec[0]));
        LabeledSample sample;
        sample.label = rec[0];
        sample.image = Tensor3(kSide, kSide, 3);
        for (int c = 0; c < 3; ++c)
            for (int m = 0; m < kSide; ++m)
                for (int n = 0; n < kSide; ++n)
                    sample.image.at(m, n, c) =
                        static_cast<double>(rec[1 + c * kPlane + m * kSide + n]) / 255.0;
        data.samples.push_back(std::move(sample));
    }
    return data;
}

std::vector<double> normalize_channel_means(LabeledDataset& data) {
    if (data.samples.empty()) throw std::invalid_argument("normalize: empty dataset");
    const int channels = data.samples.front().image.channels;
    std::vector<double> means(channels, 0.0);
    std::size_t per_channel = 0;
    for (const LabeledSample& s : data.samples) {
        const Tensor3& t = s.image;
        per_channel += static_cast<std::size_t>(t.rows) * t.cols;
        for (int m = 0; m < t.rows; ++m)
            for (int n = 0; n < t.cols; ++n)
                for (int l = 0; l < channels; ++l) means[l] += t.at(m, n, l);
    }
    for (double& m : means) m /= static_cast<double>(per_channel);
    for (LabeledSample& s : data.samples)
        for (int m = 0; m < s.image.rows; ++m)
            for (int n = 0; n < s.image.cols; ++n)
                for (int l = 0; l < channels; ++l) s.image.at(m, n, l) -= means[l];
    return means;
}

void denormalize_channel_means(LabeledDataset& data, const std::vector<double>& means) {
    for (LabeledSample& s : data.samples)
        for (int m = 0; m < s.image.rows; ++m)
            for (int n = 0; n < s.image.cols; ++n)
                for (int l = 0; l < s.image.channels; ++l) s.image.at(m, n, l) += means[l];
}

}  // namespace basisconv
