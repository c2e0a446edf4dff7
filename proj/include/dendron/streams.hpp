#ifndef DENDRON_STREAMS_HPP
#define DENDRON_STREAMS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dendron/tensor.hpp"

namespace dendron {

enum class Split { kTrain, kTest };

// One labeled classification dataset arriving as a unit in the stream.
struct TaskDataset {
    int task_id = 0;
    Tensor features;                  // [N x D]
    std::vector<std::int32_t> labels; // N entries in [0, class_count)
    int class_count = 0;
    Split split = Split::kTrain;

    std::size_t sample_count() const { return labels.size(); }
    std::size_t feature_dim() const { return features.size() == 0 ? 0 : features.cols(); }
    void validate() const;
};

struct TaskPair {
    TaskDataset train;
    TaskDataset test;
};

enum class StreamKind { kPermuted, kSplit, kMultiDataset, kSynthetic };

struct StreamDescriptor {
    StreamKind kind = StreamKind::kSynthetic;
    std::uint64_t seed = 0;
    int task_count = 0;
};

struct TaskStream {
    StreamDescriptor desc;
    std::vector<TaskPair> tasks;

    // Per-task feature permutations; only populated for permuted streams
    // (task 0 holds the identity).
    std::vector<std::vector<std::uint32_t>> feature_permutations;

    std::size_t size() const { return tasks.size(); }
};

// T tasks from one base pair: task 0 is the base unchanged, tasks 1..T-1
// apply an independent fixed feature permutation to train and test alike.
TaskStream make_permuted_stream(const TaskPair& base, int task_count, std::uint64_t seed);

// Partitions the base's classes into groups of k (shuffled by seed); each
// task gets the samples of one group with labels remapped to [0, k).
TaskStream make_split_stream(const TaskPair& base, int classes_per_task, std::uint64_t seed);

// Joins independent dataset pairs in the given order; all must share the
// feature dimension.
TaskStream make_multidataset_stream(const std::vector<TaskPair>& datasets);

struct SyntheticConfig {
    int task_count = 1;
    int class_count = 4;
    std::size_t feature_dim = 16;
    int train_per_class = 100;
    int test_per_class = 50;
    double separation = 6.0; // min pairwise distance between class means, in noise stddevs
    std::uint64_t seed = 0;

    // similarity_clusters > 1 groups tasks into that many families: each
    // family keeps its class means (plus a small per-task jitter) in its own
    // feature subspace, so tasks are similar within a family and unrelated
    // across families. Task i belongs to family i % similarity_clusters.
    int similarity_clusters = 1;
    double cluster_jitter = 0.5;
};

// Gaussian-cluster classification tasks, unit noise stddev. Deterministic
// in the config.
TaskStream make_synthetic_stream(const SyntheticConfig& cfg);

// Keeps the first n_train / n_test samples of a seeded shuffle. Used to cut
// large bases down to desk scale before building streams.
TaskPair subsample_pair(const TaskPair& base, std::size_t n_train, std::size_t n_test,
                        std::uint64_t seed);

// Zero-pads every sample to `dim` features (no-op when already that wide).
TaskDataset pad_features(const TaskDataset& d, std::size_t dim);

// ---- IDX binary format -----------------------------------------------------
//
// Header: bytes [0, 0, type, ndims] with type 0x08 (unsigned byte), then
// ndims big-endian uint32 dimension sizes, then raw data bytes. Pixel bytes
// are scaled to [0, 1] on load.

Tensor load_idx(const std::string& path);
// Same header walk but returns the raw bytes as integers (label files).
std::vector<std::int32_t> load_idx_labels(const std::string& path);
// Writes a [0,1]-scaled tensor back to IDX bytes (values * 255, rounded).
void write_idx(const std::string& path, const Tensor& t);

// MNIST-style IDX dataset pair rooted at `dir` using the conventional four
// file names (train-images-idx3-ubyte, ...). Images are flattened to rows.
TaskPair load_idx_pair(const std::string& dir);

} // namespace dendron

#endif
