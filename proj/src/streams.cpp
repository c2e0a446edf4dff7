#include "dendron/streams.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dendron {

void TaskDataset::validate() const {
    if (class_count <= 0) throw ValidationError("task dataset has class_count <= 0");
    if (features.size() != 0 && features.rows() != labels.size())
        throw ValidationError("task dataset has " + std::to_string(features.rows()) +
                              " feature rows but " + std::to_string(labels.size()) + " labels");
    for (std::int32_t l : labels)
        if (l < 0 || l >= class_count)
            throw ValidationError("label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(class_count) + ")");
}

namespace {

Tensor permute_columns(const Tensor& x, const std::vector<std::uint32_t>& perm) {
    const std::size_t n = x.rows(), d = x.cols();
    Tensor y({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x.row(r);
        double* yr = y.row(r);
        for (std::size_t c = 0; c < d; ++c) yr[c] = xr[perm[c]];
    }
    return y;
}

TaskDataset with_permuted_features(const TaskDataset& d, const std::vector<std::uint32_t>& perm,
                                   int task_id) {
    TaskDataset out = d;
    out.task_id = task_id;
    out.features = permute_columns(d.features, perm);
    return out;
}

} // namespace

TaskStream make_permuted_stream(const TaskPair& base, int task_count, std::uint64_t seed) {
    if (task_count < 1) throw ValidationError("permuted stream needs task_count >= 1");
    base.train.validate();
    base.test.validate();
    const std::size_t d = base.train.feature_dim();

    TaskStream stream;
    stream.desc = {StreamKind::kPermuted, seed, task_count};
    Rng rng(seed);

    std::vector<std::uint32_t> identity(d);
    std::iota(identity.begin(), identity.end(), 0u);
    for (int t = 0; t < task_count; ++t) {
        std::vector<std::uint32_t> perm = identity;
        if (t > 0) {
            Rng prng = rng.fork(static_cast<std::uint64_t>(t));
            for (std::size_t i = d; i > 1; --i)
                std::swap(perm[i - 1], perm[prng.uniform_index(i)]);
        }
        TaskPair pair;
        pair.train = with_permuted_features(base.train, perm, t);
        pair.test = with_permuted_features(base.test, perm, t);
        pair.train.split = Split::kTrain;
        pair.test.split = Split::kTest;
        stream.feature_permutations.push_back(std::move(perm));
        stream.tasks.push_back(std::move(pair));
    }
    return stream;
}

namespace {

TaskDataset split_subset(const TaskDataset& base, const std::vector<std::int32_t>& group,
                         int task_id) {
    // new label = position of the old label in `group`
    std::vector<std::int32_t> remap(static_cast<std::size_t>(base.class_count), -1);
    for (std::size_t i = 0; i < group.size(); ++i) remap[group[i]] = static_cast<std::int32_t>(i);

    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < base.labels.size(); ++r)
        if (remap[base.labels[r]] >= 0) keep.push_back(r);

    const std::size_t d = base.feature_dim();
    TaskDataset out;
    out.task_id = task_id;
    out.class_count = static_cast<int>(group.size());
    out.split = base.split;
    out.features = Tensor({keep.size(), d});
    out.labels.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const double* src = base.features.row(keep[i]);
        std::copy(src, src + d, out.features.row(i));
        out.labels[i] = remap[base.labels[keep[i]]];
    }
    return out;
}

} // namespace

TaskStream make_split_stream(const TaskPair& base, int classes_per_task, std::uint64_t seed) {
    base.train.validate();
    base.test.validate();
    const int c_total = base.train.class_count;
    if (classes_per_task < 1 || c_total % classes_per_task != 0)
        throw ConfigError("classes_per_task " + std::to_string(classes_per_task) +
                          " does not divide class count " + std::to_string(c_total));
    const int t_count = c_total / classes_per_task;

    std::vector<std::int32_t> order(static_cast<std::size_t>(c_total));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    TaskStream stream;
    stream.desc = {StreamKind::kSplit, seed, t_count};
    for (int t = 0; t < t_count; ++t) {
        std::vector<std::int32_t> group(order.begin() + t * classes_per_task,
                                        order.begin() + (t + 1) * classes_per_task);
        TaskPair pair;
        pair.train = split_subset(base.train, group, t);
        pair.test = split_subset(base.test, group, t);
        stream.tasks.push_back(std::move(pair));
    }
    return stream;
}

TaskStream make_multidataset_stream(const std::vector<TaskPair>& datasets) {
    if (datasets.empty()) throw ValidationError("multidataset stream needs at least one dataset");
    const std::size_t d = datasets.front().train.feature_dim();
    TaskStream stream;
    stream.desc = {StreamKind::kMultiDataset, 0, static_cast<int>(datasets.size())};
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        if (datasets[i].train.feature_dim() != d || datasets[i].test.feature_dim() != d)
            throw ConfigError("dataset " + std::to_string(i) + " has feature dim " +
                              std::to_string(datasets[i].train.feature_dim()) +
                              ", expected " + std::to_string(d) +
                              " (pad or flatten beforehand)");
        datasets[i].train.validate();
        datasets[i].test.validate();
        TaskPair pair = datasets[i];
        pair.train.task_id = static_cast<int>(i);
        pair.test.task_id = static_cast<int>(i);
        stream.tasks.push_back(std::move(pair));
    }
    return stream;
}

namespace {

// Class means scaled by `separation`, redrawn until the pairwise distance
// floor holds. separation == 0 collapses all means to the origin.
std::vector<Tensor> draw_class_means(int classes, std::size_t dim_lo, std::size_t dim_hi,
                                     std::size_t dim_total, double separation, Rng& rng) {
    std::vector<Tensor> means;
    const int max_attempts = 1000;
    for (int c = 0; c < classes; ++c) {
        for (int attempt = 0;; ++attempt) {
            Tensor m({dim_total});
            for (std::size_t j = dim_lo; j < dim_hi; ++j) m[j] = separation * rng.normal();
            bool ok = true;
            if (separation > 0.0) {
                for (const Tensor& prev : means) {
                    double d2 = 0.0;
                    for (std::size_t j = 0; j < dim_total; ++j) {
                        const double dv = m[j] - prev[j];
                        d2 += dv * dv;
                    }
                    if (d2 < separation * separation) {
                        ok = false;
                        break;
                    }
                }
            }
            if (ok) {
                means.push_back(std::move(m));
                break;
            }
            if (attempt >= max_attempts)
                throw ValidationError("could not place class means at separation " +
                                      std::to_string(separation));
        }
    }
    return means;
}

TaskDataset sample_task(const std::vector<Tensor>& means, int per_class, std::size_t dim,
                        int task_id, Split split, Rng& rng) {
    const int classes = static_cast<int>(means.size());
    const std::size_t n = static_cast<std::size_t>(classes) * per_class;
    TaskDataset d;
    d.task_id = task_id;
    d.class_count = classes;
    d.split = split;
    d.features = Tensor({n, dim});
    d.labels.resize(n);
    std::size_t r = 0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++r) {
            double* row = d.features.row(r);
            for (std::size_t j = 0; j < dim; ++j) row[j] = means[c][j] + rng.normal();
            d.labels[r] = c;
        }
    }
    return d;
}

} // namespace

TaskStream make_synthetic_stream(const SyntheticConfig& cfg) {
    if (cfg.task_count < 1) throw ValidationError("synthetic stream needs task_count >= 1");
    if (cfg.class_count < 2) throw ValidationError("synthetic stream needs class_count >= 2");
    if (cfg.separation < 0.0) throw ValidationError("separation must be >= 0");
    if (cfg.similarity_clusters < 1)
        throw ValidationError("similarity_clusters must be >= 1");

    TaskStream stream;
    stream.desc = {StreamKind::kSynthetic, cfg.seed, cfg.task_count};
    Rng root(cfg.seed);

    const int n_clusters = cfg.similarity_clusters;
    // Family base means, one set per cluster, each confined to its own
    // feature slice so families stay mutually uninformative.
    std::vector<std::vector<Tensor>> family_means;
    if (n_clusters > 1) {
        const std::size_t slice = cfg.feature_dim / static_cast<std::size_t>(n_clusters);
        if (slice == 0) throw ValidationError("feature_dim too small for similarity_clusters");
        for (int q = 0; q < n_clusters; ++q) {
            Rng mr = root.fork(0x464d00 + static_cast<std::uint64_t>(q));
            family_means.push_back(draw_class_means(cfg.class_count, q * slice,
                                                    (q + 1) * slice, cfg.feature_dim,
                                                    cfg.separation, mr));
        }
    }

    for (int t = 0; t < cfg.task_count; ++t) {
        std::vector<Tensor> means;
        if (n_clusters == 1) {
            Rng mr = root.fork(0x4d4e00 + static_cast<std::uint64_t>(t));
            means = draw_class_means(cfg.class_count, 0, cfg.feature_dim, cfg.feature_dim,
                                     cfg.separation, mr);
        } else {
            const int fam = t % n_clusters;
            const std::size_t slice = cfg.feature_dim / static_cast<std::size_t>(n_clusters);
            Rng jr = root.fork(0x4a5400 + static_cast<std::uint64_t>(t));
            means = family_means[fam];
            for (Tensor& m : means)
                for (std::size_t j = fam * slice; j < (fam + 1) * slice; ++j)
                    m[j] += cfg.cluster_jitter * jr.normal();
        }
        Rng train_rng = root.fork(0x545200 + static_cast<std::uint64_t>(t));
        Rng test_rng = root.fork(0x544500 + static_cast<std::uint64_t>(t));
        TaskPair pair;
        pair.train = sample_task(means, cfg.train_per_class, cfg.feature_dim, t, Split::kTrain,
                                 train_rng);
        pair.test = sample_task(means, cfg.test_per_class, cfg.feature_dim, t, Split::kTest,
                                test_rng);
        stream.tasks.push_back(std::move(pair));
    }
    return stream;
}

TaskPair subsample_pair(const TaskPair& base, std::size_t n_train, std::size_t n_test,
                        std::uint64_t seed) {
    auto take = [](const TaskDataset& d, std::size_t n, Rng& rng) {
        n = std::min(n, d.sample_count());
        std::vector<std::size_t> idx(d.sample_count());
        std::iota(idx.begin(), idx.end(), 0u);
        rng.shuffle(idx);
        idx.resize(n);
        std::sort(idx.begin(), idx.end());
        TaskDataset out;
        out.task_id = d.task_id;
        out.class_count = d.class_count;
        out.split = d.split;
        out.features = Tensor({n, d.feature_dim()});
        out.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* src = d.features.row(idx[i]);
            std::copy(src, src + d.feature_dim(), out.features.row(i));
            out.labels[i] = d.labels[idx[i]];
        }
        return out;
    };
    Rng rng(seed);
    Rng train_rng = rng.fork(1);
    Rng test_rng = rng.fork(2);
    TaskPair out;
    out.train = take(base.train, n_train, train_rng);
    out.test = take(base.test, n_test, test_rng);
    return out;
}

TaskDataset pad_features(const TaskDataset& d, std::size_t dim) {
    const std::size_t cur = d.feature_dim();
    if (cur == dim) return d;
    if (cur > dim)
        throw ConfigError("cannot pad " + std::to_string(cur) + " features down to " +
                          std::to_string(dim));
    TaskDataset out = d;
    out.features = Tensor({d.sample_count(), dim});
    for (std::size_t r = 0; r < d.sample_count(); ++r) {
        const double* src = d.features.row(r);
        std::copy(src, src + cur, out.features.row(r));
    }
    return out;
}

} // namespace dendron
