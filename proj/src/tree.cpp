#include "dendron/tree.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace dendron {

namespace {

// Survival probability for the block at 1-based `pos` of a path with
// `total` blocks: linear decay from 1.0 (shallowest) to `floor` (deepest).
double survival_at(int pos, int total, double floor) {
    if (total <= 1) return 1.0;
    return 1.0 - (1.0 - floor) * static_cast<double>(pos - 1) / static_cast<double>(total - 1);
}

} // namespace

LayerStack make_backbone_stack(const ModelArch& arch, std::vector<double> block_survival) {
    LayerStack s;
    s.layers.push_back(AffineDesc{arch.feature_dim, arch.hidden_width});
    s.layers.push_back(FeatureNormDesc{arch.hidden_width});
    s.layers.push_back(NonlinearityDesc{});
    for (double p : block_survival)
        s.layers.push_back(ResidualBlockDesc{arch.hidden_width, p});
    s.validate();
    return s;
}

ModelTree::ModelTree(ModelArch arch, int max_depth, Rng init_rng)
    : arch_(arch), max_depth_(max_depth) {
    if (max_depth_ < 1) throw ValidationError("max_depth must be >= 1");
    if (arch_.feature_dim == 0) throw ValidationError("feature_dim must be positive");
    // Backbone block survivals follow the schedule of the first task's
    // path; once trained they are frozen along with the weights.
    const int first_path = arch_.backbone_blocks + arch_.node_shared_blocks +
                           arch_.node_task_blocks;
    std::vector<double> survival;
    for (int b = 1; b <= arch_.backbone_blocks; ++b)
        survival.push_back(survival_at(b, first_path, arch_.survival_floor));
    backbone_stack_ = make_backbone_stack(arch_, std::move(survival));
    init_params(backbone_stack_, init_rng, backbone_params_);
}

Node& ModelTree::node(NodeId id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw ValidationError("unknown node id " + std::to_string(id));
    return it->second;
}

const Node& ModelTree::node(NodeId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw ValidationError("unknown node id " + std::to_string(id));
    return it->second;
}

NodeId ModelTree::grow_node(NodeId attach_to, int task_id, int class_count, Rng& init_rng) {
    if (attach_to != kBackbone && !has_node(attach_to))
        throw ValidationError("attach point " + std::to_string(attach_to) + " does not exist");
    const int attach_depth = depth_of(attach_to);
    if (attach_depth >= max_depth_)
        throw DepthLimitError("cannot attach under " +
                              (attach_to == kBackbone ? std::string("BACKBONE")
                                                      : std::to_string(attach_to)) +
                              ": depth limit " + std::to_string(max_depth_) + " reached");
    if (class_count < 1) throw ValidationError("class_count must be >= 1");

    Node n;
    n.node_id = next_id_++;
    n.parent = attach_to;
    n.depth = attach_depth + 1;
    n.task_id = task_id;
    n.class_count = class_count;

    // Block positions along the new full path decide the survival schedule.
    const int ns = arch_.node_shared_blocks;
    const int nt = arch_.node_task_blocks;
    int prefix = arch_.backbone_blocks;
    for (NodeId cur = attach_to; cur != kBackbone; cur = node(cur).parent)
        prefix += static_cast<int>(node(cur).shared_stack.layers.size());
    const int total = prefix + ns + nt;

    for (int b = 0; b < ns; ++b)
        n.shared_stack.layers.push_back(ResidualBlockDesc{
            arch_.hidden_width, survival_at(prefix + 1 + b, total, arch_.survival_floor)});
    for (int b = 0; b < nt; ++b)
        n.task_stack.layers.push_back(ResidualBlockDesc{
            arch_.hidden_width, survival_at(prefix + ns + 1 + b, total, arch_.survival_floor)});
    n.task_stack.layers.push_back(
        AffineDesc{arch_.hidden_width, static_cast<std::size_t>(class_count)});

    init_params(n.shared_stack, init_rng, n.shared_params);
    init_params(n.task_stack, init_rng, n.task_params);

    const NodeId id = n.node_id;
    nodes_.emplace(id, std::move(n));
    return id;
}

void ModelTree::finish_task(int task_id) {
    const NodeId id = node_for_task(task_id);
    Node& n = node(id);
    for (Param& p : n.shared_params) p.frozen = true;
    for (Param& p : n.task_params) p.frozen = true;
    for (Param& p : backbone_params_) p.frozen = true;
    trained_task_ids_.push_back(task_id);
}

NodeId ModelTree::node_for_task(int task_id) const {
    for (const auto& [id, n] : nodes_)
        if (n.task_id == task_id) return id;
    throw ValidationError("no node for task " + std::to_string(task_id));
}

PathNetwork ModelTree::path_for(int task_id) const {
    const NodeId leaf = node_for_task(task_id);
    std::vector<NodeId> chain;
    for (NodeId cur = leaf; cur != kBackbone; cur = node(cur).parent) chain.push_back(cur);
    std::reverse(chain.begin(), chain.end());

    PathNetwork path;
    path.task_id = task_id;
    path.depth = node(leaf).depth;
    path.class_count = node(leaf).class_count;
    path.segments.push_back({&backbone_stack_, &backbone_params_});
    for (NodeId id : chain) {
        const Node& n = node(id);
        path.segments.push_back({&n.shared_stack, &n.shared_params});
    }
    path.segments.push_back({&node(leaf).task_stack, &node(leaf).task_params});
    return path;
}

Tensor path_logits(const PathNetwork& path, const Tensor& inputs) {
    Tensor x = inputs;
    for (const auto& seg : path.segments)
        x = forward(*seg.stack, std::span<const Param>(seg.params->data(), seg.params->size()), x,
                    Mode::kEval);
    return x;
}

Tensor ModelTree::predict(int task_id, const Tensor& inputs) const {
    if (inputs.cols() != arch_.feature_dim)
        throw DimensionError("predict: inputs have " + std::to_string(inputs.cols()) +
                             " features, tree expects " + std::to_string(arch_.feature_dim));
    return softmax(path_logits(path_for(task_id), inputs));
}

std::vector<NodeId> ModelTree::candidate_nodes() const {
    std::vector<NodeId> out{kBackbone};
    for (const auto& [id, n] : nodes_)
        if (n.depth < max_depth_) out.push_back(id);
    return out;
}

ModelTree::ParamCost ModelTree::param_cost(int task_id) const {
    const NodeId leaf = node_for_task(task_id);
    ParamCost cost;
    cost.depth = node(leaf).depth;
    for (const Param& p : backbone_params_) cost.backbone_count += p.value.size();
    for (NodeId cur = leaf; cur != kBackbone; cur = node(cur).parent)
        for (const Param& p : node(cur).shared_params) cost.shared_count += p.value.size();
    for (const Param& p : node(leaf).task_params) cost.task_count += p.value.size();
    return cost;
}

// ---- persistence ------------------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

json stack_to_json(const LayerStack& s) {
    json arr = json::array();
    for (const auto& l : s.layers) {
        if (const auto* a = std::get_if<AffineDesc>(&l))
            arr.push_back({{"kind", "affine"}, {"in", a->in}, {"out", a->out}});
        else if (std::holds_alternative<NonlinearityDesc>(l))
            arr.push_back({{"kind", "relu"}});
        else if (const auto* f = std::get_if<FeatureNormDesc>(&l))
            arr.push_back({{"kind", "feature_norm"}, {"dim", f->dim}});
        else if (const auto* b = std::get_if<ResidualBlockDesc>(&l))
            arr.push_back({{"kind", "residual_block"},
                           {"width", b->width},
                           {"survival_prob", b->survival_prob}});
    }
    return arr;
}

LayerStack stack_from_json(const json& arr) {
    LayerStack s;
    for (const auto& l : arr) {
        const std::string kind = l.at("kind").get<std::string>();
        if (kind == "affine")
            s.layers.push_back(AffineDesc{l.at("in").get<std::size_t>(),
                                          l.at("out").get<std::size_t>()});
        else if (kind == "relu")
            s.layers.push_back(NonlinearityDesc{});
        else if (kind == "feature_norm")
            s.layers.push_back(FeatureNormDesc{l.at("dim").get<std::size_t>()});
        else if (kind == "residual_block")
            s.layers.push_back(ResidualBlockDesc{l.at("width").get<std::size_t>(),
                                                 l.at("survival_prob").get<double>()});
        else
            throw IntegrityError("manifest: unknown layer kind '" + kind + "'");
    }
    return s;
}

void write_blob(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IntegrityError(path + ": cannot open for writing");
    const std::uint64_t count = t.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw IntegrityError(path + ": write failed");
}

Tensor read_blob(const std::string& path, const std::vector<std::size_t>& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError(path + ": missing tensor blob");
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in) throw IntegrityError(path + ": truncated length prefix");
    std::size_t expect = 1;
    for (std::size_t d : shape) expect *= d;
    if (count != expect)
        throw IntegrityError(path + ": blob stores " + std::to_string(count) +
                             " values, manifest expects " + std::to_string(expect));
    std::vector<double> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IntegrityError(path + ": truncated tensor data");
    char extra;
    if (in.read(&extra, 1))
        throw IntegrityError(path + ": trailing bytes after tensor data");
    return Tensor(shape, std::move(data));
}

json params_to_json(const std::vector<Param>& params, const std::string& dir,
                    const std::string& prefix) {
    json arr = json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_p%03zu.bin", prefix.c_str(), i);
        write_blob(dir + "/" + name, params[i].value);
        arr.push_back({{"file", name},
                       {"shape", params[i].value.shape()},
                       {"frozen", params[i].frozen}});
    }
    return arr;
}

std::vector<Param> params_from_json(const json& arr, const std::string& dir) {
    std::vector<Param> out;
    for (const auto& p : arr) {
        const std::string file = p.at("file").get<std::string>();
        const auto shape = p.at("shape").get<std::vector<std::size_t>>();
        Param param(read_blob(dir + "/" + file, shape));
        param.frozen = p.at("frozen").get<bool>();
        out.push_back(std::move(param));
    }
    return out;
}

} // namespace

void ModelTree::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "dendron-tree";
    manifest["version"] = 1;
    manifest["max_depth"] = max_depth_;
    manifest["next_id"] = next_id_;
    manifest["arch"] = {{"feature_dim", arch_.feature_dim},
                        {"hidden_width", arch_.hidden_width},
                        {"backbone_blocks", arch_.backbone_blocks},
                        {"node_shared_blocks", arch_.node_shared_blocks},
                        {"node_task_blocks", arch_.node_task_blocks},
                        {"survival_floor", arch_.survival_floor}};
    manifest["trained_task_ids"] = trained_task_ids_;
    manifest["backbone"] = {{"stack", stack_to_json(backbone_stack_)},
                            {"params", params_to_json(backbone_params_, dir, "backbone")}};
    json nodes = json::array();
    for (const auto& [id, n] : nodes_) {
        const std::string prefix = "node" + std::to_string(id);
        nodes.push_back({{"node_id", n.node_id},
                         {"parent", n.parent},
                         {"depth", n.depth},
                         {"task_id", n.task_id},
                         {"class_count", n.class_count},
                         {"shared_stack", stack_to_json(n.shared_stack)},
                         {"task_stack", stack_to_json(n.task_stack)},
                         {"shared_params", params_to_json(n.shared_params, dir, prefix + "_shared")},
                         {"task_params", params_to_json(n.task_params, dir, prefix + "_task")}});
    }
    manifest["nodes"] = std::move(nodes);

    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IntegrityError(dir + "/manifest.json: cannot open for writing");
    out << manifest.dump(2) << "\n";
    if (!out) throw IntegrityError(dir + "/manifest.json: write failed");
}

ModelTree ModelTree::load(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IntegrityError(dir + "/manifest.json: missing manifest");
    json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw IntegrityError(dir + "/manifest.json: unparsable manifest: " + e.what());
    }
    try {
        if (manifest.at("format").get<std::string>() != "dendron-tree")
            throw IntegrityError(dir + ": not a tree directory");

        ModelTree tree;
        tree.max_depth_ = manifest.at("max_depth").get<int>();
        tree.next_id_ = manifest.at("next_id").get<NodeId>();
        const auto& a = manifest.at("arch");
        tree.arch_.feature_dim = a.at("feature_dim").get<std::size_t>();
        tree.arch_.hidden_width = a.at("hidden_width").get<std::size_t>();
        tree.arch_.backbone_blocks = a.at("backbone_blocks").get<int>();
        tree.arch_.node_shared_blocks = a.at("node_shared_blocks").get<int>();
        tree.arch_.node_task_blocks = a.at("node_task_blocks").get<int>();
        tree.arch_.survival_floor = a.at("survival_floor").get<double>();
        tree.trained_task_ids_ = manifest.at("trained_task_ids").get<std::vector<int>>();
        tree.backbone_stack_ = stack_from_json(manifest.at("backbone").at("stack"));
        tree.backbone_params_ = params_from_json(manifest.at("backbone").at("params"), dir);
        for (const auto& nj : manifest.at("nodes")) {
            Node n;
            n.node_id = nj.at("node_id").get<NodeId>();
            n.parent = nj.at("parent").get<NodeId>();
            n.depth = nj.at("depth").get<int>();
            n.task_id = nj.at("task_id").get<int>();
            n.class_count = nj.at("class_count").get<int>();
            n.shared_stack = stack_from_json(nj.at("shared_stack"));
            n.task_stack = stack_from_json(nj.at("task_stack"));
            n.shared_params = params_from_json(nj.at("shared_params"), dir);
            n.task_params = params_from_json(nj.at("task_params"), dir);
            tree.nodes_.emplace(n.node_id, std::move(n));
        }
        return tree;
    } catch (const json::exception& e) {
        throw IntegrityError(dir + "/manifest.json: " + e.what());
    }
}

} // namespace dendron
