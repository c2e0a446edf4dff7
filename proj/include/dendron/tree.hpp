#ifndef DENDRON_TREE_HPP
#define DENDRON_TREE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dendron/layers.hpp"

namespace dendron {

using NodeId = std::int32_t;
constexpr NodeId kBackbone = -1;

// Architecture knobs shared by the tree and the baseline models.
struct ModelArch {
    std::size_t feature_dim = 0;
    std::size_t hidden_width = 64;
    int backbone_blocks = 2;
    int node_shared_blocks = 1;
    int node_task_blocks = 1;
    // stochastic-depth schedule: survival decays linearly from 1.0 for the
    // shallowest block of a path to this floor for the deepest
    double survival_floor = 0.8;
};

// One unit of growth: a shared stack future tasks can attach to, plus a
// task-specific stack ending in a classifier.
struct Node {
    NodeId node_id = 0;
    NodeId parent = kBackbone;
    int depth = 1; // backbone children have depth 1
    int task_id = 0;
    int class_count = 0;
    LayerStack shared_stack;
    LayerStack task_stack;
    std::vector<Param> shared_params;
    std::vector<Param> task_params;
};

// Read-only view of one task's full network: backbone, then the shared
// stacks from the root-most ancestor down to the node, then the node's task
// stack. Evaluating a path never mutates a Param.
struct PathNetwork {
    struct Segment {
        const LayerStack* stack;
        const std::vector<Param>* params;
    };
    std::vector<Segment> segments;
    int depth = 0;
    int task_id = 0;
    int class_count = 0;
};

class ModelTree {
public:
    ModelTree(ModelArch arch, int max_depth, Rng init_rng);

    const ModelArch& arch() const { return arch_; }
    int max_depth() const { return max_depth_; }

    LayerStack& backbone_stack() { return backbone_stack_; }
    const LayerStack& backbone_stack() const { return backbone_stack_; }
    std::vector<Param>& backbone_params() { return backbone_params_; }
    const std::vector<Param>& backbone_params() const { return backbone_params_; }

    const std::map<NodeId, Node>& nodes() const { return nodes_; }
    Node& node(NodeId id);
    const Node& node(NodeId id) const;
    bool has_node(NodeId id) const { return nodes_.count(id) != 0; }

    const std::vector<int>& trained_task_ids() const { return trained_task_ids_; }
    // Marks a task finished: freezes every param of its node (and the
    // backbone) and records it in training order.
    void finish_task(int task_id);

    // Appends a new node for `task_id` under `attach_to` (kBackbone or an
    // existing node id). Throws DepthLimitError when the attach point is
    // already at max_depth. All other params stay frozen; the new node's
    // params are trainable.
    NodeId grow_node(NodeId attach_to, int task_id, int class_count, Rng& init_rng);

    // The unique backbone -> ... -> leaf chain for a trained task.
    PathNetwork path_for(int task_id) const;
    NodeId node_for_task(int task_id) const;

    // Deterministic eval-mode class probabilities for a trained task.
    Tensor predict(int task_id, const Tensor& inputs) const;

    // Attachment candidates: kBackbone plus every node with depth <
    // max_depth, ascending by node id.
    std::vector<NodeId> candidate_nodes() const;

    struct ParamCost {
        std::size_t backbone_count = 0;
        std::size_t shared_count = 0;
        std::size_t task_count = 0;
        int depth = 0;
    };
    ParamCost param_cost(int task_id) const;

    int depth_of(NodeId id) const { return id == kBackbone ? 0 : node(id).depth; }

    void save(const std::string& dir) const;
    static ModelTree load(const std::string& dir);

private:
    ModelArch arch_;
    int max_depth_;
    LayerStack backbone_stack_;
    std::vector<Param> backbone_params_;
    std::map<NodeId, Node> nodes_;
    std::vector<int> trained_task_ids_;
    NodeId next_id_ = 0;

    ModelTree() = default; // for load()
};

// Eval-mode forward through a path; returns logits (pre-softmax).
Tensor path_logits(const PathNetwork& path, const Tensor& inputs);

// Backbone layout used by the tree and by baseline models: an entry affine
// into the hidden width, feature norm, rectifier, then residual blocks.
LayerStack make_backbone_stack(const ModelArch& arch, std::vector<double> block_survival);

} // namespace dendron

#endif
