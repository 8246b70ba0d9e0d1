#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cdgan/error.hpp"
#include "cdgan/tensor.hpp"

namespace cdgan {

// The six parametric networks. Each parameter belongs to exactly one group;
// gradient normalization and update scoping operate per group.
enum class Group : std::uint8_t { EncoderA, EncoderB, DecoderA, DecoderB, DiscriminatorA, DiscriminatorB };

inline constexpr int kGroupCount = 6;

using GroupMask = std::uint32_t;

constexpr GroupMask mask_of(Group g) noexcept { return GroupMask{1} << static_cast<unsigned>(g); }

inline constexpr GroupMask kGeneratorGroups = mask_of(Group::EncoderA) | mask_of(Group::EncoderB) |
                                              mask_of(Group::DecoderA) | mask_of(Group::DecoderB);
inline constexpr GroupMask kDiscriminatorGroups =
    mask_of(Group::DiscriminatorA) | mask_of(Group::DiscriminatorB);
inline constexpr GroupMask kAllGroups = kGeneratorGroups | kDiscriminatorGroups;

inline const char* group_name(Group g) {
  switch (g) {
    case Group::EncoderA: return "e_A";
    case Group::EncoderB: return "e_B";
    case Group::DecoderA: return "g_A";
    case Group::DecoderB: return "g_B";
    case Group::DiscriminatorA: return "d_A";
    case Group::DiscriminatorB: return "d_B";
  }
  return "?";
}

// Handle to a node on a Graph tape.
struct Var {
  int id = -1;
  [[nodiscard]] bool valid() const noexcept { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep from the loss visits every consumer before its producers.
//
// Every node carries the mask of parameter groups it depends on. backward()
// takes the mask of groups whose gradients are wanted and skips any edge that
// cannot reach one of them; computing the discriminator gradient therefore
// never walks back into the generators, and vice versa.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var self, const Tensor<T>& grad)>;

  explicit Graph(bool training) : training_(training) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  [[nodiscard]] bool training() const noexcept { return training_; }
  [[nodiscard]] int size() const noexcept { return static_cast<int>(nodes_.size()); }

  Var constant(Tensor<T> value) { return push(std::move(value), 0, nullptr); }

  // Leaf bound to a parameter tensor owned elsewhere. The tensor must outlive
  // the graph and stay at the same address. Repeated calls return the same
  // node so gradients from every use accumulate in one place.
  Var param(const Tensor<T>& tensor, Group group) {
    if (auto it = param_ids_.find(&tensor); it != param_ids_.end()) {
      return Var{it->second};
    }
    Node node;
    node.external = &tensor;
    node.deps = mask_of(group);
    nodes_.push_back(std::move(node));
    const int id = size() - 1;
    param_ids_.emplace(&tensor, id);
    return Var{id};
  }

  Var push(Tensor<T> value, GroupMask deps, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    node.deps = deps;
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var{size() - 1};
  }

  [[nodiscard]] const Tensor<T>& value(Var v) const {
    check(v);
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.external != nullptr ? *n.external : n.value;
  }

  [[nodiscard]] GroupMask deps(Var v) const {
    check(v);
    return nodes_[static_cast<std::size_t>(v.id)].deps;
  }

  // True while a backward sweep is running and v can reach a wanted group.
  [[nodiscard]] bool needs(Var v) const noexcept {
    return v.valid() && (nodes_[static_cast<std::size_t>(v.id)].deps & wanted_) != 0;
  }

  // Gradient accumulator for v, zero-initialized on first touch.
  Tensor<T>& grad_accum(Var v) {
    auto& g = grads_[static_cast<std::size_t>(v.id)];
    if (g.empty()) {
      g = Tensor<T>(value(v).shape());
    }
    return g;
  }

  // Reverse sweep from a scalar node. Afterwards param_grad() returns
  // d(loss)/d(param) for every parameter in a wanted group.
  void backward(Var loss, GroupMask wanted) {
    check(loss);
    if (value(loss).size() != 1) {
      throw InputError("backward() requires a scalar loss node");
    }
    grads_.assign(nodes_.size(), Tensor<T>{});
    wanted_ = wanted;
    grads_[static_cast<std::size_t>(loss.id)] = Tensor<T>(value(loss).shape(), T(1));
    for (int id = loss.id; id >= 0; --id) {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      auto& g = grads_[static_cast<std::size_t>(id)];
      if (g.empty() || (node.deps & wanted_) == 0 || !node.backward) {
        continue;
      }
      const Tensor<T> upstream = std::move(g);
      g = Tensor<T>{};
      node.backward(*this, Var{id}, upstream);
    }
    wanted_ = 0;
  }

  // Gradient of the last backward() w.r.t. a parameter tensor; zeros if the
  // parameter was unused or outside the wanted mask.
  [[nodiscard]] Tensor<T> param_grad(const Tensor<T>& tensor) const {
    auto it = param_ids_.find(&tensor);
    if (it == param_ids_.end() || grads_.size() <= static_cast<std::size_t>(it->second) ||
        grads_[static_cast<std::size_t>(it->second)].empty()) {
      return Tensor<T>(tensor.shape());
    }
    return grads_[static_cast<std::size_t>(it->second)];
  }

  [[nodiscard]] bool uses_param(const Tensor<T>& tensor) const { return param_ids_.contains(&tensor); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    GroupMask deps = 0;
    BackwardFn backward;
  };

  void check(Var v) const {
    if (v.id < 0 || v.id >= size()) {
      throw InputError("invalid graph variable " + std::to_string(v.id));
    }
  }

  bool training_;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::unordered_map<const Tensor<T>*, int> param_ids_;
  GroupMask wanted_ = 0;
};

}  // namespace cdgan
