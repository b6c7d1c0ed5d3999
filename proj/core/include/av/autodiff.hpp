#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "av/tensor.hpp"

// Reverse-mode automatic differentiation over dense double tensors.
//
// Graphs are built eagerly; nodes are created in topological order, so the
// creation id doubles as the traversal key. Gradients are accumulated into a
// per-backward-call map rather than into the nodes, which keeps repeated and
// concurrent backward passes over shared parameter leaves independent.
namespace av::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  bool needs_grad = false;
  int64_t id = 0;
  std::vector<NodePtr> parents;
  // Accumulate into parent_grads[i] (nullptr when that parent needs no grad).
  std::function<void(const Tensor& g, const std::vector<Tensor*>& parent_grads)> backward;
};

class Var {
 public:
  Var() = default;
  static Var leaf(Tensor value, bool needs_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  bool needs_grad() const { return node_ && node_->needs_grad; }
  const NodePtr& node() const { return node_; }

  static Var from_node(NodePtr n);

 private:
  NodePtr node_;
};

class GradMap {
 public:
  const Tensor* find(const Var& v) const { return find(v.node().get()); }
  const Tensor* find(const Node* n) const;
  Tensor& get_or_create(const Node* n, const std::vector<int64_t>& shape);

 private:
  std::unordered_map<const Node*, Tensor> grads_;
};

// Reverse accumulation from a scalar root. Returns gradients for every node
// that needs one; look up parameter leaves in the result.
GradMap backward(const Var& root);

// ---- op library ----------------------------------------------------------

Var constant(Tensor v);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double negative_slope);
Var softplus(const Var& a);  // numerically stable log(1 + e^x)

// Concatenate along the last (channel) axis; leading dims must match.
Var concat_channels(const std::vector<Var>& xs);

// Convolutions use "same" padding with ceil-mode output lengths:
// out = ceil(in / stride), pad_before = pad_total / 2.
Var conv1d(const Var& x, const Var& w, const Var& b, int stride);   // x [T,Ci], w [K,Ci,Co]
Var conv2d(const Var& x, const Var& w, const Var& b, int stride_t,
           int stride_f);                                           // x [T,F,Ci], w [Kt,Kf,Ci,Co]
Var conv3d(const Var& x, const Var& w, const Var& b, int stride_t, int stride_h,
           int stride_w);  // x [T,H,W,Ci], w [Kt,Kh,Kw,Ci,Co]

// Ceil-mode average pooling over [T,H,W,C]; border windows average only the
// in-bounds cells.
Var avg_pool3d(const Var& x, std::array<int, 3> kernel, std::array<int, 3> stride);

Var spatial_mean(const Var& x);                    // [T,H,W,C] -> [T,C]
Var global_mean_keep_channels(const Var& x);       // [...,C] -> [C]
Var tile_spatial(const Var& x, int h, int w);      // [T,C] -> [T,H,W,C]
Var tile_freq(const Var& x, int f);                // [T,C] -> [T,F,C]
Var linear(const Var& x, const Var& w, const Var& b);  // x [Ci] -> [Co]

// Nearest-neighbour 2x upsampling cropped to an explicit target (decoder use).
Var upsample2x_2d(const Var& x, int64_t out_t, int64_t out_f);  // [T,F,C]

// Linear time resampling [T,C] -> [rows.size(),C]; each output row mixes two
// input rows. Rows come from make_linear_resample_rows.
struct ResampleRow {
  int i0 = 0, i1 = 0;
  double w0 = 1.0, w1 = 0.0;
};
std::vector<ResampleRow> make_linear_resample_rows(int64_t in_len, double in_rate,
                                                   int64_t out_len, double out_rate);
Var time_resample_linear(const Var& x, const std::vector<ResampleRow>& rows);

// Replace by zeros of the same shape; used for stream ablation. No gradient
// flows into x.
Var zeros_like(const Var& x);

// ---- scalar losses -------------------------------------------------------

Var mean_all(const Var& x);                          // -> scalar
Var l1_mean(const Var& pred, const Tensor& target);  // mean |pred - target|
Var l1_mean_vv(const Var& a, const Var& b);          // mean |a - b|
// mean(1 - cos(pred - target)); circular distance for phase planes.
Var circular_mean(const Var& pred, const Tensor& target);
Var softmax_cross_entropy(const Var& logits, int label);
Var add_scalars(const std::vector<Var>& xs);

// ---- parameters ----------------------------------------------------------

struct ParamStore {
  std::vector<std::pair<std::string, Var>> items;

  Var add(const std::string& name, Tensor init);
  const Var* find(const std::string& name) const;
  int64_t total_size() const;
  bool all_finite() const;

  // Copies values by name from another store; throws if a name is missing in
  // `from`. Extra names in `from` are ignored.
  void load_values_from(const ParamStore& from);
};

// Max relative error between analytic and central finite-difference gradients
// of f() over the given parameters. Probes up to entries_per_tensor entries
// of each parameter (deterministically spread over the tensor).
double gradcheck(const std::function<Var()>& f, const std::vector<Var>& params,
                 double step, int entries_per_tensor);

}  // namespace av::ad
