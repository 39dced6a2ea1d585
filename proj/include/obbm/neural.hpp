#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "obbm/exact_dp.hpp"
#include "obbm/generators.hpp"
#include "obbm/instance.hpp"
#include "obbm/policy.hpp"
#include "obbm/rng.hpp"

namespace obbm {

inline constexpr int kFeatureDim = 6;

// Snapshot of a decision state as a message-passing graph. Node order: all m
// online nodes first, then the still-available offline nodes ascending, then
// one artificial skip node connected to every online node by weight 0.
// Matched offline nodes are dropped from the graph entirely.
//
// Features per node:
//   [0] offline indicator (real offline nodes only)
//   [1] skip indicator
//   [2] arrived-now indicator (the current online node)
//   [3] arrival status: past online = its arrival bit, current = 1, future
//       online = its arrival probability; offline and skip = 1 (available)
//   [4] remaining time when node s arrives, (m - s)/m for 0-based online s;
//       0 for offline and skip
//   [5] global scalar: remaining online count / max(1, available offline)
struct FeatureGraph {
  int num_nodes = 0;
  int m = 0;
  int skip_node = -1;
  int current_node = -1;
  std::vector<double> features;  // num_nodes x kFeatureDim, row-major
  std::vector<std::vector<std::pair<int, double>>> adj;  // ascending neighbor ids
  std::vector<int> mask;        // action candidates: skip node first, then N(t) cap S ascending
  std::vector<int> offline_id;  // per node, original offline id or -1
  std::vector<int> online_id;   // per node, original online id or -1

  double feature(int node, int f) const { return features[node * kFeatureDim + f]; }
};

inline FeatureGraph encode_state(const Instance& inst, const MatchingState& state) {
  if (!state.arrived) throw std::invalid_argument("encode_state: no arrived node at this state");
  if (state.t < 1 || state.t > inst.n_online) throw std::invalid_argument("encode_state: step out of range");
  if (static_cast<int>(state.history.size()) < state.t - 1)
    throw std::invalid_argument("encode_state: arrival history shorter than t-1");

  const int m = inst.n_online;
  const int t0 = state.t - 1;
  std::vector<int> avail;
  for (int u = 0; u < inst.n_offline; ++u)
    if (state.available.test(u)) avail.push_back(u);

  FeatureGraph fg;
  fg.m = m;
  fg.num_nodes = m + static_cast<int>(avail.size()) + 1;
  fg.skip_node = fg.num_nodes - 1;
  fg.current_node = t0;
  fg.features.assign(static_cast<size_t>(fg.num_nodes) * kFeatureDim, 0.0);
  fg.adj.resize(fg.num_nodes);
  fg.offline_id.assign(fg.num_nodes, -1);
  fg.online_id.assign(fg.num_nodes, -1);

  const double remaining_online = m - state.t + 1;
  const double global = remaining_online / std::max<int>(1, static_cast<int>(avail.size()));
  auto feat = [&](int node, int f) -> double& { return fg.features[node * kFeatureDim + f]; };

  for (int s = 0; s < m; ++s) {
    fg.online_id[s] = s;
    if (s == t0) feat(s, 2) = 1.0;
    if (s < t0)
      feat(s, 3) = state.history[s] ? 1.0 : 0.0;
    else if (s == t0)
      feat(s, 3) = 1.0;
    else
      feat(s, 3) = inst.arrival_probs[s];
    feat(s, 4) = static_cast<double>(m - s) / m;
    feat(s, 5) = global;
  }
  std::vector<int> offline_node(inst.n_offline, -1);
  for (size_t i = 0; i < avail.size(); ++i) {
    const int node = m + static_cast<int>(i);
    offline_node[avail[i]] = node;
    fg.offline_id[node] = avail[i];
    feat(node, 0) = 1.0;
    feat(node, 3) = 1.0;
    feat(node, 5) = global;
  }
  feat(fg.skip_node, 1) = 1.0;
  feat(fg.skip_node, 3) = 1.0;
  feat(fg.skip_node, 5) = global;

  // instance edges restricted to available offline nodes
  for (const Edge& e : inst.edges) {
    const int v = offline_node[e.offline];
    if (v < 0) continue;
    fg.adj[e.online].emplace_back(v, e.weight);
    fg.adj[v].emplace_back(e.online, e.weight);
  }
  // skip node: weight-0 edge to every online node
  for (int s = 0; s < m; ++s) {
    fg.adj[s].emplace_back(fg.skip_node, 0.0);
    fg.adj[fg.skip_node].emplace_back(s, 0.0);
  }

  fg.mask.push_back(fg.skip_node);
  for (const auto& nb : inst.neighbors(t0))
    if (offline_node[nb.offline] >= 0) fg.mask.push_back(offline_node[nb.offline]);
  return fg;
}

// ---------------------------------------------------------------------------
// Model.

struct DenseLayer {
  int in = 0, out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

// GENConv-style network: per message-passing block,
//   h_v <- MLP(h_v + max_{u in N(v)} relu(h_u + w_vu))
// with the edge weight broadcast over the embedding, an empty neighborhood
// aggregating to zero, and a final linear readout to one scalar per node.
struct MpnnModel {
  int feat_dim = kFeatureDim;
  int hidden = 32;
  int mp_layers = 2;
  int mlp_layers = 2;
  std::vector<std::vector<DenseLayer>> blocks;  // [mp_layers][mlp_layers]
  DenseLayer readout;
};

namespace detail {
inline DenseLayer make_dense(int in, int out, Rng& rng) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  l.w.resize(static_cast<size_t>(in) * out);
  l.b.assign(out, 0.0);
  const double a = std::sqrt(6.0 / (in + out));
  for (double& x : l.w) x = rng.uniform(-a, a);
  return l;
}
}  // namespace detail

inline MpnnModel init_mpnn(int hidden, int mp_layers, int mlp_layers, uint64_t seed,
                           int feat_dim = kFeatureDim) {
  if (hidden < 1 || mp_layers < 1 || mlp_layers < 1) throw std::invalid_argument("init_mpnn: bad shape");
  Rng rng(seed);
  MpnnModel model;
  model.feat_dim = feat_dim;
  model.hidden = hidden;
  model.mp_layers = mp_layers;
  model.mlp_layers = mlp_layers;
  model.blocks.resize(mp_layers);
  for (int l = 0; l < mp_layers; ++l) {
    int in = l == 0 ? feat_dim : hidden;
    for (int j = 0; j < mlp_layers; ++j) {
      model.blocks[l].push_back(detail::make_dense(in, hidden, rng));
      in = hidden;
    }
  }
  model.readout = detail::make_dense(hidden, 1, rng);
  return model;
}

// Flat view over every parameter coordinate, in a fixed order. Used by the
// optimizer and the finite-difference check.
inline std::vector<double*> param_ptrs(MpnnModel& model) {
  std::vector<double*> ptrs;
  auto add = [&](DenseLayer& l) {
    for (double& x : l.w) ptrs.push_back(&x);
    for (double& x : l.b) ptrs.push_back(&x);
  };
  for (auto& block : model.blocks)
    for (auto& layer : block) add(layer);
  add(model.readout);
  return ptrs;
}

inline int param_count(const MpnnModel& model) {
  int c = 0;
  for (const auto& block : model.blocks)
    for (const auto& l : block) c += static_cast<int>(l.w.size() + l.b.size());
  return c + static_cast<int>(model.readout.w.size() + model.readout.b.size());
}

// Gradient container with the same coordinate order as param_ptrs.
struct ModelGrad {
  std::vector<double> g;
  explicit ModelGrad(const MpnnModel& model) : g(param_count(model), 0.0) {}
};

struct ForwardTrace {
  struct Block {
    std::vector<double> h_in;               // nodes x dim_in
    std::vector<double> agg;                // nodes x dim_in
    std::vector<int> argmax;                // nodes x dim_in; source node or -1
    std::vector<std::vector<double>> pre;   // per MLP sublayer: nodes x hidden pre-activations
  };
  std::vector<Block> blocks;
  std::vector<double> h_final;  // nodes x hidden
  std::vector<double> out;      // nodes
};

inline ForwardTrace forward_trace(const MpnnModel& model, const FeatureGraph& fg) {
  const int nodes = fg.num_nodes;
  ForwardTrace trace;
  trace.blocks.resize(model.mp_layers);
  std::vector<double> h = fg.features;
  int dim = model.feat_dim;

  for (int l = 0; l < model.mp_layers; ++l) {
    auto& tb = trace.blocks[l];
    tb.h_in = h;
    tb.agg.assign(static_cast<size_t>(nodes) * dim, 0.0);
    tb.argmax.assign(static_cast<size_t>(nodes) * dim, -1);
    for (int v = 0; v < nodes; ++v) {
      for (int c = 0; c < dim; ++c) {
        double best = 0.0;
        int arg = -1;
        for (const auto& [u, w] : fg.adj[v]) {
          const double r = h[u * dim + c] + w;
          if (r > 0.0 && r > best) {
            best = r;
            arg = u;
          }
        }
        tb.agg[v * dim + c] = h[v * dim + c] + best;
        tb.argmax[v * dim + c] = arg;
      }
    }
    // MLP over the aggregated embedding; relu between sublayers, none after
    // the last.
    std::vector<double> z = tb.agg;
    int zin = dim;
    tb.pre.resize(model.mlp_layers);
    for (int j = 0; j < model.mlp_layers; ++j) {
      const DenseLayer& lay = model.blocks[l][j];
      std::vector<double> y(static_cast<size_t>(nodes) * lay.out);
      for (int v = 0; v < nodes; ++v)
        for (int o = 0; o < lay.out; ++o) {
          double acc = lay.b[o];
          const double* wrow = &lay.w[static_cast<size_t>(o) * lay.in];
          const double* zrow = &z[static_cast<size_t>(v) * zin];
          for (int i = 0; i < lay.in; ++i) acc += wrow[i] * zrow[i];
          y[static_cast<size_t>(v) * lay.out + o] = acc;
        }
      tb.pre[j] = y;
      if (j + 1 < model.mlp_layers)
        for (double& x : y) x = x > 0.0 ? x : 0.0;
      z = std::move(y);
      zin = lay.out;
    }
    h = std::move(z);
    dim = model.hidden;
  }

  trace.h_final = h;
  trace.out.resize(nodes);
  for (int v = 0; v < nodes; ++v) {
    double acc = model.readout.b[0];
    for (int i = 0; i < model.hidden; ++i) acc += model.readout.w[i] * h[v * model.hidden + i];
    trace.out[v] = acc;
  }
  return trace;
}

inline std::vector<double> forward(const MpnnModel& model, const FeatureGraph& fg) {
  return forward_trace(model, fg).out;
}

// Reverse-mode pass for one graph; accumulates parameter gradients given
// dLoss/dOut per node. Gradients follow the forward conventions exactly:
// relu kinks and inactive max entries propagate nothing, and the max routes
// its gradient to the recorded argmax (first maximizer in ascending node
// order).
inline void backward(const MpnnModel& model, const FeatureGraph& fg, const ForwardTrace& trace,
                     const std::vector<double>& dout, ModelGrad& grad) {
  const int nodes = fg.num_nodes;
  int gpos = static_cast<int>(grad.g.size());

  // readout
  gpos -= model.hidden + 1;
  std::vector<double> dh(static_cast<size_t>(nodes) * model.hidden, 0.0);
  {
    double* gw = &grad.g[gpos];
    double* gb = &grad.g[gpos + model.hidden];
    for (int v = 0; v < nodes; ++v) {
      const double dv = dout[v];
      if (dv == 0.0) continue;
      gb[0] += dv;
      for (int i = 0; i < model.hidden; ++i) {
        gw[i] += dv * trace.h_final[v * model.hidden + i];
        dh[v * model.hidden + i] += dv * model.readout.w[i];
      }
    }
  }

  for (int l = model.mp_layers - 1; l >= 0; --l) {
    const auto& tb = trace.blocks[l];
    const int dim_in = l == 0 ? model.feat_dim : model.hidden;
    // walk the block's sublayers in reverse
    int block_params = 0;
    for (const DenseLayer& lay : model.blocks[l]) block_params += static_cast<int>(lay.w.size() + lay.b.size());
    gpos -= block_params;

    std::vector<double> dz = std::move(dh);
    for (int j = model.mlp_layers - 1; j >= 0; --j) {
      const DenseLayer& lay = model.blocks[l][j];
      // relu derivative for hidden sublayers (the last sublayer is linear)
      if (j + 1 < model.mlp_layers) {
        const auto& pre = tb.pre[j];
        for (size_t i = 0; i < dz.size(); ++i)
          if (pre[i] <= 0.0) dz[i] = 0.0;
      }
      // input of this sublayer: agg for j == 0, else relu(pre[j-1])
      const std::vector<double>* zin_ptr;
      std::vector<double> zin_storage;
      if (j == 0) {
        zin_ptr = &tb.agg;
      } else {
        zin_storage = tb.pre[j - 1];
        for (double& x : zin_storage) x = x > 0.0 ? x : 0.0;
        zin_ptr = &zin_storage;
      }
      const std::vector<double>& zin = *zin_ptr;
      const int in = lay.in;

      int offset = gpos;
      for (int jj = 0; jj < j; ++jj)
        offset += static_cast<int>(model.blocks[l][jj].w.size() + model.blocks[l][jj].b.size());
      double* gw = &grad.g[offset];
      double* gb = &grad.g[offset + static_cast<int>(lay.w.size())];

      std::vector<double> din(static_cast<size_t>(nodes) * in, 0.0);
      for (int v = 0; v < nodes; ++v) {
        const double* zrow = &zin[static_cast<size_t>(v) * in];
        double* drow = &din[static_cast<size_t>(v) * in];
        for (int o = 0; o < lay.out; ++o) {
          const double d = dz[static_cast<size_t>(v) * lay.out + o];
          if (d == 0.0) continue;
          gb[o] += d;
          const double* wrow = &lay.w[static_cast<size_t>(o) * in];
          double* gwrow = &gw[static_cast<size_t>(o) * in];
          for (int i = 0; i < in; ++i) {
            gwrow[i] += d * zrow[i];
            drow[i] += d * wrow[i];
          }
        }
      }
      dz = std::move(din);
    }

    // through the aggregation: d agg -> d h_in (self term + routed max term)
    std::vector<double> dprev(static_cast<size_t>(nodes) * dim_in, 0.0);
    for (int v = 0; v < nodes; ++v)
      for (int c = 0; c < dim_in; ++c) {
        const double d = dz[static_cast<size_t>(v) * dim_in + c];
        if (d == 0.0) continue;
        dprev[static_cast<size_t>(v) * dim_in + c] += d;
        const int u = tb.argmax[static_cast<size_t>(v) * dim_in + c];
        if (u >= 0) dprev[static_cast<size_t>(u) * dim_in + c] += d;
      }
    dh = std::move(dprev);
  }
}

// ---------------------------------------------------------------------------
// Supervision.

struct TrainingSample {
  FeatureGraph graph;
  std::vector<double> targets;  // aligned with graph.mask
};

struct LossGrad {
  double loss = 0.0;
  ModelGrad grad;
};

// Masked mean squared error over all candidate entries in the batch, with
// gradients for every parameter.
inline LossGrad loss_and_grad(const MpnnModel& model, const std::vector<const TrainingSample*>& batch) {
  size_t total = 0;
  for (const TrainingSample* s : batch) total += s->graph.mask.size();
  if (total == 0) throw std::invalid_argument("loss_and_grad: batch has no masked entries");

  LossGrad lg{0.0, ModelGrad(model)};
  for (const TrainingSample* s : batch) {
    const ForwardTrace trace = forward_trace(model, s->graph);
    std::vector<double> dout(s->graph.num_nodes, 0.0);
    for (size_t i = 0; i < s->graph.mask.size(); ++i) {
      const int v = s->graph.mask[i];
      const double diff = trace.out[v] - s->targets[i];
      lg.loss += diff * diff;
      dout[v] = 2.0 * diff / static_cast<double>(total);
    }
    backward(model, s->graph, trace, dout, lg.grad);
  }
  lg.loss /= static_cast<double>(total);
  return lg;
}

// Walk teacher-forced episodes with the value-optimal policy and emit one
// sample per arrived node, labeled with the exact values of every candidate
// action. Instances cycle round-robin through the configs.
inline std::vector<TrainingSample> generate_training_set(const std::vector<GeneratorConfig>& configs, int count,
                                                         uint64_t seed, int dp_limit = kDefaultDpLimit,
                                                         double noise_rho = 0.0) {
  if (configs.empty() || count <= 0) throw std::invalid_argument("generate_training_set: empty request");
  std::vector<TrainingSample> samples;
  for (int i = 0; i < count; ++i) {
    Instance inst = generate_instance(configs[i % configs.size()], Rng::derive(seed, 0x9E4, i));
    if (noise_rho > 0.0) inst = add_noise(inst, noise_rho, Rng::derive(seed, 0x401, i));
    const ArrivalSequence a = sample_arrivals(inst, Rng::derive(seed, 0xA43, i));
    VtgTable table(inst, dp_limit);

    MatchingState state = MatchingState::initial(inst);
    for (int t = 1; t <= inst.n_online; ++t) {
      state.t = t;
      state.arrived = a.bits[t - 1] != 0;
      if (state.arrived) {
        TrainingSample sample;
        sample.graph = encode_state(inst, state);
        const uint64_t avail = state.available.to_mask64();
        for (int node : sample.graph.mask) {
          const int u = sample.graph.offline_id[node];
          sample.targets.push_back(node == sample.graph.skip_node ? table.value(avail, t + 1)
                                                                  : table.match_value(avail, t, u));
        }
        samples.push_back(std::move(sample));

        const Action action = opt_on_action(inst, state, table);
        if (action.is_match()) state.available.reset(action.offline);
      }
      state.history.push_back(a.bits[t - 1]);
    }
  }
  return samples;
}

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // masked MSE over the epoch, weighted by candidate count
  bool diverged = false;
};

// Minibatch Adam with a fixed shuffle per epoch. lr = 0 leaves the model
// bit-identical; a non-finite loss aborts and flags divergence.
inline TrainResult train(MpnnModel& model, const std::vector<TrainingSample>& samples, const TrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train: no samples");
  if (cfg.batch_size <= 0 || cfg.epochs < 0) throw std::invalid_argument("train: bad config");
  std::vector<double*> ptrs = param_ptrs(model);
  const size_t P = ptrs.size();
  std::vector<double> m1(P, 0.0), m2(P, 0.0);
  Rng shuffle_rng(Rng::derive(cfg.seed, 0x5F0));
  std::vector<int> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainResult result;
  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_sum = 0.0;
    size_t epoch_count = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const TrainingSample*> batch;
      for (size_t i = start; i < end; ++i) batch.push_back(&samples[order[i]]);
      size_t entries = 0;
      for (const TrainingSample* s : batch) entries += s->graph.mask.size();
      const LossGrad lg = loss_and_grad(model, batch);
      if (!std::isfinite(lg.loss)) {
        result.diverged = true;
        return result;
      }
      epoch_sum += lg.loss * entries;
      epoch_count += entries;
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (size_t i = 0; i < P; ++i) {
        const double g = lg.grad.g[i];
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g;
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g * g;
        *ptrs[i] -= cfg.lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
      }
    }
    result.epoch_loss.push_back(epoch_sum / epoch_count);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Acting.

// Argmax over the mask with ties toward Skip, then the lowest offline index.
// The skip candidate is scored first and later candidates must strictly beat
// the incumbent.
inline Action pick_action_from_scores(const FeatureGraph& fg, const std::vector<double>& scores) {
  if (fg.mask.empty() || fg.mask.front() != fg.skip_node)
    throw std::logic_error("pick_action_from_scores: malformed candidate mask");
  double best = scores[fg.mask.front()];
  Action action = Action::skip();
  for (size_t i = 1; i < fg.mask.size(); ++i) {
    const int node = fg.mask[i];
    if (scores[node] > best) {
      best = scores[node];
      action = Action::match(fg.offline_id[node]);
    }
  }
  return action;
}

inline Action neural_action(const MpnnModel& model, const Instance& inst, const MatchingState& state) {
  const FeatureGraph fg = encode_state(inst, state);
  return pick_action_from_scores(fg, forward(model, fg));
}

class NeuralPolicy : public Policy {
 public:
  NeuralPolicy(const Instance& inst, const MpnnModel& model) : inst_(&inst), model_(&model) {}

  Action act(const MatchingState& state, Rng&) override { return neural_action(*model_, *inst_, state); }

 private:
  const Instance* inst_;
  const MpnnModel* model_;
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON, row-major weights, lossless doubles.

inline json model_to_json(const MpnnModel& model) {
  auto dense = [](const DenseLayer& l) {
    return json{{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}};
  };
  json blocks = json::array();
  for (const auto& block : model.blocks) {
    json jb = json::array();
    for (const auto& l : block) jb.push_back(dense(l));
    blocks.push_back(jb);
  }
  return json{{"format_version", 1},
              {"feat_dim", model.feat_dim},
              {"hidden", model.hidden},
              {"mp_layers", model.mp_layers},
              {"mlp_layers", model.mlp_layers},
              {"blocks", blocks},
              {"readout", dense(model.readout)}};
}

inline MpnnModel model_from_json(const json& j) {
  if (j.value("format_version", 0) != 1) throw std::invalid_argument("model checkpoint: unsupported version");
  auto dense = [](const json& jl) {
    DenseLayer l;
    l.in = jl.at("in").get<int>();
    l.out = jl.at("out").get<int>();
    l.w = jl.at("w").get<std::vector<double>>();
    l.b = jl.at("b").get<std::vector<double>>();
    if (l.w.size() != static_cast<size_t>(l.in) * l.out || l.b.size() != static_cast<size_t>(l.out))
      throw std::invalid_argument("model checkpoint: layer shape mismatch");
    return l;
  };
  MpnnModel model;
  model.feat_dim = j.at("feat_dim").get<int>();
  model.hidden = j.at("hidden").get<int>();
  model.mp_layers = j.at("mp_layers").get<int>();
  model.mlp_layers = j.at("mlp_layers").get<int>();
  for (const auto& jb : j.at("blocks")) {
    std::vector<DenseLayer> block;
    for (const auto& jl : jb) block.push_back(dense(jl));
    model.blocks.push_back(std::move(block));
  }
  model.readout = dense(j.at("readout"));
  if (static_cast<int>(model.blocks.size()) != model.mp_layers)
    throw std::invalid_argument("model checkpoint: block count mismatch");
  return model;
}

inline void save_model(const MpnnModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << model_to_json(model).dump(2) << "\n";
}

inline MpnnModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace obbm
