//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/hdecoder.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <cmath>
#include <map>
#include <numeric>

#include "hiergen/error.h"
#include "hiergen/smiles.h"

namespace hiergen {

int choose(const std::vector<double> &probs, const DecodeOptions &opts,
           std::mt19937_64 *rng) {
  if (probs.empty())
    throw Error(ErrorKind::kEmptyInput, "nothing to choose from");
  if (opts.greedy || rng == nullptr)
    return static_cast<int>(std::max_element(probs.begin(), probs.end())
                            - probs.begin());
  std::vector<double> w(probs.size());
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    w[i] = probs[i] > 0 ? std::pow(probs[i], 1.0 / opts.temperature) : 0.0;
    total += w[i];
  }
  std::uniform_real_distribution<double> u(0.0, total);
  double r = u(*rng);
  int last = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0)
      continue;
    last = static_cast<int>(i);
    if (r < w[i])
      return last;
    r -= w[i];
  }
  return last;
}

TrainExample make_example(const MolGraph &mol, const Vocab &vocab) {
  TrainExample ex;
  ex.hier = build_hier_graph(mol, vocab);
  ex.smiles = canonical_smiles(ex.hier.mol);
  ex.trace = dfs_decode_trace(ex.hier, vocab);
  ex.prefixes.resize(ex.trace.num_nodes() + 1);
  for (int k = 1; k <= ex.trace.num_nodes(); ++k)
    ex.prefixes[k] = prefix_state(ex.trace, k);
  return ex;
}

namespace nn {

template <class S>
HierDecoder<S>::HierDecoder(ParamStore<S> &store, const std::string &name,
                            const ModelDims &dims,
                            std::shared_ptr<const Vocab> vocab,
                            const DecoderOptions &opts, std::mt19937_64 &rng)
    : dims_(dims), opts_(opts), vocab_(std::move(vocab)) {
  const Vocab &v = *vocab_;
  int h = dims.hidden, l = dims.latent;
  enc_ = HierEncoder<S>(store, name + ".enc", dims, v, rng);
  int ctx = opts.conditional ? h : 0;
  int attach_in = h + ctx + l + (opts.attach_motif_embedding ? dims.embed : 0);
  motif_head_.init(store, name + ".motif", h + ctx + l, h, v.motifs.size() + 1,
                   rng);
  attach_head_.init(store, name + ".attach", attach_in, h,
                    std::max(v.attach.total(), 1), rng);
  if (opts.conditional) {
    graph_head_.init(store, name + ".graph", 2 * h + l, h, h, rng);
    att_motif_.init(store, name + ".att.motif", h, h, rng);
    att_attach_.init(store, name + ".att.attach", h, h, rng);
    att_atom_.init(store, name + ".att.atom", h, h, rng);
  } else {
    graph_head_.init(store, name + ".graph", 2 * h, h, l, rng);
  }
  emb_mark_ = add_embedding(store, name + ".emb.mark", 2, dims.embed, rng);
  if (opts.attach_motif_embedding)
    emb_motif_ = add_embedding(store, name + ".emb.motif",
                               std::max(v.motifs.size(), 1), dims.embed, rng);
  for (int m = 0; m < v.attach.num_motifs(); ++m)
    attach_offset_.push_back(v.attach.global(m, 0));
}

template <class S>
Var<S> HierDecoder<S>::root_query(Tape<S> &t) const {
  return t.constant(1, dims_.hidden, S(0));
}

template <class S>
Var<S> HierDecoder<S>::motif_logits(Tape<S> &t, ParamStore<S> &store,
                                    Var<S> h, Var<S> z,
                                    const Memory<S> *mem) const {
  if (mem != nullptr)
    return motif_head_(
        t, store, concat_cols({h, att_motif_(t, store, h, mem->motifs), z}));
  return motif_head_(t, store, concat_cols({h, z}));
}

template <class S>
Var<S> HierDecoder<S>::attach_logits(Tape<S> &t, ParamStore<S> &store,
                                     Var<S> h, Var<S> z, int motif,
                                     const Memory<S> *mem) const {
  std::vector<Var<S>> parts = {h};
  if (mem != nullptr)
    parts.push_back(att_attach_(t, store, h, mem->attach));
  parts.push_back(z);
  if (opts_.attach_motif_embedding) {
    int row[1] = {motif};
    parts.push_back(gather_rows(t.param(store, emb_motif_),
                                std::span<const int>(row)));
  }
  return attach_head_(t, store, concat_cols(std::span<const Var<S>>(parts)));
}

template <class S>
Var<S> HierDecoder<S>::child_atoms(Tape<S> &t, ParamStore<S> &store, int motif,
                                   int attach) const {
  const MolGraph &tmpl = vocab_->motifs.motif(motif);
  std::vector<int> marked(tmpl.num_atoms(), 0);
  for (int a: vocab_->attach.config(motif, attach).marks)
    marked[a] = 1;
  Var<S> offset = gather_rows(t.param(store, emb_mark_),
                              std::span<const int>(marked));
  return enc_.encode_atoms(t, store, tmpl, &offset);
}

template <class S>
Var<S> HierDecoder<S>::graph_scores(Tape<S> &t, ParamStore<S> &store,
                                    Var<S> partial_atoms, Var<S> child_atoms,
                                    const std::vector<Candidate> &candidates,
                                    Var<S> z, const Memory<S> *mem) const {
  std::vector<int> us, vs, owner;
  for (std::size_t c = 0; c < candidates.size(); ++c)
    for (auto [u, v]: candidates[c].pairs) {
      us.push_back(u);
      vs.push_back(v);
      owner.push_back(static_cast<int>(c));
    }
  int n = static_cast<int>(candidates.size());
  std::vector<Var<S>> parts = {
      gather_rows(partial_atoms, std::span<const int>(us)),
      gather_rows(child_atoms, std::span<const int>(vs))};
  if (mem != nullptr) {
    std::vector<int> zero(us.size(), 0);
    parts.push_back(gather_rows(z, std::span<const int>(zero)));
  }
  Var<S> hm = segment_sum(
      graph_head_(t, store, concat_cols(std::span<const Var<S>>(parts))),
      std::span<const int>(owner), n);
  if (mem != nullptr)
    return transpose(dot_rows(hm, att_atom_(t, store, hm, mem->atoms)));
  return transpose(matmul(hm, transpose(z)));
}

template <class S>
std::vector<char> HierDecoder<S>::motif_mask(bool root) const {
  std::vector<char> mask(vocab_->motifs.size() + 1, 1);
  if (root)
    mask[stop_index()] = 0;
  return mask;
}

template <class S>
std::vector<char> HierDecoder<S>::attach_mask(int motif) const {
  std::vector<char> mask(std::max(vocab_->attach.total(), 1), 0);
  for (int a = 0; a < vocab_->attach.size(motif); ++a)
    mask[attach_offset_[motif] + a] = 1;
  return mask;
}

template <class S>
LossParts<S> HierDecoder<S>::teacher_forced_loss(Tape<S> &t,
                                                 ParamStore<S> &store,
                                                 const TrainExample &ex,
                                                 Var<S> z,
                                                 const Memory<S> *mem) const {
  LossParts<S> out;
  out.motif = t.constant(1, 1, S(0));
  out.attach = out.motif;
  out.graph = out.motif;
  std::map<int, EncoderOutput<S>> states;
  std::map<std::pair<int, int>, Var<S>> children;
  auto state = [&](int k) -> const EncoderOutput<S> & {
    auto it = states.find(k);
    if (it == states.end())
      it = states.emplace(k, enc_.encode(t, store, ex.prefixes[k])).first;
    return it->second;
  };
  for (const TraceStep &step: ex.trace.steps) {
    bool root = step.parent < 0;
    Var<S> h = root ? root_query(t)
                    : slice_rows(state(step.state).motif_vecs, step.parent, 1);
    std::vector<char> mmask = motif_mask(root);
    int target = step.stop() ? stop_index() : step.motif;
    out.motif = out.motif
                + softmax_xent(motif_logits(t, store, h, z, mem), target,
                               std::span<const char>(mmask));
    ++out.decisions;
    if (step.stop())
      continue;
    std::vector<char> amask = attach_mask(step.motif);
    out.attach = out.attach
                 + softmax_xent(attach_logits(t, store, h, z, step.motif, mem),
                                attach_offset_[step.motif] + step.attach,
                                std::span<const char>(amask));
    ++out.decisions;
    if (root || step.candidates.size() < 2)
      continue;
    std::pair<int, int> key(step.motif, step.attach);
    auto it = children.find(key);
    if (it == children.end())
      it = children.emplace(key, child_atoms(t, store, step.motif, step.attach))
               .first;
    Var<S> scores = graph_scores(t, store, state(step.state).atom_vecs,
                                 it->second, step.candidates, z, mem);
    out.graph = out.graph + softmax_xent(scores, step.target);
    ++out.decisions;
  }
  out.total = out.motif + out.attach + out.graph;
  return out;
}

template <class S>
DecodeResult HierDecoder<S>::decode(ParamStore<S> &store, const Matrix<S> &z,
                                    const MemoryValues<S> *mem,
                                    const DecodeOptions &opts,
                                    std::mt19937_64 *rng) const {
  const Vocab &v = *vocab_;
  int max_steps = opts.max_steps > 0 ? opts.max_steps : 100;
  DecodeResult res;

  // A fresh evaluation tape per partial hierarchy.
  std::unique_ptr<Tape<S>> tape;
  Var<S> zv;
  Memory<S> memv;
  EncoderOutput<S> enc;
  auto reset = [&](const HierGraph *state) {
    tape = std::make_unique<Tape<S>>(false);
    zv = tape->constant(z);
    if (mem != nullptr)
      memv = mem->on(*tape);
    if (state != nullptr)
      enc = enc_.encode(*tape, store, *state);
  };
  const Memory<S> *mp = mem != nullptr ? &memv : nullptr;
  auto pick_attach = [&](Var<S> h, int motif) {
    std::vector<char> amask = attach_mask(motif);
    std::vector<double> p = softmax_probs(
        attach_logits(*tape, store, h, zv, motif, mp).value(),
        std::span<const char>(amask));
    return choose(p, opts, rng) - attach_offset_[motif];
  };

  reset(nullptr);
  {
    Var<S> h = root_query(*tape);
    std::vector<char> mmask = motif_mask(true);
    std::vector<double> p = softmax_probs(
        motif_logits(*tape, store, h, zv, mp).value(),
        std::span<const char>(mmask));
    int motif = choose(p, opts, rng);
    if (v.attach.size(motif) == 0)
      throw Error(ErrorKind::kEmptyAttachmentVocab,
                  "motif without attachment configurations");
    int attach = pick_attach(h, motif);
    res.hier = root_state(v, motif, attach);
  }
  reset(&res.hier);
  MembershipClasses classes;
  std::vector<int> stack = {0};
  HierGraph next;
  while (!stack.empty()) {
    if (res.steps >= max_steps) {
      res.max_steps_exceeded = true;
      break;
    }
    ++res.steps;
    int k = stack.back();
    Var<S> h = slice_rows(enc.motif_vecs, k, 1);
    std::vector<char> mmask = motif_mask(false);
    std::vector<double> p = softmax_probs(
        motif_logits(*tape, store, h, zv, mp).value(),
        std::span<const char>(mmask));
    int motif = choose(p, opts, rng);
    if (motif == stop_index() || v.attach.size(motif) == 0) {
      stack.pop_back();
      continue;
    }
    int attach = pick_attach(h, motif);
    std::vector<Candidate> cands = enumerate_candidates(res.hier, k, v, motif,
                                                        attach, classes);
    if (cands.empty()) {
      stack.pop_back();
      continue;
    }
    int pick = 0;
    if (cands.size() > 1) {
      Var<S> child = child_atoms(*tape, store, motif, attach);
      std::vector<double> q = softmax_probs(
          graph_scores(*tape, store, enc.atom_vecs, child, cands, zv, mp)
              .value());
      pick = choose(q, opts, rng);
    }
    if (!attach_motif(res.hier, k, v, motif, attach, cands[pick], next))
      throw Error(ErrorKind::kNumeric, "filtered candidate failed to merge");
    res.hier = std::move(next);
    stack.push_back(res.hier.size() - 1);
    reset(&res.hier);
  }
  res.mol = res.hier.mol;
  return res;
}

template class HierDecoder<float>;
template class HierDecoder<double>;

}  // namespace nn

template <class S>
HierVae<S>::HierVae(std::shared_ptr<const Vocab> vocab, const VaeConfig &config)
    : vocab_(std::move(vocab)), config_(config) {
  std::mt19937_64 rng(config.seed);
  encoder_ = nn::HierEncoder<S>(store_, "enc", config.dims, *vocab_, rng);
  latent_.init(store_, "latent", config.dims.hidden, config.dims.latent, rng);
  nn::DecoderOptions opts;
  opts.attach_motif_embedding = config.attach_motif_embedding;
  decoder_ = nn::HierDecoder<S>(store_, "dec", config.dims, vocab_, opts, rng);
}

template <class S>
nn::LatentSample<S> HierVae<S>::posterior(nn::Tape<S> &t, const HierGraph &h,
                                          const nn::Matrix<S> *eps) {
  nn::EncoderOutput<S> enc = encoder_.encode(t, store_, h);
  return latent_(t, store_, nn::slice_rows(enc.motif_vecs, 0, 1), eps);
}

template <class S>
nn::LossParts<S> HierVae<S>::loss(nn::Tape<S> &t, const TrainExample &ex,
                                  const nn::Matrix<S> *eps) {
  nn::LatentSample<S> post = posterior(t, ex.hier, eps);
  nn::LossParts<S> parts = decoder_.teacher_forced_loss(t, store_, ex, post.z,
                                                        nullptr);
  parts.kl = post.kl;
  if (config_.kl_weight != 0)
    parts.total = parts.total
                  + nn::scale(post.kl, static_cast<S>(config_.kl_weight));
  return parts;
}

template <class S>
nn::Matrix<S> HierVae<S>::encode_mean(const MolGraph &mol) {
  HierGraph h = build_hier_graph(mol, *vocab_);
  nn::Tape<S> t(false);
  return posterior(t, h, nullptr).mu.value();
}

template <class S>
nn::Matrix<S> HierVae<S>::sample_prior(std::mt19937_64 &rng) const {
  std::normal_distribution<double> d(0.0, 1.0);
  nn::Matrix<S> z(1, config_.dims.latent);
  for (int j = 0; j < config_.dims.latent; ++j)
    z(0, j) = static_cast<S>(d(rng));
  return z;
}

template <class S>
DecodeResult HierVae<S>::decode(const nn::Matrix<S> &z,
                                const DecodeOptions &opts,
                                std::mt19937_64 *rng) {
  DecodeOptions o = opts;
  if (o.max_steps <= 0)
    o.max_steps = config_.max_steps > 0 ? config_.max_steps : 100;
  return decoder_.decode(store_, z, nullptr, o, rng);
}

template <class S>
MolGraph HierVae<S>::reconstruct(const MolGraph &mol) {
  nn::Matrix<S> z;
  try {
    z = encode_mean(mol);
  } catch (const Error &) {
    return MolGraph();
  }
  return decode(z, DecodeOptions{}).mol;
}

template <class S>
TrainHistory train_loop(nn::ParamStore<S> &store, int num_examples, int latent,
                        const TrainOptions &opts, const ExampleLoss<S> &loss,
                        const EpochCallback &on_epoch) {
  if (opts.epochs < 0 || opts.batch < 1 || !(opts.lr > 0)
      || !(opts.lr_decay > 0 && opts.lr_decay <= 1) || !(opts.clip_norm >= 0))
    throw Error(ErrorKind::kConfig, "invalid training options");
  TrainHistory history;
  if (num_examples <= 0)
    return history;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::AdamConfig adam;
  adam.lr = opts.lr;
  std::vector<int> order(num_examples);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    double ce = 0;
    long decisions = 0;
    for (int b = 0; b < num_examples; b += opts.batch) {
      int end = std::min(num_examples, b + opts.batch);
      S inv = S(1) / static_cast<S>(end - b);
      store.zero_grad();
      double batch_loss = 0;
      for (int i = b; i < end; ++i) {
        nn::Matrix<S> eps(1, latent);
        for (int j = 0; j < latent; ++j)
          eps(0, j) = static_cast<S>(normal(rng));
        nn::Tape<S> t;
        nn::LossParts<S> parts = loss(t, order[i], eps);
        double total = parts.total.scalar();
        if (!std::isfinite(total))
          throw Error(ErrorKind::kNumeric, "non-finite training loss");
        t.backward(nn::scale(parts.total, inv));
        batch_loss += total;
        if (parts.kl.valid())
          stats.kl += parts.kl.scalar();
        ce += parts.motif.scalar() + parts.attach.scalar()
              + parts.graph.scalar();
        decisions += parts.decisions;
      }
      if (opts.clip_norm > 0) {
        double sq = 0;
        for (int p = 0; p < store.size(); ++p)
          sq += static_cast<double>(store[p].grad.squaredNorm());
        double norm = std::sqrt(sq);
        if (norm > opts.clip_norm)
          for (int p = 0; p < store.size(); ++p)
            store[p].grad *= static_cast<S>(opts.clip_norm / norm);
      }
      nn::adam_step(store, adam);
      stats.loss += batch_loss;
      history.step_loss.push_back(batch_loss / (end - b));
    }
    stats.loss /= num_examples;
    stats.kl /= num_examples;
    stats.ce_per_decision = decisions > 0 ? ce / decisions : 0.0;
    stats.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    history.epochs.push_back(stats);
    adam.lr *= opts.lr_decay;
    if (on_epoch)
      on_epoch(stats);
  }
  return history;
}

template <class S>
TrainHistory train_vae(HierVae<S> &model,
                       const std::vector<TrainExample> &examples,
                       const TrainOptions &opts,
                       const EpochCallback &on_epoch) {
  return train_loop<S>(
      model.params(), static_cast<int>(examples.size()),
      model.config().dims.latent, opts,
      [&](nn::Tape<S> &t, int i, const nn::Matrix<S> &eps) {
        return model.loss(t, examples[i], &eps);
      },
      on_epoch);
}

template <class S>
double reconstruction_accuracy(HierVae<S> &model,
                               const std::vector<MolGraph> &mols,
                               std::vector<std::string> *outputs) {
  if (mols.empty())
    return 0.0;
  int hits = 0;
  for (const MolGraph &mol: mols) {
    MolGraph out = model.reconstruct(mol);
    std::string smi = out.empty() ? std::string() : canonical_smiles(out);
    if (!smi.empty() && smi == canonical_smiles(mol))
      ++hits;
    if (outputs != nullptr)
      outputs->push_back(smi);
  }
  return static_cast<double>(hits) / static_cast<double>(mols.size());
}

VaeConfig vae_config(const ModelConfig &config) {
  validate(config);
  VaeConfig c;
  c.dims = config.dims;
  c.kl_weight = config.kl_weight;
  c.attach_motif_embedding = config.attach_motif_embedding;
  c.max_steps = config.max_steps;
  c.seed = config.seed;
  return c;
}

TrainOptions train_options(const ModelConfig &config) {
  TrainOptions o;
  o.epochs = config.epochs;
  o.batch = config.batch;
  o.lr = config.lr;
  o.lr_decay = config.lr_decay;
  o.clip_norm = config.clip_norm;
  o.seed = config.seed;
  return o;
}

void save_vae(const std::string &dir, const HierVae<float> &model) {
  const VaeConfig &c = model.config();
  ModelConfig mc;
  mc.dims = c.dims;
  mc.kl_weight = c.kl_weight;
  mc.attach_motif_embedding = c.attach_motif_embedding;
  mc.max_steps = c.max_steps;
  mc.seed = c.seed;
  write_model_header(dir, "hier_vae", mc);
  save_vocab(dir + "/vocab", model.vocab());
  nn::save_checkpoint(dir + "/params.hgck", model.params());
}

std::unique_ptr<HierVae<float>> load_vae(const std::string &dir) {
  ModelConfig mc = read_model_header(dir, "hier_vae");
  auto vocab = std::make_shared<const Vocab>(load_vocab(dir + "/vocab"));
  auto model = std::make_unique<HierVae<float>>(vocab, vae_config(mc));
  nn::load_checkpoint(dir + "/params.hgck", model->params());
  return model;
}

int default_max_steps(const std::vector<TrainExample> &examples) {
  int n = 0;
  for (const TrainExample &ex: examples)
    n = std::max(n, ex.hier.size());
  return n > 0 ? 2 * n : 100;
}

template class HierVae<float>;
template class HierVae<double>;
template TrainHistory train_loop(nn::ParamStore<float> &, int, int,
                                 const TrainOptions &,
                                 const ExampleLoss<float> &,
                                 const EpochCallback &);
template TrainHistory train_loop(nn::ParamStore<double> &, int, int,
                                 const TrainOptions &,
                                 const ExampleLoss<double> &,
                                 const EpochCallback &);
template TrainHistory train_vae(HierVae<float> &,
                                const std::vector<TrainExample> &,
                                const TrainOptions &, const EpochCallback &);
template TrainHistory train_vae(HierVae<double> &,
                                const std::vector<TrainExample> &,
                                const TrainOptions &, const EpochCallback &);
template double reconstruction_accuracy(HierVae<float> &,
                                        const std::vector<MolGraph> &,
                                        std::vector<std::string> *);
template double reconstruction_accuracy(HierVae<double> &,
                                        const std::vector<MolGraph> &,
                                        std::vector<std::string> *);

}  // namespace hiergen
