//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_HDECODER_H_
#define HIERGEN_HDECODER_H_

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hiergen/assembly.h"
#include "hiergen/config.h"
#include "hiergen/hmpn.h"
#include "hiergen/motifs.h"
#include "hiergen/tensor.h"

namespace hiergen {

struct DecodeOptions {
  // 0 selects the model default.
  int max_steps = 0;
  bool greedy = true;
  double temperature = 1.0;
};

struct DecodeResult {
  MolGraph mol;
  HierGraph hier;
  int steps = 0;
  bool max_steps_exceeded = false;
};

// Index of the largest probability (first on ties) or a draw from p^(1/T).
int choose(const std::vector<double> &probs, const DecodeOptions &opts,
           std::mt19937_64 *rng);

// A training molecule with its teacher-forcing trace and the partial
// hierarchies seen along it (prefixes[k] holds k nodes; prefixes[0] empty).
struct TrainExample {
  std::string smiles;
  HierGraph hier;
  DecodeTrace trace;
  std::vector<HierGraph> prefixes;
};

// Throws UnknownMotif / CandidateNotFound when the molecule cannot be
// expressed with the vocabulary.
TrainExample make_example(const MolGraph &mol, const Vocab &vocab);

namespace nn {

// Encoded input molecule for attention during translation.
template <class S>
struct Memory {
  Var<S> motifs;
  Var<S> attach;
  Var<S> atoms;
};

template <class S>
struct MemoryValues {
  Matrix<S> motifs;
  Matrix<S> attach;
  Matrix<S> atoms;

  Memory<S> on(Tape<S> &t) const {
    return {t.constant(motifs), t.constant(attach), t.constant(atoms)};
  }
};

template <class S>
struct LossParts {
  Var<S> motif;
  Var<S> attach;
  Var<S> graph;
  // Unweighted KL; invalid for the decoder-only loss.
  Var<S> kl;
  Var<S> total;
  // Classification decisions contributing to the loss.
  int decisions = 0;
};

struct DecoderOptions {
  // Translation heads with attention over the input molecule.
  bool conditional = false;
  // Feed the chosen motif's embedding to the attachment head.
  bool attach_motif_embedding = false;
};

template <class S>
class HierDecoder {
public:
  HierDecoder() = default;
  HierDecoder(ParamStore<S> &store, const std::string &name,
              const ModelDims &dims, std::shared_ptr<const Vocab> vocab,
              const DecoderOptions &opts, std::mt19937_64 &rng);

  // Logits over the motif vocabulary plus STOP (last index).
  Var<S> motif_logits(Tape<S> &t, ParamStore<S> &store, Var<S> h, Var<S> z,
                      const Memory<S> *mem) const;
  // Logits over all attachment slots; mask with attach_mask(motif).
  Var<S> attach_logits(Tape<S> &t, ParamStore<S> &store, Var<S> h, Var<S> z,
                       int motif, const Memory<S> *mem) const;
  // Child template atoms encoded with the configuration's marked atoms
  // flagged, so that atoms symmetric in the bare motif stay distinct.
  Var<S> child_atoms(Tape<S> &t, ParamStore<S> &store, int motif,
                     int attach) const;
  // One score per candidate, 1 x |candidates|.
  Var<S> graph_scores(Tape<S> &t, ParamStore<S> &store, Var<S> partial_atoms,
                      Var<S> child_atoms,
                      const std::vector<Candidate> &candidates, Var<S> z,
                      const Memory<S> *mem) const;

  int stop_index() const { return vocab_->motifs.size(); }
  // STOP is excluded for the root prediction.
  std::vector<char> motif_mask(bool root) const;
  // The motif's configurations; other motifs' slots and UNK are masked.
  std::vector<char> attach_mask(int motif) const;

  LossParts<S> teacher_forced_loss(Tape<S> &t, ParamStore<S> &store,
                                   const TrainExample &ex, Var<S> z,
                                   const Memory<S> *mem) const;

  DecodeResult decode(ParamStore<S> &store, const Matrix<S> &z,
                      const MemoryValues<S> *mem, const DecodeOptions &opts,
                      std::mt19937_64 *rng) const;

  const HierEncoder<S> &encoder() const { return enc_; }
  const Vocab &vocab() const { return *vocab_; }

private:
  Var<S> root_query(Tape<S> &t) const;

  ModelDims dims_;
  DecoderOptions opts_;
  std::shared_ptr<const Vocab> vocab_;
  HierEncoder<S> enc_;
  Mlp<S> motif_head_, attach_head_, graph_head_;
  int emb_motif_ = -1;
  int emb_mark_ = -1;
  Attention<S> att_motif_, att_attach_, att_atom_;
  std::vector<int> attach_offset_;
};

}  // namespace nn

struct VaeConfig {
  ModelDims dims;
  double kl_weight = 0.1;
  bool attach_motif_embedding = false;
  // Default decode budget; 0 derives it from the training set.
  int max_steps = 0;
  unsigned seed = 1;
};

template <class S>
class HierVae {
public:
  HierVae(std::shared_ptr<const Vocab> vocab, const VaeConfig &config);

  nn::ParamStore<S> &params() { return store_; }
  const nn::ParamStore<S> &params() const { return store_; }
  const VaeConfig &config() const { return config_; }
  void set_max_steps(int n) { config_.max_steps = n; }
  const Vocab &vocab() const { return *vocab_; }
  std::shared_ptr<const Vocab> shared_vocab() const { return vocab_; }

  // Posterior from the root motif vector; eps null means eps = 0.
  nn::LatentSample<S> posterior(nn::Tape<S> &t, const HierGraph &h,
                                const nn::Matrix<S> *eps);
  // Reconstruction cross-entropy plus kl_weight * KL.
  nn::LossParts<S> loss(nn::Tape<S> &t, const TrainExample &ex,
                        const nn::Matrix<S> *eps);

  nn::Matrix<S> encode_mean(const MolGraph &mol);
  nn::Matrix<S> sample_prior(std::mt19937_64 &rng) const;
  DecodeResult decode(const nn::Matrix<S> &z, const DecodeOptions &opts,
                      std::mt19937_64 *rng = nullptr);
  // decode(mu) with greedy choices; empty graph when encoding fails.
  MolGraph reconstruct(const MolGraph &mol);

private:
  std::shared_ptr<const Vocab> vocab_;
  VaeConfig config_;
  nn::ParamStore<S> store_;
  nn::HierEncoder<S> encoder_;
  nn::LatentHead<S> latent_;
  nn::HierDecoder<S> decoder_;
};

struct TrainOptions {
  int epochs = 10;
  int batch = 32;
  double lr = 1e-3;
  // Learning rate multiplier applied after every epoch.
  double lr_decay = 1.0;
  // Rescales each batch gradient to at most this global L2 norm; 0 is off.
  double clip_norm = 0;
  unsigned seed = 1;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0;
  double kl = 0;
  // Mean cross-entropy per classification decision.
  double ce_per_decision = 0;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  // Mean loss per optimizer step.
  std::vector<double> step_loss;
};

using EpochCallback = std::function<void(const EpochStats &)>;

// Per-example loss given the example index and a standard normal draw of
// latent width.
template <class S>
using ExampleLoss = std::function<nn::LossParts<S>(
    nn::Tape<S> &t, int index, const nn::Matrix<S> &eps)>;

// Mini-batch Adam over shuffled examples; the batch loss is the mean of the
// per-example totals. Throws Error(kNumeric) on a non-finite loss.
template <class S>
TrainHistory train_loop(nn::ParamStore<S> &store, int num_examples, int latent,
                        const TrainOptions &opts, const ExampleLoss<S> &loss,
                        const EpochCallback &on_epoch);

template <class S>
TrainHistory train_vae(HierVae<S> &model,
                       const std::vector<TrainExample> &examples,
                       const TrainOptions &opts,
                       const EpochCallback &on_epoch = {});

VaeConfig vae_config(const ModelConfig &config);
TrainOptions train_options(const ModelConfig &config);

// Model directory with kind "hier_vae".
void save_vae(const std::string &dir, const HierVae<float> &model);
std::unique_ptr<HierVae<float>> load_vae(const std::string &dir);

// Twice the largest node count over the examples (100 when empty).
int default_max_steps(const std::vector<TrainExample> &examples);

// Canonical SMILES match of reconstruct(x) against x.
template <class S>
double reconstruction_accuracy(HierVae<S> &model,
                               const std::vector<MolGraph> &mols,
                               std::vector<std::string> *outputs = nullptr);

}  // namespace hiergen

#endif  // HIERGEN_HDECODER_H_
