//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_ATOMG2G_H_
#define HIERGEN_ATOMG2G_H_

#include <deque>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hiergen/hdecoder.h"
#include "hiergen/hmpn.h"
#include "hiergen/molgraph.h"
#include "hiergen/tensor.h"
#include "hiergen/translate.h"

namespace hiergen {

// (element, formal charge) classes the atom decoder can emit.
class AtomLabels {
public:
  AtomLabels() = default;
  explicit AtomLabels(std::vector<std::pair<Element, int>> entries);

  // Sorted distinct labels over the kekulized corpus atoms.
  static AtomLabels from_corpus(const std::vector<MolGraph> &mols);

  int size() const { return static_cast<int>(entries_.size()); }
  // -1 when absent.
  int index(const Atom &atom) const;
  Atom atom(int label) const;
  const std::vector<std::pair<Element, int>> &entries() const {
    return entries_;
  }

  // One `symbol charge` line per label.
  void save(const std::string &path) const;
  static AtomLabels load(const std::string &path);

private:
  std::vector<std::pair<Element, int>> entries_;
};

// Bond decision classes: single, double, triple, none.
inline constexpr int kNumBondChoices = 4;
inline constexpr int kNoBond = 3;

// Canonical atom order, then kekulized. Throws Error(kKekulizeFailed).
MolGraph prepare_atom_input(const MolGraph &mol);

// Largest allowed valence minus the current bond-order sum.
int spare_valence(const MolGraph &g, int atom);
// Feasible bond choices between new atom u and queue atom a; `none` is
// excluded for the first queue atom.
std::vector<char> bond_choice_mask(const MolGraph &g, int u, int a,
                                   bool first);

struct AtomStep {
  // Atoms present when the step starts.
  int prefix = 0;
  int front = 0;
  bool expand = false;
  // The front atom is saturated, so it is popped without a decision.
  bool forced = false;
  // Queue when the step starts, front first. Expansions hold one bond
  // choice per queue atom.
  std::vector<int> queue;
  std::vector<int> bonds;
};

// Breadth-first generation trace. Atom k of `mol` is the k-th emitted atom.
struct AtomTrace {
  MolGraph mol;
  std::vector<int> labels;
  std::vector<AtomStep> steps;
};

// BFS from atom 0, neighbors in ascending index. Throws
// Error(kUnknownMotif) for atoms outside the label set and
// Error(kValenceViolation) for targets the masks would exclude.
AtomTrace make_atom_trace(const MolGraph &prepared, const AtomLabels &labels);
// Molecule rebuilt from the trace decisions alone.
MolGraph replay_atom_trace(const AtomTrace &trace, const AtomLabels &labels);

struct AtomExample {
  MolGraph x;
  AtomTrace y;
  // Disjoint union of the prefixes of y with 1..n atoms; the prefix with p
  // atoms starts at row p(p - 1) / 2.
  MolGraph prefixes;
};

AtomExample make_atom_example(const PairExample &pair,
                              const AtomLabels &labels);

struct AtomDecoderState {
  MolGraph graph;
  std::vector<int> labels;
  std::deque<int> queue;
};

namespace nn {

// Atom-level LSTM message passing over (element, aromatic, charge)
// embeddings.
template <class S>
class AtomEncoder {
public:
  AtomEncoder() = default;
  AtomEncoder(ParamStore<S> &store, const std::string &name,
              const ModelDims &dims, std::mt19937_64 &rng);

  Var<S> operator()(Tape<S> &t, ParamStore<S> &store,
                    const MolGraph &mol) const;
  Var<S> atom_embedding(Tape<S> &t, ParamStore<S> &store,
                        std::span<const int> atom_labels) const;
  Var<S> bond_embedding(Tape<S> &t, ParamStore<S> &store,
                        std::span<const int> order_index) const;

private:
  ModelDims dims_;
  int emb_atom_ = -1, emb_bond_ = -1;
  LstmMpn<S> mpn_;
};

template <class S>
class AtomDecoder {
public:
  AtomDecoder() = default;
  AtomDecoder(ParamStore<S> &store, const std::string &name,
              const ModelDims &dims, std::shared_ptr<const AtomLabels> labels,
              std::mt19937_64 &rng);

  // p(expand) for the front atom of a state with a non-empty queue.
  double expand_probability(ParamStore<S> &store, const AtomDecoderState &s,
                            const Matrix<S> &z, const Matrix<S> &memory) const;
  // Atom type distribution; an empty state gives the root distribution.
  std::vector<double> atom_type_probs(ParamStore<S> &store,
                                      const AtomDecoderState &s,
                                      const Matrix<S> &z,
                                      const Matrix<S> &memory) const;

  // Sum of the expand, atom type and bond cross-entropies along the trace.
  // Reported as motif = atom type, attach = expand, graph = bond.
  LossParts<S> teacher_forced_loss(Tape<S> &t, ParamStore<S> &store,
                                   const AtomExample &ex, Var<S> z,
                                   Var<S> memory) const;

  DecodeResult decode(ParamStore<S> &store, const Matrix<S> &z,
                      const Matrix<S> &memory, const DecodeOptions &opts,
                      std::mt19937_64 *rng) const;
  // Negative log-likelihood of the trace, computed one step at a time.
  double replay_nll(ParamStore<S> &store, const Matrix<S> &z,
                    const Matrix<S> &memory, const AtomTrace &trace) const;

  const AtomLabels &labels() const { return *labels_; }

private:
  DecodeResult run(ParamStore<S> &store, const Matrix<S> &z,
                   const Matrix<S> &memory, const DecodeOptions &opts,
                   std::mt19937_64 *rng, const AtomTrace *forced,
                   double *nll) const;
  Var<S> expand_logits(Tape<S> &t, ParamStore<S> &store, Var<S> query,
                       Var<S> z, Var<S> memory) const;
  Var<S> atom_logits(Tape<S> &t, ParamStore<S> &store, Var<S> query, Var<S> z,
                     Var<S> memory) const;
  Var<S> bond_logits(Tape<S> &t, ParamStore<S> &store, Var<S> query, Var<S> z,
                     Var<S> memory) const;
  std::vector<char> label_mask() const;
  std::vector<int> encoder_labels(std::span<const int> labels) const;

  ModelDims dims_;
  std::shared_ptr<const AtomLabels> labels_;
  AtomEncoder<S> enc_;
  Mlp<S> expand_head_, atom_head_, bond_head_, nu_, hu_;
  Attention<S> att_d_, att_s_, att_b_;
};

}  // namespace nn

template <class S>
class AtomTranslator {
public:
  AtomTranslator(std::shared_ptr<const AtomLabels> labels,
                 const VaeConfig &config);

  nn::ParamStore<S> &params() { return store_; }
  const nn::ParamStore<S> &params() const { return store_; }
  const VaeConfig &config() const { return config_; }
  void set_max_steps(int n) { config_.max_steps = n; }
  const AtomLabels &labels() const { return *labels_; }
  const nn::AtomDecoder<S> &decoder() const { return decoder_; }

  // Q(z | x, y) from the summed atom vectors of y minus those of x.
  nn::LatentSample<S> posterior(nn::Tape<S> &t, nn::Var<S> x, nn::Var<S> y,
                                const nn::Matrix<S> *eps);
  nn::LossParts<S> loss(nn::Tape<S> &t, const AtomExample &ex,
                        const nn::Matrix<S> *eps);

  // Atom vectors of a prepared input.
  nn::Matrix<S> memory(const MolGraph &prepared_x);
  DecodeResult decode(const nn::Matrix<S> &memory, const nn::Matrix<S> &z,
                      const DecodeOptions &opts,
                      std::mt19937_64 *rng = nullptr);
  // Posterior mean of (x, y), then greedy decode conditioned on x.
  MolGraph reconstruct(const MolGraph &x, const MolGraph &y);
  // K greedy decodes with z drawn from the prior.
  std::vector<MolGraph> sample(const MolGraph &x, int k, std::mt19937_64 &rng);

private:
  std::shared_ptr<const AtomLabels> labels_;
  VaeConfig config_;
  nn::ParamStore<S> store_;
  nn::AtomEncoder<S> encoder_;
  nn::Mlp<S> posterior_;
  nn::AtomDecoder<S> decoder_;
};

template <class S>
TrainHistory train_atom_translator(AtomTranslator<S> &model,
                                   const std::vector<AtomExample> &examples,
                                   const TrainOptions &opts,
                                   const EpochCallback &on_epoch = {});

// Fraction of pairs whose reconstruction equals the kekulized target.
template <class S>
double atom_translation_accuracy(AtomTranslator<S> &model,
                                 const std::vector<PairExample> &pairs);

// Four decode steps per target atom, maximized over the examples (100
// when empty).
int atom_default_max_steps(const std::vector<AtomExample> &examples);

// Model directory with kind "atom_g2g".
void save_atom_translator(const std::string &dir,
                          const AtomTranslator<float> &model);
std::unique_ptr<AtomTranslator<float>> load_atom_translator(
    const std::string &dir);

}  // namespace hiergen

#endif  // HIERGEN_ATOMG2G_H_
