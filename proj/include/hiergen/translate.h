//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_TRANSLATE_H_
#define HIERGEN_TRANSLATE_H_

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hiergen/hdecoder.h"

namespace hiergen {

struct PairExample {
  MolGraph x;
  MolGraph y;
  // Tanimoto similarity of the Morgan fingerprints.
  double sim = 0;
};

PairExample make_pair(MolGraph x, MolGraph y);
// TSV `smiles_x<TAB>smiles_y`; blank lines skipped. Throws Error(kFormat)
// with the line number on malformed rows.
std::vector<PairExample> read_pairs(const std::string &path);

double similarity(const MolGraph &a, const MolGraph &b);

namespace nn {

template <class S>
struct DiffVector {
  Var<S> motif;
  Var<S> atom;
};

// Pooled motif and atom vectors of y minus those of x (1 x hidden each).
template <class S>
DiffVector<S> diff_vector(const EncoderOutput<S> &x, const EncoderOutput<S> &y);

}  // namespace nn

struct TranslationExample {
  HierGraph x;
  TrainExample y;
};

TranslationExample make_translation_example(const PairExample &pair,
                                            const Vocab &vocab);

template <class S>
class Translator {
public:
  Translator(std::shared_ptr<const Vocab> vocab, const VaeConfig &config);

  nn::ParamStore<S> &params() { return store_; }
  const nn::ParamStore<S> &params() const { return store_; }
  const VaeConfig &config() const { return config_; }
  void set_max_steps(int n) { config_.max_steps = n; }
  const Vocab &vocab() const { return *vocab_; }

  // Q(z | x, y) from the difference vector; eps null means eps = 0.
  nn::LatentSample<S> posterior(nn::Tape<S> &t, const nn::EncoderOutput<S> &x,
                                const nn::EncoderOutput<S> &y,
                                const nn::Matrix<S> *eps);
  nn::LossParts<S> loss(nn::Tape<S> &t, const TranslationExample &ex,
                        const nn::Matrix<S> *eps);

  // Encoded input for attention.
  nn::MemoryValues<S> memory(const HierGraph &x);
  DecodeResult decode(const nn::MemoryValues<S> &mem, const nn::Matrix<S> &z,
                      const DecodeOptions &opts, std::mt19937_64 *rng = nullptr);
  // Posterior mean of (x, y), then greedy decode conditioned on x.
  MolGraph reconstruct(const MolGraph &x, const MolGraph &y);
  // K greedy decodes with z drawn from the prior.
  std::vector<MolGraph> sample(const MolGraph &x, int k, std::mt19937_64 &rng);

  const nn::HierDecoder<S> &decoder() const { return decoder_; }

private:
  std::shared_ptr<const Vocab> vocab_;
  VaeConfig config_;
  nn::ParamStore<S> store_;
  nn::HierEncoder<S> encoder_;
  nn::Mlp<S> posterior_;
  nn::HierDecoder<S> decoder_;
};

template <class S>
TrainHistory train_translator(Translator<S> &model,
                              const std::vector<TranslationExample> &examples,
                              const TrainOptions &opts,
                              const EpochCallback &on_epoch = {});

// Fraction of pairs with canonical reconstruct(x, y) == y.
template <class S>
double translation_accuracy(Translator<S> &model,
                            const std::vector<PairExample> &pairs);

void save_translator(const std::string &dir, const Translator<float> &model);
std::unique_ptr<Translator<float>> load_translator(const std::string &dir);

// Molecule -> score. May throw Error(kOracleFailure).
class PropertyOracle {
public:
  virtual ~PropertyOracle() = default;
  virtual std::string name() const = 0;
  virtual double score(const MolGraph &mol) const = 0;
};

// Number of rings (bonds - atoms + connected components).
class RingCountOracle: public PropertyOracle {
public:
  std::string name() const override { return "ringcount"; }
  double score(const MolGraph &mol) const override;
};

// 0 inside [lo, hi] molecular weight, minus the distance to the band outside.
class MwBandOracle: public PropertyOracle {
public:
  MwBandOracle(double lo = 250, double hi = 350): lo_(lo), hi_(hi) { }
  std::string name() const override { return "mwband"; }
  double score(const MolGraph &mol) const override;

private:
  double lo_, hi_;
};

// Scores looked up by canonical SMILES from a `smiles<TAB>score` file.
class FileOracle: public PropertyOracle {
public:
  explicit FileOracle(const std::string &path);
  std::string name() const override { return "file"; }
  double score(const MolGraph &mol) const override;

private:
  std::map<std::string, double> scores_;
};

// "ringcount", "mwband" or "file:<path>". Throws Error(kConfig).
std::unique_ptr<PropertyOracle> make_oracle(const std::string &spec);

struct TranslationEvalConfig {
  int k = 20;
  double delta = 0.4;
  // Success: some candidate has sim >= delta and passes the property
  // constraint. Improvement: best score(y) - score(x) over candidates with
  // sim >= delta, 0 when there is none.
  enum class Mode { kSuccess, kImprovement } mode = Mode::kSuccess;
  // Property constraint for success: score(y) in [lo, hi] when `range`,
  // otherwise score(y) > score(x).
  bool range = false;
  double lo = 0, hi = 0;
  unsigned seed = 1;
};

struct InputReport {
  std::string input;
  std::vector<std::string> candidates;
  bool success = false;
  double improvement = 0;
  double diversity = 0;
  int oracle_failures = 0;
};

struct TranslationReport {
  double success_rate = 0;
  double mean_improvement = 0;
  double diversity = 0;
  std::vector<InputReport> per_input;

  std::string to_json() const;
};

using Sampler = std::function<std::vector<MolGraph>(
    const MolGraph &x, int k, std::mt19937_64 &rng)>;

TranslationReport evaluate_translation(const Sampler &sampler,
                                       const std::vector<MolGraph> &inputs,
                                       const PropertyOracle &oracle,
                                       const TranslationEvalConfig &config);

}  // namespace hiergen

#endif  // HIERGEN_TRANSLATE_H_
