//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/translate.h"

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hiergen/chem.h"
#include "hiergen/error.h"
#include "hiergen/smiles.h"

namespace hiergen {

double similarity(const MolGraph &a, const MolGraph &b) {
  return tanimoto(morgan_fingerprint(a), morgan_fingerprint(b));
}

PairExample make_pair(MolGraph x, MolGraph y) {
  PairExample p;
  p.sim = similarity(x, y);
  p.x = std::move(x);
  p.y = std::move(y);
  return p;
}

std::vector<PairExample> read_pairs(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::kIo, "cannot read " + path);
  std::vector<PairExample> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw Error(ErrorKind::kFormat,
                  path + ":" + std::to_string(lineno) + ": expected x<TAB>y");
    try {
      pairs.push_back(make_pair(parse_smiles(line.substr(0, tab)),
                                parse_smiles(line.substr(tab + 1))));
    } catch (const Error &e) {
      throw Error(e.kind(), path + ":" + std::to_string(lineno) + ": "
                                + e.what());
    }
  }
  return pairs;
}

namespace nn {

template <class S>
DiffVector<S> diff_vector(const EncoderOutput<S> &x,
                          const EncoderOutput<S> &y) {
  return {sum_rows(y.motif_vecs) - sum_rows(x.motif_vecs),
          sum_rows(y.atom_vecs) - sum_rows(x.atom_vecs)};
}

template DiffVector<float> diff_vector(const EncoderOutput<float> &,
                                       const EncoderOutput<float> &);
template DiffVector<double> diff_vector(const EncoderOutput<double> &,
                                        const EncoderOutput<double> &);

}  // namespace nn

TranslationExample make_translation_example(const PairExample &pair,
                                            const Vocab &vocab) {
  return {build_hier_graph(pair.x, vocab), make_example(pair.y, vocab)};
}

template <class S>
Translator<S>::Translator(std::shared_ptr<const Vocab> vocab,
                          const VaeConfig &config)
    : vocab_(std::move(vocab)), config_(config) {
  std::mt19937_64 rng(config.seed);
  const ModelDims &d = config.dims;
  encoder_ = nn::HierEncoder<S>(store_, "enc", d, *vocab_, rng);
  posterior_.init(store_, "posterior", 2 * d.hidden, d.hidden, 2 * d.latent,
                  rng);
  nn::DecoderOptions opts;
  opts.conditional = true;
  opts.attach_motif_embedding = config.attach_motif_embedding;
  decoder_ = nn::HierDecoder<S>(store_, "dec", d, vocab_, opts, rng);
}

template <class S>
nn::LatentSample<S> Translator<S>::posterior(nn::Tape<S> &t,
                                             const nn::EncoderOutput<S> &x,
                                             const nn::EncoderOutput<S> &y,
                                             const nn::Matrix<S> *eps) {
  nn::DiffVector<S> d = nn::diff_vector(x, y);
  int l = config_.dims.latent;
  nn::Var<S> out = posterior_(t, store_, nn::concat_cols({d.motif, d.atom}));
  return nn::reparameterize(t, nn::slice_cols(out, 0, l),
                            nn::slice_cols(out, l, l), eps);
}

template <class S>
nn::LossParts<S> Translator<S>::loss(nn::Tape<S> &t,
                                     const TranslationExample &ex,
                                     const nn::Matrix<S> *eps) {
  nn::EncoderOutput<S> x = encoder_.encode(t, store_, ex.x);
  nn::EncoderOutput<S> y = encoder_.encode(t, store_, ex.y.hier);
  nn::LatentSample<S> post = posterior(t, x, y, eps);
  nn::Memory<S> mem{x.motif_vecs, x.attach_vecs, x.atom_vecs};
  nn::LossParts<S> parts = decoder_.teacher_forced_loss(t, store_, ex.y,
                                                        post.z, &mem);
  parts.kl = post.kl;
  if (config_.kl_weight != 0)
    parts.total = parts.total
                  + nn::scale(post.kl, static_cast<S>(config_.kl_weight));
  return parts;
}

template <class S>
nn::MemoryValues<S> Translator<S>::memory(const HierGraph &x) {
  nn::Tape<S> t(false);
  nn::EncoderOutput<S> e = encoder_.encode(t, store_, x);
  return {e.motif_vecs.value(), e.attach_vecs.value(), e.atom_vecs.value()};
}

template <class S>
DecodeResult Translator<S>::decode(const nn::MemoryValues<S> &mem,
                                   const nn::Matrix<S> &z,
                                   const DecodeOptions &opts,
                                   std::mt19937_64 *rng) {
  DecodeOptions o = opts;
  if (o.max_steps <= 0)
    o.max_steps = config_.max_steps > 0 ? config_.max_steps : 100;
  return decoder_.decode(store_, z, &mem, o, rng);
}

template <class S>
MolGraph Translator<S>::reconstruct(const MolGraph &x, const MolGraph &y) {
  HierGraph hx, hy;
  try {
    hx = build_hier_graph(x, *vocab_);
    hy = build_hier_graph(y, *vocab_);
  } catch (const Error &) {
    return MolGraph();
  }
  nn::Tape<S> t(false);
  nn::EncoderOutput<S> ex = encoder_.encode(t, store_, hx);
  nn::EncoderOutput<S> ey = encoder_.encode(t, store_, hy);
  nn::Matrix<S> z = posterior(t, ex, ey, nullptr).mu.value();
  nn::MemoryValues<S> mem{ex.motif_vecs.value(), ex.attach_vecs.value(),
                          ex.atom_vecs.value()};
  return decode(mem, z, DecodeOptions{}).mol;
}

template <class S>
std::vector<MolGraph> Translator<S>::sample(const MolGraph &x, int k,
                                            std::mt19937_64 &rng) {
  nn::MemoryValues<S> mem = memory(build_hier_graph(x, *vocab_));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<MolGraph> out;
  for (int i = 0; i < k; ++i) {
    nn::Matrix<S> z(1, config_.dims.latent);
    for (int j = 0; j < config_.dims.latent; ++j)
      z(0, j) = static_cast<S>(normal(rng));
    out.push_back(decode(mem, z, DecodeOptions{}).mol);
  }
  return out;
}

template <class S>
TrainHistory train_translator(Translator<S> &model,
                              const std::vector<TranslationExample> &examples,
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
double translation_accuracy(Translator<S> &model,
                            const std::vector<PairExample> &pairs) {
  if (pairs.empty())
    return 0.0;
  int hits = 0;
  for (const PairExample &p: pairs) {
    MolGraph out = model.reconstruct(p.x, p.y);
    hits += !out.empty() && canonical_smiles(out) == canonical_smiles(p.y);
  }
  return static_cast<double>(hits) / pairs.size();
}

template class Translator<float>;
template class Translator<double>;
template TrainHistory train_translator(Translator<float> &,
                                       const std::vector<TranslationExample> &,
                                       const TrainOptions &,
                                       const EpochCallback &);
template TrainHistory train_translator(Translator<double> &,
                                       const std::vector<TranslationExample> &,
                                       const TrainOptions &,
                                       const EpochCallback &);
template double translation_accuracy(Translator<float> &,
                                     const std::vector<PairExample> &);
template double translation_accuracy(Translator<double> &,
                                     const std::vector<PairExample> &);

void save_translator(const std::string &dir, const Translator<float> &model) {
  const VaeConfig &c = model.config();
  ModelConfig mc;
  mc.dims = c.dims;
  mc.kl_weight = c.kl_weight;
  mc.attach_motif_embedding = c.attach_motif_embedding;
  mc.max_steps = c.max_steps;
  mc.seed = c.seed;
  write_model_header(dir, "hier_g2g", mc);
  save_vocab(dir + "/vocab", model.vocab());
  nn::save_checkpoint(dir + "/params.hgck", model.params());
}

std::unique_ptr<Translator<float>> load_translator(const std::string &dir) {
  ModelConfig mc = read_model_header(dir, "hier_g2g");
  auto vocab = std::make_shared<const Vocab>(load_vocab(dir + "/vocab"));
  auto model = std::make_unique<Translator<float>>(vocab, vae_config(mc));
  nn::load_checkpoint(dir + "/params.hgck", model->params());
  return model;
}

double RingCountOracle::score(const MolGraph &mol) const {
  std::vector<int> root(mol.num_atoms());
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](int a) {
    while (root[a] != a)
      a = root[a] = root[root[a]];
    return a;
  };
  int components = mol.num_atoms();
  for (const Bond &b: mol.bonds()) {
    int u = find(b.begin), v = find(b.end);
    if (u != v) {
      root[u] = v;
      --components;
    }
  }
  return mol.num_bonds() - mol.num_atoms() + components;
}

double MwBandOracle::score(const MolGraph &mol) const {
  double mw = molecular_weight(mol);
  if (mw < lo_)
    return mw - lo_;
  if (mw > hi_)
    return hi_ - mw;
  return 0.0;
}

FileOracle::FileOracle(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::kIo, "cannot read " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    auto tab = line.find('\t');
    std::string where = path + ":" + std::to_string(lineno);
    if (tab == std::string::npos)
      throw Error(ErrorKind::kFormat, where + ": expected smiles<TAB>score");
    std::istringstream num(line.substr(tab + 1));
    num.imbue(std::locale::classic());
    double v = 0;
    if (!(num >> v))
      throw Error(ErrorKind::kFormat, where + ": bad score");
    scores_[canonical_smiles(parse_smiles(line.substr(0, tab)))] = v;
  }
}

double FileOracle::score(const MolGraph &mol) const {
  std::string key = canonical_smiles(mol);
  auto it = scores_.find(key);
  if (it == scores_.end())
    throw Error(ErrorKind::kOracleFailure, "no score for " + key);
  return it->second;
}

std::unique_ptr<PropertyOracle> make_oracle(const std::string &spec) {
  if (spec == "ringcount")
    return std::make_unique<RingCountOracle>();
  if (spec == "mwband")
    return std::make_unique<MwBandOracle>();
  if (spec.rfind("file:", 0) == 0)
    return std::make_unique<FileOracle>(spec.substr(5));
  throw Error(ErrorKind::kConfig, "unknown oracle " + spec);
}

namespace {

double mean_pairwise_distance(const std::vector<MolGraph> &mols) {
  if (mols.size() < 2)
    return 0.0;
  std::vector<Fingerprint> fps;
  for (const MolGraph &m: mols)
    fps.push_back(morgan_fingerprint(m));
  double total = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < fps.size(); ++i)
    for (std::size_t j = i + 1; j < fps.size(); ++j) {
      total += 1.0 - tanimoto(fps[i], fps[j]);
      ++pairs;
    }
  return total / pairs;
}

}  // namespace

TranslationReport evaluate_translation(const Sampler &sampler,
                                       const std::vector<MolGraph> &inputs,
                                       const PropertyOracle &oracle,
                                       const TranslationEvalConfig &config) {
  if (config.k < 1 || config.delta < 0 || config.delta > 1)
    throw Error(ErrorKind::kConfig, "translation needs k >= 1, delta in [0,1]");
  TranslationReport report;
  std::mt19937_64 rng(config.seed);
  bool improve = config.mode == TranslationEvalConfig::Mode::kImprovement;
  for (const MolGraph &x: inputs) {
    InputReport r;
    r.input = canonical_smiles(x);
    double base = 0;
    bool base_ok = true;
    try {
      base = oracle.score(x);
    } catch (const Error &e) {
      if (e.kind() != ErrorKind::kOracleFailure)
        throw;
      base_ok = false;
      ++r.oracle_failures;
    }
    std::vector<MolGraph> cands;
    try {
      cands = sampler(x, config.k, rng);
    } catch (const Error &) {
      // Inputs outside the vocabulary yield no candidates.
    }
    Fingerprint fx = morgan_fingerprint(x);
    std::vector<MolGraph> good;
    std::set<std::string> seen;
    double best = 0;
    for (const MolGraph &y: cands) {
      std::string smi = y.empty() ? std::string() : canonical_smiles(y);
      r.candidates.push_back(smi);
      if (smi.empty() || !base_ok)
        continue;
      if (tanimoto(fx, morgan_fingerprint(y)) < config.delta)
        continue;
      double s = 0;
      try {
        s = oracle.score(y);
      } catch (const Error &e) {
        if (e.kind() != ErrorKind::kOracleFailure)
          throw;
        ++r.oracle_failures;
        continue;
      }
      bool pass = config.range && !improve ? s >= config.lo && s <= config.hi
                                           : s > base;
      if (improve)
        best = std::max(best, s - base);
      if (pass && seen.insert(smi).second)
        good.push_back(y);
    }
    r.success = !good.empty();
    r.improvement = best;
    r.diversity = mean_pairwise_distance(good);
    report.success_rate += r.success;
    report.mean_improvement += r.improvement;
    report.diversity += r.diversity;
    report.per_input.push_back(std::move(r));
  }
  if (!inputs.empty()) {
    double n = static_cast<double>(inputs.size());
    report.success_rate /= n;
    report.mean_improvement /= n;
    report.diversity /= n;
  }
  return report;
}

std::string TranslationReport::to_json() const {
  nlohmann::ordered_json j;
  j["success_rate"] = success_rate;
  j["mean_improvement"] = mean_improvement;
  j["diversity"] = diversity;
  j["per_input"] = nlohmann::ordered_json::array();
  for (const InputReport &r: per_input) {
    nlohmann::ordered_json e;
    e["input"] = r.input;
    e["success"] = r.success;
    e["improvement"] = r.improvement;
    e["diversity"] = r.diversity;
    e["oracle_failures"] = r.oracle_failures;
    e["candidates"] = r.candidates;
    j["per_input"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

}  // namespace hiergen
