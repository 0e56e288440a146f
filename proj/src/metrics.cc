//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/metrics.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hiergen/error.h"
#include "hiergen/motifs.h"
#include "hiergen/smiles.h"

namespace hiergen {
namespace {

std::vector<Fingerprint> fingerprints(const std::vector<MolGraph> &mols) {
  std::vector<Fingerprint> out;
  out.reserve(mols.size());
  for (const MolGraph &m: mols)
    out.push_back(morgan_fingerprint(m));
  return out;
}

void require_non_empty(const std::vector<MolGraph> &a,
                       const std::vector<MolGraph> &b) {
  if (a.empty() || b.empty())
    throw Error(ErrorKind::kEmptyInput, "similarity of an empty set");
}

std::pair<double, double> moments(const std::vector<double> &v) {
  double mean = 0;
  for (double x: v)
    mean += x;
  mean /= v.size();
  double var = 0;
  for (double x: v)
    var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / v.size())};
}

}  // namespace

ValidityUniqueness validity_uniqueness(const std::vector<MolGraph> &samples) {
  if (samples.empty())
    throw Error(ErrorKind::kEmptyInput, "no samples");
  int valid = 0;
  std::set<std::string> distinct;
  for (const MolGraph &m: samples) {
    if (m.empty() || !is_valence_valid(m))
      continue;
    ++valid;
    distinct.insert(canonical_smiles(m));
  }
  ValidityUniqueness r;
  r.valid = static_cast<double>(valid) / samples.size();
  r.unique = valid > 0 ? static_cast<double>(distinct.size()) / valid : 0.0;
  return r;
}

double diversity(const std::vector<Fingerprint> &fps) {
  if (fps.size() < 2)
    throw Error(ErrorKind::kTooFewSamples, "diversity needs two samples");
  double total = 0;
  for (std::size_t i = 0; i < fps.size(); ++i)
    for (std::size_t j = i + 1; j < fps.size(); ++j)
      total += 1.0 - tanimoto(fps[i], fps[j]);
  double pairs = 0.5 * static_cast<double>(fps.size()) * (fps.size() - 1);
  return total / pairs;
}

double diversity(const std::vector<MolGraph> &samples) {
  return diversity(fingerprints(samples));
}

double snn(const std::vector<Fingerprint> &samples,
           const std::vector<Fingerprint> &ref) {
  if (ref.empty())
    throw Error(ErrorKind::kEmptyReference, "empty reference set");
  if (samples.empty())
    throw Error(ErrorKind::kEmptyInput, "no samples");
  double total = 0;
  for (const Fingerprint &s: samples) {
    double best = 0;
    for (const Fingerprint &r: ref)
      best = std::max(best, tanimoto(s, r));
    total += best;
  }
  return total / samples.size();
}

double snn(const std::vector<MolGraph> &samples,
           const std::vector<MolGraph> &ref) {
  if (ref.empty())
    throw Error(ErrorKind::kEmptyReference, "empty reference set");
  return snn(fingerprints(samples), fingerprints(ref));
}

double cosine_similarity(const KeyCounts &a, const KeyCounts &b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto &[k, v]: a) {
    na += v * v;
    auto it = b.find(k);
    if (it != b.end())
      dot += v * it->second;
  }
  for (const auto &[k, v]: b)
    nb += v * v;
  if (na == 0 || nb == 0)
    return 0.0;
  return std::min(1.0, dot / std::sqrt(na * nb));
}

KeyCounts fragment_counts(const std::vector<MolGraph> &mols) {
  KeyCounts c;
  for (const MolGraph &m: mols)
    for (const Fragment &f: bridge_fragments(m))
      c[fragment_key(m, f)] += 1;
  return c;
}

KeyCounts scaffold_counts(const std::vector<MolGraph> &mols) {
  KeyCounts c;
  for (const MolGraph &m: mols) {
    std::string key = scaffold_key(m);
    if (!key.empty())
      c[key] += 1;
  }
  return c;
}

double fragment_similarity(const std::vector<MolGraph> &gen,
                           const std::vector<MolGraph> &ref) {
  require_non_empty(gen, ref);
  return cosine_similarity(fragment_counts(gen), fragment_counts(ref));
}

double scaffold_similarity(const std::vector<MolGraph> &gen,
                           const std::vector<MolGraph> &ref) {
  require_non_empty(gen, ref);
  return cosine_similarity(scaffold_counts(gen), scaffold_counts(ref));
}

double frechet_1d(const std::vector<double> &a, const std::vector<double> &b) {
  if (a.size() < 2 || b.size() < 2)
    throw Error(ErrorKind::kTooFewSamples, "frechet distance needs two values");
  auto [ma, sa] = moments(a);
  auto [mb, sb] = moments(b);
  return std::sqrt((ma - mb) * (ma - mb) + (sa - sb) * (sa - sb));
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["recon"] = recon ? nlohmann::ordered_json(*recon) : nullptr;
  j["valid"] = valid;
  j["unique"] = unique;
  j["diversity"] = diversity;
  j["snn"] = snn;
  j["frag"] = frag;
  j["scaf"] = scaf;
  nlohmann::ordered_json ext = nlohmann::ordered_json::object();
  for (const auto &[name, v]: frechet_external)
    ext[name] = v;
  j["frechet"] = {{"mw", frechet_mw}, {"external", ext}};
  return j.dump(2);
}

ScoreTable read_score_table(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::kIo, "cannot read " + path);
  ScoreTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::string where = path + ":" + std::to_string(lineno);
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(ErrorKind::kFormat, where + ": expected smiles<TAB>score");
    std::istringstream num(line.substr(tab + 1));
    num.imbue(std::locale::classic());
    double v = 0;
    if (!(num >> v))
      throw Error(ErrorKind::kFormat, where + ": bad score");
    try {
      table[canonical_smiles(parse_smiles(line.substr(0, tab)))] = v;
    } catch (const Error &e) {
      throw Error(e.kind(), where + ": " + e.what());
    }
  }
  return table;
}

EvalReport evaluate_samples(const std::vector<MolGraph> &samples,
                            const std::vector<MolGraph> &ref,
                            const std::map<std::string, ScoreTable> &external) {
  if (ref.empty())
    throw Error(ErrorKind::kEmptyReference, "empty reference set");
  ValidityUniqueness vu = validity_uniqueness(samples);
  std::vector<MolGraph> valid;
  for (const MolGraph &m: samples)
    if (!m.empty() && is_valence_valid(m))
      valid.push_back(m);
  EvalReport r;
  r.valid = vu.valid;
  r.unique = vu.unique;
  std::vector<Fingerprint> fs = fingerprints(valid), fr = fingerprints(ref);
  r.diversity = diversity(fs);
  r.snn = snn(fs, fr);
  r.frag = fragment_similarity(valid, ref);
  r.scaf = scaffold_similarity(valid, ref);
  std::vector<double> mw_s, mw_r;
  for (const MolGraph &m: valid)
    mw_s.push_back(molecular_weight(m));
  for (const MolGraph &m: ref)
    mw_r.push_back(molecular_weight(m));
  r.frechet_mw = frechet_1d(mw_s, mw_r);
  for (const auto &[name, table]: external) {
    auto lookup = [&table](const std::vector<MolGraph> &mols) {
      std::vector<double> out;
      for (const MolGraph &m: mols) {
        auto it = table.find(canonical_smiles(m));
        if (it != table.end())
          out.push_back(it->second);
      }
      return out;
    };
    r.frechet_external[name] = frechet_1d(lookup(valid), lookup(ref));
  }
  return r;
}

}  // namespace hiergen
