//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_METRICS_H_
#define HIERGEN_METRICS_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hiergen/chem.h"
#include "hiergen/molgraph.h"

namespace hiergen {

struct ValidityUniqueness {
  double valid = 0;
  // Distinct canonical forms over the valid samples; 0 without any.
  double unique = 0;
};

// Throws Error(kEmptyInput) on an empty list.
ValidityUniqueness validity_uniqueness(const std::vector<MolGraph> &samples);

// Mean of 1 - tanimoto over unordered pairs. Throws Error(kTooFewSamples)
// below two samples.
double diversity(const std::vector<Fingerprint> &fps);
double diversity(const std::vector<MolGraph> &samples);

// Mean over samples of the best tanimoto against the reference. Throws
// Error(kEmptyReference) or Error(kEmptyInput).
double snn(const std::vector<Fingerprint> &samples,
           const std::vector<Fingerprint> &ref);
double snn(const std::vector<MolGraph> &samples,
           const std::vector<MolGraph> &ref);

using KeyCounts = std::map<std::string, double>;

// Cosine similarity of two sparse count vectors; 0 when either is zero.
double cosine_similarity(const KeyCounts &a, const KeyCounts &b);

// Bridge-bond fragment keys and Bemis-Murcko scaffold keys. Acyclic
// molecules have no scaffold and contribute nothing.
KeyCounts fragment_counts(const std::vector<MolGraph> &mols);
KeyCounts scaffold_counts(const std::vector<MolGraph> &mols);

// Throw Error(kEmptyInput) when either set is empty.
double fragment_similarity(const std::vector<MolGraph> &gen,
                           const std::vector<MolGraph> &ref);
double scaffold_similarity(const std::vector<MolGraph> &gen,
                           const std::vector<MolGraph> &ref);

// sqrt((mu_a - mu_b)^2 + (sigma_a - sigma_b)^2) with population standard
// deviations. Throws Error(kTooFewSamples) below two values per list.
double frechet_1d(const std::vector<double> &a, const std::vector<double> &b);

struct EvalReport {
  std::optional<double> recon;
  double valid = 0;
  double unique = 0;
  double diversity = 0;
  double snn = 0;
  double frag = 0;
  double scaf = 0;
  double frechet_mw = 0;
  std::map<std::string, double> frechet_external;

  std::string to_json() const;
};

// Smiles to score, as read from `smiles<TAB>score` files.
using ScoreTable = std::map<std::string, double>;
ScoreTable read_score_table(const std::string &path);

// Distribution metrics of the valid samples against the reference set.
// External score tables are keyed by canonical SMILES; molecules missing
// from a table are skipped for that property.
EvalReport evaluate_samples(const std::vector<MolGraph> &samples,
                            const std::vector<MolGraph> &ref,
                            const std::map<std::string, ScoreTable> &external =
                                {});

}  // namespace hiergen

#endif  // HIERGEN_METRICS_H_
