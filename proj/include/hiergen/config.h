//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_CONFIG_H_
#define HIERGEN_CONFIG_H_

#include <iosfwd>
#include <map>
#include <string>

#include "hiergen/hmpn.h"

namespace hiergen {

// Flat `key = value` lines; '#' starts a comment. Throws Error(kConfig) on
// malformed lines or repeated keys.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::istream &in);
KeyValues read_key_values(const std::string &path);

struct ModelConfig {
  ModelDims dims;
  double kl_weight = 0.1;
  int epochs = 10;
  int batch = 32;
  double lr = 1e-3;
  double lr_decay = 1.0;
  double clip_norm = 0;
  unsigned seed = 1;
  int max_steps = 0;
  bool attach_motif_embedding = false;
};

// Overrides the recognized keys (hidden_dim, embed_dim, latent_dim, T,
// kl_weight, epochs, batch, lr, lr_decay, clip_norm, seed, encoder_layers,
// max_steps, attach_motif_embedding). Unknown keys and out-of-range values throw
// Error(kConfig).
void apply_key_values(const KeyValues &kv, ModelConfig &config);
void validate(const ModelConfig &config);

KeyValues to_key_values(const ModelConfig &config);
void write_key_values(std::ostream &out, const KeyValues &kv);
void write_key_values(const std::string &path, const KeyValues &kv);

// Model directories hold model.txt (kind, format and config keys), the
// vocabulary files and params.hgck.
inline constexpr int kModelFormat = 1;
void write_model_header(const std::string &dir, const std::string &kind,
                        const ModelConfig &config);
// Throws Error(kVersionMismatch) for another kind or format.
ModelConfig read_model_header(const std::string &dir, const std::string &kind);

}  // namespace hiergen

#endif  // HIERGEN_CONFIG_H_
