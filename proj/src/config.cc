//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/config.h"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hiergen/error.h"

namespace hiergen {
namespace {

std::string trim(const std::string &s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string &key, const std::string &value) {
  throw Error(ErrorKind::kConfig, "invalid value for " + key + ": '" + value
                                      + "'");
}

long to_long(const std::string &key, const std::string &value) {
  long out = 0;
  auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size())
    bad_value(key, value);
  return out;
}

int to_int(const std::string &key, const std::string &value) {
  long v = to_long(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    bad_value(key, value);
  return static_cast<int>(v);
}

double to_double(const std::string &key, const std::string &value) {
  std::istringstream in(value);
  in.imbue(std::locale::classic());
  double v = 0;
  if (!(in >> v) || !in.eof())
    bad_value(key, value);
  return v;
}

bool to_bool(const std::string &key, const std::string &value) {
  if (value == "1" || value == "true")
    return true;
  if (value == "0" || value == "false")
    return false;
  bad_value(key, value);
}

}  // namespace

KeyValues parse_key_values(std::istream &in) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    line = trim(line);
    if (line.empty())
      continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::kConfig,
                  "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error(ErrorKind::kConfig,
                  "line " + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, value).second)
      throw Error(ErrorKind::kConfig, "repeated key " + key);
  }
  return kv;
}

KeyValues read_key_values(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::kIo, "cannot read " + path);
  return parse_key_values(in);
}

void apply_key_values(const KeyValues &kv, ModelConfig &c) {
  for (const auto &[key, value]: kv) {
    if (key == "hidden_dim")
      c.dims.hidden = to_int(key, value);
    else if (key == "embed_dim")
      c.dims.embed = to_int(key, value);
    else if (key == "latent_dim")
      c.dims.latent = to_int(key, value);
    else if (key == "T")
      c.dims.iterations = to_int(key, value);
    else if (key == "encoder_layers")
      c.dims.encoder_layers = to_int(key, value);
    else if (key == "kl_weight")
      c.kl_weight = to_double(key, value);
    else if (key == "epochs")
      c.epochs = to_int(key, value);
    else if (key == "batch")
      c.batch = to_int(key, value);
    else if (key == "lr")
      c.lr = to_double(key, value);
    else if (key == "lr_decay")
      c.lr_decay = to_double(key, value);
    else if (key == "clip_norm")
      c.clip_norm = to_double(key, value);
    else if (key == "seed") {
      long s = to_long(key, value);
      if (s < 0 || s > std::numeric_limits<unsigned>::max())
        bad_value(key, value);
      c.seed = static_cast<unsigned>(s);
    } else if (key == "max_steps")
      c.max_steps = to_int(key, value);
    else if (key == "attach_motif_embedding")
      c.attach_motif_embedding = to_bool(key, value);
    else
      throw Error(ErrorKind::kConfig, "unknown config key " + key);
  }
  validate(c);
}

void validate(const ModelConfig &c) {
  auto require = [](bool ok, const char *what) {
    if (!ok)
      throw Error(ErrorKind::kConfig, what);
  };
  require(c.dims.hidden > 0, "hidden_dim must be positive");
  require(c.dims.embed > 0, "embed_dim must be positive");
  require(c.dims.latent > 0, "latent_dim must be positive");
  require(c.dims.iterations >= 0, "T must be non-negative");
  require(c.dims.encoder_layers >= 1 && c.dims.encoder_layers <= 3,
          "encoder_layers must be 1, 2 or 3");
  require(c.kl_weight >= 0, "kl_weight must be non-negative");
  require(c.epochs >= 0, "epochs must be non-negative");
  require(c.batch >= 1, "batch must be positive");
  require(c.lr > 0, "lr must be positive");
  require(c.lr_decay > 0 && c.lr_decay <= 1, "lr_decay must be in (0, 1]");
  require(c.clip_norm >= 0, "clip_norm must be >= 0");
  require(c.max_steps >= 0, "max_steps must be non-negative");
}

KeyValues to_key_values(const ModelConfig &c) {
  auto num = [](double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << v;
    return os.str();
  };
  return {
      {"hidden_dim", std::to_string(c.dims.hidden)},
      {"embed_dim", std::to_string(c.dims.embed)},
      {"latent_dim", std::to_string(c.dims.latent)},
      {"T", std::to_string(c.dims.iterations)},
      {"encoder_layers", std::to_string(c.dims.encoder_layers)},
      {"kl_weight", num(c.kl_weight)},
      {"epochs", std::to_string(c.epochs)},
      {"batch", std::to_string(c.batch)},
      {"lr", num(c.lr)},
      {"lr_decay", num(c.lr_decay)},
      {"clip_norm", num(c.clip_norm)},
      {"seed", std::to_string(c.seed)},
      {"max_steps", std::to_string(c.max_steps)},
      {"attach_motif_embedding", c.attach_motif_embedding ? "1" : "0"},
  };
}

void write_key_values(std::ostream &out, const KeyValues &kv) {
  for (const auto &[key, value]: kv)
    out << key << " = " << value << "\n";
}

void write_key_values(const std::string &path, const KeyValues &kv) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::kIo, "cannot write " + path);
  write_key_values(out, kv);
  if (!out)
    throw Error(ErrorKind::kIo, "write failed for " + path);
}

void write_model_header(const std::string &dir, const std::string &kind,
                        const ModelConfig &config) {
  std::filesystem::create_directories(dir);
  KeyValues kv = to_key_values(config);
  kv["kind"] = kind;
  kv["format"] = std::to_string(kModelFormat);
  write_key_values(dir + "/model.txt", kv);
}

ModelConfig read_model_header(const std::string &dir, const std::string &kind) {
  KeyValues kv = read_key_values(dir + "/model.txt");
  if (kv["kind"] != kind)
    throw Error(ErrorKind::kVersionMismatch,
                dir + " holds a '" + kv["kind"] + "' model, expected " + kind);
  if (kv["format"] != std::to_string(kModelFormat))
    throw Error(ErrorKind::kVersionMismatch,
                "unsupported model format " + kv["format"]);
  kv.erase("kind");
  kv.erase("format");
  ModelConfig config;
  apply_key_values(kv, config);
  return config;
}

}  // namespace hiergen
