//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hiergen/atomg2g.h"
#include "hiergen/chem.h"
#include "hiergen/config.h"
#include "hiergen/error.h"
#include "hiergen/hdecoder.h"
#include "hiergen/metrics.h"
#include "hiergen/motifs.h"
#include "hiergen/smiles.h"
#include "hiergen/translate.h"

namespace hiergen {
namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Globals {
  unsigned seed = 1;
  int threads = 1;
};

struct SmilesLine {
  int line = 0;
  std::string text;
  MolGraph mol;
};

// First whitespace-separated token of every non-empty line. Parse failures
// throw with the line number unless `skip_bad`.
std::vector<SmilesLine> read_smiles_file(const std::string &path,
                                         bool skip_bad = false,
                                         int *skipped = nullptr) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::kIo, "cannot read " + path);
  std::vector<SmilesLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream row(line);
    std::string tok;
    if (!(row >> tok) || tok[0] == '#')
      continue;
    try {
      out.push_back({lineno, tok, parse_smiles(tok)});
    } catch (const Error &e) {
      if (!skip_bad)
        throw Error(e.kind(),
                    path + ":" + std::to_string(lineno) + ": " + e.what());
      if (skipped)
        ++*skipped;
    }
  }
  return out;
}

std::vector<MolGraph> mols_of(const std::vector<SmilesLine> &lines) {
  std::vector<MolGraph> out;
  for (const SmilesLine &l: lines)
    out.push_back(l.mol);
  return out;
}

std::ofstream open_out(const std::string &path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty())
    std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::kIo, "cannot write " + path);
  return out;
}

void close_out(std::ofstream &out, const std::string &path) {
  out.close();
  if (!out)
    throw Error(ErrorKind::kIo, "write failed for " + path);
}

int worker_count(int n, int threads) {
  return std::max(1, std::min(threads, n));
}

// f(worker, i) for i in [0, n), worker w taking indices w, w + threads, ...
template <class F>
void parallel_for(int n, int threads, F f) {
  threads = worker_count(n, threads);
  if (threads == 1) {
    for (int i = 0; i < n; ++i)
      f(0, i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads)
          f(w, i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (std::thread &t: pool)
    t.join();
  for (auto &e: errors)
    if (e)
      std::rethrow_exception(e);
}

ModelConfig load_model_config(const std::string &path,
                              const std::vector<std::string> &overrides,
                              const Globals &g, bool seed_given) {
  ModelConfig c;
  KeyValues kv;
  if (!path.empty())
    kv = read_key_values(path);
  for (const std::string &o: overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorKind::kConfig, "override must be key=value: " + o);
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  if (seed_given)
    kv["seed"] = std::to_string(g.seed);
  apply_key_values(kv, c);
  return c;
}

void log_epoch(const EpochStats &s) {
  std::cerr << "epoch " << s.epoch << " loss " << s.loss << " kl " << s.kl
            << " ce/decision " << s.ce_per_decision << " (" << s.seconds
            << " s)\n";
}

std::string kind_of(const std::string &dir) {
  KeyValues kv = read_key_values(dir + "/model.txt");
  return kv["kind"];
}

// ---------------------------------------------------------------- vocab

struct VocabArgs {
  std::string input, out;
  int min_count = 5;
  bool small = false;
};

void run_vocab(const VocabArgs &a) {
  int bad = 0;
  std::vector<MolGraph> mols = mols_of(read_smiles_file(a.input, true, &bad));
  DecomposeOptions opts;
  opts.small_motifs = a.small;
  VocabStats stats;
  Vocab vocab = build_vocab(mols, a.min_count, opts, &stats);
  save_vocab(a.out, vocab);
  nlohmann::ordered_json j;
  j["molecules"] = mols.size();
  j["unparsed"] = bad;
  j["skipped"] = stats.skipped.size();
  j["min_count"] = a.min_count;
  j["small_motif"] = a.small;
  j["motif_vocab_size"] = vocab.motifs.size();
  j["attach_vocab_size"] = vocab.attach.total() - vocab.attach.num_motifs();
  j["mean_attach_per_motif"] = vocab.attach.mean_size();
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto &[size, count]: stats.motif_sizes)
    hist[std::to_string(size)] = count;
  j["motif_size_histogram"] = hist;
  std::string path = a.out + "/stats.json";
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  close_out(out, path);
  std::cout << "motifs " << vocab.motifs.size() << " attachments "
            << j["attach_vocab_size"] << " mean " << vocab.attach.mean_size()
            << "\n";
}

// ------------------------------------------------------------ train-vae

struct TrainArgs {
  std::string corpus, pairs, vocab, config, out;
  std::vector<std::string> set;
};

void run_train_vae(const TrainArgs &a, const Globals &g, bool seed_given) {
  ModelConfig mc = load_model_config(a.config, a.set, g, seed_given);
  auto vocab = std::make_shared<const Vocab>(load_vocab(a.vocab));
  std::vector<TrainExample> examples;
  int skipped = 0;
  for (const SmilesLine &l: read_smiles_file(a.corpus)) {
    try {
      examples.push_back(make_example(l.mol, *vocab));
    } catch (const Error &) {
      ++skipped;
    }
  }
  if (examples.empty())
    throw Error(ErrorKind::kEmptyInput, "no training molecule fits the vocab");
  if (skipped)
    std::cerr << "skipped " << skipped << " molecules outside the vocab\n";
  HierVae<float> model(vocab, vae_config(mc));
  if (mc.max_steps == 0)
    model.set_max_steps(default_max_steps(examples));
  train_vae(model, examples, train_options(mc), log_epoch);
  save_vae(a.out, model);
}

// ------------------------------------------------------ train-translate

void run_train_translate(const TrainArgs &a, const Globals &g,
                         bool seed_given) {
  ModelConfig mc = load_model_config(a.config, a.set, g, seed_given);
  auto vocab = std::make_shared<const Vocab>(load_vocab(a.vocab));
  std::vector<TranslationExample> examples;
  std::vector<TrainExample> targets;
  int skipped = 0;
  for (const PairExample &p: read_pairs(a.pairs)) {
    try {
      examples.push_back(make_translation_example(p, *vocab));
      targets.push_back(examples.back().y);
    } catch (const Error &) {
      ++skipped;
    }
  }
  if (examples.empty())
    throw Error(ErrorKind::kEmptyInput, "no training pair fits the vocab");
  if (skipped)
    std::cerr << "skipped " << skipped << " pairs outside the vocab\n";
  Translator<float> model(vocab, vae_config(mc));
  if (mc.max_steps == 0)
    model.set_max_steps(default_max_steps(targets));
  train_translator(model, examples, train_options(mc), log_epoch);
  save_translator(a.out, model);
}

void run_train_atom(const TrainArgs &a, const Globals &g, bool seed_given) {
  ModelConfig mc = load_model_config(a.config, a.set, g, seed_given);
  std::vector<PairExample> pairs = read_pairs(a.pairs);
  std::vector<MolGraph> all;
  for (const PairExample &p: pairs) {
    all.push_back(p.x);
    all.push_back(p.y);
  }
  auto labels = std::make_shared<const AtomLabels>(
      AtomLabels::from_corpus(all));
  std::vector<AtomExample> examples;
  int skipped = 0;
  for (const PairExample &p: pairs) {
    try {
      examples.push_back(make_atom_example(p, *labels));
    } catch (const Error &) {
      ++skipped;
    }
  }
  if (examples.empty())
    throw Error(ErrorKind::kEmptyInput, "no usable training pair");
  if (skipped)
    std::cerr << "skipped " << skipped << " pairs that cannot be kekulized\n";
  AtomTranslator<float> model(labels, vae_config(mc));
  if (mc.max_steps == 0)
    model.set_max_steps(atom_default_max_steps(examples));
  train_atom_translator(model, examples, train_options(mc), log_epoch);
  save_atom_translator(a.out, model);
}

// ------------------------------------------------------------- generate

struct GenerateArgs {
  std::string ckpt, out;
  int n = 0;
};

void run_generate(const GenerateArgs &a, const Globals &g) {
  if (a.n < 0)
    throw Error(ErrorKind::kConfig, "--n must be non-negative");
  std::vector<std::unique_ptr<HierVae<float>>> models;
  for (int w = 0; w < worker_count(a.n, g.threads); ++w)
    models.push_back(load_vae(a.ckpt));
  // Latents are drawn up front so the output does not depend on --threads.
  std::mt19937_64 rng(g.seed);
  std::vector<nn::Matrix<float>> zs;
  for (int i = 0; i < a.n; ++i)
    zs.push_back(models[0]->sample_prior(rng));
  std::vector<std::string> out(a.n);
  parallel_for(a.n, g.threads, [&](int w, int i) {
    DecodeResult r = models[w]->decode(zs[i], DecodeOptions{});
    out[i] = r.mol.empty() ? "" : canonical_smiles(r.mol);
  });
  std::ofstream f = open_out(a.out);
  for (const std::string &s: out)
    f << s << "\n";
  close_out(f, a.out);
}

// ---------------------------------------------------------- reconstruct

struct ReconstructArgs {
  std::string ckpt, input, out;
};

void run_reconstruct(const ReconstructArgs &a, const Globals &g) {
  std::vector<SmilesLine> lines = read_smiles_file(a.input);
  int n = static_cast<int>(lines.size());
  std::vector<std::unique_ptr<HierVae<float>>> models;
  for (int w = 0; w < worker_count(n, g.threads); ++w)
    models.push_back(load_vae(a.ckpt));
  std::vector<std::string> in(n), out(n);
  parallel_for(n, g.threads, [&](int w, int i) {
    in[i] = canonical_smiles(lines[i].mol);
    MolGraph r = models[w]->reconstruct(lines[i].mol);
    out[i] = r.empty() ? "" : canonical_smiles(r);
  });
  std::ofstream f = open_out(a.out);
  int hits = 0;
  f << "input\treconstruction\tmatch\n";
  for (int i = 0; i < n; ++i) {
    bool match = in[i] == out[i];
    hits += match;
    f << in[i] << "\t" << out[i] << "\t" << (match ? 1 : 0) << "\n";
  }
  close_out(f, a.out);
  std::cout << "reconstruction " << (n ? double(hits) / n : 0.0) << " (" << hits
            << "/" << n << ")\n";
}

// ------------------------------------------------------------ translate

struct TranslateArgs {
  std::string ckpt, input, out, oracle = "ringcount", mode = "success";
  int k = 20;
  double delta = 0.4;
  std::vector<double> range;
};

void run_translate(const TranslateArgs &a, const Globals &g) {
  TranslationEvalConfig cfg;
  cfg.k = a.k;
  cfg.delta = a.delta;
  cfg.seed = g.seed;
  if (a.mode == "improvement")
    cfg.mode = TranslationEvalConfig::Mode::kImprovement;
  else if (a.mode != "success")
    throw Error(ErrorKind::kConfig, "unknown mode " + a.mode);
  if (!a.range.empty()) {
    if (a.range.size() != 2 || a.range[0] > a.range[1])
      throw Error(ErrorKind::kConfig, "--range needs lo,hi with lo <= hi");
    cfg.range = true;
    cfg.lo = a.range[0];
    cfg.hi = a.range[1];
  }
  std::unique_ptr<PropertyOracle> oracle = make_oracle(a.oracle);
  std::vector<MolGraph> inputs = mols_of(read_smiles_file(a.input));
  std::string kind = kind_of(a.ckpt);
  Sampler sampler;
  std::unique_ptr<Translator<float>> hier;
  std::unique_ptr<AtomTranslator<float>> atom;
  if (kind == "atom_g2g") {
    atom = load_atom_translator(a.ckpt);
    sampler = [&](const MolGraph &x, int k, std::mt19937_64 &rng) {
      return atom->sample(x, k, rng);
    };
  } else {
    hier = load_translator(a.ckpt);
    sampler = [&](const MolGraph &x, int k, std::mt19937_64 &rng) {
      return hier->sample(x, k, rng);
    };
  }
  TranslationReport report = evaluate_translation(sampler, inputs, *oracle,
                                                  cfg);
  std::ofstream f = open_out(a.out);
  f << report.to_json() << "\n";
  close_out(f, a.out);
  std::cout << "success " << report.success_rate << " improvement "
            << report.mean_improvement << " diversity " << report.diversity
            << "\n";
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string samples, ref, out, ckpt, test;
  std::vector<std::string> scores;
};

void run_eval(const EvalArgs &a, const Globals &g) {
  // Unparseable sample lines count as invalid samples.
  std::vector<MolGraph> samples;
  {
    std::ifstream in(a.samples);
    if (!in)
      throw Error(ErrorKind::kIo, "cannot read " + a.samples);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string tok;
      if (!(row >> tok)) {
        samples.emplace_back();
        continue;
      }
      try {
        samples.push_back(parse_smiles(tok));
      } catch (const Error &) {
        samples.emplace_back();
      }
    }
  }
  std::vector<MolGraph> ref = mols_of(read_smiles_file(a.ref));
  std::map<std::string, ScoreTable> external;
  for (const std::string &s: a.scores) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorKind::kConfig, "--score must be name=file.tsv");
    external[s.substr(0, eq)] = read_score_table(s.substr(eq + 1));
  }
  EvalReport report = evaluate_samples(samples, ref, external);
  if (!a.ckpt.empty()) {
    if (a.test.empty())
      throw Error(ErrorKind::kConfig, "--ckpt needs --test");
    std::vector<MolGraph> test = mols_of(read_smiles_file(a.test));
    int n = static_cast<int>(test.size());
    std::vector<std::unique_ptr<HierVae<float>>> models;
    for (int w = 0; w < worker_count(n, g.threads); ++w)
      models.push_back(load_vae(a.ckpt));
    std::vector<char> hit(n, 0);
    parallel_for(n, g.threads, [&](int w, int i) {
      MolGraph r = models[w]->reconstruct(test[i]);
      hit[i] = !r.empty() && canonical_smiles(r) == canonical_smiles(test[i]);
    });
    double hits = 0;
    for (char h: hit)
      hits += h;
    report.recon = test.empty() ? 0.0 : hits / test.size();
  }
  std::ofstream f = open_out(a.out);
  f << report.to_json() << "\n";
  close_out(f, a.out);
}

// ---------------------------------------------------------------- canon

struct CanonArgs {
  std::string input, out;
  bool unique = false;
  int limit = 0;
};

void run_canon(const CanonArgs &a) {
  int bad = 0;
  std::vector<SmilesLine> lines = read_smiles_file(a.input, true, &bad);
  std::set<std::string> seen;
  std::ofstream f = open_out(a.out);
  int written = 0;
  for (const SmilesLine &l: lines) {
    if (a.limit > 0 && written >= a.limit)
      break;
    if (!is_valence_valid(l.mol) || !l.mol.is_connected()) {
      ++bad;
      continue;
    }
    std::string c = canonical_smiles(l.mol);
    if (a.unique && !seen.insert(c).second)
      continue;
    f << c << "\n";
    ++written;
  }
  close_out(f, a.out);
  std::cerr << "wrote " << written << ", rejected " << bad << "\n";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::kConfig:
    return kExitUsage;
  case ErrorKind::kNumeric:
    return kExitNumeric;
  default:
    return kExitData;
  }
}

void print_error(std::string_view kind, const std::string &message) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

int run(int argc, char **argv) {
  CLI::App app{"Hierarchical motif-based molecular graph generation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Globals g;
  auto *seed_opt = app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads for decoding")
      ->check(CLI::Range(1, 256));

  VocabArgs va;
  auto *vocab = app.add_subcommand("vocab", "Extract motif and attachment "
                                            "vocabularies");
  vocab->add_option("--input", va.input, "SMILES corpus")->required();
  vocab->add_option("--min-count", va.min_count,
                    "Fragments seen more often stay whole")
      ->check(CLI::NonNegativeNumber);
  vocab->add_option("--out", va.out, "Output directory")->required();
  vocab->add_flag("--small-motif", va.small,
                  "Split every fragment into single rings and bonds");

  TrainArgs tv;
  auto *train_vae_cmd = app.add_subcommand("train-vae", "Train the "
                                                        "hierarchical VAE");
  train_vae_cmd->add_option("--corpus", tv.corpus, "SMILES corpus")
      ->required();
  train_vae_cmd->add_option("--vocab", tv.vocab, "Vocabulary directory")
      ->required();
  train_vae_cmd->add_option("--config", tv.config, "key = value config file");
  train_vae_cmd->add_option("--set", tv.set, "Config override key=value");
  train_vae_cmd->add_option("--out", tv.out, "Checkpoint directory")
      ->required();

  TrainArgs tt;
  auto *train_tr_cmd = app.add_subcommand(
      "train-translate", "Train the hierarchical graph-to-graph translator");
  train_tr_cmd->add_option("--pairs", tt.pairs, "TSV of x<TAB>y pairs")
      ->required();
  train_tr_cmd->add_option("--vocab", tt.vocab, "Vocabulary directory")
      ->required();
  train_tr_cmd->add_option("--config", tt.config, "key = value config file");
  train_tr_cmd->add_option("--set", tt.set, "Config override key=value");
  train_tr_cmd->add_option("--out", tt.out, "Checkpoint directory")
      ->required();

  GenerateArgs ga;
  auto *generate = app.add_subcommand("generate", "Sample from the VAE prior");
  generate->add_option("--ckpt", ga.ckpt, "VAE checkpoint")->required();
  generate->add_option("--n", ga.n, "Number of samples");
  generate->add_option("--out", ga.out, "Output SMILES file")->required();

  ReconstructArgs ra;
  auto *recon = app.add_subcommand("reconstruct",
                                   "Encode with the posterior mean and decode");
  recon->add_option("--ckpt", ra.ckpt, "VAE checkpoint")->required();
  recon->add_option("--input", ra.input, "SMILES file")->required();
  recon->add_option("--out", ra.out, "Output TSV")->required();

  TranslateArgs ta;
  auto add_translate = [&](CLI::App *cmd, TranslateArgs &t) {
    cmd->add_option("--ckpt", t.ckpt, "Translator checkpoint")->required();
    cmd->add_option("--input", t.input, "SMILES file")->required();
    cmd->add_option("--k", t.k, "Candidates per input")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--delta", t.delta, "Similarity threshold")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--oracle", t.oracle, "ringcount, mwband or file:path");
    cmd->add_option("--mode", t.mode, "success or improvement");
    cmd->add_option("--range", t.range, "Property band lo,hi for success")
        ->delimiter(',')
        ->expected(2);
    cmd->add_option("--out", t.out, "Output JSON report")->required();
  };
  auto *translate = app.add_subcommand("translate",
                                       "Translate inputs and score them");
  add_translate(translate, ta);

  EvalArgs ea;
  auto *eval = app.add_subcommand("eval", "Distribution metrics of samples");
  eval->add_option("--samples", ea.samples, "Generated SMILES")->required();
  eval->add_option("--ref", ea.ref, "Reference SMILES")->required();
  eval->add_option("--out", ea.out, "Output JSON")->required();
  eval->add_option("--ckpt", ea.ckpt, "VAE checkpoint for reconstruction");
  eval->add_option("--test", ea.test, "Test SMILES for reconstruction");
  eval->add_option("--score", ea.scores,
                   "External property table name=file.tsv");

  TrainArgs ba;
  TranslateArgs bt;
  auto *baseline = app.add_subcommand("baseline-atomg2g",
                                      "Atom-by-atom translation baseline");
  baseline->require_subcommand(1);
  auto *btrain = baseline->add_subcommand("train", "Train the baseline");
  btrain->add_option("--pairs", ba.pairs, "TSV of x<TAB>y pairs")->required();
  btrain->add_option("--config", ba.config, "key = value config file");
  btrain->add_option("--set", ba.set, "Config override key=value");
  btrain->add_option("--out", ba.out, "Checkpoint directory")->required();
  auto *btranslate = baseline->add_subcommand("translate",
                                              "Translate with the baseline");
  add_translate(btranslate, bt);

  CanonArgs ca;
  auto *canon = app.add_subcommand("canon", "Canonicalize a SMILES file");
  canon->add_option("--input", ca.input, "SMILES file")->required();
  canon->add_option("--out", ca.out, "Output SMILES file")->required();
  canon->add_flag("--unique", ca.unique, "Drop repeated molecules");
  canon->add_option("--limit", ca.limit, "Keep at most this many (0: all)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    print_error("Usage", e.what());
    return kExitUsage;
  }

  bool seed_given = seed_opt->count() > 0;
  try {
    if (*vocab)
      run_vocab(va);
    else if (*train_vae_cmd)
      run_train_vae(tv, g, seed_given);
    else if (*train_tr_cmd)
      run_train_translate(tt, g, seed_given);
    else if (*generate)
      run_generate(ga, g);
    else if (*recon)
      run_reconstruct(ra, g);
    else if (*translate)
      run_translate(ta, g);
    else if (*eval)
      run_eval(ea, g);
    else if (*btrain)
      run_train_atom(ba, g, seed_given);
    else if (*btranslate)
      run_translate(bt, g);
    else if (*canon)
      run_canon(ca);
  } catch (const Error &e) {
    print_error(error_kind_name(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error &e) {
    print_error("Io", e.what());
    return kExitData;
  }
  return 0;
}

}  // namespace
}  // namespace hiergen

int main(int argc, char **argv) {
  return hiergen::run(argc, argv);
}
