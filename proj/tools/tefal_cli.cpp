// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tefal/audiofront.h"
#include "tefal/checkpoint.h"
#include "tefal/config.h"
#include "tefal/dataset.h"
#include "tefal/diagnostics.h"
#include "tefal/io.h"
#include "tefal/report.h"
#include "tefal/retrieval.h"
#include "tefal/trainer.h"

namespace fs = std::filesystem;
using namespace tefal;

namespace {

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

Corpus load_nonempty(const std::string& manifest) {
  Corpus c = load_corpus(manifest);
  if (c.empty()) throw std::runtime_error(manifest + ": corpus has no items; nothing to do");
  return c;
}

std::size_t find_item(const Corpus& c, const std::string& id) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.items[i].id == id) return i;
  }
  throw std::runtime_error("no item with id '" + id + "'");
}

struct SynthArgs {
  SynthConfig config;
  std::string out;
};

struct TrainArgs {
  std::string manifest, out, config, log;
  KeyValues overrides;
};

struct EvalArgs {
  std::string checkpoint, manifest, k, out;
  std::optional<double> dsl;
  bool no_ranks = false;
};

struct FbankArgs {
  std::string in, out;
  std::size_t target_length = kDefaultTargetLength;
  std::size_t mel_bins = kDefaultMelBins;
  double window_ms = kDefaultWindowMs;
};

struct AttnArgs {
  std::string checkpoint, manifest, text, item, branch = "video", out;
};

int run_synth(const SynthArgs& a) {
  const fs::path manifest = write_corpus(a.out, synth_corpus(a.config));
  std::cerr << "wrote " << a.config.items << " items to " << manifest.string() << "\n";
  return 0;
}

int run_train(const TrainArgs& a, std::size_t threads) {
  (void)threads;
  const Corpus corpus = load_nonempty(a.manifest);
  KeyValues kv = a.config.empty() ? KeyValues{} : read_key_values(a.config);
  for (const auto& [k, v] : a.overrides) kv[k] = v;
  if (!kv.count("dim")) kv["dim"] = std::to_string(corpus.dim());
  if (!kv.count("proj_dim")) kv["proj_dim"] = kv["dim"];
  TrainConfig cfg;
  apply_train_config(kv, cfg);
  const TrainResult r = train(cfg, corpus, [](const EpochLog& e) {
    std::fprintf(stderr, "epoch %zu  loss %.6f  tau %.4f\n", e.epoch, e.mean_loss, e.tau);
  });
  save_checkpoint(a.out, r.model);
  if (!a.log.empty()) emit(train_log_json(cfg, r), a.log);
  return 0;
}

int run_eval(const EvalArgs& a, std::size_t threads, bool require_k) {
  if (require_k && a.k.empty()) throw CLI::RequiredError("--k");
  const Model model = load_checkpoint(a.checkpoint);
  const Corpus corpus = load_nonempty(a.manifest);
  EvalOptions opts;
  opts.threads = threads;
  opts.dsl_temperature = a.dsl;
  if (!a.k.empty()) {
    try {
      opts.shortlist = parse_shortlist_size(a.k, corpus.size());
    } catch (const std::exception& err) {
      throw CLI::ValidationError("--k", err.what());
    }
  }
  const EvalResult r = evaluate(model, corpus, opts);
  EvalReportInfo info;
  info.shortlist = opts.shortlist;
  info.dsl_temperature = opts.dsl_temperature;
  info.include_ranks = !a.no_ranks;
  emit(eval_report_json(r, info), a.out);
  return 0;
}

int run_fbank(const FbankArgs& a) {
  const MelFilterBank fb = compute_fbank(read_wav(a.in), a.target_length, a.mel_bins, a.window_ms);
  EmbeddingFile f(static_cast<std::uint32_t>(fb.frames.rows()),
                  static_cast<std::uint32_t>(fb.frames.cols()));
  f.append(fb.frames);
  write_emb1(a.out, f);
  std::cerr << "frame shift " << format_fixed(fb.frame_shift_ms, 4) << " ms, " << fb.frames.rows()
            << "x" << fb.frames.cols() << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed, const std::string& out) {
  const auto entries = run_gradcheck_suite(seed);
  double worst = 0.0;
  bool ok = true;
  for (const auto& e : entries) {
    std::fprintf(stderr, "%-20s max rel err %.3e (threshold %.0e) %s\n", e.name.c_str(),
                 e.max_relative_error, e.threshold, e.passed() ? "ok" : "FAIL");
    worst = std::max(worst, e.max_relative_error);
    ok = ok && e.passed();
  }
  ok = ok && worst < 1e-4;
  if (!out.empty()) emit(gradcheck_json(entries), out);
  std::printf("max relative error %.3e\n", worst);
  return ok ? 0 : 1;
}

int run_export_attn(const AttnArgs& a) {
  const Model model = load_checkpoint(a.checkpoint);
  const Corpus corpus = load_nonempty(a.manifest);
  const CorpusItem& text = corpus.items[find_item(corpus, a.text)];
  const CorpusItem& item = corpus.items[find_item(corpus, a.item)];
  Matrix weights;
  std::vector<std::string> labels;
  if (a.branch == "video") {
    const Matrix ctx = video_context(model, item);
    weights = export_attention_weights(model.video_block(), text.text, ctx);
    for (std::size_t r = 0; r < ctx.rows(); ++r) {
      labels.push_back(r < item.frames.rows() ? "frame" : "audio_summary");
    }
  } else if (a.branch == "audio") {
    weights = export_attention_weights(model.audio_block(), text.text, item.audio);
    labels.assign(item.audio.rows(), "audio_token");
  } else {
    throw CLI::ValidationError("--branch", "expected video or audio");
  }
  std::string csv = "index,kind,weight\n";
  for (std::size_t r = 0; r < weights.size(); ++r) {
    csv += std::to_string(r) + "," + labels[r] + "," + format_fixed(weights[r], 8) + "\n";
  }
  emit(csv, a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-conditioned video/audio retrieval engine"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: TEFAL_THREADS or all cores)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic corpus (EMB1 files + manifest)");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.config.seed);
  s->add_option("--items", synth.config.items);
  s->add_option("--dim", synth.config.dim);
  s->add_option("--frames", synth.config.frames);
  s->add_option("--audio-tokens", synth.config.audio_tokens);
  s->add_option("--audio-fraction", synth.config.audio_informative_fraction,
                "Share of items whose audio carries text information");
  s->add_option("--noise", synth.config.noise);
  s->add_option("--audio-weight", synth.config.audio_weight);
  s->add_option("--distractor-events", synth.config.distractor_events);
  s->add_option("--missing-fraction", synth.config.missing_audio_fraction);
  s->add_option("--signal-frame-fraction", synth.config.signal_frame_fraction);
  s->add_option("--signal-token-fraction", synth.config.signal_token_fraction);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model and write a TFCK checkpoint");
  t->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--config", tr.config, "key=value config file")->check(CLI::ExistingFile);
  t->add_option("--log", tr.log, "Write the training log JSON here");
  for (const char* key : {"fusion", "branches", "epochs", "batch-size", "lr", "weight-decay",
                          "clip-norm", "seed", "dim", "temperature-init", "output-ln-affine"}) {
    std::string k = key;
    for (char& c : k) c = c == '-' ? '_' : c;
    t->add_option_function<std::string>(std::string("--") + key,
                                         [&tr, k](const std::string& v) { tr.overrides[k] = v; },
                                         "Overrides config key " + k);
  }

  EvalArgs ev;
  auto add_eval_options = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
    cmd->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
    cmd->add_option("--k", ev.k, "Shortlist size: N or P% of the corpus");
    cmd->add_option("--out", ev.out, "Result JSON path (default stdout)");
    cmd->add_flag("--no-ranks", ev.no_ranks, "Omit per-query ranks from the JSON");
  };
  auto* e = app.add_subcommand("eval", "Evaluate t2v and v2t retrieval");
  add_eval_options(e);
  e->add_option("--dsl-temp", ev.dsl, "Apply dual-softmax post-processing at this temperature");
  auto* rr = app.add_subcommand("rerank", "Two-stage evaluation: mean-pool shortlist, model re-rank");
  add_eval_options(rr);

  FbankArgs fb;
  auto* f = app.add_subcommand("fbank", "Log-Mel filter bank of a 16 kHz mono WAV");
  f->add_option("--in", fb.in)->required()->check(CLI::ExistingFile);
  f->add_option("--out", fb.out)->required();
  f->add_option("--target-length", fb.target_length);
  f->add_option("--mel-bins", fb.mel_bins);
  f->add_option("--window-ms", fb.window_ms);

  std::uint64_t gc_seed = 7;
  std::string gc_out;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  g->add_option("--seed", gc_seed);
  g->add_option("--out", gc_out, "Write the per-check JSON here");

  AttnArgs at;
  auto* x = app.add_subcommand("export-attn", "Write text-conditioned attention weights as CSV");
  x->add_option("--checkpoint", at.checkpoint)->required()->check(CLI::ExistingFile);
  x->add_option("--manifest", at.manifest)->required()->check(CLI::ExistingFile);
  x->add_option("--text", at.text, "Item id whose text is the query")->required();
  x->add_option("--item", at.item, "Item id whose frames or audio are attended")->required();
  x->add_option("--branch", at.branch, "video or audio")->check(CLI::IsMember({"video", "audio"}));
  x->add_option("--out", at.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(tr, threads);
    if (*e) return run_eval(ev, threads, false);
    if (*rr) return run_eval(ev, threads, true);
    if (*f) return run_fbank(fb);
    if (*g) return run_gradcheck(gc_seed, gc_out);
    if (*x) return run_export_attn(at);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
