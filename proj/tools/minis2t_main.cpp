// Copyright 2026 The minis2t Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command-line entry point. Exit codes: 0 success, 1 usage error, 2 data or
// configuration error, 3 numeric failure during training or decoding.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minis2t/checkpoint.hpp"
#include "minis2t/common.hpp"
#include "minis2t/config.hpp"
#include "minis2t/metrics.hpp"
#include "minis2t/tokenizer.hpp"
#include "minis2t/train.hpp"

namespace {

struct RecognizeArgs {
  std::string config;
  minis2t::RecognizeOptions opts;
};

void add_recognize_flags(CLI::App* cmd, RecognizeArgs* args) {
  cmd->add_option("config", args->config, "run configuration (YAML)")->required();
  cmd->add_option("--ckpt", args->opts.checkpoint, "model checkpoint (.ms2t)")->required();
  cmd->add_option("--input", args->opts.input,
                  "manifest (*.tsv) or newline-separated list of WAV files")
      ->required();
  cmd->add_option("--output", args->opts.output, "hypothesis file, one line per utterance")
      ->required();
  cmd->add_option("--beam-size", args->opts.beam_size, "override the configured beam size");
  cmd->add_option("--scores", args->opts.scores_tsv,
                  "also write a TSV of id, score, normalized score, hypothesis");
  cmd->add_option("--attention", args->opts.attention_dir,
                  "dump teacher-forced cross-attention matrices into this directory");
}

int run_recognize(const RecognizeArgs& args) {
  minis2t::RunConfig cfg = minis2t::parse_run_config_file(args.config);
  minis2t::recognize_run(cfg, args.opts);
  std::cout << "wrote " << args.opts.output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minimalist speech-to-text: training, decoding, and scoring"};
  app.require_subcommand(1);

  // prepare
  minis2t::PrepareOptions prep;
  std::string prep_tokenizer = "char";
  CLI::App* prepare = app.add_subcommand(
      "prepare", "build feature caches, a manifest, and vocabularies from WAV + TSV");
  prepare->add_option("--wav-dir", prep.wav_dir, "directory holding <id>.wav files")
      ->required();
  prepare->add_option("--transcripts", prep.transcripts,
                      "TSV rows: id, transcript[, translation]")
      ->required();
  prepare->add_option("--out-dir", prep.out_dir, "output directory")->required();
  prepare->add_option("--tokenizer", prep_tokenizer, "char, word, or bpe (default char)");
  prepare->add_option("--bpe-merges", prep.bpe_merges, "merge count for the bpe tokenizer");
  prepare->add_option("--protected", prep.protected_tokens,
                      "tokens kept whole under every scheme (repeatable)");
  prepare->add_option("--sample-rate", prep.sample_rate_hz,
                      "required input rate in Hz; 0 accepts any (default 16000)");

  // train
  std::string train_config;
  std::string resume_from;
  CLI::App* train = app.add_subcommand("train", "run the training loop");
  train->add_option("config", train_config, "run configuration (YAML)")->required();
  train->add_option("--resume", resume_from, "continue from a full checkpoint (last.ms2t)");

  // recognize / translate: same machinery, named for the two tasks.
  RecognizeArgs reco;
  CLI::App* recognize =
      app.add_subcommand("recognize", "decode audio or text into hypotheses");
  add_recognize_flags(recognize, &reco);
  RecognizeArgs trans;
  CLI::App* translate =
      app.add_subcommand("translate", "decode with a translation model");
  add_recognize_flags(translate, &trans);

  // score
  std::string score_metric;
  std::string hyp_path;
  std::string ref_path;
  CLI::App* score = app.add_subcommand("score", "corpus metric of hypotheses vs references");
  score->add_option("--metric", score_metric, "wer, bleu, or chrf")->required();
  score->add_option("--hyp", hyp_path, "hypothesis file, one segment per line")->required();
  score->add_option("--ref", ref_path, "reference file, one segment per line")->required();

  // avg-ckpt
  std::string avg_out;
  std::vector<std::string> avg_inputs;
  CLI::App* avg = app.add_subcommand("avg-ckpt", "element-wise average of model checkpoints");
  avg->add_option("output", avg_out, "averaged checkpoint to write")->required();
  avg->add_option("inputs", avg_inputs, "checkpoints to average")->required()->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (prepare->parsed()) {
      prep.tokenizer = minis2t::token_scheme_from_string(prep_tokenizer);
      minis2t::PrepareResult res = minis2t::prepare_run(prep);
      std::cout << "prepared " << res.num_utterances << " utterances\n"
                << "manifest: " << res.manifest << "\n"
                << "vocab: " << res.vocab << "\n";
      if (!res.bpe_merges.empty()) std::cout << "bpe merges: " << res.bpe_merges << "\n";
      if (!res.translation_vocab.empty()) {
        std::cout << "translation vocab: " << res.translation_vocab << "\n";
        if (!res.translation_bpe.empty()) {
          std::cout << "translation bpe merges: " << res.translation_bpe << "\n";
        }
      }
    } else if (train->parsed()) {
      minis2t::RunConfig cfg = minis2t::parse_run_config_file(train_config);
      minis2t::TrainResult res = minis2t::train_run(cfg, resume_from);
      std::cout << "trained " << res.steps << " steps"
                << (res.early_stopped ? " (early stop)" : "") << "\n";
      if (res.has_best) {
        std::cout << "best " << minis2t::metric_kind_to_string(cfg.testing.metric) << ": "
                  << minis2t::format_score(res.best_metric) << "\n";
      }
      if (!res.best_checkpoint.empty()) {
        std::cout << "best checkpoint: " << res.best_checkpoint << "\n";
      }
      std::cout << "last checkpoint: " << res.last_checkpoint << "\n";
    } else if (recognize->parsed()) {
      return run_recognize(reco);
    } else if (translate->parsed()) {
      return run_recognize(trans);
    } else if (score->parsed()) {
      minis2t::MetricKind metric = minis2t::metric_kind_from_string(score_metric);
      std::string signature;
      double value = minis2t::score_run(metric, hyp_path, ref_path, &signature);
      std::cout << minis2t::metric_kind_to_string(metric) << " = "
                << minis2t::format_score(value) << " (" << signature << ")\n";
    } else if (avg->parsed()) {
      std::vector<minis2t::Checkpoint> inputs;
      inputs.reserve(avg_inputs.size());
      for (const std::string& path : avg_inputs) {
        inputs.push_back(minis2t::read_checkpoint(path));
      }
      minis2t::write_checkpoint(avg_out, minis2t::average_checkpoints(inputs));
      std::cout << "averaged " << inputs.size() << " checkpoints into " << avg_out << "\n";
    }
  } catch (const minis2t::NumericError& e) {
    std::cerr << "minis2t: " << e.what() << "\n";
    return 3;
  } catch (const minis2t::Error& e) {
    std::cerr << "minis2t: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "minis2t: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
