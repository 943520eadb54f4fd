// Command-line front end: learn-bpe, synth, train, summarize, evaluate
// and gradcheck subcommands over the dtrf library. All structured output
// is JSON; every source of randomness hangs off an explicit --seed.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dtrf/dtrf.hpp"

namespace {

using dtrf::RunConfig;
using json = nlohmann::ordered_json;
using TrainReal = float;  // training/inference precision; gradcheck uses double

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg;
    if (!flags.config_path.empty()) {
        cfg = dtrf::load_run_config(flags.config_path);
    }
    if (flags.seed) {
        cfg.model.seed = *flags.seed;
        cfg.train.seed = *flags.seed;
        cfg.decode.seed = *flags.seed;
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON run configuration file");
    cmd->add_option("--seed", flags.seed, "Seed applied to every random stream");
}

std::vector<std::string> corpus_texts(const std::string& path) {
    std::vector<std::string> texts;
    if (path.size() > 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0) {
        for (const auto& r : dtrf::load_jsonl(path)) {
            texts.push_back(r.source);
            texts.push_back(r.summary);
        }
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw dtrf::IoError("cannot open corpus: " + path);
        }
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) {
                texts.push_back(line);
            }
        }
    }
    return texts;
}

void require_vocab_matches(const dtrf::ModelConfig& model, const dtrf::Vocabulary& vocab) {
    if (model.vocab_size != static_cast<std::size_t>(vocab.size())) {
        throw dtrf::ConfigError("checkpoint vocabulary size " +
                                std::to_string(model.vocab_size) +
                                " does not match tokenizer vocabulary size " +
                                std::to_string(vocab.size()));
    }
}

json candidate_json(const std::string& id, const std::string& text, const dtrf::Candidate& cand,
                    const dtrf::DecodeConfig& decode) {
    return json{{"id", id},
                {"summary", text},
                {"score", cand.score},
                {"tokens", cand.tokens.size()},
                {"truncated", cand.truncated},
                {"mode", dtrf::decode_mode_name(decode.mode)}};
}

int cmd_learn_bpe(const std::string& corpus_path, int vocab_size, const std::string& out_path) {
    const auto texts = corpus_texts(corpus_path);
    auto [vocab, merges] = dtrf::learn_bpe(texts, vocab_size);
    dtrf::save_vocabulary(out_path, vocab, merges);
    std::cout << json{{"vocab_size", vocab.size()},
                      {"merges", merges.size()},
                      {"out", out_path}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_synth(std::uint64_t seed, const std::string& task, std::size_t n, std::size_t source_min,
              std::size_t source_max, std::size_t summary_len, std::size_t vocab_words,
              const std::string& out_path) {
    std::vector<dtrf::PairRecord> records;
    if (task == "copy") {
        records = dtrf::synth_copy_task(n, source_min, source_max, summary_len, vocab_words, seed);
    } else if (task == "keyword") {
        records =
            dtrf::synth_keyword_task(n, source_min, source_max, summary_len, vocab_words, seed);
    } else {
        throw dtrf::ConfigError("synth task must be 'copy' or 'keyword', got '" + task + "'");
    }
    dtrf::save_jsonl(out_path, records);
    std::cout << json{{"task", task}, {"examples", records.size()}, {"out", out_path}}.dump()
              << "\n";
    return 0;
}

int cmd_train(RunConfig cfg, const std::string& train_path, const std::string& val_path,
              const std::string& vocab_path, const std::string& ckpt_out,
              const std::string& log_path) {
    const std::string train_data = train_path.empty() ? cfg.paths.train_data : train_path;
    const std::string val_data = val_path.empty() ? cfg.paths.val_data : val_path;
    const std::string vocab_file = vocab_path.empty() ? cfg.paths.vocab : vocab_path;
    const std::string ckpt = ckpt_out.empty() ? cfg.paths.checkpoint : ckpt_out;
    const std::string log_file = log_path.empty() ? cfg.paths.log : log_path;
    for (const auto& [what, value] :
         std::vector<std::pair<const char*, std::string>>{{"--train", train_data},
                                                          {"--val", val_data},
                                                          {"--vocab", vocab_file},
                                                          {"--ckpt-out", ckpt}}) {
        if (value.empty()) {
            throw dtrf::ConfigError(std::string("train: missing required path ") + what);
        }
    }

    auto [vocab, merges] = dtrf::load_vocabulary(vocab_file);
    cfg.model.vocab_size = static_cast<std::size_t>(vocab.size());
    cfg.model.validate();
    cfg.limits.n_ctx = cfg.model.n_ctx;

    const auto train_records = dtrf::load_jsonl(train_data);
    const auto val_records = dtrf::load_jsonl(val_data);
    const auto train_set = dtrf::encode_records(train_records, vocab, merges, cfg.limits);
    const auto val_set = dtrf::encode_records(val_records, vocab, merges, cfg.limits);

    auto params = dtrf::init_params<TrainReal>(cfg.model);
    std::ofstream log_stream;
    std::ostream* log = nullptr;
    if (!log_file.empty()) {
        log_stream.open(log_file);
        if (!log_stream) {
            throw dtrf::IoError("cannot write training log: " + log_file);
        }
        log = &log_stream;
    }
    const auto result = dtrf::train(params, train_set, val_set, cfg.train, log);
    dtrf::save_checkpoint(ckpt, result.best_params);

    std::cout << json{{"best_val_loss", result.best_val_loss},
                      {"best_step", result.best_step},
                      {"steps_run", result.steps_run},
                      {"train_sequences", train_set.size()},
                      {"val_sequences", val_set.size()},
                      {"checkpoint", ckpt}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_summarize(RunConfig cfg, const std::string& ckpt, const std::string& vocab_path,
                  const std::string& input_path, const std::string& text) {
    const std::string vocab_file = vocab_path.empty() ? cfg.paths.vocab : vocab_path;
    const std::string ckpt_file = ckpt.empty() ? cfg.paths.checkpoint : ckpt;
    if (ckpt_file.empty() || vocab_file.empty()) {
        throw dtrf::ConfigError("summarize: --ckpt and --vocab are required");
    }
    if (input_path.empty() == text.empty()) {
        throw dtrf::ConfigError("summarize: provide exactly one of --input or --text");
    }
    auto [vocab, merges] = dtrf::load_vocabulary(vocab_file);
    const auto params = dtrf::load_checkpoint<TrainReal>(ckpt_file);
    require_vocab_matches(params.config, vocab);
    cfg.limits.n_ctx = params.config.n_ctx;
    cfg.limits.max_summary_tokens = cfg.decode.max_summary_tokens;

    std::vector<dtrf::PairRecord> inputs;
    if (!text.empty()) {
        inputs.push_back(dtrf::PairRecord{text, "", "stdin"});
    } else {
        inputs = dtrf::load_jsonl(input_path);
    }
    for (const auto& record : inputs) {
        const dtrf::TokenSeq source = dtrf::encode(record.source, vocab, merges);
        const auto cand =
            dtrf::summarize(params, source, cfg.limits, cfg.decode, vocab.controls());
        std::cout << candidate_json(record.id, dtrf::decode(cand.tokens, vocab), cand, cfg.decode)
                         .dump()
                  << "\n";
    }
    return 0;
}

int cmd_evaluate(RunConfig cfg, const std::string& ckpt, const std::string& vocab_path,
                 const std::string& test_path, const std::string& report_path,
                 const std::string& candidates_path, const std::string& bottom_csv,
                 double bottom_frac) {
    const std::string test_file = test_path.empty() ? cfg.paths.test_data : test_path;
    if (test_file.empty() || report_path.empty()) {
        throw dtrf::ConfigError("evaluate: --test and --report are required");
    }
    const auto references = dtrf::load_jsonl(test_file);

    std::vector<dtrf::PairEval> evals;
    if (!candidates_path.empty()) {
        // pre-decoded candidates, paired by position
        const auto candidates = dtrf::load_jsonl(candidates_path);
        if (candidates.size() != references.size()) {
            throw dtrf::DataError("evaluate: " + std::to_string(candidates.size()) +
                                  " candidates vs " + std::to_string(references.size()) +
                                  " references");
        }
        for (std::size_t i = 0; i < references.size(); ++i) {
            evals.push_back(dtrf::evaluate_pair(references[i].id, candidates[i].summary,
                                                references[i].summary));
        }
    } else {
        const std::string vocab_file = vocab_path.empty() ? cfg.paths.vocab : vocab_path;
        const std::string ckpt_file = ckpt.empty() ? cfg.paths.checkpoint : ckpt;
        if (ckpt_file.empty() || vocab_file.empty()) {
            throw dtrf::ConfigError(
                "evaluate: --ckpt and --vocab are required without --candidates-file");
        }
        auto [vocab, merges] = dtrf::load_vocabulary(vocab_file);
        const auto params = dtrf::load_checkpoint<TrainReal>(ckpt_file);
        require_vocab_matches(params.config, vocab);
        cfg.limits.n_ctx = params.config.n_ctx;
        cfg.limits.max_summary_tokens = cfg.decode.max_summary_tokens;
        for (const auto& record : references) {
            const dtrf::TokenSeq source = dtrf::encode(record.source, vocab, merges);
            const auto cand =
                dtrf::summarize(params, source, cfg.limits, cfg.decode, vocab.controls());
            evals.push_back(dtrf::evaluate_pair(record.id, dtrf::decode(cand.tokens, vocab),
                                                record.summary));
        }
    }
    dtrf::write_eval_report(report_path, evals);
    if (!bottom_csv.empty()) {
        dtrf::write_bottom_csv(bottom_csv, evals, bottom_frac);
    }

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& e : evals) {
        pairs.emplace_back(e.candidate, e.reference);
    }
    const dtrf::CorpusRouge corpus = dtrf::corpus_rouge(pairs);
    std::cout << json{{"pairs", evals.size()},
                      {"rouge1_f1", corpus.rouge1.f1},
                      {"rouge2_f1", corpus.rouge2.f1},
                      {"rougeL_f1", corpus.rougeL.f1},
                      {"report", report_path}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, bool have_config, std::uint64_t seed, std::size_t samples,
                  double threshold, bool no_segment) {
    dtrf::GradCheckConfig gc;
    if (have_config) {
        gc.model = cfg.model;
    }
    if (no_segment) {
        gc.model.use_segment_embedding = false;
    }
    gc.samples = samples;
    gc.threshold = threshold;
    gc.seed = seed;
    const auto result = dtrf::run_gradcheck(gc);
    std::cout << json{{"max_rel_err", result.max_rel_err},
                      {"samples", result.samples},
                      {"threshold", threshold},
                      {"worst_parameter", result.worst_parameter},
                      {"pass", result.pass}}
                     .dump()
              << "\n";
    return result.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dtrf: train, decode and score a desk-scale summarization language model"};
    app.require_subcommand(1);

    CommonFlags flags;

    // learn-bpe
    auto* learn = app.add_subcommand("learn-bpe", "Learn a BPE vocabulary from a corpus");
    std::string corpus_path, out_path;
    int vocab_size = 2000;
    add_common(learn, flags);
    learn->add_option("--corpus", corpus_path, "Text file (one document per line) or JSONL pairs")
        ->required();
    learn->add_option("--vocab-size", vocab_size, "Target vocabulary size")
        ->capture_default_str();
    learn->add_option("--out", out_path, "Output vocabulary file")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string task = "copy", synth_out;
    std::size_t synth_n = 1000, source_min = 16, source_max = 28, summary_len = 8,
                vocab_words = 60;
    add_common(synth, flags);
    synth->add_option("--task", task, "copy | keyword")->capture_default_str();
    synth->add_option("--n", synth_n, "Number of examples")->capture_default_str();
    synth->add_option("--source-min", source_min, "Minimum source length in words")
        ->capture_default_str();
    synth->add_option("--source-max", source_max, "Maximum source length in words")
        ->capture_default_str();
    synth
        ->add_option("--summary-len", summary_len,
                     "Summary length in words (copy) or keyword count (keyword)")
        ->capture_default_str();
    synth->add_option("--vocab-words", vocab_words, "Distinct words in the synthetic vocabulary")
        ->capture_default_str();
    synth->add_option("--out", synth_out, "Output JSONL file")->required();

    // train
    auto* train = app.add_subcommand("train", "Train a model from scratch");
    std::string train_path, val_path, vocab_path, ckpt_out, log_path;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size, max_steps, eval_interval, patience, n_layers, d_model,
        n_heads, n_ctx;
    bool no_segment = false, literal_delta = false, summary_only = false;
    add_common(train, flags);
    train->add_option("--train", train_path, "Training JSONL");
    train->add_option("--val", val_path, "Validation JSONL");
    train->add_option("--vocab", vocab_path, "BPE vocabulary file");
    train->add_option("--ckpt-out", ckpt_out, "Checkpoint output path");
    train->add_option("--log", log_path, "Training-curve JSONL log");
    train->add_option("--lr", lr, "Learning rate (default 5e-05)");
    train->add_option("--batch-size", batch_size, "Sequences per step (default 16)");
    train->add_option("--max-steps", max_steps, "Hard step limit (default 1000)");
    train->add_option("--eval-interval", eval_interval, "Steps between evaluations (default 50)");
    train->add_option("--patience", patience,
                      "Evaluations without improvement before stopping (default 3)");
    train->add_option("--n-layers", n_layers, "Transformer blocks (default 2)");
    train->add_option("--d-model", d_model, "Embedding width (default 64)");
    train->add_option("--n-heads", n_heads, "Attention heads (default 4)");
    train->add_option("--n-ctx", n_ctx, "Context length (default 128)");
    train->add_flag("--no-segment-embedding", no_segment,
                    "Drop the source/summary segment embedding");
    train->add_flag("--literal-delta-position", literal_delta,
                    "Give the terminal token position 0 instead of continuing the summary run");
    train->add_flag("--summary-only-loss", summary_only,
                    "Restrict the loss to summary-segment targets");

    // summarize
    auto* summ = app.add_subcommand("summarize", "Decode summaries for documents");
    std::string summ_ckpt, summ_vocab, summ_input, summ_text, mode;
    std::optional<double> top_p;
    std::optional<std::size_t> candidates, max_summary_tokens;
    add_common(summ, flags);
    summ->add_option("--ckpt", summ_ckpt, "Checkpoint file");
    summ->add_option("--vocab", summ_vocab, "BPE vocabulary file");
    summ->add_option("--input", summ_input, "JSONL documents to summarize");
    summ->add_option("--text", summ_text, "Single document given inline");
    summ->add_option("--mode", mode, "greedy | nucleus (default greedy)");
    summ->add_option("--p", top_p, "Nucleus mass (default 0.3)");
    summ->add_option("--candidates", candidates, "Nucleus decodings to rerank (default 5)");
    summ->add_option("--max-summary-tokens", max_summary_tokens,
                     "Generation budget (default 100)");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Decode a test set and score it with ROUGE");
    std::string eval_ckpt, eval_vocab, eval_test, eval_report, eval_candidates, eval_csv;
    double bottom_frac = 0.05;
    add_common(eval, flags);
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint file");
    eval->add_option("--vocab", eval_vocab, "BPE vocabulary file");
    eval->add_option("--test", eval_test, "Test JSONL with references");
    eval->add_option("--report", eval_report, "Evaluation report JSON output")->required();
    eval->add_option("--candidates-file", eval_candidates,
                     "Pre-decoded candidate JSONL; skips the model");
    eval->add_option("--mode", mode, "greedy | nucleus (default greedy)");
    eval->add_option("--p", top_p, "Nucleus mass (default 0.3)");
    eval->add_option("--candidates", candidates, "Nucleus decodings to rerank (default 5)");
    eval->add_option("--max-summary-tokens", max_summary_tokens,
                     "Generation budget (default 100)");
    eval->add_option("--bottom-csv", eval_csv, "CSV of the worst pairs by ROUGE-L");
    eval->add_option("--bottom-frac", bottom_frac, "Fraction of pairs in the CSV")
        ->capture_default_str();

    // gradcheck
    auto* grad =
        app.add_subcommand("gradcheck", "Check model gradients against finite differences");
    std::size_t samples = 200;
    double threshold = 1e-4;
    bool grad_no_segment = false;
    add_common(grad, flags);
    grad->add_option("--samples", samples, "Parameter entries to probe")->capture_default_str();
    grad->add_option("--threshold", threshold, "Maximum allowed relative error")
        ->capture_default_str();
    grad->add_flag("--no-segment-embedding", grad_no_segment,
                   "Check the segment-free parameterization");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = resolve_config(flags);
        if (train->parsed()) {
            if (lr) cfg.train.learning_rate = *lr;
            if (batch_size) cfg.train.batch_size = *batch_size;
            if (max_steps) cfg.train.max_steps = *max_steps;
            if (eval_interval) cfg.train.eval_interval = *eval_interval;
            if (patience) cfg.train.patience = *patience;
            if (n_layers) cfg.model.n_layers = *n_layers;
            if (d_model) cfg.model.d_model = *d_model;
            if (n_heads) cfg.model.n_heads = *n_heads;
            if (n_ctx) cfg.model.n_ctx = *n_ctx;
            if (no_segment) cfg.model.use_segment_embedding = false;
            if (literal_delta) cfg.limits.literal_delta_position = true;
            if (summary_only) cfg.train.summary_only_loss = true;
            return cmd_train(cfg, train_path, val_path, vocab_path, ckpt_out, log_path);
        }
        if (summ->parsed() || eval->parsed()) {
            if (!mode.empty()) cfg.decode.mode = dtrf::parse_decode_mode(mode);
            if (top_p) cfg.decode.p = *top_p;
            if (candidates) cfg.decode.n_candidates = *candidates;
            if (max_summary_tokens) cfg.decode.max_summary_tokens = *max_summary_tokens;
            if (summ->parsed()) {
                return cmd_summarize(cfg, summ_ckpt, summ_vocab, summ_input, summ_text);
            }
            return cmd_evaluate(cfg, eval_ckpt, eval_vocab, eval_test, eval_report,
                                eval_candidates, eval_csv, bottom_frac);
        }
        if (learn->parsed()) {
            return cmd_learn_bpe(corpus_path, vocab_size, out_path);
        }
        if (synth->parsed()) {
            return cmd_synth(flags.seed.value_or(0), task, synth_n, source_min, source_max,
                             summary_len, vocab_words, synth_out);
        }
        if (grad->parsed()) {
            return cmd_gradcheck(cfg, !flags.config_path.empty(),
                                 flags.seed.value_or(cfg.model.seed), samples, threshold,
                                 grad_no_segment);
        }
    } catch (const dtrf::ConfigError& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "config"}}.dump() << "\n";
        return 2;
    } catch (const dtrf::DataError& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "data"}}.dump() << "\n";
        return 3;
    } catch (const dtrf::IoError& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "io"}}.dump() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "internal"}}.dump() << "\n";
        return 1;
    }
    return 0;
}
