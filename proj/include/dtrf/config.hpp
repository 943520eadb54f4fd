// One JSON document describing a whole run: model, training, decoding,
// sequence limits and file paths. Every field has a default; values from
// a config file override the defaults and explicit command-line flags
// override the file.
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "dtrf/common.hpp"
#include "dtrf/decoder.hpp"
#include "dtrf/model.hpp"
#include "dtrf/sequence.hpp"
#include "dtrf/trainer.hpp"

namespace dtrf {

struct RunPaths {
    std::string vocab;
    std::string checkpoint;
    std::string train_data;
    std::string val_data;
    std::string test_data;
    std::string log;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DecodeConfig decode;
    SequenceLimits limits;
    RunPaths paths;
};

inline DecodeMode parse_decode_mode(const std::string& name) {
    if (name == "greedy") {
        return DecodeMode::greedy;
    }
    if (name == "nucleus") {
        return DecodeMode::nucleus;
    }
    throw ConfigError("decode mode must be 'greedy' or 'nucleus', got '" + name + "'");
}

inline std::string decode_mode_name(DecodeMode mode) {
    return mode == DecodeMode::greedy ? "greedy" : "nucleus";
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& into) {
    if (obj.contains(key)) {
        into = obj.at(key).get<T>();
    }
}

inline void check_known_keys(const nlohmann::json& obj, const char* section,
                             std::initializer_list<const char*> known) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* k : known) {
            ok |= key == k;
        }
        if (!ok) {
            throw ConfigError(std::string("config: unknown key '") + key + "' in section '" +
                              section + "'");
        }
    }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& doc) {
    RunConfig cfg;
    detail::check_known_keys(doc, "<root>", {"model", "train", "decode", "limits", "paths"});
    if (doc.contains("model")) {
        const auto& m = doc.at("model");
        detail::check_known_keys(m, "model",
                                 {"n_layers", "d_model", "n_heads", "vocab_size", "n_ctx",
                                  "use_segment_embedding", "seed"});
        detail::read_field(m, "n_layers", cfg.model.n_layers);
        detail::read_field(m, "d_model", cfg.model.d_model);
        detail::read_field(m, "n_heads", cfg.model.n_heads);
        detail::read_field(m, "vocab_size", cfg.model.vocab_size);
        detail::read_field(m, "n_ctx", cfg.model.n_ctx);
        detail::read_field(m, "use_segment_embedding", cfg.model.use_segment_embedding);
        detail::read_field(m, "seed", cfg.model.seed);
    }
    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        detail::check_known_keys(t, "train",
                                 {"learning_rate", "batch_size", "beta1", "beta2", "adam_eps",
                                  "max_steps", "eval_interval", "patience", "grad_clip",
                                  "summary_only_loss", "seed"});
        detail::read_field(t, "learning_rate", cfg.train.learning_rate);
        detail::read_field(t, "batch_size", cfg.train.batch_size);
        detail::read_field(t, "beta1", cfg.train.beta1);
        detail::read_field(t, "beta2", cfg.train.beta2);
        detail::read_field(t, "adam_eps", cfg.train.adam_eps);
        detail::read_field(t, "max_steps", cfg.train.max_steps);
        detail::read_field(t, "eval_interval", cfg.train.eval_interval);
        detail::read_field(t, "patience", cfg.train.patience);
        detail::read_field(t, "grad_clip", cfg.train.grad_clip);
        detail::read_field(t, "summary_only_loss", cfg.train.summary_only_loss);
        detail::read_field(t, "seed", cfg.train.seed);
    }
    if (doc.contains("decode")) {
        const auto& d = doc.at("decode");
        detail::check_known_keys(d, "decode",
                                 {"mode", "p", "n_candidates", "max_summary_tokens",
                                  "length_norm_power", "seed"});
        if (d.contains("mode")) {
            cfg.decode.mode = parse_decode_mode(d.at("mode").get<std::string>());
        }
        detail::read_field(d, "p", cfg.decode.p);
        detail::read_field(d, "n_candidates", cfg.decode.n_candidates);
        detail::read_field(d, "max_summary_tokens", cfg.decode.max_summary_tokens);
        detail::read_field(d, "length_norm_power", cfg.decode.length_norm_power);
        detail::read_field(d, "seed", cfg.decode.seed);
    }
    if (doc.contains("limits")) {
        const auto& l = doc.at("limits");
        detail::check_known_keys(
            l, "limits", {"max_source_tokens", "max_summary_tokens", "literal_delta_position"});
        detail::read_field(l, "max_source_tokens", cfg.limits.max_source_tokens);
        detail::read_field(l, "max_summary_tokens", cfg.limits.max_summary_tokens);
        detail::read_field(l, "literal_delta_position", cfg.limits.literal_delta_position);
    }
    if (doc.contains("paths")) {
        const auto& p = doc.at("paths");
        detail::check_known_keys(
            p, "paths", {"vocab", "checkpoint", "train_data", "val_data", "test_data", "log"});
        detail::read_field(p, "vocab", cfg.paths.vocab);
        detail::read_field(p, "checkpoint", cfg.paths.checkpoint);
        detail::read_field(p, "train_data", cfg.paths.train_data);
        detail::read_field(p, "val_data", cfg.paths.val_data);
        detail::read_field(p, "test_data", cfg.paths.test_data);
        detail::read_field(p, "log", cfg.paths.log);
    }
    cfg.limits.n_ctx = cfg.model.n_ctx;
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    return run_config_from_json(doc);
}

}  // namespace dtrf
