#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corelation/autodiff.hpp"
#include "corelation/layers.hpp"
#include "corelation/parameters.hpp"

namespace corelation {

/// Token to index map with reserved UNK (0) and PAD (1).
class Vocabulary {
public:
    static constexpr std::size_t kUnk = 0;
    static constexpr std::size_t kPad = 1;

    Vocabulary();

    /// Index of `token`, inserting it if new.
    std::size_t add(std::string_view token);
    /// Index of `token`, or kUnk.
    std::size_t lookup(std::string_view token) const;
    std::vector<std::size_t> lookup(std::span<const std::string> tokens) const;
    const std::string& token(std::size_t index) const { return tokens_[index]; }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Rebuilds a vocabulary from tokens() output.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct EncoderConfig {
    std::size_t embed_dim = 100;
    std::size_t hidden_dim = 512;  ///< per direction
    bool bidirectional = true;
    std::size_t output_dim = 512;  ///< e
    std::size_t max_note_tokens = 4000;
    std::size_t max_synonym_tokens = 32;
};

/// Embedding table, single-layer (bi)LSTM and a projection to width e.
/// The same instance encodes notes and code synonyms.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(const EncoderConfig& config, std::size_t vocab_size, ParameterStore& store, Rng& rng);

    const EncoderConfig& config() const { return config_; }

    /// Per-position states of a padded batch, time-major ((steps * batch) x e).
    /// Padding rows hold the projection of zero LSTM output and must be masked by the caller.
    Var encode_batch(Tape& tape, const std::vector<std::vector<std::size_t>>& sequences, SequenceLayout& layout,
                     const ForwardMode& mode) const;

    /// Note states, D x e. Notes longer than max_note_tokens are truncated.
    Var encode_note(Tape& tape, std::span<const std::size_t> tokens, const ForwardMode& mode) const;

    /// One averaged state per sequence (rows in input order), B x e.
    Var encode_synonyms(Tape& tape, const std::vector<std::vector<std::size_t>>& sequences,
                        const ForwardMode& mode) const;

    Parameter& embedding_table() const { return *embedding_; }

    /// Overwrites embedding rows from a text file of `token v1 ... v_embed_dim`
    /// lines. Returns the number of vocabulary tokens found.
    std::size_t load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab) const;

private:
    struct Direction {
        Parameter* w_input = nullptr;
        Parameter* w_hidden = nullptr;
        Parameter* bias = nullptr;
    };

    EncoderConfig config_;
    Parameter* embedding_ = nullptr;
    Direction forward_;
    Direction backward_;
    Linear projection_;
};

}  // namespace corelation
