#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corelation/ontology.hpp"

namespace corelation {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Whitespace split plus ASCII lowercasing.
std::vector<std::string> tokenize(std::string_view text);

/// The N target codes with their synonym token sequences, the majors with
/// theirs, and the ontology that types relation edges.
class CodeSpace {
public:
    struct Options {
        std::size_t synonyms_per_code = 8;  ///< M
        std::size_t max_synonym_tokens = 32;
        std::size_t distance_cap = 6;
    };

    /// Every target needs a description entry. Synonym lists are truncated or
    /// padded to M by repeating the first synonym. A major without its own
    /// description borrows the first synonym of each member code, in order.
    static CodeSpace build(std::vector<CodeId> targets, const CodeDescriptions& descriptions,
                           std::string_view hierarchy_text, const Options& options);

    std::size_t size() const { return codes_.size(); }
    const std::vector<CodeId>& codes() const { return codes_; }
    const CodeId& code(std::size_t i) const { return codes_[i]; }
    bool contains(std::string_view code) const { return index_.count(std::string(code)) != 0; }
    std::size_t index_of(std::string_view code) const;

    std::size_t synonyms_per_code() const { return options_.synonyms_per_code; }
    /// synonyms(i)[j] is the token list of synonym j of target i.
    const std::vector<std::vector<std::string>>& synonyms(std::size_t i) const { return synonyms_[i]; }
    const std::vector<std::vector<std::string>>& major_synonyms(std::size_t a) const { return major_synonyms_[a]; }

    const MajorCodeIndex& majors() const { return majors_; }
    const Ontology& ontology() const { return ontology_; }
    const EdgeTypeTable& edge_types() const { return edge_types_; }
    /// Bucket id of the edge between major `a` and target `i`.
    std::size_t edge_bucket(std::size_t a, std::size_t i) const { return edge_buckets_[a * codes_.size() + i]; }
    const Options& options() const { return options_; }

private:
    Options options_;
    std::vector<CodeId> codes_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::vector<std::string>>> synonyms_;
    std::vector<std::vector<std::vector<std::string>>> major_synonyms_;
    MajorCodeIndex majors_;
    Ontology ontology_;
    EdgeTypeTable edge_types_;
    std::vector<std::size_t> edge_buckets_;
};

/// Reads one code per line (blank lines and `#` comments skipped).
std::vector<CodeId> parse_code_list(std::string_view text);

struct NoteRecord {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<CodeId> gold;

    friend bool operator==(const NoteRecord&, const NoteRecord&) = default;
};

/// Line-delimited JSON records {"id": ..., "text": ..., "codes": [...]}.
/// Text is tokenized with tokenize(). Unknown codes are reported together;
/// malformed lines and empty texts are reported with their line number.
std::vector<NoteRecord> load_dataset(const std::filesystem::path& path, const CodeSpace& codes);
/// Same parser over in-memory text; `known_codes` may be empty to skip validation.
std::vector<NoteRecord> parse_dataset(std::string_view text, const std::vector<CodeId>& known_codes);
void write_dataset(const std::filesystem::path& path, std::span<const NoteRecord> records);

/// Gold set of a note as a 0/1 vector over the code space.
std::vector<double> label_vector(const NoteRecord& note, const CodeSpace& codes);

struct ImplicationRule {
    std::size_t trigger = 0;
    std::size_t implied = 0;
    double probability = 1.0;
};

struct ExclusionRule {
    std::size_t first = 0;
    std::size_t second = 0;
};

/// Parameters of the planted-structure corpus generator.
struct SyntheticSpec {
    std::size_t num_codes = 30;
    std::size_t num_majors = 6;
    /// Consecutive majors grouped under one chapter root.
    std::size_t majors_per_chapter = 3;
    std::size_t keywords_per_code = 2;
    std::size_t synonyms_per_code = 2;
    /// Expected number of independently drawn gold codes per note.
    double codes_per_note = 3.0;
    std::vector<ImplicationRule> implications;
    std::vector<ExclusionRule> exclusions;
    /// Codes added through an implication rule emit no keywords.
    bool silent_implied = true;
    std::size_t min_note_tokens = 12;
    std::size_t max_note_tokens = 24;
    std::size_t noise_vocab = 200;
    std::size_t num_notes = 100;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticCorpus {
    std::vector<CodeId> codes;
    std::string hierarchy_text;
    std::string descriptions_text;
    std::vector<NoteRecord> notes;
};

/// Deterministic in the spec (including its seed). Throws DataError when a
/// probability-1 implication chain forces an excluded pair together.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Code id of synthetic target `i` under `spec`, e.g. "102.3".
CodeId synthetic_code_id(const SyntheticSpec& spec, std::size_t i);

}  // namespace corelation
