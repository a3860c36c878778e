#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace corelation {

/// ICD-style code identifier such as "250.03", "E850" or "V10".
using CodeId = std::string;

class OntologyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws OntologyError unless `code` is non-empty and free of whitespace.
void validate_code_id(std::string_view code);

/// Immutable code forest: parent links, roots and depths.
class Ontology {
public:
    /// Parses `child<TAB>parent` lines (blank lines and `#` comments skipped)
    /// and adds every code of `codes`; codes the hierarchy never mentions
    /// become singleton roots.
    ///
    /// Throws OntologyError on malformed lines, on a child listed with two
    /// different parents, and on cycles (naming a code on the cycle).
    static Ontology parse(std::string_view hierarchy_text, std::span<const CodeId> codes);

    bool contains(std::string_view code) const;
    std::size_t size() const { return ids_.size(); }
    /// Dense node index; throws OntologyError naming an unknown code.
    std::size_t index_of(std::string_view code) const;
    const CodeId& id(std::size_t index) const { return ids_[index]; }
    const std::vector<CodeId>& nodes() const { return ids_; }
    std::vector<CodeId> roots() const;

    std::optional<CodeId> parent(std::string_view code) const;
    std::size_t depth(std::string_view code) const;
    const CodeId& root_of(std::string_view code) const;

    /// Undirected path length depth(a) + depth(b) - 2 depth(lca(a, b)),
    /// or nullopt when a and b lie in different trees.
    std::optional<std::size_t> hop_distance(std::string_view a, std::string_view b) const;
    std::optional<std::size_t> hop_distance(std::size_t a, std::size_t b) const;

private:
    static constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

    std::size_t intern(const std::string& code);

    std::vector<CodeId> ids_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> depth_;
    std::vector<std::size_t> root_;
};

/// Category prefix of a code: everything before the first '.', else the code itself.
CodeId major_code_of(std::string_view code);

/// Maps each target code to its major code and orders the distinct majors.
class MajorCodeIndex {
public:
    /// Majors are ordered by first appearance in `targets`.
    static MajorCodeIndex build(std::span<const CodeId> targets);

    const std::vector<CodeId>& majors() const { return majors_; }
    std::size_t count() const { return majors_.size(); }
    /// Index into majors() of the major of target `target_index`.
    std::size_t major_of(std::size_t target_index) const { return major_of_target_[target_index]; }
    const CodeId& major_of(std::string_view code) const;
    std::size_t index_of_major(std::string_view major) const;

private:
    std::vector<CodeId> majors_;
    std::vector<std::size_t> major_of_target_;
    std::unordered_map<std::string, std::size_t> major_index_;
    std::unordered_map<std::string, std::size_t> target_index_;
};

/// Buckets for hop distances: bucket(d) = min(d, cap) for connected pairs and
/// cap + 1 for pairs in different trees, so there are cap + 2 buckets.
class EdgeTypeTable {
public:
    explicit EdgeTypeTable(std::size_t cap = 6) : cap_(cap) {}

    std::size_t cap() const { return cap_; }
    std::size_t sentinel_unrelated() const { return cap_ + 1; }
    std::size_t bucket_count() const { return cap_ + 2; }
    std::size_t bucket(std::optional<std::size_t> distance) const {
        return distance ? std::min(*distance, cap_) : sentinel_unrelated();
    }

private:
    std::size_t cap_;
};

/// Bucketed hop distance between a major code and a lower-level code.
std::size_t edge_type(std::string_view major, std::string_view code, const Ontology& ontology,
                      const EdgeTypeTable& table);

/// Synonym lists keyed by code, in file order.
struct CodeDescriptions {
    std::vector<CodeId> order;
    std::map<CodeId, std::vector<std::string>> synonyms;

    bool contains(std::string_view code) const { return synonyms.count(std::string(code)) != 0; }
};

/// Parses `code<TAB>synonym1|synonym2|...` lines; blank lines and `#` comments skipped.
CodeDescriptions parse_descriptions(std::string_view text);

/// Reads a whole file; throws std::runtime_error naming the path if it cannot be opened.
std::string read_text_file(const std::string& path);

}  // namespace corelation
