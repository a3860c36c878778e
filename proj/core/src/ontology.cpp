#include "corelation/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace corelation {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool skippable(std::string_view line) {
    const std::string_view t = trim(line);
    return t.empty() || t.front() == '#';
}

}  // namespace

void validate_code_id(std::string_view code) {
    if (code.empty()) throw OntologyError("empty code id");
    for (char ch : code) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            throw OntologyError("code id contains whitespace: '" + std::string(code) + "'");
        }
    }
}

std::size_t Ontology::intern(const std::string& code) {
    auto it = index_.find(code);
    if (it != index_.end()) return it->second;
    validate_code_id(code);
    ids_.push_back(code);
    parent_.push_back(kNoParent);
    index_.emplace(code, ids_.size() - 1);
    return ids_.size() - 1;
}

Ontology Ontology::parse(std::string_view hierarchy_text, std::span<const CodeId> codes) {
    Ontology ont;
    for (const auto& c : codes) ont.intern(c);

    const auto lines = split_lines(hierarchy_text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (skippable(lines[ln])) continue;
        const std::string_view line = lines[ln];
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw OntologyError("hierarchy line " + std::to_string(ln + 1) + ": expected child<TAB>parent");
        }
        const std::string child(trim(line.substr(0, tab)));
        const std::string parent(trim(line.substr(tab + 1)));
        if (child.empty() || parent.empty()) {
            throw OntologyError("hierarchy line " + std::to_string(ln + 1) + ": empty code");
        }
        const std::size_t ci = ont.intern(child);
        const std::size_t pi = ont.intern(parent);
        if (ont.parent_[ci] != kNoParent && ont.parent_[ci] != pi) {
            throw OntologyError("code " + child + " has conflicting parents " + ont.ids_[ont.parent_[ci]] +
                                " and " + parent);
        }
        ont.parent_[ci] = pi;
    }

    // Resolve roots and depths; state 0 = unvisited, 1 = on current path, 2 = done.
    const std::size_t n = ont.ids_.size();
    ont.depth_.assign(n, 0);
    ont.root_.assign(n, 0);
    std::vector<char> state(n, 0);
    std::vector<std::size_t> path;
    for (std::size_t start = 0; start < n; ++start) {
        if (state[start] == 2) continue;
        path.clear();
        std::size_t cur = start;
        while (cur != kNoParent && state[cur] == 0) {
            state[cur] = 1;
            path.push_back(cur);
            cur = ont.parent_[cur];
        }
        if (cur != kNoParent && state[cur] == 1) {
            throw OntologyError("cycle in hierarchy through code " + ont.ids_[cur]);
        }
        std::size_t depth = 0, root = 0;
        if (cur == kNoParent) {
            root = path.back();
            depth = 0;
            ont.depth_[root] = 0;
            ont.root_[root] = root;
            state[root] = 2;
            path.pop_back();
        } else {
            depth = ont.depth_[cur];
            root = ont.root_[cur];
        }
        for (std::size_t k = path.size(); k-- > 0;) {
            ont.depth_[path[k]] = ++depth;
            ont.root_[path[k]] = root;
            state[path[k]] = 2;
        }
    }
    return ont;
}

bool Ontology::contains(std::string_view code) const { return index_.count(std::string(code)) != 0; }

std::size_t Ontology::index_of(std::string_view code) const {
    auto it = index_.find(std::string(code));
    if (it == index_.end()) throw OntologyError("unknown code: " + std::string(code));
    return it->second;
}

std::vector<CodeId> Ontology::roots() const {
    std::vector<CodeId> out;
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (parent_[i] == kNoParent) out.push_back(ids_[i]);
    return out;
}

std::optional<CodeId> Ontology::parent(std::string_view code) const {
    const std::size_t i = index_of(code);
    if (parent_[i] == kNoParent) return std::nullopt;
    return ids_[parent_[i]];
}

std::size_t Ontology::depth(std::string_view code) const { return depth_[index_of(code)]; }

const CodeId& Ontology::root_of(std::string_view code) const { return ids_[root_[index_of(code)]]; }

std::optional<std::size_t> Ontology::hop_distance(std::string_view a, std::string_view b) const {
    return hop_distance(index_of(a), index_of(b));
}

std::optional<std::size_t> Ontology::hop_distance(std::size_t a, std::size_t b) const {
    if (root_[a] != root_[b]) return std::nullopt;
    std::size_t x = a, y = b;
    while (depth_[x] > depth_[y]) x = parent_[x];
    while (depth_[y] > depth_[x]) y = parent_[y];
    while (x != y) {
        x = parent_[x];
        y = parent_[y];
    }
    return depth_[a] + depth_[b] - 2 * depth_[x];
}

CodeId major_code_of(std::string_view code) {
    const std::size_t dot = code.find('.');
    return CodeId(dot == std::string_view::npos ? code : code.substr(0, dot));
}

MajorCodeIndex MajorCodeIndex::build(std::span<const CodeId> targets) {
    MajorCodeIndex idx;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        validate_code_id(targets[i]);
        if (!idx.target_index_.emplace(targets[i], i).second) {
            throw OntologyError("duplicate target code: " + targets[i]);
        }
        CodeId major = major_code_of(targets[i]);
        auto [it, inserted] = idx.major_index_.emplace(major, idx.majors_.size());
        if (inserted) idx.majors_.push_back(major);
        idx.major_of_target_.push_back(it->second);
    }
    return idx;
}

const CodeId& MajorCodeIndex::major_of(std::string_view code) const {
    auto it = target_index_.find(std::string(code));
    if (it == target_index_.end()) throw OntologyError("not a target code: " + std::string(code));
    return majors_[major_of_target_[it->second]];
}

std::size_t MajorCodeIndex::index_of_major(std::string_view major) const {
    auto it = major_index_.find(std::string(major));
    if (it == major_index_.end()) throw OntologyError("unknown major code: " + std::string(major));
    return it->second;
}

std::size_t edge_type(std::string_view major, std::string_view code, const Ontology& ontology,
                      const EdgeTypeTable& table) {
    return table.bucket(ontology.hop_distance(major, code));
}

CodeDescriptions parse_descriptions(std::string_view text) {
    CodeDescriptions out;
    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (skippable(lines[ln])) continue;
        const std::string_view line = lines[ln];
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw OntologyError("description line " + std::to_string(ln + 1) + ": expected code<TAB>synonyms");
        }
        const std::string code(trim(line.substr(0, tab)));
        validate_code_id(code);
        std::vector<std::string> syns;
        std::string_view rest = line.substr(tab + 1);
        while (true) {
            const std::size_t bar = rest.find('|');
            const std::string_view part = trim(rest.substr(0, bar));
            if (!part.empty()) syns.emplace_back(part);
            if (bar == std::string_view::npos) break;
            rest.remove_prefix(bar + 1);
        }
        if (syns.empty()) {
            throw OntologyError("description line " + std::to_string(ln + 1) + ": no synonyms for " + code);
        }
        if (out.synonyms.count(code)) {
            throw OntologyError("description line " + std::to_string(ln + 1) + ": duplicate code " + code);
        }
        out.order.push_back(code);
        out.synonyms.emplace(code, std::move(syns));
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace corelation
