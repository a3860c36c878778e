#include "corelation/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "corelation/rng.hpp"

namespace corelation {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

std::vector<std::vector<std::string>> fit_synonyms(const std::vector<std::string>& raw, const CodeSpace::Options& opt,
                                                   const CodeId& code) {
    std::vector<std::vector<std::string>> out;
    for (const auto& s : raw) {
        auto toks = tokenize(s);
        if (toks.empty()) throw DataError("empty synonym for code " + code);
        if (toks.size() > opt.max_synonym_tokens) toks.resize(opt.max_synonym_tokens);
        out.push_back(std::move(toks));
        if (out.size() == opt.synonyms_per_code) break;
    }
    if (out.empty()) throw DataError("no synonyms for code " + code);
    while (out.size() < opt.synonyms_per_code) out.push_back(out.front());
    return out;
}

}  // namespace

CodeSpace CodeSpace::build(std::vector<CodeId> targets, const CodeDescriptions& descriptions,
                           std::string_view hierarchy_text, const Options& options) {
    if (targets.empty()) throw DataError("code space is empty");
    if (options.synonyms_per_code == 0) throw DataError("synonyms_per_code must be positive");
    CodeSpace cs;
    cs.options_ = options;
    cs.codes_ = std::move(targets);
    cs.majors_ = MajorCodeIndex::build(cs.codes_);
    for (std::size_t i = 0; i < cs.codes_.size(); ++i) cs.index_.emplace(cs.codes_[i], i);

    for (const auto& code : cs.codes_) {
        auto it = descriptions.synonyms.find(code);
        if (it == descriptions.synonyms.end()) throw DataError("no description for target code " + code);
        cs.synonyms_.push_back(fit_synonyms(it->second, options, code));
    }
    std::vector<std::vector<std::size_t>> members(cs.majors_.count());
    for (std::size_t i = 0; i < cs.codes_.size(); ++i) members[cs.majors_.major_of(i)].push_back(i);
    for (std::size_t a = 0; a < cs.majors_.count(); ++a) {
        const CodeId& major = cs.majors_.majors()[a];
        auto it = descriptions.synonyms.find(major);
        if (it != descriptions.synonyms.end()) {
            cs.major_synonyms_.push_back(fit_synonyms(it->second, options, major));
            continue;
        }
        std::vector<std::vector<std::string>> borrowed;
        for (std::size_t i : members[a]) borrowed.push_back(cs.synonyms_[i].front());
        while (borrowed.size() > options.synonyms_per_code) borrowed.pop_back();
        while (borrowed.size() < options.synonyms_per_code) borrowed.push_back(borrowed.front());
        cs.major_synonyms_.push_back(std::move(borrowed));
    }

    std::vector<CodeId> all_codes = cs.codes_;
    for (const auto& m : cs.majors_.majors())
        if (!cs.index_.count(m)) all_codes.push_back(m);
    cs.ontology_ = Ontology::parse(hierarchy_text, all_codes);
    cs.edge_types_ = EdgeTypeTable(options.distance_cap);

    const std::size_t n = cs.codes_.size();
    cs.edge_buckets_.resize(cs.majors_.count() * n);
    std::vector<std::size_t> code_nodes(n);
    for (std::size_t i = 0; i < n; ++i) code_nodes[i] = cs.ontology_.index_of(cs.codes_[i]);
    for (std::size_t a = 0; a < cs.majors_.count(); ++a) {
        const std::size_t an = cs.ontology_.index_of(cs.majors_.majors()[a]);
        for (std::size_t i = 0; i < n; ++i)
            cs.edge_buckets_[a * n + i] = cs.edge_types_.bucket(cs.ontology_.hop_distance(an, code_nodes[i]));
    }
    return cs;
}

std::size_t CodeSpace::index_of(std::string_view code) const {
    auto it = index_.find(std::string(code));
    if (it == index_.end()) throw DataError("code not in code space: " + std::string(code));
    return it->second;
}

std::vector<CodeId> parse_code_list(std::string_view text) {
    std::vector<CodeId> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto toks = std::istringstream(line);
        std::string code;
        if (!(toks >> code) || code.front() == '#') continue;
        validate_code_id(code);
        out.push_back(code);
    }
    return out;
}

std::vector<NoteRecord> parse_dataset(std::string_view text, const std::vector<CodeId>& known_codes) {
    std::set<std::string> known(known_codes.begin(), known_codes.end());
    std::vector<NoteRecord> out;
    std::set<std::string> unknown;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("dataset line " + std::to_string(ln) + ": malformed JSON (" + e.what() + ")");
        }
        NoteRecord rec;
        try {
            rec.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            rec.tokens = tokenize(j.at("text").get<std::string>());
            for (const auto& c : j.at("codes")) rec.gold.push_back(c.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw DataError("dataset line " + std::to_string(ln) + ": malformed record (" + e.what() + ")");
        }
        if (rec.tokens.empty()) throw DataError("dataset line " + std::to_string(ln) + ": empty text");
        std::sort(rec.gold.begin(), rec.gold.end());
        rec.gold.erase(std::unique(rec.gold.begin(), rec.gold.end()), rec.gold.end());
        if (!known.empty()) {
            for (const auto& c : rec.gold)
                if (!known.count(c)) unknown.insert(c);
        }
        out.push_back(std::move(rec));
    }
    if (!unknown.empty()) {
        std::string msg = "dataset references unknown codes:";
        for (const auto& c : unknown) msg += " " + c;
        throw DataError(msg);
    }
    return out;
}

std::vector<NoteRecord> load_dataset(const std::filesystem::path& path, const CodeSpace& codes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), codes.codes());
}

void write_dataset(const std::filesystem::path& path, std::span<const NoteRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write dataset: " + path.string());
    for (const auto& r : records) {
        std::string text;
        for (std::size_t i = 0; i < r.tokens.size(); ++i) {
            if (i) text += ' ';
            text += r.tokens[i];
        }
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["text"] = text;
        j["codes"] = r.gold;
        out << j.dump() << '\n';
    }
}

std::vector<double> label_vector(const NoteRecord& note, const CodeSpace& codes) {
    std::vector<double> y(codes.size(), 0.0);
    for (const auto& c : note.gold) y[codes.index_of(c)] = 1.0;
    return y;
}

void SyntheticSpec::validate() const {
    if (num_codes == 0 || num_majors == 0 || num_majors > num_codes) {
        throw DataError("synthetic spec: need 1 <= num_majors <= num_codes");
    }
    if (majors_per_chapter == 0) throw DataError("synthetic spec: majors_per_chapter must be positive");
    if (keywords_per_code == 0 || synonyms_per_code == 0) {
        throw DataError("synthetic spec: keywords_per_code and synonyms_per_code must be positive");
    }
    if (min_note_tokens == 0 || min_note_tokens > max_note_tokens) {
        throw DataError("synthetic spec: need 1 <= min_note_tokens <= max_note_tokens");
    }
    if (noise_vocab == 0) throw DataError("synthetic spec: noise_vocab must be positive");
    if (codes_per_note < 0.0 || codes_per_note > static_cast<double>(num_codes)) {
        throw DataError("synthetic spec: codes_per_note out of range");
    }
    for (const auto& r : implications) {
        if (r.trigger >= num_codes || r.implied >= num_codes || r.trigger == r.implied) {
            throw DataError("synthetic spec: implication references invalid codes");
        }
        if (!(r.probability >= 0.0 && r.probability <= 1.0)) {
            throw DataError("synthetic spec: implication probability outside [0, 1]");
        }
    }
    for (const auto& r : exclusions) {
        if (r.first >= num_codes || r.second >= num_codes || r.first == r.second) {
            throw DataError("synthetic spec: exclusion references invalid codes");
        }
    }
}

namespace {

std::size_t major_of_synthetic(const SyntheticSpec& spec, std::size_t i) { return i * spec.num_majors / spec.num_codes; }

std::string keyword(std::size_t code, std::size_t k) { return "kw" + std::to_string(code) + "x" + std::to_string(k); }

bool excluded(const SyntheticSpec& spec, std::size_t a, std::size_t b) {
    for (const auto& e : spec.exclusions)
        if ((e.first == a && e.second == b) || (e.first == b && e.second == a)) return true;
    return false;
}

// Codes forced by probability-1 implications starting from `start` (inclusive).
std::set<std::size_t> forced_closure(const SyntheticSpec& spec, std::size_t start) {
    std::set<std::size_t> seen{start};
    std::vector<std::size_t> stack{start};
    while (!stack.empty()) {
        const std::size_t c = stack.back();
        stack.pop_back();
        for (const auto& r : spec.implications) {
            if (r.trigger == c && r.probability == 1.0 && seen.insert(r.implied).second) stack.push_back(r.implied);
        }
    }
    return seen;
}

}  // namespace

CodeId synthetic_code_id(const SyntheticSpec& spec, std::size_t i) {
    const std::size_t m = major_of_synthetic(spec, i);
    std::size_t first = 0;
    while (major_of_synthetic(spec, first) != m) ++first;
    return std::to_string(100 + m) + "." + std::to_string(i - first);
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    for (std::size_t c = 0; c < spec.num_codes; ++c) {
        const auto closure = forced_closure(spec, c);
        for (std::size_t a : closure)
            for (std::size_t b : closure)
                if (a < b && excluded(spec, a, b)) {
                    throw DataError("unsatisfiable synthetic rules: code " + std::to_string(c) + " forces codes " +
                                    std::to_string(a) + " and " + std::to_string(b) + " which are mutually exclusive");
                }
    }

    SyntheticCorpus corpus;
    for (std::size_t i = 0; i < spec.num_codes; ++i) corpus.codes.push_back(synthetic_code_id(spec, i));

    std::ostringstream hier, desc;
    hier << "# chapter -> major -> code\n";
    std::vector<std::vector<std::size_t>> members(spec.num_majors);
    for (std::size_t i = 0; i < spec.num_codes; ++i) members[major_of_synthetic(spec, i)].push_back(i);
    for (std::size_t m = 0; m < spec.num_majors; ++m) {
        hier << (100 + m) << "\tch" << (m / spec.majors_per_chapter) << '\n';
    }
    for (std::size_t i = 0; i < spec.num_codes; ++i) {
        hier << corpus.codes[i] << '\t' << (100 + major_of_synthetic(spec, i)) << '\n';
    }
    for (std::size_t i = 0; i < spec.num_codes; ++i) {
        desc << corpus.codes[i] << '\t';
        for (std::size_t j = 0; j < spec.synonyms_per_code; ++j) {
            if (j) desc << '|';
            for (std::size_t t = 0; t < spec.keywords_per_code; ++t) {
                if (t) desc << ' ';
                desc << keyword(i, (j + t) % spec.keywords_per_code);
            }
        }
        desc << '\n';
    }
    for (std::size_t m = 0; m < spec.num_majors; ++m) {
        desc << (100 + m) << '\t';
        const auto& mem = members[m];
        for (std::size_t j = 0; j < spec.synonyms_per_code; ++j) {
            if (j) desc << '|';
            for (std::size_t t = 0; t < mem.size(); ++t) {
                if (t) desc << ' ';
                desc << keyword(mem[(j + t) % mem.size()], 0);
            }
        }
        desc << '\n';
    }
    corpus.hierarchy_text = hier.str();
    corpus.descriptions_text = desc.str();

    Rng rng = Rng::stream(spec.seed, "synthetic");
    const double base_rate = spec.codes_per_note / static_cast<double>(spec.num_codes);
    for (std::size_t n = 0; n < spec.num_notes; ++n) {
        std::vector<char> present(spec.num_codes, 0), silent(spec.num_codes, 0);
        for (std::size_t c = 0; c < spec.num_codes; ++c) present[c] = rng.bernoulli(base_rate);
        for (const auto& e : spec.exclusions)
            if (present[e.first] && present[e.second]) present[e.second] = 0;

        std::vector<char> tried(spec.implications.size(), 0);
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t r = 0; r < spec.implications.size(); ++r) {
                const auto& rule = spec.implications[r];
                if (tried[r] || !present[rule.trigger] || present[rule.implied]) continue;
                tried[r] = 1;
                if (!rng.bernoulli(rule.probability)) continue;
                bool conflict = false;
                for (std::size_t c = 0; c < spec.num_codes; ++c)
                    if (present[c] && excluded(spec, c, rule.implied)) conflict = true;
                if (conflict && rule.probability < 1.0) continue;
                if (conflict) {
                    for (std::size_t c = 0; c < spec.num_codes; ++c)
                        if (present[c] && excluded(spec, c, rule.implied)) present[c] = 0;
                }
                present[rule.implied] = 1;
                silent[rule.implied] = spec.silent_implied ? 1 : 0;
                changed = true;
            }
        }

        NoteRecord rec;
        rec.id = "note" + std::to_string(n);
        std::vector<std::string> keywords;
        for (std::size_t c = 0; c < spec.num_codes; ++c) {
            if (!present[c]) continue;
            rec.gold.push_back(corpus.codes[c]);
            if (silent[c]) continue;
            for (std::size_t k = 0; k < spec.keywords_per_code; ++k) keywords.push_back(keyword(c, k));
        }
        std::sort(rec.gold.begin(), rec.gold.end());
        const std::size_t span = spec.max_note_tokens - spec.min_note_tokens + 1;
        const std::size_t length =
            std::max(spec.min_note_tokens + static_cast<std::size_t>(rng.below(span)), keywords.size());
        rec.tokens = keywords;
        while (rec.tokens.size() < length) rec.tokens.push_back("w" + std::to_string(rng.below(spec.noise_vocab)));
        rng.shuffle(rec.tokens);
        corpus.notes.push_back(std::move(rec));
    }
    return corpus;
}

}  // namespace corelation
