#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "corelation/data.hpp"
#include "fixtures.hpp"

using namespace corelation;
using namespace corelation::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("corelation_data_" + std::to_string(::getpid()) + "_" + name);
}

bool has(const NoteRecord& n, const CodeId& c) { return std::find(n.gold.begin(), n.gold.end(), c) != n.gold.end(); }

}  // namespace

TEST(Tokenize, WhitespaceAndLowercase) {
    EXPECT_EQ(tokenize("  Chest PAIN\tand\n fever "), (std::vector<std::string>{"chest", "pain", "and", "fever"}));
    EXPECT_TRUE(tokenize(" \t ").empty());
}

TEST(Dataset, ParsesRecordsAndDeduplicatesGold) {
    const std::vector<CodeId> known{"401.9", "428.0", "250.00"};
    const auto notes = parse_dataset(
        "{\"id\":\"a\",\"text\":\"Chest pain\",\"codes\":[\"428.0\",\"401.9\",\"250.00\",\"401.9\"]}\n\n"
        "{\"id\":7,\"text\":\"x\",\"codes\":[]}\n",
        known);
    ASSERT_EQ(notes.size(), 2u);
    EXPECT_EQ(notes[0].gold.size(), 3u);
    EXPECT_EQ(notes[0].tokens, (std::vector<std::string>{"chest", "pain"}));
    EXPECT_EQ(notes[1].id, "7");
    EXPECT_TRUE(parse_dataset("", known).empty());
}

TEST(Dataset, ErrorsNameTheLineOrTheCodes) {
    const std::vector<CodeId> known{"1.1"};
    try {
        parse_dataset("{\"id\":\"a\",\"text\":\"t\",\"codes\":[]}\n{broken\n", known);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    try {
        parse_dataset("{\"id\":\"a\",\"text\":\"t\",\"codes\":[\"9.9\",\"8.8\"]}\n", known);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("8.8 9.9"), std::string::npos);
    }
    EXPECT_THROW(parse_dataset("{\"id\":\"a\",\"text\":\"  \",\"codes\":[]}\n", known), DataError);
    EXPECT_THROW(parse_dataset("{\"id\":\"a\",\"codes\":[]}\n", known), DataError);
}

TEST(Dataset, SyntheticWriteLoadRoundTripIsExact) {
    SyntheticSpec spec;
    spec.num_notes = 50;
    spec.implications = {{0, 3, 0.7}};
    const Corpus c = make_corpus(spec);
    const auto path = temp_file("roundtrip.jsonl");
    write_dataset(path, c.raw.notes);
    const auto loaded = load_dataset(path, *c.space);
    EXPECT_EQ(loaded, c.raw.notes);
    fs::remove(path);
    EXPECT_THROW(load_dataset(path, *c.space), DataError);
}

TEST(CodeSpace, PadsSynonymsAndBorrowsMajorDescriptions) {
    const std::vector<CodeId> targets{"401.9", "401.1", "428.0"};
    const CodeDescriptions d = parse_descriptions("401.9\thypertension nos\n401.1\tbenign hypertension|b\n"
                                                  "428.0\theart failure\n428\tcardiac failure\n");
    CodeSpace::Options o;
    o.synonyms_per_code = 3;
    o.max_synonym_tokens = 1;
    const CodeSpace s = CodeSpace::build(targets, d, "401.9\t401\n401.1\t401\n428.0\t428\n", o);
    ASSERT_EQ(s.synonyms(0).size(), 3u);
    EXPECT_EQ(s.synonyms(0)[2], (std::vector<std::string>{"hypertension"}));  // truncated, then repeated
    EXPECT_EQ(s.synonyms(1)[1], (std::vector<std::string>{"b"}));
    EXPECT_EQ(s.majors().majors(), (std::vector<CodeId>{"401", "428"}));
    EXPECT_EQ(s.major_synonyms(0)[0], (std::vector<std::string>{"hypertension"}));
    EXPECT_EQ(s.major_synonyms(0)[1], (std::vector<std::string>{"benign"}));
    EXPECT_EQ(s.major_synonyms(1)[0], (std::vector<std::string>{"cardiac"}));
    EXPECT_EQ(s.edge_bucket(0, 0), 1u);
    EXPECT_EQ(s.edge_bucket(1, 0), s.edge_types().sentinel_unrelated());
    EXPECT_THROW(CodeSpace::build({"9.9"}, d, "", o), DataError);
}

TEST(CodeSpace, LabelVector) {
    const Corpus c = make_corpus(micro_spec());
    const auto y = label_vector(c.raw.notes[0], *c.space);
    double sum = 0;
    for (double v : y) sum += v;
    EXPECT_EQ(sum, static_cast<double>(c.raw.notes[0].gold.size()));
}

TEST(Synthetic, DeterministicInSeed) {
    SyntheticSpec s;
    s.num_notes = 30;
    const auto a = generate_synthetic(s), b = generate_synthetic(s);
    EXPECT_EQ(a.notes, b.notes);
    EXPECT_EQ(a.descriptions_text, b.descriptions_text);
    s.seed = 2;
    EXPECT_NE(generate_synthetic(s).notes, a.notes);
}

TEST(Synthetic, CertainImplicationAlwaysHolds) {
    SyntheticSpec s;
    s.num_notes = 1000;
    s.implications = {{2, 9, 1.0}};
    const auto c = generate_synthetic(s);
    const CodeId a = synthetic_code_id(s, 2), b = synthetic_code_id(s, 9);
    std::size_t with_a = 0;
    for (const auto& n : c.notes)
        if (has(n, a)) {
            ++with_a;
            EXPECT_TRUE(has(n, b)) << n.id;
        }
    EXPECT_GT(with_a, 50u);
}

TEST(Synthetic, ExclusionNeverViolated) {
    SyntheticSpec s;
    s.num_notes = 2000;
    s.codes_per_note = 8.0;
    s.exclusions = {{1, 4}};
    s.implications = {{0, 4, 0.5}};
    const auto c = generate_synthetic(s);
    const CodeId a = synthetic_code_id(s, 1), b = synthetic_code_id(s, 4);
    for (const auto& n : c.notes) EXPECT_FALSE(has(n, a) && has(n, b)) << n.id;
}

TEST(Synthetic, UnsatisfiableRulesRejected) {
    SyntheticSpec s;
    s.implications = {{0, 1, 1.0}, {0, 2, 1.0}};
    s.exclusions = {{1, 2}};
    EXPECT_THROW(generate_synthetic(s), DataError);
}

TEST(Synthetic, KeywordsAppearExactlyForNonSilentGold) {
    SyntheticSpec s;
    s.num_notes = 200;
    s.implications = {{0, 5, 0.9}};
    const auto c = generate_synthetic(s);
    const std::size_t implied = 5;
    const CodeId trig = synthetic_code_id(s, 0);
    for (const auto& n : c.notes) {
        for (std::size_t code = 0; code < s.num_codes; ++code) {
            const std::string kw = "kw" + std::to_string(code) + "x0";
            const bool in_text = std::find(n.tokens.begin(), n.tokens.end(), kw) != n.tokens.end();
            if (!has(n, synthetic_code_id(s, code))) EXPECT_FALSE(in_text) << n.id << " " << kw;
            else if (code != implied || !has(n, trig)) EXPECT_TRUE(in_text) << n.id << " " << kw;
        }
    }
}

TEST(Synthetic, IndependentDrawsWithoutRules) {
    SyntheticSpec s;
    s.num_codes = 10;
    s.num_majors = 2;
    s.codes_per_note = 3.0;
    s.num_notes = 5000;
    const auto c = generate_synthetic(s);
    const double n = static_cast<double>(s.num_notes);
    std::vector<double> freq(s.num_codes, 0.0);
    std::vector<std::vector<double>> joint(s.num_codes, std::vector<double>(s.num_codes, 0.0));
    for (const auto& note : c.notes) {
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < s.num_codes; ++i)
            if (has(note, synthetic_code_id(s, i))) ids.push_back(i);
        for (std::size_t i : ids) {
            freq[i] += 1;
            for (std::size_t j : ids) joint[i][j] += 1;
        }
    }
    for (std::size_t i = 0; i < s.num_codes; ++i)
        for (std::size_t j = i + 1; j < s.num_codes; ++j) {
            const double p = (freq[i] / n) * (freq[j] / n);
            const double sigma = std::sqrt(p * (1 - p) / n);
            EXPECT_NEAR(joint[i][j] / n, p, 3 * sigma) << i << "," << j;
        }
}

TEST(Synthetic, NoteLengthsRespectTheRange) {
    SyntheticSpec s;
    s.num_notes = 100;
    s.min_note_tokens = 30;
    s.max_note_tokens = 40;
    for (const auto& n : generate_synthetic(s).notes) {
        EXPECT_GE(n.tokens.size(), 30u);
        EXPECT_LE(n.tokens.size(), 40u);
    }
}
