#include <gtest/gtest.h>

#include "corelation/ontology.hpp"
#include "forest.hpp"

using namespace corelation;
using namespace corelation::testing;

namespace {

const char* kHierarchy =
    "# chapter 390-459\n"
    "401\tCH7\n"
    "401.9\t401\n"
    "428\tCH7\n"
    "428.0\t428\n"
    "\n"
    "E850\tCHE\n";

Ontology sample() {
    const std::vector<CodeId> codes{"401.9", "428.0", "V10"};
    return Ontology::parse(kHierarchy, codes);
}

}  // namespace

TEST(Ontology, ParentsDepthsAndRoots) {
    const Ontology o = sample();
    EXPECT_EQ(o.parent("401.9").value(), "401");
    EXPECT_FALSE(o.parent("CH7").has_value());
    EXPECT_EQ(o.depth("CH7"), 0u);
    EXPECT_EQ(o.depth("401"), 1u);
    EXPECT_EQ(o.depth("401.9"), 2u);
    EXPECT_EQ(o.root_of("428.0"), "CH7");
    EXPECT_EQ(o.root_of("V10"), "V10");  // listed only as a target
    const auto roots = o.roots();
    EXPECT_EQ(roots.size(), 3u);
}

TEST(Ontology, HopDistances) {
    const Ontology o = sample();
    EXPECT_EQ(o.hop_distance("401.9", "401.9").value(), 0u);
    EXPECT_EQ(o.hop_distance("401", "401.9").value(), 1u);
    EXPECT_EQ(o.hop_distance("428", "401.9").value(), 3u);
    EXPECT_EQ(o.hop_distance("428.0", "401.9").value(), 4u);
    EXPECT_FALSE(o.hop_distance("E850", "401.9").has_value());
    EXPECT_EQ(o.hop_distance("428.0", "401.9"), o.hop_distance("401.9", "428.0"));
}

TEST(Ontology, MalformedInputs) {
    const std::vector<CodeId> none;
    EXPECT_THROW(Ontology::parse("401.9 401\n", none), OntologyError);
    EXPECT_THROW(Ontology::parse("a\tb\na\tc\n", none), OntologyError);
    EXPECT_NO_THROW(Ontology::parse("a\tb\na\tb\n", none));
    try {
        Ontology::parse("a\tb\nb\tc\nc\ta\n", none);
        FAIL() << "cycle accepted";
    } catch (const OntologyError& e) {
        EXPECT_NE(std::string(e.what()).find("cycle"), std::string::npos);
    }
    EXPECT_THROW(validate_code_id("40 1"), OntologyError);
    EXPECT_THROW(validate_code_id(""), OntologyError);
    EXPECT_THROW(sample().index_of("999"), OntologyError);
}

TEST(Ontology, DepthInvariantOnRandomForests) {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const RandomForest f = random_forest(rng, 120);
        const Ontology o = Ontology::parse(f.hierarchy_text, f.targets);
        for (std::size_t i = 0; i < f.nodes.size(); ++i) {
            if (f.parent[i] < 0) {
                EXPECT_EQ(o.depth(f.nodes[i]), 0u);
            } else {
                EXPECT_EQ(o.depth(f.nodes[i]), o.depth(f.nodes[static_cast<std::size_t>(f.parent[i])]) + 1);
            }
        }
    }
}

TEST(Ontology, HopDistanceMatchesBfsOnRandomForests) {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const RandomForest f = random_forest(rng, 80);
        const Ontology o = Ontology::parse(f.hierarchy_text, f.targets);
        for (std::size_t i = 0; i < f.nodes.size(); i += 3)
            for (std::size_t j = 0; j < f.nodes.size(); j += 2)
                EXPECT_EQ(o.hop_distance(f.nodes[i], f.nodes[j]), bfs_distance(f, f.nodes[i], f.nodes[j]));
    }
}

TEST(MajorCodes, PrefixBeforeFirstDot) {
    EXPECT_EQ(major_code_of("250.03"), "250");
    EXPECT_EQ(major_code_of("E850"), "E850");
    EXPECT_EQ(major_code_of("V10.1.2"), "V10");
}

TEST(MajorCodes, IndexOrdersByFirstAppearance) {
    const std::vector<CodeId> t{"428.0", "401.9", "428.1", "V10"};
    const MajorCodeIndex idx = MajorCodeIndex::build(t);
    EXPECT_EQ(idx.majors(), (std::vector<CodeId>{"428", "401", "V10"}));
    EXPECT_EQ(idx.major_of(2), 0u);
    EXPECT_EQ(idx.major_of("401.9"), "401");
    EXPECT_EQ(idx.index_of_major("V10"), 2u);
    const std::vector<CodeId> dup{"1.1", "1.1"};
    EXPECT_THROW(MajorCodeIndex::build(dup), OntologyError);
}

TEST(EdgeTypes, BucketingCapsAndSentinel) {
    const EdgeTypeTable table(3);
    EXPECT_EQ(table.bucket_count(), 5u);
    EXPECT_EQ(table.bucket(0), 0u);
    EXPECT_EQ(table.bucket(2), 2u);
    EXPECT_EQ(table.bucket(3), 3u);
    EXPECT_EQ(table.bucket(9), 3u);
    EXPECT_EQ(table.bucket(std::nullopt), 4u);
    const Ontology o = sample();
    EXPECT_EQ(edge_type("401", "401.9", o, table), 1u);
    EXPECT_EQ(edge_type("428", "401.9", o, table), 3u);
    EXPECT_EQ(edge_type("E850", "401.9", o, table), table.sentinel_unrelated());
}

TEST(Descriptions, ParsesSynonymsInOrder) {
    const CodeDescriptions d = parse_descriptions("# header\n401.9\tessential hypertension|high blood pressure\n"
                                                  "428.0\tcongestive heart failure\n");
    EXPECT_EQ(d.order, (std::vector<CodeId>{"401.9", "428.0"}));
    EXPECT_EQ(d.synonyms.at("401.9").size(), 2u);
    EXPECT_EQ(d.synonyms.at("401.9")[1], "high blood pressure");
    EXPECT_THROW(parse_descriptions("401.9 no tab\n"), OntologyError);
    EXPECT_THROW(parse_descriptions("401.9\t | \n"), OntologyError);
    EXPECT_THROW(parse_descriptions("1\ta\n1\tb\n"), OntologyError);
}
