#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "iconmark/concept_db.hpp"
#include "iconmark/sha256.hpp"
#include "iconmark/strutil.hpp"

using namespace iconmark;
namespace fs = std::filesystem;

namespace {

const fs::path kDefault100 = fs::path(ICONMARK_SOURCE_DIR) / "data/concepts/default100.txt";

fs::path write_temp(const std::string& name, const std::string& text) {
    const auto dir = fs::temp_directory_path() / "iconmark-test-concepts";
    fs::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path, std::ios::binary) << text;
    return path;
}

}  // namespace

TEST_CASE("constructor accepts a valid database and preserves order") {
    const ConceptDatabase db({"a tree", "a mountain", "a river"});
    CHECK(db.size() == 3);
    CHECK(db.at(0) == "a tree");
    CHECK(db.at(2) == "a river");
    CHECK(db.concepts() == std::vector<std::string>{"a tree", "a mountain", "a river"});
}

TEST_CASE("constructor rejects invariant violations with aggregated messages") {
    CHECK_THROWS_AS(ConceptDatabase({}), std::invalid_argument);
    CHECK_THROWS_AS(ConceptDatabase({"a", ""}), std::invalid_argument);
    CHECK_THROWS_AS(ConceptDatabase({"a\nb"}), std::invalid_argument);
    CHECK_THROWS_AS(ConceptDatabase({std::string(201, 'x')}), std::invalid_argument);
    CHECK_NOTHROW(ConceptDatabase({std::string(200, 'x')}));
    CHECK_THROWS_AS(ConceptDatabase({"a tree", "A  TREE"}), std::invalid_argument);
}

TEST_CASE("validate_concepts lists every violation without throwing") {
    const auto problems = validate_concepts({"ok", "", "a tree", "A TREE", "also ok"});
    CHECK(problems.size() == 2);
    // The duplicate report names both offending entries.
    bool duplicate_names_both = false;
    for (const auto& p : problems)
        if (p.find("a tree") != std::string::npos && p.find("A TREE") != std::string::npos)
            duplicate_names_both = true;
    CHECK(duplicate_names_both);
    CHECK(validate_concepts({"fine"}).empty());
}

TEST_CASE("fingerprint hashes canonical forms, so case/spacing do not matter") {
    const ConceptDatabase a({"A Tree", "a  mountain"});
    const ConceptDatabase b({"a tree", "a mountain"});
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() == sha256_hex(std::string_view{"a tree\na mountain"}));
    const ConceptDatabase c({"a mountain", "a tree"});  // order matters
    CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("find_canonical matches case- and whitespace-insensitively") {
    const ConceptDatabase db({"a worn blue leather armchair", "a brass table lamp"});
    CHECK(db.find_canonical("A Brass  Table Lamp") == 1);
    CHECK(db.find_canonical("  a worn blue leather armchair ") == 0);
    CHECK(db.find_canonical("missing") == -1);
    CHECK(db.contains("a brass table lamp"));
    CHECK_FALSE(db.contains("a ruby"));
}

TEST_CASE("load skips blanks and comments, save round-trips") {
    const auto path = write_temp("db.txt", "# comment\n\na tree\n  a mountain  \n# tail\n");
    const ConceptDatabase db = load_concept_db(path);
    CHECK(db.size() == 2);
    CHECK(db.at(1) == "a mountain");

    const auto out = write_temp("db_out.txt", "");
    save_concept_db(db, out);
    const ConceptDatabase back = load_concept_db(out);
    CHECK(back.concepts() == db.concepts());
    CHECK(back.fingerprint() == db.fingerprint());
}

TEST_CASE("load reports duplicate file line numbers") {
    const auto path = write_temp("dup.txt", "a tree\n# x\nA  TREE\n");
    try {
        load_concept_db(path);
        FAIL("expected duplicate error");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("1") != std::string::npos);
        CHECK(msg.find("3") != std::string::npos);
    }
}

TEST_CASE("load rejects a missing file") {
    CHECK_THROWS(load_concept_db("/nonexistent/path/db.txt"));
}

TEST_CASE("shipped default database has 100 valid entries") {
    const ConceptDatabase db = load_concept_db(kDefault100);
    CHECK(db.size() == 100);
    CHECK(db.at(0) == "a worn blue leather armchair");
    CHECK(db.at(1) == "a brass table lamp");
    CHECK(db.at(99) == "a red acoustic guitar");
    // Entries are short atomic noun phrases; all canonical forms distinct.
    std::set<std::string> canon;
    for (const auto& c : db.concepts()) {
        CHECK(c.size() <= 200);
        CHECK(canon.insert(canonical_concept(c)).second);
    }
}
