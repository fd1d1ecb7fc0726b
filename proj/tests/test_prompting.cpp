#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "iconmark/prompting.hpp"
#include "iconmark/strutil.hpp"

using namespace iconmark;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const fs::path kSource = fs::path(ICONMARK_SOURCE_DIR);

ConceptDatabase golden_db() {
    return ConceptDatabase({"a tree", "a mountain", "a brass table lamp", "a wooden fence",
                            "a red acoustic guitar"});
}

const std::string kKitten = "A small kitten is sitting in a bowl.";

}  // namespace

TEST_CASE("shipped template files are byte-identical to the embedded constants") {
    CHECK(read_file(kSource / "templates/sampler_system.txt") == sampler_system_template());
    CHECK(read_file(kSource / "templates/sampler_user.txt") == sampler_user_template());
    CHECK(read_file(kSource / "templates/augment.txt") == augment_template());
    CHECK(read_file(kSource / "templates/detect.txt") == detect_template());
}

TEST_CASE("rendered sampler prompt matches the golden transcription byte for byte") {
    const ChatPrompt chat = build_sampler_prompt(golden_db(), kKitten, 3);
    CHECK(chat.system == read_file(kSource / "tests/golden/sampler_system.golden.txt"));
    CHECK(chat.user == read_file(kSource / "tests/golden/sampler_user.golden.txt"));
}

TEST_CASE("rendered augment prompt matches the golden transcription byte for byte") {
    SampledConcepts sampled;
    sampled.concepts = {"a tree", "a mountain"};
    const AugmentedPrompt aug = build_augmented_prompt(kKitten, sampled);
    CHECK(aug.text == read_file(kSource / "tests/golden/augment.golden.txt"));
    CHECK(aug.k == 2);
}

TEST_CASE("rendered detection query matches the golden transcription byte for byte") {
    CHECK(build_detection_query("a brass table lamp") ==
          read_file(kSource / "tests/golden/detect.golden.txt"));
}

TEST_CASE("sampler prompt embeds N, all concepts, p and k") {
    const ChatPrompt chat = build_sampler_prompt(golden_db(), kKitten, 2);
    CHECK(chat.system.rfind("Here is a database of 5 concepts:", 0) == 0);
    CHECK(chat.system.find("a wooden fence\n") != std::string::npos);
    CHECK(chat.system.find("`" + kKitten + "'") != std::string::npos);
    CHECK(chat.system.find("top 2 related concepts") != std::string::npos);
    CHECK(chat.user == "Print each of the 2 related concepts verbatim between <a> and </a>.");
}

TEST_CASE("build_sampler_prompt validates k") {
    CHECK_THROWS(build_sampler_prompt(golden_db(), kKitten, 0));
    CHECK_THROWS(build_sampler_prompt(golden_db(), kKitten, 6));
    CHECK_NOTHROW(build_sampler_prompt(golden_db(), kKitten, 5));
}

TEST_CASE("make_user_prompt trims and rejects empties") {
    CHECK(make_user_prompt("  a cat \n") == "a cat");
    CHECK_THROWS(make_user_prompt("   "));
    CHECK_THROWS(make_user_prompt(""));
}

TEST_CASE("augment with k=0 returns p unchanged") {
    SampledConcepts none;
    const AugmentedPrompt aug = build_augmented_prompt(kKitten, none);
    CHECK(aug.text == kKitten);
    CHECK(aug.k == 0);
}

TEST_CASE("parse_sampled_concepts extracts tagged database members in order") {
    const ConceptDatabase db = golden_db();
    const std::string reply =
        "Sure! Here are the concepts:\n<a>a mountain</a>\n<a>a tree</a>\n<a>a wooden fence</a>";
    const SampledConcepts got = parse_sampled_concepts(reply, db, 3);
    CHECK(got.concepts == std::vector<std::string>{"a mountain", "a tree", "a wooden fence"});
    CHECK(got.source_fingerprint == db.fingerprint());
}

TEST_CASE("parse returns the database's original casing") {
    const SampledConcepts got = parse_sampled_concepts("<a>A  MOUNTAIN</a>", golden_db(), 1);
    CHECK(got.concepts == std::vector<std::string>{"a mountain"});
}

TEST_CASE("parse drops non-members, duplicates, and truncates to k") {
    const std::string reply =
        "<a>a unicorn</a><a>a tree</a><a>a tree</a><a>a mountain</a><a>a wooden fence</a>";
    const SampledConcepts got = parse_sampled_concepts(reply, golden_db(), 2);
    CHECK(got.concepts == std::vector<std::string>{"a tree", "a mountain"});
}

TEST_CASE("parse throws ParseError when nothing usable was extracted") {
    CHECK_THROWS_AS(parse_sampled_concepts("no tags at all", golden_db(), 3), ParseError);
    CHECK_THROWS_AS(parse_sampled_concepts("<a>a unicorn</a>", golden_db(), 3), ParseError);
    CHECK_THROWS_AS(parse_sampled_concepts("<a>unclosed", golden_db(), 3), ParseError);
}

TEST_CASE("render_tagged_concepts round-trips through the parser") {
    const std::vector<std::string> concepts{"a brass table lamp", "a red acoustic guitar"};
    const std::string text = render_tagged_concepts(concepts);
    const SampledConcepts got = parse_sampled_concepts(text, golden_db(), 2);
    CHECK(got.concepts == concepts);
}

TEST_CASE("detection queries quote the concept verbatim") {
    const std::string q = build_detection_query("a worn blue leather armchair");
    CHECK(q == "Print yes or no. Is there something like `a worn blue leather armchair'?");
}
