#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "cocot/dataset.hpp"

#include "helpers.hpp"

using namespace cocot;

namespace {

// A minimal valid dataset directory built from scratch, so tests can corrupt
// single lines without touching the committed fixtures.
struct ScratchDataset {
  testutil::TempDir dir{"dataset"};

  ScratchDataset() {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::copy_file(testutil::fixture("images/golden.png"), dir / "images/a.png");
  }

  std::string item_line(const std::string& id) const {
    json j = testutil::choice_item(id);
    j["image"] = "a.png";
    return j.dump();
  }

  std::filesystem::path write(const std::vector<std::string>& lines,
                              std::optional<size_t> expected_count = std::nullopt,
                              const std::vector<std::string>& slice_keys = {}) const {
    std::ofstream items(dir / "items.jsonl");
    for (const auto& l : lines) items << l << "\n";
    items.close();

    json m = {{"name", "scratch"},
              {"kind", "multi_choice_reasoning"},
              {"items_file", "items.jsonl"},
              {"images_root", "images"},
              {"slice_keys", slice_keys}};
    if (expected_count) m["expected_count"] = *expected_count;
    std::ofstream mf(dir / "manifest.json");
    mf << m.dump(2) << "\n";
    mf.close();
    return dir / "manifest.json";
  }
};

}  // namespace

TEST_CASE("the committed fixture datasets load cleanly") {
  struct Expected {
    const char* manifest;
    TaskKind kind;
    size_t count;
  };
  for (const Expected& e : {
           Expected{"datasets/vague_speech.manifest.json", TaskKind::IntentDisambiguation, 20},
           Expected{"datasets/m3cot_sample.manifest.json", TaskKind::MultiChoiceReasoning, 20},
           Expected{"datasets/vlguard_sample.manifest.json", TaskKind::SafetyInstruction, 20},
       }) {
    DatasetManifest m = load_manifest(testutil::fixture(e.manifest));
    CHECK(m.kind == e.kind);
    LoadResult r = load(m);
    CHECK(r.errors.empty());
    REQUIRE(r.items.size() == e.count);
    for (const auto& item : r.items) {
      CHECK(item.kind == e.kind);
      REQUIRE(item.image_path.has_value());
      CHECK(std::filesystem::exists(*item.image_path));  // resolved against images_root
    }
  }
}

TEST_CASE("safety items get their subset tag from the gold label, not the file") {
  DatasetManifest m = load_manifest(testutil::fixture("datasets/vlguard_sample.manifest.json"));
  LoadResult r = load(m);
  std::map<std::string, size_t> subsets = slice_counts(r.items, "safety_subset");
  // 8 safe-image items (unsafe instruction each) + 12 instructions on unsafe images
  CHECK(subsets.at("Safe_Unsafe") == 8);
  CHECK(subsets.at("Unsafe") == 12);
  for (const auto& item : r.items) {
    const SafetyLabel& label = std::get<SafetyLabel>(item.gold);
    CHECK(item.slices.at("safety_subset") == safety_subset(label));
  }
}

TEST_CASE("a duplicated id is rejected only for the later line") {
  ScratchDataset ds;
  auto manifest = ds.write({ds.item_line("dup"), ds.item_line("dup"), ds.item_line("ok")});
  LoadResult r = load(load_manifest(manifest));
  REQUIRE(r.items.size() == 2);
  CHECK(r.items[0].id == "dup");
  CHECK(r.items[1].id == "ok");
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].line == 2);
  CHECK(r.errors[0].item_id == "dup");
  CHECK(r.errors[0].reason == "duplicate item id");
}

TEST_CASE("malformed and invalid lines are reported, not fatal") {
  ScratchDataset ds;

  json no_gold = testutil::choice_item("g1");
  no_gold["image"] = "a.png";
  no_gold["gold"] = "Z";  // not one of the choice letters

  json wrong_kind = testutil::safety_item("k1", true, false);
  wrong_kind["image"] = "a.png";

  json ghost = testutil::choice_item("i1");
  ghost["image"] = "missing.png";

  auto manifest = ds.write({
      "{not json",
      no_gold.dump(),
      wrong_kind.dump(),
      ghost.dump(),
      "",  // blank lines are skipped silently
      ds.item_line("ok"),
  });
  LoadResult r = load(load_manifest(manifest));
  REQUIRE(r.items.size() == 1);
  CHECK(r.items[0].id == "ok");
  REQUIRE(r.errors.size() == 4);

  CHECK(r.errors[0].line == 1);
  CHECK(r.errors[0].item_id.empty());  // parse failed before an id existed

  CHECK(r.errors[1].item_id == "g1");
  CHECK(r.errors[1].reason == "gold not among choice letters");

  CHECK(r.errors[2].item_id == "k1");
  CHECK(r.errors[2].reason ==
        "item kind safety_instruction does not match manifest kind multi_choice_reasoning");

  CHECK(r.errors[3].item_id == "i1");
  CHECK(r.errors[3].reason.starts_with("image file not found: "));
}

TEST_CASE("slice keys named by the manifest must be present on every item") {
  ScratchDataset ds;
  json tagged = testutil::choice_item("t1");
  tagged["image"] = "a.png";
  tagged["slices"] = {{"source", "unit"}};
  auto manifest = ds.write({tagged.dump(), ds.item_line("t2")}, std::nullopt, {"source"});
  LoadResult r = load(load_manifest(manifest));
  REQUIRE(r.items.size() == 1);
  CHECK(r.items[0].id == "t1");
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].reason == "missing slice tag \"source\"");
}

TEST_CASE("an expected_count violation aborts the load") {
  ScratchDataset ds;
  auto manifest = ds.write({ds.item_line("a"), "{broken", ds.item_line("b")}, 3);
  try {
    load(load_manifest(manifest));
    FAIL("expected CountMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CountMismatch);
    CHECK(std::string(e.what()).find("expected 3 items, loaded 2 (1 line errors)") !=
          std::string::npos);
  }
}

TEST_CASE("missing files are fatal") {
  ScratchDataset ds;
  CHECK_THROWS_AS(load_manifest(ds.dir / "nope.json"), Error);
  auto manifest = ds.write({ds.item_line("a")});
  std::filesystem::remove(ds.dir / "items.jsonl");
  try {
    load(load_manifest(manifest));
    FAIL("expected FileMissing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FileMissing);
  }
}

TEST_CASE("untagged items are counted under a sentinel") {
  std::vector<TaskItem> items = {testutil::choice_item("a"), testutil::choice_item("b")};
  items[0].slices["topic"] = "x";
  std::map<std::string, size_t> counts = slice_counts(items, "topic");
  CHECK(counts.at("x") == 1);
  CHECK(counts.at("<untagged>") == 1);
}

TEST_CASE("sampling is a deterministic order-preserving subset") {
  std::vector<TaskItem> items;
  for (int i = 0; i < 40; ++i) items.push_back(testutil::choice_item("it" + std::to_string(i)));

  std::vector<TaskItem> s1 = sample_items(items, 10, 1234);
  std::vector<TaskItem> s2 = sample_items(items, 10, 1234);
  REQUIRE(s1.size() == 10);
  for (size_t i = 0; i < 10; ++i) CHECK(s1[i].id == s2[i].id);

  // selection keeps dataset order
  std::map<std::string, size_t> position;
  for (size_t i = 0; i < items.size(); ++i) position[items[i].id] = i;
  for (size_t i = 1; i < s1.size(); ++i) CHECK(position[s1[i - 1].id] < position[s1[i].id]);

  // a different seed picks a different subset (40 choose 10 makes collisions absurd)
  std::vector<TaskItem> s3 = sample_items(items, 10, 99);
  bool same = true;
  for (size_t i = 0; i < 10; ++i) same = same && s1[i].id == s3[i].id;
  CHECK_FALSE(same);

  // asking for everything (or more) is the identity
  CHECK(sample_items(items, 40, 7).size() == 40);
  CHECK(sample_items(items, 400, 7).size() == 40);
  CHECK(sample_items(items, 400, 7)[0].id == "it0");
}

TEST_CASE("the exact sample for a pinned seed is frozen") {
  // Frozen from an independent reimplementation of the same Fisher-Yates walk
  // (mt19937_64(42), j = rng() % (i+1), swap, keep first 5, sort).
  std::vector<TaskItem> items;
  for (int i = 0; i < 12; ++i) items.push_back(testutil::choice_item("it" + std::to_string(i)));
  std::vector<TaskItem> s = sample_items(items, 5, 42);
  std::vector<std::string> got;
  for (const auto& item : s) got.push_back(item.id);
  CHECK(got == std::vector<std::string>{"it1", "it2", "it3", "it7", "it9"});
}
