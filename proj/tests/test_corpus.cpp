#include <filesystem>
#include <fstream>
#include <set>

#include "ccnn/data.hpp"
#include "ccnn/errors.hpp"
#include "ccnn/synthetic.hpp"
#include "ccnn/vocab.hpp"
#include "doctest.h"

using namespace ccnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("ccnn_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("build_vocab keeps most frequent words") {
    Vocabulary v = Vocabulary::build({"a a b"}, 6);
    CHECK(v.size() == 6);
    CHECK(v.id("a") == 4);
    CHECK(v.id("b") == 5);
    CHECK(v.id("zebra") == Vocabulary::kUnk);
}

TEST_CASE("build_vocab breaks frequency ties lexicographically") {
    Vocabulary v = Vocabulary::build({"pear apple pear apple cherry"}, 6);
    // apple and pear tie at 2; apple wins the lower id, cherry drops out.
    CHECK(v.id("apple") == 4);
    CHECK(v.id("pear") == 5);
    CHECK(v.id("cherry") == Vocabulary::kUnk);
}

TEST_CASE("build_vocab rejects empty input") {
    CHECK_THROWS_AS(Vocabulary::build({}, 10), InputError);
    CHECK_THROWS_AS(Vocabulary::build({"a"}, 4), ConfigError);
}

TEST_CASE("tokenize wraps in START and END and lowercases") {
    Vocabulary v = Vocabulary::build({"a red circle"}, 10);
    auto tokens = tokenize("A red circle", v, 70);
    REQUIRE(tokens.size() == 5);
    CHECK(tokens.front() == Vocabulary::kStart);
    CHECK(tokens.back() == Vocabulary::kEnd);
    CHECK(tokens[1] == v.id("a"));
    CHECK(tokens[2] == v.id("red"));
    CHECK(tokens[3] == v.id("circle"));

    auto with_unk = tokenize("a blue circle", v, 70);
    CHECK(with_unk[2] == Vocabulary::kUnk);
}

TEST_CASE("tokenize truncates to max_len content words") {
    Vocabulary v = Vocabulary::build({"w"}, 10);
    std::string caption;
    for (int i = 0; i < 80; ++i) caption += "w ";
    auto tokens = tokenize(caption, v, 70);
    CHECK(tokens.size() == 72);
}

TEST_CASE("detokenize round trips in-vocabulary captions") {
    Vocabulary v = Vocabulary::build({"a red circle is above a blue square"}, 40);
    const std::string caption = "A Red Circle IS above a blue square";
    auto tokens = tokenize(caption, v, 70);
    CHECK(detokenize(tokens, v) == "a red circle is above a blue square");
}

TEST_CASE("vocabulary file round trip with reserved header") {
    auto dir = temp_dir("vocab");
    Vocabulary v = Vocabulary::build({"circle square red blue red red"}, 12);
    v.save(dir / "vocab.txt");

    std::ifstream in(dir / "vocab.txt");
    std::string line;
    std::getline(in, line);
    CHECK(line == "<PAD>");
    std::getline(in, line);
    CHECK(line == "<S>");
    std::getline(in, line);
    CHECK(line == "</S>");
    std::getline(in, line);
    CHECK(line == "<UNK>");

    Vocabulary loaded = Vocabulary::load(dir / "vocab.txt");
    CHECK(loaded.size() == v.size());
    for (int id = Vocabulary::kNumReserved; id < v.size(); ++id) CHECK(loaded.word(id) == v.word(id));

    std::ofstream bad(dir / "bad.txt");
    bad << "<S>\n<PAD>\n</S>\n<UNK>\nword\n";
    bad.close();
    CHECK_THROWS_AS(Vocabulary::load(dir / "bad.txt"), FormatError);
}

TEST_CASE("synthetic generator is deterministic per seed") {
    SyntheticConfig config{.seed = 7, .n = 12, .image_size = 32, .grid = 4};
    auto a = generate_synthetic(config);
    auto b = generate_synthetic(config);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].record.caption == b[i].record.caption);
        CHECK(a[i].image.rgb == b[i].image.rgb);
    }
    auto c = generate_synthetic({.seed = 8, .n = 12, .image_size = 32, .grid = 4});
    bool any_difference = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].record.caption != c[i].record.caption || a[i].image.rgb != c[i].image.rgb) {
            any_difference = true;
        }
    }
    CHECK(any_difference);
}

TEST_CASE("relation rule prefers the vertical axis") {
    SceneObject circle{.shape = "circle", .color = "red", .row = 0, .col = 0};
    SceneObject square{.shape = "square", .color = "blue", .row = 2, .col = 0};
    CHECK(caption_for(circle, square) == "a red circle is above a blue square");
    CHECK(relation_between(square, circle) == "below");

    SceneObject left{.shape = "triangle", .color = "green", .row = 1, .col = 0};
    SceneObject right{.shape = "square", .color = "red", .row = 1, .col = 3};
    CHECK(relation_between(left, right) == "left of");
    CHECK(relation_between(right, left) == "right of");
}

TEST_CASE("generator covers all relations and color-shape pairs") {
    auto examples = generate_synthetic({.seed = 7, .n = 2000, .image_size = 32, .grid = 4});
    std::set<std::string> relations;
    std::set<std::string> pairs;
    std::set<std::string> captions;
    for (const auto& ex : examples) {
        const auto& objs = ex.record.objects;
        REQUIRE(objs.size() == 2);
        relations.insert(relation_between(objs[0], objs[1]));
        pairs.insert(objs[0].color + " " + objs[0].shape);
        pairs.insert(objs[1].color + " " + objs[1].shape);
        captions.insert(ex.record.caption);
        // Label correctness: re-deriving the caption from the stored
        // geometry reproduces it exactly.
        CHECK(ex.record.caption == caption_for(objs[0], objs[1]));
        CHECK((objs[0].row != objs[1].row || objs[0].col != objs[1].col));
    }
    CHECK(relations.size() == 4);
    CHECK(pairs.size() == 9);

    Vocabulary v = Vocabulary::build(std::vector<std::string>(captions.begin(), captions.end()),
                                     10000);
    CHECK(v.size() <= 40);
}

TEST_CASE("generator rejects impossible configurations") {
    CHECK_THROWS_AS(generate_synthetic({.seed = 1, .n = 1, .image_size = 8, .grid = 1}), ConfigError);
    CHECK_THROWS_AS(generate_synthetic({.seed = 1, .n = 1, .image_size = 30, .grid = 4}), ConfigError);
    CHECK_THROWS_AS(generate_synthetic({.seed = 1, .n = 0, .image_size = 32, .grid = 4}), InputError);
}

TEST_CASE("imgr files round trip") {
    auto dir = temp_dir("imgr");
    auto examples = generate_synthetic({.seed = 3, .n = 1, .image_size = 16, .grid = 2});
    write_imgr(dir / "one.imgr", examples[0].image);
    Image back = read_imgr(dir / "one.imgr");
    CHECK(back.width == 16);
    CHECK(back.height == 16);
    CHECK(back.rgb == examples[0].image.rgb);

    std::ofstream truncated(dir / "short.imgr", std::ios::binary);
    truncated << "IMGR";
    truncated.close();
    CHECK_THROWS_AS(read_imgr(dir / "short.imgr"), FormatError);
}

TEST_CASE("dataset records round trip through jsonl") {
    auto dir = temp_dir("records");
    write_synthetic_dataset({.seed = 5, .n = 6, .image_size = 32, .grid = 4}, dir);
    Dataset dataset = Dataset::load(dir / "captions.jsonl");
    REQUIRE(dataset.records.size() == 6);
    for (const auto& rec : dataset.records) {
        CHECK_FALSE(rec.caption.empty());
        CHECK_FALSE(rec.image_path.empty());
        Image img = read_imgr(dataset.resolve(rec.image_path));
        CHECK(img.width == 32);
        CHECK(rec.objects.size() == 2);
    }
}

TEST_CASE("batch construction obeys mask invariants") {
    Vocabulary v = Vocabulary::build({"a b c d e f g h"}, 20);
    std::vector<CaptionExample> examples;
    CaptionExample shorter{.id = "s", .tokens = tokenize("a b c d", v, 70), .record_index = 0};
    CaptionExample longer{.id = "l", .tokens = tokenize("a b c d e f", v, 70), .record_index = 1};
    examples.push_back(shorter);
    examples.push_back(longer);

    auto batches = make_batches(examples, 2, 9);
    REQUIRE(batches.size() == 1);
    const Batch& batch = batches[0];
    CHECK(batch.rows == 2);
    CHECK(batch.cols == 8);  // six words plus START/END

    int pad_slots = 0;
    for (int b = 0; b < batch.rows; ++b) {
        const int npred = batch.prediction_count(b);
        const int content =
            static_cast<int>((b == 0 ? shorter : longer).tokens.size()) - 2;
        const bool row_is_short = batch.token(b, batch.cols - 1) == Vocabulary::kPad;
        CHECK(npred == (row_is_short ? 5 : 7));  // caption length + 1
        (void)content;
        for (int j = 0; j < batch.cols; ++j) {
            if (batch.mask_at(b, j) > 0.0) {
                CHECK(batch.target(b, j) == batch.token(b, j + 1));
                CHECK(batch.target(b, j) != Vocabulary::kPad);
            } else if (batch.token(b, j) == Vocabulary::kPad) {
                ++pad_slots;
            }
        }
        CHECK(batch.token(b, 0) == Vocabulary::kStart);
    }
    CHECK(pad_slots == 2);
}

TEST_CASE("single-example batch masks caption length plus one") {
    Vocabulary v = Vocabulary::build({"a b c"}, 10);
    std::vector<CaptionExample> examples{{.id = "x", .tokens = tokenize("a b c", v, 70),
                                          .record_index = 0}};
    auto batches = make_batches(examples, 1, 0);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].prediction_count(0) == 4);
}

TEST_CASE("shuffles differ across seeds but keep the same multiset") {
    Vocabulary v = Vocabulary::build({"a b c d e"}, 20);
    std::vector<CaptionExample> examples;
    for (int i = 0; i < 40; ++i) {
        examples.push_back({.id = std::to_string(i),
                            .tokens = tokenize(i % 2 ? "a b c" : "d e", v, 70),
                            .record_index = i});
    }
    auto order_of = [&](std::uint64_t seed) {
        std::vector<int> order;
        for (const auto& batch : make_batches(examples, 7, seed)) {
            for (int idx : batch.example_index) order.push_back(idx);
        }
        return order;
    };
    auto a = order_of(1);
    auto b = order_of(2);
    CHECK(a != b);
    CHECK(a == order_of(1));
    auto sa = a;
    auto sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    CHECK(sa == sb);

    CHECK_THROWS_AS(make_batches({}, 2, 1), InputError);
}

TEST_CASE("mask totals across the dataset equal sum of lengths plus one") {
    auto examples_data = generate_synthetic({.seed = 13, .n = 25, .image_size = 32, .grid = 4});
    std::vector<std::string> captions;
    for (const auto& ex : examples_data) captions.push_back(ex.record.caption);
    Vocabulary v = Vocabulary::build(captions, 100);
    std::vector<CaptionExample> examples;
    long long expected = 0;
    for (std::size_t i = 0; i < examples_data.size(); ++i) {
        CaptionExample ex;
        ex.id = examples_data[i].record.id;
        ex.tokens = tokenize(examples_data[i].record.caption, v, 70);
        ex.record_index = static_cast<int>(i);
        expected += static_cast<long long>(ex.tokens.size()) - 1;  // len + 1
        examples.push_back(std::move(ex));
    }
    long long total = 0;
    for (const auto& batch : make_batches(examples, 4, 99)) {
        for (double m : batch.mask) total += m > 0.0 ? 1 : 0;
    }
    CHECK(total == expected);
}
