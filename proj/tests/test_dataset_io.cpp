#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <unistd.h>

#include "cdsrank/dataset_io.hpp"
#include "cdsrank/errors.hpp"
#include "oracles.hpp"

using cdsrank::Batch;
using cdsrank::GalleryIndex;
using cdsrank::IoCode;
using cdsrank::IoError;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("cdsrank_io_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string tmp(const std::string& name) { return (temp_dir() / name).string(); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

GalleryIndex random_gallery(cdsrank::Rng& rng, int n, int dim, bool cameras = true) {
    GalleryIndex index;
    for (int i = 0; i < n; ++i) {
        cdsrank::FeatureVector f;
        f.id = "p" + std::to_string(i % 5);
        if (cameras && i % 3 != 0) f.camera = static_cast<int>(rng.uniform_int(4));
        f.values = Eigen::VectorXd(dim);
        for (int d = 0; d < dim; ++d) f.values(d) = rng.gaussian() * std::pow(10.0, (d % 7) - 3);
        index.items.push_back(std::move(f));
    }
    return index;
}

}  // namespace

TEST_CASE("csv parse of a small file") {
    const auto path = tmp("small.csv");
    write_text(path, "id,camera,f0,f1\na,0,1.5,2\nb,,0.25,-1\n");
    const auto index = cdsrank::load_features_csv(path);
    REQUIRE(index.size() == 2);
    CHECK(index.items[0].id == "a");
    CHECK(index.items[0].camera == 0);
    CHECK_FALSE(index.items[1].camera.has_value());
    CHECK(index.items[1].values(1) == -1.0);
}

TEST_CASE("csv rejects a NaN feature with its line number") {
    const auto path = tmp("nan.csv");
    write_text(path, "id,camera,f0\na,0,1\nb,0,NaN\n");
    try {
        cdsrank::load_features_csv(path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.line() == 3);
        CHECK(e.code() == IoCode::parse_error);
    }
}

TEST_CASE("csv rejects ragged rows and bad headers") {
    const auto ragged = tmp("ragged.csv");
    write_text(ragged, "id,camera,f0,f1\na,0,1\n");
    CHECK_THROWS_AS(cdsrank::load_features_csv(ragged), IoError);

    const auto badhead = tmp("badhead.csv");
    write_text(badhead, "name,camera,f0\na,0,1\n");
    CHECK_THROWS_AS(cdsrank::load_features_csv(badhead), IoError);

    CHECK_THROWS_AS(cdsrank::load_features_csv(tmp("missing.csv")), IoError);
}

TEST_CASE("csv write -> read preserves full double precision") {
    cdsrank::Rng rng(5);
    const auto index = random_gallery(rng, 12, 6);
    const auto path = tmp("roundtrip.csv");
    cdsrank::write_features_csv(path, index);
    const auto back = cdsrank::load_features_csv(path);
    REQUIRE(back.size() == index.size());
    for (int i = 0; i < index.size(); ++i) {
        CHECK(back.items[i].id == index.items[i].id);
        CHECK(back.items[i].camera == index.items[i].camera);
        for (int d = 0; d < 6; ++d) CHECK(back.items[i].values(d) == index.items[i].values(d));
    }
}

TEST_CASE("binary round-trip is bit exact") {
    cdsrank::Rng rng(7);
    GalleryIndex index = random_gallery(rng, 9, 5);
    // f32 on disk: store f32-representable values to compare bit-for-bit
    for (auto& item : index.items)
        for (int d = 0; d < 5; ++d)
            item.values(d) = static_cast<double>(static_cast<float>(item.values(d)));

    const auto path = tmp("roundtrip.bin");
    cdsrank::write_features_bin(path, index);
    const auto back = cdsrank::load_features_bin(path);
    REQUIRE(back.size() == index.size());
    for (int i = 0; i < index.size(); ++i) {
        CHECK(back.items[i].id == index.items[i].id);
        CHECK(back.items[i].camera == index.items[i].camera);
        for (int d = 0; d < 5; ++d) CHECK(back.items[i].values(d) == index.items[i].values(d));
    }

    cdsrank::write_features_bin(tmp("roundtrip2.bin"), back);
    CHECK(read_bytes(path) == read_bytes(tmp("roundtrip2.bin")));
}

TEST_CASE("binary loader rejects corrupted files") {
    const auto magic = tmp("badmagic.bin");
    write_text(magic, "NOPE????????");
    try {
        cdsrank::load_features_bin(magic);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoCode::bad_magic);
    }

    cdsrank::Rng rng(9);
    const auto good = tmp("good.bin");
    cdsrank::write_features_bin(good, random_gallery(rng, 4, 3));

    auto bytes = read_bytes(good);
    {
        auto truncated = bytes.substr(0, bytes.size() - 5);
        std::ofstream out(tmp("trunc.bin"), std::ios::binary);
        out << truncated;
    }
    try {
        cdsrank::load_features_bin(tmp("trunc.bin"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoCode::truncated);
    }

    {
        auto versioned = bytes;
        versioned[4] = 9;  // version field
        std::ofstream out(tmp("version.bin"), std::ios::binary);
        out << versioned;
    }
    try {
        cdsrank::load_features_bin(tmp("version.bin"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoCode::version_mismatch);
    }

    {
        auto empty = bytes;
        empty[8] = empty[9] = empty[10] = empty[11] = 0;  // count field
        std::ofstream out(tmp("empty.bin"), std::ios::binary);
        out << empty.substr(0, 16);
    }
    try {
        cdsrank::load_features_bin(tmp("empty.bin"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoCode::empty_dataset);
    }
}

TEST_CASE("csv -> bin -> csv stays within f32 precision") {
    cdsrank::Rng rng(11);
    const auto index = random_gallery(rng, 8, 4);
    cdsrank::write_features_bin(tmp("conv.bin"), index);
    const auto back = cdsrank::load_features(tmp("conv.bin"));
    for (int i = 0; i < index.size(); ++i)
        for (int d = 0; d < 4; ++d) {
            const double original = index.items[i].values(d);
            const double stored = back.items[i].values(d);
            CHECK(stored == static_cast<double>(static_cast<float>(original)));
        }
}

TEST_CASE("load_features dispatches on the magic bytes") {
    cdsrank::Rng rng(13);
    const auto index = random_gallery(rng, 4, 3);
    cdsrank::write_features_csv(tmp("sniff.csv"), index);
    cdsrank::write_features_bin(tmp("sniff.dat"), index);
    CHECK(cdsrank::load_features(tmp("sniff.csv")).size() == 4);
    CHECK(cdsrank::load_features(tmp("sniff.dat")).size() == 4);
}

TEST_CASE("batches have the exact k x omega structure") {
    const auto index = cdsrank::synth_generate(20, 5, 8, 0.1, 3);
    const Batch batch = cdsrank::build_batch(index, 16, 4, 7);
    CHECK(batch.members.size() == 64);

    std::map<std::string, int> counts;
    for (const auto& m : batch.members) ++counts[m.id];
    CHECK(counts.size() == 16);
    for (const auto& [id, c] : counts) CHECK(c == 4);

    // grouped ordering: each identity occupies one contiguous run
    std::set<std::string> seen;
    for (std::size_t i = 0; i < batch.members.size(); ++i) {
        const auto& id = batch.members[i].id;
        if (i > 0 && batch.members[i - 1].id == id) continue;
        CHECK(seen.insert(id).second);
    }
}

TEST_CASE("a single-item batch is allowed") {
    const auto index = cdsrank::synth_generate(3, 2, 4, 0.1, 3);
    const Batch batch = cdsrank::build_batch(index, 1, 1, 7);
    CHECK(batch.members.size() == 1);
}

TEST_CASE("batch sampling is seed-deterministic") {
    const auto index = cdsrank::synth_generate(12, 6, 8, 0.2, 3);
    const Batch b1 = cdsrank::build_batch(index, 8, 3, 42);
    const Batch b2 = cdsrank::build_batch(index, 8, 3, 42);
    const Batch b3 = cdsrank::build_batch(index, 8, 3, 43);
    REQUIRE(b1.members.size() == b2.members.size());
    bool same = true;
    for (std::size_t i = 0; i < b1.members.size(); ++i) {
        CHECK(b1.members[i].id == b2.members[i].id);
        CHECK((b1.members[i].values.array() == b2.members[i].values.array()).all());
        if (b1.members[i].id != b3.members[i].id) same = false;
    }
    CHECK(b3.members.size() == 24);
    CHECK_FALSE(same);
}

TEST_CASE("insufficient identities are reported with the deficit") {
    const auto index = cdsrank::synth_generate(3, 2, 4, 0.1, 3);
    CHECK_THROWS_WITH_AS(cdsrank::build_batch(index, 5, 2, 1), doctest::Contains("found 3"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(cdsrank::build_batch(index, 2, 4, 1), doctest::Contains("found 0"),
                         std::invalid_argument);
}

TEST_CASE("target matrix of a grouped 2x2 batch is block diagonal") {
    const auto index = cdsrank::synth_generate(2, 2, 4, 0.1, 5);
    const Batch batch = cdsrank::build_batch(index, 2, 2, 1);
    const Eigen::MatrixXi g = cdsrank::build_target_matrix(batch);
    Eigen::MatrixXi expected(4, 4);
    expected << 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1;
    CHECK((g.array() == expected.array()).all());
}

TEST_CASE("omega = 1 gives the identity target matrix") {
    const auto index = cdsrank::synth_generate(4, 2, 4, 0.1, 5);
    const Batch batch = cdsrank::build_batch(index, 4, 1, 1);
    const Eigen::MatrixXi g = cdsrank::build_target_matrix(batch);
    CHECK((g.array() == Eigen::MatrixXi::Identity(4, 4).array()).all());
}

TEST_CASE("shuffling a batch conjugates the target matrix") {
    const auto index = cdsrank::synth_generate(3, 3, 4, 0.1, 5);
    Batch batch = cdsrank::build_batch(index, 3, 3, 1);
    const Eigen::MatrixXi g = cdsrank::build_target_matrix(batch);

    cdsrank::Rng rng(17);
    std::vector<int> perm(batch.members.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.partial_shuffle(perm, perm.size());

    Batch shuffled = batch;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.members[i] = batch.members[perm[i]];
    const Eigen::MatrixXi g2 = cdsrank::build_target_matrix(shuffled);
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t j = 0; j < perm.size(); ++j) CHECK(g2(i, j) == g(perm[i], perm[j]));
}

TEST_CASE("zero-noise synthesis repeats the centroid exactly") {
    const auto index = cdsrank::synth_generate(3, 3, 8, 0.0, 11);
    const auto a = build_affinity(index.items, cdsrank::Metric::cosine);
    for (int i = 0; i < index.size(); ++i)
        for (int j = 0; j < index.size(); ++j) {
            if (i == j) continue;
            if (index.items[i].id == index.items[j].id)
                CHECK(a(i, j) == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("synthesis is bit-identical for a fixed seed") {
    const auto i1 = cdsrank::synth_generate(5, 3, 16, 0.2, 99);
    const auto i2 = cdsrank::synth_generate(5, 3, 16, 0.2, 99);
    REQUIRE(i1.size() == i2.size());
    for (int i = 0; i < i1.size(); ++i) {
        CHECK(i1.items[i].id == i2.items[i].id);
        CHECK(i1.items[i].camera == i2.items[i].camera);
        CHECK((i1.items[i].values.array() == i2.items[i].values.array()).all());
    }
}

TEST_CASE("moderate noise keeps identities separated on average") {
    const auto index = cdsrank::synth_generate(10, 4, 64, 0.1, 21);
    const auto a = build_affinity(index.items, cdsrank::Metric::cosine);
    double within = 0, cross = 0;
    int nw = 0, nc = 0;
    for (int i = 0; i < index.size(); ++i)
        for (int j = i + 1; j < index.size(); ++j) {
            if (index.items[i].id == index.items[j].id) {
                within += a(i, j);
                ++nw;
            } else {
                cross += a(i, j);
                ++nc;
            }
        }
    CHECK(within / nw > cross / nc);
}

TEST_CASE("camera labels alternate round-robin") {
    const auto index = cdsrank::synth_generate(2, 4, 4, 0.1, 1);
    CHECK(index.items[0].camera == 0);
    CHECK(index.items[1].camera == 1);
    CHECK(index.items[2].camera == 0);
    CHECK(index.items[3].camera == 1);
}

TEST_CASE("scores round-trip through csv and json") {
    cdsrank::VerificationScores v{Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 2)};
    v.s << 1, 0.25, 0.25, 1;
    v.d << 0, 0.75, 0.75, 0;

    cdsrank::write_scores(tmp("sc"), v);
    const auto back = cdsrank::load_scores(tmp("sc"));
    CHECK((back.s - v.s).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.d - v.d).cwiseAbs().maxCoeff() == 0.0);

    cdsrank::write_scores(tmp("sc.json"), v);
    const auto jback = cdsrank::load_scores(tmp("sc.json"));
    CHECK((jback.s - v.s).cwiseAbs().maxCoeff() == 0.0);
    CHECK((jback.d - v.d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("score loader rejects mismatched shapes") {
    write_text(tmp("bad_s.csv"), "1,0\n0,1\n");
    write_text(tmp("bad_d.csv"), "1,0,0\n0,1,0\n0,0,1\n");
    CHECK_THROWS_AS(cdsrank::load_scores(tmp("bad")), IoError);
}

TEST_CASE("ranking files round-trip byte-identically") {
    cdsrank::Rng rng(23);
    std::vector<cdsrank::RankedList> lists;
    for (int p = 0; p < 3; ++p) {
        cdsrank::RankedList list;
        list.probe = p;
        for (int g = 0; g < 5; ++g) {
            if (g == p) continue;
            list.order.push_back(g);
            list.scores.push_back(rng.uniform());
        }
        lists.push_back(std::move(list));
    }

    cdsrank::write_ranking(tmp("rank.jsonl"), lists);
    const auto back = cdsrank::load_ranking(tmp("rank.jsonl"));
    REQUIRE(back.size() == lists.size());
    CHECK(back[1].order == lists[1].order);

    cdsrank::write_ranking(tmp("rank2.jsonl"), back);
    CHECK(read_bytes(tmp("rank.jsonl")) == read_bytes(tmp("rank2.jsonl")));

    const auto lines = read_bytes(tmp("rank.jsonl"));
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 3);
}

TEST_CASE("ranking loader rejects malformed lines") {
    write_text(tmp("badrank.jsonl"), "{\"probe\": 0}\n");
    CHECK_THROWS_AS(cdsrank::load_ranking(tmp("badrank.jsonl")), IoError);
    write_text(tmp("empty.jsonl"), "");
    CHECK_THROWS_AS(cdsrank::load_ranking(tmp("empty.jsonl")), IoError);
}
