#include "mapeq/graph.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <set>
#include <unistd.h>

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = (std::filesystem::temp_directory_path() /
                ("mapeq_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
                   .string();
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("undirected load symmetrises arcs") {
    TempFile file("0 1\n1 2\n");
    const mapeq::Graph g = mapeq::load_edge_list(file.path, false);
    CHECK(g.node_count() == 3);
    CHECK(g.arcs().size() == 4);
    for (const mapeq::Arc& a : g.arcs())
        CHECK(a.weight == 1.0);
    const mapeq::Matrix adj = g.dense_adjacency();
    CHECK(adj.isApprox(adj.transpose()));
}

TEST_CASE("parallel edges merge by weight summation") {
    TempFile file("0 1 2.0\n0 1 3.0\n");
    const mapeq::Graph directed = mapeq::load_edge_list(file.path, true);
    REQUIRE(directed.arcs().size() == 1);
    CHECK(directed.arcs()[0].weight == 5.0);

    const mapeq::Graph undirected = mapeq::load_edge_list(file.path, false);
    REQUIRE(undirected.arcs().size() == 2);
    CHECK(undirected.arcs()[0].weight == 5.0);
    CHECK(undirected.arcs()[1].weight == 5.0);
}

TEST_CASE("directed two-cycle keeps both arcs") {
    TempFile file("0 1\n1 0\n");
    const mapeq::Graph g = mapeq::load_edge_list(file.path, true);
    CHECK(g.arcs().size() == 2);
    CHECK(g.total_weight() == 2.0);
}

TEST_CASE("comments, blank lines, and unweighted flag") {
    TempFile file("# header\n\n0 1 7.5\n# trailer\n1 2 2.5\n");
    const mapeq::Graph weighted = mapeq::load_edge_list(file.path, true);
    CHECK(weighted.total_weight() == 10.0);
    const mapeq::Graph unweighted = mapeq::load_edge_list(file.path, true, false);
    CHECK(unweighted.total_weight() == 2.0);
}

TEST_CASE("load errors carry the line number") {
    TempFile malformed("0 1\nbroken\n");
    CHECK_THROWS_WITH(mapeq::load_edge_list(malformed.path, true),
                      Catch::Matchers::ContainsSubstring(":2:"));

    TempFile negative("0 1 -2\n");
    CHECK_THROWS_WITH(mapeq::load_edge_list(negative.path, true),
                      Catch::Matchers::ContainsSubstring("negative"));

    TempFile empty("# nothing here\n");
    CHECK_THROWS_WITH(mapeq::load_edge_list(empty.path, true),
                      Catch::Matchers::ContainsSubstring("empty graph"));

    TempFile zero_only("0 1 0\n");
    CHECK_THROWS(mapeq::load_edge_list(zero_only.path, false));
}

TEST_CASE("string ids are interned in first-seen order") {
    TempFile file("alice bob\nbob carol\ncarol alice\n");
    const mapeq::Graph g = mapeq::load_edge_list(file.path, false);
    CHECK(g.index_of("alice") == 0);
    CHECK(g.index_of("bob") == 1);
    CHECK(g.index_of("carol") == 2);
    CHECK(!g.find_index("dave").has_value());
    CHECK_THROWS(g.index_of("dave"));
}

TEST_CASE("dump then load reproduces the arc multiset") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 20; ++round) {
        const bool directed = round % 2 == 0;
        const mapeq::Graph g = oracles::random_graph(rng, 3, 20, directed);
        TempFile file("placeholder\n");
        mapeq::write_edge_list(g, file.path);
        const mapeq::Graph reloaded = mapeq::load_edge_list(file.path, true);
        REQUIRE(reloaded.node_count() == g.node_count());
        REQUIRE(reloaded.arcs().size() == g.arcs().size());
        std::multiset<std::tuple<std::string, std::string, double>> original, roundtrip;
        for (const mapeq::Arc& a : g.arcs())
            original.insert({g.node_id(a.src), g.node_id(a.dst), a.weight});
        for (const mapeq::Arc& a : reloaded.arcs())
            roundtrip.insert({reloaded.node_id(a.src), reloaded.node_id(a.dst), a.weight});
        CHECK(original == roundtrip);
    }
}

TEST_CASE("reindexing preserves the weight multiset") {
    TempFile file("z y 2\ny x 3\nx z 4\n");
    const mapeq::Graph g = mapeq::load_edge_list(file.path, true);
    std::multiset<double> weights;
    for (const mapeq::Arc& a : g.arcs())
        weights.insert(a.weight);
    CHECK(weights == std::multiset<double>{2.0, 3.0, 4.0});
}

TEST_CASE("identity features return the adjacency matrix") {
    const mapeq::Graph two_cycle = mapeq::Graph::from_index_edges({{0, 1, 1}}, false);
    const mapeq::Matrix x = mapeq::identity_features(two_cycle);
    CHECK(x(0, 1) == 1.0);
    CHECK(x(1, 0) == 1.0);
    CHECK(x(0, 0) == 0.0);

    const mapeq::Graph looped =
        mapeq::Graph::from_index_edges({{0, 0, 2.0}, {0, 1, 1.0}}, false);
    CHECK(mapeq::identity_features(looped)(0, 0) == 2.0);
}

TEST_CASE("feature CSV loads aligned to dense indices") {
    TempFile graph_file("0 1\n1 2\n");
    const mapeq::Graph g = mapeq::load_edge_list(graph_file.path, false);
    TempFile csv("id,f0,f1\n0,1.5,2\n1,0,1\n2,3,4\n");
    const mapeq::FeatureMatrix x = mapeq::load_features(csv.path, g);
    REQUIRE(x.rows() == 3);
    REQUIRE(x.cols() == 2);
    CHECK(x(0, 0) == 1.5);
    CHECK(x(2, 1) == 4.0);
}

TEST_CASE("feature triplets load sparsely") {
    TempFile graph_file("0 1\n1 2\n");
    const mapeq::Graph g = mapeq::load_edge_list(graph_file.path, false);
    TempFile triplets("0 0 1.0\n2 3 5.0\n");
    const mapeq::FeatureMatrix x = mapeq::load_features(triplets.path, g);
    REQUIRE(x.rows() == 3);
    REQUIRE(x.cols() == 4);
    CHECK(x(0, 0) == 1.0);
    CHECK(x(2, 3) == 5.0);
    CHECK(x(1, 2) == 0.0);
}

TEST_CASE("feature loading errors") {
    TempFile graph_file("0 1\n1 2\n");
    const mapeq::Graph g = mapeq::load_edge_list(graph_file.path, false);

    TempFile unknown("id,f0\n9,1\n");
    CHECK_THROWS_WITH(mapeq::load_features(unknown.path, g),
                      Catch::Matchers::ContainsSubstring("'9'"));

    TempFile mismatched("id,f0,f1\n0,1\n");
    CHECK_THROWS_WITH(mapeq::load_features(mismatched.path, g),
                      Catch::Matchers::ContainsSubstring("columns"));

    TempFile empty("# only a comment\n");
    CHECK_THROWS_WITH(mapeq::load_features(empty.path, g),
                      Catch::Matchers::ContainsSubstring("no features"));

    TempFile non_finite("id,f0\n0,nan\n");
    CHECK_THROWS(mapeq::load_features(non_finite.path, g));
}

TEST_CASE("connected components") {
    CHECK(mapeq::connected_components(oracles::path_graph(4)).count == 1);

    const mapeq::Graph two_triangles = mapeq::Graph::from_index_edges(
        {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}}, false);
    CHECK(mapeq::connected_components(two_triangles).count == 2);

    // zero-weight self-loop interns an otherwise isolated node
    const mapeq::Graph triangle_plus_isolated = mapeq::Graph::from_index_edges(
        {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 3, 0}}, false);
    REQUIRE(triangle_plus_isolated.node_count() == 4);
    const auto components = mapeq::connected_components(triangle_plus_isolated);
    CHECK(components.count == 2);
    CHECK(components.labels[3] != components.labels[0]);
}
