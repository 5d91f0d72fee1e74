#include <algorithm>

#include "caae/cluster_eval.hpp"
#include "caae/rng.hpp"
#include "doctest.h"

using namespace caae;

namespace {

// exhaustive 3^K search over per-cluster class choices; empty clusters
// stay unassigned
double best_accuracy_exhaustive(std::span<const int> clusters, std::span<const TissueClass> labels, int k) {
    std::vector<int> choice(k, 0);
    double best = -1;
    const long long combos = static_cast<long long>(std::pow(3.0, k));
    for (long long code = 0; code < combos; ++code) {
        long long c = code;
        for (int i = 0; i < k; ++i) {
            choice[i] = static_cast<int>(c % 3);
            c /= 3;
        }
        long long correct = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            if (choice[clusters[i]] == static_cast<int>(labels[i])) ++correct;
        best = std::max(best, static_cast<double>(correct) / static_cast<double>(clusters.size()));
    }
    return best;
}

struct Instance {
    std::vector<int> clusters;
    std::vector<TissueClass> labels;
};

Instance random_instance(int k, int n, Rng& rng) {
    Instance inst;
    inst.clusters.reserve(n);
    inst.labels.reserve(n);
    for (int i = 0; i < n; ++i) {
        inst.clusters.push_back(rng.uniform_int(k));
        inst.labels.push_back(static_cast<TissueClass>(rng.uniform_int(3)));
    }
    return inst;
}

}  // namespace

TEST_CASE("assign_cluster is argmax with lowest-index ties") {
    std::vector<float> onehot(10, 0.f);
    onehot[7] = 1.f;
    CHECK(assign_cluster(onehot) == 7);

    std::vector<float> uniform(5, 0.2f);
    CHECK(assign_cluster(uniform) == 0);

    std::vector<float> mid = {0.2f, 0.5f, 0.3f};
    CHECK(assign_cluster(mid) == 1);

    CHECK_THROWS_AS(assign_cluster(std::span<const float>{}), std::invalid_argument);
}

TEST_CASE("subset mapping: majority vote, unassigned clusters, degenerate case") {
    // cluster 0 gets {tumor:3, benign:1}; cluster 1 gets the rest; cluster 2 empty
    std::vector<int> clusters = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
    std::vector<TissueClass> labels = {TissueClass::tumor,  TissueClass::tumor,  TissueClass::tumor,
                                       TissueClass::benign, TissueClass::stroma, TissueClass::stroma,
                                       TissueClass::stroma, TissueClass::stroma, TissueClass::benign,
                                       TissueClass::benign, TissueClass::benign, TissueClass::tumor};
    auto m = fit_mapping_subset(clusters, labels, 3, 4);
    CHECK(m.classes[0] == MappedClass::tumor);
    CHECK(m.classes[1] == MappedClass::stroma);
    CHECK(m.classes[2] == MappedClass::unassigned);
    CHECK(m.n_per_class == 4);

    // all labels in cluster 0: majority there, everything else unassigned
    std::vector<int> one_cluster(labels.size(), 0);
    auto m2 = fit_mapping_subset(one_cluster, labels, 4, 4);
    CHECK(m2.classes[0] != MappedClass::unassigned);
    for (int k = 1; k < 4; ++k) CHECK(m2.classes[k] == MappedClass::unassigned);

    // subset protocol insists on exact per-class counts
    labels[0] = TissueClass::stroma;
    CHECK_THROWS_WITH_AS(fit_mapping_subset(clusters, labels, 3, 4), doctest::Contains("exactly"),
                         std::invalid_argument);
    CHECK_THROWS_AS(fit_mapping_subset(std::span<const int>{}, std::span<const TissueClass>{}, 3, 4),
                    std::invalid_argument);
}

TEST_CASE("all-labels mapping equals the exhaustive accuracy optimum on 100 random instances") {
    Rng rng(512);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + rng.uniform_int(5);  // K in [2,6]
        const int n = 30 + rng.uniform_int(60);
        auto inst = random_instance(k, n, rng);
        auto mapping = fit_mapping_all(inst.clusters, inst.labels, k);
        const double got = compute_metrics(mapping, inst.clusters, inst.labels).accuracy3;
        const double best = best_accuracy_exhaustive(inst.clusters, inst.labels, k);
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("all-labels mapping dominates any subset mapping on the same eval set") {
    Rng rng(513);
    for (int trial = 0; trial < 25; ++trial) {
        const int k = 3 + rng.uniform_int(4);
        auto inst = random_instance(k, 120, rng);

        // balanced subset of 10 per class drawn from the instance
        std::vector<int> sub_clusters;
        std::vector<TissueClass> sub_labels;
        std::array<int, 3> want{10, 10, 10};
        for (std::size_t i = 0; i < inst.labels.size() && (want[0] + want[1] + want[2]) > 0; ++i) {
            auto& w = want[static_cast<int>(inst.labels[i])];
            if (w > 0) {
                --w;
                sub_clusters.push_back(inst.clusters[i]);
                sub_labels.push_back(inst.labels[i]);
            }
        }
        if (want[0] + want[1] + want[2] > 0) continue;  // rare unlucky draw
        auto subset = fit_mapping_subset(sub_clusters, sub_labels, k, 10);
        auto all = fit_mapping_all(inst.clusters, inst.labels, k);
        const double acc_sub = compute_metrics(subset, inst.clusters, inst.labels).accuracy3;
        const double acc_all = compute_metrics(all, inst.clusters, inst.labels).accuracy3;
        CHECK(acc_all >= acc_sub);
    }
}

TEST_CASE("single-class data maps every non-empty cluster to that class") {
    std::vector<int> clusters = {0, 1, 1, 3, 0};
    std::vector<TissueClass> labels(5, TissueClass::benign);
    auto m = fit_mapping_all(clusters, labels, 4);
    CHECK(m.classes[0] == MappedClass::benign);
    CHECK(m.classes[1] == MappedClass::benign);
    CHECK(m.classes[2] == MappedClass::unassigned);
    CHECK(m.classes[3] == MappedClass::benign);
}

TEST_CASE("binary F1 arithmetic reproduces the published rows") {
    // published precision/recall pairs recompute to the published F1
    CHECK(binary_f1(0.739, 0.544) == doctest::Approx(0.627).epsilon(0.012));
    CHECK(std::abs(binary_f1(0.739, 0.544) - 0.621) < 0.01);
    CHECK(binary_f1(0.622, 0.448) == doctest::Approx(0.520).epsilon(0.01));
    CHECK(std::abs(binary_f1(0.622, 0.448) - 0.520) < 0.01);
    CHECK(binary_f1(0.0, 0.0) == 0.0);
    CHECK(binary_f1(1.0, 1.0) == 1.0);
}

TEST_CASE("perfect predictions give all-ones metrics") {
    std::vector<int> clusters = {0, 1, 2, 0, 1, 2};
    std::vector<TissueClass> labels = {TissueClass::stroma, TissueClass::benign, TissueClass::tumor,
                                       TissueClass::stroma, TissueClass::benign, TissueClass::tumor};
    auto m = fit_mapping_all(clusters, labels, 3);
    auto r = compute_metrics(m, clusters, labels);
    CHECK(r.accuracy3 == 1.0);
    CHECK(r.accuracy == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
}

TEST_CASE("metrics bookkeeping: totals, coarsening, f1 identity, permutation invariance") {
    Rng rng(514);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 4 + rng.uniform_int(4);
        auto inst = random_instance(k, 200, rng);
        auto m = fit_mapping_all(inst.clusters, inst.labels, k);
        // leave one cluster unassigned on purpose when possible
        if (trial % 3 == 0) m.classes[rng.uniform_int(k)] = MappedClass::unassigned;
        auto r = compute_metrics(m, inst.clusters, inst.labels);

        long long sum3 = 0, sum2 = 0;
        for (const auto& row : r.confusion3)
            for (long long v : row) sum3 += v;
        for (const auto& row : r.confusion2)
            for (long long v : row) sum2 += v;
        CHECK(sum3 == r.total);
        CHECK(sum2 == r.total);

        // binary table is a deterministic coarsening of the 3-class table
        long long tp = r.confusion3[2][2];
        long long fn = r.confusion3[2][0] + r.confusion3[2][1] + r.confusion3[2][3];
        long long fp = r.confusion3[0][2] + r.confusion3[1][2];
        long long tn = r.total - tp - fn - fp;
        CHECK(r.confusion2[1][1] == tp);
        CHECK(r.confusion2[1][0] == fn);
        CHECK(r.confusion2[0][1] == fp);
        CHECK(r.confusion2[0][0] == tn);

        // F1 recomputed from raw counts matches to 1e-12
        const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f1 = p + rec > 0 ? 2 * p * rec / (p + rec) : 0.0;
        CHECK(std::abs(r.f1 - f1) < 1e-12);

        // permute cluster ids consistently: metrics must not move
        std::vector<int> perm(k);
        for (int i = 0; i < k; ++i) perm[i] = i;
        for (int i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
        std::vector<int> pc(inst.clusters.size());
        for (std::size_t i = 0; i < pc.size(); ++i) pc[i] = perm[inst.clusters[i]];
        ClusterMapping pm = m;
        for (int i = 0; i < k; ++i) pm.classes[perm[i]] = m.classes[i];
        auto pr = compute_metrics(pm, pc, inst.labels);
        CHECK(pr.accuracy3 == r.accuracy3);
        CHECK(pr.f1 == r.f1);
        CHECK(pr.precision == r.precision);
        CHECK(pr.recall == r.recall);
    }
}

TEST_CASE("greedy F1 mapping never falls below the accuracy-optimal mapping's F1") {
    Rng rng(515);
    for (int trial = 0; trial < 10; ++trial) {
        const int k = 3 + rng.uniform_int(5);
        auto inst = random_instance(k, 150, rng);
        auto acc_map = fit_mapping_all(inst.clusters, inst.labels, k);
        auto f1_map = fit_mapping_f1_greedy(inst.clusters, inst.labels, k);
        CHECK(compute_metrics(f1_map, inst.clusters, inst.labels).f1 >=
              compute_metrics(acc_map, inst.clusters, inst.labels).f1);
    }
}

TEST_CASE("metrics serialization has the Table-1 column order") {
    std::vector<int> clusters = {0, 1, 2};
    std::vector<TissueClass> labels = {TissueClass::stroma, TissueClass::benign, TissueClass::tumor};
    auto r = compute_metrics(fit_mapping_all(clusters, labels, 3), clusters, labels);
    auto csv = metrics_to_csv(r);
    CHECK(csv.rfind("accuracy,precision,recall,f1,accuracy_3class\n", 0) == 0);
    auto json = metrics_to_json(r);
    CHECK(json.find("\"accuracy_3class\"") != std::string::npos);
    CHECK(json.find("\"confusion3\"") != std::string::npos);
}

TEST_CASE("unassigned clusters score as non-tumor by default, as tumor behind the flag") {
    std::vector<int> clusters = {0, 1, 1};
    std::vector<TissueClass> labels = {TissueClass::tumor, TissueClass::benign, TissueClass::tumor};
    ClusterMapping m;
    m.classes = {MappedClass::unassigned, MappedClass::benign};
    auto conservative = compute_metrics(m, clusters, labels);
    CHECK(conservative.confusion2[1][1] == 0);  // the unassigned tumor counts as predicted non-tumor
    CHECK(conservative.recall == 0.0);
    auto flipped = compute_metrics(m, clusters, labels, true);
    CHECK(flipped.confusion2[1][1] == 1);
    CHECK(flipped.precision == 1.0);
}

TEST_CASE("length mismatches are rejected") {
    std::vector<int> clusters = {0, 1};
    std::vector<TissueClass> labels = {TissueClass::stroma};
    CHECK_THROWS_AS(fit_mapping_all(clusters, labels, 2), std::invalid_argument);
    auto m = fit_mapping_all(std::vector<int>{0}, std::vector<TissueClass>{TissueClass::tumor}, 2);
    CHECK_THROWS_AS(compute_metrics(m, clusters, labels), std::invalid_argument);
}
