#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "caae/synthdata.hpp"
#include "caae/tensor.hpp"

namespace caae {

enum class MappedClass { stroma = 0, benign = 1, tumor = 2, unassigned = 3 };

std::string_view to_string(MappedClass c);

// Post-hoc cluster -> tissue-class assignment. `classes` has one entry per
// cluster; clusters that never received a labeled patch stay unassigned
// (scored as errors in 3-class terms and as non-tumor in binary terms).
struct ClusterMapping {
    enum class Provenance { subset, all_labels, f1_greedy };
    std::vector<MappedClass> classes;
    Provenance provenance = Provenance::subset;
    int n_per_class = 0;  // subset provenance only

    int cluster_count() const { return static_cast<int>(classes.size()); }
};

// argmax over the simplex vector; ties break to the lowest index
int assign_cluster(std::span<const float> y);

// Majority vote over a small labeled subset holding exactly n_per_class
// patches of every class. Ties go to the class with fewer labeled patches
// overall, then to the fixed class order.
ClusterMapping fit_mapping_subset(std::span<const int> clusters, std::span<const TissueClass> labels,
                                  int cluster_count, int n_per_class);

// Per-cluster argmax of the cluster-conditional class histogram over all
// labeled eval patches; maximizes 3-class accuracy over every per-cluster
// assignment.
ClusterMapping fit_mapping_all(std::span<const int> clusters, std::span<const TissueClass> labels, int cluster_count);

// Greedy swap search that locally maximizes binary (tumor vs rest) F1,
// seeded from the accuracy-optimal mapping. Heuristic, not exhaustive.
ClusterMapping fit_mapping_f1_greedy(std::span<const int> clusters, std::span<const TissueClass> labels,
                                     int cluster_count);

struct MetricsReport {
    // rows: true stroma/benign/tumor; cols: mapped stroma/benign/tumor/unassigned
    std::array<std::array<long long, 4>, 3> confusion3{};
    // rows: true non-tumor/tumor; cols: predicted non-tumor/tumor
    std::array<std::array<long long, 2>, 2> confusion2{};
    long long total = 0;
    double accuracy3 = 0;
    double accuracy = 0;   // binary, tumor vs non-tumor
    double precision = 0;  // tumor positive
    double recall = 0;
    double f1 = 0;
};

// `unassigned_as_tumor` flips the conservative default that scores
// unassigned clusters as non-tumor in the binary metrics.
MetricsReport compute_metrics(const ClusterMapping& mapping, std::span<const int> clusters,
                              std::span<const TissueClass> labels, bool unassigned_as_tumor = false);

double binary_f1(double precision, double recall);

std::string metrics_to_json(const MetricsReport& report);
// header plus one row in Table-1 column order:
// accuracy,precision,recall,f1,accuracy_3class
std::string metrics_to_csv(const MetricsReport& report);

}  // namespace caae
