#include "caae/cluster_eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace caae {

std::string_view to_string(MappedClass c) {
    switch (c) {
        case MappedClass::stroma: return "stroma";
        case MappedClass::benign: return "benign";
        case MappedClass::tumor: return "tumor";
        case MappedClass::unassigned: return "unassigned";
    }
    throw std::invalid_argument("unknown mapped class");
}

int assign_cluster(std::span<const float> y) {
    if (y.empty()) throw std::invalid_argument("assign_cluster: empty cluster vector (style_only model?)");
    int best = 0;
    for (int i = 1; i < static_cast<int>(y.size()); ++i)
        if (y[i] > y[best]) best = i;
    return best;
}

namespace {

using Histogram = std::vector<std::array<long long, 3>>;

Histogram cluster_histogram(std::span<const int> clusters, std::span<const TissueClass> labels, int cluster_count) {
    if (clusters.size() != labels.size())
        throw std::invalid_argument("cluster/label lists differ in length: " + std::to_string(clusters.size()) +
                                    " vs " + std::to_string(labels.size()));
    if (clusters.empty()) throw std::invalid_argument("empty labeled set");
    if (cluster_count < 1) throw std::invalid_argument("cluster_count must be >= 1");
    Histogram hist(cluster_count, {0, 0, 0});
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const int k = clusters[i];
        if (k < 0 || k >= cluster_count)
            throw std::invalid_argument("cluster index " + std::to_string(k) + " out of range [0," +
                                        std::to_string(cluster_count) + ")");
        ++hist[k][static_cast<int>(labels[i])];
    }
    return hist;
}

// majority with the documented tie rule: fewer total labeled patches
// first, then class order
MappedClass majority(const std::array<long long, 3>& counts, const std::array<long long, 3>& class_totals) {
    long long best = std::max({counts[0], counts[1], counts[2]});
    if (best == 0) return MappedClass::unassigned;
    int pick = -1;
    for (int c = 0; c < 3; ++c) {
        if (counts[c] != best) continue;
        if (pick < 0 || class_totals[c] < class_totals[pick]) pick = c;
    }
    return static_cast<MappedClass>(pick);
}

}  // namespace

ClusterMapping fit_mapping_subset(std::span<const int> clusters, std::span<const TissueClass> labels,
                                  int cluster_count, int n_per_class) {
    if (n_per_class < 1) throw std::invalid_argument("fit_mapping_subset: n_per_class must be >= 1");
    Histogram hist = cluster_histogram(clusters, labels, cluster_count);
    std::array<long long, 3> totals{};
    for (auto l : labels) ++totals[static_cast<int>(l)];
    for (int c = 0; c < 3; ++c)
        if (totals[c] != n_per_class)
            throw std::invalid_argument("fit_mapping_subset: expected exactly " + std::to_string(n_per_class) +
                                        " labeled patches of class '" +
                                        std::string(to_string(static_cast<TissueClass>(c))) + "', got " +
                                        std::to_string(totals[c]));
    ClusterMapping m;
    m.provenance = ClusterMapping::Provenance::subset;
    m.n_per_class = n_per_class;
    m.classes.reserve(cluster_count);
    for (const auto& counts : hist) m.classes.push_back(majority(counts, totals));
    return m;
}

ClusterMapping fit_mapping_all(std::span<const int> clusters, std::span<const TissueClass> labels, int cluster_count) {
    Histogram hist = cluster_histogram(clusters, labels, cluster_count);
    std::array<long long, 3> totals{};
    for (auto l : labels) ++totals[static_cast<int>(l)];
    ClusterMapping m;
    m.provenance = ClusterMapping::Provenance::all_labels;
    m.classes.reserve(cluster_count);
    for (const auto& counts : hist) m.classes.push_back(majority(counts, totals));
    return m;
}

ClusterMapping fit_mapping_f1_greedy(std::span<const int> clusters, std::span<const TissueClass> labels,
                                     int cluster_count) {
    ClusterMapping m = fit_mapping_all(clusters, labels, cluster_count);
    m.provenance = ClusterMapping::Provenance::f1_greedy;
    double best_f1 = compute_metrics(m, clusters, labels).f1;
    bool improved = true;
    while (improved) {
        improved = false;
        for (int k = 0; k < cluster_count; ++k) {
            const MappedClass keep = m.classes[k];
            for (int c = 0; c < 4; ++c) {
                const auto candidate = static_cast<MappedClass>(c);
                if (candidate == keep) continue;
                m.classes[k] = candidate;
                const double f1 = compute_metrics(m, clusters, labels).f1;
                if (f1 > best_f1 + 1e-12) {
                    best_f1 = f1;
                    improved = true;
                } else {
                    m.classes[k] = keep;
                }
            }
        }
    }
    return m;
}

MetricsReport compute_metrics(const ClusterMapping& mapping, std::span<const int> clusters,
                              std::span<const TissueClass> labels, bool unassigned_as_tumor) {
    if (clusters.size() != labels.size())
        throw std::invalid_argument("compute_metrics: cluster/label lists differ in length");
    if (clusters.empty()) throw std::invalid_argument("compute_metrics: empty evaluation set");

    MetricsReport r;
    r.total = static_cast<long long>(clusters.size());
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const int k = clusters[i];
        if (k < 0 || k >= mapping.cluster_count())
            throw std::invalid_argument("compute_metrics: cluster index " + std::to_string(k) +
                                        " outside the mapping");
        const MappedClass pred = mapping.classes[k];
        const int truth = static_cast<int>(labels[i]);
        ++r.confusion3[truth][static_cast<int>(pred)];
        const int true_tumor = labels[i] == TissueClass::tumor ? 1 : 0;
        const int pred_tumor =
            pred == MappedClass::tumor || (unassigned_as_tumor && pred == MappedClass::unassigned) ? 1 : 0;
        ++r.confusion2[true_tumor][pred_tumor];
    }

    long long correct3 = 0;
    for (int c = 0; c < 3; ++c) correct3 += r.confusion3[c][c];
    r.accuracy3 = static_cast<double>(correct3) / static_cast<double>(r.total);

    const auto tn = static_cast<double>(r.confusion2[0][0]);
    const auto fp = static_cast<double>(r.confusion2[0][1]);
    const auto fn = static_cast<double>(r.confusion2[1][0]);
    const auto tp = static_cast<double>(r.confusion2[1][1]);
    r.accuracy = (tp + tn) / static_cast<double>(r.total);
    r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    r.f1 = binary_f1(r.precision, r.recall);
    return r;
}

double binary_f1(double precision, double recall) {
    if (precision < 0 || precision > 1 || recall < 0 || recall > 1)
        throw std::invalid_argument("binary_f1: precision/recall must lie in [0,1]");
    const double denom = precision + recall;
    return denom > 0 ? 2.0 * precision * recall / denom : 0.0;
}

std::string metrics_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["total"] = r.total;
    j["confusion3"] = r.confusion3;
    j["confusion2"] = r.confusion2;
    j["accuracy_3class"] = r.accuracy3;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    return j.dump(2);
}

std::string metrics_to_csv(const MetricsReport& r) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "accuracy,precision,recall,f1,accuracy_3class\n%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.accuracy, r.precision, r.recall, r.f1, r.accuracy3);
    return buf;
}

}  // namespace caae
