#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedchs/losses.hpp"
#include "fedchs/numerics.hpp"

namespace fedchs {

enum class DatasetKind { gaussian_blobs, linear_regression };

const char* to_string(DatasetKind kind);

/// Synthetic dataset description.
///
/// gaussian_blobs: binary labels; class means at +/- (separation/2) u with
/// u = (1, ..., 1)/sqrt(d_in); per-feature noise std is noise * s_j where s_j
/// decays geometrically from 1 to 1/condition across the features.
/// linear_regression: x ~ N(0, I), y = w_true . x + noise * N(0, 1).
struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_blobs;
  std::size_t total_size = 1000;
  std::size_t input_dim = 4;
  double noise = 1.0;
  int class_count = 2;
  double separation = 2.0;
  double condition = 1.0;
};

struct Dataset {
  DatasetKind kind = DatasetKind::gaussian_blobs;
  int class_count = 2;
  std::vector<Sample> samples;
  // Generating weights for regression data; empty for classification.
  ModelVector true_weights;
};

Dataset generate_dataset(const DatasetSpec& spec, RandomStream stream);

/// Per-client shards. Every shard is nonempty and shards are disjoint.
struct Partition {
  std::vector<Shard> shards;
  int class_count = 2;

  std::size_t clients() const { return shards.size(); }
  std::size_t client_size(std::size_t n) const { return shards[n].size(); }
  std::size_t total_size() const;
  // gamma_n = D_n / D_A in client order.
  std::vector<double> global_weights() const;
  // counts[n][c] = number of class-c samples held by client n.
  std::vector<std::vector<std::size_t>> class_counts() const;
};

inline constexpr int kDefaultPartitionRetries = 100;

/// Dirichlet(lambda) label skew: for every class, client proportions are drawn
/// from a symmetric Dirichlet and rounded with largest remainders. Redraws
/// (up to `max_retries` attempts) until every client holds a sample, then
/// throws PartitionInfeasibleError.
Partition dirichlet_partition(const Dataset& dataset, std::size_t clients, double lambda,
                              RandomStream stream, int max_retries = kDefaultPartitionRetries);

/// Mean over clients of the total-variation distance between the client's
/// label distribution and the pooled label distribution.
double mean_label_tv_distance(const Partition& partition);

enum class ClusterPolicy { contiguous, round_robin, iid_clusters };

const char* to_string(ClusterPolicy policy);

/// One edge server's view: member clients (ascending), weights
/// gamma_n^m = D_n / D_{A,m} in member order, and the cluster mass D_{A,m}.
struct ClusterState {
  int id = 0;
  std::vector<int> clients;
  std::vector<double> weights;
  std::size_t mass = 0;
};

struct ClusterAssignment {
  // Equal to the input partition except for iid_clusters, which re-deals the
  // samples so that every cluster carries the pooled label mix.
  Partition partition;
  std::vector<ClusterState> clusters;

  std::size_t max_cluster_size() const;
};

ClusterAssignment assign_clusters(Partition partition, std::size_t clusters, ClusterPolicy policy,
                                  RandomStream stream);

/// Builds ClusterState entries for an explicit client grouping.
std::vector<ClusterState> make_clusters(const Partition& partition,
                                        const std::vector<std::vector<int>>& groups);

/// Line format: client_id<TAB>label<TAB>x_1,...,x_d. The label column holds
/// the target y (the class index for classification data), written with 17
/// significant digits.
void write_partition(std::ostream& out, const Partition& partition);
Partition read_partition(std::istream& in, DatasetKind kind);

// Partitioning stratum for a target value under the given dataset kind.
int stratum_of(DatasetKind kind, double y);

}  // namespace fedchs
