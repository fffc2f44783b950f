#include "fedchs/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "fedchs/errors.hpp"

namespace fedchs {

namespace {

// Splits `total` into integer parts proportional to `shares` (which need not
// be normalized). Remainders go to the largest fractional parts, lowest index
// first on ties.
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> shares) {
  const double share_sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<std::size_t> counts(shares.size(), 0);
  if (shares.empty() || !(share_sum > 0.0)) return counts;
  std::vector<double> fractional(shares.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = static_cast<double>(total) * shares[i] / share_sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    fractional[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  // Floating-point slop can leave the floors summing above the total.
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(shares.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fractional[a] > fractional[b]; });
  for (std::size_t r = 0; assigned < total; r = (r + 1) % order.size()) {
    ++counts[order[r]];
    ++assigned;
  }
  return counts;
}

int infer_class_count(const std::vector<Sample>& samples, int declared) {
  int count = declared;
  for (const Sample& s : samples) {
    if (s.label < 0) throw ContractViolation("partition: negative class label");
    count = std::max(count, s.label + 1);
  }
  return count;
}

}  // namespace

const char* to_string(DatasetKind kind) {
  return kind == DatasetKind::gaussian_blobs ? "gaussian-blobs" : "linear-regression";
}

const char* to_string(ClusterPolicy policy) {
  switch (policy) {
    case ClusterPolicy::contiguous: return "contiguous";
    case ClusterPolicy::round_robin: return "round-robin";
    case ClusterPolicy::iid_clusters: return "iid-clusters";
  }
  return "unknown";
}

int stratum_of(DatasetKind kind, double y) {
  if (kind == DatasetKind::gaussian_blobs) return static_cast<int>(std::lround(y));
  return y >= 0.0 ? 1 : 0;
}

Dataset generate_dataset(const DatasetSpec& spec, RandomStream stream) {
  if (spec.total_size == 0 || spec.input_dim == 0) {
    throw ContractViolation("generate_dataset: size and dimension must be positive");
  }
  if (!(spec.noise >= 0.0)) throw ContractViolation("generate_dataset: noise must be nonnegative");
  Dataset data;
  data.kind = spec.kind;
  data.class_count = 2;
  data.samples.reserve(spec.total_size);
  const std::size_t d = spec.input_dim;

  if (spec.kind == DatasetKind::gaussian_blobs) {
    if (spec.class_count != 2) throw ContractViolation("gaussian-blobs data is binary");
    if (!(spec.condition >= 1.0)) throw ContractViolation("generate_dataset: condition must be >= 1");
    const double offset = 0.5 * spec.separation / std::sqrt(static_cast<double>(d));
    std::vector<double> scale(d, 1.0);
    for (std::size_t j = 0; j < d && d > 1; ++j) {
      scale[j] = std::pow(spec.condition, -static_cast<double>(j) / static_cast<double>(d - 1));
    }
    for (std::size_t i = 0; i < spec.total_size; ++i) {
      Sample s;
      s.label = static_cast<int>(stream.uniform_index(2));
      s.y = s.label;
      const double sign = s.label == 1 ? 1.0 : -1.0;
      s.x.resize(d);
      for (std::size_t j = 0; j < d; ++j) s.x[j] = sign * offset + spec.noise * scale[j] * stream.normal();
      data.samples.push_back(std::move(s));
    }
    return data;
  }

  RandomStream weight_stream = stream.substream({0x77});
  data.true_weights = ModelVector(d);
  for (std::size_t j = 0; j < d; ++j) data.true_weights[j] = weight_stream.normal();
  for (std::size_t i = 0; i < spec.total_size; ++i) {
    Sample s;
    s.x.resize(d);
    double y = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      s.x[j] = stream.normal();
      y += data.true_weights[j] * s.x[j];
    }
    if (spec.noise > 0.0) y += spec.noise * stream.normal();
    s.y = y;
    s.label = stratum_of(DatasetKind::linear_regression, y);
    data.samples.push_back(std::move(s));
  }
  return data;
}

std::size_t Partition::total_size() const {
  std::size_t total = 0;
  for (const Shard& s : shards) total += s.size();
  return total;
}

std::vector<double> Partition::global_weights() const {
  const double total = static_cast<double>(total_size());
  std::vector<double> weights;
  weights.reserve(shards.size());
  for (const Shard& s : shards) weights.push_back(static_cast<double>(s.size()) / total);
  return weights;
}

std::vector<std::vector<std::size_t>> Partition::class_counts() const {
  std::vector<std::vector<std::size_t>> counts(shards.size(),
                                               std::vector<std::size_t>(class_count, 0));
  for (std::size_t n = 0; n < shards.size(); ++n) {
    for (const Sample& s : shards[n]) {
      if (s.label < 0 || s.label >= class_count) throw ContractViolation("class label out of range");
      ++counts[n][s.label];
    }
  }
  return counts;
}

Partition dirichlet_partition(const Dataset& dataset, std::size_t clients, double lambda,
                              RandomStream stream, int max_retries) {
  if (clients == 0) throw ContractViolation("dirichlet_partition: need at least one client");
  if (!(lambda > 0.0)) throw ContractViolation("dirichlet_partition: lambda must be positive");
  if (dataset.samples.size() < clients) {
    throw PartitionInfeasibleError("dirichlet_partition: fewer samples than clients");
  }
  const int class_count = infer_class_count(dataset.samples, dataset.class_count);
  std::vector<std::vector<std::size_t>> by_class(class_count);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    by_class[dataset.samples[i].label].push_back(i);
  }

  for (int attempt = 0; attempt < max_retries; ++attempt) {
    RandomStream draw = stream.substream({static_cast<std::uint64_t>(attempt)});
    std::vector<std::vector<std::size_t>> owned(clients);
    for (int c = 0; c < class_count; ++c) {
      std::vector<std::size_t> pool = by_class[c];
      draw.shuffle(std::span<std::size_t>(pool));
      const std::vector<double> proportions = draw.dirichlet(clients, lambda);
      const std::vector<std::size_t> counts = largest_remainder(pool.size(), proportions);
      std::size_t cursor = 0;
      for (std::size_t n = 0; n < clients; ++n) {
        for (std::size_t j = 0; j < counts[n]; ++j) owned[n].push_back(pool[cursor++]);
      }
    }
    const bool feasible =
        std::all_of(owned.begin(), owned.end(), [](const auto& v) { return !v.empty(); });
    if (!feasible) continue;

    Partition partition;
    partition.class_count = class_count;
    partition.shards.resize(clients);
    for (std::size_t n = 0; n < clients; ++n) {
      std::sort(owned[n].begin(), owned[n].end());
      partition.shards[n].reserve(owned[n].size());
      for (std::size_t idx : owned[n]) partition.shards[n].push_back(dataset.samples[idx]);
    }
    return partition;
  }
  throw PartitionInfeasibleError("dirichlet_partition: a client stayed empty after " +
                                 std::to_string(max_retries) + " attempts");
}

double mean_label_tv_distance(const Partition& partition) {
  const auto counts = partition.class_counts();
  const double total = static_cast<double>(partition.total_size());
  std::vector<double> pooled(partition.class_count, 0.0);
  for (const auto& row : counts) {
    for (int c = 0; c < partition.class_count; ++c) pooled[c] += static_cast<double>(row[c]);
  }
  for (double& p : pooled) p /= total;
  double sum = 0.0;
  for (std::size_t n = 0; n < counts.size(); ++n) {
    const double size = static_cast<double>(partition.client_size(n));
    double tv = 0.0;
    for (int c = 0; c < partition.class_count; ++c) {
      tv += std::abs(static_cast<double>(counts[n][c]) / size - pooled[c]);
    }
    sum += 0.5 * tv;
  }
  return sum / static_cast<double>(counts.size());
}

std::vector<ClusterState> make_clusters(const Partition& partition,
                                        const std::vector<std::vector<int>>& groups) {
  std::vector<ClusterState> clusters;
  clusters.reserve(groups.size());
  std::vector<bool> seen(partition.clients(), false);
  for (std::size_t m = 0; m < groups.size(); ++m) {
    ClusterState cluster;
    cluster.id = static_cast<int>(m);
    cluster.clients = groups[m];
    std::sort(cluster.clients.begin(), cluster.clients.end());
    if (cluster.clients.empty()) throw ContractViolation("make_clusters: empty cluster");
    for (int n : cluster.clients) {
      if (n < 0 || static_cast<std::size_t>(n) >= partition.clients() || seen[n]) {
        throw ContractViolation("make_clusters: client " + std::to_string(n) +
                                " is out of range or assigned twice");
      }
      seen[n] = true;
      cluster.mass += partition.client_size(n);
    }
    for (int n : cluster.clients) {
      cluster.weights.push_back(static_cast<double>(partition.client_size(n)) /
                                static_cast<double>(cluster.mass));
    }
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

std::size_t ClusterAssignment::max_cluster_size() const {
  std::size_t best = 0;
  for (const ClusterState& c : clusters) best = std::max(best, c.clients.size());
  return best;
}

ClusterAssignment assign_clusters(Partition partition, std::size_t cluster_count,
                                  ClusterPolicy policy, RandomStream stream) {
  const std::size_t n_clients = partition.clients();
  if (cluster_count == 0 || cluster_count > n_clients) {
    throw ContractViolation("assign_clusters: need 1 <= M <= N (M=" +
                            std::to_string(cluster_count) + ", N=" + std::to_string(n_clients) + ")");
  }
  std::vector<std::vector<int>> groups(cluster_count);
  if (policy == ClusterPolicy::contiguous) {
    const std::size_t base = n_clients / cluster_count;
    const std::size_t extra = n_clients % cluster_count;
    int next = 0;
    for (std::size_t m = 0; m < cluster_count; ++m) {
      const std::size_t size = base + (m < extra ? 1 : 0);
      for (std::size_t j = 0; j < size; ++j) groups[m].push_back(next++);
    }
  } else {
    for (std::size_t n = 0; n < n_clients; ++n) groups[n % cluster_count].push_back(static_cast<int>(n));
  }

  if (policy == ClusterPolicy::iid_clusters) {
    // Re-deal samples: each class is split across clusters in proportion to
    // the clusters' original masses, then across the members of a cluster in
    // proportion to what each member originally held of that class. Clusters
    // end up with the pooled label mix while clients inside a cluster stay
    // heterogeneous.
    const int class_count = partition.class_count;
    const auto original = partition.class_counts();
    const double total = static_cast<double>(partition.total_size());
    std::vector<double> cluster_share(cluster_count, 0.0);
    for (std::size_t m = 0; m < cluster_count; ++m) {
      for (int n : groups[m]) cluster_share[m] += static_cast<double>(partition.client_size(n)) / total;
    }
    std::vector<std::vector<Sample>> pools(class_count);
    for (const Shard& shard : partition.shards) {
      for (const Sample& s : shard) pools[s.label].push_back(s);
    }
    std::vector<Shard> dealt(n_clients);
    for (int c = 0; c < class_count; ++c) {
      RandomStream class_stream = stream.substream({static_cast<std::uint64_t>(c)});
      class_stream.shuffle(std::span<Sample>(pools[c]));
      const auto per_cluster = largest_remainder(pools[c].size(), cluster_share);
      std::size_t cursor = 0;
      for (std::size_t m = 0; m < cluster_count; ++m) {
        std::vector<double> member_share;
        double held = 0.0;
        for (int n : groups[m]) held += static_cast<double>(original[n][c]);
        for (int n : groups[m]) {
          member_share.push_back(held > 0.0 ? static_cast<double>(original[n][c])
                                            : static_cast<double>(partition.client_size(n)));
        }
        const auto per_member = largest_remainder(per_cluster[m], member_share);
        for (std::size_t j = 0; j < groups[m].size(); ++j) {
          for (std::size_t r = 0; r < per_member[j]; ++r) dealt[groups[m][j]].push_back(pools[c][cursor++]);
        }
      }
    }
    // Rounding can starve a client; borrow from the largest member of the
    // same cluster so cluster-level label counts are unchanged.
    for (std::size_t m = 0; m < cluster_count; ++m) {
      for (int n : groups[m]) {
        if (!dealt[n].empty()) continue;
        int donor = -1;
        for (int other : groups[m]) {
          if (donor < 0 || dealt[other].size() > dealt[donor].size()) donor = other;
        }
        if (donor < 0 || dealt[donor].size() < 2) {
          throw PartitionInfeasibleError("assign_clusters: cluster " + std::to_string(m) +
                                         " has fewer samples than clients");
        }
        dealt[n].push_back(dealt[donor].back());
        dealt[donor].pop_back();
      }
    }
    partition.shards = std::move(dealt);
  }

  ClusterAssignment out;
  out.clusters = make_clusters(partition, groups);
  out.partition = std::move(partition);
  return out;
}

void write_partition(std::ostream& out, const Partition& partition) {
  char buf[64];
  for (std::size_t n = 0; n < partition.clients(); ++n) {
    for (const Sample& s : partition.shards[n]) {
      std::snprintf(buf, sizeof buf, "%.17g", s.y);
      out << n << '\t' << buf << '\t';
      for (std::size_t j = 0; j < s.x.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", s.x[j]);
        if (j > 0) out << ',';
        out << buf;
      }
      out << '\n';
    }
  }
}

Partition read_partition(std::istream& in, DatasetKind kind) {
  Partition partition;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fail = [&](const std::string& why) {
      return ContractViolation("read_partition: line " + std::to_string(line_no) + ": " + why);
    };
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) throw fail("expected three tab-separated fields");
    Sample s;
    std::size_t client = 0;
    try {
      client = std::stoul(line.substr(0, tab1));
      s.y = std::stod(line.substr(tab1 + 1, tab2 - tab1 - 1));
      std::stringstream features(line.substr(tab2 + 1));
      std::string field;
      while (std::getline(features, field, ',')) s.x.push_back(std::stod(field));
    } catch (const std::logic_error&) {
      throw fail("malformed number");
    }
    if (s.x.empty()) throw fail("no features");
    if (dim == 0) dim = s.x.size();
    if (s.x.size() != dim) throw fail("inconsistent feature count");
    s.label = stratum_of(kind, s.y);
    if (client >= partition.shards.size()) partition.shards.resize(client + 1);
    partition.shards[client].push_back(std::move(s));
  }
  for (std::size_t n = 0; n < partition.shards.size(); ++n) {
    if (partition.shards[n].empty()) {
      throw ContractViolation("read_partition: client " + std::to_string(n) + " has no samples");
    }
  }
  partition.class_count = 2;
  for (const Shard& shard : partition.shards) {
    for (const Sample& s : shard) partition.class_count = std::max(partition.class_count, s.label + 1);
  }
  return partition;
}

}  // namespace fedchs
