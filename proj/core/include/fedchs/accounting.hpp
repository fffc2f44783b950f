#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace fedchs {

enum class Channel { client_up = 0, client_down = 1, es_es = 2, es_ps = 3 };

inline constexpr std::array<Channel, 4> kAllChannels = {Channel::client_up, Channel::client_down,
                                                       Channel::es_es, Channel::es_ps};

const char* to_string(Channel channel);

struct ChannelTotals {
  std::uint64_t client_up = 0;
  std::uint64_t client_down = 0;
  std::uint64_t es_es = 0;
  std::uint64_t es_ps = 0;

  std::uint64_t& operator[](Channel c);
  std::uint64_t operator[](Channel c) const;
  std::uint64_t total() const { return client_up + client_down + es_es + es_ps; }

  friend bool operator==(const ChannelTotals&, const ChannelTotals&) = default;
};

struct TransferEvent {
  int round = 0;
  Channel channel = Channel::client_up;
  std::uint64_t bits = 0;

  friend bool operator==(const TransferEvent&, const TransferEvent&) = default;
};

/// Simulated communication ledger. Counters always equal the fold of the
/// event log. Events must be recorded in nondecreasing round order.
class CostLedger {
 public:
  // Throws ContractViolation for negative bits or a round earlier than the
  // last recorded one.
  void record_transfer(int round, Channel channel, std::int64_t bits);

  const ChannelTotals& totals() const { return totals_; }
  const std::vector<TransferEvent>& events() const { return events_; }
  // Totals over events with round <= `round`.
  ChannelTotals totals_through(int round) const;

  static CostLedger replay(std::span<const TransferEvent> events);

 private:
  ChannelTotals totals_;
  std::vector<TransferEvent> events_;
};

struct FedChsCommBounds {
  std::uint64_t client_up_max = 0;
  std::uint64_t client_down_max = 0;
  std::uint64_t es_es_total = 0;
};

/// Closed-form Fed-CHS traffic: clients upload at most T K Q N_max bits, edge
/// servers broadcast at most T K Q N_max bits, and T Q bits travel between
/// edge servers.
FedChsCommBounds fedchs_upper_bounds(std::uint64_t rounds, std::uint64_t steps,
                                     std::uint64_t bits_per_vector, std::uint64_t max_cluster_size);

/// Wire size of a QSGD-quantized d-vector with s levels: ceil(d log2(2s+1)) + 32.
std::uint64_t quantized_vector_bits(std::size_t dim, int levels);

struct TraceRecord;

/// Cumulative bits (all channels) at the first trace row whose accuracy
/// reaches gamma, or nullopt when none does.
std::optional<std::uint64_t> bits_to_threshold(std::span<const TraceRecord> trace,
                                               std::span<const double> accuracy, double gamma);
// Index of that row, or nullopt.
std::optional<std::size_t> rounds_to_threshold(std::span<const double> accuracy, double gamma);

/// {"totals": {...}, "total_bits": n, "rounds": [{"round": t, "client_up": ..}, ...]}
/// with per-round cumulative (prefix) sums for rounds 0..rounds-1.
nlohmann::json ledger_summary_json(const CostLedger& ledger, int rounds);
nlohmann::json to_json(const ChannelTotals& totals);

}  // namespace fedchs
