#include "fedchs/accounting.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "fedchs/errors.hpp"
#include "fedchs/trace.hpp"

namespace fedchs {

const char* to_string(Channel channel) {
  switch (channel) {
    case Channel::client_up: return "client_up";
    case Channel::client_down: return "client_down";
    case Channel::es_es: return "es_es";
    case Channel::es_ps: return "es_ps";
  }
  return "unknown";
}

std::uint64_t& ChannelTotals::operator[](Channel c) {
  switch (c) {
    case Channel::client_up: return client_up;
    case Channel::client_down: return client_down;
    case Channel::es_es: return es_es;
    case Channel::es_ps: return es_ps;
  }
  throw ContractViolation("unknown channel");
}

std::uint64_t ChannelTotals::operator[](Channel c) const {
  switch (c) {
    case Channel::client_up: return client_up;
    case Channel::client_down: return client_down;
    case Channel::es_es: return es_es;
    case Channel::es_ps: return es_ps;
  }
  throw ContractViolation("unknown channel");
}

void CostLedger::record_transfer(int round, Channel channel, std::int64_t bits) {
  if (bits < 0) throw ContractViolation("record_transfer: negative bit count");
  if (round < 0) throw ContractViolation("record_transfer: negative round");
  if (!events_.empty() && round < events_.back().round) {
    throw ContractViolation("record_transfer: rounds must be nondecreasing");
  }
  const auto amount = static_cast<std::uint64_t>(bits);
  events_.push_back({round, channel, amount});
  totals_[channel] += amount;
}

ChannelTotals CostLedger::totals_through(int round) const {
  ChannelTotals out;
  for (const TransferEvent& e : events_) {
    if (e.round > round) break;
    out[e.channel] += e.bits;
  }
  return out;
}

CostLedger CostLedger::replay(std::span<const TransferEvent> events) {
  CostLedger ledger;
  for (const TransferEvent& e : events) {
    ledger.record_transfer(e.round, e.channel, static_cast<std::int64_t>(e.bits));
  }
  return ledger;
}

FedChsCommBounds fedchs_upper_bounds(std::uint64_t rounds, std::uint64_t steps,
                                     std::uint64_t bits_per_vector, std::uint64_t max_cluster_size) {
  const std::uint64_t client_traffic = rounds * steps * bits_per_vector * max_cluster_size;
  return {client_traffic, client_traffic, rounds * bits_per_vector};
}

std::uint64_t quantized_vector_bits(std::size_t dim, int levels) {
  if (levels < 1) throw ContractViolation("quantized_vector_bits: levels must be positive");
  const double per_entry = std::log2(2.0 * levels + 1.0);
  return static_cast<std::uint64_t>(std::ceil(static_cast<double>(dim) * per_entry)) + 32;
}

std::optional<std::size_t> rounds_to_threshold(std::span<const double> accuracy, double gamma) {
  for (std::size_t t = 0; t < accuracy.size(); ++t) {
    if (accuracy[t] >= gamma) return t;
  }
  return std::nullopt;
}

std::optional<std::uint64_t> bits_to_threshold(std::span<const TraceRecord> trace,
                                               std::span<const double> accuracy, double gamma) {
  if (trace.size() != accuracy.size()) {
    throw ContractViolation("bits_to_threshold: accuracy series must align with the trace");
  }
  const auto row = rounds_to_threshold(accuracy, gamma);
  if (!row) return std::nullopt;
  return trace[*row].bits.total();
}

nlohmann::json to_json(const ChannelTotals& totals) {
  nlohmann::json j;
  for (Channel c : kAllChannels) j[to_string(c)] = totals[c];
  return j;
}

nlohmann::json ledger_summary_json(const CostLedger& ledger, int rounds) {
  nlohmann::json j;
  j["totals"] = to_json(ledger.totals());
  j["total_bits"] = ledger.totals().total();
  nlohmann::json prefix = nlohmann::json::array();
  ChannelTotals running;
  std::size_t cursor = 0;
  const auto& events = ledger.events();
  for (int t = 0; t < rounds; ++t) {
    while (cursor < events.size() && events[cursor].round <= t) {
      running[events[cursor].channel] += events[cursor].bits;
      ++cursor;
    }
    nlohmann::json row = to_json(running);
    row["round"] = t;
    row["total"] = running.total();
    prefix.push_back(std::move(row));
  }
  j["rounds"] = std::move(prefix);
  return j;
}

}  // namespace fedchs
