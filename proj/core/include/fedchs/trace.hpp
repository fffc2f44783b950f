#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "fedchs/accounting.hpp"

namespace fedchs {

/// One row per round t: the model entering round t (w^t), the cluster (or
/// client) that trains during the round, and cumulative bits through the
/// end of round t.
struct TraceRecord {
  int t = 0;
  std::optional<int> cluster;
  double loss = 0.0;
  double grad_sq_norm = 0.0;
  std::optional<double> gap;
  ChannelTotals bits;
};

inline constexpr const char* kTraceCsvHeader =
    "t,cluster,loss,grad_sq_norm,gap,bits_client_up,bits_client_down,bits_es_es,bits_es_ps";

/// Doubles are printed with 17 significant digits so equal traces give equal bytes.
void write_trace_csv(std::ostream& out, std::span<const TraceRecord> trace);
std::string trace_csv(std::span<const TraceRecord> trace);

}  // namespace fedchs
