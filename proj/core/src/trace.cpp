#include "fedchs/trace.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

namespace fedchs {

namespace {

void put_double(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

void write_trace_csv(std::ostream& out, std::span<const TraceRecord> trace) {
  out << kTraceCsvHeader << '\n';
  for (const TraceRecord& r : trace) {
    out << r.t << ',';
    if (r.cluster) out << *r.cluster;
    out << ',';
    put_double(out, r.loss);
    out << ',';
    put_double(out, r.grad_sq_norm);
    out << ',';
    if (r.gap) put_double(out, *r.gap);
    out << ',' << r.bits.client_up << ',' << r.bits.client_down << ',' << r.bits.es_es << ','
        << r.bits.es_ps << '\n';
  }
}

std::string trace_csv(std::span<const TraceRecord> trace) {
  std::ostringstream out;
  write_trace_csv(out, trace);
  return out.str();
}

}  // namespace fedchs
