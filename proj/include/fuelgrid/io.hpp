#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fuelgrid::io {

/// Shortest round-trip decimal form ("nan", "inf", "-inf" for non-finite values).
std::string format_number(double v);

/// RFC-4180 field quoting.
std::string csv_field(std::string_view s);
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

// Little-endian primitives for the binary dumps.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);

}  // namespace fuelgrid::io
