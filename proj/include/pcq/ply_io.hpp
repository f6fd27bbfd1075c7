#pragma once

#include <iosfwd>
#include <string>

#include "pcq/cloud.hpp"

namespace pcq {

/// Reads a PLY vertex cloud. ASCII and binary_little_endian 1.0 are
/// accepted; x/y/z may be float32 or float64, colors uchar red/green/blue.
/// Unknown vertex properties are skipped, non-vertex elements ignored.
RawPointCloud parse_ply(std::istream& in);
RawPointCloud parse_ply(const std::string& bytes);
RawPointCloud load_ply(const std::string& path);

/// Writes the cloud back out. Binary mode stores positions as float64 so a
/// parse/write round trip is bit-exact. Gray-filled clouds (has_color ==
/// false) are written without color properties.
void write_ply(const RawPointCloud& cloud, std::ostream& out, bool ascii);
std::string write_ply(const RawPointCloud& cloud, bool ascii);
void save_ply(const RawPointCloud& cloud, const std::string& path, bool ascii = false);

}  // namespace pcq
