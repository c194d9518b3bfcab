#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lrhp {

/// 64-bit FNV-1a. Used as the checksum for checkpoints, manifests and reports.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string digest_hex(std::string_view bytes);
std::string digest_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double v);
double parse_double(std::string_view s);

std::vector<std::string> split_csv_line(std::string_view line);

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results into per-index slots so the
/// outcome does not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace lrhp
