#include "voxprompt/rle.hpp"

#include <string>

namespace voxprompt {

Runs rle_encode(const Mask2D& mask) {
  Runs runs;
  auto bits = mask.bits();
  const int n = static_cast<int>(bits.size());
  for (int i = 0; i < n;) {
    if (!bits[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j < n && bits[j]) ++j;
    runs.push_back({i, j - i});
    i = j;
  }
  return runs;
}

Mask2D rle_decode(const Runs& runs, int height, int width) {
  if (height < 0 || width < 0) throw FormatError("rle: negative size");
  Mask2D m(height, width);
  auto bits = m.bits();
  const long long n = static_cast<long long>(bits.size());
  long long end = 0;
  for (const auto& [start, len] : runs) {
    if (start < end || len <= 0 || start + static_cast<long long>(len) > n)
      throw FormatError("rle: run [" + std::to_string(start) + "," + std::to_string(len) +
                        "] is out of order or out of range");
    std::fill(bits.begin() + start, bits.begin() + start + len, 1);
    end = static_cast<long long>(start) + len;
  }
  return m;
}

}  // namespace voxprompt
