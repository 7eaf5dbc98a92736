// SPDX-License-Identifier: Apache-2.0
//
// Brute-force BLEU-4: n-grams as joined strings, counts by linear scan,
// precisions multiplied directly.
#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace testing_support {

inline std::vector<std::string> ngrams_of(const std::vector<std::string>& s, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::string g;
    for (std::size_t k = 0; k < n; ++k) g += s[i + k] + '\x1f';
    out.push_back(g);
  }
  return out;
}

inline double brute_bleu4(const std::vector<std::vector<std::string>>& cands,
                          const std::vector<std::vector<std::string>>& refs) {
  double c_len = 0, r_len = 0;
  double product = 1.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    long hit = 0, all = 0;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      auto cg = ngrams_of(cands[k], n);
      auto rg = ngrams_of(refs[k], n);
      all += static_cast<long>(cg.size());
      std::vector<bool> used(rg.size(), false);
      // Greedy one-to-one pairing equals min(count_c, count_r) per n-gram.
      for (const auto& g : cg) {
        for (std::size_t j = 0; j < rg.size(); ++j) {
          if (!used[j] && rg[j] == g) {
            used[j] = true;
            ++hit;
            break;
          }
        }
      }
    }
    if (hit == 0) return 0.0;
    product *= static_cast<double>(hit) / static_cast<double>(all);
  }
  for (std::size_t k = 0; k < cands.size(); ++k) {
    c_len += static_cast<double>(cands[k].size());
    r_len += static_cast<double>(refs[k].size());
  }
  const double bp = c_len > r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  return bp * std::pow(product, 0.25);
}

}  // namespace testing_support
