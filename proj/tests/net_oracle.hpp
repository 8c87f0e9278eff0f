// Copyright 2026 The mtlevo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Straight-line reference implementations on plain vectors. Nothing here
// touches the autodiff tape.

#include <algorithm>
#include <cmath>
#include <vector>

namespace mtlevo::oracle {

struct Map {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<double> v;
  double& at(std::size_t i, std::size_t j, std::size_t k) { return v[(i * w + j) * c + k]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return v[(i * w + j) * c + k]; }
};

/// kernel laid out [k][k][cin][cout].
inline Map conv_same(const Map& x, const std::vector<double>& kernel, std::size_t k,
                     std::size_t cout, const std::vector<double>& bias) {
  Map y{x.h, x.w, cout, std::vector<double>(x.h * x.w * cout)};
  const long r = long(k / 2);
  for (std::size_t i = 0; i < x.h; ++i) {
    for (std::size_t j = 0; j < x.w; ++j) {
      for (std::size_t o = 0; o < cout; ++o) {
        double s = bias[o];
        for (long di = -r; di <= r; ++di) {
          for (long dj = -r; dj <= r; ++dj) {
            long ii = long(i) + di, jj = long(j) + dj;
            if (ii < 0 || jj < 0 || ii >= long(x.h) || jj >= long(x.w)) continue;
            for (std::size_t c = 0; c < x.c; ++c) {
              std::size_t kidx = ((std::size_t(di + r) * k + std::size_t(dj + r)) * x.c + c) * cout + o;
              s += kernel[kidx] * x.at(std::size_t(ii), std::size_t(jj), c);
            }
          }
        }
        y.at(i, j, o) = s;
      }
    }
  }
  return y;
}

inline Map relu(Map x) {
  for (auto& v : x.v) v = std::max(0.0, v);
  return x;
}

inline std::vector<double> softmax(const std::vector<double>& s) {
  double mx = *std::max_element(s.begin(), s.end());
  std::vector<double> e;
  double z = 0;
  for (double v : s) {
    e.push_back(std::exp(v - mx));
    z += e.back();
  }
  for (auto& v : e) v /= z;
  return e;
}

/// W laid out [out][in].
inline std::vector<double> dense(const std::vector<double>& x, const std::vector<double>& w,
                                 const std::vector<double>& b) {
  std::vector<double> y(b);
  for (std::size_t o = 0; o < b.size(); ++o) {
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += w[o * x.size() + i] * x[i];
  }
  return y;
}

inline Map tile(const std::vector<double>& image, std::size_t side, std::size_t channels) {
  Map m{side, side, channels, std::vector<double>(side * side * channels)};
  for (std::size_t i = 0; i < side * side; ++i) {
    for (std::size_t c = 0; c < channels; ++c) m.v[i * channels + c] = image[i];
  }
  return m;
}

/// 2x2 max pool with stride 2, odd trailing row/column dropped.
inline Map maxpool2(const Map& x) {
  Map y{x.h / 2, x.w / 2, x.c, std::vector<double>((x.h / 2) * (x.w / 2) * x.c)};
  for (std::size_t i = 0; i < y.h; ++i) {
    for (std::size_t j = 0; j < y.w; ++j) {
      for (std::size_t c = 0; c < x.c; ++c) {
        y.at(i, j, c) = std::max({x.at(2 * i, 2 * j, c), x.at(2 * i + 1, 2 * j, c),
                                  x.at(2 * i, 2 * j + 1, c), x.at(2 * i + 1, 2 * j + 1, c)});
      }
    }
  }
  return y;
}

}  // namespace mtlevo::oracle
