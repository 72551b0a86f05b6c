// SPDX-License-Identifier: Apache-2.0
#include "dinecap/rng.hpp"

namespace dinecap {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_label(std::uint64_t key, std::string_view label) {
  // FNV-1a over the label, folded into the parent key.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(key ^ splitmix64(h));
}

Rng::Rng(std::uint64_t seed, std::string_view label)
    : Rng(FromKey{}, mix_label(splitmix64(seed), label)) {}

Rng::Rng(FromKey, std::uint64_t key) : key_(key), engine_(key) {}

Rng Rng::split(std::string_view label) const { return Rng(FromKey{}, mix_label(key_, label)); }

double Rng::normal() { return normal_(engine_); }

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill order so a B x 1 draw per time step is stable under
  // changes of storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
  return m;
}

}  // namespace dinecap
