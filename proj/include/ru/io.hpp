#pragma once

// CSV export with fixed column order and 17 significant digits, one row per
// (path, grid point).

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ru/correction.hpp"
#include "ru/hedging.hpp"
#include "ru/market.hpp"

namespace ru {

namespace detail {

inline void put_number(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

struct CsvColumn {
  std::string name;
  const PathArray* data;
  std::size_t j;
};

inline void write_columns(std::ostream& os, const PathBatch& batch, const std::vector<CsvColumn>& cols) {
  os << "t,path_id";
  for (const auto& c : cols) os << ',' << c.name;
  os << '\n';
  for (std::size_t p = 0; p < batch.n_paths(); ++p)
    for (std::size_t k = 0; k < batch.points(); ++k) {
      put_number(os, batch.time(k));
      os << ',' << p;
      for (const auto& c : cols) {
        os << ',';
        put_number(os, (*c.data)(p, k, c.j));
      }
      os << '\n';
    }
}

inline void indexed(std::vector<CsvColumn>& cols, const std::string& stem, const PathArray& a) {
  for (std::size_t j = 0; j < a.width(); ++j) cols.push_back({stem + std::to_string(j + 1), &a, j});
}

}  // namespace detail

/// Columns t, path_id, W1..Wn, Wt1..Wtn (W~), S1..Sd, Z.
inline void write_paths_csv(std::ostream& os, const PathBatch& batch) {
  PathArray wt(batch.n_paths(), batch.points(), batch.brownian_dim());
  for (std::size_t p = 0; p < batch.n_paths(); ++p)
    for (std::size_t k = 0; k < batch.points(); ++k)
      for (std::size_t j = 0; j < batch.brownian_dim(); ++j) wt(p, k, j) = batch.w_tilde(p, k, j);
  std::vector<detail::CsvColumn> cols;
  detail::indexed(cols, "W", batch.w_array());
  detail::indexed(cols, "Wt", wt);
  detail::indexed(cols, "S", batch.s_array());
  cols.push_back({"Z", &batch.z_array(), 0});
  detail::write_columns(os, batch, cols);
}

/// Columns t, path_id, V, Vpos, Vneg, target, pi1..pid.
inline void write_correction_csv(std::ostream& os, const PathBatch& batch, const CorrectionResult& c) {
  std::vector<detail::CsvColumn> cols{{"V", &c.v, 0}, {"Vpos", &c.v_pos, 0}, {"Vneg", &c.v_neg, 0}};
  if (!c.target.empty()) cols.push_back({"target", &c.target, 0});
  if (!c.pi_hat.empty()) detail::indexed(cols, "pi", c.pi_hat);
  detail::write_columns(os, batch, cols);
}

/// Columns t, path_id, Vbar, beta1..betan, pibar1..pibard, delta1..deltan, M.
inline void write_hedge_csv(std::ostream& os, const PathBatch& batch, const HedgeDecomposition& h) {
  std::vector<detail::CsvColumn> cols{{"Vbar", &h.vbar, 0}};
  detail::indexed(cols, "beta", h.beta);
  detail::indexed(cols, "pibar", h.pi_bar);
  detail::indexed(cols, "delta", h.delta);
  cols.push_back({"M", &h.m, 0});
  detail::write_columns(os, batch, cols);
}

}  // namespace ru
