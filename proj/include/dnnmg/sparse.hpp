#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dnnmg/la.hpp"

namespace dnnmg {

// Compressed sparse row matrix with a fixed pattern.  The pattern is built once
// per mesh level; assembly only rewrites vals.
struct Csr {
  int nrows = 0;
  int ncols = 0;
  std::vector<int> row_ptr;   // nrows+1
  std::vector<int> col_idx;   // sorted within each row
  std::vector<double> vals;

  int nnz() const { return (int)col_idx.size(); }

  // Builds the pattern from per-row column sets (need not be sorted or unique).
  static Csr from_rows(int ncols, std::vector<std::vector<int>>& rows) {
    Csr m;
    m.nrows = (int)rows.size();
    m.ncols = ncols;
    m.row_ptr.resize(rows.size() + 1, 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto& cs = rows[r];
      std::sort(cs.begin(), cs.end());
      cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
      m.row_ptr[r + 1] = m.row_ptr[r] + (int)cs.size();
    }
    m.col_idx.reserve(m.row_ptr.back());
    for (auto& cs : rows) m.col_idx.insert(m.col_idx.end(), cs.begin(), cs.end());
    m.vals.assign(m.col_idx.size(), 0.0);
    return m;
  }

  // Index of (r,c) in vals; -1 if not in the pattern.
  int slot(int r, int c) const {
    const int* lo = col_idx.data() + row_ptr[r];
    const int* hi = col_idx.data() + row_ptr[r + 1];
    const int* it = std::lower_bound(lo, hi, c);
    if (it == hi || *it != c) return -1;
    return (int)(it - col_idx.data());
  }

  int slot_checked(int r, int c) const {
    int s = slot(r, c);
    if (s < 0) throw std::logic_error("csr: entry outside pattern");
    return s;
  }

  void set_zero() { std::fill(vals.begin(), vals.end(), 0.0); }

  void mult(const double* x, double* y) const { mult_ext(vals.data(), x, y); }

  // same pattern, different value array
  void mult_ext(const double* v, const double* x, double* y) const {
    for (int r = 0; r < nrows; ++r) {
      double s = 0.0;
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += v[k] * x[col_idx[k]];
      y[r] = s;
    }
  }

  la::Vec mult(const la::Vec& x) const {
    la::Vec y(nrows);
    mult(x.data(), y.data());
    return y;
  }

  // y = b - A x, restricted to the given rows
  void residual_rows(const double* b, const double* x, const int* rows, int n, double* y) const {
    for (int i = 0; i < n; ++i) {
      int r = rows[i];
      double s = b[r];
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s -= vals[k] * x[col_idx[k]];
      y[i] = s;
    }
  }

  Csr transposed() const {
    Csr t;
    t.nrows = ncols;
    t.ncols = nrows;
    t.row_ptr.assign(ncols + 1, 0);
    for (int c : col_idx) t.row_ptr[c + 1]++;
    for (int i = 0; i < ncols; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
    t.col_idx.resize(col_idx.size());
    t.vals.resize(vals.size());
    std::vector<int> fill(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (int r = 0; r < nrows; ++r)
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        int p = fill[col_idx[k]]++;
        t.col_idx[p] = r;
        t.vals[p] = vals[k];
      }
    return t;
  }
};

}  // namespace dnnmg
